//! PNG export of rendered frames for debugging and for the operator stream.

use std::io::Write;
use std::path::Path;

use super::render::Frame;
use super::SimError;

/// Encodes the color channel as an 8-bit RGB PNG.
pub fn encode_color_png(frame: &Frame) -> Result<Vec<u8>, SimError> {
    let mut out = Vec::new();
    write_png(
        &mut out,
        frame.width(),
        frame.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &frame.color,
    )?;
    Ok(out)
}

/// Encodes depth as a 16-bit grayscale PNG in millimeters (0 = hole).
pub fn encode_depth_png(frame: &Frame) -> Result<Vec<u8>, SimError> {
    let mut data = Vec::with_capacity(frame.depth.len() * 2);
    for d in &frame.depth {
        let mm = (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        data.extend_from_slice(&mm.to_be_bytes());
    }
    let mut out = Vec::new();
    write_png(
        &mut out,
        frame.width(),
        frame.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )?;
    Ok(out)
}

pub fn save_color_png(frame: &Frame, path: &Path) -> Result<(), SimError> {
    let bytes = encode_color_png(frame)?;
    std::fs::write(path, bytes).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

pub fn save_depth_png(frame: &Frame, path: &Path) -> Result<(), SimError> {
    let bytes = encode_depth_png(frame)?;
    std::fs::write(path, bytes).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

fn write_png<W: Write>(
    w: W,
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<(), SimError> {
    let mut encoder = png::Encoder::new(w, width, height);
    encoder.set_color(color);
    encoder.set_depth(depth);
    encoder.set_compression(png::Compression::Fast);
    let mut writer = encoder.write_header().map_err(|e| SimError::Io(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| SimError::Io(e.to_string()))?;
    writer.finish().map_err(|e| SimError::Io(e.to_string()))
}
