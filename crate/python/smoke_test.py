"""Smoke test for the doorpick_py extension.

Build and install first:
    pip install --no-build-isolation -e crates/py
then run from the repository root:
    python3 python/smoke_test.py
"""

import json
import math
import struct
import sys
from pathlib import Path

import doorpick_py as dp

ROOT = Path(__file__).resolve().parent.parent


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def geometry():
    d, sense = dp.dist_ori_compute((1.0, 0.45, 0.9), (1.0, -0.45, 0.9))
    check(abs(d - 0.9) < 1e-12 and sense == "CCW", "width and rotation sense")
    check(dp.dist_ori_compute((1.0, -0.45, 0.9), (1.0, 0.45, 0.9))[1] == "CW", "swapped picks flip")

    n = dp.plane_normal((1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (1.0, 0.0, 1.0))
    check(n == (1.0, 0.0, 0.0), "plane normal of a wall ahead")
    check(dp.deviation_angle(n) == 0.0, "square wall needs no turn")

    theta = math.radians(10.0)
    w = dp.wheel_rotation(theta)
    check(abs(w * 0.10 - theta * 0.25) <= 1e-15, "wheel arc equals base arc")
    check(dp.camera_to_base((0.0, 0.0, 1.0)) == (1.15, 0.015, -0.22), "camera mount")


def rendering():
    scene = dp.reference_scene("left")
    width, height, depth = dp.render(scene, 1.0, 0.0, 0.0)
    check((width, height) == (640, 480), "frame size")
    values = struct.unpack(f"<{width * height}d", depth)
    center = values[240 * width + 320]
    check(0.5 < center < 3.5, f"center depth {center:.3f} m")


def protocol():
    payload = json.dumps({"type": "Drive", "sequence": 3, "payload": {"distance": 0.25}})
    frame = dp.encode(payload)
    check(struct.unpack(">I", frame[:4])[0] == len(frame) - 4, "length prefix")
    back = json.loads(dp.decode(frame))
    check(back["sequence"] == 3 and back["payload"]["distance"] == 0.25, "decode inverts encode")
    try:
        dp.decode(frame[:-1])
        check(False, "truncated frame rejected")
    except ValueError:
        check(True, "truncated frame rejected")


def session():
    s = dp.Session(dp.reference_scene("left"))
    check(s.state == "AwaitWidthPoints", "initial state")
    hover = json.loads(s.apply(json.dumps({"op": "hover", "u": 320, "v": 240})))
    check(abs(hover["standoff"] - 1.0) < 1e-9, "hover standoff")
    try:
        s.apply(json.dumps({"op": "orient"}))
        check(False, "out-of-turn action refused")
    except ValueError as e:
        check(str(e).startswith("WrongState"), "out-of-turn action refused")


def script():
    code, report = dp.run_script(str(ROOT / "scenes/reference.json"), str(ROOT / "scenes/reference.script.jsonl"))
    report = json.loads(report)
    check(code == 0 and report["state"] == "Sent", "reference script reaches Sent")
    check(abs(report["door_width"] - 0.9) <= 0.01, f"door width {report['door_width']:.4f} m")
    check(abs(report["handle_length"] - 0.11) <= 0.005, f"handle length {report['handle_length']:.4f} m")


if __name__ == "__main__":
    geometry()
    rendering()
    protocol()
    session()
    script()
    print("smoke test passed")
