"""Minimal external detector that answers every frame with fixed confidences.

Run as ``python -m autobias.detector.echo_stub --conf-obj 0.8 --conf-face 0.7``.
``--delay-ms`` makes it slow, ``--bad-id`` makes it answer with a wrong
frame id; both exist for exercising the client's error paths.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

from .external import decode_request


def fixed_reply(frame_id: int, conf_obj: float, conf_face: float, threshold: float = 0.5, bbox=(0, 0, 0, 0)) -> dict:
    detected = conf_face >= threshold
    msg = {"frame_id": frame_id, "detected": detected, "conf_obj": conf_obj, "conf_face": conf_face}
    if detected:
        msg["bbox"] = list(bbox)
    return msg


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--conf-obj", type=float, default=0.8)
    ap.add_argument("--conf-face", type=float, default=0.7)
    ap.add_argument("--threshold", type=float, default=0.5)
    ap.add_argument("--delay-ms", type=float, default=0.0)
    ap.add_argument("--bad-id", action="store_true")
    args = ap.parse_args(argv)
    out = sys.stdout
    out.write(json.dumps({"ready": True}) + "\n")
    out.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        frame_id, _ = decode_request(line)
        if args.delay_ms:
            time.sleep(args.delay_ms / 1000.0)
        reply = fixed_reply(frame_id + (1 if args.bad_id else 0), args.conf_obj, args.conf_face, args.threshold)
        out.write(json.dumps(reply) + "\n")
        out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
