"""Client for an external detector process speaking newline-delimited JSON.

The child writes ``{"ready": true}`` once it is up. Each request carries one
frame as base64 of row-major u8 counts (clipped at 255); the reply must echo
the request's ``frame_id``.
"""
from __future__ import annotations

import base64
import json
import logging
import queue
import shlex
import subprocess
import threading

import numpy as np

from ..event_pipeline import Frame
from .proxy import Detection

log = logging.getLogger(__name__)

ENV_VAR = "AUTOBIAS_DETECTOR_CMD"
DEFAULT_TIMEOUT_S = 0.5


class DetectorUnavailable(RuntimeError):
    """The external process did not answer in time or has exited."""


class ProtocolError(RuntimeError):
    """The external process sent something that is not a valid reply."""

    def __init__(self, message: str, payload: str = ""):
        self.payload = payload
        super().__init__(message)


def encode_request(frame: Frame) -> str:
    counts = np.clip(frame.counts, 0, 255).astype(np.uint8)
    msg = {
        "frame_id": int(frame.index),
        "width": int(frame.width),
        "height": int(frame.height),
        "counts_b64": base64.b64encode(counts.tobytes()).decode("ascii"),
    }
    return json.dumps(msg, separators=(",", ":"))


def decode_request(line: str):
    """Inverse of :func:`encode_request`: ``(frame_id, counts)``; used by detector children."""
    msg = json.loads(line)
    counts = np.frombuffer(base64.b64decode(msg["counts_b64"]), dtype=np.uint8)
    return int(msg["frame_id"]), counts.reshape(int(msg["height"]), int(msg["width"]))


def parse_response(line: str, frame_id: int) -> Detection:
    """Validate one reply line against the request it answers."""
    try:
        msg = json.loads(line)
        if not isinstance(msg, dict):
            raise ValueError("reply is not an object")
        got = msg["frame_id"]
        detected = msg["detected"]
        conf_obj = float(msg["conf_obj"])
        conf_face = float(msg["conf_face"])
        if not isinstance(detected, bool) or not isinstance(got, int):
            raise ValueError("frame_id must be an integer and detected a boolean")
        if not (0.0 <= conf_obj <= 1.0 and 0.0 <= conf_face <= 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        bbox = None
        if detected:
            bbox = tuple(float(v) for v in msg["bbox"])
            if len(bbox) != 4:
                raise ValueError("bbox needs four numbers")
    except (ValueError, KeyError, TypeError) as exc:
        log.error("malformed detector reply: %r", line)
        raise ProtocolError(f"malformed reply: {exc}", line) from exc
    if got != frame_id:
        log.error("detector reply for frame %s while waiting for %s: %r", got, frame_id, line)
        raise ProtocolError(f"reply frame_id {got} does not match request {frame_id}", line)
    return Detection(frame_id, detected, conf_obj, conf_face, bbox)


class ExternalDetector:
    """One child process; one request in flight at a time.

    A background thread drains the child's stdout into a queue so replies can
    be awaited with a timeout. Replies to requests that already timed out are
    dropped when they eventually arrive.
    """

    def __init__(self, cmd, timeout_s: float = DEFAULT_TIMEOUT_S, startup_timeout_s: float = 10.0):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout_s = timeout_s
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()
        self._abandoned: set = set()
        self._lock = threading.Lock()
        line = self._next_line(startup_timeout_s)
        try:
            ready = json.loads(line).get("ready") is True
        except (ValueError, AttributeError):
            ready = False
        if not ready:
            self.close()
            log.error("bad detector handshake: %r", line)
            raise ProtocolError("child did not send the ready handshake", line)

    def _drain(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_line(self, timeout_s: float) -> str:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            raise DetectorUnavailable(f"no reply within {timeout_s * 1000:.0f} ms") from None
        if line is None:
            self._lines.put(None)
            raise DetectorUnavailable("detector process exited")
        return line.strip()

    def detect(self, frame: Frame) -> Detection:
        with self._lock:
            try:
                self._proc.stdin.write(encode_request(frame) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise DetectorUnavailable(f"cannot write to detector: {exc}") from exc
            while True:
                try:
                    line = self._next_line(self.timeout_s)
                except DetectorUnavailable:
                    self._abandoned.add(int(frame.index))
                    raise
                stale = self._stale_id(line)
                if stale is None:
                    return parse_response(line, int(frame.index))
                self._abandoned.discard(stale)

    def _stale_id(self, line: str):
        if not self._abandoned:
            return None
        try:
            fid = json.loads(line).get("frame_id")
        except (ValueError, AttributeError):
            return None
        return fid if fid in self._abandoned else None

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def detect_external(frame: Frame, endpoint: ExternalDetector) -> Detection:
    return endpoint.detect(frame)


class FallbackDetector:
    """Callable wrapper that turns an unavailable detector into a miss.

    ``warnings`` counts the frames that fell back.
    """

    def __init__(self, endpoint: ExternalDetector):
        self.endpoint = endpoint
        self.warnings = 0

    def __call__(self, frame: Frame) -> Detection:
        try:
            return self.endpoint.detect(frame)
        except DetectorUnavailable as exc:
            self.warnings += 1
            log.warning("frame %d: %s; counted as no detection", frame.index, exc)
            return Detection(frame.index, False, 0.0, 0.0)
