"""Face detection on accumulated event frames.

:func:`detect` is a deterministic geometric proxy; :class:`ExternalDetector`
lets any process speaking the newline-JSON protocol take its place.
"""
from .external import (
    ENV_VAR,
    DetectorUnavailable,
    ExternalDetector,
    FallbackDetector,
    ProtocolError,
    decode_request,
    detect_external,
    encode_request,
    parse_response,
)
from .proxy import Detection, DetectorConfig, detect

__all__ = [
    "ENV_VAR",
    "Detection",
    "DetectorConfig",
    "DetectorUnavailable",
    "ExternalDetector",
    "FallbackDetector",
    "ProtocolError",
    "decode_request",
    "detect",
    "detect_external",
    "encode_request",
    "parse_response",
]
