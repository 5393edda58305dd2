"""Event stream files.

EVT-CSV is UTF-8 text with the header ``t_us,x,y,p`` and one event per line.
EVT-BIN is a headerless run of 13-byte little-endian records
``(u64 t_us, u16 x, u16 y, u8 p)``. The format follows the file extension:
``.csv`` for text, ``.bin`` or ``.evt`` for binary.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .sensor.simulator import EVENT_DTYPE

CSV_HEADER = "t_us,x,y,p"
BIN_SUFFIXES = (".bin", ".evt")


class EventFileError(ValueError):
    pass


def format_for(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in BIN_SUFFIXES:
        return "bin"
    raise EventFileError(f"{path}: unknown event file extension {suffix!r} (use .csv or .bin)")


class EventWriter:
    """Append-only writer; lets long simulations stream to disk in chunks."""

    def __init__(self, path):
        self.path = Path(path)
        self.format = format_for(self.path)
        self.count = 0
        if self.format == "bin":
            self._fh = open(self.path, "wb")
        else:
            self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
            self._fh.write(CSV_HEADER + "\n")

    def write(self, events: np.ndarray) -> None:
        if not events.size:
            return
        if self.format == "bin":
            self._fh.write(np.ascontiguousarray(events, dtype=EVENT_DTYPE).tobytes())
        else:
            cols = np.column_stack([events[f].astype(np.uint64) for f in ("t", "x", "y", "p")])
            np.savetxt(self._fh, cols, fmt="%d", delimiter=",")
        self.count += int(events.size)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_events(path, events: np.ndarray) -> None:
    with EventWriter(path) as w:
        w.write(events)


def read_events(path) -> np.ndarray:
    path = Path(path)
    if format_for(path) == "bin":
        size = path.stat().st_size
        if size % EVENT_DTYPE.itemsize:
            raise EventFileError(f"{path}: size {size} is not a multiple of {EVENT_DTYPE.itemsize}-byte records")
        return np.fromfile(path, dtype=EVENT_DTYPE)
    text = path.read_text(encoding="utf-8")
    head, _, body = text.partition("\n")
    if head.strip() != CSV_HEADER:
        raise EventFileError(f"{path}: expected header {CSV_HEADER!r}, found {head.strip()!r}")
    if not body.strip():
        return np.zeros(0, dtype=EVENT_DTYPE)
    try:
        raw = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise EventFileError(f"{path}: {exc}") from exc
    if raw.shape[1] != 4:
        raise EventFileError(f"{path}: expected 4 columns, found {raw.shape[1]}")
    if raw.size and (raw.min() < 0 or np.any(raw[:, 3] > 1)):
        raise EventFileError(f"{path}: negative field or polarity outside {{0, 1}}")
    ev = np.empty(raw.shape[0], dtype=EVENT_DTYPE)
    for i, f in enumerate(("t", "x", "y", "p")):
        ev[f] = raw[:, i]
    return ev


def convert(src, dst) -> int:
    """Rewrite ``src`` in the format implied by ``dst``; returns the event count."""
    ev = read_events(src)
    write_events(dst, ev)
    return int(ev.size)
