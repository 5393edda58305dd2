"""Time-sliced accumulation of event streams into count frames."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_FPS = 8


class EventOrderError(ValueError):
    """Event timestamps decrease somewhere in the stream."""


@dataclass
class Frame:
    index: int
    t_begin: int
    t_end: int
    width: int
    height: int
    on_counts: np.ndarray
    off_counts: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return self.on_counts + self.off_counts

    @property
    def total(self) -> int:
        return int(self.on_counts.sum() + self.off_counts.sum())


def _frame_bounds(k, fps):
    """Start time in µs of window ``k``; exact for integer ``fps``."""
    if float(fps).is_integer():
        return (np.asarray(k, dtype=np.int64) * 1_000_000) // int(fps)
    return np.floor(np.asarray(k) * 1e6 / fps).astype(np.int64)


def frame_index(t_us, fps) -> np.ndarray:
    """Window index for timestamps; boundary events go to the later window."""
    t = np.asarray(t_us, dtype=np.int64)
    if float(fps).is_integer():
        return (t * int(fps)) // 1_000_000
    return np.floor(t * (fps / 1e6)).astype(np.int64)


def accumulate_frames(
    stream: np.ndarray,
    fps: float = DEFAULT_FPS,
    width: int = 160,
    height: int = 120,
    duration_us: int | None = None,
    accumulation_us: int | None = None,
) -> list[Frame]:
    """Bin an event stream into consecutive frames.

    Frame ``k`` covers ``[k*1e6/fps, (k+1)*1e6/fps)``. With
    ``accumulation_us`` shorter than the frame period only the trailing part
    of each period is counted. ``duration_us`` sets how many frames are
    produced (empty windows yield zero frames); by default the stream's last
    event decides.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    t = stream["t"].astype(np.int64)
    if t.size and np.any(np.diff(t) < 0):
        raise EventOrderError("event stream is not time-ordered")
    if duration_us is None:
        n_frames = int(frame_index(t[-1], fps)) + 1 if t.size else 0
    else:
        n_frames = int(frame_index(duration_us - 1, fps)) + 1 if duration_us > 0 else 0
    starts = _frame_bounds(np.arange(n_frames + 1), fps)
    period = 1e6 / fps
    if accumulation_us is not None and not 0 < accumulation_us <= period:
        raise ValueError("accumulation must be positive and no longer than the frame period")

    idx = frame_index(t, fps)
    keep = idx < n_frames
    if accumulation_us is not None:
        win_end = starts[np.minimum(idx + 1, n_frames)]
        keep &= t >= win_end - accumulation_us
    idx = idx[keep]
    x = stream["x"][keep].astype(np.int64)
    y = stream["y"][keep].astype(np.int64)
    pol = stream["p"][keep]
    if np.any(x >= width) or np.any(y >= height):
        raise ValueError("event coordinates exceed the frame geometry")

    shape = (n_frames, height, width)
    on = np.zeros(shape, dtype=np.int32)
    off = np.zeros(shape, dtype=np.int32)
    np.add.at(on, (idx[pol == 1], y[pol == 1], x[pol == 1]), 1)
    np.add.at(off, (idx[pol == 0], y[pol == 0], x[pol == 0]), 1)

    frames = []
    for k in range(n_frames):
        t_end = int(starts[k + 1])
        t_begin = int(starts[k]) if accumulation_us is None else t_end - int(accumulation_us)
        frames.append(Frame(k, t_begin, t_end, width, height, on[k], off[k]))
    return frames


def frames_from_counts(on: np.ndarray, off: np.ndarray, t0: int, frame_us: int, first_index: int = 0) -> list[Frame]:
    """Wrap per-frame count stacks produced by the fused simulator path."""
    n, h, w = on.shape
    return [
        Frame(first_index + k, t0 + k * frame_us, t0 + (k + 1) * frame_us, w, h, on[k], off[k])
        for k in range(n)
    ]


def write_pgm(frame: Frame, path) -> None:
    """Binary 8-bit PGM of polarity-summed counts, clipped at 255."""
    img = np.clip(frame.counts, 0, 255).astype(np.uint8)
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
