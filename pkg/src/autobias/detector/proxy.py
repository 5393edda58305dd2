"""Geometric face-detection proxy.

Stands in for a neural face detector: it looks for a compact blob of active
pixels with a face-like aspect ratio and reports YOLO-style confidences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..event_pipeline import Frame

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DetectorConfig:
    """Scoring constants.

    ``m_ref`` is the mass (active pixels) that saturates the object
    confidence; use :meth:`for_target` to derive it from the expected face
    size.
    """

    m_ref: float = 0.25 * math.pi * 14 * 18
    c_min: int = 2
    aspect: float = 1.3
    aspect_sigma: float = 0.4
    threshold: float = 0.5

    @classmethod
    def for_target(cls, semi_axes, fill_factor: float = 0.25, **kw) -> "DetectorConfig":
        a, b = semi_axes
        return cls(m_ref=math.pi * a * b * fill_factor, **kw)


@dataclass(frozen=True)
class Detection:
    frame_index: int
    found: bool
    conf_obj: float
    conf_face: float
    bbox: tuple | None = None  # (bx, by, bw, bh): centre and extent in px
    p_eye: float = 0.0


def detect(frame: Frame, cfg: DetectorConfig = DetectorConfig()) -> Detection:
    active = frame.counts >= cfg.c_min
    if not active.any():
        return Detection(frame.index, False, 0.0, 0.0)
    labels, n = ndimage.label(active, structure=EIGHT_CONNECTED)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    sizes[0] = 0
    # labels are numbered in raster order, so argmax picks the component whose
    # first pixel has the smallest (y, x) among equal sizes
    best = int(np.argmax(sizes))
    mass = int(sizes[best])
    sl = ndimage.find_objects(labels, max_label=best)[best - 1]
    ys, xs = sl
    bw = xs.stop - xs.start
    bh = ys.stop - ys.start
    conf_obj = min(1.0, mass / cfg.m_ref)
    shape = math.exp(-(((bh / bw) - cfg.aspect) / cfg.aspect_sigma) ** 2)
    conf_face = conf_obj * shape
    bbox = ((xs.start + xs.stop - 1) / 2.0, (ys.start + ys.stop - 1) / 2.0, float(bw), float(bh))
    found = conf_face >= cfg.threshold
    return Detection(frame.index, found, conf_obj, conf_face, bbox if found else None)
