"""Per-window face-tracking efficacy and the optimizer's target function."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .detector.proxy import Detection

DEFAULT_TRIGGER = 0.5
AGGREGATES = ("all", "detected", "max")


class UndefinedMetricError(ValueError):
    """Efficacy requested for a window without frames."""


@dataclass(frozen=True)
class EfficacySample:
    window_index: int
    t_begin_s: float
    t_end_s: float
    f_detected: int
    f_total: int
    metric: float
    mean_conf_obj: float
    mean_conf_face: float


def efficacy_metric(
    detections: Sequence[Detection],
    window_index: int = 0,
    t_begin_s: float = 0.0,
    t_end_s: float = 1.0,
    aggregate: str = "all",
) -> EfficacySample:
    """Fraction of frames with a detected face over one window.

    By default the confidence means run over every frame in the window with
    undetected frames contributing 0, so they move together with the metric.
    ``aggregate="detected"`` averages over detected frames only and
    ``"max"`` takes the per-window maximum; both give 0 without detections.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    n = len(detections)
    if n == 0:
        raise UndefinedMetricError("efficacy is undefined for an empty window")
    hits = [det for det in detections if det.found]
    d = len(hits)
    if not hits:
        obj = face = 0.0
    elif aggregate == "max":
        obj = max(det.conf_obj for det in hits)
        face = max(det.conf_face for det in hits)
    else:
        denom = n if aggregate == "all" else d
        obj = sum(det.conf_obj for det in hits) / denom
        face = sum(det.conf_face for det in hits) / denom
    return EfficacySample(window_index, t_begin_s, t_end_s, d, n, d / n, obj, face)


def target_function(sample: EfficacySample) -> float:
    """Quantity minimized by the bias optimizer: ``1 - metric``."""
    return 1.0 - sample.metric


def below_trigger(sample: EfficacySample, threshold: float = DEFAULT_TRIGGER) -> bool:
    return sample.metric < threshold
