"""Closed-loop autobiasing: monitor efficacy, retune biases when it drops.

Simulated time advances one second at a time. Each second yields one
:class:`Record`. While optimizing, every objective evaluation applies a
candidate bias vector and consumes the next two seconds; the application
keeps running on the candidate, so those seconds are logged too.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import optimizer as nm
from .detector import DetectorConfig, detect
from .efficacy import AGGREGATES, DEFAULT_TRIGGER, EfficacySample, below_trigger, efficacy_metric, target_function
from .event_pipeline import DEFAULT_FPS, frames_from_counts
from .sensor import BiasBounds, BiasVector, MappingConstants, SceneScript, SensorSimulator, apply_bias, map_bias_to_params

log = logging.getLogger(__name__)


class LoopPhase(str, enum.Enum):
    MONITORING = "Monitoring"
    OPTIMIZING = "Optimizing"
    SETTLED = "Settled"


LEGAL_TRANSITIONS = {
    (LoopPhase.MONITORING, LoopPhase.MONITORING),
    (LoopPhase.MONITORING, LoopPhase.OPTIMIZING),
    (LoopPhase.OPTIMIZING, LoopPhase.OPTIMIZING),
    (LoopPhase.OPTIMIZING, LoopPhase.SETTLED),
    (LoopPhase.SETTLED, LoopPhase.SETTLED),
    (LoopPhase.SETTLED, LoopPhase.OPTIMIZING),
}


@dataclass(frozen=True)
class ControllerConfig:
    warmup_s: int = 20
    trigger: float = DEFAULT_TRIGGER
    eval_window_s: int = 2
    monitor_window_s: int = 1
    fps: int = DEFAULT_FPS
    final_window_s: int = 30
    reeval_every: int = 0
    initial_biases: BiasVector = BiasVector()
    confidence_aggregate: str = "all"

    def __post_init__(self):
        if self.monitor_window_s != 1:
            raise ValueError("controller.monitor_window_s: only 1-second windows are supported")
        if self.eval_window_s < 1:
            raise ValueError("controller.eval_window_s: must be at least 1")
        if self.warmup_s < 0:
            raise ValueError("controller.warmup_s: must be non-negative")
        if not 0.0 < self.trigger <= 1.0:
            raise ValueError("controller.trigger: must lie in (0, 1]")
        if self.fps < 1 or 1_000_000 % self.fps:
            raise ValueError("controller.fps: must be a positive divisor of 1000000")
        if self.confidence_aggregate not in AGGREGATES:
            raise ValueError(f"controller.confidence_aggregate: must be one of {', '.join(AGGREGATES)}")


@dataclass(frozen=True)
class Record:
    t_s: int
    phase: LoopPhase
    biases: BiasVector
    metric: float
    conf_obj: float
    conf_face: float
    events: int


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    triggers: int = 0
    evaluations: int = 0
    final_biases: BiasVector = BiasVector()
    detector_warnings: int = 0

    def append(self, rec: Record) -> None:
        if self.records and rec.t_s <= self.records[-1].t_s:
            raise RuntimeError("records must be strictly ordered in time")
        self.records.append(rec)

    @property
    def duration_s(self) -> int:
        return len(self.records)

    def window_means(self, t0: float, t1: float) -> dict:
        """Mean metric and confidences over records with ``t0 <= t_s < t1``."""
        sel = [r for r in self.records if t0 <= r.t_s < t1]
        if not sel:
            return {"efficacy": float("nan"), "conf_obj": float("nan"), "conf_face": float("nan")}
        return {
            "efficacy": float(np.mean([r.metric for r in sel])),
            "conf_obj": float(np.mean([r.conf_obj for r in sel])),
            "conf_face": float(np.mean([r.conf_face for r in sel])),
        }

    def summary(self, warmup_s: int, final_window_s: int = 30) -> dict:
        end = self.duration_s
        return {
            "final_biases": self.final_biases.as_dict(),
            "triggers": self.triggers,
            "evaluations": self.evaluations,
            "warmup_means": self.window_means(0, warmup_s),
            "final_means": self.window_means(max(0, end - final_window_s), end),
        }


class Plant(Protocol):
    """Something that runs the application for one second on given biases."""

    def run_second(self, t_s: int, biases: BiasVector) -> tuple[EfficacySample, int]: ...


class SimulatedCamera:
    """Simulator + event accumulation + detector, one second per call.

    ``detector`` is any callable mapping a :class:`Frame` to a
    :class:`Detection`; by default the geometric proxy.
    """

    def __init__(
        self,
        scene: SceneScript,
        detector: Callable | None = None,
        detector_cfg: DetectorConfig | None = None,
        fps: int = DEFAULT_FPS,
        mapping: MappingConstants = MappingConstants(),
        bounds: BiasBounds = BiasBounds(),
        aggregate: str = "all",
    ):
        self.scene = scene
        self.sim = SensorSimulator(scene)
        self.state = self.sim.init_state(0)
        if detector is None:
            cfg = detector_cfg or (
                DetectorConfig.for_target(scene.target.semi_axes) if scene.target is not None else DetectorConfig()
            )
            detector = lambda fr: detect(fr, cfg)  # noqa: E731
        self.detector = detector
        self.fps = fps
        self.mapping = mapping
        self.bounds = bounds
        self.aggregate = aggregate

    def run_second(self, t_s: int, biases: BiasVector) -> tuple[EfficacySample, int]:
        params = map_bias_to_params(biases, self.mapping, self.bounds)
        self.state = apply_bias(self.state, params)
        frame_us = 1_000_000 // self.fps
        t0 = t_s * 1_000_000
        on, off = self.sim.accumulate_counts(params, t0, t0 + 1_000_000, self.state, frame_us)
        frames = frames_from_counts(on, off, t0, frame_us, first_index=t_s * self.fps)
        dets = [self.detector(fr) for fr in frames]
        sample = efficacy_metric(dets, t_s, float(t_s), float(t_s + 1), self.aggregate)
        return sample, int(on.sum() + off.sum())


class StubPlant:
    """Plant whose efficacy is a fixed function of the applied biases.

    The metric is reported as ``round(m * resolution) / resolution`` so a
    smooth stub is not flattened into eighths.
    """

    def __init__(self, metric_fn: Callable[[np.ndarray], float], resolution: int = 1_000_000):
        self.metric_fn = metric_fn
        self.resolution = resolution

    def run_second(self, t_s: int, biases: BiasVector) -> tuple[EfficacySample, int]:
        m = min(1.0, max(0.0, float(self.metric_fn(biases.as_array().astype(float)))))
        n = self.resolution
        d = int(round(m * n))
        return EfficacySample(t_s, float(t_s), float(t_s + 1), d, n, d / n, d / n, d / n), 0


class _OutOfTime(Exception):
    pass


def run_loop(
    plant: Plant,
    duration_s: int,
    cfg: ControllerConfig = ControllerConfig(),
    bounds: BiasBounds = BiasBounds(),
) -> RunLog:
    """Drive ``plant`` for ``duration_s`` seconds under the autobias state machine."""
    if duration_s < 1 or int(duration_s) != duration_s:
        raise ValueError("duration must be a positive whole number of seconds")
    duration_s = int(duration_s)
    bounds.check(cfg.initial_biases)
    runlog = RunLog()
    biases = cfg.initial_biases
    phase = LoopPhase.MONITORING
    t = 0

    def second(b: BiasVector, ph: LoopPhase) -> EfficacySample:
        nonlocal t
        sample, n_ev = plant.run_second(t, b)
        runlog.append(Record(t, ph, b, sample.metric, sample.mean_conf_obj, sample.mean_conf_face, n_ev))
        t += 1
        return sample

    def oracle(x: np.ndarray) -> float:
        nonlocal biases
        if duration_s - t < cfg.eval_window_s:
            raise _OutOfTime
        biases = BiasVector.from_sequence(int(v) for v in np.clip(np.rint(x), bounds.lower, bounds.upper))
        values = [target_function(second(biases, LoopPhase.OPTIMIZING)) for _ in range(cfg.eval_window_s)]
        runlog.evaluations += 1
        return float(np.mean(values))

    first_trigger = True
    simplex = None
    while t < duration_s:
        if phase is LoopPhase.OPTIMIZING:
            try:
                nm.nm_step(simplex, oracle)
            except nm.OracleError as exc:
                if not isinstance(exc.__cause__, _OutOfTime):
                    raise
                # too little time left for another evaluation: keep running on the last candidate
                while t < duration_s:
                    second(biases, phase)
                break
            if nm.check_converged(simplex):
                biases = nm.best_bias(simplex, bounds)
                phase = LoopPhase.SETTLED
                log.info("t=%ds converged after %d evaluations: %s", t, simplex.evaluations, biases.as_dict())
            continue
        sample = second(biases, phase)
        warm = t >= cfg.warmup_s or not first_trigger
        if warm and below_trigger(sample, cfg.trigger) and t < duration_s:
            first_trigger = False
            runlog.triggers += 1
            phase = LoopPhase.OPTIMIZING
            simplex = nm.init_simplex(biases, bounds, reeval_every=cfg.reeval_every)
            log.info("t=%ds metric %.3f below %.2f: optimizing", t, sample.metric, cfg.trigger)
    runlog.final_biases = biases
    return runlog


def check_phase_sequence(records) -> bool:
    """True when every consecutive phase pair is a legal transition."""
    return all((a.phase, b.phase) in LEGAL_TRANSITIONS for a, b in zip(records, records[1:])) and (
        not records or records[0].phase is LoopPhase.MONITORING
    )


def record_row(rec: Record) -> dict:
    d = asdict(rec)
    d["phase"] = rec.phase.value
    return d
