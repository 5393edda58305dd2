"""Scenario configuration: strict JSON parsing and the flicker presets.

A scenario file is a JSON object with the optional sections ``scene``,
``detector``, ``controller``, ``bias_bounds``, ``mapping`` and ``output``,
plus ``name`` and ``preset``. With ``preset`` set, the file only overrides
what it names. Unknown keys are errors.
"""
from __future__ import annotations

import json
import math
import types
import typing
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path

from .controller import ControllerConfig
from .detector import DetectorConfig
from .sensor import (
    BIAS_NAMES,
    BiasBounds,
    BiasVector,
    BoundsError,
    FlickerSource,
    MappingConstants,
    NoiseSpec,
    SceneError,
    SceneScript,
    TargetSpec,
)

PRESET_FREQS = (100, 200, 300, 400, 500)

# Frozen calibration of the flicker presets: the default biases fail and the
# loop can recover. demos/calibration_sweep.py reruns the sweep behind them.
# A full-depth square wave swings the log signal by more than any threshold
# can absorb, so the depth is mild and the failure at default biases comes
# from threshold mismatch plus bandwidth-dependent background activity.
PRESET_AMBIENT_LUX = 150.0
PRESET_DEPTH = 0.115
PRESET_TARGET = TargetSpec(
    semi_axes=(14.0, 18.0),
    contrast=2.5,
    texture_std=0.7,
    texture_corr_px=1.5,
    sway_amp_px=10.0,
    sway_period_s=4.0,
    nod_amp_px=10.0,
    jitter_px=0.0,
)
PRESET_NOISE = NoiseSpec(rate=3.5, off_fraction=0.8, threshold_exponent=2.0, bandwidth_exponent=3.0, cap=10.0)
PRESET_MISMATCH = 0.4
PRESET_DURATION_S = 180
PRESET_WARMUP_S = 20


class ScenarioError(ValueError):
    """Configuration problem; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass(frozen=True)
class OutputConfig:
    fps: int = 8
    export_pgm: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    scene: SceneScript
    detector: DetectorConfig
    controller: ControllerConfig = ControllerConfig()
    bias_bounds: BiasBounds = BiasBounds()
    mapping: MappingConstants = MappingConstants()
    output: OutputConfig = OutputConfig()

    @property
    def duration_s(self) -> int:
        return int(self.scene.duration_s)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, scene=replace(self.scene, seed=int(seed)))


# -- presets -----------------------------------------------------------------
def preset_names() -> list[str]:
    return [f"flicker-{f}" for f in PRESET_FREQS]


def preset(name: str) -> ScenarioConfig:
    if name not in preset_names():
        raise ScenarioError("preset", f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    freq = int(name.split("-")[1])
    scene = SceneScript(
        ambient=((0.0, PRESET_AMBIENT_LUX),),
        flicker=(FlickerSource(float(freq), PRESET_DEPTH, "square"),),
        target=PRESET_TARGET,
        noise=PRESET_NOISE,
        threshold_mismatch=PRESET_MISMATCH,
        duration_s=PRESET_DURATION_S,
    )
    return ScenarioConfig(
        name=name,
        scene=scene,
        detector=DetectorConfig.for_target(PRESET_TARGET.semi_axes),
        controller=ControllerConfig(warmup_s=PRESET_WARMUP_S),
    )


# -- strict parsing ------------------------------------------------------------
def _type_hints(cls):
    return typing.get_type_hints(cls)


def _is_optional(tp) -> bool:
    return typing.get_origin(tp) in (typing.Union, types.UnionType) and type(None) in typing.get_args(tp)


def _coerce(value, tp, path):
    """Convert JSON ``value`` to annotation ``tp``; raise naming ``path``."""
    if _is_optional(tp):
        if value is None:
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    if tp is bool:
        if not isinstance(value, bool):
            raise ScenarioError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ScenarioError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ScenarioError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(tp)


def _tuple_of_numbers(value, path, n=None):
    if not isinstance(value, (list, tuple)) or (n is not None and len(value) != n):
        want = f"a list of {n} numbers" if n else "a list of numbers"
        raise ScenarioError(path, f"expected {want}, got {value!r}")
    return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(value))


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ScenarioError(path or "<root>", f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ScenarioError(where, "unknown field")


def _merge_simple(base, obj, path, special=None):
    """Override scalar fields of dataclass instance ``base`` from ``obj``."""
    special = special or {}
    names = [f.name for f in fields(base)]
    _check_keys(obj, names, path)
    hints = _type_hints(type(base))
    kw = {}
    for key, value in obj.items():
        sub = f"{path}.{key}"
        if key in special:
            kw[key] = special[key](value, sub, getattr(base, key))
        else:
            kw[key] = _coerce(value, hints[key], sub)
    try:
        return replace(base, **kw)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, (SceneError, ScenarioError)):
            raise
        msg = str(exc)
        head, sep, tail = msg.partition(": ")
        if sep and head.startswith(path + "."):
            raise ScenarioError(head, tail) from exc
        raise ScenarioError(path, msg) from exc


def _parse_flicker(value, path, _base):
    if not isinstance(value, list):
        raise ScenarioError(path, "expected a list of flicker sources")
    out = []
    for i, item in enumerate(value):
        sub = f"{path}[{i}]"
        _check_keys(item, [f.name for f in fields(FlickerSource)], sub)
        for req in ("freq_hz", "depth"):
            if req not in item:
                raise ScenarioError(f"{sub}.{req}", "required")
        base = FlickerSource(float(_coerce(item["freq_hz"], float, f"{sub}.freq_hz")), 0.0)
        rest = {k: v for k, v in item.items() if k != "region"}
        src = _merge_simple(base, rest, sub)
        if "region" in item and item["region"] is not None:
            reg = _tuple_of_numbers(item["region"], f"{sub}.region", 4)
            src = replace(src, region=tuple(int(v) for v in reg))
        out.append(src)
    return tuple(out)


def _parse_target(value, path, base):
    if value is None:
        return None
    base = base or TargetSpec()
    special = {
        "semi_axes": lambda v, p, _b: _tuple_of_numbers(v, p, 2),
        "center": lambda v, p, _b: None if v is None else _tuple_of_numbers(v, p, 2),
    }
    return _merge_simple(base, value, path, special)


def _parse_ambient(value, path, _base):
    if not isinstance(value, list) or not value:
        raise ScenarioError(path, "expected a non-empty list of [start_s, lux] pairs")
    return tuple(_tuple_of_numbers(v, f"{path}[{i}]", 2) for i, v in enumerate(value))


def _parse_scene(obj, base: SceneScript, path="scene") -> SceneScript:
    special = {
        "ambient": _parse_ambient,
        "flicker": _parse_flicker,
        "target": _parse_target,
        "noise": lambda v, p, b: _merge_simple(b, v, p),
    }
    try:
        return _merge_simple(base, obj, path, special)
    except SceneError as exc:
        raise ScenarioError(exc.field, str(exc).split(": ", 1)[-1]) from exc


def _parse_bounds(obj, base: BiasBounds, path="bias_bounds") -> BiasBounds:
    _check_keys(obj, BIAS_NAMES, path)
    kw = {}
    for key, value in obj.items():
        pair = _tuple_of_numbers(value, f"{path}.{key}", 2)
        if any(v != int(v) for v in pair):
            raise ScenarioError(f"{path}.{key}", "bounds must be integers")
        kw[key] = (int(pair[0]), int(pair[1]))
    try:
        return replace(base, **kw)
    except ValueError as exc:
        name = next((n for n in BIAS_NAMES if f".{n}:" in str(exc)), "")
        raise ScenarioError(f"{path}.{name}" if name else path, str(exc).split(": ", 1)[-1]) from exc


def _parse_controller(obj, base: ControllerConfig, path="controller") -> ControllerConfig:
    def biases(v, p, _b):
        if isinstance(v, dict):
            _check_keys(v, BIAS_NAMES, p)
            vals = {k: _coerce(x, int, f"{p}.{k}") for k, x in v.items()}
            return replace(BiasVector(), **vals)
        nums = _tuple_of_numbers(v, p, 5)
        return BiasVector.from_sequence(int(x) for x in nums)

    return _merge_simple(base, obj, path, {"initial_biases": biases})


SECTIONS = ("name", "preset", "scene", "detector", "controller", "bias_bounds", "mapping", "output")


def scenario_from_dict(obj: dict, default_name: str = "custom") -> ScenarioConfig:
    _check_keys(obj, SECTIONS, "")
    if "preset" in obj:
        cfg = preset(_coerce(obj["preset"], str, "preset"))
    else:
        scene = SceneScript(duration_s=PRESET_DURATION_S)
        cfg = ScenarioConfig(default_name, scene, DetectorConfig())
    name = _coerce(obj.get("name", cfg.name if "preset" in obj else default_name), str, "name")
    scene = _parse_scene(obj.get("scene", {}), cfg.scene)
    # detector defaults follow the effective target size; explicit fields win
    detector = DetectorConfig.for_target(scene.target.semi_axes) if scene.target is not None else cfg.detector
    if "detector" in obj:
        detector = _merge_simple(detector, obj["detector"], "detector")
    controller = _parse_controller(obj.get("controller", {}), cfg.controller)
    bounds = _parse_bounds(obj.get("bias_bounds", {}), cfg.bias_bounds)
    mapping = _merge_simple(cfg.mapping, obj.get("mapping", {}), "mapping")
    output = _merge_simple(cfg.output, obj.get("output", {}), "output")
    try:
        bounds.check(controller.initial_biases)
    except BoundsError as exc:
        raise ScenarioError("controller.initial_biases", str(exc)) from exc
    if scene.duration_s != int(scene.duration_s):
        raise ScenarioError("scene.duration_s", "must be a whole number of seconds")
    if output.fps < 1 or 1_000_000 % output.fps:
        raise ScenarioError("output.fps", "must be a positive divisor of 1000000")
    return ScenarioConfig(name, scene, detector, controller, bounds, mapping, output)


def load_scenario(path) -> ScenarioConfig:
    """Read and strictly validate a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(obj, default_name=path.stem)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """JSON-ready view of a scenario, accepted back by :func:`scenario_from_dict`."""

    def conv(v):
        if is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
        if isinstance(v, (tuple, list)):
            return [conv(x) for x in v]
        return v

    d = {k: conv(getattr(cfg, k)) for k in ("scene", "detector", "controller", "bias_bounds", "mapping", "output")}
    d["controller"]["initial_biases"] = cfg.controller.initial_biases.as_dict()
    return {"name": cfg.name, **d}


__all__ = [
    "OutputConfig",
    "ScenarioConfig",
    "ScenarioError",
    "load_scenario",
    "preset",
    "preset_names",
    "scenario_from_dict",
    "scenario_to_dict",
]
