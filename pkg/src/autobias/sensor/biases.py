"""Bias registers, their bounds, and the mapping to behavioral pixel parameters.

The five registers follow the Prophesee naming (``diff_on``, ``diff_off``,
``fo``, ``hpf``, ``refr``). Each increment moves a pixel parameter in the
direction the manufacturer documents; the exponential form and constants
below are placeholders exposed through :class:`MappingConstants`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

BIAS_NAMES = ("diff_on", "diff_off", "fo", "hpf", "refr")


class BoundsError(ValueError):
    """A bias register lies outside its configured range."""

    def __init__(self, register: str, value, lo, hi):
        self.register = register
        super().__init__(f"bias register {register}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class BiasVector:
    diff_on: int = 0
    diff_off: int = 0
    fo: int = 0
    hpf: int = 0
    refr: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in BIAS_NAMES], dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "BiasVector":
        values = list(values)
        if len(values) != len(BIAS_NAMES):
            raise ValueError(f"expected {len(BIAS_NAMES)} bias values, got {len(values)}")
        ints = []
        for name, v in zip(BIAS_NAMES, values):
            if float(v) != int(round(float(v))):
                raise ValueError(f"bias {name} must be an integer, got {v}")
            ints.append(int(round(float(v))))
        return cls(*ints)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BiasBounds:
    """Inclusive per-register ``(min, max)`` ranges."""

    diff_on: tuple = (-85, 140)
    diff_off: tuple = (-35, 190)
    fo: tuple = (-35, 55)
    hpf: tuple = (0, 120)
    refr: tuple = (-20, 235)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not lo < hi:
                raise ValueError(f"bias_bounds.{f.name}: min {lo} must be < max {hi}")
            if not lo <= 0 <= hi:
                raise ValueError(f"bias_bounds.{f.name}: range [{lo}, {hi}] must contain 0")

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in BIAS_NAMES], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in BIAS_NAMES], dtype=float)

    def check(self, b: BiasVector) -> None:
        for name in BIAS_NAMES:
            lo, hi = getattr(self, name)
            v = getattr(b, name)
            if not lo <= v <= hi:
                raise BoundsError(name, v, lo, hi)

    def clamp(self, b: BiasVector) -> BiasVector:
        return BiasVector(
            *(min(max(getattr(b, n), getattr(self, n)[0]), getattr(self, n)[1]) for n in BIAS_NAMES)
        )

    def as_dict(self) -> dict:
        return {n: list(getattr(self, n)) for n in BIAS_NAMES}


@dataclass(frozen=True)
class MappingConstants:
    theta0: float = 0.15
    k_c: float = 0.02
    f0: float = 500.0
    k_f: float = 0.1
    h0: float = 0.05
    k_h: float = 0.05
    r0: float = 1000.0
    k_r: float = 0.02


@dataclass(frozen=True)
class PixelParams:
    """Behavioral pixel parameters.

    theta_on, theta_off : log-intensity contrast thresholds
    f_lp : low-pass cutoff in Hz
    f_hp : high-pass cutoff in Hz, 0 disables the filter
    t_refr : refractory duration in microseconds
    """

    theta_on: float
    theta_off: float
    f_lp: float
    f_hp: float = 0.0
    t_refr: float = 0.0

    def __post_init__(self):
        if not (self.theta_on > 0 and self.theta_off > 0):
            raise ValueError("contrast thresholds must be positive")
        if not self.f_lp > 0:
            raise ValueError("f_lp must be positive")
        if self.f_hp < 0 or self.t_refr < 0:
            raise ValueError("f_hp and t_refr must be non-negative")


def map_bias_to_params(
    b: BiasVector,
    cfg: MappingConstants = MappingConstants(),
    bounds: BiasBounds | None = BiasBounds(),
) -> PixelParams:
    """Translate integer bias registers into pixel parameters.

    Raises :class:`BoundsError` naming the first register outside ``bounds``;
    pass ``bounds=None`` to skip the check.
    """
    if bounds is not None:
        bounds.check(b)
    f_hp = cfg.h0 * math.exp(cfg.k_h * b.hpf) if b.hpf > 0 else 0.0
    return PixelParams(
        theta_on=cfg.theta0 * math.exp(cfg.k_c * b.diff_on),
        theta_off=cfg.theta0 * math.exp(cfg.k_c * b.diff_off),
        f_lp=cfg.f0 * math.exp(cfg.k_f * b.fo),
        f_hp=f_hp,
        t_refr=cfg.r0 * math.exp(-cfg.k_r * b.refr),
    )
