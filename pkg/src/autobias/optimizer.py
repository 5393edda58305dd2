"""Box-bounded Nelder-Mead simplex for expensive, noisy black-box objectives.

The simplex lives in continuous coordinates; every trial point is projected
onto the bounds box before it is evaluated, so the objective only ever sees
legal settings. Convergence is declared when the most recent accepted move
changes every coordinate by less than ``tol`` (1 register unit by default)
and the whole simplex has collapsed to that scale.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sensor.biases import BiasBounds, BiasVector

log = logging.getLogger(__name__)

RUNNING = "running"
CONVERGED = "converged"


class DegenerateSimplexError(ValueError):
    pass


class OracleError(RuntimeError):
    """The objective failed; ``point`` is the projected candidate."""

    def __init__(self, point, cause):
        self.point = np.asarray(point)
        super().__init__(f"objective failed at {self.point.tolist()}: {cause}")


@dataclass
class Vertex:
    x: np.ndarray
    value: float = float("nan")
    evals: int = 0
    order: int = 0


@dataclass
class SimplexState:
    vertices: list
    lower: np.ndarray
    upper: np.ndarray
    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5
    tol: float = 1.0
    reeval_every: int = 0
    iteration: int = 0
    evaluations: int = 0
    status: str = RUNNING
    last_op: str = ""
    last_moves: list = field(default_factory=list)
    history: list = field(default_factory=list)
    _next_order: int = 0

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def best(self) -> Vertex:
        return self.vertices[0]

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def _new_vertex(self, x, value=float("nan"), evals=0) -> Vertex:
        v = Vertex(np.asarray(x, dtype=float), value, evals, self._next_order)
        self._next_order += 1
        return v

    def sort(self) -> None:
        self.vertices.sort(key=lambda v: (v.value, v.order))


def _bounds_arrays(bounds):
    if isinstance(bounds, BiasBounds):
        return bounds.lower, bounds.upper
    lo, hi = bounds
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def default_steps(lower, upper) -> np.ndarray:
    """5% of each coordinate's range, at least 5 units."""
    return np.maximum(5.0, 0.05 * (np.asarray(upper) - np.asarray(lower)))


def init_simplex(start, bounds=BiasBounds(), step=None, **coeffs) -> SimplexState:
    """Axis-aligned initial simplex around ``start``.

    Vertex ``i`` offsets coordinate ``i-1`` by ``step``; when the bounds clip
    the offset to nothing it is applied in the negative direction instead.
    """
    if isinstance(start, BiasVector):
        start = start.as_array()
    lower, upper = _bounds_arrays(bounds)
    x0 = np.asarray(start, dtype=float)
    if x0.shape != lower.shape:
        raise ValueError(f"start has {x0.size} coordinates, bounds have {lower.size}")
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError(f"start {x0.tolist()} outside bounds")
    steps = default_steps(lower, upper) if step is None else np.broadcast_to(np.asarray(step, dtype=float), x0.shape)
    state = SimplexState([], lower, upper, **coeffs)
    state.vertices.append(state._new_vertex(x0.copy()))
    for i in range(x0.size):
        xi = x0.copy()
        xi[i] = np.clip(x0[i] + steps[i], lower[i], upper[i])
        if xi[i] == x0[i]:
            xi[i] = np.clip(x0[i] - steps[i], lower[i], upper[i])
        if xi[i] == x0[i]:
            raise DegenerateSimplexError(f"coordinate {i}: step {steps[i]} collapses onto the start point")
        state.vertices.append(state._new_vertex(xi))
    return state


def _evaluate(state: SimplexState, evaluate: Callable, x) -> float:
    x = state.project(x)
    try:
        value = float(evaluate(x.copy()))
    except Exception as exc:  # noqa: BLE001 - re-raised with the candidate attached
        raise OracleError(x, exc) from exc
    state.evaluations += 1
    state.history.append((x.copy(), value))
    return value


def evaluate_pending(state: SimplexState, evaluate: Callable) -> None:
    """Evaluate vertices that have no objective value yet, in insertion order."""
    for v in sorted(state.vertices, key=lambda v: v.order):
        if np.isnan(v.value):
            v.value = _evaluate(state, evaluate, v.x)
            v.evals = 1
    state.sort()


def nm_step(state: SimplexState, evaluate: Callable) -> SimplexState:
    """One reflection / expansion / contraction / shrink iteration."""
    if state.status != RUNNING:
        raise RuntimeError("simplex already converged")
    evaluate_pending(state, evaluate)
    if state.reeval_every and state.iteration and state.iteration % state.reeval_every == 0:
        b = state.best
        value = _evaluate(state, evaluate, b.x)
        b.value = (b.value * b.evals + value) / (b.evals + 1)
        b.evals += 1
        state.sort()

    vs = state.vertices
    best, worst = vs[0], vs[-1]
    f_best, f_second, f_worst = best.value, vs[-2].value, worst.value
    centroid = np.mean([v.x for v in vs[:-1]], axis=0)

    def replace_worst(x, value, op):
        new = state._new_vertex(x, value, 1)
        state.last_moves = [new.x - worst.x]
        state.last_op = op
        vs[-1] = new

    xr = state.project(centroid + state.alpha * (centroid - worst.x))
    fr = _evaluate(state, evaluate, xr)
    if fr < f_best:
        xe = state.project(centroid + state.gamma * (xr - centroid))
        fe = _evaluate(state, evaluate, xe)
        if fe < fr:
            replace_worst(xe, fe, "expand")
        else:
            replace_worst(xr, fr, "reflect")
    elif fr < f_second:
        replace_worst(xr, fr, "reflect")
    else:
        shrink = False
        if fr < f_worst:
            xc = state.project(centroid + state.rho * (xr - centroid))
            fc = _evaluate(state, evaluate, xc)
            if fc <= fr:
                replace_worst(xc, fc, "contract_outside")
            else:
                shrink = True
        else:
            xcc = state.project(centroid + state.rho * (worst.x - centroid))
            fcc = _evaluate(state, evaluate, xcc)
            if fcc < f_worst:
                replace_worst(xcc, fcc, "contract_inside")
            else:
                shrink = True
        if shrink:
            moves = []
            for i in range(1, len(vs)):
                old = vs[i]
                x = state.project(best.x + state.sigma * (old.x - best.x))
                value = _evaluate(state, evaluate, x)
                vs[i] = state._new_vertex(x, value, 1)
                moves.append(vs[i].x - old.x)
            state.last_moves = moves
            state.last_op = "shrink"
    state.iteration += 1
    state.sort()
    log.debug("iteration %d: %s, best %.4g", state.iteration, state.last_op, state.best.value)
    return state


def simplex_extent(state: SimplexState) -> float:
    """Largest per-coordinate distance of any vertex from the best one."""
    b = state.best.x
    return max(float(np.max(np.abs(v.x - b))) for v in state.vertices)


def check_converged(state: SimplexState) -> bool:
    """Converged once the last accepted move changes every coordinate by less than ``tol``.

    A small inside contraction can occur while the simplex is still wide, so
    the simplex must also fit within ``tol`` of its best vertex.
    """
    if state.iteration < 1 or not state.last_moves:
        return False
    largest = max(float(np.max(np.abs(m))) for m in state.last_moves)
    if largest < state.tol and simplex_extent(state) < state.tol:
        state.status = CONVERGED
    return state.status == CONVERGED


def best_bias(state: SimplexState, bounds: BiasBounds = BiasBounds()) -> BiasVector:
    """Best vertex rounded to integer registers and clamped to ``bounds``."""
    x = np.rint(state.best.x)
    x = np.clip(x, bounds.lower, bounds.upper)
    return BiasVector.from_sequence(int(v) for v in x)


def minimize(evaluate: Callable, start, bounds=BiasBounds(), max_evals: int = 200, step=None, **coeffs) -> SimplexState:
    """Iterate until converged or the evaluation budget is spent."""
    state = init_simplex(start, bounds, step, **coeffs)
    while state.evaluations < max_evals:
        nm_step(state, evaluate)
        if check_converged(state):
            break
    return state
