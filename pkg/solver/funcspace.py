"""
Numeric representations of real functions of one variable.

``SampledFunction`` is a grid function on a window with a tail policy for
arguments outside it, ``Branch`` a monotone (or merely continuous) piece of
the piecewise construction, and ``NumericInverse`` inverts monotone
functions by bracketing and vectorized bisection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .conf import setting
from .exceptions import (
    ConstructionError,
    EvaluationError,
    NotSurjectiveError,
    OutOfRangeError,
    PreconditionError,
)

logger = logging.getLogger(__name__)

TAILS = ("constant", "linear")

MAX_BRACKET = 2.0**60
MAX_BISECTIONS = 200
MONOTONE_SAMPLES = 257
MIN_CHUNK = 2048


def parallel_map(fn: Callable[[np.ndarray], np.ndarray], xs: np.ndarray, n_jobs: int | None = None) -> np.ndarray:
    """
    Evaluate a vectorized ``fn`` over ``xs`` (abscissae or node indices) in
    contiguous chunks.

    Chunks run on joblib's thread backend and are concatenated in order, so
    the result does not depend on ``n_jobs``.
    """
    xs = np.asarray(xs)
    n_jobs = setting("N_JOBS") if n_jobs is None else n_jobs
    if n_jobs == 1 or xs.size < 2 * MIN_CHUNK:
        return np.asarray(fn(xs), dtype=float)
    n_chunks = min(xs.size // MIN_CHUNK, 4 * (n_jobs if n_jobs > 0 else 8))
    chunks = np.array_split(xs, n_chunks)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(chunk) for chunk in chunks)
    return np.concatenate([np.asarray(r, dtype=float) for r in results])


def _as_output(x, out: np.ndarray):
    return float(out) if np.ndim(x) == 0 else out


class SampledFunction:
    """
    Piecewise-linear function through ``(nodes, values)``.

    Outside ``[nodes[0], nodes[-1]]`` the tail policy applies: ``constant``
    holds the endpoint values, ``linear`` continues from each endpoint with
    slope ``kappa``.
    """

    def __init__(self, nodes, values, tail: str = "constant", kappa: float | None = None):
        nodes = np.array(nodes, dtype=float)
        values = np.array(values, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a sampled function needs at least two nodes")
        if values.shape != nodes.shape:
            raise ValueError(f"{values.size} values for {nodes.size} nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if tail not in TAILS:
            raise ValueError(f"unknown tail policy {tail!r}")
        if tail == "linear" and kappa is None:
            raise ValueError("a linear tail needs a slope")
        nodes.setflags(write=False)
        values.setflags(write=False)
        self.nodes = nodes
        self.values = values
        self.tail = tail
        self.kappa = float(kappa) if tail == "linear" else None

    @classmethod
    def from_function(cls, fn: Callable, window: tuple[float, float], grid_n: int, tail: str = "constant",
                      kappa: float | None = None) -> "SampledFunction":
        nodes = uniform_grid(window, grid_n)
        return cls(nodes, fn(nodes), tail=tail, kappa=kappa)

    @property
    def window(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.interp(xs, self.nodes, self.values)
        if self.tail == "linear":
            out = np.where(xs < self.nodes[0], self.values[0] + self.kappa * (xs - self.nodes[0]), out)
            out = np.where(xs > self.nodes[-1], self.values[-1] + self.kappa * (xs - self.nodes[-1]), out)
        return _as_output(x, out)

    def with_values(self, values) -> "SampledFunction":
        return SampledFunction(self.nodes, values, tail=self.tail, kappa=self.kappa)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    def max_slope(self, window: tuple[float, float] | None = None) -> float:
        slopes = self.slopes()
        if window is not None:
            inside = (self.nodes[:-1] >= window[0]) & (self.nodes[1:] <= window[1])
            slopes = slopes[inside]
        return float(np.max(np.abs(slopes))) if slopes.size else 0.0

    def deviation(self, window: tuple[float, float] | None = None) -> float:
        """max |v_i - κ·x_i| over the nodes (κ = 0 for a constant tail)."""
        kappa = self.kappa or 0.0
        mask = _window_mask(self.nodes, window)
        return float(np.max(np.abs(self.values[mask] - kappa * self.nodes[mask])))

    def restrict(self, a: float, b: float) -> "SampledFunction":
        """The same function sampled on its nodes inside [a, b] plus both endpoints."""
        inner = self.nodes[(self.nodes > a) & (self.nodes < b)]
        nodes = np.concatenate(([a], inner, [b]))
        return SampledFunction(nodes, self(nodes), tail=self.tail, kappa=self.kappa)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.nodes, "value": self.values})

    def metadata(self) -> dict:
        return {"window": list(self.window), "tail": self.tail, "kappa": self.kappa}

    def __repr__(self) -> str:
        lo, hi = self.window
        return f"SampledFunction(n={self.nodes.size}, window=[{lo}, {hi}], tail={self.tail})"


def uniform_grid(window: tuple[float, float], grid_n: int) -> np.ndarray:
    return np.linspace(window[0], window[1], grid_n)


def _window_mask(xs: np.ndarray, window: tuple[float, float] | None) -> np.ndarray:
    if window is None:
        return np.ones(xs.shape, dtype=bool)
    return (xs >= window[0]) & (xs <= window[1])


def kink_indices(nodes: np.ndarray, values: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """
    Interior node indices where the slope of the piecewise-linear function
    changes by more than rounding noise.
    """
    if nodes.size < 3:
        return np.empty(0, dtype=int)
    gaps = np.diff(nodes)
    slopes = np.diff(values) / gaps
    jumps = np.abs(np.diff(slopes))
    scale = np.maximum(1.0, np.maximum(np.abs(slopes[:-1]), np.abs(slopes[1:])))
    noise = 64 * np.finfo(float).eps * np.max(np.abs(values)) / np.minimum(gaps[:-1], gaps[1:])
    return np.flatnonzero(jumps > rtol * scale + noise) + 1


class Branch:
    """
    Continuous piece of a piecewise solution on ``[nodes[0], nodes[-1]]``.

    ``direction`` is read off the data: ``increasing``, ``decreasing`` or
    ``none``; only monotone branches can be inverted.
    """

    def __init__(self, nodes, values, tau: float | None = None):
        nodes = np.array(nodes, dtype=float)
        values = np.array(values, dtype=float)
        if nodes.size < 2 or values.shape != nodes.shape:
            raise ValueError("a branch needs matching node and value arrays of length >= 2")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("branch nodes must be strictly increasing")
        steps = np.diff(values)
        if np.all(steps > 0):
            self.direction = "increasing"
        elif np.all(steps < 0):
            self.direction = "decreasing"
        else:
            self.direction = "none"
        nodes.setflags(write=False)
        values.setflags(write=False)
        self.nodes = nodes
        self.values = values
        self.tau = setting("TAU_END") if tau is None else tau

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def codomain(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def _slack(self, bound: float) -> float:
        return self.tau * (1.0 + abs(bound))

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        lo, hi = self.domain
        outside = (xs < lo - self._slack(lo)) | (xs > hi + self._slack(hi))
        if np.any(outside):
            bad = float(np.asarray(xs)[outside].reshape(-1)[0])
            raise OutOfRangeError(f"x={bad!r} outside branch domain [{lo}, {hi}]", x=bad, lo=lo, hi=hi)
        return _as_output(x, np.interp(xs, self.nodes, self.values))

    def inverse(self, y):
        """Preimage by node-array bisection then linear solve on the bracketing segment."""
        if self.direction == "none":
            raise ConstructionError("cannot invert a non-monotone branch")
        ys = np.asarray(y, dtype=float)
        lo, hi = float(self.values.min()), float(self.values.max())
        outside = (ys < lo - self._slack(lo)) | (ys > hi + self._slack(hi))
        if np.any(outside):
            bad = float(np.asarray(ys)[outside].reshape(-1)[0])
            raise OutOfRangeError(f"y={bad!r} outside branch range [{lo}, {hi}]", x=bad, lo=lo, hi=hi)
        if self.direction == "increasing":
            out = np.interp(ys, self.values, self.nodes)
        else:
            out = np.interp(ys, self.values[::-1], self.nodes[::-1])
        return _as_output(y, out)

    def kinks(self) -> np.ndarray:
        return self.nodes[kink_indices(self.nodes, self.values)]

    def max_slope(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.nodes))))

    def __repr__(self) -> str:
        lo, hi = self.domain
        return f"Branch([{lo}, {hi}], n={self.nodes.size}, {self.direction})"


class NumericInverse:
    """
    Inverse of a strictly monotone function handle.

    Affine forwards are inverted in closed form. Otherwise each target is
    bracketed by geometric expansion around a center (0, or a caller's
    guess) and refined by bisection until
    ``|forward(x) - y| <= tolerance * max(1, |y|)`` or the bracket collapses
    to adjacent doubles.
    """

    def __init__(self, forward: Callable, tolerance: float | None = None, increasing: bool | None = None,
                 affine: tuple[float, float] | None = None, bracket: tuple[float, float] | None = None,
                 name: str = "function"):
        self.forward = forward
        self.tolerance = setting("INVERSE_TOL") if tolerance is None else tolerance
        self.affine = affine if affine is not None else getattr(forward, "affine", None)
        self.bracket = bracket
        self.name = name
        if self.affine is not None:
            slope = self.affine[0]
            if slope == 0.0:
                raise PreconditionError(f"{name} is constant and cannot be inverted")
            self.increasing = slope > 0.0
        else:
            self.increasing = increasing

    def __call__(self, y, guess=None):
        ys = np.asarray(y, dtype=float)
        if self.affine is not None:
            slope, intercept = self.affine
            out = (ys - intercept) / slope
        else:
            out = self._bisect(ys.reshape(-1), guess).reshape(ys.shape)
        return _as_output(y, out)

    def _direction(self, center: float) -> float:
        if self.increasing is None:
            left, right = self.forward(np.array([center - 1.0, center + 1.0]))
            if left == right:
                raise PreconditionError(f"{self.name} is not strictly monotone near {center}")
            self.increasing = bool(right > left)
        return 1.0 if self.increasing else -1.0

    def _bisect(self, ys: np.ndarray, guess) -> np.ndarray:
        if ys.size == 0:
            return np.empty(0)
        if self.bracket is not None:
            center = np.full(ys.shape, 0.5 * (self.bracket[0] + self.bracket[1]))
            radius = np.full(ys.shape, 0.5 * (self.bracket[1] - self.bracket[0]))
        else:
            center = np.zeros(ys.shape) if guess is None else np.broadcast_to(np.asarray(guess, dtype=float), ys.shape).copy()
            radius = np.ones(ys.shape)
        sign = self._direction(float(center[0]) if center.size else 0.0)
        target = sign * ys
        lo, hi = self._expand(center, radius, target, sign, ys)

        tol = self.tolerance * np.maximum(1.0, np.abs(ys))
        result = np.empty(ys.shape)
        active = np.ones(ys.shape, dtype=bool)
        for _ in range(MAX_BISECTIONS):
            mid = 0.5 * (lo + hi)
            fmid = sign * self.forward(mid)
            collapsed = (mid <= lo) | (mid >= hi)
            finished = active & ((np.abs(fmid - target) <= tol) | collapsed)
            result[finished] = mid[finished]
            active &= ~finished
            if not active.any():
                break
            below = fmid < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        result[active] = 0.5 * (lo[active] + hi[active])
        self._check_monotone(float(lo.min()), float(hi.max()), sign)
        return result

    def _expand(self, center, radius, target, sign, ys):
        lo, hi = center - radius, center + radius
        while True:
            try:
                short = (sign * self.forward(lo) > target) | (sign * self.forward(hi) < target)
            except EvaluationError as exc:
                raise NotSurjectiveError(f"{self.name} could not be bracketed: {exc.message}")
            if not short.any():
                return lo, hi
            radius = np.where(short, 2.0 * radius, radius)
            if np.any(np.abs(center) + radius > MAX_BRACKET):
                y_bad = float(ys[short][0])
                raise NotSurjectiveError(f"{self.name} does not reach y={y_bad!r} within |x| <= 2^60", y=y_bad)
            lo, hi = center - radius, center + radius

    def _check_monotone(self, lo: float, hi: float, sign: float) -> None:
        if not hi > lo:
            return
        xs = np.linspace(lo, hi, MONOTONE_SAMPLES)
        steps = sign * np.diff(self.forward(xs))
        if np.any(steps < 0):
            j = int(np.flatnonzero(steps < 0)[0])
            raise PreconditionError(
                f"{self.name} is not monotone on [{lo}, {hi}]", witness=[float(xs[j]), float(xs[j + 1])]
            )


def sup_distance(F: SampledFunction, G: SampledFunction, probes=None,
                 window: tuple[float, float] | None = None) -> float:
    """
    Sup of |F - G| over the union of both node sets, refined by ``probes``
    (a count of uniform points or an explicit array), optionally limited
    to ``window``.
    """
    if F.tail != G.tail:
        raise PreconditionError(f"cannot compare a {F.tail} tail with a {G.tail} tail")
    if F.nodes is G.nodes or (F.nodes.shape == G.nodes.shape and np.array_equal(F.nodes, G.nodes)):
        points = F.nodes
    else:
        points = np.union1d(F.nodes, G.nodes)
    if probes is not None:
        if np.ndim(probes) == 0:
            lo, hi = window if window is not None else (points[0], points[-1])
            probes = np.linspace(lo, hi, int(probes))
        points = np.union1d(points, np.asarray(probes, dtype=float))
    points = points[_window_mask(points, window)]
    if points.size == 0:
        return 0.0
    return float(np.max(np.abs(F(points) - G(points))))


@dataclass(frozen=True)
class LipschitzEstimate:
    lower: float
    upper_estimate: float
    witness: tuple[float, float]
    heuristic: bool = True


def divided_differences(fn: Callable, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    return np.diff(np.asarray(fn(xs), dtype=float)) / np.diff(xs)


def lipschitz_bounds(fn: Callable, window: tuple[float, float], n: int) -> LipschitzEstimate:
    """
    Largest |divided difference| over adjacent pairs of ``n`` uniform samples.

    That value is a certified lower bound of the Lipschitz constant; it is
    returned again as ``upper_estimate`` flagged heuristic, never as a proof.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    xs = np.linspace(window[0], window[1], n)
    dd = np.abs(divided_differences(fn, xs))
    j = int(np.argmax(dd))
    lower = float(dd[j])
    return LipschitzEstimate(lower=lower, upper_estimate=lower, witness=(float(xs[j]), float(xs[j + 1])))


def expansion_bound(fn: Callable, window: tuple[float, float], n: int) -> LipschitzEstimate:
    """Smallest |divided difference| over adjacent sample pairs (a sampled expansion constant)."""
    xs = np.linspace(window[0], window[1], n)
    dd = np.abs(divided_differences(fn, xs))
    j = int(np.argmin(dd))
    value = float(dd[j])
    return LipschitzEstimate(lower=value, upper_estimate=value, witness=(float(xs[j]), float(xs[j + 1])))
