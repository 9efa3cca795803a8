"""
Explicit construction of a continuous solution from two seed branches.

Given increasing h, f, g with f(x) < x, a fixed point x₁ of g and the zero
ξ₀ of h, the knots x₀ = f(x₁), x₃ = h(x₁) + x₁ and a chosen x₂ fix two seed
homeomorphisms φ₀: [x₀, x₁] → [x₁, x₂] and φ₁: [x₁, x₂] → [x₂, x₃]. Every
further branch is forced by the equation:

* forward, φ_{k+1}(x) = h(φ̃(f(φ_k⁻¹(x)))) + g(φ_k⁻¹(x)) on [x_{k+1}, x_{k+2}],
  with the next knot x_{k+3} = φ_{k+1}(x_{k+2});
* backward, φ_{−k}(x) = h⁻¹(φ(φ_{−k+1}(f⁻¹(x))) − g(f⁻¹(x))) on
  [f(x_{−k+1}), x_{−k+1}].

Branches are piecewise linear. Their nodes include the images of every kink
of the pieces they are composed from, so piecewise-affine data stays exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from .conditions import ProblemSpec
from .conf import setting
from .exceptions import (
    ConstructionError,
    DomainError,
    NotSurjectiveError,
    OutOfRangeError,
    PiecewiseHypothesisError,
    PreconditionError,
    SeedError,
)
from .funcspace import Branch, NumericInverse, parallel_map

logger = logging.getLogger(__name__)

MIN_BRANCH_NODES = 129
DENSITY_DIVISOR = 256
MAX_BRANCHES = 400
MAX_IMAGES = 50_000


@dataclass
class PiecewiseProblem:
    h: Callable
    f: Callable
    g: Callable
    x1: float
    xi0: float
    x2: float
    x0: float
    x3: float
    x_target: float
    tau: float
    h_inverse: NumericInverse
    f_inverse: NumericInverse

    @property
    def spacing(self) -> float:
        return (self.x3 - self.x0) / DENSITY_DIVISOR

    def slack(self, x: float) -> float:
        return self.tau * (1.0 + abs(x))

    def node_count(self, lo: float, hi: float) -> int:
        return max(MIN_BRANCH_NODES, math.ceil((hi - lo) / self.spacing))

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "x2": self.x2, "x3": self.x3, "xi0": self.xi0,
                "x_target": self.x_target, "tau": self.tau}


def _check_increasing(name: str, fn: Callable, xs: np.ndarray) -> None:
    steps = np.diff(fn(xs))
    if np.any(steps <= 0):
        j = int(np.flatnonzero(steps <= 0)[0])
        raise PiecewiseHypothesisError("not-increasing", f"{name} is not strictly increasing near x={xs[j]!r}",
                                       witness=float(xs[j]))


def validate_hypotheses(spec: ProblemSpec, x1: float, sample_n: int | None = None, x_target: float | None = None,
                        x2: float | None = None, tau: float | None = None) -> PiecewiseProblem:
    """Check every hypothesis of the construction and derive x₀, x₂, x₃ and ξ₀."""
    for name in ("h", "f", "g"):
        declared = spec.monotone.get(name, "increasing")
        if declared != "increasing":
            raise PreconditionError(f"{name} must be declared increasing, got {declared!r}")
    n = sample_n or setting("SAMPLE_N")
    tau = setting("TAU_END") if tau is None else tau
    h_inverse = NumericInverse(spec.h, name="h", increasing=True)
    f_inverse = NumericInverse(spec.f, name="f", increasing=True)

    try:
        xi0 = float(h_inverse(0.0))
    except NotSurjectiveError as exc:
        raise PiecewiseHypothesisError("zero-not-found", f"h has no zero: {exc.message}")
    upper = float(f_inverse(xi0))
    if not (xi0 < x1 <= upper + tau * (1.0 + abs(upper))):
        raise PiecewiseHypothesisError(
            "x1-range", f"x1 = {x1!r} is outside ({xi0!r}, {upper!r}]", witness=float(x1)
        )
    gx1 = float(spec.g(float(x1)))
    if abs(gx1 - x1) > tau * (1.0 + abs(x1)):
        raise PiecewiseHypothesisError("fixed-point-mismatch", f"g(x1) = {gx1!r} differs from x1 = {x1!r}",
                                       witness=float(x1))

    x0 = float(spec.f(float(x1)))
    x3 = float(spec.h(float(x1))) + x1
    x_target = 50.0 * max(1.0, abs(x3)) if x_target is None else float(x_target)

    span = np.linspace(min(-x_target, x0), x_target, n)
    for name in ("h", "f", "g"):
        _check_increasing(name, getattr(spec, name), span)
    below = np.asarray(spec.f(span)) >= span
    if below.any():
        x_bad = float(span[np.flatnonzero(below)[0]])
        raise PiecewiseHypothesisError("f-above-diagonal", f"f(x) >= x at x={x_bad!r}", witness=x_bad)
    upper_range = np.linspace(x1, x_target, n)
    under = np.asarray(spec.g(upper_range)) < upper_range
    if under.any():
        x_bad = float(upper_range[np.flatnonzero(under)[0]])
        raise PiecewiseHypothesisError("g-below-diagonal", f"g(x) < x at x={x_bad!r}", witness=x_bad)

    x2 = 0.5 * (x1 + x3) if x2 is None else float(x2)
    if not x1 < x2 < x3:
        raise PiecewiseHypothesisError("x2-range", f"x2 = {x2!r} is outside ({x1!r}, {x3!r})", witness=x2)
    logger.info(f"Construction hypotheses hold: xi0={xi0}, x0={x0}, x1={x1}, x2={x2}, x3={x3}")
    return PiecewiseProblem(spec.h, spec.f, spec.g, float(x1), xi0, x2, x0, x3, x_target, tau, h_inverse, f_inverse)


class PiecewiseSolution:
    """
    Knots x_i and branches φ_i on [x_i, x_{i+1}], indexed from
    ``first_index`` (negative once backward branches exist). The knot list
    ends with the right end of the last branch's range, one past its domain.
    """

    def __init__(self, problem: PiecewiseProblem, knots: list[float], branches: list[Branch], seeds: dict):
        self.problem = problem
        self.knots = list(knots)
        self.branches = list(branches)
        self.seeds = seeds
        self.first_index = 0
        self._nodes: np.ndarray | None = None
        self._values: np.ndarray | None = None
        self._kinks: list[np.ndarray] = [b.kinks() for b in self.branches]

    # --- structure -----------------------------------------------------------

    def knot(self, i: int) -> float:
        return self.knots[i - self.first_index]

    def branch(self, i: int) -> Branch:
        return self.branches[i - self.first_index]

    @property
    def last_index(self) -> int:
        return self.first_index + len(self.branches) - 1

    @property
    def domain(self) -> tuple[float, float]:
        return self.knots[0], self.knots[len(self.branches)]

    def knot_map(self) -> dict[int, float]:
        return {self.first_index + p: x for p, x in enumerate(self.knots)}

    def append(self, branch: Branch, next_knot: float) -> None:
        self.branches.append(branch)
        self._kinks.append(branch.kinks())
        self.knots.append(next_knot)
        self._nodes = self._values = None

    def prepend(self, branch: Branch, knot: float) -> None:
        self.branches.insert(0, branch)
        self._kinks.insert(0, branch.kinks())
        self.knots.insert(0, knot)
        self.first_index -= 1
        self._nodes = self._values = None

    def kinks_between(self, lo: float, hi: float) -> np.ndarray:
        """Knots and interior slope breaks of all branches strictly inside (lo, hi)."""
        points = np.concatenate([np.asarray(self.knots)] + self._kinks)
        return np.unique(points[(points > lo) & (points < hi)])

    # --- evaluation ------------------------------------------------------------

    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._nodes is None:
            self._nodes = np.concatenate([self.branches[0].nodes] + [b.nodes[1:] for b in self.branches[1:]])
            self._values = np.concatenate([self.branches[0].values] + [b.values[1:] for b in self.branches[1:]])
        return self._nodes, self._values

    def covers(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        lo, hi = self.domain
        return (xs >= lo) & (xs <= hi)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        outside = ~self.covers(xs)
        if np.any(outside):
            lo, hi = self.domain
            bad = float(xs[outside].reshape(-1)[0]) if xs.ndim else float(xs)
            raise OutOfRangeError(f"x={bad!r} outside the built range [{lo!r}, {hi!r}]", x=bad, lo=lo, hi=hi)
        nodes, values = self._arrays()
        out = np.interp(xs, nodes, values)
        return float(out) if np.ndim(x) == 0 else out

    # --- export -----------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        nodes, values = self._arrays()
        return pd.DataFrame({"x": nodes, "phi": values})

    def summary(self) -> dict:
        lo, hi = self.domain
        return {
            "problem": self.problem.to_dict(),
            "seeds": self.seeds,
            "first_index": self.first_index,
            "last_index": self.last_index,
            "forward_branches": self.last_index + 1,
            "backward_branches": -self.first_index,
            "domain": [lo, hi],
            "node_count": int(self._arrays()[0].size),
        }


def eval_solution(solution: PiecewiseSolution, x):
    return solution(x)


# --- seeds ----------------------------------------------------------------------------

def _seed(problem: PiecewiseProblem, lo: float, hi: float, y_lo: float, y_hi: float, shape) -> Branch:
    t = np.linspace(lo, hi, problem.node_count(lo, hi))
    if shape is None:
        values = y_lo + (t - lo) * ((y_hi - y_lo) / (hi - lo))
    else:
        raw = np.asarray(shape(t), dtype=float)
        if np.any(np.diff(raw) <= 0):
            j = int(np.flatnonzero(np.diff(raw) <= 0)[0])
            raise SeedError(f"seed shape is not strictly increasing near x={t[j]!r}", x=float(t[j]))
        values = y_lo + (y_hi - y_lo) * ((raw - raw[0]) / (raw[-1] - raw[0]))
    values[0], values[-1] = y_lo, y_hi
    return Branch(t, values, tau=problem.tau)


def seed_branches(problem: PiecewiseProblem, shape=None) -> tuple[Branch, Branch]:
    """
    φ₀: [x₀, x₁] → [x₁, x₂] and φ₁: [x₁, x₂] → [x₂, x₃]; ``shape`` is None
    for affine seeds or a pair of increasing functions rescaled onto the
    endpoints.
    """
    shape0, shape1 = shape if shape is not None else (None, None)
    p = problem
    phi0 = _seed(p, p.x0, p.x1, p.x1, p.x2, shape0)
    phi1 = _seed(p, p.x1, p.x2, p.x2, p.x3, shape1)
    return phi0, phi1


# --- node placement ------------------------------------------------------------------

def _merge_nodes(lo: float, hi: float, count: int, extra: np.ndarray) -> np.ndarray:
    """Uniform nodes on [lo, hi] plus ``extra`` points; uniform nodes crowding an extra point are dropped."""
    base = np.linspace(lo, hi, count)
    spacing = (hi - lo) / (count - 1)
    eps = 1e-12 * (1.0 + max(abs(lo), abs(hi)))
    extra = np.unique(np.asarray(extra, dtype=float))
    extra = extra[(extra > lo + eps) & (extra < hi - eps)]
    if extra.size > MAX_IMAGES:
        extra = extra[:: math.ceil(extra.size / MAX_IMAGES)]
    if extra.size:
        idx = np.searchsorted(extra, base)
        left = np.abs(base - extra[np.clip(idx - 1, 0, extra.size - 1)])
        right = np.abs(extra[np.clip(idx, 0, extra.size - 1)] - base)
        crowded = np.minimum(left, right) < 0.25 * spacing
        crowded[0] = crowded[-1] = False
        base = base[~crowded]
    nodes = np.union1d(base, extra)
    keep = np.concatenate(([True], np.diff(nodes) > eps))
    return nodes[keep]


def _check_node_budget(problem: PiecewiseProblem, solution: PiecewiseSolution, lo: float, hi: float) -> int:
    """Uniform node count for a new branch on [lo, hi], refused before allocation once the total would pass MAX_NODES."""
    count = problem.node_count(lo, hi)
    budget = setting("MAX_NODES")
    total = sum(branch.nodes.size for branch in solution.branches)
    if total + count > budget:
        raise ConstructionError(
            f"a branch on [{lo!r}, {hi!r}] needs {count} nodes on top of {total}; node budget is {budget}",
            nodes=total + count, budget=budget,
        )
    return count


def _level_preimages(nodes: np.ndarray, values: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Points where a piecewise-linear function crosses any of ``levels``, one monotone run at a time."""
    steps = np.sign(np.diff(values))
    cuts = np.flatnonzero(steps[1:] != steps[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [steps.size]))
    found = []
    for s, e in zip(starts, ends):
        if steps[s] == 0:
            continue
        xs, vs = nodes[s:e + 1], values[s:e + 1]
        if steps[s] < 0:
            xs, vs = xs[::-1], vs[::-1]
        inside = levels[(levels > vs[0]) & (levels < vs[-1])]
        found.append(np.interp(inside, vs, xs))
    return np.concatenate(found) if found else np.empty(0)


# --- forward ------------------------------------------------------------------------

def _forward_step(problem: PiecewiseProblem, solution: PiecewiseSolution) -> None:
    p = problem
    k = solution.last_index
    current = solution.branch(k)
    lo, hi = solution.knot(k + 1), solution.knot(k + 2)
    a, b = current.domain

    images = [current.values[np.isin(current.nodes, current.kinks())]]
    f_lo, f_hi = float(p.f(a)), float(p.f(b))
    seams = solution.kinks_between(f_lo, f_hi)
    if seams.size:
        images.append(current(np.clip(p.f_inverse(seams), a, b)))
    t = _merge_nodes(lo, hi, _check_node_budget(p, solution, lo, hi), np.concatenate(images))

    s = current.inverse(t)
    u = np.asarray(p.f(s), dtype=float)
    start = solution.knots[0]
    if u.min() < start - p.slack(start) or u.max() > lo + p.slack(lo):
        raise DomainError(f"f(phi_{k}^-1(x)) leaves the built range [{start!r}, {lo!r}]")
    u = np.clip(u, start, lo)

    def at(idx: np.ndarray) -> np.ndarray:
        return np.asarray(p.h(solution(u[idx])), dtype=float) + np.asarray(p.g(s[idx]), dtype=float)

    values = parallel_map(at, np.arange(t.size))
    if abs(values[0] - hi) > p.slack(hi):
        raise ConstructionError(
            f"phi_{k + 1}({lo!r}) = {values[0]!r} differs from the knot {hi!r}", knot=hi, value=float(values[0])
        )
    values[0] = hi
    if np.any(np.diff(values) <= 0):
        j = int(np.flatnonzero(np.diff(values) <= 0)[0])
        raise ConstructionError(f"phi_{k + 1} is not increasing near x={t[j]!r}", x=float(t[j]))
    next_knot = float(values[-1])
    solution.append(Branch(t, values, tau=p.tau), next_knot)
    logger.debug(f"Built phi_{k + 1} on [{lo}, {hi}] with {t.size} nodes; next knot {next_knot}")


def extend_forward(problem: PiecewiseProblem, phi0: Branch, phi1: Branch, x_target: float | None = None,
                   seeds: dict | None = None) -> PiecewiseSolution:
    """Build φ₂, φ₃, … until a knot exceeds ``x_target``."""
    p = problem
    solution = PiecewiseSolution(p, [p.x0, p.x1, p.x2, p.x3], [phi0, phi1], seeds or {})
    _extend_forward_to(p, solution, p.x_target if x_target is None else x_target)
    return solution


def _extend_forward_to(problem: PiecewiseProblem, solution: PiecewiseSolution, x_target: float) -> None:
    while solution.knots[-1] <= x_target:
        if len(solution.branches) >= MAX_BRANCHES:
            raise ConstructionError(f"branch cap {MAX_BRANCHES} reached before x={x_target!r}")
        _forward_step(problem, solution)
        if not solution.knots[-1] > solution.knots[-2]:
            raise ConstructionError(f"knots stopped increasing at {solution.knots[-1]!r}")
    logger.info(f"Forward part reaches knot {solution.knots[-1]} after {solution.last_index + 1} branches")


def _reach_forward(problem: PiecewiseProblem, solution: PiecewiseSolution, x: float) -> None:
    """Extend the forward part until its domain covers ``x``."""
    while solution.domain[1] < x:
        if len(solution.branches) >= MAX_BRANCHES:
            raise ConstructionError(f"branch cap {MAX_BRANCHES} reached before covering x={x!r}")
        _forward_step(problem, solution)


# --- backward -------------------------------------------------------------------------

def _backward_step(problem: PiecewiseProblem, solution: PiecewiseSolution) -> None:
    p = problem
    k = -solution.first_index + 1
    right = solution.branches[0]
    hi = solution.knots[0]
    lo = float(p.f(hi))
    if not lo < hi:
        raise ConstructionError(f"f({hi!r}) = {lo!r} does not move left")

    a, b = right.domain
    levels = solution.kinks_between(float(right.values.min()), float(right.values.max()))
    levels = levels[levels >= p.x0]
    sources = np.concatenate((right.nodes[np.isin(right.nodes, right.kinks())],
                              _level_preimages(right.nodes, right.values, levels)))
    images = np.asarray(p.f(sources), dtype=float) if sources.size else np.empty(0)
    t = _merge_nodes(lo, hi, _check_node_budget(p, solution, lo, hi), images)

    s = np.asarray(p.f_inverse(t), dtype=float)
    s[0], s[-1] = a, b
    s = np.clip(s, a, b)
    landing = np.asarray(right(s), dtype=float)
    if landing.min() < p.x0 - p.slack(p.x0):
        j = int(np.argmin(landing))
        raise DomainError(f"phi_{-k + 1} lands at {landing[j]!r} below x0 = {p.x0!r}", x=float(t[j]))
    landing = np.maximum(landing, p.x0)
    _reach_forward(p, solution, float(landing.max()))

    def at(idx: np.ndarray) -> np.ndarray:
        inner = np.asarray(solution(landing[idx]), dtype=float) - np.asarray(p.g(s[idx]), dtype=float)
        return p.h_inverse(inner)

    values = parallel_map(at, np.arange(t.size))
    if np.any(values <= p.xi0):
        j = int(np.flatnonzero(values <= p.xi0)[0])
        raise ConstructionError(f"phi_{-k}({t[j]!r}) = {values[j]!r} is not above the zero of h", x=float(t[j]))
    joint = float(right.values[0])
    if abs(values[-1] - joint) > p.slack(joint):
        raise ConstructionError(f"phi_{-k} and phi_{-k + 1} disagree at {hi!r}", knot=hi, value=float(values[-1]))
    values[-1] = joint
    solution.prepend(Branch(t, values, tau=p.tau), lo)
    logger.debug(f"Built phi_{-k} on [{lo}, {hi}] with {t.size} nodes")


def extend_backward(problem: PiecewiseProblem, solution: PiecewiseSolution,
                    x_target_neg: float | None = None) -> PiecewiseSolution:
    """
    Build φ₋₁, φ₋₂, … until the first knot is at or below ``x_target_neg``
    (default: one branch). The forward part grows on demand so that every
    backward landing point is covered.
    """
    p = problem
    if x_target_neg is None:
        x_target_neg = float(p.f(p.x0))
    while solution.knots[0] > x_target_neg:
        if len(solution.branches) >= MAX_BRANCHES:
            raise ConstructionError(f"branch cap {MAX_BRANCHES} reached before x={x_target_neg!r}")
        _backward_step(p, solution)
    logger.info(f"Backward part reaches knot {solution.knots[0]} after {-solution.first_index} branches")
    return solution


def construct(problem: PiecewiseProblem, shape=None, x_target: float | None = None,
              x_target_neg: float | None = None, seeds: dict | None = None) -> PiecewiseSolution:
    phi0, phi1 = seed_branches(problem, shape)
    solution = extend_forward(problem, phi0, phi1, x_target, seeds=seeds or {"shape": "linear"})
    return extend_backward(problem, solution, x_target_neg)
