"""
Compact-interval solutions for unbounded g.

g is replaced by g̃(x) = g(σ_ω(x)·x), where σ_ω is the trapezoidal cutoff
equal to 1 on I = [a, b] and 0 outside [a − ω, b + ω]. g̃ is bounded, agrees
with g on I and has Lipschitz constant at most β(1 + max(|a|, |b|)/ω), so for
ω large enough the bounded solver applies; its solution solves the original
equation on I.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .conditions import ConditionReport, ProblemSpec, RegionVerdict, _region, check_compact_region, estimate_constants
from .contraction import PicardState, solve_bounded
from .exceptions import InfeasiblePlanError, PreconditionError
from .funcspace import SampledFunction

logger = logging.getLogger(__name__)

LADDER_STEPS = 61
REGION_SLACK = 1e-9


def sigma(a: float, b: float, omega: float, x):
    """Trapezoid: 1 on [a, b], linear ramps of width ω, 0 outside [a − ω, b + ω]."""
    xs = np.asarray(x, dtype=float)
    left = np.clip(1.0 + (xs - a) / omega, 0.0, 1.0)
    right = np.clip(1.0 - (xs - b) / omega, 0.0, 1.0)
    out = np.where(xs < a, left, np.where(xs > b, right, 1.0))
    return float(out) if np.ndim(x) == 0 else out


class TruncatedFunction:
    """g̃(x) = g(σ_ω(x)·x) as a vectorized function handle."""

    affine = None
    growth = 0.0

    def __init__(self, g, a: float, b: float, omega: float):
        if not a <= b:
            raise PreconditionError(f"empty interval [{a}, {b}]")
        if not omega > 0:
            raise PreconditionError(f"omega must be positive, got {omega}")
        self.g = g
        self.a = a
        self.b = b
        self.omega = omega

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        scaled = sigma(self.a, self.b, self.omega, xs) * xs
        return self.g(float(scaled)) if np.ndim(x) == 0 else self.g(scaled)

    def __repr__(self) -> str:
        return f"TruncatedFunction({self.g!r}, [{self.a}, {self.b}], omega={self.omega})"


def truncate_g(g, a: float, b: float, omega: float) -> TruncatedFunction:
    return TruncatedFunction(g, a, b, omega)


def lipschitz_bound(beta: float, a: float, b: float, omega: float) -> float:
    return beta * (1.0 + max(abs(a), abs(b)) / omega)


@dataclass(frozen=True)
class TruncationPlan:
    interval: tuple[float, float]
    omega: float
    beta: float
    beta_tilde: float
    region: RegionVerdict
    feasible: bool

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "omega": self.omega,
            "beta": self.beta,
            "beta_tilde": self.beta_tilde,
            "region": self.region.to_dict(),
            "feasible": self.feasible,
        }


def plan_truncation(K: float, alpha: float, beta: float, interval: tuple[float, float]) -> TruncationPlan:
    """
    Smallest ω on the ladder 2^k·max(1, |a|, |b|) for which β̃ lies inside the
    bounded-solver region; strict inequalities must hold with relative slack.
    """
    a, b = interval
    if not a <= b:
        raise PreconditionError(f"empty interval [{a}, {b}]")
    if not check_compact_region(K, alpha, beta).verdict:
        raise PreconditionError(f"(K, alpha, beta) = ({K!r}, {alpha!r}, {beta!r}) is outside the compact-interval region")
    base = max(1.0, abs(a), abs(b))
    for k in range(LADDER_STEPS):
        omega = base * 2.0**k
        beta_tilde = lipschitz_bound(beta, a, b, omega)
        region = _region(K, alpha, beta_tilde, strict_quadratic=False, slack=REGION_SLACK)
        if region.verdict:
            logger.info(f"Truncation plan: omega={omega}, beta_tilde={beta_tilde} ({region.which})")
            return TruncationPlan((a, b), omega, beta, beta_tilde, region, True)
    raise InfeasiblePlanError(f"no omega up to {base * 2.0 ** (LADDER_STEPS - 1)!r} brings beta_tilde inside the region")


@dataclass
class CompactSolution:
    restricted: SampledFunction
    full: SampledFunction
    plan: TruncationPlan
    state: PicardState
    spec: ProblemSpec
    report: ConditionReport


def solve_compact(spec: ProblemSpec, interval: tuple[float, float], tol: float | None = None,
                  max_iter: int | None = None, window: float | None = None, grid_n: int | None = None,
                  L: float | None = None, report: ConditionReport | None = None) -> CompactSolution:
    """Solve with g̃ in place of g, then restrict the solution to I."""
    report = report or estimate_constants(spec)
    K, alpha, beta = report.value("K"), report.value("alpha"), report.value("beta")
    plan = plan_truncation(K, alpha, beta, interval)
    a, b = interval

    W = float(window if window is not None else spec.window)
    needed = 2.0 * max(abs(a - plan.omega), abs(b + plan.omega))
    if needed > W:
        logger.info(f"Expanding window from {W} to {needed} to contain the cutoff support")
        W = needed

    beta_source = report.constants["beta"].source
    truncated = ProblemSpec(
        spec.h,
        spec.f,
        truncate_g(spec.g, a, b, plan.omega),
        constants={"K": K, "alpha": alpha, "beta": plan.beta_tilde, "kappa_g": 0.0},
        sources={
            "K": report.constants["K"].source,
            "alpha": report.constants["alpha"].source,
            "beta": "heuristic" if beta_source == "heuristic" else "truncated",
            "kappa_g": "truncated",
        },
        monotone=spec.monotone,
        window=W,
    )
    truncated_report = estimate_constants(truncated)
    solution, state = solve_bounded(truncated, L=L, tol=tol, max_iter=max_iter, window=W, grid_n=grid_n,
                                    report=truncated_report)
    return CompactSolution(solution.restrict(a, b), solution, plan, state, truncated, truncated_report)
