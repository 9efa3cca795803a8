"""
Residual and invariant checks for any produced solution.

The residual |φ(φ(x)) − h(φ(f(x))) − g(x)| is computed independently of the
solver that produced φ, so the same code serves the run report and the tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from .conditions import ProblemSpec
from .conf import setting
from .exceptions import OutOfRangeError
from .funcspace import NumericInverse, SampledFunction, parallel_map
from .piecewise import PiecewiseSolution

logger = logging.getLogger(__name__)

DECILES = np.linspace(0.0, 1.0, 11)
SLOPE_SLACK = 0.01
TAIL_DRIFT = 0.05


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    witness: Any = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "witness": self.witness, "detail": self.detail}


@dataclass
class ResidualReport:
    probe_count: int
    skipped: int
    sup_residual_interior: float
    sup_residual_full: float
    worst_x: float
    worst_node: float
    quantiles: list[float]
    interior: tuple[float, float]
    checks: list[CheckOutcome] = field(default_factory=list)
    collocation: dict | None = None
    frame: pd.DataFrame | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict:
        return {
            "probe_count": self.probe_count,
            "skipped": self.skipped,
            "sup_residual_interior": self.sup_residual_interior,
            "sup_residual_full": self.sup_residual_full,
            "worst_x": self.worst_x,
            "worst_node": self.worst_node,
            "quantiles": self.quantiles,
            "interior": list(self.interior),
            "checks": [check.to_dict() for check in self.checks],
            "collocation": self.collocation,
        }


def collocation_probes(solution: SampledFunction, spec: ProblemSpec) -> np.ndarray:
    """f⁻¹ of the nodes, where the grid iteration enforces the equation exactly."""
    f_inverse = NumericInverse(spec.f, name="f")
    return np.unique(np.asarray(f_inverse(solution.nodes), dtype=float))


def default_probes(solution, spec: ProblemSpec) -> tuple[np.ndarray, tuple[float, float]]:
    """
    Uniform points on the trusted region plus every node or knot.

    Grid solutions are trusted on [−W/2, W/2]; piecewise solutions on
    [x₁, end of the built range], with the uniform points spread over the
    whole built range.
    """
    if isinstance(solution, SampledFunction):
        half = 0.5 * solution.window[1]
        return np.union1d(np.linspace(-half, half, setting("PROBES")), solution.nodes), (-half, half)
    lo, hi = solution.domain
    knots = np.asarray(solution.knots)
    probes = np.union1d(np.linspace(lo, hi, setting("PROBES")), knots[(knots >= lo) & (knots <= hi)])
    return probes, (solution.problem.x1, hi)


def _defect(solution, spec: ProblemSpec, xs: np.ndarray) -> np.ndarray:
    return np.abs(solution(solution(xs)) - spec.h(solution(spec.f(xs))) - spec.g(xs))


def _evaluable(solution, spec: ProblemSpec, xs: np.ndarray) -> np.ndarray:
    """Mask of probes whose inner evaluations stay inside a piecewise solution's built range."""
    if not isinstance(solution, PiecewiseSolution):
        return np.ones(xs.shape, dtype=bool)
    ok = solution.covers(xs)
    fx = np.asarray(spec.f(xs), dtype=float)
    ok &= solution.covers(fx)
    idx = np.flatnonzero(ok)
    ok[idx[~solution.covers(solution(xs[idx]))]] = False
    return ok


def residual(solution, spec: ProblemSpec, probes=None, interior: tuple[float, float] | None = None,
             n_jobs: int | None = None) -> ResidualReport:
    if probes is None or interior is None:
        defaults, default_interior = default_probes(solution, spec)
        probes = defaults if probes is None else probes
        interior = default_interior if interior is None else interior
    xs = np.asarray(probes, dtype=float)

    ok = _evaluable(solution, spec, xs)
    skipped = int(xs.size - ok.sum())
    if skipped:
        logger.warning(f"{skipped} of {xs.size} residual probes leave the built range and were skipped")
    xs = xs[ok]
    if xs.size == 0:
        raise OutOfRangeError("no residual probe can be evaluated", x=float("nan"), lo=interior[0], hi=interior[1])

    r = parallel_map(lambda chunk: _defect(solution, spec, chunk), xs, n_jobs)
    worst = int(np.argmax(r))
    inside = (xs >= interior[0]) & (xs <= interior[1])
    report = ResidualReport(
        probe_count=int(xs.size),
        skipped=skipped,
        sup_residual_interior=float(r[inside].max()) if inside.any() else 0.0,
        sup_residual_full=float(r[worst]),
        worst_x=float(xs[worst]),
        worst_node=float(spec.f(float(xs[worst]))),
        quantiles=[float(q) for q in np.quantile(r, DECILES)],
        interior=(float(interior[0]), float(interior[1])),
        frame=pd.DataFrame({"x": xs, "residual": r}),
    )
    if isinstance(solution, SampledFunction):
        report.collocation = _collocation_residual(solution, spec, interior)
    logger.info(f"Residual: interior {report.sup_residual_interior:.3e}, full {report.sup_residual_full:.3e} "
                f"at x={report.worst_x} (reads phi at {report.worst_node})")
    return report


def _collocation_residual(solution: SampledFunction, spec: ProblemSpec, interior: tuple[float, float]) -> dict:
    """
    Residual at f⁻¹(nodes) inside the interior. There the last grid step
    wrote h(φ(f(x))) directly, so this tracks the iteration distance and
    not the interpolation error.
    """
    xs = collocation_probes(solution, spec)
    xs = xs[(xs >= interior[0]) & (xs <= interior[1])]
    sup = float(_defect(solution, spec, xs).max()) if xs.size else 0.0
    return {"probes": int(xs.size), "sup_residual_interior": sup}


# --- invariants ---------------------------------------------------------------------

def _continuity(solution: PiecewiseSolution) -> CheckOutcome:
    worst, where = 0.0, None
    for left, right in zip(solution.branches, solution.branches[1:]):
        gap = abs(float(left.values[-1]) - float(right.values[0]))
        if where is None or gap > worst:
            worst, where = gap, float(right.nodes[0])
    tol = solution.problem.slack(where or 0.0)
    return CheckOutcome("continuity", worst <= tol, where, f"largest jump {worst:.3e}")


def _forward_monotone(solution: PiecewiseSolution) -> CheckOutcome:
    for i in range(0, solution.last_index + 1):
        branch = solution.branch(i)
        if branch.direction != "increasing":
            return CheckOutcome("forward-monotone", False, i, f"phi_{i} is {branch.direction}")
    return CheckOutcome("forward-monotone", True, None, f"{solution.last_index + 1} increasing branches")


def _returnback(solution: PiecewiseSolution) -> CheckOutcome:
    xi0 = solution.problem.xi0
    for i in range(solution.first_index, 0):
        branch = solution.branch(i)
        low = float(branch.values.min())
        if not low > xi0:
            return CheckOutcome("returnback", False, float(branch.nodes[int(np.argmin(branch.values))]),
                                f"phi_{i} reaches {low!r} <= {xi0!r}")
    return CheckOutcome("returnback", True, None, f"{-solution.first_index} backward branches stay above {xi0!r}")


def _conjunction(solution: PiecewiseSolution) -> CheckOutcome:
    """Backward seams: φ_{−k}(x_{−k+1}) = φ_{−k+1}(x_{−k+1}) for every built k."""
    if solution.first_index == 0:
        return CheckOutcome("conjunction", True, None, "no backward branches")
    worst, where = 0.0, None
    for i in range(solution.first_index, 0):
        seam = solution.knot(i + 1)
        defect = abs(float(solution.branch(i).values[-1]) - float(solution.branch(i + 1).values[0]))
        if where is None or defect > worst:
            worst, where = defect, seam
    tol = solution.problem.slack(where)
    return CheckOutcome("conjunction", worst <= tol, where, f"largest seam defect {worst:.3e}")


def _knot_mapping(solution: PiecewiseSolution) -> CheckOutcome:
    """Forward branches map their knots onto the next knots: φ_i(x_i) = x_{i+1}, φ_i(x_{i+1}) = x_{i+2}."""
    worst, where = 0.0, None
    for i in range(0, solution.last_index + 1):
        branch = solution.branch(i)
        for value, knot in ((branch.values[0], solution.knot(i + 1)), (branch.values[-1], solution.knot(i + 2))):
            defect = abs(float(value) - knot)
            if where is None or defect > worst:
                worst, where = defect, knot
    tol = solution.problem.slack(where or 0.0)
    return CheckOutcome("knot-mapping", worst <= tol, where, f"largest defect {worst:.3e}")


def _lipschitz_slope(solution: SampledFunction, L: float | None) -> CheckOutcome:
    half = 0.5 * solution.window[1]
    slope = solution.max_slope((-half, half))
    if L is None:
        return CheckOutcome("lipschitz-slope", True, slope, "no budget given")
    return CheckOutcome("lipschitz-slope", slope <= L + SLOPE_SLACK, slope, f"max slope {slope:.6g} vs L={L}")


def _tail_boundedness(solution: SampledFunction, reference: SampledFunction | None) -> CheckOutcome:
    half = 0.5 * solution.window[1]
    deviation = solution.deviation((-half, half))
    if reference is None:
        return CheckOutcome("tail-boundedness", bool(np.isfinite(deviation)), deviation,
                            f"max |phi - kappa x| = {deviation:.6g}")
    common = min(half, 0.5 * reference.window[1])
    here = solution.deviation((-common, common))
    there = reference.deviation((-common, common))
    drift = abs(here - there) / max(there, np.finfo(float).tiny)
    return CheckOutcome("tail-boundedness", drift < TAIL_DRIFT, drift,
                        f"max |phi - kappa x| on [-{common}, {common}]: {here:.6g} vs {there:.6g}")


PIECEWISE_SUITE = ("continuity", "forward-monotone", "returnback", "conjunction", "knot-mapping")
GRID_SUITE = ("lipschitz-slope", "tail-boundedness")


def check_invariants(solution, spec: ProblemSpec, suite=None, L: float | None = None,
                     reference: SampledFunction | None = None) -> list[CheckOutcome]:
    """Run the named checks that apply to this kind of solution; failures are returned, never raised."""
    piecewise = isinstance(solution, PiecewiseSolution)
    suite = suite or (PIECEWISE_SUITE if piecewise else GRID_SUITE)
    outcomes = []
    for name in suite:
        if piecewise and name == "continuity":
            outcomes.append(_continuity(solution))
        elif piecewise and name == "forward-monotone":
            outcomes.append(_forward_monotone(solution))
        elif piecewise and name == "returnback":
            outcomes.append(_returnback(solution))
        elif piecewise and name == "conjunction":
            outcomes.append(_conjunction(solution))
        elif piecewise and name == "knot-mapping":
            outcomes.append(_knot_mapping(solution))
        elif not piecewise and name == "lipschitz-slope":
            outcomes.append(_lipschitz_slope(solution, L))
        elif not piecewise and name == "tail-boundedness":
            outcomes.append(_tail_boundedness(solution, reference))
    for outcome in outcomes:
        if not outcome.passed:
            logger.warning(f"Invariant {outcome.name} failed: {outcome.detail}")
    return outcomes
