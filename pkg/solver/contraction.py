"""
Picard iteration for φ(x) = h⁻¹(φ(φ(f⁻¹(x))) − g(f⁻¹(x))).

The operator is evaluated node-wise on a uniform grid over [−W, W]; values
of φ outside the window come from the iterate's tail policy, so only the
interior [−W/2, W/2] is trusted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .conditions import ConditionReport, ProblemSpec, compute_kappa, estimate_constants
from .conf import setting
from .exceptions import EvaluationError, NonConvergenceError, PreconditionError
from .funcspace import NumericInverse, SampledFunction, parallel_map, sup_distance, uniform_grid

logger = logging.getLogger(__name__)

BURN_IN = 5


@dataclass
class PicardState:
    iterate: SampledFunction
    L: float
    q: float
    threshold: float
    iteration: int = 0
    distances: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def contraction_ratios(self) -> list[float]:
        d = self.distances
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]

    def error_bound(self) -> float | None:
        """A-posteriori distance to the fixed point, d·q/(1−q)."""
        if not self.distances:
            return None
        return self.distances[-1] * self.q / (1.0 - self.q)

    def to_frame(self) -> pd.DataFrame:
        d = np.asarray(self.distances, dtype=float)
        ratios = np.full(d.shape, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[1:] = np.where(d[:-1] > 0, d[1:] / d[:-1], np.nan)
        return pd.DataFrame({"iteration": np.arange(1, d.size + 1), "distance": d, "ratio": ratios})

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "q": self.q,
            "threshold": self.threshold,
            "iterations": self.iteration,
            "converged": self.converged,
            "final_distance": self.distances[-1] if self.distances else None,
            "error_bound": self.error_bound(),
        }


class PicardSolver:
    """
    The operator T on a fixed grid.

    f⁻¹(x) and g(f⁻¹(x)) do not depend on the iterate and are computed once;
    each application then costs one composition φ∘φ and one inversion of h.
    """

    def __init__(self, spec: ProblemSpec, window: float | None = None, grid_n: int | None = None,
                 slopes: tuple[float, float] | None = None, n_jobs: int | None = None):
        self.spec = spec
        self.W = float(window if window is not None else spec.window)
        self.grid_n = int(grid_n if grid_n is not None else setting("GRID_N"))
        self.n_jobs = n_jobs
        self.nodes = uniform_grid((-self.W, self.W), self.grid_n)
        self.kappa_h = slopes[0] if slopes else None
        kappa_f = slopes[1] if slopes else None
        self.h_inverse = NumericInverse(spec.h, name="h", increasing=_declared(spec, "h"))
        f_inverse = NumericInverse(spec.f, name="f", increasing=_declared(spec, "f"))
        guess = self.nodes / kappa_f if kappa_f else None
        self.pre = f_inverse(self.nodes, guess=guess) if guess is not None else parallel_map(f_inverse, self.nodes, n_jobs)
        self.g_pre = parallel_map(spec.g, self.pre, n_jobs)

    @property
    def interior(self) -> tuple[float, float]:
        return -0.5 * self.W, 0.5 * self.W

    def apply(self, phi: SampledFunction) -> SampledFunction:
        def at(idx: np.ndarray) -> np.ndarray:
            inner = phi(phi(self.pre[idx])) - self.g_pre[idx]
            guess = inner / self.kappa_h if self.kappa_h else None
            return self.h_inverse(inner, guess=guess)

        values = parallel_map(at, np.arange(self.nodes.size), self.n_jobs)
        bad = ~np.isfinite(values)
        if bad.any():
            x_bad = float(self.nodes[np.flatnonzero(bad)[0]])
            raise EvaluationError(f"operator produced a non-finite value at node x={x_bad!r}", x=x_bad)
        return SampledFunction(self.nodes, values, tail=phi.tail, kappa=phi.kappa)

    def iterate(self, phi0: SampledFunction, L: float, q: float, tol: float, max_iter: int) -> PicardState:
        state = PicardState(iterate=phi0, L=L, q=q, threshold=tol * (1.0 - q))
        phi = phi0
        for n in range(1, max_iter + 1):
            following = self.apply(phi)
            d = sup_distance(following, phi)
            state.distances.append(d)
            state.iteration = n
            state.iterate = following
            phi = following
            logger.debug(f"Picard iteration {n}: distance {d:.3e}")
            if d <= state.threshold:
                state.converged = True
                logger.info(f"Converged after {n} iterations (distance {d:.3e}, q={q:.4f})")
                return state
        raise NonConvergenceError(
            f"no convergence in {max_iter} iterations (last distance {state.distances[-1]:.3e}, "
            f"threshold {state.threshold:.3e})",
            distances=state.distances,
        )


def _declared(spec: ProblemSpec, name: str) -> bool | None:
    declared = spec.monotone.get(name)
    if declared is None:
        return None
    return declared == "increasing"


def _budget(report: ConditionReport, L: float | None, default: float | None) -> float:
    window = report.l_window
    if window is None:
        raise PreconditionError("the admissible window of Lipschitz budgets L is empty")
    L = default if L is None else float(L)
    if not window.contains(L):
        raise PreconditionError(f"L = {L!r} is outside the admissible window [{window.lo!r}, {window.hi!r})")
    return L


def apply_T(phi: SampledFunction, spec: ProblemSpec, window: float | None = None, grid_n: int | None = None,
            slopes: tuple[float, float] | None = None) -> SampledFunction:
    return PicardSolver(spec, window, grid_n, slopes=slopes).apply(phi)


def solve_bounded(spec: ProblemSpec, L: float | None = None, tol: float | None = None, max_iter: int | None = None,
                  window: float | None = None, grid_n: int | None = None,
                  report: ConditionReport | None = None) -> tuple[SampledFunction, PicardState]:
    """Bounded continuous solution by iterating T from φ₀ ≡ 0."""
    report = report or estimate_constants(spec)
    if not report.bounded.verdict:
        raise PreconditionError(
            f"(K, alpha, beta) = ({report.value('K')!r}, {report.value('alpha')!r}, {report.value('beta')!r}) "
            f"fails {report.bounded.branch}"
        )
    if not report.g_bounded:
        raise PreconditionError("g must be bounded for the bounded solver; use solve-compact or solve-asymptotic")
    L = _budget(report, L, report.default_L)
    q = (L + 1.0) / report.value("K")
    tol = setting("TOL") if tol is None else tol
    max_iter = setting("MAX_ITER") if max_iter is None else max_iter

    solver = PicardSolver(spec, window, grid_n)
    logger.info(f"Bounded solve: L={L}, q={q:.4f}, W={solver.W}, grid_n={solver.grid_n}")
    phi0 = SampledFunction(solver.nodes, np.zeros(solver.nodes.size))
    state = solver.iterate(phi0, L, q, tol, max_iter)
    return state.iterate, state


def solve_asymptotic(spec: ProblemSpec, tol: float | None = None, max_iter: int | None = None,
                     window: float | None = None, grid_n: int | None = None, L: float | None = None,
                     report: ConditionReport | None = None) -> tuple[SampledFunction, PicardState, float]:
    """Solution of the form κ_star·x + bounded, iterated from φ₀(x) = κ_star·x."""
    report = report or estimate_constants(spec)
    kappas = [report.value(name) for name in ("kappa_h", "kappa_f", "kappa_g")]
    if any(k is None for k in kappas):
        raise PreconditionError("linear-growth coefficients kappa_h, kappa_f, kappa_g are required")
    if kappas[2] == 0.0:
        raise PreconditionError("kappa_g must be non-zero; g is bounded, use solve-bounded")
    roots = compute_kappa(*kappas)
    if not report.bounded.verdict:
        raise PreconditionError(f"constants fail {report.bounded.branch}")
    kappa_star = roots.kappa_star
    L = _budget(report, L, report.asymptotic_L)
    if abs(kappa_star) > L:
        raise PreconditionError(f"|kappa_star| = {abs(kappa_star)!r} exceeds L = {L!r}")
    q = (L + 1.0) / report.value("K")
    tol = setting("TOL") if tol is None else tol
    max_iter = setting("MAX_ITER") if max_iter is None else max_iter

    solver = PicardSolver(spec, window, grid_n, slopes=(kappas[0], kappas[1]))
    logger.info(f"Asymptotic solve: kappa_star={kappa_star}, L={L}, q={q:.4f}, W={solver.W}")
    phi0 = SampledFunction(solver.nodes, kappa_star * solver.nodes, tail="linear", kappa=kappa_star)
    state = solver.iterate(phi0, L, q, tol, max_iter)
    return state.iterate, state, kappa_star


def interior_distance(first: SampledFunction, second: SampledFunction, W: float) -> float:
    """Sup distance over the trusted interior [−W/2, W/2]."""
    return sup_distance(first, second, window=(-0.5 * W, 0.5 * W))


def refinement_constant(solution: SampledFunction, refined: SampledFunction, grid_n: int) -> float:
    """C in ‖φ_n − φ_2n‖ ≈ C / n measured on the interior."""
    W = solution.window[1]
    return grid_n * interior_distance(solution, refined, W)
