"""
Decides which existence result covers a problem φ(φ(x)) = h(φ(f(x))) + g(x).

Constants come from the user (certified), from the expression syntax
(affine slopes, bounded terms) or from sampling (heuristic, always flagged).
The region checks, the admissible window of Lipschitz budgets L and the
roots of κ² − κ_h κ_f κ − κ_g = 0 are computed from them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import pandas as pd

from .conf import setting
from .exceptions import EvaluationError, HypothesisViolation, NoRealRootError, PreconditionError
from .exprlang import compile_expr
from .funcspace import expansion_bound, lipschitz_bounds

logger = logging.getLogger(__name__)

CONSTANT_NAMES = ("K", "alpha", "beta", "kappa_h", "kappa_f", "kappa_g")


@dataclass
class ProblemSpec:
    """h, f, g plus whatever constants the user certifies for them."""

    h: Callable
    f: Callable
    g: Callable
    constants: dict[str, float] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)
    monotone: dict[str, str] = field(default_factory=dict)
    window: float = 20.0

    def __post_init__(self):
        unknown = set(self.constants) - set(CONSTANT_NAMES)
        if unknown:
            raise PreconditionError(f"unknown constants: {sorted(unknown)}")
        K = self.constants.get("K")
        if K is not None and not K > 1:
            raise PreconditionError(f"certified K must exceed 1, got {K}")
        alpha = self.constants.get("alpha")
        if alpha is not None and not alpha > 0:
            raise PreconditionError(f"certified alpha must be positive, got {alpha}")
        beta = self.constants.get("beta")
        if beta is not None and not beta >= 0:
            raise PreconditionError(f"certified beta must be non-negative, got {beta}")
        if not self.window > 0:
            raise PreconditionError(f"window half-width must be positive, got {self.window}")

    @classmethod
    def from_strings(cls, h: str, f: str, g: str, **kwargs) -> "ProblemSpec":
        return cls(compile_expr(h), compile_expr(f), compile_expr(g), **kwargs)

    def source_of(self, name: str) -> str:
        return self.sources.get(name, "certified")


@dataclass(frozen=True)
class ConstantEstimate:
    name: str
    value: float | None
    source: str  # certified | affine | syntactic | truncated | heuristic
    witness: tuple[float, float] | None = None

    @property
    def heuristic(self) -> bool:
        return self.source == "heuristic"

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "source": self.source,
            "certified": not self.heuristic,
            "witness": list(self.witness) if self.witness else None,
        }


@dataclass(frozen=True)
class LWindow:
    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return not self.lo < self.hi

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, L: float) -> bool:
        return self.lo <= L < self.hi

    def to_dict(self) -> dict[str, float]:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class RegionVerdict:
    verdict: bool
    which: str  # quadratic | product | none
    branch: str  # the inequality that was evaluated
    l_window: LWindow | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "which": self.which,
            "branch": self.branch,
            "l_window": self.l_window.to_dict() if self.l_window else None,
        }


@dataclass(frozen=True)
class KappaRoots:
    kappa_1: float
    kappa_2: float
    kappa_star: float


def _validate(K: float, alpha: float, beta: float) -> None:
    if not K > 1:
        raise PreconditionError(f"K must exceed 1, got {K}")
    if not alpha > 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    if not beta >= 0:
        raise PreconditionError(f"beta must be non-negative, got {beta}")


def branch_threshold(K: float) -> float:
    """alpha below 2(1 - 1/K) uses the quadratic bound, above it the product bound."""
    return 2.0 * (1.0 - 1.0 / K)


def quadratic_bound(K: float, alpha: float) -> float:
    return 0.25 * (alpha * K) ** 2


def product_bound(K: float, alpha: float) -> float:
    return (K - 1.0) * (alpha * K - K + 1.0)


def l_window(K: float, alpha: float, beta: float) -> LWindow | None:
    """[½αK − ½√(α²K² − 4β), K − 1), or None when the discriminant is negative or the interval empty."""
    quarter = quadratic_bound(K, alpha)
    if beta > quarter:
        return None
    lo = 0.5 * alpha * K - 0.5 * math.sqrt(4.0 * (quarter - beta))
    window = LWindow(lo, K - 1.0)
    return None if window.empty else window


def _region(K: float, alpha: float, beta: float, strict_quadratic: bool, slack: float = 0.0) -> RegionVerdict:
    _validate(K, alpha, beta)
    if alpha < branch_threshold(K):
        branch = "quadratic"
        bound = quadratic_bound(K, alpha)
        ok = beta < bound * (1.0 - slack) if strict_quadratic else beta <= bound
    else:
        branch = "product"
        bound = product_bound(K, alpha)
        ok = beta < bound * (1.0 - slack)
    return RegionVerdict(ok, branch if ok else "none", branch, l_window(K, alpha, beta))


def check_bounded_region(K: float, alpha: float, beta: float) -> RegionVerdict:
    return _region(K, alpha, beta, strict_quadratic=False)


def check_compact_region(K: float, alpha: float, beta: float) -> RegionVerdict:
    return _region(K, alpha, beta, strict_quadratic=True)


def compute_kappa(kappa_h: float, kappa_f: float, kappa_g: float) -> KappaRoots:
    """Roots of κ² − κ_h κ_f κ − κ_g = 0; κ_star has the smaller modulus (ties go to κ₁)."""
    p = kappa_h * kappa_f
    disc = p * p + 4.0 * kappa_g
    if disc < 0:
        raise NoRealRootError(
            f"kappa_h^2 kappa_f^2 + 4 kappa_g = {disc!r} < 0: no real asymptotic slope",
            discriminant=disc,
        )
    root = math.sqrt(disc)
    # the root sharing p's sign is computed directly, the other via Vieta
    if p >= 0:
        k1 = 0.5 * (p + root)
        k2 = -kappa_g / k1 if k1 != 0.0 else 0.5 * (p - root)
    else:
        k2 = 0.5 * (p - root)
        k1 = -kappa_g / k2 if k2 != 0.0 else 0.5 * (p + root)
    k1, k2 = k1 + 0.0, k2 + 0.0
    star = k1 if abs(k1) <= abs(k2) else k2
    return KappaRoots(k1, k2, star)


def check_linear_case(lam: float, mu: float) -> bool:
    """Region check for h = λx, f = x + a, g = μx (K = |λ|, α = 1, β = |μ|)."""
    if lam == 0:
        raise PreconditionError("lambda must be non-zero")
    a, m = abs(lam), abs(mu)
    closed_form = a > max(2.0, 2.0 * math.sqrt(m)) or (1.0 + m < a <= 2.0)
    if a <= 1.0:
        via_region = False
    else:
        via_region = check_compact_region(a, 1.0, m).verdict
    if closed_form != via_region:
        raise AssertionError(f"linear-case disagreement at lambda={lam!r}, mu={mu!r}")
    return closed_form


@dataclass
class ConditionReport:
    constants: dict[str, ConstantEstimate]
    bounded: RegionVerdict
    compact: RegionVerdict
    quadratic: bool
    product: bool
    strict_quadratic: bool
    l_window: LWindow | None
    g_bounded: bool
    kappa_roots: tuple[float, float] | None = None
    kappa_star: float | None = None
    kappa_bound: float | None = None
    kappa_within_bound: bool | None = None
    kappa_note: str | None = None
    applicable: list[str] = field(default_factory=list)
    default_L: float | None = None
    asymptotic_L: float | None = None
    warnings: list[str] = field(default_factory=list)

    def value(self, name: str) -> float | None:
        return self.constants[name].value

    def to_dict(self) -> dict[str, Any]:
        return {
            "constants": {name: est.to_dict() for name, est in self.constants.items()},
            "quadratic": self.quadratic,
            "product": self.product,
            "strict_quadratic": self.strict_quadratic,
            "bounded_region": self.bounded.to_dict(),
            "compact_region": self.compact.to_dict(),
            "L_window": self.l_window.to_dict() if self.l_window else None,
            "g_bounded": self.g_bounded,
            "kappa_roots": list(self.kappa_roots) if self.kappa_roots else None,
            "kappa_star": self.kappa_star,
            "kappa_bound": self.kappa_bound,
            "kappa_within_bound": self.kappa_within_bound,
            "kappa_note": self.kappa_note,
            "applicable": list(self.applicable),
            "default_L": self.default_L,
            "asymptotic_L": self.asymptotic_L,
            "warnings": list(self.warnings),
        }


def _expansion_constant(name: str, fn: Callable, spec: ProblemSpec, window, n: int) -> ConstantEstimate:
    if name in spec.constants:
        return ConstantEstimate(name, float(spec.constants[name]), spec.source_of(name))
    affine = getattr(fn, "affine", None)
    if affine is not None:
        return ConstantEstimate(name, abs(affine[0]), "affine", witness=(0.0, 1.0))
    est = expansion_bound(fn, window, n)
    return ConstantEstimate(name, est.lower, "heuristic", witness=est.witness)


def _lipschitz_constant(name: str, fn: Callable, spec: ProblemSpec, window, n: int) -> ConstantEstimate:
    if name in spec.constants:
        return ConstantEstimate(name, float(spec.constants[name]), spec.source_of(name))
    affine = getattr(fn, "affine", None)
    if affine is not None:
        return ConstantEstimate(name, abs(affine[0]), "affine")
    est = lipschitz_bounds(fn, window, n)
    return ConstantEstimate(name, est.upper_estimate, "heuristic", witness=est.witness)


def _bounded_on(values: np.ndarray, inner: np.ndarray) -> bool:
    return float(np.max(np.abs(values))) <= 1.5 * float(np.max(np.abs(values[inner]))) + 1e-12


def _growth_constant(name: str, fn: Callable, spec: ProblemSpec, window, n: int) -> ConstantEstimate:
    if name in spec.constants:
        return ConstantEstimate(name, float(spec.constants[name]), spec.source_of(name))
    affine = getattr(fn, "affine", None)
    if affine is not None:
        return ConstantEstimate(name, affine[0], "affine")
    growth = getattr(fn, "growth", None)
    if growth is not None:
        return ConstantEstimate(name, growth, "syntactic")
    xs = np.linspace(window[0], window[1], n)
    try:
        ys = np.asarray(fn(xs), dtype=float)
    except EvaluationError:
        return ConstantEstimate(name, None, "heuristic")
    inner = np.abs(xs) <= 0.5 * window[1]
    if _bounded_on(ys, inner):
        return ConstantEstimate(name, 0.0, "heuristic")
    slope = float(np.polyfit(xs, ys, 1)[0])
    if _bounded_on(ys - slope * xs, inner):
        return ConstantEstimate(name, slope, "heuristic")
    return ConstantEstimate(name, None, "heuristic")


def estimate_constants(spec: ProblemSpec, sample_n: int | None = None) -> ConditionReport:
    """Fill in K, α, β and the κ's, then evaluate every region condition."""
    n = sample_n or setting("SAMPLE_N")
    window = (-spec.window, spec.window)

    K = _expansion_constant("K", spec.h, spec, window, n)
    if not K.value > 1.0:
        raise HypothesisViolation(
            f"h is not uniformly expansive: K = {K.value!r} <= 1", hypothesis="expansive-h", witness=K.witness
        )
    alpha = _expansion_constant("alpha", spec.f, spec, window, n)
    if not alpha.value > 0.0:
        raise HypothesisViolation(
            f"f is not expansive: alpha = {alpha.value!r}", hypothesis="expansive-f", witness=alpha.witness
        )
    beta = _lipschitz_constant("beta", spec.g, spec, window, n)
    kappas = {
        "kappa_h": _growth_constant("kappa_h", spec.h, spec, window, n),
        "kappa_f": _growth_constant("kappa_f", spec.f, spec, window, n),
        "kappa_g": _growth_constant("kappa_g", spec.g, spec, window, n),
    }
    constants = {"K": K, "alpha": alpha, "beta": beta, **kappas}

    bounded = check_bounded_region(K.value, alpha.value, beta.value)
    compact = check_compact_region(K.value, alpha.value, beta.value)
    quadratic_branch = alpha.value < branch_threshold(K.value)
    report = ConditionReport(
        constants=constants,
        bounded=bounded,
        compact=compact,
        quadratic=quadratic_branch and beta.value <= quadratic_bound(K.value, alpha.value),
        product=(not quadratic_branch) and beta.value < product_bound(K.value, alpha.value),
        strict_quadratic=quadratic_branch and beta.value < quadratic_bound(K.value, alpha.value),
        l_window=bounded.l_window,
        g_bounded=kappas["kappa_g"].value == 0.0,
    )
    if report.l_window is not None:
        report.default_L = report.l_window.midpoint
        report.kappa_bound = report.l_window.lo

    kappa_values = [est.value for est in kappas.values()]
    if all(v is not None for v in kappa_values) and kappas["kappa_g"].value != 0.0:
        try:
            roots = compute_kappa(*kappa_values)
        except NoRealRootError as exc:
            report.kappa_note = exc.message
        else:
            report.kappa_roots = (roots.kappa_1, roots.kappa_2)
            if report.kappa_bound is not None:
                report.kappa_within_bound = abs(roots.kappa_star) <= report.kappa_bound
            if report.l_window is not None and abs(roots.kappa_star) < report.l_window.hi:
                report.kappa_star = roots.kappa_star
                report.asymptotic_L = max(report.l_window.midpoint, abs(roots.kappa_star))
            else:
                report.kappa_note = f"|kappa_star| = {abs(roots.kappa_star)!r} exceeds every admissible L"

    if bounded.verdict and report.g_bounded:
        report.applicable.append("bounded")
    if compact.verdict:
        report.applicable.append("compact")
    if bounded.verdict and report.asymptotic_L is not None:
        report.applicable.append("asymptotic")

    for est in constants.values():
        if est.heuristic and est.value is not None:
            report.warnings.append(f"{est.name} = {est.value:.6g} is a sampled estimate, not a certified bound")
    for message in report.warnings:
        logger.warning(message)
    logger.info(f"Conditions: K={K.value}, alpha={alpha.value}, beta={beta.value}, applicable={report.applicable}")
    return report


def region_table(k_values, alpha_min: float, alpha_max: float, n: int) -> pd.DataFrame:
    """Largest admissible β over an α grid for each K, with the active inequality."""
    rows = []
    for K in k_values:
        for alpha in np.linspace(alpha_min, alpha_max, n):
            alpha = float(alpha)
            if alpha < branch_threshold(K):
                rows.append((K, alpha, "quadratic", quadratic_bound(K, alpha), True))
            else:
                rows.append((K, alpha, "product", max(product_bound(K, alpha), 0.0), False))
    return pd.DataFrame(rows, columns=["K", "alpha", "branch", "beta_bound", "closed"])
