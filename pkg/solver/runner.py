"""
Dispatch of a RunConfig to the solver pipelines and the artifacts each run
writes under ``config.out``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serializers
from .conditions import estimate_constants, region_table
from .conf import setting
from .contraction import interior_distance, refinement_constant, solve_asymptotic, solve_bounded
from .exprlang import to_source
from .funcspace import SampledFunction
from .piecewise import construct, validate_hypotheses
from .runconfig import RunConfig
from .truncation import solve_compact
from .verify import check_invariants, residual

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    mode: str
    report: dict
    artifacts: dict[str, Path] = field(default_factory=dict)
    headline: list[str] = field(default_factory=list)


def _functions(config: RunConfig) -> dict:
    return {name: {"source": fn.source, "parsed": to_source(fn.expr)} for name, fn in sorted(config.functions.items())}


def _grid_probes(solution: SampledFunction, config: RunConfig):
    if config.probes is None:
        return None
    half = 0.5 * solution.window[1]
    return np.union1d(np.linspace(-half, half, config.probes), solution.nodes)



def _write_grid_run(config: RunConfig, result: RunResult, solution: SampledFunction, state, spec) -> None:
    out = config.out
    result.artifacts["solution"] = serializers.write_sampled(out / "solution.csv", solution)
    result.artifacts["trace"] = serializers.write_frame(out / "trace.csv", state.to_frame())
    report = residual(solution, spec, probes=_grid_probes(solution, config))
    report.checks = check_invariants(solution, spec, L=state.L)
    result.artifacts["residuals"] = serializers.write_frame(out / "residuals.csv", report.frame)
    result.report["picard"] = state.to_dict()
    result.report["residual"] = report.to_dict()
    result.headline += [
        f"Converged in {state.iteration} iterations (q = {state.q:.4f}, L = {state.L:.6g})",
        f"Interior residual {report.sup_residual_interior:.3e}, full {report.sup_residual_full:.3e}, "
        f"at collocation points {report.collocation['sup_residual_interior']:.3e}",
    ]


def _extras(config: RunConfig, result: RunResult, solution: SampledFunction, solve) -> None:
    """Optional second solves: another budget L and a refined grid."""
    if config.compare_l is not None:
        other, _ = solve(L=config.compare_l, grid_n=config.grid_n)
        result.report["compare_l"] = {
            "L": config.compare_l,
            "interior_distance": interior_distance(solution, other, config.window),
        }
    if config.refine:
        refined, _ = solve(L=config.L, grid_n=2 * config.grid_n - 1)
        result.report["refinement"] = {
            "grid_n": 2 * config.grid_n - 1,
            "constant": refinement_constant(solution, refined, config.grid_n),
        }


def _check(config: RunConfig, result: RunResult) -> None:
    conditions = estimate_constants(config.problem())
    result.report["conditions"] = conditions.to_dict()
    result.headline.append(f"Applicable: {', '.join(conditions.applicable) or 'none'}")


def _solve_bounded(config: RunConfig, result: RunResult) -> None:
    spec = config.problem()
    conditions = estimate_constants(spec)
    result.report["conditions"] = conditions.to_dict()

    def solve(L, grid_n):
        return solve_bounded(spec, L=L, tol=config.tol, max_iter=config.max_iter, window=config.window,
                             grid_n=grid_n, report=conditions)

    solution, state = solve(config.L, config.grid_n)
    _write_grid_run(config, result, solution, state, spec)
    _extras(config, result, solution, solve)


def _solve_asymptotic(config: RunConfig, result: RunResult) -> None:
    spec = config.problem()
    conditions = estimate_constants(spec)
    result.report["conditions"] = conditions.to_dict()

    def solve(L, grid_n):
        solution, state, _ = solve_asymptotic(spec, tol=config.tol, max_iter=config.max_iter, window=config.window,
                                              grid_n=grid_n, L=L, report=conditions)
        return solution, state

    solution, state, kappa_star = solve_asymptotic(spec, tol=config.tol, max_iter=config.max_iter,
                                                   window=config.window, grid_n=config.grid_n, L=config.L,
                                                   report=conditions)
    result.report["kappa_star"] = kappa_star
    _write_grid_run(config, result, solution, state, spec)
    _extras(config, result, solution, solve)
    result.headline.append(f"kappa_star = {kappa_star!r}")


def _solve_compact(config: RunConfig, result: RunResult) -> None:
    spec = config.problem()
    compact = solve_compact(spec, config.interval, tol=config.tol, max_iter=config.max_iter, window=config.window,
                            grid_n=config.grid_n, L=config.L)
    a, b = config.interval
    out = config.out
    result.report["conditions"] = estimate_constants(spec).to_dict()
    result.report["truncated_conditions"] = compact.report.to_dict()
    result.report["plan"] = compact.plan.to_dict()
    result.report["picard"] = compact.state.to_dict()
    result.artifacts["solution"] = serializers.write_sampled(out / "solution.csv", compact.restricted)
    result.artifacts["trace"] = serializers.write_frame(out / "trace.csv", compact.state.to_frame())

    # the original equation holds on I, where the truncated g agrees with g
    nodes = compact.full.nodes
    probes = np.union1d(np.linspace(a, b, config.probes or setting("PROBES")), nodes[(nodes >= a) & (nodes <= b)])
    report = residual(compact.full, spec, probes=probes, interior=(a, b))
    result.artifacts["residuals"] = serializers.write_frame(out / "residuals.csv", report.frame)
    result.report["residual"] = report.to_dict()
    result.headline += [
        f"Plan: omega = {compact.plan.omega:.6g}, beta_tilde = {compact.plan.beta_tilde:.6g}",
        f"Residual of the original equation on [{a}, {b}]: {report.sup_residual_full:.3e}",
    ]


def _construct(config: RunConfig, result: RunResult) -> None:
    spec = config.problem()
    problem = validate_hypotheses(spec, config.x1, x_target=config.x_target, x2=config.x2)
    shape = config.seed_shape()
    seeds = {"shape": "linear"} if shape is None else {"phi0": config.seed_phi0, "phi1": config.seed_phi1}
    solution = construct(problem, shape=shape, x_target_neg=config.x_target_neg, seeds=seeds)

    out = config.out
    result.artifacts["solution"] = serializers.write_frame(out / "solution.csv", solution.to_frame())
    result.artifacts["knots"] = serializers.write_json(out / "knots.json", solution.knots)
    probes = None
    if config.probes is not None:
        lo, hi = solution.domain
        probes = np.union1d(np.linspace(lo, hi, config.probes), solution.knots[:-1])
    report = residual(solution, spec, probes=probes)
    report.checks = check_invariants(solution, spec)
    result.artifacts["residuals"] = serializers.write_frame(out / "residuals.csv", report.frame)
    result.report["construction"] = solution.summary()
    result.report["residual"] = report.to_dict()
    lo, hi = solution.domain
    result.headline += [
        f"Built {len(solution.branches)} branches on [{lo:.6g}, {hi:.6g}]",
        f"Residual {report.sup_residual_full:.3e} over {report.probe_count} probes ({report.skipped} skipped)",
    ]


def _verify(config: RunConfig, result: RunResult) -> None:
    spec = config.problem()
    solution = serializers.read_sampled(config.solution)
    report = residual(solution, spec, probes=_grid_probes(solution, config))
    report.checks = check_invariants(solution, spec, L=config.L)
    result.artifacts["residuals"] = serializers.write_frame(config.out / "residuals.csv", report.frame)
    result.report["residual"] = report.to_dict()
    result.headline.append(f"Interior residual {report.sup_residual_interior:.3e} at worst x = {report.worst_x!r}")


def _region(config: RunConfig, result: RunResult) -> None:
    table = region_table(config.k_values, config.alpha_min, config.alpha_max, config.n)
    result.artifacts["region"] = serializers.write_frame(config.out / "region.csv", table)
    result.report["region"] = {"rows": len(table), "k_values": list(config.k_values)}
    result.headline.append(f"Tabulated {len(table)} (K, alpha) points")


PIPELINES = {
    "check": _check,
    "solve-bounded": _solve_bounded,
    "solve-compact": _solve_compact,
    "solve-asymptotic": _solve_asymptotic,
    "construct": _construct,
    "verify": _verify,
    "region": _region,
}


def run(config: RunConfig) -> RunResult:
    """Run one pipeline and write its artifacts; solver errors propagate as IterfunError."""
    result = RunResult(config.mode, {"config": config.to_dict(), "functions": _functions(config)})
    logger.info(f"Running {config.mode} into {config.out}")
    PIPELINES[config.mode](config, result)
    result.artifacts["report"] = serializers.write_json(config.out / "report.json", result.report)
    return result
