"""Multigrid solver for stationary distributions in tensor-train arithmetic.

The driver iterates V-cycles on the homogeneous system ``A x = 0`` where
``A`` is a conservative generator in Kronecker-sum form.  All iterates are
kept as truncated TT vectors; every level of the hierarchy stores its
operator as a Kronecker sum, so smoothing never requires assembling a
matrix.  The probability normalization ``sum(x) = 1`` is re-imposed once
per cycle, which pins the null-space component that plain residual
minimization leaves untouched.

Truncation is steered by a per-cycle relative tolerance derived from the
current residual, together with a hard rank cap.  The cap can grow by a
factor sqrt(2) when the iteration stalls while sitting at the cap, which
is the usual sign that the cap, not the cycle, limits progress.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hierarchy import GridHierarchy, GridLevel
from .kron import KroneckerSumOperator, kron_apply, triangular_split
from .tt import (
    TruncationPolicy,
    TTVector,
    tt_add,
    tt_apply_modewise,
    tt_dot,
    tt_effective_rank,
    tt_from_full,
    tt_norm,
    tt_ones,
    tt_round,
    tt_scale,
    tt_to_full,
    tt_zero,
)

SMOOTHERS = ("gmres", "gauss_seidel", "richardson")

#: relative singular-value window used when re-rounding for residual
#: evaluation; kept well below every convergence tolerance of interest
RESIDUAL_EPS = 1e-12

_COARSE_EXACT = TruncationPolicy(rel_tolerance=1e-14)


class SolverError(RuntimeError):
    """Raised when the iteration cannot continue (lost mass, bad config)."""


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the multigrid driver.

    ``truncation_eps`` fixes the relative rounding tolerance for all TT
    arithmetic; when left at None the tolerance follows the residual so
    that early cycles round coarsely and late cycles round tightly.
    """

    smoother: str = "gmres"
    nu_pre: int = 3
    nu_post: int = 3
    tolerance: float = 1e-7
    max_cycles: int = 60
    max_rank: int = 30
    truncation_eps: float | None = None
    adapt_ranks: bool = True
    rank_growth: float = math.sqrt(2.0)
    max_rank_ceiling: int | None = None
    stall_ratio: float = 0.6
    stagnation_ratio: float = 0.999
    stagnation_cycles: int = 3
    polish_cycles: int = 4
    inner_steps: int = 8
    inner_tol: float = 1e-7
    inner_restarts: int = 20
    inner_rank_factor: float = 2.0

    def __post_init__(self):
        if self.smoother not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.smoother!r}")
        if self.nu_pre < 0 or self.nu_post < 0 or self.nu_pre + self.nu_post == 0:
            raise ValueError("need at least one smoothing step per cycle")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_rank < 1:
            raise ValueError("max_rank must be at least 1")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be at least 1")
        if self.rank_growth <= 1.0:
            raise ValueError("rank_growth must exceed 1")
        if self.inner_steps < 1 or self.inner_restarts < 1:
            raise ValueError("inner solver needs at least one step and restart")
        if self.inner_rank_factor < 1.0:
            raise ValueError("inner_rank_factor must be at least 1")


@dataclass
class CycleRecord:
    cycle: int
    residual: float
    rank_cap: int
    max_rank: int
    eff_rank: float
    elapsed_seconds: float
    cap_increased: bool = False


@dataclass
class SolveReport:
    """Everything the driver observed, cycle by cycle."""

    records: list[CycleRecord] = field(default_factory=list)
    termination: str = "unknown"
    cycles_to_tolerance: int | None = None
    final_residual: float = math.nan
    final_max_rank: int = 0
    final_eff_rank: float = math.nan
    tolerance: float = math.nan
    hierarchy: dict = field(default_factory=dict)

    @property
    def total_cycles(self) -> int:
        return self.records[-1].cycle if self.records else 0

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    def to_json(self) -> dict:
        return {
            "termination": self.termination,
            "converged": self.converged,
            "cycles_to_tolerance": self.cycles_to_tolerance,
            "total_cycles": self.total_cycles,
            "final_residual": self.final_residual,
            "final_max_rank": self.final_max_rank,
            "final_eff_rank": self.final_eff_rank,
            "tolerance": self.tolerance,
            "hierarchy": self.hierarchy,
            "history": [
                {
                    "cycle": r.cycle,
                    "residual": r.residual,
                    "rank_cap": r.rank_cap,
                    "max_rank": r.max_rank,
                    "eff_rank": r.eff_rank,
                    "elapsed_seconds": r.elapsed_seconds,
                    "cap_increased": r.cap_increased,
                }
                for r in self.records
            ],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# schema=1\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["cycle", "residual", "rank_cap", "max_rank", "eff_rank", "elapsed_seconds"]
            )
            for r in self.records:
                writer.writerow(
                    [
                        r.cycle,
                        f"{r.residual:.17g}",
                        r.rank_cap,
                        r.max_rank,
                        f"{r.eff_rank:.17g}",
                        f"{r.elapsed_seconds:.6f}",
                    ]
                )


def residual_norm(
    op: KroneckerSumOperator, x: TTVector, rank_cap: int, eps: float = RESIDUAL_EPS
) -> float:
    """2-norm of A x, evaluated with a wide rounding window.

    The cap is four times the iteration cap so that the report never
    understates the residual because of its own truncation.
    """
    policy = TruncationPolicy(eps, 4 * rank_cap)
    return tt_norm(kron_apply(op, x, policy))


def _gmres_krylov(
    apply_fn: Callable[[TTVector], TTVector],
    b: TTVector,
    x0: TTVector | None,
    steps: int,
    policy: TruncationPolicy,
    rtol: float | None = None,
) -> TTVector:
    """GMRES with modified Gram-Schmidt in truncated TT arithmetic.

    Mirrors textbook full GMRES; every basis vector and the final update
    are rounded under ``policy``.  The least-squares problem on the small
    Hessenberg matrix is solved densely.  ``x0=None`` means a zero guess,
    which skips one operator application.
    """
    if steps <= 0:
        return x0.copy() if x0 is not None else tt_round(b, policy)
    if x0 is None:
        r0 = b
    else:
        r0 = tt_round(tt_add(b, tt_scale(apply_fn(x0), -1.0)), policy)
    beta = tt_norm(r0)
    if beta == 0.0:
        return x0.copy() if x0 is not None else tt_zero(b.dims)
    basis = [tt_scale(r0, 1.0 / beta)]
    h = np.zeros((steps + 1, steps))
    used = 0
    for j in range(steps):
        w = apply_fn(basis[j])
        for i in range(j + 1):
            h[i, j] = tt_dot(w, basis[i])
            w = tt_add(w, tt_scale(basis[i], -h[i, j]))
            if (i + 1) % 4 == 0:
                w = tt_round(w, policy)
        w = tt_round(w, policy)
        h[j + 1, j] = tt_norm(w)
        used = j + 1
        if h[j + 1, j] <= 1e-14 * beta:
            break
        basis.append(tt_scale(w, 1.0 / h[j + 1, j]))
        if rtol is not None:
            e1 = np.zeros(used + 1)
            e1[0] = beta
            y, *_ = np.linalg.lstsq(h[: used + 1, :used], e1, rcond=None)
            if np.linalg.norm(e1 - h[: used + 1, :used] @ y) <= rtol * beta:
                break
    e1 = np.zeros(used + 1)
    e1[0] = beta
    y, *_ = np.linalg.lstsq(h[: used + 1, :used], e1, rcond=None)
    x = x0.copy() if x0 is not None else tt_zero(b.dims)
    for i in range(used):
        x = tt_add(x, tt_scale(basis[i], y[i]))
        if (i + 1) % 4 == 0:
            x = tt_round(x, policy)
    return tt_round(x, policy)


@dataclass
class _LevelWorkspace:
    """Per-level material the smoothers need besides the operator."""

    op: KroneckerSumOperator
    forward: KroneckerSumOperator | None = None  # sweep operator for Gauss-Seidel

    @classmethod
    def build(cls, level: GridLevel, smoother: str) -> "_LevelWorkspace":
        forward = None
        if smoother == "gauss_seidel":
            # Both model families move work from later modes toward earlier
            # ones, so the trailing-major lower part is the downstream sweep;
            # the leading-major split leaves unimodular iteration eigenvalues.
            split = triangular_split(level.op, mode_major="trailing")
            forward = split.forward_operator()
        return cls(op=level.op, forward=forward)


def _solve_triangular(
    tri_apply,
    r: TTVector,
    config: SolverConfig,
    policy: TruncationPolicy,
) -> TTVector:
    """Approximate inverse of the sweep operator applied to ``r``.

    Restarted truncated GMRES: short restart bodies keep the Krylov basis
    cheap to round, and restarts stop once the inner tolerance is met, the
    truncation floor stalls progress, or the restart budget runs out.
    """
    beta0 = tt_norm(r)
    z = None
    res, res_norm = r, beta0
    for _ in range(config.inner_restarts):
        rtol = max(config.inner_tol * beta0 / res_norm, 1e-14)
        dz = _gmres_krylov(tri_apply, res, None, config.inner_steps, policy,
                           rtol=rtol)
        z = dz if z is None else tt_round(tt_add(z, dz), policy)
        res = tt_round(tt_add(r, tt_scale(tri_apply(z), -1.0)), policy)
        new_norm = tt_norm(res)
        stalled = new_norm >= 0.9 * res_norm
        res_norm = new_norm
        if res_norm <= config.inner_tol * beta0 or stalled:
            break
    return z


def _smooth(
    ws: _LevelWorkspace,
    x: TTVector,
    b: TTVector,
    steps: int,
    policy: TruncationPolicy,
    config: SolverConfig,
) -> TTVector:
    if steps == 0:
        return x
    apply_fn = lambda v: kron_apply(ws.op, v, policy)
    if config.smoother == "gmres":
        return _gmres_krylov(apply_fn, b, x, steps, policy)
    if config.smoother == "gauss_seidel":
        # the sweep's Krylov vectors carry more rank than the iterate, so
        # the inner solve rounds against an inflated cap; x returns to the
        # outer cap on the way out
        inner_policy = policy
        if policy.max_rank is not None:
            inner_policy = TruncationPolicy(
                policy.rel_tolerance,
                math.ceil(policy.max_rank * config.inner_rank_factor),
            )
        apply_wide = lambda v: kron_apply(ws.op, v, inner_policy)
        tri_apply = lambda v: kron_apply(ws.forward, v, inner_policy)
        for _ in range(steps):
            r = tt_round(tt_add(b, tt_scale(apply_wide(x), -1.0)), inner_policy)
            if tt_norm(r) == 0.0:
                return x
            z = _solve_triangular(tri_apply, r, config, inner_policy)
            x = tt_round(tt_add(x, z), policy)
        return x
    # damped Richardson; the bound on ||A|| keeps the step contractive
    tau = 1.0 / ws.op.norm_bound()
    for _ in range(steps):
        r = tt_add(b, tt_scale(apply_fn(x), -1.0))
        x = tt_round(tt_add(x, tt_scale(r, tau)), policy)
    return x


def coarsest_solve(dense: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solve on the coarsest level.

    The coarse operators inherit a one-dimensional null space from the
    generator, so a plain solve would be singular; lstsq picks the
    component in the row space, which is exactly what the correction
    needs.
    """
    sol, *_ = np.linalg.lstsq(dense, rhs, rcond=None)
    return sol


def _vcycle(
    hierarchy: GridHierarchy,
    workspaces: Sequence[_LevelWorkspace],
    lvl: int,
    x: TTVector,
    b: TTVector,
    policy: TruncationPolicy,
    config: SolverConfig,
) -> TTVector:
    if lvl == hierarchy.nlevels - 1:
        rhs = tt_to_full(b).ravel()
        sol = coarsest_solve(hierarchy.coarsest_dense, rhs)
        return tt_from_full(sol.reshape(b.dims), _COARSE_EXACT)
    level = hierarchy.levels[lvl]
    ws = workspaces[lvl]
    x = _smooth(ws, x, b, config.nu_pre, policy, config)
    r = tt_round(tt_add(b, tt_scale(kron_apply(ws.op, x, policy), -1.0)), policy)
    bc = tt_round(tt_apply_modewise(level.transfer.q, r), policy)
    ec = _vcycle(
        hierarchy,
        workspaces,
        lvl + 1,
        tt_zero(bc.dims),
        bc,
        policy,
        config,
    )
    correction = tt_apply_modewise(level.transfer.p, ec)
    x = tt_round(tt_add(x, correction), policy)
    return _smooth(ws, x, b, config.nu_post, policy, config)


def _normalize(x: TTVector, ones: TTVector) -> TTVector:
    s = tt_dot(x, ones)
    if abs(s) < 1e-300 or not math.isfinite(s):
        raise SolverError("iterate lost its probability mass during truncation")
    return tt_scale(x, 1.0 / s)


def bootstrap_initial_guess(
    hierarchy: GridHierarchy, policy: TruncationPolicy
) -> TTVector:
    """Initial iterate from the coarsest level, interpolated up.

    The coarsest generator is small enough for a dense SVD; its smallest
    right singular vector spans the null space, i.e. the coarse
    stationary distribution.  Interpolating that vector through the
    transfer chain lands far closer to the fine solution than a constant
    vector would.
    """
    _, _, vh = np.linalg.svd(hierarchy.coarsest_dense)
    vec = vh[-1]
    x = tt_from_full(vec.reshape(hierarchy.levels[-1].dims), _COARSE_EXACT)
    for level in reversed(hierarchy.levels[:-1]):
        x = tt_round(tt_apply_modewise(level.transfer.p, x), policy)
    ones = tt_ones(x.dims)
    size = int(np.prod(x.dims))
    s = tt_dot(x, ones)
    if abs(s) <= 1e-12 * tt_norm(x) * math.sqrt(size):
        x = tt_scale(ones, 1.0 / size)
        s = tt_dot(x, ones)
    return tt_scale(x, 1.0 / s)


def _cycle_eps(config: SolverConfig, prev_residual: float, anorm: float, xnorm: float) -> float:
    if config.truncation_eps is not None:
        return config.truncation_eps
    raw = 0.1 * prev_residual / (anorm * max(xnorm, 1e-300))
    return min(max(raw, 1e-14), 1e-4)


def _compress_converged(
    op: KroneckerSumOperator,
    x: TTVector,
    res: float,
    cap: int,
    config: SolverConfig,
    ones: TTVector,
) -> tuple[TTVector, float]:
    """Cut iterate ranks as far as the tolerance allows, with proof.

    Rounding by delta = 0.9 (tol - res) / ||A|| keeps the residual below
    tol by construction.  On top of that, lower rank caps are *tried*
    and kept only when the recomputed residual still clears the
    tolerance; this realizes exact low-rank solutions (product forms)
    without ever trusting an unverified truncation.
    """
    anorm = op.norm_bound()
    margin = config.tolerance - res
    if margin <= 0.0:
        return x, res
    delta_rel = 0.9 * margin / (anorm * tt_norm(x))
    best_x, best_res = x, res
    targets = [t for t in (1, 2, 3, 4, 6, 8, 12, 16, 24) if t < x.max_rank()]
    for target in targets:
        cand = tt_round(x, TruncationPolicy(delta_rel, target))
        cand = _normalize(cand, ones)
        cand_res = residual_norm(op, cand, cap)
        if cand_res < config.tolerance:
            return cand, cand_res
    cand = _normalize(tt_round(x, TruncationPolicy(delta_rel, None)), ones)
    cand_res = residual_norm(op, cand, cap)
    if cand_res < config.tolerance and cand.max_rank() <= best_x.max_rank():
        best_x, best_res = cand, cand_res
    return best_x, best_res


def _rank1_probe_residual(
    op: KroneckerSumOperator, x: TTVector, cap: int, ones: TTVector
) -> float:
    """Residual of the best rank-one truncation of the iterate."""
    probe = tt_round(x, TruncationPolicy(0.0, 1))
    try:
        probe = _normalize(probe, ones)
    except SolverError:
        return math.inf
    return residual_norm(op, probe, cap)


def solve_stationary(
    hierarchy: GridHierarchy,
    config: SolverConfig | None = None,
    progress=None,
) -> tuple[TTVector, SolveReport]:
    """Run multigrid cycles until the stationary residual clears tol.

    Returns the normalized iterate (entries sum to one) and a report
    with per-cycle residuals, ranks and timings.  The residual reported
    for cycle 0 belongs to the bootstrap guess.  ``progress``, when
    given, is called with every CycleRecord as it is recorded.
    """
    config = config or SolverConfig()
    op = hierarchy.levels[0].op
    anorm = op.norm_bound()
    cap = config.max_rank
    ceiling = (
        config.max_rank_ceiling
        if config.max_rank_ceiling is not None
        else 4 * config.max_rank
    )
    report = SolveReport(tolerance=config.tolerance, hierarchy=hierarchy.summary())
    ones = tt_ones(hierarchy.levels[0].dims)

    def record(rec: CycleRecord) -> None:
        report.records.append(rec)
        if progress is not None:
            progress(rec)

    t0 = time.perf_counter()
    x = bootstrap_initial_guess(hierarchy, TruncationPolicy(1e-14, cap))
    res = residual_norm(op, x, cap)
    record(
        CycleRecord(
            0, res, cap, x.max_rank(), tt_effective_rank(x), time.perf_counter() - t0
        )
    )

    workspaces = [
        _LevelWorkspace.build(level, config.smoother) for level in hierarchy.levels[:-1]
    ]
    zero_rhs = tt_zero(hierarchy.levels[0].dims)

    if hierarchy.nlevels == 1:
        # nothing to cycle over; the bootstrap already is the dense answer
        report.termination = "converged" if res < config.tolerance else "stagnated"
        report.cycles_to_tolerance = 0 if res < config.tolerance else None
        _finish(report, x, res)
        return x, report

    converged = res < config.tolerance
    if converged:
        report.cycles_to_tolerance = 0
    stall = 0
    cycle = 0
    prev = res
    while not converged and cycle < config.max_cycles:
        cycle += 1
        t0 = time.perf_counter()
        eps = _cycle_eps(config, prev, anorm, tt_norm(x))
        policy = TruncationPolicy(eps, cap)
        x = _vcycle(hierarchy, workspaces, 0, x, zero_rhs, policy, config)
        x = _normalize(x, ones)
        res = residual_norm(op, x, cap)
        grew = False
        if res < config.tolerance:
            confirm = residual_norm(op, x, 2 * cap)
            if confirm < config.tolerance:
                res = confirm
                converged = True
                report.cycles_to_tolerance = cycle
            else:
                res = confirm
        if not converged and config.adapt_ranks:
            at_cap = x.max_rank() >= cap
            stalled = res > config.stall_ratio * prev
            if at_cap and stalled and cap < ceiling:
                cap = min(ceiling, math.ceil(cap * config.rank_growth))
                grew = True
        if not converged:
            if res >= config.stagnation_ratio * prev and not grew:
                stall += 1
            else:
                stall = 0
        record(
            CycleRecord(
                cycle,
                res,
                cap,
                x.max_rank(),
                tt_effective_rank(x),
                time.perf_counter() - t0,
                cap_increased=grew,
            )
        )
        if not converged and stall >= config.stagnation_cycles:
            report.termination = "stagnated"
            _finish(report, x, res)
            return x, report
        prev = res

    if not converged:
        report.termination = "max_cycles"
        _finish(report, x, res)
        return x, report

    # converged: compress as far as the tolerance margin allows, running a
    # few extra polish cycles when a rank-one answer is within reach
    x, res = _compress_converged(op, x, res, cap, config, ones)
    polish = 0
    while (
        x.max_rank() > 1
        and polish < config.polish_cycles
        and cycle + 1 <= config.max_cycles + config.polish_cycles
    ):
        probe_res = _rank1_probe_residual(op, x, cap, ones)
        if probe_res < config.tolerance or probe_res > 256.0 * config.tolerance:
            break
        polish += 1
        cycle += 1
        t0 = time.perf_counter()
        eps = _cycle_eps(config, res, anorm, tt_norm(x))
        policy = TruncationPolicy(eps, cap)
        x = _vcycle(hierarchy, workspaces, 0, x, zero_rhs, policy, config)
        x = _normalize(x, ones)
        res = residual_norm(op, x, cap)
        record(
            CycleRecord(
                cycle,
                res,
                cap,
                x.max_rank(),
                tt_effective_rank(x),
                time.perf_counter() - t0,
            )
        )
        x, res = _compress_converged(op, x, res, cap, config, ones)

    report.termination = "converged"
    _finish(report, x, res)
    return x, report


def _finish(report: SolveReport, x: TTVector, res: float) -> None:
    report.final_residual = res
    report.final_max_rank = x.max_rank()
    report.final_eff_rank = tt_effective_rank(x)
