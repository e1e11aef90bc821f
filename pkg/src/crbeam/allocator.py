"""Primal decomposition of the aggregate interference budget.

A master loop divides the total tolerable interference among links: each
master iteration runs one block-coordinate-ascent cycle of budgeted
per-link subproblems (extracting the budget multipliers from the linear
duals), then steps the budgets along the multipliers and projects back onto
the budget simplex. Intermediate iterates stay feasible throughout, which
is the point of primal (rather than dual) decomposition for on-line use.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bca import BCAOptions, IterationTrace, _record_cycle
from .linalg import hermitian_sqrt, psd_clip
from .lmi import RobustConstraintSpec, SolverFailure, SubproblemSpec, solve_subproblem
from .mse import (
    CovarianceProfile,
    _interference_plus_noise,
    gradient_from_bv,
    link_bv,
    optimal_receiver,
    utility,
    worst_case_interference,
)
from .scenario import ChannelSet


class BudgetCollapse(RuntimeWarning):
    """All multipliers were zero for several consecutive master steps."""


@dataclass
class AllocatorOptions:
    bca: BCAOptions = field(default_factory=BCAOptions)
    s0: float | None = None          # step size scale, default iota_max / 10
    max_masters: int = 100
    max_stall: int = 5               # zero-multiplier steps before reporting
    inner_to_convergence: bool = False  # ablation: full BCA per master step


@dataclass
class BudgetState:
    iota: np.ndarray    # per-link budgets, watts
    lam: np.ndarray     # multipliers of t_k <= iota_k
    ell: int = 0
    step: float = 0.0


def project_simplex(v, iota_max: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x <= iota_max}.

    If clamping at zero already meets the sum bound that clamp is the
    projection; otherwise project onto the face sum x = iota_max with the
    standard sorting/threshold rule.
    """
    if iota_max <= 0:
        raise ValueError("iota_max must be > 0")
    v = np.asarray(v, dtype=float)
    w = np.clip(v, 0.0, None)
    if w.sum() <= iota_max:
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = j[u - (css - iota_max) / j > 0][-1]
    theta = (css[rho - 1] - iota_max) / rho
    return np.clip(v - theta, 0.0, None)


def master_step(state: BudgetState, lambdas, iota_max: float,
                s0: float) -> BudgetState:
    """Subgradient projection update of the budgets with a diminishing step
    s(ell) = s0 / sqrt(ell).

    The multiplier vector is sup-normalized before stepping: lambda carries
    units of utility per watt (huge numbers against budgets of order
    iota_max), so a raw step would leave the simplex in one jump and the
    projection would collapse the allocation. With the normalized direction
    the largest-multiplier link moves by exactly s(ell) watts.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0):
        raise ValueError("multipliers must be >= 0")
    ell = state.ell + 1
    step = s0 / np.sqrt(ell)
    peak = float(np.max(lambdas))
    direction = lambdas / peak if peak > 0 else np.zeros_like(lambdas)
    iota = project_simplex(state.iota + step * direction, iota_max)
    return BudgetState(iota=iota, lam=lambdas, ell=ell, step=step)


def _budgeted_cycle(ch: ChannelSet, prof: CovarianceProfile,
                    iota: np.ndarray, opts: BCAOptions, trace: IterationTrace,
                    cycle: int):
    """One Gauss-Seidel sweep of budgeted per-link updates; returns the
    extracted budget multipliers."""
    lambdas = np.zeros(ch.K)
    for k in range(ch.K):
        B, V = [], []
        for j in range(ch.K):
            b, v = link_bv(ch, prof, j)
            B.append(b)
            V.append(v)
        include = [np.linalg.norm(ch.H[j][k]) >= opts.neighbor_threshold
                   for j in range(ch.K)]
        include[k] = False
        D = gradient_from_bv([ch.H[j][k] for j in range(ch.K)], B, V, k,
                             include=include)
        r_kk = _interference_plus_noise(ch, prof, k)
        proximal = opts.mode == "proximal"
        spec = SubproblemSpec(
            k=k, mode="budgeted_P11", D=D, H=ch.H[k][k],
            R_half=hermitian_sqrt(r_kk), p_max=float(ch.p_max[k]),
            robust=[RobustConstraintSpec(G_hat=ch.G_hat[0][k],
                                         eps=float(ch.eps[0, k]),
                                         iota=float(iota[k]))],
            prev_Q=prof.Q[k].copy() if proximal else None,
            tau=opts.tau_for(k) if proximal else None)
        try:
            res = solve_subproblem(spec, opts.sdp)
        except SolverFailure as exc:
            raise SolverFailure(f"master cycle {cycle}, link {k}: {exc}") from exc
        prof.Q[k] = psd_clip(res.Q)
        lambdas[k] = max(res.lambdas[0], 0.0)
        wc = worst_case_interference(ch.G_hat[0][k], float(ch.eps[0, k]),
                                     prof.Q[k])[0]
        trace.audit.append((cycle, k, 0, float(np.trace(prof.Q[k]).real),
                            wc, float(iota[k])))
    return lambdas


def run_primal_decomposition(ch: ChannelSet, iota_max: float,
                             opts: AllocatorOptions | None = None):
    """Aggregate-budget optimization: inner budgeted BCA cycles interleaved
    with master subgradient-projection updates of the per-link budgets.

    Returns (profile, budget state, trace); the trace carries per-master
    rows with the budgets and multipliers appended.
    """
    if iota_max <= 0:
        raise ValueError("iota_max must be > 0")
    if ch.num_pu != 1:
        raise ValueError("aggregate budget allocation expects a single PU "
                         "receiver (BudgetState is per link)")
    opts = opts or AllocatorOptions()
    opts.bca.validate()
    s0 = opts.s0 if opts.s0 is not None else iota_max / 10.0

    state = BudgetState(iota=np.full(ch.K, iota_max / ch.K),
                        lam=np.zeros(ch.K))
    prof = CovarianceProfile.zeros(ch)
    trace = IterationTrace()
    prev_u = np.zeros(ch.K)
    stall = 0
    trace.budget_collapse = False

    for ell in range(1, opts.max_masters + 1):
        t0 = time.perf_counter()
        inner = 0
        while True:
            inner += 1
            lambdas = _budgeted_cycle(ch, prof, state.iota, opts.bca, trace,
                                      cycle=ell)
            if not opts.inner_to_convergence or inner >= 25:
                break
            rep_inner = utility(ch, prof)
            if inner > 1 and rep_inner.sum_u - prev_inner_u < opts.bca.upsilon:
                break
            prev_inner_u = rep_inner.sum_u

        rep = utility(ch, prof)
        _record_cycle(trace, ch, prof, rep, ell,
                      time.perf_counter() - t0, float("nan"))
        for k in range(ch.K):
            trace.rows[-1][f"iota_{k}"] = state.iota[k]
            trace.rows[-1][f"lambda_{k}"] = lambdas[k]

        done = bool(np.all(rep.u - prev_u < opts.bca.upsilon)) and ell > 1
        prev_u = rep.u.copy()

        state = master_step(state, lambdas, iota_max, s0)

        if np.all(lambdas == 0.0):
            stall += 1
            if stall >= opts.max_stall and not done:
                trace.budget_collapse = True
                warnings.warn("all budget multipliers zero for "
                              f"{stall} consecutive master steps",
                              BudgetCollapse, stacklevel=2)
        else:
            stall = 0
        if done:
            trace.converged = True
            break

    optimal_receiver(ch, prof)
    return prof, state, trace
