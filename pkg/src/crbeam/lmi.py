"""Conversion of per-link subproblems into real standard-form SDPs.

Builds the S-procedure interference LMI, the Schur-complement MSE epigraph,
the proximal regularization block, power/positivity rows, and the budgeted
interference constraint, over a real parameterization of the Hermitian
covariance (diagonal entries plus re/im off-diagonal pairs). Complex LMIs
pass through the real embedding; dual matrices map back by block averaging.

Internal scaling (transparent to callers): each robust constraint is
normalized by gamma^2 = ||G_hat||_F^2 (channel, radius, and limit scaled
together, which leaves the constraint set unchanged), and the MSE epigraph
block is congruence-scaled by 1/sqrt(lambda_max(R)). Extraction helpers
undo the scalings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian_eig, hermitianize, kron, real_embedding, real_unembedding, vec
from .sdp import SDPBlock, SDPProblem, SDPSolution, SolveOptions, solve


class InconsistentSpec(ValueError):
    """A SubproblemSpec is missing a mode-required field."""


class SolverFailure(RuntimeError):
    """A per-link SDP solve did not reach optimality."""


@dataclass
class RobustConstraintSpec:
    """Worst-case interference constraint data for one PU receiver.

    iota is the fixed per-link limit in plain/proximal modes; in budgeted
    mode it bounds the auxiliary interference variable t.
    """

    G_hat: np.ndarray
    eps: float
    iota: float


@dataclass
class SubproblemSpec:
    k: int
    mode: str  # plain_P5 | proximal_P6 | budgeted_P11 | linear
    D: np.ndarray
    H: np.ndarray | None
    R_half: np.ndarray | None
    p_max: float
    robust: list
    prev_Q: np.ndarray | None = None
    tau: float | None = None

    def validate(self) -> None:
        if self.mode not in ("plain_P5", "proximal_P6", "budgeted_P11", "linear"):
            raise InconsistentSpec(f"unknown mode {self.mode!r}")
        if self.p_max < 0:
            raise InconsistentSpec("p_max must be >= 0")
        if self.mode == "proximal_P6":
            if self.prev_Q is None:
                raise InconsistentSpec("proximal mode requires prev_Q")
            if self.tau is None or self.tau <= 0:
                raise InconsistentSpec("proximal mode requires tau > 0")
        if self.mode != "linear" and (self.H is None or self.R_half is None):
            raise InconsistentSpec(f"mode {self.mode} requires H and R_half")
        for r in self.robust:
            if r.eps < 0:
                raise InconsistentSpec("eps must be >= 0")


def hermitian_basis(dim: int):
    """Real parameterization of Hermitian dim x dim matrices.

    Order: dim diagonal entries, then (re, im) pairs for each m < n.
    """
    out = []
    for a in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[a, a] = 1.0
        out.append(e)
    for a in range(dim):
        for b in range(a + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[a, b] = e[b, a] = 1.0
            out.append(e)
            e = np.zeros((dim, dim), dtype=complex)
            e[a, b] = 1j
            e[b, a] = -1j
            out.append(e)
    return out


def hermitian_from_params(x: np.ndarray, dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[np.diag_indices(dim)] = x[:dim]
    i = dim
    for a in range(dim):
        for b in range(a + 1, dim):
            m[a, b] = x[i] + 1j * x[i + 1]
            m[b, a] = x[i] - 1j * x[i + 1]
            i += 2
    return m


def s_procedure_lmi(G_hat: np.ndarray, eps: float, n: int,
                    q_idx: np.ndarray | None, theta_idx: int,
                    iota: float | None = None, t_idx: int | None = None,
                    Q_fixed: np.ndarray | None = None) -> np.ndarray:
    """Complex stack of the (L*M + 1)-dimensional S-procedure LMI.

    Entry 0 is the constant matrix, entry 1+i the coefficient of variable i.
    Exactly one of iota (fixed limit in the corner) or t_idx (budget
    variable in the corner) must be given. With Q_fixed the covariance is
    folded into the constant part instead of carrying q coefficients.
    """
    L, M = G_hat.shape
    d = L * M + 1
    stack = np.zeros((n + 1, d, d), dtype=complex)

    def fill(target, Qmat):
        target[:L * M, :L * M] += -kron(np.eye(L), Qmat)
        v = vec(Qmat @ G_hat.conj().T)
        target[:L * M, -1] += -v
        target[-1, :L * M] += -v.conj()
        target[-1, -1] += -np.trace(G_hat @ Qmat @ G_hat.conj().T).real

    if Q_fixed is not None:
        fill(stack[0], Q_fixed)
    else:
        basis = hermitian_basis(M)
        for i, e in enumerate(basis):
            fill(stack[1 + q_idx[i]], e)
    stack[1 + theta_idx, :L * M, :L * M] += np.eye(L * M)
    stack[1 + theta_idx, -1, -1] += -eps ** 2
    if t_idx is not None:
        stack[1 + t_idx, -1, -1] += 1.0
    else:
        stack[0, -1, -1] += iota
    return stack


def mse_epigraph_lmi(H: np.ndarray, R_half: np.ndarray, n: int,
                     q_idx: np.ndarray | None, T_idx: np.ndarray,
                     c_scale: float = 1.0,
                     Q_fixed: np.ndarray | None = None) -> np.ndarray:
    """Complex stack of [[HQH^H + R, R^(1/2)], [R^(1/2), T]] >= 0, with the
    top rows congruence-scaled by c_scale."""
    N = R_half.shape[0]
    d = 2 * N
    stack = np.zeros((n + 1, d, d), dtype=complex)
    R = R_half @ R_half
    stack[0, :N, :N] = c_scale ** 2 * R
    stack[0, :N, N:] = c_scale * R_half
    stack[0, N:, :N] = c_scale * R_half
    if Q_fixed is not None:
        stack[0, :N, :N] += c_scale ** 2 * (H @ Q_fixed @ H.conj().T)
    else:
        M = H.shape[1]
        for i, e in enumerate(hermitian_basis(M)):
            stack[1 + q_idx[i], :N, :N] = c_scale ** 2 * (H @ e @ H.conj().T)
    for j, e in enumerate(hermitian_basis(N)):
        stack[1 + T_idx[j], N:, N:] = e
    return stack


def proximal_lmi(prev_Q: np.ndarray, n: int, q_idx: np.ndarray | None,
                 Y_idx: np.ndarray,
                 Q_fixed: np.ndarray | None = None) -> np.ndarray:
    """Complex stack of [[I, Q - prev_Q], [Q - prev_Q, Y]] >= 0."""
    M = prev_Q.shape[0]
    d = 2 * M
    stack = np.zeros((n + 1, d, d), dtype=complex)
    stack[0, :M, :M] = np.eye(M)
    delta0 = (Q_fixed - prev_Q) if Q_fixed is not None else -prev_Q
    stack[0, :M, M:] = delta0
    stack[0, M:, :M] = delta0.conj().T
    if Q_fixed is None:
        for i, e in enumerate(hermitian_basis(M)):
            stack[1 + q_idx[i], :M, M:] = e
            stack[1 + q_idx[i], M:, :M] = e
    for j, e in enumerate(hermitian_basis(M)):
        stack[1 + Y_idx[j], M:, M:] = e
    return stack


def _embed_stack(stack: np.ndarray) -> SDPBlock:
    """Real-embed a complex stack and compress to its active variables."""
    n = stack.shape[0] - 1
    f0 = real_embedding(hermitianize(stack[0]))
    active = [i for i in range(n)
              if np.abs(stack[1 + i]).max() > 0.0]
    F = np.array([real_embedding(hermitianize(stack[1 + i])) for i in active]) \
        if active else np.zeros((0,) + f0.shape)
    return SDPBlock(size=f0.shape[0], var_idx=np.array(active, dtype=int),
                    F0=f0, F=F)


@dataclass
class AssembledSubproblem:
    """SDPProblem plus the bookkeeping to map solutions back."""

    problem: SDPProblem
    spec: SubproblemSpec
    M: int
    q_idx: np.ndarray
    theta_idx: list
    T_idx: np.ndarray | None
    Y_idx: np.ndarray | None
    t_idx: list
    gamma2: list
    lambda_rows: list = field(default_factory=list)
    power_row: int = -1

    def extract_Q(self, sol: SDPSolution) -> np.ndarray:
        return hermitian_from_params(sol.x[self.q_idx], self.M)

    def extract_T_trace(self, sol: SDPSolution) -> float:
        if self.T_idx is None:
            return 0.0
        t = hermitian_from_params(sol.x[self.T_idx],
                                  int(np.sqrt(len(self.T_idx))))
        return float(np.trace(t).real)

    def extract_Y_trace(self, sol: SDPSolution) -> float:
        if self.Y_idx is None:
            return 0.0
        y = hermitian_from_params(sol.x[self.Y_idx], self.M)
        return float(np.trace(y).real)

    def extract_t(self, sol: SDPSolution) -> list:
        return [float(sol.x[ti] * g2) for ti, g2 in zip(self.t_idx, self.gamma2)]

    def extract_lambdas(self, sol: SDPSolution) -> list:
        """Budget multipliers d p~/d iota, in 1/watt-free original units."""
        return [float(sol.linear_duals[row] / g2)
                for row, g2 in zip(self.lambda_rows, self.gamma2)]

    def robust_block_duals(self, sol: SDPSolution, block_offset: int):
        """Complex Hermitian duals of the robust LMI blocks (block averaging
        of the embedded real duals)."""
        return [real_unembedding(z)
                for z in sol.block_duals[block_offset:]]


def assemble(spec: SubproblemSpec) -> AssembledSubproblem:
    """Build the real standard-form SDP for one link update.

    Variables: Hermitian Q parameters, one theta per PU with eps > 0,
    Hermitian T parameters (epigraph of the trace-inverse), Hermitian Y
    parameters (proximal mode), and one scalar t per PU (budgeted mode).
    Constraints: Q >= 0, Tr Q <= p_max, the per-PU robust constraints
    (S-procedure LMI, or the nominal trace row when eps = 0), the MSE
    epigraph LMI, the proximal block, and t bounds. Objective:
    Tr T - Tr{D^H Q} (+ Tr Y / (2 tau)).
    """
    spec.validate()
    M = spec.D.shape[0] if spec.mode == "linear" or spec.H is None \
        else spec.H.shape[1]
    budgeted = spec.mode == "budgeted_P11"
    proximal = spec.mode == "proximal_P6"
    linear_mode = spec.mode == "linear"

    nq = M * M
    q_idx = np.arange(nq)
    pos = nq
    theta_idx = []
    for r in spec.robust:
        if r.eps > 0:
            theta_idx.append(pos)
            pos += 1
        else:
            theta_idx.append(None)
    if linear_mode:
        T_idx = None
    else:
        N = spec.R_half.shape[0]
        T_idx = np.arange(pos, pos + N * N)
        pos += N * N
    if proximal:
        Y_idx = np.arange(pos, pos + nq)
        pos += nq
    else:
        Y_idx = None
    t_idx = []
    if budgeted:
        for _ in spec.robust:
            t_idx.append(pos)
            pos += 1
    n = pos

    qbasis = hermitian_basis(M)

    # objective
    c = np.zeros(n)
    for i, e in enumerate(qbasis):
        c[q_idx[i]] = -float(np.trace(spec.D.conj().T @ e).real)
    if T_idx is not None:
        c[T_idx[:spec.R_half.shape[0]]] = 1.0  # diagonal params of T
    if proximal:
        c[Y_idx[:M]] = 1.0 / (2.0 * spec.tau)

    blocks = []
    # Q >= 0
    qstack = np.zeros((n + 1, M, M), dtype=complex)
    for i, e in enumerate(qbasis):
        qstack[1 + q_idx[i]] = e
    blocks.append(_embed_stack(qstack))

    # MSE epigraph
    if not linear_mode:
        lam_r = hermitian_eig(spec.R_half @ spec.R_half)[0][0]
        c_scale = 1.0 / np.sqrt(max(lam_r, 1e-300))
        blocks.append(_embed_stack(mse_epigraph_lmi(
            spec.H, spec.R_half, n, q_idx, T_idx, c_scale=c_scale)))

    # proximal block
    if proximal:
        blocks.append(_embed_stack(proximal_lmi(spec.prev_Q, n, q_idx, Y_idx)))

    lin_rows = []
    lin_b = []
    # power: Tr Q <= p_max, scaled to order one
    pscale = max(spec.p_max, 1e-300)
    row = np.zeros(n)
    row[q_idx[:M]] = 1.0 / pscale  # only diagonal params carry trace
    power_row = len(lin_rows)
    lin_rows.append(row)
    lin_b.append(spec.p_max / pscale)

    gamma2 = []
    lambda_rows = []
    for p, r in enumerate(spec.robust):
        g2 = float(np.linalg.norm(r.G_hat) ** 2)
        if g2 <= 0.0:
            g2 = 1.0
        gamma2.append(g2)
        g_scaled = r.G_hat / np.sqrt(g2)
        eps_scaled = r.eps / np.sqrt(g2)
        iota_scaled = r.iota / g2
        if r.eps > 0:
            blocks.append(_embed_stack(s_procedure_lmi(
                g_scaled, eps_scaled, n, q_idx, theta_idx[p],
                iota=None if budgeted else iota_scaled,
                t_idx=t_idx[p] if budgeted else None)))
            row = np.zeros(n)
            row[theta_idx[p]] = -1.0  # theta >= 0
            lin_rows.append(row)
            lin_b.append(0.0)
        else:
            # nominal constraint: Tr{G Q G^H} <= iota (or <= t)
            row = np.zeros(n)
            for i, e in enumerate(qbasis):
                row[q_idx[i]] = float(np.trace(
                    g_scaled @ e @ g_scaled.conj().T).real)
            if budgeted:
                row[t_idx[p]] = -1.0
                lin_rows.append(row)
                lin_b.append(0.0)
            else:
                lin_rows.append(row)
                lin_b.append(iota_scaled)
        if budgeted:
            row = np.zeros(n)
            row[t_idx[p]] = 1.0  # t <= iota, dual flagged
            lambda_rows.append(len(lin_rows))
            lin_rows.append(row)
            lin_b.append(iota_scaled)
            row = np.zeros(n)
            row[t_idx[p]] = -1.0  # t >= 0
            lin_rows.append(row)
            lin_b.append(0.0)

    problem = SDPProblem(
        n=n, c=c, blocks=blocks,
        lin_A=np.array(lin_rows), lin_b=np.array(lin_b),
        dual_flags=list(lambda_rows))
    return AssembledSubproblem(
        problem=problem, spec=spec, M=M, q_idx=q_idx, theta_idx=theta_idx,
        T_idx=T_idx, Y_idx=Y_idx, t_idx=t_idx, gamma2=gamma2,
        lambda_rows=lambda_rows, power_row=power_row)


def s_procedure_feasible(G_hat: np.ndarray, eps: float, iota: float,
                         Q: np.ndarray, tol: float = 1e-9) -> bool:
    """Feasibility of the robust constraint at a fixed Q, decided by a
    one-dimensional search on theta (min-eigenvalue over a theta grid plus
    golden-section refinement; the min eigenvalue is concave in theta)."""
    if eps == 0.0:
        nominal = float(np.trace(G_hat @ Q @ G_hat.conj().T).real)
        return nominal <= iota + tol * max(1.0, abs(iota))
    g2 = float(np.linalg.norm(G_hat) ** 2)
    if g2 <= 0.0:
        g2 = 1.0
    g = G_hat / np.sqrt(g2)
    e = eps / np.sqrt(g2)
    io = iota / g2
    L, M = g.shape
    d = L * M + 1
    M0 = np.zeros((d, d), dtype=complex)
    M0[:L * M, :L * M] = -kron(np.eye(L), Q)
    v = vec(Q @ g.conj().T)
    M0[:L * M, -1] = -v
    M0[-1, :L * M] = -v.conj()
    M0[-1, -1] = io - np.trace(g @ Q @ g.conj().T).real
    M1 = np.zeros((d, d))
    M1[:L * M, :L * M] = np.eye(L * M)
    M1[-1, -1] = -e ** 2

    scale = max(1.0, float(np.abs(M0).max()))

    def min_eig(theta):
        return float(np.linalg.eigvalsh(
            hermitianize(M0 + theta * M1))[0])

    lam_max_q = max(float(np.linalg.eigvalsh(hermitianize(Q))[-1]), 0.0)
    hi = lam_max_q + io / e ** 2 + np.linalg.norm(v) / e + 1.0
    grid = np.linspace(0.0, hi, 60)
    vals = [min_eig(t) for t in grid]
    j = int(np.argmax(vals))
    lo_t = grid[max(j - 1, 0)]
    hi_t = grid[min(j + 1, len(grid) - 1)]
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo_t, hi_t
    x1 = b - phi * (b - a)
    x2 = a + phi * (b - a)
    f1, f2 = min_eig(x1), min_eig(x2)
    for _ in range(80):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + phi * (b - a)
            f2 = min_eig(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - phi * (b - a)
            f1 = min_eig(x1)
        if b - a <= 1e-14 * max(1.0, hi):
            break
    best = max(max(vals), f1, f2)
    return best >= -tol * scale


@dataclass
class SubproblemResult:
    Q: np.ndarray
    objective: float
    t: list
    lambdas: list
    solution: SDPSolution
    assembled: AssembledSubproblem


def solve_subproblem(spec: SubproblemSpec,
                     opts: SolveOptions | None = None) -> SubproblemResult:
    """Assemble and solve one link update, mapping the answer back.

    A budgeted constraint with (numerically) zero budget and eps > 0
    collapses the feasible covariance to Q = 0, which has no interior; that
    case is answered directly, with the budget multiplier taken from a
    slightly perturbed solve so the master update still sees a subgradient.
    """
    scale = max(spec.p_max, 1.0)
    degenerate = [r for r in spec.robust
                  if r.eps > 0 and r.iota <= 1e-14 * scale]
    if degenerate:
        q0 = np.zeros((spec.D.shape[0],) * 2, dtype=complex)
        lambdas = []
        if spec.mode == "budgeted_P11":
            bumped = SubproblemSpec(
                k=spec.k, mode=spec.mode, D=spec.D, H=spec.H,
                R_half=spec.R_half, p_max=spec.p_max,
                robust=[RobustConstraintSpec(r.G_hat, r.eps,
                                             max(r.iota, 1e-6 * scale))
                        for r in spec.robust],
                prev_Q=spec.prev_Q, tau=spec.tau)
            res = solve_subproblem(bumped, opts)
            lambdas = res.lambdas
        # at Q = 0 the linear-objective value is exactly zero; other modes
        # never consume the objective on this path
        obj = 0.0 if spec.mode == "linear" else float("nan")
        return SubproblemResult(Q=q0, objective=obj,
                                t=[0.0] * len(spec.robust), lambdas=lambdas,
                                solution=None, assembled=None)

    asm = assemble(spec)
    sol = solve(asm.problem, opts)
    if sol.status != "Optimal":
        raise SolverFailure(
            f"link {spec.k} subproblem ({spec.mode}) ended {sol.status} "
            f"after {sol.iterations} iterations")
    q = asm.extract_Q(sol)
    return SubproblemResult(
        Q=q, objective=sol.primal_obj,
        t=asm.extract_t(sol) if spec.mode == "budgeted_P11" else [],
        lambdas=asm.extract_lambdas(sol) if spec.mode == "budgeted_P11" else [],
        solution=sol, assembled=asm)
