"""Self-contained dense semidefinite-program solver.

Standard form:

    minimize    c . x
    subject to  F_0^b + sum_i x_i F_i^b  >= 0   (PSD, per block b)
                a_r . x <= b_r                   (scalar linear rows)

All F matrices are real symmetric. The solver is a primal-dual
path-following interior-point method with the HKM search direction and a
Mehrotra predictor-corrector; the Newton system is reduced to a dense Schur
complement in x and solved by LU factorization (the HKM Schur matrix is
positive definite but not symmetric). Problems here are small (n up to a
few hundred, blocks up to a few tens), so robustness beats speed.

Duals: one PSD matrix Z_b per block and one scalar lambda_r >= 0 per linear
row, satisfying c_i = sum_b <Z_b, F_i^b> - sum_r lambda_r a_ri at optimality
with dual objective -sum_b <F_0^b, Z_b> - lambda . b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class NumericalBreakdown(RuntimeError):
    """The Newton system became indefinite beyond recovery."""


class CertificateFailure(AssertionError):
    """An optimality certificate residual exceeded its tolerance."""


@dataclass
class SDPBlock:
    """One PSD constraint F0 + sum_i x[var_idx[i]] * F[i] >= 0.

    Only variables listed in var_idx carry (dense) coefficient matrices.
    """

    size: int
    var_idx: np.ndarray
    F0: np.ndarray
    F: np.ndarray  # shape (len(var_idx), size, size)


@dataclass
class SDPProblem:
    n: int
    c: np.ndarray
    blocks: list
    lin_A: np.ndarray  # (p, n)
    lin_b: np.ndarray  # (p,)
    dual_flags: list = field(default_factory=list)  # rows whose duals matter

    def validate(self) -> None:
        assert self.c.shape == (self.n,)
        for blk in self.blocks:
            assert blk.F0.shape == (blk.size, blk.size)
            assert np.allclose(blk.F0, blk.F0.T, atol=1e-12)
            for f in blk.F:
                assert np.allclose(f, f.T, atol=1e-12)
        if len(self.lin_b):
            assert self.lin_A.shape == (len(self.lin_b), self.n)


@dataclass
class SolveOptions:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200


@dataclass
class SDPSolution:
    status: str  # Optimal | Infeasible | Unbounded | MaxIter
    x: np.ndarray
    block_duals: list
    linear_duals: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int
    history: list = field(default_factory=list, repr=False)


def _chol(m: np.ndarray, what: str) -> np.ndarray:
    # tiny jitter retry before declaring breakdown
    for jitter in (0.0, 1e-14, 1e-12):
        try:
            return np.linalg.cholesky(m + jitter * np.trace(m) / m.shape[0]
                                      * np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalBreakdown(f"{what} lost positive definiteness")


def _min_eig_ratio(ell: np.ndarray, delta: np.ndarray) -> float:
    """lambda_min of L^-1 delta L^-T for a cached Cholesky factor L."""
    y = sla.solve_triangular(ell, delta, lower=True, check_finite=False)
    y = sla.solve_triangular(ell, y.T, lower=True, check_finite=False)
    return float(np.linalg.eigvalsh(0.5 * (y + y.T))[0])


def _step_length(chols, deltas, vec_s, vec_ds, eta=0.98) -> float:
    alpha = 1.0
    for ell, d in zip(chols, deltas):
        lam = _min_eig_ratio(ell, d)
        if lam < 0:
            alpha = min(alpha, -eta / lam)
    neg = vec_ds < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-eta * vec_s[neg] / vec_ds[neg])))
    return alpha


def solve(p: SDPProblem, opts: SolveOptions | None = None) -> SDPSolution:
    """HKM predictor-corrector interior-point solve with dual extraction."""
    opts = opts or SolveOptions()
    n = p.n
    nlin = len(p.lin_b)
    A = p.lin_A if nlin else np.zeros((0, n))
    b = p.lin_b if nlin else np.zeros(0)

    total_dim = sum(blk.size for blk in p.blocks) + nlin
    f0_scale = max([1.0] + [np.linalg.norm(blk.F0) for blk in p.blocks]
                   + ([float(np.abs(b).max())] if nlin else []))
    c_scale = max(1.0, float(np.abs(p.c).max()) if n else 1.0)

    x = np.zeros(n)
    rho_p = 10.0 * f0_scale
    rho_d = 10.0 * c_scale
    S = [rho_p * np.eye(blk.size) for blk in p.blocks]
    Z = [rho_d * np.eye(blk.size) for blk in p.blocks]
    s = np.full(nlin, rho_p)
    lam = np.full(nlin, rho_d)

    # flattened coefficient stacks, precomputed once
    Fmat = [blk.F.reshape(len(blk.var_idx), -1) for blk in p.blocks]
    f0_norms = [1.0 + np.linalg.norm(blk.F0) for blk in p.blocks]
    b_scale = 1.0 + (float(np.abs(b).max()) if nlin else 0.0)
    c_norm = 1.0 + float(np.linalg.norm(p.c))

    history = []
    status = "MaxIter"
    it = 0
    for it in range(1, opts.max_iter + 1):
        # residuals
        Rp = []
        for blk, Fm, Sb in zip(p.blocks, Fmat, S):
            sx = blk.F0 + (Fm.T @ x[blk.var_idx]).reshape(Sb.shape)
            Rp.append(sx - Sb)
        rl = b - A @ x - s
        d = p.c.copy()
        for blk, Fm, Zb in zip(p.blocks, Fmat, Z):
            d[blk.var_idx] -= Fm @ Zb.ravel()
        if nlin:
            d += A.T @ lam

        comp = sum(float(np.sum(Sb * Zb)) for Sb, Zb in zip(S, Z)) \
            + float(s @ lam)
        mu = comp / total_dim
        pobj = float(p.c @ x)
        dobj = -sum(float(np.sum(blk.F0 * Zb))
                    for blk, Zb in zip(p.blocks, Z)) - float(b @ lam)
        pres = max([0.0] + [np.linalg.norm(r) / fn
                            for r, fn in zip(Rp, f0_norms)])
        if nlin:
            pres = max(pres, float(np.abs(rl).max()) / b_scale)
        dres = float(np.linalg.norm(d)) / c_norm
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append((it, pobj, dobj, mu, pres, dres, comp))

        if rel_gap <= opts.tol_gap and pres <= opts.tol_feas and dres <= opts.tol_feas:
            status = "Optimal"
            break
        # divergence-based infeasibility/unboundedness detection
        if dobj > 1e9 * (f0_scale + c_scale) and dres <= 1e3 * opts.tol_feas:
            status = "Infeasible"
            break
        if pobj < -1e9 * (f0_scale + c_scale) and pres <= 1e3 * opts.tol_feas:
            status = "Unbounded"
            break
        if mu < 1e-16 * f0_scale and pres > 1e3 * opts.tol_feas:
            status = "Infeasible"
            break

        chol_S = [_chol(Sb, "primal slack") for Sb in S]
        chol_Z = [_chol(Zb, "dual matrix") for Zb in Z]
        Sinv = []
        for ell in chol_S:
            inv = sla.solve_triangular(ell, np.eye(ell.shape[0]), lower=True,
                                       check_finite=False)
            Sinv.append(inv.T @ inv)

        # Schur complement B_ij = sum_b tr(F_i Z F_j S^-1) + A^T diag(lam/s) A
        B = np.zeros((n, n))
        for blk, Zb, Sib in zip(p.blocks, Z, Sinv):
            nv = len(blk.var_idx)
            if nv == 0:
                continue
            fz = (blk.F @ Zb).reshape(nv, -1)
            fsi = (blk.F @ Sib).transpose(0, 2, 1).reshape(nv, -1)
            B[np.ix_(blk.var_idx, blk.var_idx)] += fz @ fsi.T
        if nlin:
            B += (A.T * (lam / s)) @ A
        try:
            B_lu = sla.lu_factor(B, check_finite=False)
        except (ValueError, sla.LinAlgError) as exc:
            raise NumericalBreakdown(f"Schur factorization failed: {exc}") from exc

        def newton(sigma_mu, corr_blocks, corr_lin):
            rhs = -d.copy()
            consts = []
            for blk, Fm, Zb, Sib, r in zip(p.blocks, Fmat, Z, Sinv, Rp):
                m_const = sigma_mu * Sib - Zb - Zb @ r @ Sib
                if corr_blocks is not None:
                    m_const = m_const - corr_blocks[len(consts)] @ Sib
                consts.append(m_const)
                rhs[blk.var_idx] += Fm @ m_const.ravel()
            if nlin:
                dlam_const = sigma_mu / s - lam - (lam / s) * rl
                if corr_lin is not None:
                    dlam_const = dlam_const - corr_lin / s
                rhs -= A.T @ dlam_const
            dx = sla.lu_solve(B_lu, rhs, check_finite=False)
            if not np.all(np.isfinite(dx)):
                raise NumericalBreakdown("Newton step is not finite")
            dS = []
            for blk, Fm, r in zip(p.blocks, Fmat, Rp):
                dS.append((Fm.T @ dx[blk.var_idx]).reshape(r.shape) + r)
            dZ = []
            for Zb, Sib, r, mc, dSb in zip(Z, Sinv, Rp, consts, dS):
                dzb = mc - Zb @ (dSb - r) @ Sib
                dZ.append(0.5 * (dzb + dzb.T))
            if nlin:
                ds = -A @ dx + rl
                dlam_c = sigma_mu / s - lam - (lam / s) * rl
                if corr_lin is not None:
                    dlam_c = dlam_c - corr_lin / s
                dlam = dlam_c + (lam / s) * (-(ds - rl))
            else:
                ds = np.zeros(0)
                dlam = np.zeros(0)
            return dx, dS, dZ, ds, dlam

        # predictor (affine scaling)
        dx_a, dS_a, dZ_a, ds_a, dlam_a = newton(0.0, None, None)
        ap = _step_length(chol_S, dS_a, s, ds_a)
        ad = _step_length(chol_Z, dZ_a, lam, dlam_a)
        comp_aff = sum(float(np.sum((Sb + ap * dSb) * (Zb + ad * dZb)))
                       for Sb, dSb, Zb, dZb in zip(S, dS_a, Z, dZ_a))
        if nlin:
            comp_aff += float((s + ap * ds_a) @ (lam + ad * dlam_a))
        sigma = min(1.0, max(0.0, (comp_aff / comp) ** 3)) if comp > 0 else 0.0

        # corrector
        corr_blocks = [dZb @ dSb for dZb, dSb in zip(dZ_a, dS_a)]
        corr_lin = dlam_a * ds_a if nlin else None
        dx, dS, dZ, ds, dlam = newton(sigma * mu, corr_blocks, corr_lin)
        ap = _step_length(chol_S, dS, s, ds)
        ad = _step_length(chol_Z, dZ, lam, dlam)

        x = x + ap * dx
        S = [0.5 * ((Sb + ap * dSb) + (Sb + ap * dSb).T)
             for Sb, dSb in zip(S, dS)]
        Z = [0.5 * ((Zb + ad * dZb) + (Zb + ad * dZb).T)
             for Zb, dZb in zip(Z, dZ)]
        if nlin:
            s = s + ap * ds
            lam = lam + ad * dlam

    gap = abs(history[-1][1] - history[-1][2]) if history else np.inf
    return SDPSolution(status=status, x=x, block_duals=Z, linear_duals=lam,
                       primal_obj=float(p.c @ x),
                       dual_obj=history[-1][2] if history else -np.inf,
                       gap=gap, iterations=it, history=history)


def check_certificate(p: SDPProblem, sol: SDPSolution,
                      opts: SolveOptions | None = None) -> dict:
    """Recompute feasibility, dual feasibility, and complementarity from
    scratch; every residual must be within 10x the solve tolerance."""
    opts = opts or SolveOptions()
    if sol.status != "Optimal":
        raise CertificateFailure(f"solution status is {sol.status}")
    tol = 10.0 * max(opts.tol_gap, opts.tol_feas)
    report = {}

    for bi, blk in enumerate(p.blocks):
        sx = blk.F0 + np.tensordot(sol.x[blk.var_idx], blk.F, axes=(0, 0))
        scale = 1.0 + np.linalg.norm(blk.F0)
        w = np.linalg.eigvalsh(0.5 * (sx + sx.T))
        report[f"primal_psd_block{bi}"] = float(w[0]) / scale
        if w[0] < -tol * scale:
            raise CertificateFailure(
                f"primal PSD violated on block {bi}: {w[0]:.3e}")
        zw = np.linalg.eigvalsh(0.5 * (sol.block_duals[bi]
                                       + sol.block_duals[bi].T))
        zscale = 1.0 + np.linalg.norm(sol.block_duals[bi])
        report[f"dual_psd_block{bi}"] = float(zw[0]) / zscale
        if zw[0] < -tol * zscale:
            raise CertificateFailure(
                f"dual PSD violated on block {bi}: {zw[0]:.3e}")

    if len(p.lin_b):
        slack = p.lin_b - p.lin_A @ sol.x
        scale = 1.0 + float(np.abs(p.lin_b).max())
        report["linear_feas"] = float(slack.min()) / scale
        if slack.min() < -tol * scale:
            raise CertificateFailure(
                f"linear row violated by {-slack.min():.3e}")
        if sol.linear_duals.min() < -tol:
            raise CertificateFailure("negative linear dual")

    d = p.c.copy()
    for blk, Zb in zip(p.blocks, sol.block_duals):
        d[blk.var_idx] -= np.einsum("iab,ab->i", blk.F, Zb)
    if len(p.lin_b):
        d += p.lin_A.T @ sol.linear_duals
    dres = float(np.linalg.norm(d)) / (1.0 + float(np.linalg.norm(p.c)))
    report["dual_stationarity"] = dres
    if dres > tol:
        raise CertificateFailure(f"dual stationarity residual {dres:.3e}")

    comp = 0.0
    for blk, Zb in zip(p.blocks, sol.block_duals):
        sx = blk.F0 + np.tensordot(sol.x[blk.var_idx], blk.F, axes=(0, 0))
        comp += abs(float(np.sum(sx * Zb)))
    if len(p.lin_b):
        comp += abs(float((p.lin_b - p.lin_A @ sol.x) @ sol.linear_duals))
    scale = 1.0 + abs(sol.primal_obj) + abs(sol.dual_obj)
    report["complementarity"] = comp / scale
    if comp / scale > tol:
        raise CertificateFailure(f"complementarity residual {comp / scale:.3e}")
    return report


# --------------------------------------------------------------- text format

def dump_problem(p: SDPProblem) -> str:
    """Line-oriented dump: dimensions, block sizes, coefficient triplets.

    Grammar (one record per line, '%r' exact float hex):
        sdpproblem v1
        nvars N
        c <i> <val>            (nonzero objective entries)
        block <size>
        f <vi> <row> <col> <val>   (vi = -1 for F0; upper triangle only)
        endblock
        lin <b> [<i> <val>]...
        flag <row index>
    """
    out = ["sdpproblem v1", f"nvars {p.n}"]
    for i, v in enumerate(p.c):
        if v != 0.0:
            out.append(f"c {i} {float(v).hex()}")
    for blk in p.blocks:
        out.append(f"block {blk.size}")
        mats = [(-1, blk.F0)] + [(int(blk.var_idx[j]), blk.F[j])
                                 for j in range(len(blk.var_idx))]
        for vi, m in mats:
            for r in range(blk.size):
                for cidx in range(r, blk.size):
                    if m[r, cidx] != 0.0:
                        out.append(f"f {vi} {r} {cidx} {float(m[r, cidx]).hex()}")
        out.append("endblock")
    for r in range(len(p.lin_b)):
        row = [f"lin {float(p.lin_b[r]).hex()}"]
        for i in range(p.n):
            if p.lin_A[r, i] != 0.0:
                row.append(f"{i} {float(p.lin_A[r, i]).hex()}")
        out.append(" ".join(row))
    for fl in p.dual_flags:
        out.append(f"flag {fl}")
    return "\n".join(out) + "\n"


def load_problem(text: str) -> SDPProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    assert lines[0] == "sdpproblem v1", "not an sdpproblem v1 dump"
    n = int(lines[1].split()[1])
    c = np.zeros(n)
    blocks = []
    lin_rows = []
    flags = []
    i = 2
    while i < len(lines):
        tok = lines[i].split()
        if tok[0] == "c":
            c[int(tok[1])] = float.fromhex(tok[2])
            i += 1
        elif tok[0] == "block":
            size = int(tok[1])
            coeffs = {}
            i += 1
            while lines[i].split()[0] != "endblock":
                t = lines[i].split()
                vi, r, cc, val = int(t[1]), int(t[2]), int(t[3]), float.fromhex(t[4])
                m = coeffs.setdefault(vi, np.zeros((size, size)))
                m[r, cc] = val
                m[cc, r] = val
                i += 1
            i += 1
            var_idx = np.array(sorted(k for k in coeffs if k >= 0), dtype=int)
            F0 = coeffs.get(-1, np.zeros((size, size)))
            F = np.array([coeffs[v] for v in var_idx]) if len(var_idx) \
                else np.zeros((0, size, size))
            blocks.append(SDPBlock(size=size, var_idx=var_idx, F0=F0, F=F))
        elif tok[0] == "lin":
            bval = float.fromhex(tok[1])
            arow = np.zeros(n)
            for j in range(2, len(tok), 2):
                arow[int(tok[j])] = float.fromhex(tok[j + 1])
            lin_rows.append((arow, bval))
            i += 1
        elif tok[0] == "flag":
            flags.append(int(tok[1]))
            i += 1
        else:
            raise ValueError(f"unrecognized record: {lines[i]!r}")
    if lin_rows:
        lin_A = np.array([r for r, _ in lin_rows])
        lin_b = np.array([v for _, v in lin_rows])
    else:
        lin_A = np.zeros((0, n))
        lin_b = np.zeros(0)
    return SDPProblem(n=n, c=c, blocks=blocks, lin_A=lin_A, lin_b=lin_b,
                      dual_flags=flags)
