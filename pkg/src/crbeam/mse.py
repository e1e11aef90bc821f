"""Closed-form link quantities: MSE matrices, receive filters, utilities,
surrogate gradients, and interference evaluation (nominal and worst-case).

All performance is evaluated analytically at the covariance level; no symbol
streams are ever generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian_eig, hermitian_sqrt, hermitianize, kron, vec
from .scenario import ChannelSet


class SingularSystem(np.linalg.LinAlgError):
    """An interference-plus-noise matrix is numerically singular."""


class MissingReceiver(ValueError):
    """Operation needs receive filters but profile.W is not populated."""


class MissingTrueChannel(ValueError):
    """Realized-channel evaluation requested but G_true is absent."""


@dataclass
class CovarianceProfile:
    """Current iterate: one Hermitian PSD transmit covariance per link,
    plus optionally the derived receive filters."""

    Q: list
    W: list | None = None

    @classmethod
    def zeros(cls, ch: ChannelSet) -> "CovarianceProfile":
        return cls(Q=[np.zeros((m, m), dtype=complex) for m in ch.M])

    def copy(self) -> "CovarianceProfile":
        return CovarianceProfile(
            Q=[q.copy() for q in self.Q],
            W=None if self.W is None else [w.copy() for w in self.W])


@dataclass
class UtilityReport:
    u: np.ndarray
    sum_u: float
    sum_mse: float
    A: list = field(repr=False)
    R: list = field(repr=False)


def _interference_plus_noise(ch: ChannelSet, prof: CovarianceProfile, k: int):
    """R_kk = sum_{i != k} H_ki Q_i H_ki^H + sigma_k^2 I."""
    r = ch.sigma2[k] * np.eye(ch.N[k], dtype=complex)
    for i in range(ch.K):
        if i != k:
            h = ch.H[k][i]
            r = r + h @ prof.Q[i] @ h.conj().T
    return hermitianize(r)


def _solve_hermitian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solve result")
    return x


def utility(ch: ChannelSet, prof: CovarianceProfile) -> UtilityReport:
    """Per-link utilities u_k = Tr{H Q H^H (H Q H^H + R_kk)^-1} and sums."""
    K = ch.K
    u = np.zeros(K)
    A, R = [], []
    for k in range(K):
        h = ch.H[k][k]
        sig = hermitianize(h @ prof.Q[k] @ h.conj().T)
        r = _interference_plus_noise(ch, prof, k)
        a = sig + r
        u[k] = float(np.trace(_solve_hermitian(a, sig)).real)
        A.append(a)
        R.append(r)
    sum_u = float(np.sum(u))
    sum_mse = float(sum(ch.M) - sum_u)
    return UtilityReport(u=u, sum_u=sum_u, sum_mse=sum_mse, A=A, R=R)


def optimal_receiver(ch: ChannelSet, prof: CovarianceProfile) -> list:
    """MMSE filters W_k = F_k^H H_kk^H A_k^-1 with F_k the Hermitian square
    root of Q_k; also stored in prof.W."""
    W = []
    for k in range(ch.K):
        h = ch.H[k][k]
        f = hermitian_sqrt(prof.Q[k])
        a = hermitianize(h @ prof.Q[k] @ h.conj().T) \
            + _interference_plus_noise(ch, prof, k)
        # W = F^H H^H A^-1, computed as a linear solve on the transposed system
        W.append(_solve_hermitian(a.T, (f.conj().T @ h.conj().T).T).T)
    prof.W = W
    return W


def mse_matrix(ch: ChannelSet, prof: CovarianceProfile, k: int) -> np.ndarray:
    """MSE matrix E_k = W A W^H - W H F - F^H H^H W^H + I for the stored W."""
    if prof.W is None:
        raise MissingReceiver("profile has no receive filters; "
                              "call optimal_receiver first")
    w = prof.W[k]
    h = ch.H[k][k]
    f = hermitian_sqrt(prof.Q[k])
    a = hermitianize(h @ prof.Q[k] @ h.conj().T) \
        + _interference_plus_noise(ch, prof, k)
    e = (w @ a @ w.conj().T - w @ h @ f - f.conj().T @ h.conj().T @ w.conj().T
         + np.eye(ch.M[k]))
    return hermitianize(e)


def link_bv(ch: ChannelSet, prof: CovarianceProfile, j: int):
    """(B_j, V_j) pair: B_j = sum_i H_ji Q_i H_ji^H + sigma_j^2 I and
    V_j = H_jj Q_j H_jj^H. These are the quantities exchanged between nodes
    in the distributed scheme."""
    b = ch.sigma2[j] * np.eye(ch.N[j], dtype=complex)
    for i in range(ch.K):
        h = ch.H[j][i]
        b = b + h @ prof.Q[i] @ h.conj().T
    hjj = ch.H[j][j]
    v = hermitianize(hjj @ prof.Q[j] @ hjj.conj().T)
    return hermitianize(b), v


def gradient_from_bv(H_col: list, B: list, V: list, k: int,
                     include=None) -> np.ndarray:
    """D_k = -sum_{j != k} H_jk^H B_j^-1 V_j B_j^-1 H_jk from exchanged
    (B_j, V_j) pairs. H_col[j] is H_{j,k}; include[j] masks neighbors."""
    K = len(H_col)
    m = H_col[k].shape[1]
    d = np.zeros((m, m), dtype=complex)
    for j in range(K):
        if j == k:
            continue
        if include is not None and not include[j]:
            continue
        binv_h = _solve_hermitian(B[j], H_col[j])
        d = d - binv_h.conj().T @ V[j] @ binv_h
    return hermitianize(d)


def gradient_D(ch: ChannelSet, prof: CovarianceProfile, k: int) -> np.ndarray:
    """Surrogate gradient D_k of the other-links utility sum with respect to
    Q_k (Hermitian, negative semidefinite)."""
    B, V = [], []
    for j in range(ch.K):
        b, v = link_bv(ch, prof, j)
        B.append(b)
        V.append(v)
    H_col = [ch.H[j][k] for j in range(ch.K)]
    return gradient_from_bv(H_col, B, V, k)


def utility_gradient(ch: ChannelSet, prof: CovarianceProfile, k: int) -> np.ndarray:
    """Gradient of the own-link utility u_k with respect to Q_k:
    H_kk^H B_k^-1 R_kk B_k^-1 H_kk (Hermitian PSD)."""
    h = ch.H[k][k]
    r = _interference_plus_noise(ch, prof, k)
    b = hermitianize(h @ prof.Q[k] @ h.conj().T) + r
    binv_h = _solve_hermitian(b, h)
    return hermitianize(binv_h.conj().T @ r @ binv_h)


def interference(ch: ChannelSet, Q: np.ndarray, link: int, pu: int = 0,
                 use_true: bool = False) -> float:
    """Interference power Tr{G Q G^H} at PU ``pu`` from link ``link``."""
    if use_true:
        if ch.G_true is None or ch.G_true[pu][link] is None:
            raise MissingTrueChannel(
                f"no realized channel for pu {pu}, link {link}")
        g = ch.G_true[pu][link]
    else:
        g = ch.G_hat[pu][link]
    return float(np.trace(g @ Q @ g.conj().T).real)


def worst_case_interference(G_hat: np.ndarray, eps: float, Q: np.ndarray):
    """Exact maximum of Tr{(G_hat + dG) Q (G_hat + dG)^H} over ||dG||_F <= eps.

    In vectorized form with g = vec(dG^H) the objective is
    g^H (I (x) Q) g + 2 Re(b^H g) + c with b = vec(Q^H G_hat^H) and
    c = Tr{G_hat Q G_hat^H}; the maximum of this convex quadratic over the
    ball sits on the boundary and follows from the eigendecomposition of
    I (x) Q plus a one-dimensional secular-equation root find.

    Returns (value, argmax dG).
    """
    L, M = G_hat.shape
    Q = hermitianize(Q)
    c = float(np.trace(G_hat @ Q @ G_hat.conj().T).real)
    if eps == 0.0:
        return c, np.zeros_like(G_hat)

    A = kron(np.eye(L), Q)
    b = vec(Q.conj().T @ G_hat.conj().T)
    w, U = hermitian_eig(A)          # w descending
    beta = U.conj().T @ b
    g_eig = _ball_quadratic_argmax(w, beta, eps)
    value = float((g_eig.conj() @ (w * g_eig)).real
                  + 2.0 * (beta.conj() @ g_eig).real + c)
    g = U @ g_eig
    dG_H = g.reshape((M, L), order="F")
    return value, dG_H.conj().T


def _ball_quadratic_argmax(w: np.ndarray, beta: np.ndarray, eps: float):
    """Maximize sum w_i |g_i|^2 + 2 Re(beta^H g) over ||g|| = eps in the
    eigenbasis. KKT: (mu I - diag(w)) g = beta with mu >= w_max."""
    wmax = float(w[0])
    scale = max(1.0, abs(wmax))
    bnorm = float(np.linalg.norm(beta))

    if bnorm == 0.0:
        g = np.zeros(len(w), dtype=complex)
        g[0] = eps
        return g

    def squared_norm(mu):
        return float(np.sum(np.abs(beta) ** 2 / (mu - w) ** 2))

    # components on the top eigenspace decide between the easy and hard case
    top = w >= wmax - 1e-12 * scale
    beta_top_sq = float(np.sum(np.abs(beta[top]) ** 2))
    lo = wmax
    hi = wmax + bnorm / eps
    if beta_top_sq <= (1e-14 * bnorm) ** 2:
        # hard case candidate: limit norm with top components removed
        denom = np.where(top, 1.0, wmax - w)
        g_perp = np.where(top, 0.0, beta / denom)
        norm_perp = float(np.linalg.norm(g_perp))
        if norm_perp <= eps:
            t = np.sqrt(max(eps * eps - norm_perp ** 2, 0.0))
            g = g_perp.astype(complex)
            g[np.argmax(top)] += t
            return g
    # bisection on the secular equation ||g(mu)||^2 = eps^2 over (lo, hi]
    lo = lo + 1e-300
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= wmax:
            mid = np.nextafter(wmax, np.inf)
        if squared_norm(mid) > eps * eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(scale, abs(hi)):
            break
    mu = hi
    g = beta / (mu - w)
    nm = np.linalg.norm(g)
    if nm > 0:
        g = g * (eps / nm)   # land exactly on the boundary
    return g
