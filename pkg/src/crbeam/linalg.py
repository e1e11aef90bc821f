"""Dense complex/Hermitian matrix kernels used throughout the package."""

from __future__ import annotations

import numpy as np


class NotPSD(ValueError):
    """Matrix failed the positive-semidefiniteness tolerance."""


class ConvergenceFailure(RuntimeError):
    """Eigensolver did not converge within its iteration budget."""


#: relative PSD tolerance, consistent with solver feasibility tolerances
PSD_RTOL = 1e-10


def hermitianize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (a + a^H) / 2."""
    return 0.5 * (a + a.conj().T)


def vec(m: np.ndarray) -> np.ndarray:
    """Stack the columns of ``m`` into a single vector."""
    return np.asarray(m).reshape(-1, order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product a (x) b."""
    return np.kron(a, b)


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (w, V) with real eigenvalues w sorted descending and unitary V
    such that m = V diag(w) V^H.
    """
    try:
        w, v = np.linalg.eigh(hermitianize(np.asarray(m, dtype=complex)))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def hermitian_sqrt(m: np.ndarray, rtol: float = PSD_RTOL) -> np.ndarray:
    """Hermitian PSD square root S of a PSD matrix m, with S @ S = m.

    Eigenvalues below -rtol * spectral radius raise NotPSD; smaller negative
    values are clipped to zero.
    """
    w, v = hermitian_eig(m)
    scale = max(w[0], 0.0)
    if w[-1] < -rtol * max(scale, 1e-300):
        raise NotPSD(
            f"min eigenvalue {w[-1]:.3e} below tolerance {-rtol * scale:.3e}"
        )
    w = np.clip(w, 0.0, None)
    return hermitianize((v * np.sqrt(w)) @ v.conj().T)


def psd_clip(m: np.ndarray) -> np.ndarray:
    """Project a nearly-PSD Hermitian matrix onto the PSD cone."""
    w, v = hermitian_eig(m)
    if w[-1] >= 0.0:
        return hermitianize(m)
    return hermitianize((v * np.clip(w, 0.0, None)) @ v.conj().T)


def is_psd(m: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    w = np.linalg.eigvalsh(hermitianize(np.asarray(m, dtype=complex)))
    return bool(w[0] >= -rtol * max(w[-1], 1e-300))


def real_embedding(m: np.ndarray) -> np.ndarray:
    """Map a Hermitian d x d matrix to the 2d x 2d real symmetric matrix

        [[Re m, -Im m],
         [Im m,  Re m]]

    which is PSD exactly when m is; every eigenvalue of m appears twice.
    """
    m = np.asarray(m, dtype=complex)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def real_unembedding(z: np.ndarray) -> np.ndarray:
    """Inverse map for dual matrices of an embedded LMI.

    Reads the (1,1)/(2,2) and (2,1)/(1,2) blocks of the 2d x 2d real matrix
    and averages them into a Hermitian d x d complex matrix.
    """
    d = z.shape[0] // 2
    re = 0.5 * (z[:d, :d] + z[d:, d:])
    im = 0.5 * (z[d:, :d] - z[:d, d:])
    return hermitianize(re + 1j * im)
