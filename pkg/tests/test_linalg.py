import numpy as np
import pytest

from crbeam.linalg import (
    NotPSD,
    hermitian_eig,
    hermitian_sqrt,
    hermitianize,
    kron,
    real_embedding,
    real_unembedding,
    vec,
)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, n):
    a = random_complex(rng, (n, n))
    return hermitianize(a)


def random_psd(rng, n):
    a = random_complex(rng, (n, n))
    return a @ a.conj().T


def test_vec_identity_1x1():
    assert vec(np.array([[3.0 + 1j]])) == np.array([3.0 + 1j])


def test_vec_column_stacking():
    m = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.array_equal(vec(m), np.array([1, 3, 2, 4], dtype=complex))


def test_vec_matches_entrywise_oracle():
    # column-stacking oracle: index (i, j) lands at position j*rows + i
    rng = np.random.default_rng(11)
    q = random_hermitian(rng, 2)
    g = random_complex(rng, (2, 2))
    m = q.conj().T @ g.conj().T
    v = vec(m)
    for i in range(2):
        for j in range(2):
            assert v[j * 2 + i] == m[i, j]


def test_kron_identity_factor():
    q = np.array([[2.5 + 0.5j]])
    assert np.allclose(kron(np.eye(2), q), np.diag([2.5 + 0.5j] * 2))
    a = random_complex(np.random.default_rng(0), (2, 2))
    assert np.allclose(kron(np.eye(1), a), a)


def test_kron_trace_identity():
    # Tr(Z^H A Z) = vec(Z)^H (I (x) A) vec(Z)
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = random_complex(rng, (2, 2))
        z = random_complex(rng, (2, 2))
        lhs = np.trace(z.conj().T @ a @ z)
        rhs = vec(z).conj() @ kron(np.eye(2), a) @ vec(z)
        scale = max(1.0, abs(lhs))
        assert abs(lhs - rhs) <= 1e-10 * scale


def test_hermitian_sqrt_identity_and_diag():
    assert np.allclose(hermitian_sqrt(np.eye(3)), np.eye(3))
    s = hermitian_sqrt(np.diag([4.0, 9.0]).astype(complex))
    assert np.allclose(s, np.diag([2.0, 3.0]))


def test_hermitian_sqrt_multiply_back():
    rng = np.random.default_rng(3)
    m = random_psd(rng, 3)
    s = hermitian_sqrt(m)
    assert np.allclose(s, s.conj().T)
    rel = np.linalg.norm(s @ s - m) / np.linalg.norm(m)
    assert rel <= 1e-10
    w = np.linalg.eigvalsh(s)
    assert w[0] >= -1e-12 * max(w[-1], 1.0)


def test_hermitian_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        hermitian_sqrt(np.diag([1.0, -1.0]).astype(complex))


def test_hermitian_sqrt_clips_tiny_negative():
    m = np.diag([1.0, -1e-14]).astype(complex)
    s = hermitian_sqrt(m)
    assert np.allclose(s, np.diag([1.0, 0.0]), atol=1e-7)


def test_real_embedding_real_scalar():
    e = real_embedding(np.array([[2.0]], dtype=complex))
    assert np.array_equal(e, np.array([[2.0, 0.0], [0.0, 2.0]]))


def test_real_embedding_identity():
    assert np.array_equal(real_embedding(np.eye(3, dtype=complex)), np.eye(6))


def test_real_embedding_pauli_y_spectrum():
    m = np.array([[0.0, 1j], [-1j, 0.0]])
    e = real_embedding(m)
    assert e.shape == (4, 4)
    w = np.sort(np.linalg.eigvalsh(e))
    assert np.allclose(w, [-1.0, -1.0, 1.0, 1.0], atol=1e-12)


def test_real_embedding_doubles_spectrum():
    rng = np.random.default_rng(21)
    for _ in range(10):
        m = random_hermitian(rng, 4)
        w_c = np.sort(np.linalg.eigvalsh(m))
        w_r = np.sort(np.linalg.eigvalsh(real_embedding(m)))
        assert np.allclose(np.repeat(w_c, 2), w_r, atol=1e-10)


def test_real_unembedding_round_trip():
    rng = np.random.default_rng(5)
    m = random_hermitian(rng, 3)
    assert np.allclose(real_unembedding(real_embedding(m)), m)


def test_hermitian_eig_diag_and_identity():
    w, _ = hermitian_eig(np.diag([1.0, 3.0]).astype(complex))
    assert np.allclose(w, [3.0, 1.0])
    w, _ = hermitian_eig(np.eye(4, dtype=complex))
    assert np.allclose(w, np.ones(4))


def test_hermitian_eig_reconstructs():
    rng = np.random.default_rng(9)
    m = random_hermitian(rng, 4)
    w, v = hermitian_eig(m)
    assert np.all(np.diff(w) <= 0)
    recon = (v * w) @ v.conj().T
    assert np.linalg.norm(recon - m) / np.linalg.norm(m) <= 1e-10
    assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
