import numpy as np
import pytest

from crbeam.sdp import (
    CertificateFailure,
    SDPBlock,
    SDPProblem,
    SolveOptions,
    check_certificate,
    dump_problem,
    load_problem,
    solve,
)


def scalar_block(var, size_n, f0, coeff):
    return SDPBlock(size=1, var_idx=np.array([var]),
                    F0=np.array([[f0]]), F=np.array([[[coeff]]]))


def make_problem(n, c, blocks, lin=None, flags=()):
    if lin:
        lin_A = np.array([row for row, _ in lin], dtype=float)
        lin_b = np.array([v for _, v in lin], dtype=float)
    else:
        lin_A, lin_b = np.zeros((0, n)), np.zeros(0)
    p = SDPProblem(n=n, c=np.asarray(c, dtype=float), blocks=blocks,
                   lin_A=lin_A, lin_b=lin_b, dual_flags=list(flags))
    p.validate()
    return p


def sym_basis(m):
    """Orthogonal-ish basis of real symmetric m x m matrices."""
    out = []
    for a in range(m):
        e = np.zeros((m, m))
        e[a, a] = 1.0
        out.append(e)
        for b in range(a + 1, m):
            e = np.zeros((m, m))
            e[a, b] = e[b, a] = 1.0
            out.append(e)
    return out


def min_eig_problem(cmat):
    """min Tr(C X) s.t. X >= 0, Tr X = 1 in svec coordinates."""
    m = cmat.shape[0]
    basis = sym_basis(m)
    n = len(basis)
    c = np.array([np.sum(cmat * e) for e in basis])
    blk = SDPBlock(size=m, var_idx=np.arange(n),
                   F0=np.zeros((m, m)), F=np.array(basis))
    tr_row = np.array([np.trace(e) for e in basis])
    lin = [(tr_row, 1.0), (-tr_row, -1.0)]
    return make_problem(n, c, [blk], lin)


def test_trivial_scalar_block():
    # minimize x s.t. [x - 1] >= 0
    p = make_problem(1, [1.0], [scalar_block(0, 1, -1.0, 1.0)])
    sol = solve(p)
    assert sol.status == "Optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.gap <= 1e-6


def test_min_eigenvalue_family():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.standard_normal((4, 4))
        cmat = 0.5 * (a + a.T)
        p = min_eig_problem(cmat)
        sol = solve(p)
        assert sol.status == "Optimal"
        target = np.linalg.eigvalsh(cmat)[0]
        assert sol.primal_obj == pytest.approx(target, abs=1e-7)
        check_certificate(p, sol)


def test_infeasible_pair():
    # x <= 0 and [x - 1] >= 0 cannot hold together
    p = make_problem(1, [1.0], [scalar_block(0, 1, -1.0, 1.0)],
                     lin=[(np.array([1.0]), 0.0)])
    sol = solve(p)
    assert sol.status == "Infeasible"


def test_unbounded_detection():
    # minimize -x s.t. [x + 1] >= 0 (x can grow without bound)
    p = make_problem(1, [-1.0], [scalar_block(0, 1, 1.0, 1.0)])
    sol = solve(p)
    assert sol.status == "Unbounded"


def test_linear_duals_sensitivity():
    # min -x s.t. x <= b has optimum -b and dual lambda = 1
    p = make_problem(1, [-1.0], [scalar_block(0, 1, 0.0, 1.0)],  # x >= 0
                     lin=[(np.array([1.0]), 0.7)], flags=[0])
    sol = solve(p)
    assert sol.status == "Optimal"
    assert sol.x[0] == pytest.approx(0.7, abs=1e-7)
    assert sol.linear_duals[0] == pytest.approx(1.0, abs=1e-6)


def test_weak_duality_along_iterates():
    # the complementarity inner product stays nonnegative at every iterate
    # (S, Z kept PSD by the line search); at feasible iterates this is
    # exactly primal_obj - dual_obj >= 0
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 4))
    p = min_eig_problem(0.5 * (a + a.T))
    sol = solve(p)
    for (_, pobj, dobj, mu, pres, dres, comp) in sol.history:
        scale = 1.0 + abs(pobj) + abs(dobj)
        assert comp >= -1e-12 * scale
        if pres <= 1e-9 and dres <= 1e-9:
            assert pobj >= dobj - 1e-12 * scale


def test_scaling_invariance():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 3))
    cmat = 0.5 * (a + a.T)
    p = min_eig_problem(cmat)
    sol = solve(p)
    # scale variable 0's coefficients by s; x0/s must reproduce the solution
    sfac = 50.0
    c2 = p.c.copy()
    c2[0] *= sfac
    blocks2 = []
    for blk in p.blocks:
        F = blk.F.copy()
        F[blk.var_idx == 0] *= sfac
        blocks2.append(SDPBlock(size=blk.size, var_idx=blk.var_idx,
                                F0=blk.F0.copy(), F=F))
    lin_A2 = p.lin_A.copy()
    lin_A2[:, 0] *= sfac
    p2 = SDPProblem(n=p.n, c=c2, blocks=blocks2, lin_A=lin_A2,
                    lin_b=p.lin_b.copy())
    sol2 = solve(p2)
    assert sol2.status == "Optimal"
    x2 = sol2.x.copy()
    x2[0] *= sfac  # scaled problem optimizes x0/sfac in its own coordinates
    assert np.allclose(x2, sol.x, atol=1e-6)
    assert sol2.primal_obj == pytest.approx(sol.primal_obj, abs=1e-7)


def test_certificate_rejects_corruption():
    p = make_problem(1, [1.0], [scalar_block(0, 1, -1.0, 1.0)])
    sol = solve(p)
    check_certificate(p, sol)
    sol.x = sol.x + 1e-3
    sol.primal_obj = float(p.c @ sol.x)
    with pytest.raises(CertificateFailure):
        check_certificate(p, sol)


def test_certificates_on_random_fixtures():
    rng = np.random.default_rng(3)
    for trial in range(100):
        m = int(rng.integers(2, 5))
        a = rng.standard_normal((m, m))
        p = min_eig_problem(0.5 * (a + a.T))
        sol = solve(p)
        assert sol.status == "Optimal", f"trial {trial}"
        report = check_certificate(p, sol)
        assert report["dual_stationarity"] <= 1e-7


def test_random_feasibility_problems_with_linear_rows():
    # minimize sum x over box-like SDP mixtures; compare against a direct
    # grid oracle on the scalar version
    p = make_problem(
        1, [1.0],
        [scalar_block(0, 1, 0.5, 1.0)],          # x >= -0.5
        lin=[(np.array([-1.0]), 2.0)],            # -x <= 2  (x >= -2)
    )
    sol = solve(p)
    assert sol.status == "Optimal"
    assert sol.x[0] == pytest.approx(-0.5, abs=1e-7)


def test_dump_load_round_trip():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 3))
    p = min_eig_problem(0.5 * (a + a.T))
    p.dual_flags = [1]
    text = dump_problem(p)
    q = load_problem(text)
    assert q.n == p.n
    assert np.array_equal(q.c, p.c)
    assert dump_problem(q) == text
    sol_p = solve(p)
    sol_q = solve(q)
    assert sol_q.primal_obj == pytest.approx(sol_p.primal_obj, abs=1e-9)


def test_two_block_problem_with_shared_variable():
    # minimize x0 + x1 with [x0 - 1] >= 0, [x1 - 2] >= 0 and x0+x1 <= 10
    p = make_problem(
        2, [1.0, 1.0],
        [scalar_block(0, 2, -1.0, 1.0), scalar_block(1, 2, -2.0, 1.0)],
        lin=[(np.array([1.0, 1.0]), 10.0)],
    )
    sol = solve(p)
    assert sol.status == "Optimal"
    assert sol.primal_obj == pytest.approx(3.0, abs=1e-7)


def test_matrix_block_lmi():
    # minimize t s.t. [[t, 1], [1, t]] >= 0  ->  t = 1
    blk = SDPBlock(size=2, var_idx=np.array([0]),
                   F0=np.array([[0.0, 1.0], [1.0, 0.0]]),
                   F=np.array([np.eye(2)]))
    p = make_problem(1, [1.0], [blk])
    sol = solve(p)
    assert sol.status == "Optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
