"""
Tests unitaires pour conic.py
"""

import itertools
import pytest
import os
import sys

import numpy as np
import scipy.sparse as sp

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.conic import (
    ConeProgram, ConeSettings, InfeasibleStructureError, OK_STATUSES, NonnegCone, PsdCone,
    dump_program, load_program, presolve_scale, psd_order, smat, solve, svec,
)
from src.program_builder import Model, lsum


def _psd_trace_program(n: int) -> ConeProgram:
    """min tr X  s.c.  diag X = 1, X ⪰ 0"""
    c = svec(np.eye(n))
    rows = []
    for k in range(n):
        E = np.zeros((n, n))
        E[k, k] = 1.0
        rows.append(svec(E))
    return ConeProgram(c=c, A=sp.csr_matrix(np.array(rows)), b=np.ones(n), cones=[("psd", n)], name="trace")


def test_lp_simple():
    """Vérifie un PL à deux variables : min x1, x1 + x2 = 1"""
    lp = ConeProgram(c=[1.0, 0.0], A=sp.csr_matrix([[1.0, 1.0]]), b=[1.0], cones=[("nonneg", 2)])
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.obj_primal == pytest.approx(0.0, abs=1e-7)
    assert sol.x == pytest.approx([0.0, 1.0], abs=1e-6)


def test_psd_identity_exact():
    """Vérifie min tr X sous diag X = 1 (optimum n, X = I possible)"""
    sol = solve(_psd_trace_program(4))
    assert sol.status == "optimal"
    assert sol.obj_primal == pytest.approx(4.0, abs=1e-7)


def test_soc_norm():
    """Vérifie min t sous t ≥ ‖(3, 4)‖"""
    prog = ConeProgram(c=[1.0, 0.0, 0.0], A=sp.csr_matrix([[0, 1.0, 0], [0, 0, 1.0]]),
                       b=[3.0, 4.0], cones=[("soc", 3)])
    sol = solve(prog)
    assert sol.status in OK_STATUSES
    assert sol.obj_primal == pytest.approx(5.0, abs=1e-7)


def test_rotated_soc():
    """Vérifie min u sous 2·u·v ≥ x², v = 1, x = 2 (u = 2)"""
    prog = ConeProgram(c=[1.0, 0.0, 0.0], A=sp.csr_matrix([[0, 1.0, 0], [0, 0, 1.0]]),
                       b=[1.0, 2.0], cones=[("rsoc", 3)])
    sol = solve(prog)
    assert sol.status in OK_STATUSES
    assert sol.obj_primal == pytest.approx(2.0, abs=1e-6)


def test_free_and_mixed_cones():
    """Vérifie un programme mêlant variable libre et cône : min t + y/2, t ≥ |y − 1|"""
    # variables : y (libre) | t, r (soc) avec r = y − 1
    prog = ConeProgram(c=[0.5, 1.0, 0.0], A=sp.csr_matrix([[1.0, 0.0, -1.0]]), b=[1.0],
                       cones=[("free", 1), ("soc", 2)])
    sol = solve(prog)
    assert sol.status in OK_STATUSES
    assert sol.obj_primal == pytest.approx(0.5, abs=1e-6)
    assert sol.x[0] == pytest.approx(1.0, abs=1e-4)


def _vertex_oracle(c, A, b):
    """Énumère les sommets de {A x ≤ b, 0 ≤ x ≤ 1} et renvoie le minimum de cᵀx."""
    n = c.size
    G = np.vstack([A, -np.eye(n), np.eye(n)])
    h = np.r_[b, np.zeros(n), np.ones(n)]
    best = np.inf
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = min(best, float(c @ x))
    return best


@pytest.mark.parametrize("seed", range(100))
def test_random_lp_matches_vertex_oracle(seed):
    """Vérifie l'optimum de PL aléatoires contre l'énumération des sommets"""
    rng = np.random.default_rng(seed)
    n, m = 3, 3
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.2, 1.5, m)

    model = Model("lp")
    x = [model.add_var(f"x[{j}]", 0.0, 1.0) for j in range(n)]
    for i in range(m):
        model.le(lsum(A[i, j] * x[j] for j in range(n)), b[i])
    model.minimize(lsum(c[j] * x[j] for j in range(n)))
    sol = solve(model.build())

    expected = _vertex_oracle(c, A, b)
    assert sol.status in OK_STATUSES
    assert sol.obj_primal == pytest.approx(expected, abs=1e-6 * (1 + abs(expected)))


@pytest.mark.parametrize("seed", range(5))
def test_psd_min_eigenvalue_oracle(seed):
    """Vérifie min ⟨C, X⟩ sous tr X = 1 : valeur propre minimale de C"""
    rng = np.random.default_rng(seed)
    n = 4
    B = rng.normal(size=(n, n))
    C = (B + B.T) / 2
    prog = ConeProgram(c=svec(C), A=sp.csr_matrix(svec(np.eye(n))[None, :]), b=[1.0], cones=[("psd", n)])
    sol = solve(prog)
    assert sol.status in OK_STATUSES
    assert sol.obj_primal == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-6)


def test_residuals_on_optimal():
    """Vérifie résidus et saut de dualité relatifs ≤ 1e-7 à l'optimum"""
    sol = solve(_psd_trace_program(3))
    assert sol.status == "optimal"
    assert sol.pres <= 1e-7
    assert sol.dres <= 1e-7
    assert sol.gap_rel <= 1e-7
    assert sol.obj_dual == pytest.approx(sol.obj_primal, abs=1e-6)


def test_presolve_preserves_optimum():
    """Vérifie que l'équilibrage de Ruiz ne change pas l'optimum"""
    lp = ConeProgram(c=[1e3, 2.0, 0.0], A=sp.csr_matrix([[1e4, 1.0, 0.0], [0.0, 1e-2, 1.0]]),
                     b=[1e4, 5.0], cones=[("nonneg", 3)])
    scaled, _ = presolve_scale(lp)
    absA = abs(scaled.A).max(axis=1).toarray().ravel()
    assert np.all(np.abs(absA - 1.0) < 0.1)
    with_scale = solve(lp, ConeSettings(scale=True))
    without = solve(lp, ConeSettings(scale=False))
    assert with_scale.obj_primal == pytest.approx(without.obj_primal, rel=1e-6)


def test_primal_infeasible_lp():
    """Vérifie qu'un PL infaisable n'est pas déclaré optimal"""
    lp = ConeProgram(c=[1.0, 1.0], A=sp.csr_matrix([[1.0, 1.0]]), b=[-1.0], cones=[("nonneg", 2)])
    sol = solve(lp, ConeSettings(max_iter=100))
    assert not sol.ok
    assert sol.status in ("primal_infeasible", "stall", "iteration_limit")


def test_dual_infeasible_lp():
    """Vérifie qu'un PL non borné n'est pas déclaré optimal"""
    lp = ConeProgram(c=[-1.0, 0.0], A=sp.csr_matrix([[1.0, -1.0]]), b=[0.0], cones=[("nonneg", 2)])
    sol = solve(lp, ConeSettings(max_iter=100))
    assert not sol.ok
    assert sol.status in ("dual_infeasible", "stall", "iteration_limit")


def test_structurally_rank_deficient():
    """Vérifie l'erreur sur une matrice A structurellement déficiente"""
    lp = ConeProgram(c=[1.0, 1.0], A=sp.csr_matrix([[1.0, 0.0], [2.0, 0.0]]), b=[1.0, 2.0],
                     cones=[("nonneg", 2)])
    with pytest.raises(InfeasibleStructureError):
        solve(lp)


def test_zero_row_with_rhs():
    """Vérifie l'erreur sur une ligne nulle à second membre non nul"""
    lp = ConeProgram(c=[1.0], A=sp.csr_matrix([[0.0]]), b=[1.0], cones=[("nonneg", 1)])
    with pytest.raises(InfeasibleStructureError):
        solve(lp, ConeSettings(scale=False))


def test_program_validation():
    """Vérifie le contrôle des dimensions et des cônes"""
    with pytest.raises(ValueError):
        ConeProgram(c=[1.0, 0.0], A=sp.csr_matrix([[1.0, 1.0]]), b=[1.0], cones=[("nonneg", 3)])
    with pytest.raises(ValueError):
        ConeProgram(c=[1.0], A=sp.csr_matrix([[1.0]]), b=[1.0], cones=[("cube", 1)])


def test_svec_inner_product():
    """Vérifie ⟨svec A, svec B⟩ = tr(AB) et smat ∘ svec = identité"""
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    A, B = A + A.T, B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))
    assert np.allclose(smat(svec(A), 4), A)
    assert psd_order(10) == 4
    with pytest.raises(ValueError):
        psd_order(7)


def test_dump_and_load_program():
    """Vérifie l'export texte puis la relecture d'un programme"""
    prog = _psd_trace_program(3)
    prog.offset = 1.5
    back = load_program(dump_program(prog))
    assert back.cones == prog.cones
    assert back.offset == 1.5
    assert np.allclose(back.c, prog.c)
    assert np.allclose(back.b, prog.b)
    assert np.allclose(back.A.toarray(), prog.A.toarray())
    assert solve(back).obj_primal == pytest.approx(4.5, abs=1e-7)


def test_dump_writes_plain_floats():
    """Vérifie que l'export texte n'écrit que des flottants Python"""
    prog = _psd_trace_program(2)
    prog.offset = np.float64(0.25)
    text = dump_program(prog)
    assert "np.float64" not in text
    assert load_program(text).offset == 0.25


def test_psd_interior_check():
    """Vérifie le test d'intériorité du cône SDP (Cholesky)"""
    cone = PsdCone(0, 3)
    assert cone.interior(svec(np.eye(3)))
    assert not cone.interior(svec(np.diag([1.0, 1.0, -1e-9])))
    assert not cone.interior(svec(np.diag([1.0, 1.0, 0.0])))
    assert not NonnegCone(0, 2).interior(np.array([1.0, 0.0]))


def test_psd_rank_one_optimum():
    """Vérifie un optimum de rang 1 sur le bord du cône : statut optimal, valeur propre minimale"""
    C = np.diag([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    n = C.shape[0]
    prog = ConeProgram(c=svec(C), A=sp.csr_matrix(svec(np.eye(n))[None, :]), b=[1.0], cones=[("psd", n)])
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.obj_primal == pytest.approx(1.0, abs=1e-6)
