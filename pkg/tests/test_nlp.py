"""
Tests unitaires pour nlp.py
"""

import pytest
import os
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.network import Branch, Bus, Gen, Network, load_case
from src.nlp import (
    NlpProblem, NlpSettings, check_derivatives, random_interior_point, solve_local, warmstart_metrics,
)

CASES = os.path.join(os.path.dirname(__file__), "..", "data", "cases")


@pytest.fixture(scope="module")
def case9():
    return load_case(os.path.join(CASES, "case9.m"))


@pytest.fixture(scope="module")
def case14():
    return load_case(os.path.join(CASES, "case14.m"))


@pytest.fixture(scope="module")
def local9(case9):
    return solve_local(case9)


def test_case9_local_optimum(local9):
    """Vérifie l'optimum local de case9"""
    assert local9.converged
    assert local9.objective == pytest.approx(5296.69, rel=1e-3)
    assert local9.kkt_residual <= 1e-6


def test_case14_local_optimum(case14):
    """Vérifie l'optimum local de case14"""
    res = solve_local(case14)
    assert res.converged
    assert res.objective == pytest.approx(8081.53, rel=1e-3)


def test_solution_respects_bounds(case9, local9):
    """Vérifie les bornes de tension et de production à l'optimum"""
    p = local9.point
    assert np.all(p.vm >= case9.arrays("vmin") - 1e-6)
    assert np.all(p.vm <= case9.arrays("vmax") + 1e-6)
    assert np.all(p.pg >= case9.arrays("pmin", "gens") - 1e-6)
    assert np.all(p.pg <= case9.arrays("pmax", "gens") + 1e-6)
    assert p.va[case9.bus_index[case9.slack_bus()]] == 0.0


def test_warm_start_from_optimum(case9, local9):
    """Vérifie qu'un démarrage à chaud à l'optimum ne coûte pas plus d'itérations"""
    warm = solve_local(case9, local9.point, label="local")
    assert warm.converged
    assert warm.init == "local"
    assert warm.objective == pytest.approx(local9.objective, rel=1e-5)
    assert warm.iters <= local9.iters


def test_infeasible_load_not_converged():
    """Vérifie qu'une charge hors capacité ne converge pas"""
    net = Network(
        name="surcharge", base_mva=100.0,
        buses=(Bus(1, bus_type=3), Bus(2, pd=0.5)),
        gens=(Gen(1, 0.0, 0.1, -1.0, 1.0, c1=1.0),),
        branches=(Branch(1, 2, 0.01, 0.1),),
    )
    res = solve_local(net, settings=NlpSettings(max_iter=60))
    assert not res.converged
    assert res.status in ("infeasible", "iteration_limit")


@pytest.mark.parametrize("seed", range(10))
def test_derivatives_case14(case14, seed):
    """Vérifie gradient, jacobiens et hessien contre les différences finies (case14)"""
    report = check_derivatives(case14, seed=seed)
    assert report.grad_f <= 1e-6
    assert report.jac_g <= 1e-6
    assert report.jac_h <= 1e-6
    assert report.hess_lag <= 1e-4


def test_derivatives_with_flow_limits(case9):
    """Vérifie les dérivées des limites thermiques (case9 a des branches limitées)"""
    report = check_derivatives(case9, seed=3)
    assert report.max_error <= 1e-4
    assert set(report.to_dict()) == {"grad_f", "jac_g", "jac_h", "hess_lag", "max"}


def test_random_interior_point(case9):
    """Vérifie qu'un point aléatoire est strictement intérieur et reproductible"""
    a = random_interior_point(case9, seed=7)
    b = random_interior_point(case9, seed=7)
    assert np.allclose(a.vm, b.vm)
    assert np.all(a.vm > case9.arrays("vmin"))
    assert np.all(a.vm < case9.arrays("vmax"))


def test_problem_dimensions(case9):
    """Vérifie les dimensions du problème et les égalités fixées"""
    prob = NlpProblem(case9)
    assert prob.nx == 2 * 9 + 2 * 3
    assert prob.ref in prob.fixed_idx
    assert prob.g(prob.x_flat()).size == prob.neq
    assert prob.h(prob.x_flat()).size == prob.niq
    assert prob.jac_h(prob.x_flat()).shape == (prob.niq, prob.nx)


def test_flat_start_inside_bounds(case9):
    """Vérifie que le départ plat respecte les bornes"""
    prob = NlpProblem(case9)
    x = prob.x_flat()
    assert np.all(prob.h(x)[-(prob.ub_idx.size + prob.lb_idx.size):] <= 0)


def test_flat_start_zero_generation(case9):
    """Vérifie le départ plat : V = 1∠0 et S_G = 0 ramenés dans les bornes"""
    prob = NlpProblem(case9)
    va, vm, pg, qg = prob.split(prob.x_flat())
    assert np.all(va == 0.0)
    assert np.allclose(vm, np.clip(1.0, case9.arrays("vmin"), case9.arrays("vmax")))
    assert np.allclose(pg, np.clip(0.0, case9.arrays("pmin", "gens"), case9.arrays("pmax", "gens")))
    assert np.allclose(qg, np.clip(0.0, case9.arrays("qmin", "gens"), case9.arrays("qmax", "gens")))


def test_slack_angle_pinned(case9):
    """Vérifie que l'angle du bus d'équilibre vaut exactement 0 dans le point extrait"""
    prob = NlpProblem(case9)
    x = prob.x_flat()
    x[prob.ref] = 1e-19
    assert prob.to_point(x).va[prob.ref] == 0.0


def test_trace_written(case9, tmp_path):
    """Vérifie l'écriture de la trace d'itérations en CSV"""
    path = tmp_path / "trace.csv"
    res = solve_local(case9, settings=NlpSettings(trace_path=str(path)))
    df = pd.read_csv(path)
    assert len(df) == len(res.trace)
    assert {"it", "gamma", "objective", "feascond"} <= set(df.columns)


def test_warmstart_metrics(case9, local9):
    """Vérifie le tableau des démarrages : mêmes objectifs à la convergence"""
    rows = warmstart_metrics(case9, [("flat", None), ("local", local9.point)])
    assert [r.init for r in rows] == ["flat", "local"]
    assert all(r.converged for r in rows)
    assert rows[0].objective == pytest.approx(rows[1].objective, rel=1e-5)
