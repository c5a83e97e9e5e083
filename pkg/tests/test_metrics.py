"""
Tests unitaires pour metrics.py
"""

import math
import pytest
import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.acpf import PfSolution, run_pf
from src.formulations import OperatingPoint
from src.metrics import (
    FEASIBLE_PCT, constraint_violation, correlation, distance_to_local, evaluate,
    optimality_gap, zero_range_elements,
)
from src.network import Branch, Bus, Gen, Network, load_case
from src.nlp import solve_local

CASES = os.path.join(os.path.dirname(__file__), "..", "data", "cases")


@pytest.fixture(scope="module")
def net():
    return Network(
        name="deux_bus", base_mva=100.0,
        buses=(Bus(1, vmin=0.9, vmax=1.1, bus_type=3), Bus(2, pd=0.5, vmin=0.9, vmax=1.1)),
        gens=(Gen(1, 0.0, 1.0, -0.5, 0.5, c1=1.0),),
        branches=(Branch(1, 2, 0.0, 0.1, s_max=1.0, ang_min=-0.5, ang_max=0.5),),
    )


def _pf(vm=(1.0, 1.0), va=(0.0, -0.05), pg=0.5, qg=0.1, s=0.5 + 0.1j, converged=True) -> PfSolution:
    return PfSolution(
        vm=np.array(vm), va=np.array(va), pg=np.array([pg, 0.0]), qg=np.array([qg, 0.0]),
        s_from=np.array([s]), s_to=np.array([-s]), converged=converged, iters=3, max_mismatch=0.0,
        gen_pg=np.array([pg]), gen_qg=np.array([qg]),
    )


def _point(**kw) -> OperatingPoint:
    base = dict(pg=[0.5], qg=[0.1], vm=[1.0, 1.0], va=[0.0, -0.05],
                s_from=np.array([0.5 + 0.1j]), s_to=np.array([-0.5 - 0.1j]))
    base.update(kw)
    return OperatingPoint(**base)


def test_optimality_gap_examples():
    """Vérifie l'écart d'optimalité sur les exemples élémentaires"""
    assert optimality_gap(100.0, 100.0) == 0.0
    assert optimality_gap(99.0, 100.0) == pytest.approx(1.0)


def test_optimality_gap_requires_positive_local():
    """Vérifie l'erreur si l'objectif local est ≤ 0"""
    with pytest.raises(ValueError):
        optimality_gap(1.0, 0.0)


def test_feasible_point_has_zero_violation(net):
    """Vérifie qu'un point faisable a une violation nulle"""
    viol = constraint_violation(net, _pf())
    assert set(viol) == {"pg", "qg", "vm", "theta_ij", "s_ij"}
    assert all(v == 0.0 for v in viol.values())


def test_reactive_violation_example(net):
    """Vérifie qg = 0.6 pour qmax = 0.5, qmin = −0.5 : 10 %"""
    viol = constraint_violation(net, _pf(qg=0.6))
    assert viol["qg"] == pytest.approx(10.0)


def test_numerical_tolerance_zeroes_small_violations(net):
    """Vérifie que les violations sous 0.1 % de la plage sont ignorées"""
    assert constraint_violation(net, _pf(qg=0.5005))["qg"] == 0.0
    assert constraint_violation(net, _pf(qg=0.505))["qg"] == pytest.approx(0.5)


def test_violation_monotone_in_perturbation(net):
    """Vérifie la croissance de la violation avec l'écart à la borne"""
    v1 = constraint_violation(net, _pf(vm=(1.0, 1.15)))["vm"]
    v2 = constraint_violation(net, _pf(vm=(1.0, 1.2)))["vm"]
    assert 0 < v1 < v2
    t1 = constraint_violation(net, _pf(va=(0.0, -0.6)))["theta_ij"]
    t2 = constraint_violation(net, _pf(va=(0.0, -0.7)))["theta_ij"]
    assert 0 < t1 < t2


def test_thermal_violation(net):
    """Vérifie |S| = 1.2 pour s_max = 1 : 20 %"""
    viol = constraint_violation(net, _pf(s=1.2 + 0j))
    assert viol["s_ij"] == pytest.approx(20.0)


def test_unconverged_pf_is_na(net):
    """Vérifie n.a. (None) si l'AC-PF n'a pas convergé"""
    assert constraint_violation(net, _pf(converged=False)) is None
    report = evaluate(net, _point(), _pf(converged=False), _point(), 1.0, 1.0)
    assert report.viol_total is None
    assert not report.ac_feasible


def test_distance_to_itself_is_zero(net):
    """Vérifie x_dist(a, a) = 0 pour chaque grandeur"""
    d = distance_to_local(net, _point(), _point())
    assert set(d) == {"pg", "qg", "vm", "theta_ij", "s_ij"}
    assert all(v == 0.0 for v in d.values())


def test_distance_omits_missing_quantities(net):
    """Vérifie que qg (DC) et θ (SDP ou include_theta=False) sont omis"""
    dc = _point(qg=None)
    assert "qg" not in distance_to_local(net, dc, _point())
    assert "theta_ij" not in distance_to_local(net, _point(), _point(), include_theta=False)
    assert "theta_ij" not in distance_to_local(net, _point(va=None), _point())


def test_distance_value(net):
    """Vérifie la distance normalisée : |Δvm| = 0.02 sur une plage de 0.2 → 5 % en moyenne sur 2 bus"""
    d = distance_to_local(net, _point(vm=[1.0, 1.02]), _point())
    assert d["vm"] == pytest.approx(5.0)


def test_zero_range_elements_reported():
    """Vérifie la liste des éléments de plage nulle"""
    net = Network("fixe", 100.0, (Bus(1), Bus(2)), (Gen(1, 0.3, 0.3, -1.0, 1.0),),
                  (Branch(1, 2, 0.0, 0.1),))
    assert "pg:gen@1#0" in zero_range_elements(net)


def test_correlation():
    """Vérifie Pearson (log10) et Spearman sur des séries monotones"""
    xs = [1e-3, 1e-2, 1e-1, 1.0]
    ys = [2e-3, 2e-2, 2e-1, 2.0]
    pearson, spearman = correlation(xs, ys)
    assert pearson == pytest.approx(1.0)
    assert spearman == pytest.approx(1.0)
    with pytest.raises(ValueError):
        correlation([1.0, 2.0], [1.0, 2.0])


def test_correlation_floor_on_zeros():
    """Vérifie le seuil 1e-6 avant le logarithme (valeurs nulles admises)"""
    pearson, _ = correlation([0.0, 1.0, 10.0], [0.0, 1.0, 10.0])
    assert math.isfinite(pearson)


def test_evaluate_report(net):
    """Vérifie le rapport complet et sa ligne CSV"""
    report = evaluate(net, _point(), _pf(), _point(), 99.0, 100.0)
    assert report.opt_gap_pct == pytest.approx(1.0)
    assert report.viol_total == 0.0
    assert report.dist_avg == 0.0
    assert report.ac_feasible
    assert report.theta_included
    row = report.to_row()
    assert row["viol_qg"] == 0.0
    assert row["excluded"] == ""


def test_local_optimum_round_trip_is_feasible():
    """Vérifie optimum local → AC-PF → violation cumulée sous le seuil AC-faisable"""
    case9 = load_case(os.path.join(CASES, "case9.m"))
    local = solve_local(case9)
    assert local.converged
    report = evaluate(case9, local.point, run_pf(case9, local.point), local.point,
                      local.objective, local.objective)
    assert report.viol_total < FEASIBLE_PCT
    assert report.opt_gap_pct == 0.0
    assert report.dist_avg == pytest.approx(0.0, abs=1e-9)
