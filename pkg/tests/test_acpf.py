"""
Tests unitaires pour acpf.py
"""

import math
import pytest
import os
import sys

import numpy as np
from scipy.optimize import brentq

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.acpf import PfSettings, PfSpec, _share, make_pf_spec, pf_to_point, run_pf, solve_pf
from src.formulations import OperatingPoint
from src.network import Branch, Bus, Gen, Network, NetworkError, load_case
from src.nlp import solve_local

CASES = os.path.join(os.path.dirname(__file__), "..", "data", "cases")


def _two_bus(pd: float, qd: float) -> Network:
    return Network(
        name="deux_bus", base_mva=100.0,
        buses=(Bus(1, bus_type=3), Bus(2, pd=pd, qd=qd)),
        gens=(Gen(1, 0.0, 1.0, -1.0, 1.0, c1=1.0),),
        branches=(Branch(1, 2, 0.0, 0.1),),
    )


@pytest.fixture(scope="module")
def case9():
    return load_case(os.path.join(CASES, "case9.m"))


def test_two_bus_oracle():
    """Vérifie |V2| et θ2 contre la solution analytique d'une ligne purement réactive"""
    net = _two_bus(0.1, 0.05)
    # x·P = v·sin δ = 0.01 ; x·Q = v·cos δ − v² = 0.005
    v = brentq(lambda v: math.sqrt(v * v - 1e-4) - v * v - 0.005, 0.9, 1.0, xtol=1e-14)
    pf = run_pf(net, OperatingPoint(pg=[0.1], vm=[1.0, 1.0], source="test"))
    assert pf.converged
    assert pf.vm[1] == pytest.approx(v, abs=1e-6)
    assert pf.va[1] == pytest.approx(-math.asin(0.01 / v), abs=1e-6)
    assert pf.gen_pg[0] == pytest.approx(0.1, abs=1e-6)


def test_mismatch_history_decreases():
    """Vérifie la décroissance des écarts de puissance au fil des itérations"""
    pf = run_pf(_two_bus(0.1, 0.05), OperatingPoint(pg=[0.1], vm=[1.0, 1.0]))
    hist = pf.mismatch_history
    assert hist[-1] < hist[0]
    assert hist[-1] <= 1e-8
    assert pf.iters == len(hist) - 1


def test_non_convergence_reported():
    """Vérifie qu'une charge infaisable donne converged=False sans exception"""
    pf = run_pf(_two_bus(50.0, 10.0), OperatingPoint(pg=[1.0], vm=[1.0, 1.0]),
                PfSettings(max_iter=20))
    assert not pf.converged


def test_round_trip_from_local_optimum(case9):
    """Vérifie que l'AC-PF retrouve l'optimum local dont il part"""
    local = solve_local(case9)
    pf = run_pf(case9, local.point)
    assert pf.converged
    assert np.allclose(pf.vm, local.point.vm, atol=1e-5)
    assert np.allclose(pf.va, local.point.va, atol=1e-5)
    assert np.allclose(pf.gen_pg, local.point.pg, atol=1e-4)
    assert np.allclose(pf.gen_qg, local.point.qg, atol=1e-4)


def test_pv_setpoints_from_point(case9):
    """Vérifie les consignes PV et le nœud bilan issus d'un point"""
    point = OperatingPoint(pg=[0.9, 1.3, 0.9], vm=np.full(9, 1.02))
    spec = make_pf_spec(case9, point)
    assert spec.slack_bus == case9.slack_bus()
    assert spec.slack_bus not in spec.pv_buses
    assert sorted(spec.pv_buses + spec.pq_buses + [spec.slack_bus]) == list(range(1, 10))
    assert np.allclose(spec.pv_vm, 1.02)


def test_spec_rejects_slack_as_pv():
    """Vérifie qu'un nœud bilan ne peut pas être PV"""
    with pytest.raises(NetworkError):
        PfSpec(slack_bus=1, pv_buses=[1], pv_p=np.zeros(1), pv_vm=np.ones(1),
               pq_buses=[2], slack_vm=1.0, gen_pg=np.zeros(1))


def test_share_proportional_to_range():
    """Vérifie la répartition au prorata des plages"""
    assert _share(1.0, np.zeros(2), np.array([1.0, 3.0])) == pytest.approx([0.25, 0.75])
    assert _share(1.0, np.full(2, 0.5), np.full(2, 0.5)) == pytest.approx([0.5, 0.5])


def test_pf_to_point(case9):
    """Vérifie la conversion d'une solution AC-PF en point de fonctionnement"""
    flat = OperatingPoint(pg=case9.arrays("pmax", "gens") / 2, vm=np.ones(9))
    pf = solve_pf(case9, make_pf_spec(case9, flat))
    point = pf_to_point(case9, pf)
    assert point.source == "acpf"
    assert point.objective == pytest.approx(case9.generation_cost(pf.gen_pg))
    assert pf.to_dict()["converged"] == pf.converged
