"""
acpf.py
Écoulement de charge AC par Newton-Raphson (coordonnées polaires) :
générateurs en nœuds PV, plus gros générateur en nœud bilan
"""

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from dotenv import load_dotenv

from src.formulations import OperatingPoint
from src.network import Network, NetworkError, branch_matrices, ybus

load_dotenv()

PF_TOL = float(os.getenv("OPF_PF_TOL", "1e-8"))
PF_MAX_ITER = int(os.getenv("OPF_PF_MAX_ITER", "50"))


@dataclass
class PfSettings:
    tol: float = PF_TOL
    max_iter: int = PF_MAX_ITER


@dataclass
class PfSpec:
    slack_bus: int
    pv_buses: list[int]
    pv_p: np.ndarray
    pv_vm: np.ndarray
    pq_buses: list[int]
    slack_vm: float
    gen_pg: np.ndarray

    def __post_init__(self):
        if self.slack_bus in self.pv_buses or self.slack_bus in self.pq_buses:
            raise NetworkError("le nœud bilan ne peut pas être PV ou PQ")


@dataclass
class PfSolution:
    vm: np.ndarray
    va: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    s_from: np.ndarray
    s_to: np.ndarray
    converged: bool
    iters: int
    max_mismatch: float
    gen_pg: np.ndarray | None = None
    gen_qg: np.ndarray | None = None
    mismatch_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        def carr(v):
            return [[float(z.real), float(z.imag)] for z in v]

        return {
            "converged": self.converged, "iters": self.iters, "max_mismatch": self.max_mismatch,
            "vm": self.vm.tolist(), "va": self.va.tolist(), "pg": self.pg.tolist(), "qg": self.qg.tolist(),
            "s_from": carr(self.s_from), "s_to": carr(self.s_to),
            "gen_pg": None if self.gen_pg is None else self.gen_pg.tolist(),
            "gen_qg": None if self.gen_qg is None else self.gen_qg.tolist(),
            "mismatch_history": self.mismatch_history,
        }


# ---------------------------------------------------------------
# Construction du problème
# ---------------------------------------------------------------

def make_pf_spec(net: Network, point: OperatingPoint) -> PfSpec:
    """
    Consignes PV (P injecté, |V|) et nœud bilan à partir d'un point de fonctionnement.

    Raises:
        NetworkError: aucun générateur en service
    """
    if net.n_gen == 0:
        raise NetworkError(f"aucun générateur en service dans {net.name}")
    point.check_sizes(net)
    slack = net.slack_bus()
    gen_buses = sorted({g.bus for g in net.gens})
    pv = [b for b in gen_buses if b != slack]
    pq = [b.id for b in net.buses if b.id not in gen_buses]

    pg_bus = np.zeros(net.n_bus)
    np.add.at(pg_bus, net.gen_bus_idx, point.pg)
    idx = [net.bus_index[b] for b in pv]
    pd = net.arrays("pd")
    return PfSpec(
        slack_bus=slack,
        pv_buses=pv,
        pv_p=pg_bus[idx] - pd[idx],
        pv_vm=point.vm[idx].copy(),
        pq_buses=pq,
        slack_vm=float(point.vm[net.bus_index[slack]]),
        gen_pg=np.array(point.pg, dtype=float),
    )


def dsbus_dv(Y: sp.csr_matrix, V: np.ndarray):
    """Dérivées de S_bus par rapport à |V| et θ."""
    Ibus = Y @ V
    diagV = sp.diags(V)
    diagI = sp.diags(Ibus)
    diagVn = sp.diags(V / np.abs(V))
    dS_dVm = diagV @ (Y @ diagVn).conj() + diagI.conj() @ diagVn
    dS_dVa = 1j * diagV @ (diagI - Y @ diagV).conj()
    return dS_dVm, dS_dVa


def _share(total: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Répartit total entre générateurs au prorata de (hi − lo), parts égales si plages nulles."""
    rng = hi - lo
    if rng.sum() > 0:
        return lo + (total - lo.sum()) * rng / rng.sum()
    return np.full(lo.size, total / lo.size)


# ---------------------------------------------------------------
# Newton-Raphson
# ---------------------------------------------------------------

def solve_pf(net: Network, spec: PfSpec, tol: float = PF_TOL, max_iter: int = PF_MAX_ITER) -> PfSolution:
    """
    Newton complet sur les écarts (P aux nœuds PV+PQ, Q aux nœuds PQ), départ plat
    pour les inconnues. Les limites réactives ne sont pas appliquées.
    Un jacobien singulier ou une divergence donne converged=False.
    """
    Y = ybus(net)
    ref = net.bus_index[spec.slack_bus]
    pv = np.array([net.bus_index[b] for b in spec.pv_buses], dtype=int)
    pq = np.array([net.bus_index[b] for b in spec.pq_buses], dtype=int)
    pvpq = np.r_[pv, pq]

    s_bus = -(net.arrays("pd") + 1j * net.arrays("qd"))
    s_bus[pv] += spec.pv_p + net.arrays("pd")[pv]

    vm = np.ones(net.n_bus)
    vm[ref] = spec.slack_vm
    vm[pv] = spec.pv_vm
    va = np.zeros(net.n_bus)
    V = vm * np.exp(1j * va)

    def mismatch(V):
        mis = V * np.conj(Y @ V) - s_bus
        return np.r_[mis[pvpq].real, mis[pq].imag]

    F = mismatch(V)
    history = [float(np.linalg.norm(F, np.inf)) if F.size else 0.0]
    converged = history[0] <= tol
    it = 0
    n1 = pvpq.size
    while not converged and it < max_iter:
        dS_dVm, dS_dVa = dsbus_dv(Y, V)
        J = sp.vstack([
            sp.hstack([dS_dVa[pvpq][:, pvpq].real, dS_dVm[pvpq][:, pq].real]),
            sp.hstack([dS_dVa[pq][:, pvpq].imag, dS_dVm[pq][:, pq].imag]),
        ], format="csc")
        try:
            dx = -splu(J).solve(F)
        except RuntimeError:
            break
        it += 1
        va[pvpq] += dx[:n1]
        vm[pq] += dx[n1:]
        V = vm * np.exp(1j * va)
        F = mismatch(V)
        history.append(float(np.linalg.norm(F, np.inf)))
        if not np.isfinite(history[-1]) or np.any(vm <= 0):
            break
        converged = history[-1] <= tol

    Yf, Yt, _, _ = branch_matrices(net)
    s_from = V[net.f_idx] * np.conj(Yf @ V)
    s_to = V[net.t_idx] * np.conj(Yt @ V)
    s_gen = V * np.conj(Y @ V) + net.arrays("pd") + 1j * net.arrays("qd")

    gen_pg = np.array(spec.gen_pg, dtype=float)
    gen_qg = np.zeros(net.n_gen)
    for k in {int(i) for i in net.gen_bus_idx}:
        gens = np.flatnonzero(net.gen_bus_idx == k)
        qmin = np.array([net.gens[g].qmin for g in gens])
        qmax = np.array([net.gens[g].qmax for g in gens])
        gen_qg[gens] = _share(s_gen[k].imag, qmin, qmax)
        if k == ref:
            pmin = np.array([net.gens[g].pmin for g in gens])
            pmax = np.array([net.gens[g].pmax for g in gens])
            gen_pg[gens] = _share(s_gen[k].real, pmin, pmax)

    return PfSolution(
        vm=vm, va=va, pg=s_gen.real, qg=s_gen.imag, s_from=s_from, s_to=s_to,
        converged=bool(converged), iters=it, max_mismatch=history[-1],
        gen_pg=gen_pg, gen_qg=gen_qg, mismatch_history=history,
    )


def run_pf(net: Network, point: OperatingPoint, settings: PfSettings | None = None) -> PfSolution:
    st = settings or PfSettings()
    pf = solve_pf(net, make_pf_spec(net, point), tol=st.tol, max_iter=st.max_iter)
    if not pf.converged:
        print(f"⚠️ AC-PF {net.name} ({point.source}) non convergé après {pf.iters} itérations")
    return pf


def pf_to_point(net: Network, pf: PfSolution) -> OperatingPoint:
    return OperatingPoint(
        pg=pf.gen_pg, qg=pf.gen_qg, vm=pf.vm, va=pf.va, s_from=pf.s_from, s_to=pf.s_to,
        objective=net.generation_cost(pf.gen_pg), source="acpf",
    )


# Test rapide
if __name__ == "__main__":
    from src.network import CASE_DIR, load_case

    net = load_case(os.path.join(CASE_DIR, "case9.m"))
    flat = OperatingPoint(pg=net.arrays("pmax", "gens") / 2, vm=np.ones(net.n_bus), source="flat")
    pf = run_pf(net, flat)
    print(f"{'✅' if pf.converged else '❌'} {pf.iters} itérations, écart {pf.max_mismatch:.2e}")
    print(f"   |V| = {np.round(pf.vm, 4)}")
    print(f"   θ (deg) = {np.round(np.degrees(pf.va), 3)}")
