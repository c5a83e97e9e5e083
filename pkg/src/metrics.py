"""
metrics.py
Mesures de qualité d'une relaxation : écart d'optimalité, violation cumulée
normalisée (après AC-PF) et distance moyenne normalisée à l'optimum local
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from dotenv import load_dotenv

from src.acpf import PfSolution
from src.formulations import OperatingPoint
from src.network import Network

load_dotenv()

VIOL_TOL = float(os.getenv("OPF_VIOL_TOL", "1e-3"))         # 0.1 % de la plage
FEASIBLE_PCT = float(os.getenv("OPF_FEASIBLE_PCT", "0.1"))  # seuil AC-faisable (%)
LOG_FLOOR = 1e-6

QUANTITIES = ("pg", "qg", "vm", "theta_ij", "s_ij")


@dataclass
class MetricsReport:
    opt_gap_pct: float | None
    viol: dict[str, float] | None
    viol_total: float | None
    dist: dict[str, float] | None
    dist_avg: float | None
    theta_included: bool
    ac_feasible: bool
    pf_converged: bool
    excluded: list[str] = field(default_factory=list)

    def to_row(self) -> dict:
        row = {
            "opt_gap_pct": self.opt_gap_pct,
            "viol_total": self.viol_total,
            "dist_avg": self.dist_avg,
            "ac_feasible": self.ac_feasible,
            "pf_converged": self.pf_converged,
            "theta_included": self.theta_included,
        }
        for q in QUANTITIES:
            row[f"viol_{q}"] = None if self.viol is None else self.viol.get(q)
            row[f"dist_{q}"] = None if self.dist is None else self.dist.get(q)
        row["excluded"] = ";".join(self.excluded)
        return row


# ---------------------------------------------------------------
# Grandeurs et bornes
# ---------------------------------------------------------------

def _bounds(net: Network) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(min, max) par grandeur ; s_ij sur les seules branches limitées."""
    limited = np.array([br.limited for br in net.branches], dtype=bool)
    smax = net.arrays("s_max", "branches")
    return {
        "pg": (net.arrays("pmin", "gens"), net.arrays("pmax", "gens")),
        "qg": (net.arrays("qmin", "gens"), net.arrays("qmax", "gens")),
        "vm": (net.arrays("vmin"), net.arrays("vmax")),
        "theta_ij": (net.arrays("ang_min", "branches"), net.arrays("ang_max", "branches")),
        "s_ij": (np.zeros(int(limited.sum())), smax[limited]),
    }


def _values(net: Network, point: OperatingPoint) -> dict[str, np.ndarray | None]:
    limited = np.array([br.limited for br in net.branches], dtype=bool)
    va = None if point.va is None else np.asarray(point.va, dtype=float)
    s = None
    if point.s_from is not None and point.s_to is not None:
        s = np.maximum(np.abs(point.s_from), np.abs(point.s_to))[limited]
    return {
        "pg": point.pg,
        "qg": None if point.qg is None else np.asarray(point.qg, dtype=float),
        "vm": point.vm,
        "theta_ij": None if va is None else va[net.f_idx] - va[net.t_idx],
        "s_ij": s,
    }


def zero_range_elements(net: Network) -> list[str]:
    """Éléments de plage nulle (xmax = xmin), exclus des normalisations."""
    out = []
    labels = {
        "pg": [f"gen@{g.bus}#{k}" for k, g in enumerate(net.gens)],
        "qg": [f"gen@{g.bus}#{k}" for k, g in enumerate(net.gens)],
        "vm": [f"bus{b.id}" for b in net.buses],
        "theta_ij": [f"{br.f_bus}-{br.t_bus}#{k}" for k, br in enumerate(net.branches)],
        "s_ij": [f"{br.f_bus}-{br.t_bus}#{k}" for k, br in enumerate(net.branches) if br.limited],
    }
    for q, (lo, hi) in _bounds(net).items():
        for k in np.flatnonzero(hi - lo <= 0):
            out.append(f"{q}:{labels[q][k]}")
    return out


# ---------------------------------------------------------------
# Mesures
# ---------------------------------------------------------------

def optimality_gap(f_relax: float, f_local: float) -> float:
    """(1 − f_relax/f_local)·100."""
    if f_local <= 0:
        raise ValueError(f"objectif local {f_local} ≤ 0 : écart d'optimalité non défini")
    return (1.0 - f_relax / f_local) * 100.0


def constraint_violation(net: Network, pf: PfSolution) -> dict[str, float] | None:
    """
    Violation cumulée normalisée (%) par grandeur, au point AC-PF.
    None (n.a.) si l'écoulement de charge n'a pas convergé.
    """
    if not pf.converged:
        return None
    limited = np.array([br.limited for br in net.branches], dtype=bool)
    values = {
        "pg": pf.gen_pg,
        "qg": pf.gen_qg,
        "vm": pf.vm,
        "theta_ij": pf.va[net.f_idx] - pf.va[net.t_idx],
        "s_ij": np.maximum(np.abs(pf.s_from), np.abs(pf.s_to))[limited],
    }
    out = {}
    for q, (lo, hi) in _bounds(net).items():
        x = np.asarray(values[q], dtype=float)
        rng = hi - lo
        keep = rng > 0
        if not keep.any():
            out[q] = 0.0
            continue
        v = np.maximum.reduce([x[keep] - hi[keep], lo[keep] - x[keep], np.zeros(int(keep.sum()))]) / rng[keep]
        v[v < VIOL_TOL] = 0.0
        out[q] = float(v.sum() * 100.0)
    return out


def distance_to_local(net: Network, relax: OperatingPoint, local: OperatingPoint,
                      include_theta: bool = True) -> dict[str, float]:
    """
    Distance moyenne normalisée (%) par grandeur. Les grandeurs absentes d'un des
    deux points (qg du DC, θ du SDP) sont omises ; θ_ij omis si include_theta=False.
    """
    a, b = _values(net, relax), _values(net, local)
    out = {}
    for q, (lo, hi) in _bounds(net).items():
        if q == "theta_ij" and not include_theta:
            continue
        if a[q] is None or b[q] is None:
            continue
        rng = hi - lo
        keep = rng > 0
        if not keep.any():
            continue
        d = np.abs(np.asarray(a[q])[keep] - np.asarray(b[q])[keep]) / rng[keep]
        out[q] = float(d.mean() * 100.0)
    return out


def correlation(xs, ys) -> tuple[float, float]:
    """
    (Pearson sur log10 des valeurs seuillées à 1e-6, Spearman sur les valeurs brutes).
    """
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.size != ys.size:
        raise ValueError("échantillons de tailles différentes")
    ok = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = xs[ok], ys[ok]
    if xs.size < 3:
        raise ValueError(f"au moins 3 paires requises (reçu {xs.size})")
    lx = np.log10(np.maximum(xs, LOG_FLOOR))
    ly = np.log10(np.maximum(ys, LOG_FLOOR))
    pearson = float(stats.pearsonr(lx, ly)[0]) if np.ptp(lx) > 0 and np.ptp(ly) > 0 else float("nan")
    spearman = float(stats.spearmanr(xs, ys)[0])
    return pearson, spearman


def evaluate(net: Network, point: OperatingPoint, pf: PfSolution | None,
             local: OperatingPoint | None, f_relax: float | None, f_local: float | None,
             include_theta: bool | None = None) -> MetricsReport:
    """Assemble le rapport complet pour un point de relaxation."""
    if include_theta is None:
        include_theta = point.va is not None
    gap = optimality_gap(f_relax, f_local) if f_relax is not None and f_local is not None else None
    viol = constraint_violation(net, pf) if pf is not None else None
    total = None if viol is None else float(sum(viol.values()))
    dist = distance_to_local(net, point, local, include_theta) if local is not None else None
    dist_avg = float(np.mean(list(dist.values()))) if dist else None
    return MetricsReport(
        opt_gap_pct=gap, viol=viol, viol_total=total, dist=dist, dist_avg=dist_avg,
        theta_included=bool(include_theta and dist is not None and "theta_ij" in dist),
        ac_feasible=total is not None and total < FEASIBLE_PCT,
        pf_converged=pf is not None and pf.converged,
        excluded=zero_range_elements(net),
    )
