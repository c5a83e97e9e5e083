"""
recovery.py
Récupération de points AC-faisables : balayage des pénalités SDP (réactive,
trace, pertes de branche), raffinement autour du meilleur poids et banc
d'essai des démarrages à chaud du solveur NLP
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from dotenv import load_dotenv

from src.acpf import PfSettings, run_pf
from src.conic import ConeSettings, solve
from src.formulations import (
    AngleRelaxationError, ExtractionError, OperatingPoint, PenaltySpec,
    build_sdp, extract_point, rank_info, solve_formulation,
)
from src.metrics import FEASIBLE_PCT, constraint_violation, distance_to_local, evaluate
from src.network import Network
from src.nlp import NlpResult, NlpSettings, solve_local

load_dotenv()

DEFAULT_GRID_PCT = tuple(10.0 ** k for k in range(-5, 11))
SWEEP_KINDS = ("reactive", "trace", "branch_loss")
SWEEP_JOBS = int(os.getenv("OPF_SWEEP_JOBS", "1"))
WARMSTART_INITS = ("flat", "dc", "qc", "sdp")


# ---------------------------------------------------------------
# Types
# ---------------------------------------------------------------

@dataclass
class SweepRow:
    kind: str
    eps_pct: float
    status: str
    f_cost: float | None = None
    objective: float | None = None
    rank_ratio: float | None = None
    viol_total: float | None = None
    dist_avg: float | None = None
    ac_feasible: bool = False
    subopt_pct: float | None = None
    iters: int = 0
    point: OperatingPoint | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            "kind": self.kind, "eps_pct": self.eps_pct, "status": self.status,
            "f_cost": self.f_cost, "objective": self.objective, "rank_ratio": self.rank_ratio,
            "viol_total": self.viol_total, "dist_avg": self.dist_avg,
            "ac_feasible": self.ac_feasible, "subopt_pct": self.subopt_pct, "iters": self.iters,
        }


@dataclass
class KindSummary:
    eps_min: float | None
    eps_max: float | None
    gap_min: float | None
    gap_max: float | None
    n_feasible: int


@dataclass
class SweepResult:
    case: str
    status: str                     # ok | exact | sdp_failed
    f_cost0: float | None = None
    f_local: float | None = None
    local: OperatingPoint | None = field(default=None, repr=False)
    rows: list[SweepRow] = field(default_factory=list)
    summary: dict[str, KindSummary] = field(default_factory=dict)
    subset_observed: bool | None = None

    def to_rows(self) -> list[dict]:
        return [{"case": self.case, **r.to_row()} for r in self.rows]

    def summary_dict(self) -> dict:
        return {
            "case": self.case, "status": self.status, "f_cost0": self.f_cost0, "f_local": self.f_local,
            "subset_observed": self.subset_observed,
            "kinds": {k: vars(s) for k, s in self.summary.items()},
        }


@dataclass
class RecoveryOutcome:
    method: str
    point: OperatingPoint
    suboptimality_pct: float | None
    ac_feasible: bool


@dataclass
class WarmstartRow:
    init: str
    available: bool
    status: str | None = None
    iters: int | None = None
    objective: float | None = None
    dist_avg: float | None = None
    viol_total: float | None = None
    note: str = ""
    result: NlpResult | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {"init": self.init, "available": self.available, "status": self.status,
                "iters": self.iters, "objective": self.objective, "dist_avg": self.dist_avg,
                "viol_total": self.viol_total, "note": self.note}


# ---------------------------------------------------------------
# Balayage des pénalités
# ---------------------------------------------------------------

def _subopt(f_cost: float | None, f_local: float | None) -> float | None:
    if f_cost is None or f_local is None or f_local <= 0:
        return None
    return (f_cost / f_local - 1.0) * 100.0


def _eval_grid_point(net: Network, kind: str, eps_pct: float, f_cost0: float,
                     local: OperatingPoint | None, f_local: float | None,
                     cone: ConeSettings | None, pf_settings: PfSettings | None) -> SweepRow:
    pen = PenaltySpec(kind=kind, eps_rel=eps_pct / 100.0, f_cost0=f_cost0)
    sol = solve(build_sdp(net, pen), cone)
    if not sol.ok:
        return SweepRow(kind, eps_pct, sol.status, iters=sol.iters)
    try:
        point = extract_point(net, "sdp", sol, pen=pen)
    except ExtractionError as exc:
        print(f"⚠️ {net.name} {kind} ε={eps_pct:g}% : {exc}")
        return SweepRow(kind, eps_pct, "extraction_error", iters=sol.iters)
    pf = run_pf(net, point, pf_settings)
    report = evaluate(net, point, pf, local, None, None, include_theta=False)
    f_cost = net.generation_cost(point.pg)
    return SweepRow(
        kind=kind, eps_pct=eps_pct, status=sol.status, f_cost=f_cost, objective=sol.obj_primal,
        rank_ratio=rank_info(sol).ratio, viol_total=report.viol_total, dist_avg=report.dist_avg,
        ac_feasible=report.ac_feasible, subopt_pct=_subopt(f_cost, f_local), iters=sol.iters,
        point=point,
    )


def _summarize(rows: list[SweepRow], kinds) -> dict[str, KindSummary]:
    out = {}
    for kind in kinds:
        feas = [r for r in rows if r.kind == kind and r.ac_feasible]
        gaps = [r.subopt_pct for r in feas if r.subopt_pct is not None]
        out[kind] = KindSummary(
            eps_min=min((r.eps_pct for r in feas), default=None),
            eps_max=max((r.eps_pct for r in feas), default=None),
            gap_min=min(gaps, default=None),
            gap_max=max(gaps, default=None),
            n_feasible=len(feas),
        )
    return out


def _subset_flag(summary: dict[str, KindSummary]) -> bool | None:
    if "reactive" not in summary:
        return None
    reactive_ok = summary["reactive"].n_feasible > 0
    return all(reactive_ok or s.n_feasible == 0 for k, s in summary.items() if k != "reactive")


def penalty_sweep(net: Network, kinds=SWEEP_KINDS, grid=DEFAULT_GRID_PCT,
                  local: NlpResult | OperatingPoint | None = None,
                  cone: ConeSettings | None = None, pf_settings: PfSettings | None = None,
                  nlp_settings: NlpSettings | None = None, jobs: int = SWEEP_JOBS) -> SweepResult:
    """
    Une résolution SDP pénalisée par (pénalité, ε) ; chaque point passe par l'AC-PF
    et les métriques. ε en % de l'objectif SDP non pénalisé f_cost0.

    Args:
        local: Référence locale (NlpResult ou point) ; résolue depuis un départ plat si None
        jobs: Nombre de résolutions simultanées (ordre des lignes conservé)
    """
    for kind in kinds:
        PenaltySpec(kind=kind, eps_rel=0.0, f_cost0=1.0)

    base = solve_formulation(net, "sdp", settings=cone)
    if base.point is None:
        print(f"❌ {net.name} : SDP non pénalisé en échec ({base.solution.status}), balayage abandonné")
        return SweepResult(case=net.name, status="sdp_failed")
    f_cost0 = base.solution.obj_primal

    if local is None:
        local = solve_local(net, settings=nlp_settings)
    if isinstance(local, NlpResult):
        f_local = local.objective if local.converged else None
        local_point = local.point if local.converged else None
    else:
        f_local, local_point = local.objective, local

    result = SweepResult(case=net.name, status="ok", f_cost0=f_cost0, f_local=f_local, local=local_point)

    pf0 = run_pf(net, base.point, pf_settings)
    base_report = evaluate(net, base.point, pf0, local_point, None, None, include_theta=False)
    if base_report.ac_feasible:
        print(f"✅ {net.name} : SDP exact, aucun poids de pénalité requis")
        f_cost = net.generation_cost(base.point.pg)
        rows = [SweepRow(kind, 0.0, base.solution.status, f_cost, f_cost0, base.rank.ratio,
                         base_report.viol_total, base_report.dist_avg, True,
                         _subopt(f_cost, f_local), base.solution.iters, base.point) for kind in kinds]
        result.status = "exact"
        result.rows = rows
        result.summary = _summarize(rows, kinds)
        result.subset_observed = _subset_flag(result.summary)
        return result

    tasks = [(kind, eps) for kind in kinds for eps in grid]
    print(f"⚙️ {net.name} : balayage de {len(tasks)} résolutions SDP pénalisées ({jobs} en parallèle)")

    def run(task):
        kind, eps = task
        return _eval_grid_point(net, kind, eps, f_cost0, local_point, f_local, cone, pf_settings)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]

    result.rows = rows
    result.summary = _summarize(rows, kinds)
    result.subset_observed = _subset_flag(result.summary)
    for kind, s in result.summary.items():
        if s.n_feasible:
            print(f"✅ {kind} : AC-faisable pour ε ∈ [{s.eps_min:g}, {s.eps_max:g}] %")
        else:
            print(f"⚠️ {kind} : aucun poids AC-faisable sur la grille")
    return result


def near_miss_eps(sweep: SweepResult, kind: str) -> float | None:
    """ε (%) de plus faible violation cumulée pour une pénalité."""
    rows = [r for r in sweep.rows if r.kind == kind and r.viol_total is not None]
    if not rows:
        return None
    return min(rows, key=lambda r: (r.viol_total, r.eps_pct)).eps_pct


def refine_penalty(net: Network, sweep: SweepResult, kind: str, around_eps: float | None = None,
                   factor_grid=None, cone: ConeSettings | None = None,
                   pf_settings: PfSettings | None = None) -> SweepResult:
    """
    Sous-grille géométrique autour de around_eps (par défaut : le ε de plus faible
    violation du balayage grossier), 9 points sur ×10^±0.5.
    """
    if sweep.status == "sdp_failed" or sweep.f_cost0 is None:
        return SweepResult(case=net.name, status=sweep.status)
    around = around_eps if around_eps is not None else near_miss_eps(sweep, kind)
    if around is None or around <= 0:
        return SweepResult(case=net.name, status=sweep.status, f_cost0=sweep.f_cost0,
                           f_local=sweep.f_local, local=sweep.local)
    factors = factor_grid if factor_grid is not None else 10.0 ** np.linspace(-0.5, 0.5, 9)
    rows = [_eval_grid_point(net, kind, around * float(f), sweep.f_cost0, sweep.local,
                             sweep.f_local, cone, pf_settings) for f in factors]
    summary = _summarize(rows, [kind])
    print(f"📊 {net.name} {kind} : raffinement autour de {around:g} %, "
          f"{summary[kind].n_feasible} poids AC-faisables")
    return SweepResult(case=net.name, status="ok", f_cost0=sweep.f_cost0, f_local=sweep.f_local,
                       local=sweep.local, rows=rows, summary=summary)


def best_recovery(sweep: SweepResult, f_local: float | None = None) -> RecoveryOutcome | None:
    """Point AC-faisable de plus faible coût parmi les lignes du balayage."""
    f_ref = f_local if f_local is not None else sweep.f_local
    feas = [r for r in sweep.rows if r.ac_feasible and r.point is not None]
    if not feas:
        return None
    best = min(feas, key=lambda r: (r.f_cost, r.eps_pct))
    return RecoveryOutcome(method=f"penalty({best.kind}, {best.eps_pct:g}%)", point=best.point,
                           suboptimality_pct=_subopt(best.f_cost, f_ref), ac_feasible=True)


# ---------------------------------------------------------------
# Démarrages à chaud
# ---------------------------------------------------------------

def _init_point(net: Network, init: str, cone: ConeSettings | None) -> tuple[OperatingPoint | None, str]:
    if init == "flat":
        return None, ""
    try:
        run = solve_formulation(net, init, settings=cone, reconstruct_angles=init == "sdp")
    except (AngleRelaxationError, ExtractionError) as exc:
        return None, str(exc)
    if run.point is None:
        return None, f"relaxation {init} : {run.solution.status}"
    return run.point, "; ".join(run.notes)


def warmstart_bench(net: Network, inits=WARMSTART_INITS, nlp_settings: NlpSettings | None = None,
                    cone: ConeSettings | None = None,
                    pf_settings: PfSettings | None = None) -> list[WarmstartRow]:
    """
    NLP lancé depuis chaque initialisation (réglages identiques) ; distance du point
    initial au point final et violation AC-PF du point final.
    """
    rows = []
    for init in inits:
        point, note = _init_point(net, init, cone)
        if init != "flat" and point is None:
            print(f"⚠️ {net.name} : initialisation {init} indisponible ({note})")
            rows.append(WarmstartRow(init=init, available=False, note=note))
            continue
        res = solve_local(net, point, nlp_settings, label=init)
        dist = None
        viol = None
        if res.converged:
            if point is not None:
                d = distance_to_local(net, point, res.point, include_theta=point.va is not None)
                dist = float(np.mean(list(d.values()))) if d else None
            v = constraint_violation(net, run_pf(net, res.point, pf_settings))
            viol = None if v is None else float(sum(v.values()))
        rows.append(WarmstartRow(init=init, available=True, status=res.status, iters=res.iters,
                                 objective=res.objective, dist_avg=dist, viol_total=viol,
                                 note=note, result=res))
    return rows


def best_warmstart(rows: list[WarmstartRow], f_ref: float | None = None) -> RecoveryOutcome | None:
    """Initialisation donnant l'objectif local le plus faible."""
    done = [r for r in rows if r.result is not None and r.result.converged]
    if not done:
        return None
    best = min(done, key=lambda r: r.objective)
    sub = _subopt(best.objective, f_ref) if f_ref else None
    return RecoveryOutcome(method=f"warmstart({best.init})", point=best.result.point,
                           suboptimality_pct=sub,
                           ac_feasible=best.viol_total is not None and best.viol_total < FEASIBLE_PCT)


def objectives_agree(rows: list[WarmstartRow], rel_tol: float = 1e-5) -> bool:
    """Vrai si tous les objectifs convergés concordent à rel_tol près."""
    objs = [r.objective for r in rows if r.result is not None and r.result.converged]
    if len(objs) < 2:
        return True
    ref = min(objs)
    return all(math.isclose(o, ref, rel_tol=rel_tol) for o in objs)
