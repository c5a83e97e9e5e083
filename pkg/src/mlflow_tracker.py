"""
mlflow_tracker.py
Tracking des expériences avec MLflow (résolutions, balayages, démarrages à chaud)
"""

import math
import os
try:
    import mlflow
    MLFLOW_AVAILABLE = True
except ImportError:
    MLFLOW_AVAILABLE = False
    print("⚠️ MLflow non disponible — tracking désactivé")

from datetime import datetime
from dotenv import load_dotenv

load_dotenv()

MLFLOW_TRACKING_URI = os.getenv("MLFLOW_TRACKING_URI", "file:./mlruns")
MLFLOW_ENABLED = os.getenv("MLFLOW_ENABLED", "false").lower() in ("1", "true", "yes")
EXPERIMENT_NAME = os.getenv("MLFLOW_EXPERIMENT", "relaxopf")


def _active() -> bool:
    return MLFLOW_AVAILABLE and MLFLOW_ENABLED


def setup_mlflow():
    """Configure l'URI de tracking et l'expérience."""
    if not _active():
        return
    mlflow.set_tracking_uri(MLFLOW_TRACKING_URI)
    mlflow.set_experiment(EXPERIMENT_NAME)


def _metric(name: str, value):
    # MLflow refuse None ; inf/nan sont ignorés
    if value is None:
        return
    value = float(value)
    if math.isfinite(value):
        mlflow.log_metric(name, value)


def log_solve_run(case: str, formulation: str, status: str, objective: float | None,
                  opt_gap_pct: float | None, viol_total: float | None, dist_avg: float | None,
                  iters: int, duration_seconds: float):
    """
    Logge une résolution de relaxation et ses métriques.

    Args:
        case: Nom du cas
        formulation: 'dc', 'qc' ou 'sdp'
        status: Statut du solveur conique
        objective: Objectif de la relaxation ($)
        opt_gap_pct: Écart d'optimalité (%)
        viol_total: Violation cumulée normalisée (%)
        dist_avg: Distance moyenne à l'optimum local (%)
        iters: Itérations du solveur conique
        duration_seconds: Durée totale
    """
    if not _active():
        return
    setup_mlflow()

    with mlflow.start_run(run_name=f"solve_{case}_{formulation}_{datetime.now().strftime('%H%M%S')}"):
        mlflow.log_param("case", case)
        mlflow.log_param("formulation", formulation)
        mlflow.log_param("status", status)

        _metric("objective", objective)
        _metric("opt_gap_pct", opt_gap_pct)
        _metric("viol_total", viol_total)
        _metric("dist_avg", dist_avg)
        _metric("iters", iters)
        _metric("duration_seconds", duration_seconds)

        if viol_total is None:
            mlflow.set_tag("ac_feasibility", "n.a.")
        elif viol_total < 0.1:
            mlflow.set_tag("ac_feasibility", "feasible")
        else:
            mlflow.set_tag("ac_feasibility", "violated")

        print(f"📊 MLflow — résolution loggée : {case}/{formulation}, statut={status}")


def log_sweep_run(case: str, status: str, n_points: int, summary: dict, duration_seconds: float):
    """
    Logge un balayage de pénalités.

    Args:
        case: Nom du cas
        status: 'ok', 'exact' ou 'sdp_failed'
        n_points: Nombre de résolutions SDP pénalisées
        summary: {pénalité: KindSummary}
        duration_seconds: Durée du balayage
    """
    if not _active():
        return
    setup_mlflow()

    with mlflow.start_run(run_name=f"sweep_{case}_{datetime.now().strftime('%H%M%S')}"):
        mlflow.log_param("case", case)
        mlflow.log_param("status", status)
        mlflow.log_param("n_points", n_points)

        for kind, s in summary.items():
            _metric(f"{kind}_n_feasible", s.n_feasible)
            _metric(f"{kind}_eps_min", s.eps_min)
            _metric(f"{kind}_eps_max", s.eps_max)
            _metric(f"{kind}_gap_min", s.gap_min)
            _metric(f"{kind}_gap_max", s.gap_max)
        _metric("duration_seconds", duration_seconds)

        print(f"📊 MLflow — balayage loggué : {case}, {n_points} points")


def log_warmstart_run(case: str, rows: list[dict], duration_seconds: float):
    """
    Logge un banc d'essai de démarrages à chaud.

    Args:
        case: Nom du cas
        rows: Lignes WarmstartRow.to_row()
        duration_seconds: Durée du banc
    """
    if not _active():
        return
    setup_mlflow()

    with mlflow.start_run(run_name=f"warmstart_{case}_{datetime.now().strftime('%H%M%S')}"):
        mlflow.log_param("case", case)
        for row in rows:
            _metric(f"{row['init']}_iters", row["iters"])
            _metric(f"{row['init']}_objective", row["objective"])
            mlflow.set_tag(f"{row['init']}_status", row["status"] or "unavailable")
        _metric("duration_seconds", duration_seconds)

        print(f"📊 MLflow — démarrages à chaud loggués : {case}, {len(rows)} initialisations")


# Test rapide
if __name__ == "__main__":
    print("Test MLflow tracking...")
    log_solve_run(case="case9", formulation="sdp", status="optimal", objective=5296.69,
                  opt_gap_pct=0.0, viol_total=0.0, dist_avg=0.01, iters=25, duration_seconds=1.2)
    print("✅ Run loggué — lance 'mlflow ui' pour voir le dashboard")
