"""
reports.py
Schéma des rapports CSV/JSON, fusion des résultats par cas et statistiques de corrélation
"""

import glob
import json
import math
import os

import numpy as np
import pandas as pd

from src.metrics import QUANTITIES, correlation

SOLVE_COLUMNS = [
    "case", "formulation", "status", "objective", "f_local", "opt_gap_pct", "viol_total",
    "dist_avg", "ac_feasible", "pf_converged", "theta_included", "relax_count", "iters",
    "rank_ratio",
    *[f"viol_{q}" for q in QUANTITIES],
    *[f"dist_{q}" for q in QUANTITIES],
    "excluded", "flags", "error",
]
SWEEP_COLUMNS = [
    "case", "stage", "kind", "eps_pct", "status", "f_cost", "objective", "rank_ratio", "viol_total",
    "dist_avg", "ac_feasible", "subopt_pct", "iters",
]
WARMSTART_COLUMNS = [
    "case", "init", "available", "status", "iters", "objective", "dist_avg", "viol_total", "note",
]
DERIV_COLUMNS = ["case", "seed", "grad_f", "jac_g", "jac_h", "hess_lag", "max"]

SOLVE_FILE = "solve.csv"
CORPUS_FILE = "results.csv"
NA = "n.a."


def format_cell(column: str, value) -> str:
    """Format des tableaux : écart %.2f, violation %.2e, distance %.2f, absent → n.a."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NA
    if column.startswith("viol"):
        return f"{float(value):.2e}"
    if column.startswith(("opt_gap", "dist", "subopt")):
        return f"{float(value):.2f}"
    return str(value)


def format_row(row: dict, columns=("opt_gap_pct", "viol_total", "dist_avg")) -> str:
    return ", ".join(format_cell(c, row.get(c)) for c in columns)


def to_frame(rows: list[dict], columns: list[str]) -> pd.DataFrame:
    return pd.DataFrame(rows).reindex(columns=columns)


def write_rows(rows: list[dict], path: str, columns: list[str]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    to_frame(rows, columns).to_csv(path, index=False)
    return path


def append_rows(rows: list[dict], path: str, columns: list[str]) -> str:
    """Ajoute des lignes à un CSV existant (en-tête écrit à la création)."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    new = not os.path.exists(path)
    to_frame(rows, columns).to_csv(path, mode="a", header=new, index=False)
    return path


def write_json(data: dict, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)

    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"type non sérialisable : {type(o).__name__}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, default=default, allow_nan=True)
    return path


# ---------------------------------------------------------------
# Fusion et tableaux de corpus
# ---------------------------------------------------------------

def merge_results(result_dir: str, name: str = SOLVE_FILE) -> pd.DataFrame:
    """Concatène les CSV par cas (<dir>/<cas>/<name>) ; DataFrame vide si aucun."""
    files = sorted(glob.glob(os.path.join(result_dir, "*", name)))
    if not files:
        return pd.DataFrame(columns=SOLVE_COLUMNS)
    return pd.concat([pd.read_csv(f) for f in files], ignore_index=True)


def appendix_table(df: pd.DataFrame) -> pd.DataFrame:
    """Une ligne par cas, trois colonnes (écart, distance AC-faisable, distance locale) par formulation."""
    out = []
    for case, group in df.groupby("case", sort=True):
        row = {"case": case}
        for _, r in group.iterrows():
            f = r["formulation"]
            row[f"{f}_opt_gap"] = format_cell("opt_gap_pct", _clean(r.get("opt_gap_pct")))
            row[f"{f}_viol"] = format_cell("viol_total", _clean(r.get("viol_total")))
            row[f"{f}_dist"] = format_cell("dist_avg", _clean(r.get("dist_avg")))
        out.append(row)
    return pd.DataFrame(out)


def _clean(v):
    if v is None:
        return None
    try:
        v = float(v)
    except (TypeError, ValueError):
        return None
    return None if math.isnan(v) else v


def correlation_table(df: pd.DataFrame) -> pd.DataFrame:
    """Pearson (log10) et Spearman entre écart, violation et distance, par formulation."""
    pairs = [("opt_gap_pct", "viol_total"), ("opt_gap_pct", "dist_avg"), ("viol_total", "dist_avg")]
    rows = []
    for form, group in df.groupby("formulation", sort=True):
        for a, b in pairs:
            sub = group[[a, b]].apply(pd.to_numeric, errors="coerce").dropna()
            try:
                pearson, spearman = correlation(sub[a].to_numpy(), sub[b].to_numpy())
            except ValueError:
                continue
            rows.append({"formulation": form, "x": a, "y": b, "n": len(sub),
                         "pearson_log10": pearson, "spearman": spearman})
    return pd.DataFrame(rows, columns=["formulation", "x", "y", "n", "pearson_log10", "spearman"])
