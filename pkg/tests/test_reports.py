"""
Tests unitaires pour reports.py
"""

import json
import pytest
import os
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.reports import (
    NA, SOLVE_COLUMNS, SWEEP_COLUMNS, append_rows, appendix_table, correlation_table,
    format_cell, format_row, merge_results, write_json, write_rows,
)


def test_solve_columns_are_stable():
    """Vérifie le schéma des colonnes du CSV de résolution"""
    assert SOLVE_COLUMNS[:14] == [
        "case", "formulation", "status", "objective", "f_local", "opt_gap_pct", "viol_total",
        "dist_avg", "ac_feasible", "pf_converged", "theta_included", "relax_count", "iters", "rank_ratio",
    ]
    assert "viol_qg" in SOLVE_COLUMNS and "dist_theta_ij" in SOLVE_COLUMNS
    assert SOLVE_COLUMNS[-3:] == ["excluded", "flags", "error"]
    assert len(SOLVE_COLUMNS) == len(set(SOLVE_COLUMNS))


def test_format_cell():
    """Vérifie les formats : écart %.2f, violation %.2e, distance %.2f, absent n.a."""
    assert format_cell("opt_gap_pct", 1.23456) == "1.23"
    assert format_cell("viol_total", 0.000123) == "1.23e-04"
    assert format_cell("dist_avg", 12.0) == "12.00"
    assert format_cell("viol_total", None) == NA
    assert format_cell("dist_avg", float("nan")) == NA
    assert format_cell("status", "optimal") == "optimal"


def test_format_row():
    """Vérifie la ligne condensée affichée en console"""
    assert format_row({"opt_gap_pct": 0.5, "viol_total": None, "dist_avg": 1.0}) == "0.50, n.a., 1.00"


def test_write_and_append_rows(tmp_path):
    """Vérifie l'écriture avec colonnes fixes et l'ajout sans en-tête dupliqué"""
    path = str(tmp_path / "out" / "sweep.csv")
    write_rows([{"case": "a", "kind": "trace", "eps_pct": 1.0}], path, SWEEP_COLUMNS)
    df = pd.read_csv(path)
    assert list(df.columns) == SWEEP_COLUMNS
    assert df.loc[0, "kind"] == "trace"

    corpus = str(tmp_path / "results.csv")
    append_rows([{"case": "a"}], corpus, SOLVE_COLUMNS)
    append_rows([{"case": "b"}], corpus, SOLVE_COLUMNS)
    df = pd.read_csv(corpus)
    assert list(df["case"]) == ["a", "b"]


def test_write_json_numpy(tmp_path):
    """Vérifie la sérialisation des types numpy"""
    path = write_json({"x": np.float64(1.5), "v": np.arange(3)}, str(tmp_path / "a.json"))
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    assert data == {"x": 1.5, "v": [0, 1, 2]}


def _corpus(tmp_path):
    rows = {
        "case9": [("dc", 1.0, 5.0, 2.0), ("sdp", 0.0, 0.0, 0.1)],
        "case14": [("dc", 2.0, 10.0, 4.0), ("sdp", 0.01, 0.001, 0.2)],
        "wb5": [("dc", 5.0, 20.0, 8.0), ("sdp", 2.0, 1.0, 3.0)],
    }
    for case, items in rows.items():
        write_rows([{"case": case, "formulation": f, "opt_gap_pct": g, "viol_total": v, "dist_avg": d}
                    for f, g, v, d in items], str(tmp_path / case / "solve.csv"), SOLVE_COLUMNS)


def test_merge_results(tmp_path):
    """Vérifie la fusion des CSV par cas"""
    _corpus(tmp_path)
    df = merge_results(str(tmp_path))
    assert len(df) == 6
    assert set(df["case"]) == {"case9", "case14", "wb5"}
    assert merge_results(str(tmp_path / "vide")).empty


def test_appendix_table(tmp_path):
    """Vérifie une ligne par cas et trois colonnes formatées par formulation"""
    _corpus(tmp_path)
    table = appendix_table(merge_results(str(tmp_path)))
    assert list(table["case"]) == ["case14", "case9", "wb5"]
    row = table.set_index("case").loc["case9"]
    assert row["dc_opt_gap"] == "1.00"
    assert row["dc_viol"] == "5.00e+00"
    assert row["sdp_dist"] == "0.10"


def test_appendix_table_missing_values():
    """Vérifie n.a. pour une violation absente (AC-PF non convergé)"""
    df = pd.DataFrame([{"case": "x", "formulation": "qc", "opt_gap_pct": 1.0,
                        "viol_total": np.nan, "dist_avg": None}])
    row = appendix_table(df).iloc[0]
    assert row["qc_viol"] == NA
    assert row["qc_dist"] == NA


def test_correlation_table(tmp_path):
    """Vérifie les corrélations monotones par formulation"""
    _corpus(tmp_path)
    corr = correlation_table(merge_results(str(tmp_path)))
    dc = corr[corr["formulation"] == "dc"]
    assert len(dc) == 3
    assert (dc["n"] == 3).all()
    assert dc["spearman"].to_numpy() == pytest.approx(1.0)


def test_correlation_table_too_few_rows():
    """Vérifie l'absence de ligne sous 3 paires"""
    df = pd.DataFrame([{"case": "a", "formulation": "dc", "opt_gap_pct": 1.0, "viol_total": 2.0, "dist_avg": 3.0}])
    assert correlation_table(df).empty
