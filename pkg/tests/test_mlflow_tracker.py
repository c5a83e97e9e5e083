"""
Tests unitaires pour mlflow_tracker.py
"""

import pytest
import os
import sys
from unittest.mock import MagicMock, patch

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import src.mlflow_tracker as tracker
from src.recovery import KindSummary


@pytest.fixture
def fake_mlflow():
    mock = MagicMock()
    with patch.object(tracker, "mlflow", mock, create=True), \
            patch.object(tracker, "MLFLOW_AVAILABLE", True), \
            patch.object(tracker, "MLFLOW_ENABLED", True):
        yield mock


def test_disabled_is_noop():
    """Vérifie qu'aucun appel MLflow n'est fait quand le tracking est désactivé"""
    mock = MagicMock()
    with patch.object(tracker, "mlflow", mock, create=True), \
            patch.object(tracker, "MLFLOW_ENABLED", False):
        tracker.log_solve_run("case9", "dc", "optimal", 1.0, 0.5, 0.0, 1.0, 10, 0.1)
    mock.start_run.assert_not_called()


def test_metric_skips_none_and_inf(fake_mlflow):
    """Vérifie que None, inf et nan ne sont pas loggués"""
    tracker._metric("a", None)
    tracker._metric("b", float("inf"))
    tracker._metric("c", float("nan"))
    tracker._metric("d", 2)
    fake_mlflow.log_metric.assert_called_once_with("d", 2.0)


def test_log_solve_run(fake_mlflow):
    """Vérifie paramètres, métriques et tag de faisabilité d'une résolution"""
    tracker.log_solve_run("case9", "sdp", "optimal", 5296.7, 0.0, None, 0.01, 25, 1.2)
    fake_mlflow.set_experiment.assert_called_once_with(tracker.EXPERIMENT_NAME)
    fake_mlflow.log_param.assert_any_call("formulation", "sdp")
    fake_mlflow.set_tag.assert_called_once_with("ac_feasibility", "n.a.")
    logged = {c.args[0] for c in fake_mlflow.log_metric.call_args_list}
    assert "viol_total" not in logged
    assert {"objective", "opt_gap_pct", "dist_avg", "iters"} <= logged


def test_log_sweep_run(fake_mlflow):
    """Vérifie les métriques par pénalité d'un balayage"""
    summary = {"reactive": KindSummary(1.0, 10.0, 0.5, 2.0, 2),
               "trace": KindSummary(None, None, None, None, 0)}
    tracker.log_sweep_run("wb5", "ok", 32, summary, 3.0)
    logged = {c.args[0] for c in fake_mlflow.log_metric.call_args_list}
    assert {"reactive_eps_min", "reactive_n_feasible", "trace_n_feasible"} <= logged
    assert "trace_eps_min" not in logged


def test_log_warmstart_run(fake_mlflow):
    """Vérifie le tag des initialisations indisponibles"""
    rows = [{"init": "flat", "iters": 20, "objective": 100.0, "status": "converged"},
            {"init": "dc", "iters": None, "objective": None, "status": None}]
    tracker.log_warmstart_run("wb5", rows, 1.0)
    fake_mlflow.set_tag.assert_any_call("dc_status", "unavailable")
