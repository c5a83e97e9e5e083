"""
Tests unitaires pour program_builder.py
"""

import pytest
import os
import sys

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.conic import OK_STATUSES, solve
from src.program_builder import Lin, Model, lsum


def test_lin_arithmetic():
    """Vérifie l'arithmétique des expressions affines"""
    x, y = Lin({0: 1.0}), Lin({1: 1.0})
    e = 2 * x + 3 - y / 2 - x
    assert e.terms == {0: 1.0, 1: -0.5}
    assert e.const == 3.0
    assert e.value(np.array([2.0, 4.0])) == pytest.approx(3.0)
    assert (5 - x).value(np.array([1.0, 0.0])) == pytest.approx(4.0)
    assert lsum([x, y, 1.0]).value(np.array([1.0, 2.0])) == pytest.approx(4.0)


def test_bounded_variable():
    """Vérifie la réduction d'une variable bornée en variables positives"""
    model = Model("borne")
    x = model.add_var("x", 1.0, 5.0)
    model.minimize(x)
    model.add_map("x", [x])
    sol = solve(model.build())
    assert sol.status in OK_STATUSES
    assert sol.values["x"][0] == pytest.approx(1.0, abs=1e-6)


def test_upper_bounded_and_inequality():
    """Vérifie max x + y sous x + 2y ≤ 4, x ≤ 2, x, y ≥ 0"""
    model = Model("pl")
    x = model.add_var("x", 0.0, 2.0)
    y = model.add_var("y", 0.0)
    model.le(x + 2 * y, 4.0)
    model.minimize(-(x + y))
    prog = model.build()
    sol = solve(prog)
    assert sol.obj_primal == pytest.approx(-3.0, abs=1e-6)


def test_fixed_variable_is_constant():
    """Vérifie qu'une variable fixée devient une constante"""
    model = Model("fixe")
    x = model.add_var("x", 2.0, 2.0)
    y = model.add_var("y", 0.0)
    model.ge(y - x, 0.0)
    model.minimize(y)
    sol = solve(model.build())
    assert sol.obj_primal == pytest.approx(2.0, abs=1e-6)


def test_quad_epigraph():
    """Vérifie min 3x² − 6x = −3 par épigraphe tourné"""
    model = Model("quad")
    x = model.add_var("x")
    t = model.quad_epigraph(3.0, x, "t")
    model.minimize(t - 6 * x)
    model.add_map("x", [x])
    sol = solve(model.build())
    assert sol.obj_primal == pytest.approx(-3.0, abs=1e-6)
    assert sol.values["x"][0] == pytest.approx(1.0, abs=1e-4)


def test_psd_block_entries():
    """Vérifie qu'une entrée de bloc PSD vaut l'élément de matrice (X00·X11 ≥ X01²)"""
    model = Model("psd")
    X = model.psd_block(2, "X")
    model.eq(X[0, 1], 1.0)
    model.minimize(X[0, 0] + X[1, 1])
    model.add_map("X", [X[0, 0], X[0, 1], X[1, 1]])
    sol = solve(model.build())
    assert sol.obj_primal == pytest.approx(2.0, abs=1e-6)
    assert sol.values["X"] == pytest.approx([1.0, 1.0, 1.0], abs=1e-4)


def test_soc_constraint():
    """Vérifie min t sous ‖(x − 1, y + 2)‖ ≤ t, t ≥ 0"""
    model = Model("soc")
    t = model.add_var("t")
    x = model.add_var("x", 3.0, 3.0)
    y = model.add_var("y", 2.0, 2.0)
    model.soc([t, x - 1, y + 2])
    model.minimize(t)
    sol = solve(model.build())
    assert sol.obj_primal == pytest.approx(np.hypot(2.0, 4.0), abs=1e-6)


def test_violations_by_tag():
    """Vérifie la violation maximale par étiquette"""
    model = Model("v")
    x = model.add_var("x", 0.0, 1.0)
    y = model.add_var("y", 0.0, 1.0)
    model.rsoc([x, y, 1.0], tag="produit")
    model.le(x + y, 1.5, tag="somme")
    model.eq(x - y, 0.0, tag="egal")
    out = model.violations({"x": 0.1, "y": 0.1})
    assert out["produit"] == pytest.approx(1.0 - 2 * 0.01)
    assert out["somme"] == 0.0
    assert out["egal"] == 0.0
    assert out["bornes"] == 0.0
    out = model.violations({"x": 1.2, "y": 0.8})
    assert out["somme"] == pytest.approx(0.5)
    assert out["egal"] == pytest.approx(0.4)
    assert out["bornes"] == pytest.approx(0.2)


def test_violations_skip_missing_variables():
    """Vérifie que les contraintes sur des variables absentes sont ignorées"""
    model = Model("v")
    x = model.add_var("x")
    z = model.add_var("z")
    model.eq(x + z, 1.0, tag="lien")
    assert "lien" not in model.violations({"x": 5.0})


def test_duplicate_and_bad_bounds():
    """Vérifie les erreurs de déclaration de variables"""
    model = Model("e")
    model.add_var("x")
    with pytest.raises(ValueError):
        model.add_var("x")
    with pytest.raises(ValueError):
        model.add_var("y", 2.0, 1.0)
    with pytest.raises(ValueError):
        model.soc([Lin()])
