"""
network.py
Modèle de réseau immuable : lecture des cas MATPOWER, grandeurs par unité et admittances
"""

import json
import math
import os
import re
from dataclasses import dataclass, field, asdict
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from dotenv import load_dotenv

load_dotenv()

ANGLE_CAP_DEG = float(os.getenv("OPF_ANGLE_CAP_DEG", "89.9"))
CASE_DIR = os.getenv("OPF_CASE_DIR", "data/cases")


# ---------------------------------------------------------------
# Erreurs
# ---------------------------------------------------------------

class NetworkError(ValueError):
    """Réseau incohérent (bus inconnu, impédance nulle, bornes invalides)."""


class CaseParseError(ValueError):
    """Fichier de cas mal formé."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"ligne {line} : {message}"
        super().__init__(message)


class UnsupportedCostError(ValueError):
    """Modèle de coût autre que polynomial de degré ≤ 2."""


# ---------------------------------------------------------------
# Éléments du réseau
# ---------------------------------------------------------------

@dataclass(frozen=True)
class Bus:
    id: int
    pd: float = 0.0
    qd: float = 0.0
    gs: float = 0.0
    bs: float = 0.0
    vmin: float = 0.9
    vmax: float = 1.1
    bus_type: int = 1

    def __post_init__(self):
        if not (0.0 < self.vmin <= self.vmax):
            raise NetworkError(f"bornes de tension invalides au bus {self.id} : [{self.vmin}, {self.vmax}]")


@dataclass(frozen=True)
class Gen:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0
    status: bool = True

    def __post_init__(self):
        if self.pmin > self.pmax or self.qmin > self.qmax:
            raise NetworkError(f"bornes de production invalides pour le générateur du bus {self.bus}")
        if self.c2 < 0:
            raise NetworkError(f"coût quadratique négatif pour le générateur du bus {self.bus}")

    def cost(self, pg: float) -> float:
        return self.c2 * pg * pg + self.c1 * pg + self.c0


@dataclass(frozen=True)
class Branch:
    f_bus: int
    t_bus: int
    r: float
    x: float
    b_ch: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    s_max: float = math.inf     # inf = pas de limite
    ang_min: float = -math.radians(ANGLE_CAP_DEG)
    ang_max: float = math.radians(ANGLE_CAP_DEG)

    def __post_init__(self):
        if self.tap <= 0:
            raise NetworkError(f"rapport de transformation invalide sur la branche {self.f_bus}-{self.t_bus}")
        if not (self.ang_min <= 0.0 <= self.ang_max):
            raise NetworkError(
                f"bornes d'angle {self.ang_min:.4f}/{self.ang_max:.4f} n'encadrent pas 0 "
                f"sur la branche {self.f_bus}-{self.t_bus}"
            )

    @property
    def limited(self) -> bool:
        return math.isfinite(self.s_max)

    @property
    def theta_m(self) -> float:
        """Demi-largeur de l'intervalle symétrique englobant les bornes d'angle."""
        return max(-self.ang_min, self.ang_max)


@dataclass(frozen=True)
class BranchAdmittance:
    y_ff: complex
    y_ft: complex
    y_tf: complex
    y_tt: complex


@dataclass(frozen=True)
class Network:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    gens: tuple[Gen, ...]
    branches: tuple[Branch, ...]
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.base_mva <= 0:
            raise NetworkError(f"baseMVA doit être > 0 (reçu {self.base_mva})")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("identifiants de bus dupliqués")
        known = set(ids)
        for g in self.gens:
            if g.bus not in known:
                raise NetworkError(f"générateur rattaché au bus inconnu {g.bus}")
        for br in self.branches:
            if br.f_bus not in known or br.t_bus not in known:
                raise NetworkError(f"branche {br.f_bus}-{br.t_bus} vers un bus inconnu")

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.gens)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def gen_bus_idx(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.gens], dtype=int)

    @cached_property
    def f_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.f_bus] for br in self.branches], dtype=int)

    @cached_property
    def t_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.t_bus] for br in self.branches], dtype=int)

    def slack_bus(self) -> int:
        """Bus du générateur de plus grand pmax (égalité : plus petit identifiant)."""
        if not self.gens:
            raise NetworkError(f"aucun générateur en service dans {self.name}")
        best = max(g.pmax for g in self.gens)
        return min(g.bus for g in self.gens if g.pmax == best)

    def total_load(self) -> complex:
        return complex(sum(b.pd for b in self.buses), sum(b.qd for b in self.buses))

    def generation_cost(self, pg) -> float:
        """Coût de production ($) pour une répartition pg en p.u."""
        return float(sum(g.cost(float(p)) for g, p in zip(self.gens, pg)))

    def arrays(self, attr: str, of: str = "buses") -> np.ndarray:
        return np.array([getattr(e, attr) for e in getattr(self, of)], dtype=float)


# ---------------------------------------------------------------
# Lecture MATPOWER
# ---------------------------------------------------------------

_TABLE_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _read_tables(text: str) -> tuple[float, dict[str, list[tuple[int, list[float]]]]]:
    """Automate ligne à ligne : retourne baseMVA et les tables numériques (avec numéros de ligne)."""
    base_mva = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    current = None
    width = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue

        if current is None:
            m = _TABLE_RE.match(line)
            if not m:
                continue
            key, rest = m.group(1), m.group(2).strip()
            if key == "baseMVA":
                try:
                    base_mva = float(rest.rstrip(";").strip())
                except ValueError:
                    raise CaseParseError(f"baseMVA illisible : {rest!r}", lineno)
                continue
            if not rest.startswith("["):
                continue
            if key not in _MIN_COLS:
                # tables annexes (bus_name, dcline...) : on saute jusqu'à la fermeture
                current, width = "_skip", None
                if "]" in rest:
                    current = None
                continue
            current, width = key, None
            tables[key] = []
            line = rest[1:]

        closing = "]" in line
        if closing:
            line = line[: line.index("]")]
        if current != "_skip":
            for chunk in line.split(";"):
                tokens = chunk.replace(",", " ").split()
                if not tokens:
                    continue
                try:
                    row = [float(t) for t in tokens]
                except ValueError:
                    raise CaseParseError(f"valeur non numérique dans mpc.{current} : {chunk.strip()!r}", lineno)
                if current != "gencost":
                    if width is None:
                        width = len(row)
                        if width < _MIN_COLS[current]:
                            raise CaseParseError(
                                f"mpc.{current} : {width} colonnes, au moins {_MIN_COLS[current]} attendues", lineno)
                    elif len(row) != width:
                        raise CaseParseError(f"mpc.{current} : {len(row)} colonnes au lieu de {width}", lineno)
                tables[current].append((lineno, row))
        if closing:
            current = None

    if current is not None and current != "_skip":
        raise CaseParseError(f"table mpc.{current} non refermée")
    if base_mva is None:
        raise CaseParseError("mpc.baseMVA absent")
    for key in ("bus", "gen", "branch"):
        if key not in tables:
            raise CaseParseError(f"table mpc.{key} absente")
    return base_mva, tables


def _normalize_angles(angmin_deg: float, angmax_deg: float) -> tuple[float, float, bool]:
    capped = False
    if angmin_deg == 0.0 and angmax_deg == 0.0:
        angmin_deg, angmax_deg, capped = -ANGLE_CAP_DEG, ANGLE_CAP_DEG, True
    if angmin_deg < -ANGLE_CAP_DEG:
        angmin_deg, capped = -ANGLE_CAP_DEG, True
    if angmax_deg > ANGLE_CAP_DEG:
        angmax_deg, capped = ANGLE_CAP_DEG, True
    return math.radians(angmin_deg), math.radians(angmax_deg), capped


def _parse_cost(lineno: int, row: list[float], base: float) -> tuple[float, float, float]:
    model = int(row[0])
    if model != 2:
        raise UnsupportedCostError(f"ligne {lineno} : modèle de coût {model} non supporté (polynomial requis)")
    n = int(row[3])
    coeffs = row[4:4 + n]
    if len(coeffs) != n:
        raise CaseParseError(f"gencost : {n} coefficients annoncés, {len(coeffs)} lus", lineno)
    if n > 3:
        raise UnsupportedCostError(f"ligne {lineno} : coût polynomial de degré {n - 1} (> 2)")
    c2, c1, c0 = ([0.0] * (3 - n) + coeffs) if n else (0.0, 0.0, 0.0)
    return c2 * base * base, c1 * base, c0


def parse_matpower(text: str, name: str = "case") -> Network:
    """
    Construit un Network (p.u.) à partir d'un fichier MATPOWER.

    Args:
        text: Contenu du fichier .m
        name: Identifiant du cas

    Returns:
        Network immuable ; générateurs et branches hors service retirés
    """
    base, tables = _read_tables(text)
    flags: list[str] = []

    buses = []
    for lineno, r in tables["bus"]:
        try:
            buses.append(Bus(
                id=int(r[0]), bus_type=int(r[1]),
                pd=r[2] / base, qd=r[3] / base, gs=r[4] / base, bs=r[5] / base,
                vmin=r[12], vmax=r[11],
            ))
        except NetworkError as e:
            raise CaseParseError(str(e), lineno)

    costs = tables.get("gencost", [])
    if len(costs) < len(tables["gen"]):
        raise CaseParseError(f"mpc.gencost : {len(costs)} lignes pour {len(tables['gen'])} générateurs")
    if len(costs) > len(tables["gen"]):
        flags.append("coûts réactifs ignorés")

    gens = []
    for (lineno, r), (clineno, c) in zip(tables["gen"], costs):
        if r[7] <= 0:
            continue
        c2, c1, c0 = _parse_cost(clineno, c, base)
        try:
            gens.append(Gen(
                bus=int(r[0]), qmax=r[3] / base, qmin=r[4] / base,
                pmax=r[8] / base, pmin=r[9] / base, c2=c2, c1=c1, c0=c0,
            ))
        except NetworkError as e:
            raise CaseParseError(str(e), lineno)

    branches = []
    n_unlimited = n_capped = 0
    for lineno, r in tables["branch"]:
        if r[10] <= 0:
            continue
        angmin, angmax = (r[11], r[12]) if len(r) >= 13 else (-360.0, 360.0)
        ang_min, ang_max, capped = _normalize_angles(angmin, angmax)
        n_capped += capped
        rate = r[5]
        if rate <= 0:
            n_unlimited += 1
        try:
            branches.append(Branch(
                f_bus=int(r[0]), t_bus=int(r[1]), r=r[2], x=r[3], b_ch=r[4],
                tap=r[8] if r[8] != 0 else 1.0, shift=math.radians(r[9]),
                s_max=rate / base if rate > 0 else math.inf,
                ang_min=ang_min, ang_max=ang_max,
            ))
        except NetworkError as e:
            raise CaseParseError(str(e), lineno)

    if n_unlimited:
        flags.append(f"s_max=0 -> illimité ({n_unlimited} branches)")
    if n_capped:
        flags.append(f"bornes d'angle ramenées à ±{ANGLE_CAP_DEG}° ({n_capped} branches)")

    try:
        return Network(name=name, base_mva=base, buses=tuple(buses), gens=tuple(gens),
                       branches=tuple(branches), flags=tuple(flags))
    except NetworkError as e:
        raise CaseParseError(str(e))


# ---------------------------------------------------------------
# Format JSON canonique
# ---------------------------------------------------------------

def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


def to_json(net: Network) -> str:
    """Sérialise le réseau (p.u.) ; s_max illimité écrit null."""
    branches = []
    for br in net.branches:
        d = asdict(br)
        d["s_max"] = _finite_or_none(br.s_max)
        branches.append(d)
    doc = {
        "format": "relaxopf-network/1",
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": [asdict(b) for b in net.buses],
        "gens": [asdict(g) for g in net.gens],
        "branches": branches,
        "flags": list(net.flags),
    }
    return json.dumps(doc, indent=1)


def from_json(text: str) -> Network:
    doc = json.loads(text)
    branches = []
    for d in doc["branches"]:
        d = dict(d)
        d["s_max"] = math.inf if d.get("s_max") is None else d["s_max"]
        branches.append(Branch(**d))
    return Network(
        name=doc["name"],
        base_mva=doc["base_mva"],
        buses=tuple(Bus(**d) for d in doc["buses"]),
        gens=tuple(Gen(**d) for d in doc["gens"]),
        branches=tuple(branches),
        flags=tuple(doc.get("flags", [])),
    )


def load_case(path: str) -> Network:
    """Charge un cas .m (MATPOWER) ou .json (format canonique)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Cas introuvable : {path}")
    name = os.path.splitext(os.path.basename(path))[0]
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return from_json(text)
    if path.endswith(".m"):
        return parse_matpower(text, name=name)
    raise ValueError(f"Extension non reconnue pour {path} (.m ou .json attendu)")


# ---------------------------------------------------------------
# Admittances
# ---------------------------------------------------------------

def branch_admittances(net: Network) -> list[BranchAdmittance]:
    """Modèle en π avec transformateur : y_ff, y_ft, y_tf, y_tt par branche."""
    out = []
    for br in net.branches:
        z = complex(br.r, br.x)
        if z == 0:
            raise NetworkError(f"impédance série nulle sur la branche {br.f_bus}-{br.t_bus}")
        y = 1.0 / z
        half = 1j * br.b_ch / 2.0
        t = br.tap * np.exp(1j * br.shift)
        out.append(BranchAdmittance(
            y_ff=(y + half) / (br.tap ** 2),
            y_ft=-y / np.conj(t),
            y_tf=-y / t,
            y_tt=y + half,
        ))
    return out


def branch_matrices(net: Network):
    """Retourne (Yf, Yt, Cf, Ct) creuses : If = Yf V, It = Yt V."""
    nl, nb = net.n_branch, net.n_bus
    adm = branch_admittances(net)
    rows = np.arange(nl)
    cf = sp.csr_matrix((np.ones(nl), (rows, net.f_idx)), shape=(nl, nb))
    ct = sp.csr_matrix((np.ones(nl), (rows, net.t_idx)), shape=(nl, nb))
    yff = np.array([a.y_ff for a in adm], dtype=complex)
    yft = np.array([a.y_ft for a in adm], dtype=complex)
    ytf = np.array([a.y_tf for a in adm], dtype=complex)
    ytt = np.array([a.y_tt for a in adm], dtype=complex)
    yf = sp.diags(yff) @ cf + sp.diags(yft) @ ct
    yt = sp.diags(ytf) @ cf + sp.diags(ytt) @ ct
    return yf.tocsr(), yt.tocsr(), cf, ct


def ybus(net: Network) -> sp.csr_matrix:
    """Matrice d'admittance nodale |N|×|N| (branches + shunts gs + j·bs)."""
    yf, yt, cf, ct = branch_matrices(net)
    ysh = net.arrays("gs") + 1j * net.arrays("bs")
    y = cf.T @ yf + ct.T @ yt + sp.diags(ysh)
    return sp.csr_matrix(y, dtype=complex)


def gen_incidence(net: Network) -> sp.csr_matrix:
    """Matrice Cg (|N|×|G|) : 1 si le générateur g est au bus k."""
    ng = net.n_gen
    return sp.csr_matrix((np.ones(ng), (net.gen_bus_idx, np.arange(ng))), shape=(net.n_bus, ng))


# Test rapide
if __name__ == "__main__":
    path = os.path.join(CASE_DIR, "case9.m")
    net = load_case(path)
    print(f"✅ {net.name} : {net.n_bus} bus, {net.n_gen} générateurs, {net.n_branch} branches")
    print(f"   slack = bus {net.slack_bus()}, charge totale = {net.total_load() * net.base_mva} MVA")
    for flag in net.flags:
        print(f"⚠️ {flag}")
