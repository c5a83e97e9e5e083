"""
program_builder.py
Couche de modélisation : expressions affines, variables bornées et cônes,
réduits en ConeProgram de forme standard
"""

import math

import numpy as np
import scipy.sparse as sp

from src.conic import ConeProgram, SQRT2, cone_dim


# ---------------------------------------------------------------
# Expressions affines
# ---------------------------------------------------------------

class Lin:
    """Expression affine Σ a_i·v_i + const sur les variables du modèle."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @staticmethod
    def lift(other) -> "Lin":
        return other if isinstance(other, Lin) else Lin(const=float(other))

    def copy(self) -> "Lin":
        return Lin(dict(self.terms), self.const)

    def __add__(self, other):
        other = Lin.lift(other)
        out = self.copy()
        for k, v in other.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + v
        out.const += other.const
        return out

    __radd__ = __add__

    def __neg__(self):
        return Lin({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Lin.lift(other))

    def __rsub__(self, other):
        return Lin.lift(other) - self

    def __mul__(self, k):
        k = float(k)
        return Lin({i: k * v for i, v in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[i] for i, v in self.terms.items())

    def __repr__(self):
        return f"Lin({len(self.terms)} termes, const={self.const:g})"


def lsum(items) -> Lin:
    out = Lin()
    for it in items:
        it = Lin.lift(it)
        for k, v in it.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + v
        out.const += it.const
    return out


# ---------------------------------------------------------------
# Modèle
# ---------------------------------------------------------------

class Model:
    """
    Collecte variables et contraintes puis produit un ConeProgram.

    Contraintes supportées :
        eq(e, rhs)      e = rhs
        le(e, rhs)      e ≤ rhs
        soc([t, x...])  t ≥ ‖x‖
        rsoc([u, v, x...])  2·u·v ≥ ‖x‖², u, v ≥ 0
        psd_block(n)    matrice symétrique n×n de variables, contrainte ⪰ 0
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.names: list[str] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self._index: dict[str, int] = {}
        self._psd_slot: dict[int, tuple[int, int, float]] = {}
        self.constraints: list[tuple[str, object, str]] = []
        self.psd_blocks: list[int] = []
        self.objective = Lin()
        self.maps: dict[str, list[Lin]] = {}

    # --- variables ---

    def add_var(self, name: str, lo: float = -math.inf, hi: float = math.inf) -> Lin:
        if name in self._index:
            raise ValueError(f"variable déjà définie : {name}")
        if lo > hi:
            raise ValueError(f"bornes incohérentes pour {name} : [{lo}, {hi}]")
        idx = len(self.names)
        self.names.append(name)
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self._index[name] = idx
        return Lin({idx: 1.0})

    def var(self, name: str) -> Lin:
        return Lin({self._index[name]: 1.0})

    def has_var(self, name: str) -> bool:
        return name in self._index

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def psd_block(self, n: int, name: str) -> np.ndarray:
        """Crée un bloc PSD n×n ; renvoie la matrice symétrique d'expressions."""
        block = len(self.psd_blocks)
        self.psd_blocks.append(n)
        rows, cols = np.tril_indices(n)
        mat = np.empty((n, n), dtype=object)
        for pos, (i, j) in enumerate(zip(rows, cols)):
            expr = self.add_var(f"{name}[{i},{j}]")
            idx = next(iter(expr.terms))
            self._psd_slot[idx] = (block, pos, 1.0 if i == j else 1.0 / SQRT2)
            mat[i, j] = expr
            mat[j, i] = expr
        self.constraints.append(("psd", (block, mat), name))
        return mat

    # --- contraintes ---

    def eq(self, expr, rhs: float = 0.0, tag: str = "eq"):
        self.constraints.append(("eq", Lin.lift(expr) - rhs, tag))

    def le(self, expr, rhs: float = 0.0, tag: str = "le"):
        self.constraints.append(("le", Lin.lift(expr) - rhs, tag))

    def ge(self, expr, rhs: float = 0.0, tag: str = "ge"):
        self.constraints.append(("le", rhs - Lin.lift(expr), tag))

    def soc(self, exprs, tag: str = "soc"):
        if len(exprs) < 2:
            raise ValueError("un cône SOC demande au moins deux composantes")
        self.constraints.append(("soc", [Lin.lift(e) for e in exprs], tag))

    def rsoc(self, exprs, tag: str = "rsoc"):
        if len(exprs) < 2:
            raise ValueError("un cône SOC tourné demande au moins deux composantes")
        self.constraints.append(("rsoc", [Lin.lift(e) for e in exprs], tag))

    # --- objectif ---

    def minimize(self, expr):
        self.objective = self.objective + expr

    def quad_epigraph(self, coef: float, expr, name: str) -> Lin:
        """Variable t ≥ coef·expr² par cône tourné (t, ½, √coef·expr)."""
        t = self.add_var(name, lo=0.0)
        self.rsoc([t, 0.5, math.sqrt(coef) * Lin.lift(expr)], tag=f"epi:{name}")
        return t

    def add_map(self, name: str, exprs):
        self.maps[name] = [Lin.lift(e) for e in exprs]

    # ---------------------------------------------------------------
    # Réduction en forme standard
    # ---------------------------------------------------------------

    def build(self) -> ConeProgram:
        """Réduit le modèle : bornes → variables nonneg, contraintes coniques → blocs."""
        groups = {"free": 0, "nonneg": 0}
        blocks: list[tuple[str, int]] = []
        rep: list[tuple[dict, float]] = []
        rows: list[tuple[dict, float]] = []

        def new(group):
            k = groups[group]
            groups[group] += 1
            return (group, k)

        for n in self.psd_blocks:
            blocks.append(("psd", n))

        for idx in range(self.n_vars):
            if idx in self._psd_slot:
                block, pos, scale = self._psd_slot[idx]
                rep.append(({(block, pos): scale}, 0.0))
                continue
            lo, hi = self.lo[idx], self.hi[idx]
            if lo == hi:
                rep.append(({}, lo))
            elif math.isfinite(lo) and math.isfinite(hi):
                s1, s2 = new("nonneg"), new("nonneg")
                rep.append(({s1: 1.0}, lo))
                rows.append(({s1: 1.0, s2: 1.0}, hi - lo))
            elif math.isfinite(lo):
                rep.append(({new("nonneg"): 1.0}, lo))
            elif math.isfinite(hi):
                rep.append(({new("nonneg"): -1.0}, hi))
            else:
                rep.append(({new("free"): 1.0}, 0.0))

        def expand(expr: Lin):
            terms: dict = {}
            const = expr.const
            for i, a in expr.terms.items():
                cols, c0 = rep[i]
                const += a * c0
                for key, v in cols.items():
                    terms[key] = terms.get(key, 0.0) + a * v
            return terms, const

        for kind, data, _ in self.constraints:
            if kind == "eq":
                terms, const = expand(data)
                rows.append((terms, -const))
            elif kind == "le":
                terms, const = expand(data)
                terms[new("nonneg")] = 1.0
                rows.append((terms, -const))
            elif kind in ("soc", "rsoc"):
                block = len(blocks)
                blocks.append((kind, len(data)))
                for pos, e in enumerate(data):
                    terms, const = expand(e)
                    terms = {k: -v for k, v in terms.items()}
                    terms[(block, pos)] = terms.get((block, pos), 0.0) + 1.0
                    rows.append((terms, const))

        offsets = {"free": 0, "nonneg": groups["free"]}
        start = groups["free"] + groups["nonneg"]
        for b, (kind, n) in enumerate(blocks):
            offsets[b] = start
            start += cone_dim(kind, n)
        n_cols = start

        def col(key):
            return offsets[key[0]] + key[1]

        ri, ci, vals = [], [], []
        b_vec = np.zeros(len(rows))
        for r, (terms, rhs) in enumerate(rows):
            b_vec[r] = rhs
            for key, v in terms.items():
                if v != 0.0:
                    ri.append(r)
                    ci.append(col(key))
                    vals.append(v)
        A = sp.csr_matrix((vals, (ri, ci)), shape=(len(rows), n_cols))

        obj_terms, offset = expand(self.objective)
        c = np.zeros(n_cols)
        for key, v in obj_terms.items():
            c[col(key)] += v

        maps = {}
        for name, exprs in self.maps.items():
            mr, mc, mv = [], [], []
            const = np.zeros(len(exprs))
            for r, e in enumerate(exprs):
                terms, const[r] = expand(e)
                for key, v in terms.items():
                    mr.append(r)
                    mc.append(col(key))
                    mv.append(v)
            maps[name] = (sp.csr_matrix((mv, (mr, mc)), shape=(len(exprs), n_cols)), const)

        cones = []
        if groups["free"]:
            cones.append(("free", groups["free"]))
        if groups["nonneg"]:
            cones.append(("nonneg", groups["nonneg"]))
        cones += blocks
        return ConeProgram(c=c, A=A, b=b_vec, cones=cones, offset=offset, maps=maps, name=self.name)

    # ---------------------------------------------------------------
    # Vérification d'un point
    # ---------------------------------------------------------------

    def violations(self, values: dict[str, float]) -> dict[str, float]:
        """
        Violation maximale par étiquette de contrainte pour une affectation
        nommée des variables. Les contraintes portant sur une variable absente
        de `values` sont ignorées.
        """
        x = np.full(self.n_vars, np.nan)
        for name, v in values.items():
            if name in self._index:
                x[self._index[name]] = v

        out: dict[str, float] = {}

        def record(tag, v):
            out[tag] = max(out.get(tag, 0.0), float(v))

        for i in range(self.n_vars):
            if not np.isnan(x[i]):
                record("bornes", max(self.lo[i] - x[i], x[i] - self.hi[i], 0.0))

        def val(e: Lin):
            return e.value(x)

        for kind, data, tag in self.constraints:
            if kind == "psd":
                _, mat = data
                m = np.array([[val(e) for e in row] for row in mat])
                if np.isnan(m).any():
                    continue
                record(tag, max(-np.linalg.eigvalsh(m)[0], 0.0))
                continue
            vals = [val(e) for e in data] if isinstance(data, list) else val(data)
            if np.isnan(vals).any():
                continue
            if kind == "eq":
                record(tag, abs(vals))
            elif kind == "le":
                record(tag, max(vals, 0.0))
            elif kind == "soc":
                record(tag, max(np.linalg.norm(vals[1:]) - vals[0], 0.0))
            elif kind == "rsoc":
                rest = float(np.dot(vals[2:], vals[2:]))
                record(tag, max(rest - 2.0 * vals[0] * vals[1], -vals[0], -vals[1], 0.0))
        return out


# Test rapide
if __name__ == "__main__":
    from src.conic import solve

    model = Model("demo")
    x = model.add_var("x", 0.0, 4.0)
    y = model.add_var("y", -1.0)
    model.eq(x + y, 3.0)
    t = model.quad_epigraph(1.0, x - 1.0, "t")
    model.minimize(t + 0.1 * y)
    model.add_map("xy", [x, y])
    sol = solve(model.build())
    print(f"statut {sol.status}, (x, y) = {sol.values['xy']}")
