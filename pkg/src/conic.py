"""
conic.py
Solveur conique primal-dual : points intérieurs avec mise à l'échelle de Nesterov–Todd

Forme standard :
    min  cᵀx + offset   s.c.  A x = b,  x ∈ K
    max  bᵀy + offset   s.c.  Aᵀy + s = c,  s ∈ K*
K est un produit de cônes free(n) | nonneg(n) | soc(n) | rsoc(n) | psd(n).
Un bloc psd(n) stocke la matrice symétrique n×n en svec : triangle inférieur,
ligne par ligne, hors-diagonale multipliée par √2 (⟨svec A, svec B⟩ = ⟨A, B⟩_F).
Un bloc rsoc(n) impose 2·x0·x1 ≥ ‖x2:‖², x0, x1 ≥ 0.
"""

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import structural_rank
from scipy.sparse.linalg import splu
from dotenv import load_dotenv

load_dotenv()

FEAS_TOL = float(os.getenv("OPF_CONE_FEAS_TOL", "1e-8"))
GAP_TOL = float(os.getenv("OPF_CONE_GAP_TOL", "1e-8"))
NEAR_TOL = float(os.getenv("OPF_CONE_NEAR_TOL", "1e-6"))
MAX_ITER = int(os.getenv("OPF_CONE_MAX_ITER", "200"))
MAX_HALVINGS = 30

CONE_KINDS = ("free", "nonneg", "soc", "rsoc", "psd")
OK_STATUSES = ("optimal", "near_optimal")
SQRT2 = math.sqrt(2.0)


class InfeasibleStructureError(RuntimeError):
    """Matrice A structurellement déficiente en rang après présolve."""


# ---------------------------------------------------------------
# Vectorisation symétrique
# ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _tril(n: int):
    rows, cols = np.tril_indices(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, scale


def cone_dim(kind: str, n: int) -> int:
    return n * (n + 1) // 2 if kind == "psd" else n


def svec(mat: np.ndarray) -> np.ndarray:
    rows, cols, scale = _tril(mat.shape[0])
    return mat[rows, cols] * scale


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    rows, cols, scale = _tril(n)
    out = np.zeros((n, n))
    out[rows, cols] = vec / scale
    out[cols, rows] = vec / scale
    return out


def psd_order(dim: int) -> int:
    n = int(round((math.sqrt(8 * dim + 1) - 1) / 2))
    if n * (n + 1) // 2 != dim:
        raise ValueError(f"dimension {dim} n'est pas triangulaire")
    return n


# ---------------------------------------------------------------
# Programme et solution
# ---------------------------------------------------------------

@dataclass
class ConeProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: list[tuple[str, int]]
    var_names: list[str] | None = None
    offset: float = 0.0
    maps: dict[str, tuple[sp.csr_matrix, np.ndarray]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.cones = [(str(k), int(n)) for k, n in self.cones]
        for kind, n in self.cones:
            if kind not in CONE_KINDS:
                raise ValueError(f"cône inconnu : {kind}")
            if n < (2 if kind == "rsoc" else 1):
                raise ValueError(f"taille de cône invalide : {kind}({n})")
        total = sum(cone_dim(k, n) for k, n in self.cones)
        if total != self.c.size:
            raise ValueError(f"les cônes couvrent {total} variables, c en a {self.c.size}")
        if self.A.shape != (self.b.size, self.c.size):
            raise ValueError(f"A de forme {self.A.shape}, attendu {(self.b.size, self.c.size)}")
        if self.var_names is not None and len(self.var_names) != self.c.size:
            raise ValueError("var_names de longueur incohérente")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def blocks(self):
        """Itère (kind, n, début, fin) sur les blocs de cônes."""
        start = 0
        for kind, n in self.cones:
            stop = start + cone_dim(kind, n)
            yield kind, n, start, stop
            start = stop

    def evaluate(self, name: str, x: np.ndarray) -> np.ndarray:
        E, const = self.maps[name]
        return E @ x + const


@dataclass
class ConeSettings:
    feastol: float = FEAS_TOL
    gaptol: float = GAP_TOL
    near_tol: float = NEAR_TOL
    max_iter: int = MAX_ITER
    step_frac: float = 0.99
    reg: float = 1e-9
    refine_steps: int = 3
    infeas_tol: float = 1e-8
    stall_iters: int = 25
    scale: bool = True
    verbose: bool = False


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    obj_primal: float
    obj_dual: float
    gap_rel: float
    iters: int
    pres: float = math.nan
    dres: float = math.nan
    values: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in OK_STATUSES


# ---------------------------------------------------------------
# Cônes et mises à l'échelle NT
# ---------------------------------------------------------------

class _NonnegScaling:
    def __init__(self, x, s):
        self.d = np.sqrt(s / x)
        self.lam = np.sqrt(x * s)

    def W(self, v):
        return self.d * v

    def Winv(self, v):
        return v / self.d

    WinvT = Winv

    def Hinv(self, v):
        return v / self.d ** 2

    def hinv_blocks(self):
        return [1.0 / self.d ** 2]

    def jdiv(self, r):
        return r / self.lam


class NonnegCone:
    def __init__(self, start: int, n: int):
        self.sl = slice(start, start + n)
        self.dim = n
        self.degree = n

    def identity(self):
        return np.ones(self.dim)

    def min_eig(self, v):
        return v.min() if v.size else math.inf

    def interior(self, v):
        return bool(np.all(v > 0))

    def max_step(self, v, dv):
        neg = dv < 0
        return float(np.min(-v[neg] / dv[neg])) if neg.any() else math.inf

    def jprod(self, u, v):
        return u * v

    def scaling(self, x, s):
        if np.any(x <= 0) or np.any(s <= 0):
            raise FloatingPointError("itéré hors de l'orthant")
        return _NonnegScaling(x, s)

    def identity_scaling(self):
        return _NonnegScaling(np.ones(self.dim), np.ones(self.dim))


def _arrow_norm(v):
    return v[:, 0] ** 2 - np.sum(v[:, 1:] ** 2, axis=1)


class _SocScaling:
    """W = η·W̄ avec W̄ la réflexion hyperbolique associée à w̄ (w̄ᵀJw̄ = 1)."""

    def __init__(self, k, n, wb, eta, lam):
        self.k, self.n = k, n
        self.wb, self.eta, self.lam_m = wb, eta, lam
        self.lam = lam.ravel()
        self.jw = wb.copy()
        self.jw[:, 1:] *= -1.0

    def _wbar(self, v):
        w0, w1 = self.wb[:, :1], self.wb[:, 1:]
        v0, v1 = v[:, :1], v[:, 1:]
        dot = np.sum(w1 * v1, axis=1, keepdims=True)
        return np.hstack([w0 * v0 + dot, v1 + (v0 + dot / (1.0 + w0)) * w1])

    def W(self, v):
        v = v.reshape(self.k, self.n)
        return (self.eta[:, None] * self._wbar(v)).ravel()

    def Winv(self, v):
        v = v.reshape(self.k, self.n).copy()
        v[:, 1:] *= -1.0
        out = self._wbar(v)
        out[:, 1:] *= -1.0
        return (out / self.eta[:, None]).ravel()

    WinvT = Winv

    def Hinv(self, v):
        v = v.reshape(self.k, self.n)
        jv = v.copy()
        jv[:, 1:] *= -1.0
        proj = np.sum(self.jw * v, axis=1, keepdims=True)
        return ((2.0 * self.jw * proj - jv) / self.eta[:, None] ** 2).ravel()

    def hinv_blocks(self):
        J = np.diag(np.r_[1.0, -np.ones(self.n - 1)])
        outer = np.einsum("ki,kj->kij", self.jw, self.jw)
        return (2.0 * outer - J[None]) / self.eta[:, None, None] ** 2

    def jdiv(self, r):
        r = r.reshape(self.k, self.n)
        l0, l1 = self.lam_m[:, :1], self.lam_m[:, 1:]
        r0, r1 = r[:, :1], r[:, 1:]
        det = l0 ** 2 - np.sum(l1 ** 2, axis=1, keepdims=True)
        u0 = (l0 * r0 - np.sum(l1 * r1, axis=1, keepdims=True)) / det
        u1 = (r1 - u0 * l1) / l0
        return np.hstack([u0, u1]).ravel()


class SocGroup:
    """k cônes du second ordre consécutifs de même dimension n."""

    def __init__(self, start: int, k: int, n: int):
        self.k, self.n = k, n
        self.dim = k * n
        self.sl = slice(start, start + self.dim)
        self.degree = k

    def identity(self):
        e = np.zeros((self.k, self.n))
        e[:, 0] = 1.0
        return e.ravel()

    def min_eig(self, v):
        v = v.reshape(self.k, self.n)
        return float(np.min(v[:, 0] - np.linalg.norm(v[:, 1:], axis=1)))

    def interior(self, v):
        v = v.reshape(self.k, self.n)
        return bool(np.all(v[:, 0] > 0) and np.all(_arrow_norm(v) > 0))

    def max_step(self, v, dv):
        x = v.reshape(self.k, self.n)
        d = dv.reshape(self.k, self.n)
        a = _arrow_norm(d)
        bq = x[:, 0] * d[:, 0] - np.sum(x[:, 1:] * d[:, 1:], axis=1)
        cq = np.maximum(_arrow_norm(x), 0.0)
        disc = bq ** 2 - a * cq
        hit = (a < 0) | ((bq < 0) & (disc >= 0))
        if not hit.any():
            return math.inf
        root = np.sqrt(np.maximum(disc[hit], 0.0))
        steps = cq[hit] / (-bq[hit] + root)
        return float(np.min(steps))

    def jprod(self, u, v):
        u = u.reshape(self.k, self.n)
        v = v.reshape(self.k, self.n)
        head = np.sum(u * v, axis=1, keepdims=True)
        tail = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
        return np.hstack([head, tail]).ravel()

    def scaling(self, x, s):
        x = x.reshape(self.k, self.n)
        s = s.reshape(self.k, self.n)
        xn2, sn2 = _arrow_norm(x), _arrow_norm(s)
        if np.any(xn2 <= 0) or np.any(sn2 <= 0) or np.any(x[:, 0] <= 0) or np.any(s[:, 0] <= 0):
            raise FloatingPointError("itéré hors du cône du second ordre")
        xn, sn = np.sqrt(xn2), np.sqrt(sn2)
        xb = x / xn[:, None]
        sb = s / sn[:, None]
        gamma = np.sqrt((1.0 + np.sum(xb * sb, axis=1)) / 2.0)
        jxb = xb.copy()
        jxb[:, 1:] *= -1.0
        wb = (sb + jxb) / (2.0 * gamma[:, None])
        eta = np.sqrt(sn / xn)
        sc = _SocScaling(self.k, self.n, wb, eta, np.zeros_like(x))
        lam = sc.W(x.ravel()).reshape(self.k, self.n)
        return _SocScaling(self.k, self.n, wb, eta, lam)

    def identity_scaling(self):
        e = self.identity().reshape(self.k, self.n)
        return _SocScaling(self.k, self.n, e, np.ones(self.k), e.copy())


class _PsdScaling:
    """R tel que R⁻¹XR⁻ᵀ = RᵀSR = Λ (diagonale)."""

    def __init__(self, n, R, Rinv, lams):
        self.n = n
        self.R, self.Rinv, self.lams = R, Rinv, lams
        self.G = R @ R.T
        self.lam = svec(np.diag(lams))

    def W(self, v):
        V = smat(v, self.n)
        return svec(self.Rinv @ V @ self.Rinv.T)

    def Winv(self, v):
        V = smat(v, self.n)
        return svec(self.R @ V @ self.R.T)

    def WinvT(self, v):
        V = smat(v, self.n)
        return svec(self.R.T @ V @ self.R)

    def Hinv(self, v):
        V = smat(v, self.n)
        return svec(self.G @ V @ self.G)

    def jdiv(self, r):
        Rm = smat(r, self.n)
        return svec(2.0 * Rm / (self.lams[:, None] + self.lams[None, :]))


class PsdCone:
    def __init__(self, start: int, n: int):
        self.n = n
        self.dim = n * (n + 1) // 2
        self.sl = slice(start, start + self.dim)
        self.degree = n

    def identity(self):
        return svec(np.eye(self.n))

    def min_eig(self, v):
        return float(np.linalg.eigvalsh(smat(v, self.n))[0])

    def interior(self, v):
        try:
            la.cholesky(smat(v, self.n), lower=True)
        except la.LinAlgError:
            return False
        return True

    def max_step(self, v, dv):
        L = la.cholesky(smat(v, self.n), lower=True)
        T = la.solve_triangular(L, smat(dv, self.n), lower=True)
        T = la.solve_triangular(L, T.T, lower=True)
        lmin = float(np.linalg.eigvalsh((T + T.T) / 2.0)[0])
        return math.inf if lmin >= 0 else -1.0 / lmin

    def jprod(self, u, v):
        U, V = smat(u, self.n), smat(v, self.n)
        return svec((U @ V + V @ U) / 2.0)

    def scaling(self, x, s):
        L1 = la.cholesky(smat(x, self.n), lower=True)
        L2 = la.cholesky(smat(s, self.n), lower=True)
        _, lams, Vt = la.svd(L2.T @ L1)
        if lams.min() <= 0:
            raise FloatingPointError("mise à l'échelle NT singulière")
        R = L1 @ Vt.T / np.sqrt(lams)[None, :]
        Rinv = (np.sqrt(lams)[:, None] * Vt) @ la.solve_triangular(L1, np.eye(self.n), lower=True)
        return _PsdScaling(self.n, R, Rinv, lams)

    def identity_scaling(self):
        eye = np.eye(self.n)
        return _PsdScaling(self.n, eye, eye, np.ones(self.n))


# ---------------------------------------------------------------
# Présolve : équilibrage de Ruiz
# ---------------------------------------------------------------

@dataclass
class Unscaler:
    d_row: np.ndarray
    d_col: np.ndarray
    sigma_b: float
    sigma_c: float
    offset: float = 0.0

    def unscale(self, x, y, s):
        return (self.sigma_b * self.d_col * x,
                self.sigma_c * self.d_row * y,
                self.sigma_c * s / self.d_col)


def _column_groups(prog: ConeProgram) -> list[np.ndarray]:
    """Blocs dont les colonnes doivent partager un facteur d'échelle."""
    groups = []
    for kind, _, start, stop in prog.blocks():
        if kind in ("soc", "rsoc", "psd"):
            groups.append(np.arange(start, stop))
    return groups


def presolve_scale(prog: ConeProgram, iters: int = 20, tol: float = 1e-3):
    """
    Équilibrage de Ruiz (norme ∞) de A, puis mise à l'échelle de b et c.

    Les colonnes d'un même bloc soc/rsoc/psd reçoivent un facteur commun
    (le cône est invariant par homothétie).

    Returns:
        (programme mis à l'échelle, Unscaler)
    """
    A = prog.A.tocsr().copy()
    m, n = A.shape
    d_row, d_col = np.ones(m), np.ones(n)
    groups = _column_groups(prog)

    for _ in range(iters):
        absA = abs(A)
        rn = absA.max(axis=1).toarray().ravel() if m else np.zeros(0)
        cn = absA.max(axis=0).toarray().ravel() if m else np.zeros(n)
        for g in groups:
            cn[g] = cn[g].max()
        if np.all(np.abs(rn[rn > 0] - 1.0) < tol) and np.all(np.abs(cn[cn > 0] - 1.0) < tol):
            break
        r = np.where(rn > 0, 1.0 / np.sqrt(np.where(rn > 0, rn, 1.0)), 1.0)
        q = np.where(cn > 0, 1.0 / np.sqrt(np.where(cn > 0, cn, 1.0)), 1.0)
        A = (sp.diags(r) @ A @ sp.diags(q)).tocsr()
        d_row *= r
        d_col *= q

    bh = d_row * prog.b
    ch = d_col * prog.c
    sigma_b = max(1.0, float(np.abs(bh).max(initial=0.0)))
    sigma_c = max(1.0, float(np.abs(ch).max(initial=0.0)))
    scaled = ConeProgram(c=ch / sigma_c, A=A, b=bh / sigma_b, cones=list(prog.cones),
                         var_names=prog.var_names, name=prog.name)
    return scaled, Unscaler(d_row, d_col, sigma_b, sigma_c, prog.offset)


# ---------------------------------------------------------------
# Système KKT réduit
# ---------------------------------------------------------------

class _KktSolver:
    """
    Résout le système quasi-défini
        [ M + δI   A_F ] [dy ]   [r1]
        [ A_Fᵀ    -δI  ] [dxF] = [r2]
    avec raffinement itératif sur le système non régularisé.
    """

    def __init__(self, M, A_F, reg: float, refine_steps: int, dense: bool):
        m, nf = A_F.shape
        self.m, self.nf, self.dense = m, nf, dense
        self.refine_steps = refine_steps
        diag = np.r_[np.full(m, reg), np.full(nf, -reg)]
        if dense:
            K0 = np.asarray(M, dtype=float)
            if nf:
                AFd = A_F.toarray()
                K0 = np.block([[K0, AFd], [AFd.T, np.zeros((nf, nf))]])
            self.K0 = K0
            Kr = K0 + np.diag(diag)
            self.lu = la.lu_factor(Kr)
        else:
            K0 = sp.bmat([[M, A_F], [A_F.T, None]], format="csc") if nf else sp.csc_matrix(M)
            self.K0 = K0
            self.lu = splu((K0 + sp.diags(diag)).tocsc())

    def _solve_reg(self, rhs):
        if self.dense:
            return la.lu_solve(self.lu, rhs)
        return self.lu.solve(rhs)

    def solve(self, r1, r2):
        rhs = np.r_[r1, r2]
        sol = self._solve_reg(rhs)
        res = rhs - self.K0 @ sol
        norm = np.linalg.norm(res, np.inf)
        for _ in range(self.refine_steps):
            if norm <= 1e-14 * (1.0 + np.linalg.norm(rhs, np.inf)):
                break
            cand = sol + self._solve_reg(res)
            new_res = rhs - self.K0 @ cand
            new_norm = np.linalg.norm(new_res, np.inf)
            if new_norm >= norm:
                break
            sol, res, norm = cand, new_res, new_norm
        if not np.all(np.isfinite(sol)):
            raise FloatingPointError("direction de Newton non finie")
        return sol[: self.m], sol[self.m:]


# ---------------------------------------------------------------
# Problème interne (permutation, rsoc -> soc, lignes nulles)
# ---------------------------------------------------------------

class _Core:
    """Réordonne les colonnes : libres puis cônes ; rsoc converti en soc par rotation orthogonale."""

    def __init__(self, prog: ConeProgram):
        free_cols, nonneg_cols, cone_blocks = [], [], []
        for kind, n, start, stop in prog.blocks():
            cols = np.arange(start, stop)
            if kind == "free":
                free_cols.append(cols)
            elif kind == "nonneg":
                nonneg_cols.append(cols)
            else:
                cone_blocks.append((kind, n, cols))
        soc_like = [blk for blk in cone_blocks if blk[0] != "psd"]
        soc_like.sort(key=lambda blk: blk[1])
        psd_blocks = [blk for blk in cone_blocks if blk[0] == "psd"]

        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=int)
        free = cat(free_cols)
        nonneg = cat(nonneg_cols)
        self.nF = free.size
        perm = [free, nonneg]
        self.cones = []
        pos = nonneg.size
        if nonneg.size:
            self.cones.append(NonnegCone(0, nonneg.size))

        rot_pairs = []
        i = 0
        while i < len(soc_like):
            n = soc_like[i][1]
            j = i
            while j < len(soc_like) and soc_like[j][1] == n:
                kind, _, cols = soc_like[j]
                if kind == "rsoc":
                    rot_pairs.append(self.nF + pos + (j - i) * n)
                perm.append(cols)
                j += 1
            self.cones.append(SocGroup(pos, j - i, n))
            pos += (j - i) * n
            i = j
        for _, n, cols in psd_blocks:
            perm.append(cols)
            self.cones.append(PsdCone(pos, n))
            pos += cols.size

        self.perm = cat(perm)
        self.n = prog.n
        self.nK = self.n - self.nF

        T = sp.lil_matrix((self.n, self.n))
        T.setdiag(1.0)
        h = 1.0 / SQRT2
        for p in rot_pairs:
            T[p, p], T[p, p + 1], T[p + 1, p], T[p + 1, p + 1] = h, h, h, -h
        self.T = T.tocsr()

        A = prog.A.tocsc()[:, self.perm] @ self.T
        A = A.tocsr()
        row_nnz = np.diff(A.indptr)
        zero_rows = row_nnz == 0
        if np.any(np.abs(prog.b[zero_rows]) > 0):
            raise InfeasibleStructureError("ligne nulle de A avec second membre non nul")
        self.keep_rows = np.flatnonzero(~zero_rows)
        self.m_full = prog.m
        A = A[self.keep_rows]
        if A.shape[0] and structural_rank(A) < A.shape[0]:
            raise InfeasibleStructureError(
                f"A structurellement déficiente : rang {structural_rank(A)} < {A.shape[0]} lignes")
        self.A = A.tocsr()
        self.AT = self.A.T.tocsr()
        self.b = prog.b[self.keep_rows]
        self.c = self.T @ prog.c[self.perm]
        self.A_F = self.A[:, : self.nF].tocsc()
        self.A_K = self.A[:, self.nF:].tocsr()
        self.degree = sum(cone.degree for cone in self.cones)
        self.has_psd = any(isinstance(cone, PsdCone) for cone in self.cones)

        self._psd_rows = {}
        for cone in self.cones:
            if isinstance(cone, PsdCone):
                block = self.A_K[:, cone.sl].tocsr()
                rows = np.flatnonzero(np.diff(block.indptr))
                self._psd_rows[id(cone)] = (rows, block[rows].tocsr())

    def restore(self, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.n)
        out[self.perm] = self.T @ v
        return out

    def restore_rows(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m_full)
        out[self.keep_rows] = y
        return out

    # -- opérations par cône sur la partie K --------------------------

    def apply(self, scalings, method, v):
        out = np.empty_like(v)
        for cone, sc in zip(self.cones, scalings):
            out[cone.sl] = getattr(sc, method)(v[cone.sl])
        return out

    def jprod(self, u, v):
        out = np.empty_like(u)
        for cone in self.cones:
            out[cone.sl] = cone.jprod(u[cone.sl], v[cone.sl])
        return out

    def identity(self):
        out = np.empty(self.nK)
        for cone in self.cones:
            out[cone.sl] = cone.identity()
        return out

    def interior(self, v):
        return all(cone.interior(v[cone.sl]) for cone in self.cones)

    def max_step(self, v, dv):
        return min((cone.max_step(v[cone.sl], dv[cone.sl]) for cone in self.cones), default=math.inf)

    def max_neg_eig(self, v):
        return max((-cone.min_eig(v[cone.sl]) for cone in self.cones), default=-math.inf)

    def scalings(self, xK, sK):
        return [cone.scaling(xK[cone.sl], sK[cone.sl]) for cone in self.cones]

    def identity_scalings(self):
        return [cone.identity_scaling() for cone in self.cones]

    # -- matrice de Schur ---------------------------------------------

    def schur(self, scalings):
        """M = A_K H⁻¹ A_Kᵀ (creuse sans bloc psd, dense sinon)."""
        rows, cols, vals = [], [], []
        for cone, sc in zip(self.cones, scalings):
            if isinstance(cone, NonnegCone):
                idx = np.arange(cone.sl.start, cone.sl.stop)
                rows.append(idx)
                cols.append(idx)
                vals.append(sc.hinv_blocks()[0])
            elif isinstance(cone, SocGroup):
                blocks = sc.hinv_blocks()
                base = cone.sl.start + cone.n * np.arange(cone.k)
                ii, jj = np.meshgrid(np.arange(cone.n), np.arange(cone.n), indexing="ij")
                rows.append((base[:, None, None] + ii[None]).ravel())
                cols.append((base[:, None, None] + jj[None]).ravel())
                vals.append(blocks.ravel())
        if rows:
            H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.nK, self.nK))
            M = (self.A_K @ H @ self.A_K.T).tocsr()
        else:
            M = sp.csr_matrix((self.A.shape[0], self.A.shape[0]))
        if not self.has_psd:
            return M, False

        Md = M.toarray()
        for cone, sc in zip(self.cones, scalings):
            if not isinstance(cone, PsdCone):
                continue
            prow, F = self._psd_rows[id(cone)]
            if prow.size == 0:
                continue
            trow, tcol, tscale = _tril(cone.n)
            G = sc.G
            Tm = np.empty((prow.size, cone.dim))
            for i in range(prow.size):
                lo, hi = F.indptr[i], F.indptr[i + 1]
                idx, a = F.indices[lo:hi], F.data[lo:hi] / tscale[F.indices[lo:hi]]
                p, q = trow[idx], tcol[idx]
                off = p != q
                P = np.r_[p, q[off]]
                Q = np.r_[q, p[off]]
                V = np.r_[a, a[off]]
                Y = (G[:, P] * V) @ G[Q, :]
                Tm[i] = svec(Y)
            Md[np.ix_(prow, prow)] += (F @ Tm.T)
        return Md, True


# ---------------------------------------------------------------
# Résolution
# ---------------------------------------------------------------

def _direction(core, scalings, kkt, rp, rd, u):
    nF = core.nF
    rdK = rd[nF:]
    winv_u = core.apply(scalings, "Winv", u)
    r1 = rp + core.A_K @ (core.apply(scalings, "Hinv", rdK) - winv_u)
    dy, dxF = kkt.solve(r1, rd[:nF])
    dsK = rdK - core.A_K.T @ dy
    dxK = core.apply(scalings, "Hinv", core.A_K.T @ dy - rdK) + winv_u
    return np.r_[dxF, dxK], dy, np.r_[np.zeros(nF), dsK]


def _factor(core, scalings, st):
    """Factorise le système KKT ; régularisation ×1e3 à chaque échec (3 essais)."""
    M, dense = core.schur(scalings)
    reg = st.reg
    for _ in range(3):
        try:
            return _KktSolver(M, core.A_F, reg, st.refine_steps, dense)
        except (np.linalg.LinAlgError, RuntimeError):
            reg *= 1e3
    raise np.linalg.LinAlgError("factorisation KKT impossible malgré la régularisation")


def _interior_step(core, x, s, dx, ds, alpha, halvings=MAX_HALVINGS):
    """Pas divisé par 2 jusqu'à ce que x et s restent strictement dans leurs cônes ; None sinon."""
    nF = core.nF
    for _ in range(halvings + 1):
        if core.interior(x[nF:] + alpha * dx[nF:]) and core.interior(s[nF:] + alpha * ds[nF:]):
            return alpha
        alpha *= 0.5
    return None


def _initial_point(core, st):
    """Point initial par moindres carrés (H = I) décalé dans l'intérieur des cônes."""
    nF = core.nF
    ident = core.identity_scalings()
    kkt = _factor(core, ident, st)
    e = core.identity()

    yp, xF = kkt.solve(core.b, np.zeros(nF))
    xK = core.A_K.T @ yp
    y, _ = kkt.solve(core.A_K @ core.c[nF:], core.c[:nF])
    sK = core.c[nF:] - core.A_K.T @ y

    for v in (xK, sK):
        if v.size == 0:
            continue
        ap = core.max_neg_eig(v)
        if ap >= -1e-8 * max(np.linalg.norm(v), 1.0):
            v += (1.0 + ap) * e
    return np.r_[xF, xK], y, np.r_[np.zeros(nF), sK]


def solve(prog: ConeProgram, settings: ConeSettings | None = None) -> ConicSolution:
    """
    Résout un ConeProgram par points intérieurs primal-dual (NT + Mehrotra).

    Args:
        prog: Programme conique en forme standard
        settings: Tolérances et limites (ConeSettings)

    Returns:
        ConicSolution ; en cas de blocage, le meilleur itéré avec son statut
    """
    st = settings or ConeSettings()
    work, unscaler = presolve_scale(prog) if st.scale else (prog, Unscaler(
        np.ones(prog.m), np.ones(prog.n), 1.0, 1.0, prog.offset))
    core = _Core(work)
    A, b, c, nF = core.A, core.b, core.c, core.nF
    sig = unscaler.sigma_b * unscaler.sigma_c
    b_norm = np.linalg.norm(prog.b, np.inf)
    c_norm = np.linalg.norm(prog.c, np.inf)

    def measures(x, y, s):
        rp = b - A @ x
        rd = c - core.AT @ y - s
        rp_o = core.restore_rows(rp) / unscaler.d_row * unscaler.sigma_b
        rd_o = core.restore(rd) / unscaler.d_col * unscaler.sigma_c
        pobj = sig * float(c @ x) + unscaler.offset
        dobj = sig * float(b @ y) + unscaler.offset
        pres = np.linalg.norm(rp_o, np.inf) / (1.0 + b_norm)
        dres = np.linalg.norm(rd_o, np.inf) / (1.0 + c_norm)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        return rp, rd, pres, dres, pobj, dobj, gap

    status = "iteration_limit"
    try:
        x, y, s = _initial_point(core, st)
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError, ValueError):
        status = "stall"
        x, y, s = np.zeros(core.n), np.zeros(A.shape[0]), np.zeros(core.n)
        x[nF:] = core.identity()
        s[nF:] = core.identity()

    e = core.identity()
    best = None
    best_it = 0
    small_steps = 0
    it = 0
    final = None

    if st.verbose:
        print(f"⚙️ {prog.name or 'cone'} : {prog.m} contraintes, {prog.n} variables, cônes {len(core.cones)}")
        print(f"{'it':>4} {'pobj':>14} {'dobj':>14} {'pres':>9} {'dres':>9} {'gap':>9} {'step':>7}")

    alpha = 0.0
    while status != "stall":
        rp, rd, pres, dres, pobj, dobj, gap = measures(x, y, s)
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), s.copy(), pres, dres, pobj, dobj, gap)
            best_it = it
        if st.verbose:
            print(f"{it:4d} {pobj:14.6e} {dobj:14.6e} {pres:9.2e} {dres:9.2e} {gap:9.2e} {alpha:7.4f}")

        if pres <= st.feastol and dres <= st.feastol and gap <= st.gaptol:
            status = "optimal"
            final = (x, y, s, pres, dres, pobj, dobj, gap)
            break

        by = float(b @ y)
        if by > 1.0 and np.linalg.norm(core.AT @ y + s, np.inf) <= st.infeas_tol * by:
            status = "primal_infeasible"
            final = (x, y, s, pres, dres, pobj, dobj, gap)
            break
        cx = float(c @ x)
        if cx < -1.0 and np.linalg.norm(A @ x, np.inf) <= st.infeas_tol * -cx:
            status = "dual_infeasible"
            final = (x, y, s, pres, dres, pobj, dobj, gap)
            break

        if it >= st.max_iter:
            status = "iteration_limit"
            break
        if it - best_it > st.stall_iters:
            status = "stall"
            break

        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                xK, sK = x[nF:], s[nF:]
                scal = core.scalings(xK, sK)
                kkt = _factor(core, scal, st)
                lam = np.concatenate([sc.lam for sc in scal]) if scal else np.zeros(0)
                mu = float(lam @ lam) / core.degree if core.degree else 0.0

                dxa, dya, dsa = _direction(core, scal, kkt, rp, rd, -lam)
                step_a = min(1.0, core.max_step(xK, dxa[nF:]), core.max_step(sK, dsa[nF:]))
                sigma = min(1.0, max(0.0, 1.0 - step_a)) ** 3

                cross = core.jprod(core.apply(scal, "WinvT", dsa[nF:]), core.apply(scal, "W", dxa[nF:]))
                rc = sigma * mu * e - core.jprod(lam, lam) - cross
                u = core.apply(scal, "jdiv", rc)
                dx, dy, ds = _direction(core, scal, kkt, rp, rd, u)
                alpha = min(1.0, st.step_frac * core.max_step(xK, dx[nF:]),
                            st.step_frac * core.max_step(sK, ds[nF:]))
        except (np.linalg.LinAlgError, RuntimeError, FloatingPointError, ValueError) as exc:
            if st.verbose:
                print(f"⚠️ itération {it} interrompue : {exc}")
            status = "stall"
            break

        alpha = _interior_step(core, x, s, dx, ds, alpha)
        if alpha is None:
            if st.verbose:
                print(f"⚠️ itération {it} : aucun pas ne reste intérieur aux cônes")
            status = "stall"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        it += 1
        small_steps = small_steps + 1 if alpha < 1e-10 else 0
        if small_steps >= 3:
            status = "stall"

    if best is None:
        _, _, pres, dres, pobj, dobj, gap = measures(x, y, s)
        best = (max(pres, dres, gap), x, y, s, pres, dres, pobj, dobj, gap)
    if final is None:
        _, xb, yb, sb, pres, dres, pobj, dobj, gap = best
        if max(pres, dres, gap) <= st.near_tol:
            status = "near_optimal"
        final = (xb, yb, sb, pres, dres, pobj, dobj, gap)

    xf, yf, sf, pres, dres, pobj, dobj, gap = final
    x_o, y_o, s_o = unscaler.unscale(core.restore(xf), core.restore_rows(yf), core.restore(sf))
    values = {name: prog.evaluate(name, x_o) for name in prog.maps}
    if st.verbose:
        print(f"{'✅' if status in OK_STATUSES else '⚠️'} statut {status} après {it} itérations, objectif {pobj:.8g}")
    return ConicSolution(x=x_o, y=y_o, s=s_o, status=status, obj_primal=pobj, obj_dual=dobj,
                         gap_rel=gap, iters=it, pres=pres, dres=dres, values=values)


# ---------------------------------------------------------------
# Export texte (triplets creux + liste des cônes)
# ---------------------------------------------------------------

def dump_program(prog: ConeProgram) -> str:
    """
    Format texte :
        name <nom>
        size <m> <n>
        offset <valeur>
        cones <k>      suivi de k lignes "<kind> <n>"
        c <nnz>        suivi de lignes "<j> <valeur>"
        b <nnz>        suivi de lignes "<i> <valeur>"
        A <nnz>        suivi de lignes "<i> <j> <valeur>"
    Indices à partir de 0 ; les applications nommées (maps) ne sont pas exportées.
    """
    lines = ["# relaxopf cone program v1", f"name {prog.name or '-'}",
             f"size {prog.m} {prog.n}", f"offset {float(prog.offset)!r}", f"cones {len(prog.cones)}"]
    lines += [f"{kind} {n}" for kind, n in prog.cones]
    cj = np.flatnonzero(prog.c)
    lines.append(f"c {cj.size}")
    lines += [f"{j} {float(prog.c[j])!r}" for j in cj]
    bi = np.flatnonzero(prog.b)
    lines.append(f"b {bi.size}")
    lines += [f"{i} {float(prog.b[i])!r}" for i in bi]
    coo = prog.A.tocoo()
    lines.append(f"A {coo.nnz}")
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    return "\n".join(lines) + "\n"


def load_program(text: str) -> ConeProgram:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(lines)

    def expect(tag):
        parts = next(it).split()
        if parts[0] != tag:
            raise ValueError(f"section '{tag}' attendue, lu '{parts[0]}'")
        return parts[1:]

    name = expect("name")[0]
    m, n = (int(v) for v in expect("size"))
    offset = float(expect("offset")[0])
    cones = []
    for _ in range(int(expect("cones")[0])):
        kind, size = next(it).split()
        cones.append((kind, int(size)))
    c = np.zeros(n)
    for _ in range(int(expect("c")[0])):
        j, v = next(it).split()
        c[int(j)] = float(v)
    b = np.zeros(m)
    for _ in range(int(expect("b")[0])):
        i, v = next(it).split()
        b[int(i)] = float(v)
    nnz = int(expect("A")[0])
    trip = np.array([next(it).split() for _ in range(nnz)], dtype=float).reshape(nnz, 3)
    A = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(m, n))
    return ConeProgram(c=c, A=A, b=b, cones=cones, offset=offset, name="" if name == "-" else name)


# Test rapide
if __name__ == "__main__":
    lp = ConeProgram(c=[1.0, 0.0], A=sp.csr_matrix([[1.0, 1.0]]), b=[1.0], cones=[("nonneg", 2)], name="lp")
    sol = solve(lp, ConeSettings(verbose=True))
    print(f"x = {sol.x}, objectif = {sol.obj_primal:.6f}")
