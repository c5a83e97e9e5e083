"""
nlp.py
AC-OPF non convexe en coordonnées polaires : dérivées analytiques exactes
et méthode de points intérieurs primal-dual (barrière monotone, mérite ℓ1)
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from dotenv import load_dotenv

from src.acpf import dsbus_dv
from src.formulations import OperatingPoint
from src.network import Network, branch_matrices, gen_incidence, ybus

load_dotenv()

NLP_TOL = float(os.getenv("OPF_NLP_TOL", "1e-6"))
NLP_MAX_ITER = int(os.getenv("OPF_NLP_MAX_ITER", "300"))
NLP_MU0 = float(os.getenv("OPF_NLP_MU0", "0.1"))
NLP_WARM_MU = float(os.getenv("OPF_NLP_WARM_MU", "1e-2"))

NLP_STATUSES = ("local_optimal", "infeasible", "iteration_limit")
KAPPA_EPS = 10.0
ARMIJO = 1e-4


@dataclass
class NlpSettings:
    tol: float = NLP_TOL
    max_iter: int = NLP_MAX_ITER
    mu0: float = NLP_MU0
    warm_mu: float = NLP_WARM_MU
    mu_factor: float = 0.2
    tau: float = 0.995
    max_backtracks: int = 30
    trace_path: str | None = None
    verbose: bool = False


@dataclass
class NlpResult:
    point: OperatingPoint
    status: str
    iters: int
    kkt_residual: float
    objective: float
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    init: str = "flat"
    trace: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "local_optimal"


# ---------------------------------------------------------------
# Dérivées des puissances complexes
# ---------------------------------------------------------------

def _dsbr_dv(Ybr, Cbr, V):
    """Flux S = V_b·conj(Ybr V) d'une extrémité de branche et ses dérivées."""
    Ibr = Ybr @ V
    Vb = Cbr @ V
    diagIc = sp.diags(np.conj(Ibr))
    diagVb = sp.diags(Vb)
    dS_dva = 1j * (diagIc @ Cbr @ sp.diags(V) - diagVb @ (Ybr @ sp.diags(V)).conj())
    dS_dvm = diagVb @ (Ybr @ sp.diags(V / np.abs(V))).conj() + diagIc @ Cbr @ sp.diags(V / np.abs(V))
    return Vb * np.conj(Ibr), dS_dva, dS_dvm


def _quad_hessian(K, V, vm):
    """
    Hessien en (θ, |V|) de Re Σ K_ik V_i conj(V_k), avec G = diag(V) K diag(V̄),
    r et c sommes des lignes et colonnes de G.
    """
    G = (sp.diags(V) @ K @ sp.diags(np.conj(V))).tocsr()
    r = np.asarray(G.sum(axis=1)).ravel()
    c = np.asarray(G.sum(axis=0)).ravel()
    Gt = G.T
    Dinv = sp.diags(1.0 / vm)
    Haa = G + Gt - sp.diags(r + c)
    Hav = 1j * ((G - Gt) @ Dinv + sp.diags((r - c) / vm))
    Hvv = Dinv @ (G + Gt) @ Dinv
    return sp.bmat([[Haa.real, Hav.real], [Hav.real.T, Hvv.real]], format="csr")


def _midpoint(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), (lo + hi) / 2.0, 0.0)
    return np.clip(mid, lo, hi)


# ---------------------------------------------------------------
# Problème
# ---------------------------------------------------------------

class NlpProblem:
    """
    Variables x = [θ, |V|, pg, qg] ; égalités g(x) = 0 (bilans P/Q, variables fixées,
    angle de référence) ; inégalités h(x) ≤ 0 (|S|² ≤ s_max², écarts d'angle, bornes).
    """

    def __init__(self, net: Network):
        self.net = net
        n, ng = net.n_bus, net.n_gen
        self.n, self.ng = n, ng
        self.nx = 2 * n + 2 * ng
        self.Y = ybus(net)
        self.Yf, self.Yt, self.Cf, self.Ct = branch_matrices(net)
        self.Cg = gen_incidence(net)
        self.sd = net.arrays("pd") + 1j * net.arrays("qd")
        self.ref = net.bus_index[net.slack_bus()]

        self.lim = np.array([l for l, br in enumerate(net.branches) if br.limited], dtype=int)
        self.smax2 = np.array([net.branches[l].s_max ** 2 for l in self.lim])
        self.A_ang = (self.Cf - self.Ct).tocsr()
        self.ang_min = net.arrays("ang_min", "branches")
        self.ang_max = net.arrays("ang_max", "branches")
        self.c2 = net.arrays("c2", "gens")
        self.c1 = net.arrays("c1", "gens")
        self.c0 = net.arrays("c0", "gens")

        inf = np.full(n, math.inf)
        self.lo = np.r_[-inf, net.arrays("vmin"), net.arrays("pmin", "gens"), net.arrays("qmin", "gens")]
        self.hi = np.r_[inf, net.arrays("vmax"), net.arrays("pmax", "gens"), net.arrays("qmax", "gens")]
        self.lo[self.ref] = self.hi[self.ref] = 0.0
        fixed = self.lo == self.hi
        self.fixed_idx = np.flatnonzero(fixed)
        self.fixed_val = self.lo[fixed]
        self.ub_idx = np.flatnonzero(~fixed & np.isfinite(self.hi))
        self.lb_idx = np.flatnonzero(~fixed & np.isfinite(self.lo))

        self.neq = 2 * n + self.fixed_idx.size
        nlim = self.lim.size
        self.niq = 2 * nlim + 2 * net.n_branch + self.ub_idx.size + self.lb_idx.size

        rows = np.arange(self.fixed_idx.size)
        self._J_fixed = sp.csr_matrix((np.ones(rows.size), (rows, self.fixed_idx)),
                                      shape=(rows.size, self.nx))
        nb = self.ub_idx.size + self.lb_idx.size
        self._J_bounds = sp.csr_matrix(
            (np.r_[np.ones(self.ub_idx.size), -np.ones(self.lb_idx.size)],
             (np.arange(nb), np.r_[self.ub_idx, self.lb_idx])), shape=(nb, self.nx))

    # --- découpage ---

    def split(self, x):
        n, ng = self.n, self.ng
        return x[:n], x[n:2 * n], x[2 * n:2 * n + ng], x[2 * n + ng:]

    def voltage(self, x) -> np.ndarray:
        va, vm, _, _ = self.split(x)
        return vm * np.exp(1j * va)

    # --- coût ---

    def cost(self, x) -> float:
        pg = self.split(x)[2]
        return float(np.sum(self.c2 * pg ** 2 + self.c1 * pg + self.c0))

    def grad_f(self, x) -> np.ndarray:
        out = np.zeros(self.nx)
        pg = self.split(x)[2]
        out[2 * self.n:2 * self.n + self.ng] = 2.0 * self.c2 * pg + self.c1
        return out

    # --- égalités ---

    def g(self, x) -> np.ndarray:
        V = self.voltage(x)
        _, _, pg, qg = self.split(x)
        mis = V * np.conj(self.Y @ V) + self.sd - self.Cg @ (pg + 1j * qg)
        return np.r_[mis.real, mis.imag, x[self.fixed_idx] - self.fixed_val]

    def jac_g(self, x) -> sp.csr_matrix:
        dS_dvm, dS_dva = dsbus_dv(self.Y, self.voltage(x))
        zero = sp.csr_matrix((self.n, self.ng))
        top = sp.hstack([dS_dva.real, dS_dvm.real, -self.Cg, zero])
        mid = sp.hstack([dS_dva.imag, dS_dvm.imag, zero, -self.Cg])
        return sp.vstack([top, mid, self._J_fixed], format="csr")

    # --- inégalités ---

    def flows(self, x):
        V = self.voltage(x)
        s_f = V[self.net.f_idx] * np.conj(self.Yf @ V)
        s_t = V[self.net.t_idx] * np.conj(self.Yt @ V)
        return s_f, s_t

    def h(self, x) -> np.ndarray:
        s_f, s_t = self.flows(x)
        va = self.split(x)[0]
        dth = self.A_ang @ va
        return np.r_[
            np.abs(s_f[self.lim]) ** 2 - self.smax2,
            np.abs(s_t[self.lim]) ** 2 - self.smax2,
            dth - self.ang_max,
            self.ang_min - dth,
            x[self.ub_idx] - self.hi[self.ub_idx],
            self.lo[self.lb_idx] - x[self.lb_idx],
        ]

    def _flow_jac(self, Ybr, Cbr, V):
        S, dva, dvm = _dsbr_dv(Ybr[self.lim], Cbr[self.lim], V)
        J = sp.hstack([dva, dvm]).tocsr()
        return S, J

    def jac_h(self, x) -> sp.csr_matrix:
        V = self.voltage(x)
        pad = sp.csr_matrix((self.lim.size, 2 * self.ng))
        blocks = []
        for Ybr, Cbr in ((self.Yf, self.Cf), (self.Yt, self.Ct)):
            if not self.lim.size:
                continue
            S, J = self._flow_jac(Ybr, Cbr, V)
            dh = 2.0 * (sp.diags(S.real) @ J.real + sp.diags(S.imag) @ J.imag)
            blocks.append(sp.hstack([dh, pad]))
        ang = sp.hstack([self.A_ang, sp.csr_matrix((self.net.n_branch, self.nx - self.n))])
        blocks += [ang, -ang, self._J_bounds]
        return sp.vstack(blocks, format="csr")

    # --- hessien du lagrangien ---

    def hess_lag(self, x, lam, mu, obj_scale: float = 1.0) -> sp.csr_matrix:
        V = self.voltage(x)
        vm = self.split(x)[1]
        n, nlim = self.n, self.lim.size
        K = sp.diags(lam[:n] - 1j * lam[n:2 * n]) @ self.Y.conj()
        extra = sp.csr_matrix((2 * n, 2 * n))
        for k, (Ybr, Cbr) in enumerate(((self.Yf, self.Cf), (self.Yt, self.Ct))):
            if not nlim:
                break
            nu = mu[k * nlim:(k + 1) * nlim]
            S, J = self._flow_jac(Ybr, Cbr, V)
            Cl, Yl = Cbr[self.lim], Ybr[self.lim]
            K = K + 2.0 * (Cl.T @ sp.diags(nu * np.conj(S)) @ Yl.conj())
            extra = extra + 2.0 * (J.conj().T @ sp.diags(nu) @ J).real
        Hv = _quad_hessian(K, V, vm) + extra
        Hg = sp.diags(2.0 * obj_scale * self.c2)
        return sp.block_diag([Hv, Hg, sp.csr_matrix((self.ng, self.ng))], format="csr")

    # --- points ---

    def x_flat(self) -> np.ndarray:
        net = self.net
        vm = np.clip(1.0, net.arrays("vmin"), net.arrays("vmax"))
        # V = 1∠0, S_G = 0 ramenés dans les bornes
        pg = np.clip(0.0, net.arrays("pmin", "gens"), net.arrays("pmax", "gens"))
        qg = np.clip(0.0, net.arrays("qmin", "gens"), net.arrays("qmax", "gens"))
        x = np.r_[np.zeros(self.n), vm, pg, qg]
        x[self.fixed_idx] = self.fixed_val
        return x

    def x_from_point(self, point: OperatingPoint) -> np.ndarray:
        point.check_sizes(self.net)
        va = np.zeros(self.n) if point.va is None else np.asarray(point.va, dtype=float)
        va = va - va[self.ref]
        if point.qg is None:
            qg = _midpoint(self.net.arrays("qmin", "gens"), self.net.arrays("qmax", "gens"))
        else:
            qg = np.asarray(point.qg, dtype=float)
        x = np.r_[va, point.vm, point.pg, qg]
        x[self.fixed_idx] = self.fixed_val
        return x

    def to_point(self, x, source: str = "nlp") -> OperatingPoint:
        va, vm, pg, qg = self.split(x)
        s_f, s_t = self.flows(x)
        va = va.copy()
        va[self.ref] = 0.0
        return OperatingPoint(pg=pg.copy(), qg=qg.copy(), vm=np.clip(vm, 1e-6, None), va=va,
                              s_from=s_f, s_to=s_t, objective=self.cost(x), source=source)


# ---------------------------------------------------------------
# Points intérieurs
# ---------------------------------------------------------------

@dataclass
class _Eval:
    g: np.ndarray
    h: np.ndarray
    Jg: sp.csr_matrix
    Jh: sp.csr_matrix
    gf: np.ndarray
    f: float
    Lx: np.ndarray
    feas: float
    grad: float
    comp: float
    xnorm: float

    @property
    def kkt(self) -> float:
        return max(self.feas, self.grad, self.comp)


def _evaluate(prob: NlpProblem, x, z, lam, mu, s_f) -> _Eval:
    g, h = prob.g(x), prob.h(x)
    Jg, Jh = prob.jac_g(x), prob.jac_h(x)
    gf = s_f * prob.grad_f(x)
    Lx = gf + Jg.T @ lam + Jh.T @ mu
    xnorm = float(np.linalg.norm(x, np.inf))
    feas = max(float(np.linalg.norm(g, np.inf)), float(max(h.max(initial=0.0), 0.0)))
    feas /= 1.0 + max(xnorm, float(np.linalg.norm(z, np.inf)))
    grad = float(np.linalg.norm(Lx, np.inf)) / (
        1.0 + max(np.linalg.norm(lam, np.inf), np.linalg.norm(mu, np.inf)))
    comp = float(z @ mu) / (1.0 + xnorm)
    return _Eval(g, h, Jg, Jh, gf, s_f * prob.cost(x), Lx, feas, grad, comp, xnorm)


def _barrier_error(ev: _Eval, z, mu, gamma) -> float:
    cent = float(np.linalg.norm(z * mu - gamma, np.inf)) / (1.0 + ev.xnorm)
    return max(ev.feas, ev.grad, cent)


def _merit(ev: _Eval, z, gamma, nu) -> float:
    return ev.f - gamma * float(np.sum(np.log(z))) + nu * (
        float(np.abs(ev.g).sum()) + float(np.abs(ev.h + z).sum()))


def _fraction_to_boundary(v, dv, tau) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, tau * float(np.min(-v[neg] / dv[neg])))


def solve_local(net: Network, init: OperatingPoint | None = None,
                settings: NlpSettings | None = None, label: str | None = None) -> NlpResult:
    """
    Résout l'AC-OPF localement.

    Args:
        net: Réseau
        init: None pour un départ plat, sinon point de démarrage à chaud
        settings: NlpSettings
        label: Nom de l'initialisation pour les rapports

    Returns:
        NlpResult (local_optimal | infeasible | iteration_limit)
    """
    st = settings or NlpSettings()
    prob = NlpProblem(net)
    warm = init is not None
    label = label or (init.source if warm else "flat")

    x = prob.x_from_point(init) if warm else prob.x_flat()
    gamma = st.warm_mu if warm else st.mu0
    h0 = prob.h(x)
    z = np.maximum(-h0, 1e-4) if warm else np.maximum(-h0, 1.0)
    mu = gamma / z
    lam = np.zeros(prob.neq)
    gnorm = float(np.linalg.norm(prob.grad_f(x), np.inf))
    s_f = min(1.0, 100.0 / gnorm) if gnorm > 0 else 1.0
    gamma_min = st.tol / (10.0 * max(1, prob.niq))
    nu = 1.0
    delta_last = 0.0

    ev = _evaluate(prob, x, z, lam, mu, s_f)
    best = (ev.kkt, x.copy(), lam.copy(), mu.copy())
    trace: list[dict] = []
    status = "iteration_limit"
    it = 0
    alpha_p = alpha_d = 0.0
    backtracks = 0

    if st.verbose:
        print(f"⚙️ NLP {net.name} ({label}) : {prob.nx} variables, {prob.neq} égalités, {prob.niq} inégalités")
        print(f"{'it':>4} {'objectif':>14} {'feas':>9} {'grad':>9} {'comp':>9} {'gamma':>9} {'pas':>7}")

    while True:
        if not (np.isfinite(ev.kkt) and ev.xnorm < 1e8):
            status = "infeasible"
            break
        if ev.kkt < best[0]:
            best = (ev.kkt, x.copy(), lam.copy(), mu.copy())
        trace.append({"it": it, "gamma": gamma, "objective": ev.f / s_f, "feascond": ev.feas,
                      "gradcond": ev.grad, "compcond": ev.comp, "alpha_p": alpha_p,
                      "alpha_d": alpha_d, "backtracks": backtracks, "delta_w": delta_last})
        if st.verbose:
            print(f"{it:4d} {ev.f / s_f:14.6f} {ev.feas:9.2e} {ev.grad:9.2e} {ev.comp:9.2e} "
                  f"{gamma:9.2e} {alpha_p:7.4f}")
        if ev.kkt <= st.tol:
            status = "local_optimal"
            break
        if it >= st.max_iter:
            break

        # réduction monotone de la barrière
        while gamma > gamma_min and _barrier_error(ev, z, mu, gamma) <= KAPPA_EPS * gamma:
            gamma = max(gamma_min, min(st.mu_factor * gamma, gamma ** 1.5))

        sig = mu / z
        Lxx = prob.hess_lag(x, lam, mu, s_f)
        M = Lxx + ev.Jh.T @ sp.diags(sig) @ ev.Jh
        N = ev.Lx + ev.Jh.T @ (sig * ev.h + gamma / z)
        rhs = np.r_[-N, -ev.g]
        I_x = sp.identity(prob.nx, format="csr")
        I_e = sp.identity(prob.neq, format="csr")

        direction = None
        delta = 0.0
        for _ in range(12):
            KKT = sp.bmat([[M + delta * I_x, ev.Jg.T], [ev.Jg, -1e-10 * I_e]], format="csc")
            try:
                with np.errstate(all="ignore"):
                    sol = splu(KKT).solve(rhs)
            except RuntimeError:
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                dx, dlam = sol[:prob.nx], sol[prob.nx:]
                dz = -ev.h - z - ev.Jh @ dx
                dmu = -mu + (gamma - mu * dz) / z
                nu_try = max(nu, 1.1 * max(np.linalg.norm(lam + dlam, np.inf),
                                           np.linalg.norm(mu + dmu, np.inf)))
                dphi = float(ev.gf @ dx) - gamma * float(np.sum(dz / z)) - nu_try * (
                    float(np.abs(ev.g).sum()) + float(np.abs(ev.h + z).sum()))
                if dphi < 0:
                    direction = (dx, dlam, dz, dmu, dphi)
                    nu = nu_try
                    break
            delta = max(1e-4, delta_last / 3.0) if delta == 0.0 else 8.0 * delta
        delta_last = delta
        if direction is None:
            if st.verbose:
                print(f"⚠️ itération {it} : aucune direction de descente")
            break
        dx, dlam, dz, dmu, dphi = direction

        alpha_p = _fraction_to_boundary(z, dz, st.tau)
        alpha_d = _fraction_to_boundary(mu, dmu, st.tau)
        phi0 = _merit(ev, z, gamma, nu)
        err0 = _barrier_error(ev, z, mu, gamma)
        accepted = None
        alpha = alpha_p
        for backtracks in range(st.max_backtracks + 1):
            xn, zn = x + alpha * dx, z + alpha * dz
            lamn, mun = lam + alpha_d * dlam, mu + alpha_d * dmu
            with np.errstate(all="ignore"):
                evn = _evaluate(prob, xn, zn, lamn, mun, s_f)
                phi = _merit(evn, zn, gamma, nu)
            if np.isfinite(phi) and (phi <= phi0 + ARMIJO * alpha * dphi
                                     or _barrier_error(evn, zn, mun, gamma) <= 0.9 * err0):
                accepted = (xn, zn, lamn, mun, evn)
                break
            alpha *= 0.5
        if accepted is None:
            if st.verbose:
                print(f"⚠️ itération {it} : recherche linéaire en échec après {st.max_backtracks} réductions")
            break
        x, z, lam, mu, ev = accepted
        alpha_p = alpha
        it += 1

    if status != "local_optimal":
        kkt, x, lam, mu = best
    else:
        kkt = ev.kkt
    point = prob.to_point(x)
    if st.trace_path:
        pd.DataFrame(trace).to_csv(st.trace_path, index=False)
    icon = "✅" if status == "local_optimal" else "⚠️"
    print(f"{icon} NLP {net.name} ({label}) : {status} en {it} itérations, objectif {point.objective:.4f}")
    return NlpResult(point=point, status=status, iters=it, kkt_residual=float(kkt),
                     objective=point.objective, lam=lam, mu=mu, init=label, trace=trace)


# ---------------------------------------------------------------
# Vérification des dérivées
# ---------------------------------------------------------------

@dataclass
class DerivativeReport:
    grad_f: float
    jac_g: float
    jac_h: float
    hess_lag: float

    @property
    def max_error(self) -> float:
        return max(self.grad_f, self.jac_g, self.jac_h, self.hess_lag)

    def to_dict(self) -> dict:
        return {"grad_f": self.grad_f, "jac_g": self.jac_g, "jac_h": self.jac_h,
                "hess_lag": self.hess_lag, "max": self.max_error}


def _rel_err(analytic, fd) -> float:
    analytic = analytic.toarray() if sp.issparse(analytic) else np.asarray(analytic)
    return float(np.max(np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd)), initial=0.0))


def random_interior_point(net: Network, seed: int | None = None) -> OperatingPoint:
    """Point strictement intérieur aux bornes, angles faibles."""
    rng = np.random.default_rng(seed)
    prob = NlpProblem(net)

    def inside(lo, hi, size):
        lo_f = np.where(np.isfinite(lo), lo, -1.0)
        hi_f = np.where(np.isfinite(hi), hi, 1.0)
        return lo_f + (hi_f - lo_f) * rng.uniform(0.25, 0.75, size)

    va = rng.uniform(-0.1, 0.1, net.n_bus)
    va[prob.ref] = 0.0
    return OperatingPoint(
        pg=inside(net.arrays("pmin", "gens"), net.arrays("pmax", "gens"), net.n_gen),
        qg=inside(net.arrays("qmin", "gens"), net.arrays("qmax", "gens"), net.n_gen),
        vm=inside(net.arrays("vmin"), net.arrays("vmax"), net.n_bus),
        va=va, source="random",
    )


def check_derivatives(net: Network, point: OperatingPoint | None = None, h: float = 1e-6,
                      seed: int | None = None) -> DerivativeReport:
    """
    Différences finies centrées contre gradient, jacobiens et hessien analytiques
    (multiplicateurs aléatoires, μ > 0).
    """
    rng = np.random.default_rng(seed)
    prob = NlpProblem(net)
    x = prob.x_from_point(point or random_interior_point(net, seed))
    lam = rng.normal(size=prob.neq)
    mu = rng.uniform(0.1, 1.0, prob.niq)

    def lag_grad(v):
        return prob.grad_f(v) + prob.jac_g(v).T @ lam + prob.jac_h(v).T @ mu

    fd_f = np.zeros(prob.nx)
    fd_g = np.zeros((prob.neq, prob.nx))
    fd_h = np.zeros((prob.niq, prob.nx))
    fd_H = np.zeros((prob.nx, prob.nx))
    for j in range(prob.nx):
        e = np.zeros(prob.nx)
        e[j] = h
        fd_f[j] = (prob.cost(x + e) - prob.cost(x - e)) / (2 * h)
        fd_g[:, j] = (prob.g(x + e) - prob.g(x - e)) / (2 * h)
        fd_h[:, j] = (prob.h(x + e) - prob.h(x - e)) / (2 * h)
        fd_H[:, j] = (lag_grad(x + e) - lag_grad(x - e)) / (2 * h)

    return DerivativeReport(
        grad_f=_rel_err(prob.grad_f(x), fd_f),
        jac_g=_rel_err(prob.jac_g(x), fd_g),
        jac_h=_rel_err(prob.jac_h(x), fd_h),
        hess_lag=_rel_err(prob.hess_lag(x, lam, mu), fd_H),
    )


# ---------------------------------------------------------------
# Démarrages à chaud
# ---------------------------------------------------------------

@dataclass
class WarmstartMetric:
    init: str
    iters: int
    converged: bool
    status: str
    objective: float


def warmstart_metrics(net: Network, inits: list[tuple[str, OperatingPoint | None]],
                      settings: NlpSettings | None = None) -> list[WarmstartMetric]:
    """Même réglage pour chaque initialisation ; itérations et objectifs tabulés."""
    rows = []
    for label, point in inits:
        res = solve_local(net, point, settings, label=label)
        rows.append(WarmstartMetric(label, res.iters, res.converged, res.status, res.objective))
    return rows


# Test rapide
if __name__ == "__main__":
    from src.network import CASE_DIR, load_case

    net = load_case(os.path.join(CASE_DIR, "case9.m"))
    report = check_derivatives(net, seed=0)
    print(f"📊 erreurs relatives des dérivées : {report.to_dict()}")
    res = solve_local(net, settings=NlpSettings(verbose=True))
    print(f"{'✅' if res.converged else '❌'} objectif {res.objective:.2f} $/h")
