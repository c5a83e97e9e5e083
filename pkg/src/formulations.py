"""
formulations.py
Relaxations convexes de l'AC-OPF : DC (B-θ), QC (enveloppes) et SDP (W ⪰ 0),
extraction des points de fonctionnement et diagnostic de rang
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree

from src.conic import ConeProgram, ConeSettings, ConicSolution, solve
from src.network import Network, branch_admittances
from src.program_builder import Lin, Model, lsum

FORMULATIONS = ("dc", "qc", "sdp")
PENALTY_KINDS = ("none", "reactive", "trace", "branch_loss")
MAX_ANGLE_STEPS = 100


class AngleRelaxationError(RuntimeError):
    """Le DC-OPF reste infaisable même sans limites d'angle."""


class ExtractionError(RuntimeError):
    """Solution inexploitable (W_kk négatif au-delà de la tolérance)."""


# ---------------------------------------------------------------
# Types
# ---------------------------------------------------------------

@dataclass
class OperatingPoint:
    pg: np.ndarray
    vm: np.ndarray
    qg: np.ndarray | None = None
    va: np.ndarray | None = None
    s_from: np.ndarray | None = None
    s_to: np.ndarray | None = None
    objective: float = math.nan
    source: str = "nlp"
    angles_reconstructed: bool = False

    def __post_init__(self):
        self.pg = np.asarray(self.pg, dtype=float)
        self.vm = np.asarray(self.vm, dtype=float)
        if np.any(self.vm <= 0):
            raise ValueError("les modules de tension doivent être > 0")

    def check_sizes(self, net: Network):
        if self.pg.size != net.n_gen or self.vm.size != net.n_bus:
            raise ValueError(f"point de taille incohérente avec {net.name}")
        if self.qg is not None and len(self.qg) != net.n_gen:
            raise ValueError("qg de taille incohérente")
        if self.va is not None and len(self.va) != net.n_bus:
            raise ValueError("va de taille incohérente")

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float).tolist()

        def carr(v):
            return None if v is None else [[float(z.real), float(z.imag)] for z in v]

        return {
            "source": self.source, "objective": self.objective,
            "pg": arr(self.pg), "qg": arr(self.qg), "vm": arr(self.vm), "va": arr(self.va),
            "s_from": carr(self.s_from), "s_to": carr(self.s_to),
            "angles_reconstructed": self.angles_reconstructed,
        }


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "none"
    eps_rel: float = 0.0
    f_cost0: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"pénalité inconnue : {self.kind}")
        if self.eps_rel < 0:
            raise ValueError("le poids de pénalité doit être ≥ 0")
        if self.kind != "none" and self.f_cost0 <= 0:
            raise ValueError("f_cost0 > 0 requis pour une pénalité")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.eps_rel > 0

    @property
    def weight(self) -> float:
        return self.eps_rel * self.f_cost0


@dataclass(frozen=True)
class RankInfo:
    eig1: float
    eig2: float
    ratio: float


@dataclass
class FormulationRun:
    kind: str
    program: ConeProgram
    solution: ConicSolution
    point: OperatingPoint | None
    relax_count: int = 0
    rank: RankInfo | None = None
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------
# Éléments communs
# ---------------------------------------------------------------

def _add_generators(model: Model, net: Network, reactive: bool = True):
    """Variables pg/qg bornées et coût polynomial (épigraphe tourné pour c2)."""
    pg, qg = [], []
    cost = []
    for g, gen in enumerate(net.gens):
        p = model.add_var(f"pg[{g}]", gen.pmin, gen.pmax)
        pg.append(p)
        if reactive:
            qg.append(model.add_var(f"qg[{g}]", gen.qmin, gen.qmax))
        if gen.c2 > 0:
            cost.append(model.quad_epigraph(gen.c2, p, f"cost[{g}]"))
        cost.append(gen.c1 * p + gen.c0)
    model.minimize(lsum(cost))
    return pg, qg


def _gens_at(net: Network) -> list[list[int]]:
    at = [[] for _ in range(net.n_bus)]
    for g, k in enumerate(net.gen_bus_idx):
        at[k].append(g)
    return at


def _w_flows(adm, wf, wt, wr, wi):
    """Flux (P_f, Q_f, P_t, Q_t) affines en (w_f, w_t, Re W_ft, Im W_ft)."""
    g_ff, b_ff = adm.y_ff.real, adm.y_ff.imag
    g_ft, b_ft = adm.y_ft.real, adm.y_ft.imag
    g_tf, b_tf = adm.y_tf.real, adm.y_tf.imag
    g_tt, b_tt = adm.y_tt.real, adm.y_tt.imag
    p_f = g_ff * wf + g_ft * wr + b_ft * wi
    q_f = -b_ff * wf + g_ft * wi - b_ft * wr
    p_t = g_tt * wt + g_tf * wr - b_tf * wi
    q_t = -b_tt * wt - g_tf * wi - b_tf * wr
    return p_f, q_f, p_t, q_t


def _w_balance(model, net, pg, qg, w, flows):
    """Bilan nodal en puissance (P et Q) avec shunts gs·w, bs·w."""
    at = _gens_at(net)
    p_out = [[] for _ in range(net.n_bus)]
    q_out = [[] for _ in range(net.n_bus)]
    for l, (p_f, q_f, p_t, q_t) in enumerate(flows):
        f, t = net.f_idx[l], net.t_idx[l]
        p_out[f].append(p_f)
        q_out[f].append(q_f)
        p_out[t].append(p_t)
        q_out[t].append(q_t)
    for k, bus in enumerate(net.buses):
        model.eq(lsum(pg[g] for g in at[k]) - bus.gs * w[k] - lsum(p_out[k]), bus.pd, tag=f"bilan_p[{k}]")
        model.eq(lsum(qg[g] for g in at[k]) + bus.bs * w[k] - lsum(q_out[k]), bus.qd, tag=f"bilan_q[{k}]")


def _thermal(model, net, flows):
    for l, br in enumerate(net.branches):
        if br.limited:
            p_f, q_f, p_t, q_t = flows[l]
            model.soc([br.s_max, p_f, q_f], tag=f"thermique_f[{l}]")
            model.soc([br.s_max, p_t, q_t], tag=f"thermique_t[{l}]")


def _add_flow_maps(model, flows):
    model.add_map("pf", [f[0] for f in flows])
    model.add_map("qf", [f[1] for f in flows])
    model.add_map("pt", [f[2] for f in flows])
    model.add_map("qt", [f[3] for f in flows])


# ---------------------------------------------------------------
# DC-OPF
# ---------------------------------------------------------------

def build_dcopf(net: Network, angle_scale: float | None = 1.0) -> ConeProgram:
    """
    DC-OPF B-θ. angle_scale multiplie les bornes d'angle ; None les supprime.
    Les shunts gs sont traités comme une charge à |V| = 1.
    """
    model = Model(f"{net.name}:dc")
    pg, _ = _add_generators(model, net, reactive=False)
    slack = net.bus_index[net.slack_bus()]
    theta = [model.add_var(f"theta[{k}]", *((0.0, 0.0) if k == slack else (-math.inf, math.inf)))
             for k in range(net.n_bus)]

    flows = []
    for l, br in enumerate(net.branches):
        f, t = net.f_idx[l], net.t_idx[l]
        diff = theta[f] - theta[t]
        flows.append((diff - br.shift) / (br.x * br.tap))
        if br.limited:
            model.le(flows[l], br.s_max, tag=f"flux_max[{l}]")
            model.ge(flows[l], -br.s_max, tag=f"flux_min[{l}]")
        if angle_scale is not None:
            model.le(diff, br.ang_max * angle_scale, tag=f"angle_max[{l}]")
            model.ge(diff, br.ang_min * angle_scale, tag=f"angle_min[{l}]")

    at = _gens_at(net)
    out = [[] for _ in range(net.n_bus)]
    for l in range(net.n_branch):
        out[net.f_idx[l]].append(flows[l])
        out[net.t_idx[l]].append(-flows[l])
    for k, bus in enumerate(net.buses):
        model.eq(lsum(pg[g] for g in at[k]) - lsum(out[k]), bus.pd + bus.gs, tag=f"bilan_p[{k}]")

    model.add_map("pg", pg)
    model.add_map("va", theta)
    model.add_map("flow", flows)
    return model.build()


def relax_dc_angles(net: Network, step: float = 0.10,
                    settings: ConeSettings | None = None) -> tuple[ConeProgram, int]:
    """
    Élargit les bornes d'angle par pas de (1+step)^k jusqu'à faisabilité.

    Raises:
        AngleRelaxationError: infaisable même sans bornes d'angle, ou k > 100
    """
    free = solve(build_dcopf(net, angle_scale=None), settings)
    if not free.ok:
        raise AngleRelaxationError(
            f"DC-OPF de {net.name} infaisable sans limites d'angle ({free.status}) : "
            f"l'élargissement des angles ne peut pas le rendre faisable"
        )
    for k in range(MAX_ANGLE_STEPS + 1):
        prog = build_dcopf(net, angle_scale=(1.0 + step) ** k)
        if solve(prog, settings).ok:
            if k:
                print(f"⚠️ {net.name} : bornes d'angle DC élargies {k} fois ({(1.0 + step) ** k:.3f}×)")
            return prog, k
    raise AngleRelaxationError(f"DC-OPF de {net.name} infaisable après {MAX_ANGLE_STEPS} élargissements")


# ---------------------------------------------------------------
# Relaxation QC
# ---------------------------------------------------------------

@dataclass(frozen=True)
class _Pair:
    i: int
    j: int
    lo: float
    hi: float

    @property
    def theta_m(self) -> float:
        return max(-self.lo, self.hi)


def _bus_pairs(net: Network):
    """Paires de bus (branches parallèles regroupées) et (paire, signe) par branche."""
    index: dict[tuple[int, int], int] = {}
    bounds: list[list[float]] = []
    ends: list[tuple[int, int]] = []
    of_branch = []
    for l, br in enumerate(net.branches):
        f, t = int(net.f_idx[l]), int(net.t_idx[l])
        if (f, t) in index:
            p, sign = index[(f, t)], 1
        elif (t, f) in index:
            p, sign = index[(t, f)], -1
        else:
            p, sign = len(ends), 1
            index[(f, t)] = p
            ends.append((f, t))
            bounds.append([-math.inf, math.inf])
        lo, hi = (br.ang_min, br.ang_max) if sign > 0 else (-br.ang_max, -br.ang_min)
        bounds[p][0] = max(bounds[p][0], lo)
        bounds[p][1] = min(bounds[p][1], hi)
        of_branch.append((p, sign))
    pairs = [_Pair(i, j, lo, hi) for (i, j), (lo, hi) in zip(ends, bounds)]
    return pairs, of_branch


def _mccormick(model, z, x, y, xb, yb, tag):
    """Enveloppe de McCormick de z = x·y sur [xl, xu] × [yl, yu]."""
    (xl, xu), (yl, yu) = xb, yb
    model.ge(z - yl * x - xl * y, -xl * yl, tag=tag)
    model.ge(z - yu * x - xu * y, -xu * yu, tag=tag)
    model.le(z - yl * x - xu * y, -xu * yl, tag=tag)
    model.le(z - yu * x - xl * y, -xl * yu, tag=tag)


def build_qc(net: Network) -> ConeProgram:
    """
    Relaxation QC : enveloppes ⟨v²⟩ᵀ, McCormick, ⟨cos⟩ᶜ, ⟨sin⟩ˢ, lien pertes/courant l,
    inégalités valides |W_ij|² ≤ W_ii·W_jj et bornes tan(θ) en espace W.
    """
    return _qc_model(net).build()


def _qc_model(net: Network) -> Model:
    model = Model(f"{net.name}:qc")
    pg, qg = _add_generators(model, net)
    slack = net.bus_index[net.slack_bus()]
    v, theta, w = [], [], []
    for k, bus in enumerate(net.buses):
        vk = model.add_var(f"v[{k}]", bus.vmin, bus.vmax)
        wk = model.add_var(f"w[{k}]", bus.vmin ** 2, bus.vmax ** 2)
        bounds = (0.0, 0.0) if k == slack else (-math.inf, math.inf)
        theta.append(model.add_var(f"theta[{k}]", *bounds))
        model.rsoc([wk, 0.5, vk], tag=f"carre_inf[{k}]")
        model.le(wk - (bus.vmin + bus.vmax) * vk, -bus.vmin * bus.vmax, tag=f"carre_sup[{k}]")
        v.append(vk)
        w.append(wk)

    pairs, of_branch = _bus_pairs(net)
    wr, wi = [], []
    for p, pair in enumerate(pairs):
        bi, bj = net.buses[pair.i], net.buses[pair.j]
        tm = pair.theta_m
        if tm >= math.pi / 2:
            raise ValueError(f"borne d'angle ≥ 90° sur la paire {bi.id}-{bj.id}")
        vv_b = (bi.vmin * bj.vmin, bi.vmax * bj.vmax)
        cs_b = (math.cos(tm), 1.0)
        si_b = (-math.sin(tm), math.sin(tm))
        vv = model.add_var(f"vv[{p}]", *vv_b)
        cs = model.add_var(f"cs[{p}]", *cs_b)
        si = model.add_var(f"si[{p}]", *si_b)
        wr_p = model.add_var(f"wr[{p}]", -vv_b[1], vv_b[1])
        wi_p = model.add_var(f"wi[{p}]", -vv_b[1], vv_b[1])
        dth = theta[pair.i] - theta[pair.j]
        model.le(dth, pair.hi, tag=f"angle_max[{p}]")
        model.ge(dth, pair.lo, tag=f"angle_min[{p}]")

        _mccormick(model, vv, v[pair.i], v[pair.j], (bi.vmin, bi.vmax), (bj.vmin, bj.vmax), f"mc_vv[{p}]")
        k_cos = (1.0 - math.cos(tm)) / tm ** 2 if tm > 0 else 0.5
        model.rsoc([1.0 - cs, 0.5 / k_cos, dth], tag=f"cos_sup[{p}]")
        half = tm / 2.0
        model.le(si - math.cos(half) * dth, math.sin(half) - math.cos(half) * half, tag=f"sin_sup[{p}]")
        model.ge(si - math.cos(half) * dth, math.cos(half) * half - math.sin(half), tag=f"sin_inf[{p}]")
        _mccormick(model, wr_p, vv, cs, vv_b, cs_b, f"mc_wr[{p}]")
        _mccormick(model, wi_p, vv, si, vv_b, si_b, f"mc_wi[{p}]")

        model.rsoc([w[pair.i], 0.5 * w[pair.j], wr_p, wi_p], tag=f"produit_w[{p}]")
        model.ge(wi_p - math.tan(pair.lo) * wr_p, 0.0, tag=f"tan_min[{p}]")
        model.le(wi_p - math.tan(pair.hi) * wr_p, 0.0, tag=f"tan_max[{p}]")
        wr.append(wr_p)
        wi.append(wi_p)

    adm = branch_admittances(net)
    flows = []
    for l, br in enumerate(net.branches):
        f, t = net.f_idx[l], net.t_idx[l]
        p, sign = of_branch[l]
        p_f, q_f, p_t, q_t = _w_flows(adm[l], w[f], w[t], wr[p], sign * wi[p])
        flows.append((p_f, q_f, p_t, q_t))
        cur = model.add_var(f"l[{l}]", 0.0)
        tap2 = br.tap ** 2
        model.eq(p_f + p_t - br.r * cur, 0.0, tag=f"pertes_p[{l}]")
        model.eq(q_f + q_t - br.x * cur + (br.b_ch / 2.0) * (w[f] / tap2 + w[t]), 0.0, tag=f"pertes_q[{l}]")
        model.rsoc([w[f] / tap2, 0.5 * cur, p_f, q_f + br.b_ch * w[f] / (2.0 * tap2)], tag=f"courant[{l}]")

    _w_balance(model, net, pg, qg, w, flows)
    _thermal(model, net, flows)

    model.add_map("pg", pg)
    model.add_map("qg", qg)
    model.add_map("w", w)
    model.add_map("v", v)
    model.add_map("va", theta)
    _add_flow_maps(model, flows)
    return model


def qc_point_values(net: Network, vm, va, pg, qg) -> dict[str, float]:
    """Image d'un point AC dans les variables de la relaxation QC (test d'enveloppes)."""
    vm, va = np.asarray(vm, dtype=float), np.asarray(va, dtype=float)
    vals: dict[str, float] = {}
    for g in range(net.n_gen):
        vals[f"pg[{g}]"] = float(pg[g])
        vals[f"qg[{g}]"] = float(qg[g])
    for k in range(net.n_bus):
        vals[f"v[{k}]"] = vm[k]
        vals[f"w[{k}]"] = vm[k] ** 2
        vals[f"theta[{k}]"] = va[k]
    pairs, _ = _bus_pairs(net)
    for p, pair in enumerate(pairs):
        vv = vm[pair.i] * vm[pair.j]
        d = va[pair.i] - va[pair.j]
        vals.update({f"vv[{p}]": vv, f"cs[{p}]": math.cos(d), f"si[{p}]": math.sin(d),
                     f"wr[{p}]": vv * math.cos(d), f"wi[{p}]": vv * math.sin(d)})
    V = vm * np.exp(1j * va)
    for l, br in enumerate(net.branches):
        f, t = net.f_idx[l], net.t_idx[l]
        tc = br.tap * np.exp(1j * br.shift)
        i_series = (V[f] / tc - V[t]) / complex(br.r, br.x)
        vals[f"l[{l}]"] = abs(i_series) ** 2
    for g, gen in enumerate(net.gens):
        if gen.c2 > 0:
            vals[f"cost[{g}]"] = gen.c2 * float(pg[g]) ** 2
    return vals


# ---------------------------------------------------------------
# Relaxation SDP
# ---------------------------------------------------------------

def build_sdp(net: Network, pen: PenaltySpec | None = None) -> ConeProgram:
    """
    Relaxation SDP : W hermitienne plongée en bloc réel X ⪰ 0 de taille 2|N|,
    V = e + j·f, X ≈ [e; f][e; f]ᵀ, Re W_ij = X_ij + X_{n+i,n+j},
    Im W_ij = X_{n+i,j} − X_{i,n+j}.
    """
    pen = pen or PenaltySpec()
    n = net.n_bus
    model = Model(f"{net.name}:sdp" + (f":{pen.kind}" if pen.kind != "none" else ""))
    pg, qg = _add_generators(model, net)
    X = model.psd_block(2 * n, "X")

    def re_w(i, j):
        return X[i, j] + X[n + i, n + j]

    def im_w(i, j):
        return X[n + i, j] - X[i, n + j]

    w = [re_w(k, k) for k in range(n)]
    for k, bus in enumerate(net.buses):
        model.ge(w[k], bus.vmin ** 2, tag=f"v_min[{k}]")
        model.le(w[k], bus.vmax ** 2, tag=f"v_max[{k}]")

    adm = branch_admittances(net)
    flows = []
    for l, br in enumerate(net.branches):
        f, t = int(net.f_idx[l]), int(net.t_idx[l])
        wr, wi = re_w(f, t), im_w(f, t)
        flows.append(_w_flows(adm[l], w[f], w[t], wr, wi))
        model.ge(wi - math.tan(br.ang_min) * wr, 0.0, tag=f"tan_min[{l}]")
        model.le(wi - math.tan(br.ang_max) * wr, 0.0, tag=f"tan_max[{l}]")

    _w_balance(model, net, pg, qg, w, flows)
    _thermal(model, net, flows)

    if pen.active:
        # pénalité en MW/MVAr, comme le coût
        eps = pen.weight * net.base_mva
        if pen.kind == "trace":
            model.minimize(eps * lsum(w))
        elif pen.kind == "reactive":
            model.minimize(eps * lsum(qg))
        elif pen.kind == "branch_loss":
            for l, (p_f, q_f, p_t, q_t) in enumerate(flows):
                t_l = model.add_var(f"perte[{l}]", 0.0)
                model.soc([t_l, p_f + p_t, q_f + q_t], tag=f"perte[{l}]")
                model.minimize(eps * t_l)

    model.add_map("pg", pg)
    model.add_map("qg", qg)
    model.add_map("w", w)
    _add_flow_maps(model, flows)
    model.add_map("wre", [re_w(i, j) for i in range(n) for j in range(n)])
    model.add_map("wim", [im_w(i, j) for i in range(n) for j in range(n)])
    return model.build()


def _complex_w(sol: ConicSolution) -> np.ndarray:
    wre, wim = sol.values["wre"], sol.values["wim"]
    n = int(round(math.sqrt(wre.size)))
    return (wre + 1j * wim).reshape(n, n)


def rank_info(sol: ConicSolution) -> RankInfo:
    """Deux plus grandes valeurs propres de la matrice W hermitienne reconstruite."""
    W = _complex_w(sol)
    eig = np.linalg.eigvalsh((W + W.conj().T) / 2.0)[::-1]
    eig1 = float(eig[0])
    eig2 = float(eig[1]) if eig.size > 1 else 0.0
    ratio = eig1 / eig2 if eig2 > 0 else math.inf
    return RankInfo(eig1=eig1, eig2=eig2, ratio=ratio)


def _tree_angles(net: Network, W: np.ndarray) -> np.ndarray:
    """Angles propagés le long d'un arbre couvrant de poids |W_ij| maximal."""
    n = net.n_bus
    mag = np.abs(W[net.f_idx, net.t_idx])
    weight = (mag.max(initial=0.0) + 1.0) - mag
    graph = csr_matrix((weight, (net.f_idx, net.t_idx)), shape=(n, n))
    tree = minimum_spanning_tree(graph + graph.T)
    root = net.bus_index[net.slack_bus()]
    order, pred = breadth_first_order(tree + tree.T, root, directed=False, return_predecessors=True)
    va = np.zeros(n)
    for j in order[1:]:
        i = pred[j]
        va[j] = va[i] - np.angle(W[i, j])
    return va


# ---------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------

def extract_point(net: Network, kind: str, sol: ConicSolution,
                  reconstruct_angles: bool = False, pen: PenaltySpec | None = None) -> OperatingPoint:
    """
    Point de fonctionnement issu d'une solution de relaxation.

    Raises:
        ValueError: solution non optimale ou formulation inconnue
        ExtractionError: W_kk < −1e-8
    """
    if not sol.ok:
        raise ValueError(f"extraction impossible : statut {sol.status}")
    vals = sol.values
    pg = vals["pg"]
    if kind == "dc":
        flow = vals["flow"]
        return OperatingPoint(pg=pg, vm=np.ones(net.n_bus), va=vals["va"],
                              s_from=flow.astype(complex), s_to=-flow.astype(complex),
                              objective=sol.obj_primal, source="dc")
    if kind not in ("qc", "sdp"):
        raise ValueError(f"formulation inconnue : {kind}")

    w = vals["w"]
    if np.any(w < -1e-8):
        k = int(np.argmin(w))
        raise ExtractionError(f"W_kk négatif au bus {net.buses[k].id} : {w[k]:.3e}")
    vm = np.sqrt(np.clip(w, 1e-12, None))
    s_from = vals["pf"] + 1j * vals["qf"]
    s_to = vals["pt"] + 1j * vals["qt"]

    if kind == "qc":
        return OperatingPoint(pg=pg, qg=vals["qg"], vm=vm, va=vals["va"], s_from=s_from, s_to=s_to,
                              objective=sol.obj_primal, source="qc")

    penalized = pen is not None and pen.active
    va = _tree_angles(net, _complex_w(sol)) if reconstruct_angles else None
    return OperatingPoint(pg=pg, qg=vals["qg"], vm=vm, va=va, s_from=s_from, s_to=s_to,
                          objective=net.generation_cost(pg) if penalized else sol.obj_primal,
                          source="sdp_penalized" if penalized else "sdp",
                          angles_reconstructed=reconstruct_angles)


def solve_formulation(net: Network, kind: str, pen: PenaltySpec | None = None,
                      settings: ConeSettings | None = None, reconstruct_angles: bool = False,
                      relax_angles: bool = True) -> FormulationRun:
    """
    Construit, résout et extrait une formulation. Pour le DC, un échec de résolution
    déclenche l'élargissement des bornes d'angle si relax_angles.
    """
    if kind not in FORMULATIONS:
        raise ValueError(f"formulation inconnue : {kind}")
    relax_count = 0
    if kind == "dc":
        prog = build_dcopf(net)
    elif kind == "qc":
        prog = build_qc(net)
    else:
        prog = build_sdp(net, pen)
    print(f"⚙️ {prog.name} : {prog.m} contraintes, {prog.n} variables")
    sol = solve(prog, settings)

    notes = []
    if kind == "dc" and not sol.ok and relax_angles:
        prog, relax_count = relax_dc_angles(net, settings=settings)
        sol = solve(prog, settings)
        notes.append(f"angles DC élargis {relax_count} fois")

    if not sol.ok:
        print(f"⚠️ {prog.name} : statut {sol.status} (résidus {sol.pres:.1e}/{sol.dres:.1e})")
        return FormulationRun(kind, prog, sol, None, relax_count, notes=notes)

    point = extract_point(net, kind, sol, reconstruct_angles=reconstruct_angles, pen=pen)
    rank = rank_info(sol) if kind == "sdp" else None
    print(f"✅ {prog.name} : {sol.status}, objectif {sol.obj_primal:.4f} en {sol.iters} itérations")
    return FormulationRun(kind, prog, sol, point, relax_count, rank, notes)


# Test rapide
if __name__ == "__main__":
    import os
    from src.network import CASE_DIR, load_case

    net = load_case(os.path.join(CASE_DIR, "case9.m"))
    for kind in FORMULATIONS:
        run = solve_formulation(net, kind)
        if run.rank:
            print(f"📊 rapport de valeurs propres : {run.rank.ratio:.3e}")
