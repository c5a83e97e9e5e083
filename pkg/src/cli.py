"""
cli.py
Interface en ligne de commande : résolution des relaxations, balayage des
pénalités, démarrages à chaud, vérification des dérivées et rapports de corpus
"""

import argparse
import glob
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime

from dotenv import load_dotenv

from src.acpf import PfSettings, run_pf
from src.conic import ConeSettings, dump_program
from src.formulations import FORMULATIONS, AngleRelaxationError, ExtractionError, solve_formulation
from src.metrics import evaluate
from src.mlflow_tracker import log_solve_run, log_sweep_run, log_warmstart_run
from src.network import CASE_DIR, Network, load_case
from src.nlp import NlpResult, NlpSettings, check_derivatives, solve_local
from src.recovery import (
    DEFAULT_GRID_PCT, SWEEP_KINDS, WARMSTART_INITS,
    best_recovery, best_warmstart, objectives_agree, penalty_sweep, refine_penalty, warmstart_bench,
)
from src.reports import (
    CORPUS_FILE, DERIV_COLUMNS, SOLVE_COLUMNS, SOLVE_FILE, SWEEP_COLUMNS, WARMSTART_COLUMNS,
    append_rows, appendix_table, correlation_table, format_row, merge_results, write_json, write_rows,
)

load_dotenv()

RESULTS_DIR = os.getenv("OPF_RESULTS_DIR", "results")
CLI_JOBS = int(os.getenv("OPF_JOBS", "1"))
CLI_SEED = int(os.getenv("OPF_SEED", "0"))
DERIV_TOL = 1e-6
LOWER_BOUND_TOL = 1e-6
CASE_SUFFIXES = (".m", ".json")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Configuration de lancement invalide (chemin absent, liste inconnue...)."""


# ---------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------

@dataclass
class RunConfig:
    workflow: str
    cases: list[str]
    out_dir: str = RESULTS_DIR
    formulations: tuple[str, ...] = FORMULATIONS
    penalties: tuple[str, ...] = SWEEP_KINDS
    eps_grid: tuple[float, ...] = DEFAULT_GRID_PCT
    warm_starts: tuple[str, ...] = WARMSTART_INITS
    jobs: int = CLI_JOBS
    seed: int = CLI_SEED
    trace: bool = False
    reconstruct_angles: bool = False
    refine: bool = False
    dump: bool = False
    points: int = 10
    nlp: NlpSettings = field(default_factory=NlpSettings)
    cone: ConeSettings = field(default_factory=ConeSettings)
    pf: PfSettings = field(default_factory=PfSettings)

    def validate(self):
        if not self.cases:
            raise ConfigError("aucun cas à traiter")
        if self.jobs < 1:
            raise ConfigError(f"--jobs doit être ≥ 1 (reçu {self.jobs})")
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"répertoire de sortie inutilisable : {self.out_dir} ({exc})") from exc
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"répertoire de sortie non inscriptible : {self.out_dir}")

    def case_dir(self, net: Network) -> str:
        path = os.path.join(self.out_dir, net.name)
        os.makedirs(path, exist_ok=True)
        return path

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_cases(entries: list[str]) -> list[str]:
    """Fichiers .m/.json ; un répertoire est développé en ses cas triés."""
    paths = []
    for entry in entries:
        if os.path.isdir(entry):
            found = sorted(p for p in glob.glob(os.path.join(entry, "*")) if p.endswith(CASE_SUFFIXES))
            if not found:
                raise ConfigError(f"aucun cas .m/.json dans {entry}")
            paths.extend(found)
        elif os.path.isfile(entry):
            paths.append(entry)
        else:
            raise ConfigError(f"chemin introuvable : {entry}")
    return paths


def _parse_list(text: str | None, allowed, what: str) -> tuple[str, ...]:
    if text is None:
        return tuple(allowed)
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [s for s in items if s not in allowed]
    if unknown or not items:
        raise ConfigError(f"{what} inconnu(s) : {', '.join(unknown) or text!r} (choix : {', '.join(allowed)})")
    return items


def _parse_grid(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_GRID_PCT
    try:
        grid = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"grille ε invalide : {text!r}") from exc
    if not grid or any(e <= 0 for e in grid):
        raise ConfigError(f"grille ε invalide : {text!r} (valeurs > 0 attendues, en %)")
    return grid


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig à partir des options, par-dessus les défauts de l'environnement."""
    nlp = NlpSettings(verbose=args.verbose)
    if args.nlp_tol is not None:
        nlp.tol = args.nlp_tol
    if args.nlp_max_iter is not None:
        nlp.max_iter = args.nlp_max_iter
    config = RunConfig(
        workflow=args.command,
        cases=resolve_cases(args.cases),
        out_dir=args.out,
        jobs=args.jobs,
        seed=args.seed,
        trace=args.trace,
        nlp=nlp,
        cone=ConeSettings(verbose=args.verbose),
    )
    if args.command == "solve":
        config.formulations = _parse_list(args.formulations, FORMULATIONS, "formulation")
        config.reconstruct_angles = args.reconstruct_angles
        config.dump = args.dump
    elif args.command == "sweep":
        config.penalties = _parse_list(args.penalties, SWEEP_KINDS, "pénalité")
        config.eps_grid = _parse_grid(args.eps_grid)
        config.refine = args.refine
    elif args.command == "warmstart":
        config.warm_starts = _parse_list(args.warm_start, WARMSTART_INITS, "initialisation")
    elif args.command == "derivcheck":
        config.points = args.points
    return config


# ---------------------------------------------------------------
# Workflows par cas
# ---------------------------------------------------------------

def _local_reference(net: Network, config: RunConfig, case_dir: str) -> NlpResult:
    nlp = replace(config.nlp, trace_path=os.path.join(case_dir, "nlp_trace.csv") if config.trace else None)
    local = solve_local(net, settings=nlp, label="flat")
    if not local.converged:
        print(f"⚠️ {net.name} : optimum local non atteint ({local.status}), écarts et distances n.a.")
    return local


def cmd_solve(net: Network, formulation: str, local: NlpResult, config: RunConfig,
              points: dict | None = None) -> dict:
    """
    Relaxation + extraction + AC-PF + métriques contre l'optimum local.
    Retourne une ligne SOLVE_COLUMNS ; solveur en échec → ligne signalée, cellules n.a.
    """
    f_local = local.objective if local.converged else None
    local_point = local.point if local.converged else None
    row = {"case": net.name, "formulation": formulation, "f_local": f_local}
    t0 = time.perf_counter()
    try:
        run = solve_formulation(net, formulation, settings=config.cone,
                                reconstruct_angles=config.reconstruct_angles)
    except (AngleRelaxationError, ExtractionError) as exc:
        print(f"❌ {net.name}/{formulation} : {exc}")
        row.update(status="error", error=str(exc))
        return row

    sol = run.solution
    flags = list(run.notes) + list(net.flags)
    row.update(status=sol.status, relax_count=run.relax_count, iters=sol.iters,
               rank_ratio=None if run.rank is None else run.rank.ratio)
    if config.dump:
        with open(os.path.join(config.case_dir(net), f"{formulation}.cone"), "w", encoding="utf-8") as fh:
            fh.write(dump_program(run.program))

    if run.point is None:
        flags.append(f"solveur conique : {sol.status}")
    else:
        row["objective"] = sol.obj_primal
        pf = run_pf(net, run.point, config.pf)
        report = evaluate(net, run.point, pf, local_point, sol.obj_primal, f_local)
        row.update(report.to_row())
        if f_local is not None and sol.obj_primal > f_local + LOWER_BOUND_TOL * (1 + abs(f_local)):
            flags.append("objectif de relaxation au-dessus de l'optimum local")
        if not pf.converged:
            flags.append("AC-PF non convergé")
        if points is not None:
            points[formulation] = run.point.to_dict()
    row["flags"] = "; ".join(flags)

    print(f"📊 {net.name}/{formulation} : {format_row(row)}")
    log_solve_run(case=net.name, formulation=formulation, status=sol.status,
                  objective=row.get("objective"), opt_gap_pct=row.get("opt_gap_pct"),
                  viol_total=row.get("viol_total"), dist_avg=row.get("dist_avg"),
                  iters=sol.iters, duration_seconds=time.perf_counter() - t0)
    return row


def solve_case(path: str, config: RunConfig) -> list[dict]:
    net = load_case(path)
    case_dir = config.case_dir(net)
    local = _local_reference(net, config, case_dir)
    points = {"local": local.point.to_dict()}
    rows = [cmd_solve(net, f, local, config, points) for f in config.formulations]
    write_rows(rows, os.path.join(case_dir, SOLVE_FILE), SOLVE_COLUMNS)
    write_json({"case": net.name, "local_status": local.status, "local_iters": local.iters,
                "f_local": local.objective if local.converged else None,
                "flags": list(net.flags), "rows": rows, "points": points},
               os.path.join(case_dir, "solve.json"))
    return rows


def cmd_sweep(path: str, config: RunConfig) -> list[dict]:
    """Balayage des pénalités SDP (séquentiel dans le cas), raffinement optionnel."""
    t0 = time.perf_counter()
    net = load_case(path)
    case_dir = config.case_dir(net)
    local = _local_reference(net, config, case_dir)
    sweep = penalty_sweep(net, kinds=config.penalties, grid=config.eps_grid, local=local,
                          cone=config.cone, pf_settings=config.pf, nlp_settings=config.nlp, jobs=1)
    rows = [{**r, "stage": "grid"} for r in sweep.to_rows()]
    refined = {}
    if config.refine and sweep.status == "ok":
        for kind in config.penalties:
            ref = refine_penalty(net, sweep, kind, cone=config.cone, pf_settings=config.pf)
            rows.extend({**r, "stage": "refine"} for r in ref.to_rows())
            refined[kind] = {k: vars(s) for k, s in ref.summary.items()}
            sweep.rows.extend(ref.rows)

    best = best_recovery(sweep)
    summary = sweep.summary_dict()
    summary["refined"] = refined
    summary["best"] = None if best is None else {
        "method": best.method, "suboptimality_pct": best.suboptimality_pct, "point": best.point.to_dict(),
    }
    write_rows(rows, os.path.join(case_dir, "sweep.csv"), SWEEP_COLUMNS)
    write_json(summary, os.path.join(case_dir, "sweep.json"))
    log_sweep_run(case=net.name, status=sweep.status, n_points=len(rows), summary=sweep.summary,
                  duration_seconds=time.perf_counter() - t0)
    return rows


def cmd_warmstart(path: str, config: RunConfig) -> list[dict]:
    """NLP depuis chaque initialisation demandée, mêmes réglages."""
    t0 = time.perf_counter()
    net = load_case(path)
    case_dir = config.case_dir(net)
    bench = warmstart_bench(net, inits=config.warm_starts, nlp_settings=config.nlp,
                            cone=config.cone, pf_settings=config.pf)
    rows = [{"case": net.name, **r.to_row()} for r in bench]
    for r in rows:
        if r["available"]:
            print(f"📊 {net.name}/{r['init']} : {r['status']}, {r['iters']} itérations, objectif {r['objective']:.4f}")
    agree = objectives_agree(bench)
    if not agree:
        print(f"⚠️ {net.name} : objectifs différents selon l'initialisation (optima locaux distincts)")
    best = best_warmstart(bench)
    write_rows(rows, os.path.join(case_dir, "warmstart.csv"), WARMSTART_COLUMNS)
    write_json({"case": net.name, "objectives_agree": agree, "rows": rows,
                "best": None if best is None else {"method": best.method, "ac_feasible": best.ac_feasible,
                                                   "point": best.point.to_dict()}},
               os.path.join(case_dir, "warmstart.json"))
    log_warmstart_run(case=net.name, rows=rows, duration_seconds=time.perf_counter() - t0)
    return rows


def cmd_derivcheck(path: str, config: RunConfig) -> list[dict]:
    """Différences finies à config.points points intérieurs tirés depuis config.seed."""
    net = load_case(path)
    rows = []
    for k in range(config.points):
        rep = check_derivatives(net, seed=config.seed + k)
        rows.append({"case": net.name, "seed": config.seed + k, **rep.to_dict()})
        if rep.max_error > DERIV_TOL:
            print(f"⚠️ {net.name} graine {config.seed + k} : erreur relative {rep.max_error:.2e}")
    worst = max(r["max"] for r in rows) if rows else 0.0
    print(f"{'✅' if worst <= DERIV_TOL else '⚠️'} {net.name} : {len(rows)} points, erreur max {worst:.2e}")
    write_rows(rows, os.path.join(config.case_dir(net), "derivcheck.csv"), DERIV_COLUMNS)
    return rows


WORKFLOWS = {
    "solve": solve_case,
    "sweep": cmd_sweep,
    "warmstart": cmd_warmstart,
    "derivcheck": cmd_derivcheck,
}


def run_case(path: str, config: RunConfig) -> dict:
    """Un cas, une exception capturée → statut 'error' sans interrompre le lot."""
    t0 = time.perf_counter()
    print(f"📦 {config.workflow} : {path}")
    try:
        rows = WORKFLOWS[config.workflow](path, config)
        status, error = "ok", None
    except Exception as exc:  # noqa: BLE001
        print(f"❌ {path} : {type(exc).__name__} : {exc}")
        rows, status, error = [], "error", f"{type(exc).__name__}: {exc}"
    return {"path": path, "status": status, "error": error, "rows": rows,
            "seconds": round(time.perf_counter() - t0, 3)}


def run_workflow(config: RunConfig) -> list[dict]:
    """Pool de processus au niveau des cas ; ordre des résultats = ordre des cas."""
    if config.jobs > 1 and len(config.cases) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(config.cases))) as pool:
            return list(pool.map(run_case, config.cases, [config] * len(config.cases)))
    return [run_case(p, config) for p in config.cases]


# ---------------------------------------------------------------
# Rapport de corpus
# ---------------------------------------------------------------

def cmd_report(result_dir: str) -> int:
    """Fusionne les solve.csv par cas en tableaux de corpus + corrélations."""
    if not os.path.isdir(result_dir):
        print(f"❌ répertoire de résultats introuvable : {result_dir}")
        return EXIT_USAGE
    df = merge_results(result_dir)
    if df.empty:
        print(f"❌ aucun résultat {SOLVE_FILE} dans {result_dir}")
        return EXIT_USAGE
    table = appendix_table(df)
    corr = correlation_table(df)
    table.to_csv(os.path.join(result_dir, "appendix.csv"), index=False)
    corr.to_csv(os.path.join(result_dir, "correlation.csv"), index=False)
    print(table.to_string(index=False))
    if corr.empty:
        print("⚠️ moins de 3 lignes exploitables par formulation : corrélations non calculées")
    for _, r in corr.iterrows():
        print(f"📊 {r['formulation']} {r['x']} ~ {r['y']} (n={r['n']}) : "
              f"Pearson(log10)={r['pearson_log10']:.3f}, Spearman={r['spearman']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------
# Point d'entrée
# ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cases", nargs="+", default=[CASE_DIR], help="Fichiers de cas ou répertoires")
    common.add_argument("--out", default=RESULTS_DIR, help="Répertoire de sortie")
    common.add_argument("--jobs", type=int, default=CLI_JOBS, help="Cas traités en parallèle")
    common.add_argument("--seed", type=int, default=CLI_SEED, help="Graine (points de vérification)")
    common.add_argument("--trace", action="store_true", help="Trace CSV des itérations NLP")
    common.add_argument("--nlp-tol", type=float, default=None, help="Tolérance KKT du NLP")
    common.add_argument("--nlp-max-iter", type=int, default=None, help="Itérations max du NLP")
    common.add_argument("--verbose", action="store_true", help="Tables d'itérations des solveurs")

    parser = argparse.ArgumentParser(prog="relaxopf", description="Relaxations convexes de l'AC-OPF")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="Relaxations + métriques contre l'optimum local")
    p.add_argument("--formulations", default=None, help="Liste parmi dc,qc,sdp")
    p.add_argument("--reconstruct-angles", action="store_true", help="Angles SDP par arbre couvrant")
    p.add_argument("--dump", action="store_true", help="Écrit les programmes coniques (.cone)")

    p = sub.add_parser("sweep", parents=[common], help="Balayage des pénalités SDP")
    p.add_argument("--penalties", default=None, help="Liste parmi reactive,trace,branch_loss")
    p.add_argument("--eps-grid", default=None, help="Poids ε en %% de l'objectif SDP, séparés par des virgules")
    p.add_argument("--refine", action="store_true", help="Sous-grille autour du ε de plus faible violation")

    p = sub.add_parser("warmstart", parents=[common], help="Démarrages à chaud du NLP")
    p.add_argument("--warm-start", default=None, help="Liste parmi flat,dc,qc,sdp")

    p = sub.add_parser("derivcheck", parents=[common], help="Dérivées NLP contre différences finies")
    p.add_argument("--points", type=int, default=10, help="Nombre de points intérieurs aléatoires")

    p = sub.add_parser("report", help="Tableaux de corpus et corrélations")
    p.add_argument("result_dir", nargs="?", default=RESULTS_DIR, help="Répertoire de résultats")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args.result_dir)

    try:
        config = config_from_args(args)
        config.validate()
    except ConfigError as exc:
        print(f"❌ {exc}")
        return EXIT_USAGE

    started = datetime.now().isoformat(timespec="seconds")
    outcomes = run_workflow(config)

    if config.workflow == "solve":
        rows = [r for o in outcomes for r in o["rows"]]
        if rows:
            append_rows(rows, os.path.join(config.out_dir, CORPUS_FILE), SOLVE_COLUMNS)

    failed = [o for o in outcomes if o["status"] != "ok"]
    code = EXIT_FAILED if failed else EXIT_OK
    write_json({
        "started": started,
        "workflow": config.workflow,
        "config": config.to_dict(),
        "cases": [{k: o[k] for k in ("path", "status", "error", "seconds")} for o in outcomes],
        "exit_code": code,
    }, os.path.join(config.out_dir, "run_log.json"))

    if failed:
        print(f"❌ {len(failed)}/{len(outcomes)} cas en échec")
    else:
        print(f"✅ {len(outcomes)} cas traités → {config.out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
