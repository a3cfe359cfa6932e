"""Command-line entry point.

Exit status: 0 cause found, 3 no cause found, 1 configuration error,
2 backend failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
import time
from pathlib import Path

from . import bench
from .ddt import DEFAULT_SAMPLES, ddt_search
from .engine import ExecutionEngine, load_config, read_provenance, write_provenance
from .exceptions import BackendFailure, ConfigError, DebugError, InconsistentHistory, NoFailingInstance, \
    NoSucceedingInstance
from .minimize import minimize
from .model import CauseDNF, parse_dnf
from .shortcut import ShortcutInterrupted, find_disjoint_pair, shortcut
from .stacked import DEFAULT_K, stacked_shortcut

log = logging.getLogger("pipedebug")

EXIT_FOUND, EXIT_CONFIG, EXIT_BACKEND, EXIT_NONE = 0, 1, 2, 3
ALGOS = ("shortcut", "stacked", "ddt", "all")


def _add_run_flags(p: argparse.ArgumentParser, algo: str | None) -> None:
    p.add_argument("--config", required=True, help="parameter space and backend JSON")
    p.add_argument("--provenance", help="CSV of previous runs to seed the history")
    if algo is None:
        p.add_argument("--algo", choices=ALGOS, default="all")
    p.add_argument("--goal", choices=("one", "all"), default="one")
    p.add_argument("--budget", type=int, help="max new executions (overrides config)")
    p.add_argument("--workers", type=int, help="parallel executions (overrides config)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="good instances for stacked shortcut")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                   help="instances per suspect; 0 tests every instance of the filter")
    p.add_argument("--timeout", type=float, help="seconds per command run; 0 disables")
    p.add_argument("--timeout-is-fail", action="store_true", help="treat a timed-out run as a failure")
    p.add_argument("--out-dir", default=".", help="where explanation.txt, provenance.csv and report.json go")
    p.set_defaults(algo_fixed=algo)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipedebug", description="Find the parameter values that make a pipeline fail.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="debug a pipeline"), None)
    for name in ("shortcut", "stacked", "ddt"):
        _add_run_flags(sub.add_parser(name, help=f"debug with {name} only"), name)

    m = sub.add_parser("minimize", help="simplify a DNF explanation")
    m.add_argument("--config", required=True)
    m.add_argument("--input", default="-", help="DNF text file, '-' for stdin")
    m.add_argument("--out", help="output file (default stdout)")

    b = sub.add_parser("bench", help="score debuggers on synthetic pipelines")
    b.add_argument("--scenario", choices=[s.value for s in bench.Scenario], default="single")
    b.add_argument("--pipelines", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--algo", choices=bench.ALGORITHMS + ("all",), default="all")
    b.add_argument("--mode", choices=("one", "all"), default="one")
    b.add_argument("--params", type=int, nargs=2, default=(3, 6), metavar=("MIN", "MAX"))
    b.add_argument("--values", type=int, nargs=2, default=(5, 8), metavar=("MIN", "MAX"))
    b.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    b.add_argument("--k", type=int, default=DEFAULT_K)
    b.add_argument("--budget-groups", action="store_true",
                   help="run every algorithm under each algorithm's instance count")
    b.add_argument("--out-dir", default=".")
    return parser


# -- run ----------------------------------------------------------------------


def _one_cause(conj) -> CauseDNF:
    return CauseDNF((conj,)) if conj else CauseDNF()


def _run_algorithms(args, engine, space, algos, seed, samples):
    results = {}
    for algo in algos:
        if algo == "shortcut":
            try:
                cp_f, cp_g, disjoint = find_disjoint_pair(engine.records(), space)
                rep = shortcut(engine, space, cp_f, cp_g)
            except ShortcutInterrupted as exc:
                rep = exc.report
                results[algo] = {"causes": CauseDNF(), "budget_exhausted": True,
                                 "executions_used": rep.executions_used}
                continue
            except (NoFailingInstance, NoSucceedingInstance) as exc:
                results[algo] = {"causes": CauseDNF(), "error": str(exc)}
                continue
            results[algo] = {
                "causes": _one_cause(rep.asserted),
                "executions_used": rep.executions_used,
                "new_executions": rep.new_executions,
                "pair_is_disjoint": rep.pair_is_disjoint,
                "sanity_rejected": rep.sanity_rejected,
                "proposed": str(rep.proposed) if rep.proposed else "",
            }
        elif algo == "stacked":
            try:
                rep = stacked_shortcut(engine, space, k=args.k, seed=seed)
            except (NoFailingInstance, NoSucceedingInstance) as exc:
                results[algo] = {"causes": CauseDNF(), "error": str(exc)}
                continue
            backend_errors = [e for e in rep.errors if isinstance(e, BackendFailure)]
            if backend_errors:
                raise backend_errors[0]
            results[algo] = {
                "causes": _one_cause(rep.asserted),
                "executions_used": rep.executions_used,
                "new_executions": rep.new_executions,
                "k_requested": rep.k_requested,
                "k_found": rep.k_found,
                "mutually_disjoint": rep.mutually_disjoint,
                "union_rejected": rep.union_rejected,
            }
        else:
            try:
                rep = ddt_search(engine, space, goal=args.goal, samples=samples, seed=seed)
            except NoFailingInstance as exc:
                results[algo] = {"causes": CauseDNF(), "error": str(exc)}
                continue
            results[algo] = {
                "causes": rep.causes,
                "sampled": rep.sampled,
                "executions_used": rep.executions_used,
                "rebuilds": rep.rebuilds,
                "budget_exhausted": rep.budget_exhausted,
            }
    return results


def _final(results: dict, algos) -> tuple:
    """The explanation of the last algorithm that produced one."""
    for algo in reversed(algos):
        r = results.get(algo)
        if r and r["causes"]:
            return algo, r["causes"], r.get("sampled", frozenset())
    return None, CauseDNF(), frozenset()


def _status(algo: str | None, conj, sampled) -> str:
    if algo == "ddt":
        return "sampled" if conj in sampled else "definitive"
    return "asserted"


def cmd_run(args) -> int:
    started = dt.datetime.now(dt.timezone.utc)
    t0 = time.perf_counter()
    algo = args.algo_fixed or args.algo
    if args.goal == "all" and algo not in ("ddt", "all"):
        print("error: --goal all requires --algo ddt or all", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        space = cfg.space
        backend = cfg.make_backend(timeout=args.timeout, timeout_is_fail=args.timeout_is_fail or None)
        history = read_provenance(args.provenance, space) if args.provenance else []
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    budget = args.budget if args.budget is not None else cfg.budget
    workers = args.workers if args.workers is not None else cfg.workers
    seed = args.seed if args.seed is not None else cfg.seed
    samples = None if args.samples == 0 else args.samples
    algos = ["shortcut", "stacked", "ddt"] if algo == "all" else [algo]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        engine = ExecutionEngine(space, backend, budget=budget, workers=workers)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_NONE
    results: dict = {}
    error = None
    with engine:
        try:
            engine.seed_history(history)
            results = _run_algorithms(args, engine, space, algos, seed, samples)
        except InconsistentHistory as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except BackendFailure as exc:
            error = str(exc)
            status = EXIT_BACKEND
            print(f"backend failure: {exc}", file=sys.stderr)
        except DebugError as exc:
            error = str(exc)
            print(f"error: {exc}", file=sys.stderr)
    source, causes, sampled = _final(results, algos)
    if status != EXIT_BACKEND:
        status = EXIT_FOUND if causes else EXIT_NONE
    lines = [f"{conj}{' (sampled)' if conj in sampled else ''}" for conj in causes]
    (out / "explanation.txt").write_text(
        "".join(("OR " if i else "") + line + "\n" for i, line in enumerate(lines)))
    write_provenance(out / "provenance.csv", space, engine.records())
    report = {
        "algorithm": algo,
        "goal": args.goal,
        "budget": budget,
        "workers": workers,
        "seed": seed,
        "explained_by": source,
        "causes": [{"conjunction": str(c), "literals": len(c), "status": _status(source, c, sampled)}
                   for c in causes],
        "executions_used": engine.executed,
        "history_size": len(history),
        "per_algorithm": {
            name: {k: (str(v) if isinstance(v, CauseDNF) else v) for k, v in r.items() if k != "sampled"}
            for name, r in results.items()
        },
        "exit_status": status,
        "error": error,
        "metadata": {
            "started": started.isoformat(),
            "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
            "elapsed_seconds": round(time.perf_counter() - t0, 6),
        },
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(causes if causes else "no cause found")
    print(f"executions: {engine.executed}")
    return status


# -- minimize -----------------------------------------------------------------


def cmd_minimize(args) -> int:
    try:
        space = load_config(args.config).space
        text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text()
        dnf = parse_dnf(text, space)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = str(minimize(dnf, space))
    if args.out:
        Path(args.out).write_text(result + "\n")
    else:
        print(result)
    return EXIT_FOUND


# -- bench --------------------------------------------------------------------


def cmd_bench(args) -> int:
    algos = bench.ALGORITHMS if args.algo == "all" else (args.algo,)
    groups = algos if args.budget_groups else None
    samples = None if args.samples == 0 else args.samples
    rows = bench.run_benchmark(args.scenario, args.pipelines, seed=args.seed, algorithms=algos, mode=args.mode,
                               budget_groups=groups, param_count_range=tuple(args.params),
                               domain_size_range=tuple(args.values), samples=samples, k=args.k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bench.write_scores(out / "scores.csv", rows, args.mode)
    bench.write_long(out / "scores_long.csv", rows, args.mode, args.scenario)
    for (group, algo), card in bench.aggregate(rows, args.mode).items():
        print(f"{group:>9} {algo:>9}  P={float(card.precision):.3f} R={float(card.recall):.3f} "
              f"F={float(card.f_measure):.3f}  executions={card.executions_used}")
    return EXIT_FOUND


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.command == "minimize":
        return cmd_minimize(args)
    if args.command == "bench":
        return cmd_bench(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
