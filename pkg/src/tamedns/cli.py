"""Command line entry point: ``tamedns <command> [--config FILE] [--seed S] [--out DIR] [--threads T]``.

Exit codes: 0 ok, 2 invalid input, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import REFERENCE_CONFIG, ConfigError, build_problem, load_config, resolve_config
from .io import FormatError, atomic_write, canonical_json, read_control, write_manifest, write_trajectory
from .io import energy_csv, events_csv, events_jsonl
from .noise import DomainError, MarkSpace, cost
from .seeding import describe, replica_seed
from .solver import BlowupError, IterationError, solve_controlled, solve_sde, solve_skeleton

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

SIMULATE_STREAM = 20
CONTROLLED_STREAM = 21

log = logging.getLogger("tamedns")


class VerificationFailed(RuntimeError):
    pass


def format_cost(x: float) -> str:
    """Twelve significant digits; an exact zero prints as 0."""
    return "0" if x == 0.0 else f"{x:#.12g}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@contextmanager
def _pool(threads: int):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            yield ex
    else:
        yield None


def _map(executor, fn, jobs):
    return list(map(fn, jobs)) if executor is None else list(executor.map(fn, jobs))


# ------------------------------------------------------------------ commands

def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.quantile(v, [0.05, 0.5, 0.95]) if v.size else [math.nan] * 3
    return {"mean": float(v.mean()), "q05": float(q[0]), "median": float(q[1]), "q95": float(q[2]),
            "min": float(v.min()), "max": float(v.max())}


def cmd_skeleton(cfg: dict, threads: int = 1) -> int:
    p = build_problem(cfg)
    traj = solve_skeleton(p.u0, p.control, p.sigma, p.marks, p.solver)
    out = Path(cfg["out"])
    files = write_trajectory(out, traj)
    summary = {"sup_h1_sq": traj.sup_h1_sq, "int_h2_sq": traj.int_h2_sq,
               "final_h1_sq": float(traj.h1_sq[-1]), "cost": cost(p.control, p.marks),
               "energy_residual_sum": float(np.sum(np.abs(traj.step_residuals)))}
    atomic_write(out / "summary.json", canonical_json(_jsonable(summary)))
    files.append("summary.json")
    write_manifest(out, "skeleton", cfg, {"master": cfg["seed"]}, files)
    return EXIT_OK


def _ensemble_job(args):
    kind, problem, eps, seed = args
    if kind == "simulate":
        traj = solve_sde(problem.u0, eps, problem.sigma, problem.marks, problem.solver, seed=seed)
    else:
        traj = solve_controlled(problem.u0, eps, problem.control, problem.sigma, problem.marks,
                                problem.solver, seed=seed)
    return energy_csv(traj), events_jsonl(traj.events), events_csv(traj.events), traj.sup_h1_sq, len(traj.events)


def _cmd_ensemble(kind: str, cfg: dict, threads: int) -> int:
    p = build_problem(cfg)
    eps = cfg["solver"]["eps"]
    if not eps > 0:
        raise ConfigError("solver: eps must be positive for noisy runs")
    replicas = cfg["experiment"]["replicas"]
    stream = SIMULATE_STREAM if kind == "simulate" else CONTROLLED_STREAM
    seeds = [replica_seed(cfg["seed"], r, stream=stream) for r in range(replicas)]
    jobs = [(kind, p, eps, s) for s in seeds]
    with _pool(threads) as ex:
        results = _map(ex, _ensemble_job, jobs)
    out = Path(cfg["out"])
    files = []
    sups, counts = [], []
    for r, (energy, ev_jsonl, ev_csv, sup, n_ev) in enumerate(results):
        for name, data in (("energy.csv", energy), ("events.jsonl", ev_jsonl), ("events.csv", ev_csv)):
            rel = f"replica_{r:04d}/{name}"
            atomic_write(out / rel, data)
            files.append(rel)
        sups.append(sup)
        counts.append(n_ev)
    summary = {"replicas": replicas, "eps": eps, "sup_h1_sq": _stats(sups), "jump_count": _stats(counts),
               "per_replica": [{"replica": r, "sup_h1_sq": s, "jumps": c} for r, (s, c) in enumerate(zip(sups, counts))]}
    if kind == "simulate":
        summary["expected_jump_count"] = p.marks.total_mass * p.solver.T / eps
    else:
        summary["cost"] = cost(p.control, p.marks)
    atomic_write(out / "summary.json", canonical_json(_jsonable(summary)))
    files.append("summary.json")
    write_manifest(out, kind, cfg, {"master": cfg["seed"], "stream": stream,
                                    "replicas": [describe(s) for s in seeds]}, files)
    return EXIT_OK


def cmd_simulate(cfg: dict, threads: int = 1) -> int:
    return _cmd_ensemble("simulate", cfg, threads)


def cmd_controlled(cfg: dict, threads: int = 1) -> int:
    return _cmd_ensemble("controlled", cfg, threads)


def _report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "passed", "metric", "value"])
    for r in rows:
        w.writerow([r["check"], int(bool(r["passed"])), r["metric"], repr(float(r["value"])) if r["value"] is not None else ""])
    return buf.getvalue()


def cmd_sweep_eps(cfg: dict, threads: int = 1) -> int:
    from .verification import eps_sweep

    p = build_problem(cfg)
    ex_cfg = cfg["experiment"]
    with _pool(threads) as ex:
        rep = eps_sweep(p.u0, p.control, p.sigma, p.marks, p.solver, ex_cfg["eps_ladder"],
                        ex_cfg["replicas"], seed=cfg["seed"], executor=ex)
    out = Path(cfg["out"])
    atomic_write(out / "eps_sweep.json", canonical_json(_jsonable(rep.to_dict())))
    rows = [{"check": f"eps={e}", "passed": rep.passed, "metric": "mean_sup_h1_sq", "value": m}
            for e, m in zip(rep.ladder, rep.errors)]
    atomic_write(out / "eps_sweep.csv", _report_csv(rows))
    write_manifest(out, "sweep-eps", cfg, {"master": cfg["seed"]}, ["eps_sweep.json", "eps_sweep.csv"])
    print(f"eps sweep: {'monotone' if rep.monotone else 'NOT monotone'} "
          + " ".join(f"{e:g}:{m:.6g}" for e, m in zip(rep.ladder, rep.errors)))
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_verify(cfg: dict, threads: int = 1, suite: str | None = None) -> int:
    from .suites import SUITES, run_suite

    selector = suite or cfg["experiment"]["suite"]
    names = list(SUITES) if selector == "all" else [selector]
    if any(n not in SUITES for n in names):
        raise ConfigError(f"unknown suite {selector!r}; choose from all, {', '.join(SUITES)}")
    out = Path(cfg["out"])
    reports, rows = {}, []
    with _pool(threads) as ex:
        for name in names:
            passed, metric, value, report = run_suite(name, cfg, executor=ex)
            reports[name] = report
            rows.append({"check": name, "passed": passed, "metric": metric, "value": value})
            print(f"{'PASS' if passed else 'FAIL'} {name}: {metric}={value if value is None else f'{value:.6g}'}")
    atomic_write(out / "verify.json", canonical_json(_jsonable(reports)))
    atomic_write(out / "verify.csv", _report_csv(rows))
    write_manifest(out, "verify", cfg, {"master": cfg["seed"]}, ["verify.json", "verify.csv"],
                   extra={"suites": names})
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_VERIFY


def cmd_cost(control_path, weights, T=None) -> int:
    g = read_control(control_path)
    marks = MarkSpace(tuple(weights) if weights else (1.0,) * g.K)
    if marks.K != g.K:
        raise ConfigError(f"control has {g.K} marks but {marks.K} weights were given")
    print(format_cost(cost(g, marks, T)))
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for ensembles")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="tamedns", description="Tamed Navier-Stokes solver with small jump noise.",
        epilog="exit codes: 0 ok, 2 invalid input, 3 solver failure, 4 verification failure")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("skeleton", parents=[common], help="deterministic controlled run")
    sub.add_parser("simulate", parents=[common], help="ensemble of small-noise runs")
    sub.add_parser("controlled", parents=[common], help="ensemble of controlled small-noise runs")
    sub.add_parser("sweep-eps", parents=[common], help="controlled runs against the skeleton across eps")
    v = sub.add_parser("verify", parents=[common], help="run verification suites")
    v.add_argument("suite", nargs="?", default=None, help="suite name or 'all'")
    c = sub.add_parser("cost", parents=[common], help="print the cost of a control file")
    c.add_argument("control", type=Path)
    c.add_argument("--weights", type=float, nargs="+", help="mark weights (default all 1)")
    c.add_argument("--T", type=float, help="horizon; must match the control's time grid")
    return parser


COMMANDS = {"skeleton": cmd_skeleton, "simulate": cmd_simulate, "controlled": cmd_controlled,
            "sweep-eps": cmd_sweep_eps}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "cost":
            return cmd_cost(args.control, args.weights, args.T)
        overrides = {"seed": args.seed, "out": str(args.out.resolve()) if args.out else None}
        if args.config is None and args.command == "verify":
            cfg = resolve_config(REFERENCE_CONFIG, overrides=overrides)
        else:
            cfg = load_config(args.config, overrides)
        t0 = time.perf_counter()
        if args.command == "verify":
            code = cmd_verify(cfg, args.threads, args.suite)
        else:
            code = COMMANDS[args.command](cfg, args.threads)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
        return code
    except (ConfigError, FormatError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BlowupError, IterationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
