"""Command-line experiment runner: ``run``, ``certify``, ``graph-info`` and ``gen``."""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, graph as graphmod, netsim
from .graph import GraphError, MatrixError
from .objective import Experiment, PlacementError, generate_experiment, load_instance, save_instance
from .solver import AlgorithmConfig, parse_schedule, run_algorithm, write_trajectory_csv

log = logging.getLogger("extrapush")

SUMMARY_HEADER = ("label", "algorithm", "engine", "alpha", "schedule", "rounds", "stop_reason",
                  "final_err", "relative_err", "rate", "r2", "messages", "wall_time_s")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: dict
    graph: dict
    algorithms: list
    out_dir: Path = Path("results")
    engine: str = "matrix"
    record_every: int = 1
    jobs: int = 1
    source: str = ""


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("extrapush.presets").iterdir()
                  if p.name.endswith(".ini"))


def _read_ini(config: str | None, preset: str | None) -> tuple[configparser.ConfigParser, str]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if preset:
        if preset not in preset_names():
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(preset_names())}")
        cp.read_string(resources.files("extrapush.presets").joinpath(f"{preset}.ini").read_text())
        return cp, f"preset:{preset}"
    if config:
        if not Path(config).is_file():
            raise ConfigError(f"config file {config} does not exist")
        try:
            cp.read(config)
        except configparser.Error as exc:
            raise ConfigError(f"{config}: {exc}") from None
        return cp, config
    raise ConfigError("no experiment given; pass --config PATH or --preset NAME")


def load_config(config: str | None = None, preset: str | None = None, *, seed=None, max_iters=None,
                tol=None, engine=None, out=None) -> ExperimentConfig:
    """Parse an experiment file (``key = value`` sections) and apply command-line overrides."""
    cp, source = _read_ini(config, preset)
    try:
        problem = dict(cp["problem"]) if cp.has_section("problem") else {}
        graph = dict(cp["graph"]) if cp.has_section("graph") else {"preset": "paper-fig1"}
        run = cp["run"] if cp.has_section("run") else {}
        run_max = int(run.get("max_iters", 1000)) if max_iters is None else max_iters
        run_tol = float(run.get("tol", 0.0)) if tol is None else tol
        record_every = int(run.get("record_every", 1))
        eng = run.get("engine", "matrix") if engine is None else engine
        jobs = int(run.get("jobs", 1))
        algs = []
        for sec in cp.sections():
            if not sec.startswith("algorithm"):
                continue
            body = cp[sec]
            label = sec[len("algorithm"):].strip() or None
            method = body.get("method", label)
            sched = parse_schedule(body["schedule"]) if "schedule" in body else None
            alpha = float(body["alpha"]) if "alpha" in body else None
            algs.append(AlgorithmConfig(method, alpha=alpha, schedule=sched,
                                        max_iters=int(body.get("max_iters", run_max)),
                                        tol=float(body.get("tol", run_tol)),
                                        record_every=record_every, label=label))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not algs:
        raise ConfigError(f"{source}: at least one [algorithm ...] section is required")
    labels = [a.name for a in algs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{source}: duplicate algorithm labels")
    if eng not in ("matrix", "agents"):
        raise ConfigError(f"engine must be 'matrix' or 'agents', got {eng!r}")
    if seed is not None:
        problem["seed"] = str(seed)
    if "file" in problem and not Path(problem["file"]).is_file():
        raise ConfigError(f"instance file {problem['file']} does not exist")
    for key in ("edges", "matrix"):
        if key in graph and not Path(graph[key]).is_file():
            raise ConfigError(f"{key} file {graph[key]} does not exist")
    return ExperimentConfig(problem, graph, algs, Path(out) if out else Path("results"),
                            eng, record_every, jobs, source)


def build_graph(spec: dict):
    """``(DirectedGraph, MixingMatrix)`` from a ``[graph]`` section."""
    try:
        if "matrix" in spec:
            m = graphmod.load_mixing(spec["matrix"])
            return m.graph(), m
        if "edges" in spec:
            g = graphmod.load_graph(spec["edges"])
        else:
            g = graphmod.graph_preset(spec.get("preset", "paper-fig1"))
    except (GraphError, MatrixError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    return g, graphmod.build_out_degree_mixing(g)


def build_problem(spec: dict, n: int) -> Experiment:
    kind = spec.get("kind", "ls")
    try:
        if kind in ("file", "from-file"):
            exp = load_instance(spec["file"])
        else:
            exp = generate_experiment(kind, n=int(spec.get("n", n)), p=int(spec.get("p", 256)),
                                      m=int(spec.get("m", 100)), seed=int(spec.get("seed", 0)),
                                      xi=float(spec.get("xi", 2.0)))
    except (KeyError, ValueError, PlacementError, OSError) as exc:
        raise ConfigError(f"problem: {exc}") from None
    if exp.objective.n != n:
        raise ConfigError(f"problem has {exp.objective.n} agents but the graph has {n} nodes")
    return exp


def _rate(errors, t) -> tuple[float, float]:
    """Per-round rate fitted on the decaying part of a (possibly thinned) record."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0 or not np.all(np.isfinite(e)):
        return math.nan, math.nan
    win = analysis.decaying_window(e)
    w = e[win]
    if w.size < 10 or np.any(w <= 0):
        return math.nan, math.nan
    return analysis.fit_linear_rate(w, np.asarray(t, dtype=np.float64)[win])


def _run_one(acfg, engine, g, m, phi, exp):
    start = time.perf_counter()
    if engine == "agents" and acfg.algorithm == "extrapush":
        traj = netsim.simulate_extrapush(g, m, exp.objective, acfg, exp.x0, x_star=exp.x_star, phi=phi)
        used = "agents"
    else:
        traj = run_algorithm(acfg, m, exp.objective, exp.x0, phi=phi, x_star=exp.x_star)
        used = "matrix"
    return traj, used, time.perf_counter() - start


def cmd_run(cfg: ExperimentConfig, quiet: bool = False) -> int:
    g, m = build_graph(cfg.graph)
    if not graphmod.is_strongly_connected(g):
        raise ConfigError("graph is not strongly connected")
    exp = build_problem(cfg.problem, g.n)
    phi = graphmod.stationary_distribution(m)
    for acfg in cfg.algorithms:
        if acfg.algorithm == "extra" and not (np.allclose(m.a, m.a.T, atol=1e-9) and m.is_doubly_stochastic()):
            raise ConfigError(f"{acfg.name}: Extra needs a symmetric doubly stochastic mixing matrix")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    def task(acfg):
        traj, used, wall = _run_one(acfg, cfg.engine, g, m, phi, exp)
        write_trajectory_csv(traj, cfg.out_dir / f"{acfg.name}.csv")
        if not quiet:
            log.info("%s: %s after %d rounds, error %.3e", acfg.name, traj.stop_reason,
                     traj.rounds, traj.err_opt[-1])
        return acfg, traj, used, wall

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(task, cfg.algorithms))
    else:
        results = [task(a) for a in cfg.algorithms]

    rows = []
    for acfg, traj, used, wall in results:
        err = traj.column("err_opt")
        rate, r2 = _rate(err, traj.t)
        rows.append((acfg.name, acfg.algorithm, used,
                     "" if acfg.alpha is None else f"{acfg.alpha:.17g}",
                     "" if acfg.schedule is None else str(acfg.schedule),
                     traj.rounds, traj.stop_reason, f"{err[-1]:.17g}",
                     f"{err[-1] / err[0]:.17g}" if err[0] > 0 else "nan",
                     f"{rate:.17g}", f"{r2:.17g}", netsim.message_count(g, traj.rounds), f"{wall:.3f}"))
    _write_csv_atomic(cfg.out_dir / "summary.csv", SUMMARY_HEADER, rows)
    if not quiet:
        print(f"wrote {len(rows)} trajectories and summary.csv to {cfg.out_dir}")
    return 0


def _write_csv_atomic(path: Path, header, rows) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    os.replace(tmp, path)


def certify_report(g, m, exp: Experiment, a=None, eta=None, sigma=None) -> str:
    lines = [f"graph: n = {g.n}, |E| = {g.num_edges}", f"problem: {exp.kind}"]
    if g.n == 1:
        lines.append("verdict: not applicable: M = 0")
        return "\n".join(lines) + "\n"
    obj = exp.objective
    s_f = obj.strong_convexity
    lines.append(f"L_f = {obj.lipschitz:.10g}")
    if s_f is None:
        lines.append("S_f = unknown (loss is strongly convex only near the solution)")
        lines.append("verdict: not applicable: S_f unknown/zero")
        return "\n".join(lines) + "\n"
    lines.append(f"S_f = {s_f:.10g}")
    phi = graphmod.stationary_distribution(m)
    cert = analysis.certificate(m, phi, obj.lipschitz, s_f, a=a, eta=eta, sigma=sigma)
    return "\n".join(lines) + "\n" + analysis.format_certificate(cert)


def cmd_certify(g, m, exp, quiet=False, **params) -> int:
    print(certify_report(g, m, exp, **params), end="")
    return 0


def graph_info_report(g, m, t_max: int = 200) -> str:
    lines = [f"n = {g.n}", f"|E| = {g.num_edges}"]
    strong = graphmod.is_strongly_connected(g)
    lines.append(f"strongly connected: {'yes' if strong else 'no'}")
    lines.append("mixing matrix A:")
    lines += ["  " + " ".join(f"{v:.6g}" for v in row) for row in m.a]
    if not strong:
        lines.append("not strongly connected: stationary distribution omitted")
        return "\n".join(lines) + "\n"
    phi = graphmod.stationary_distribution(m)
    lines.append("phi = " + " ".join(f"{v:.12g}" for v in phi.phi))
    xi = graphmod.xi_diagnostic(m, t_max)
    lines.append(f"xi over t <= {t_max} = {xi:.12g}  (bound n^-n = {float(g.n) ** -g.n:.6g})")
    prof = graphmod.power_convergence_profile(m, t_max, phi.phi)
    dev = np.array([d for _, d in prof])
    keep = np.flatnonzero(dev > 1e-13)
    if g.n > 1 and keep.size >= 3:
        rate, r2 = analysis.fit_linear_rate(dev[keep[1:]], keep[1:])
        lines.append(f"||A^t - phi 1^T|| geometric rate = {rate:.6g} (r^2 = {r2:.4f})")
    else:
        lines.append("||A^t - phi 1^T|| geometric rate = n/a")
    ok, margin = analysis.check_assumption4(m, phi)
    lines.append(f"assumption-4 margin lambda_min(D^-1 Abar + Abar^T D^-1) = {margin:.10g} "
                 f"({'positive' if ok else 'NOT positive'})")
    return "\n".join(lines) + "\n"


def _graph_from_arg(text: str | None):
    if text is None:
        return build_graph({"preset": "paper-fig1"})
    kind, _, rest = text.partition(":")
    if kind == "edges":
        return build_graph({"edges": rest})
    if kind == "matrix":
        return build_graph({"matrix": rest})
    return build_graph({"preset": text})


def _problem_from_args(args, n):
    if args.problem.startswith("file:"):
        return build_problem({"kind": "file", "file": args.problem[5:]}, n)
    return build_problem({"kind": args.problem, "n": n, "p": args.p, "m": args.m,
                          "xi": args.xi, "seed": args.seed or 0}, n)


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment file")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--max-iters", type=int, metavar="N")
    common.add_argument("--tol", type=float, metavar="X")
    common.add_argument("--engine", choices=("matrix", "agents"))
    common.add_argument("--quiet", action="store_true")

    ap = argparse.ArgumentParser(prog="extrapush", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run the configured algorithms")
    p.add_argument("--preset", help=f"built-in experiment ({', '.join(preset_names())})")
    p.add_argument("--jobs", type=int, help="parallel runs")

    for name, helptext in (("certify", "print the step-size certificate"),
                           ("gen", "write a problem instance")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "certify":
            p.add_argument("--graph", help="paper-fig1, complete:N, ring:N, edges:PATH or matrix:PATH")
            p.add_argument("--a", type=float)
            p.add_argument("--eta", type=float)
            p.add_argument("--sigma", type=float)
        p.add_argument("--problem", default="ls", help="ls, huber, consensus or file:PATH")
        p.add_argument("--n", type=int, default=5)
        p.add_argument("--p", type=int, default=256)
        p.add_argument("--m", type=int, default=100)
        p.add_argument("--xi", type=float, default=2.0)

    p = sub.add_parser("graph-info", parents=[common], help="graph diagnostics: connectivity, stationary distribution, mixing rate")
    p.add_argument("--graph", help="paper-fig1, complete:N, ring:N, edges:PATH or matrix:PATH")
    p.add_argument("--t-max", type=int, default=200)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.preset, seed=args.seed, max_iters=args.max_iters,
                              tol=args.tol, engine=args.engine, out=args.out)
            if args.jobs:
                cfg.jobs = args.jobs
            return cmd_run(cfg, quiet=args.quiet)
        if args.command == "graph-info":
            if args.config:
                g, m = build_graph(load_config(args.config).graph)
            else:
                g, m = _graph_from_arg(args.graph)
            print(graph_info_report(g, m, args.t_max), end="")
            return 0
        if args.command == "certify":
            if args.config:
                cfg = load_config(args.config, seed=args.seed)
                g, m = build_graph(cfg.graph)
                exp = build_problem(cfg.problem, g.n)
            else:
                g, m = _graph_from_arg(args.graph)
                exp = _problem_from_args(args, g.n)
            return cmd_certify(g, m, exp, a=args.a, eta=args.eta, sigma=args.sigma)
        if args.command == "gen":
            exp = _problem_from_args(args, args.n)
            out = Path(args.out or ".")
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"instance-{exp.kind}-n{args.n}-seed{exp.seed}.npz"
            save_instance(exp, path)
            if not args.quiet:
                print(f"wrote {path}")
            return 0
    except ConfigError as exc:
        print(f"extrapush: error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
