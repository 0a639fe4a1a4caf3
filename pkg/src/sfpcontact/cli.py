"""Command-line front end.

    sfpcontact <generate|simulate|constellation|experiment|oracle|analyze>
               --config cfg.json [--seed S] [--out DIR] [--threads K] [--format json|csv]

Exit codes: 0 success, 2 configuration error, 3 constellation pipeline failed,
4 runtime error. Data files depend only on the configuration and the root
seed; wall-clock metadata goes to ``manifest.json`` alone.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import ConfigError, ExperimentConfig, load_config
from .constellation import (Constellation, extract_constellation_gamma_gt2,
                            extract_constellation_gamma_in_1_2)
from .contact import (build_graphical, coupled_run, exact_mean_extinction,
                      extinction_time_replicas, survival_probability_estimate)
from .graph import GraphFormatError, deserialize_graph, sample_graph, serialize_graph

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE, EXIT_RUNTIME = 0, 2, 3, 4
COMMANDS = ("generate", "simulate", "constellation", "experiment", "oracle", "analyze")


class PipelineFailure(RuntimeError):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _child_seed(root: int, *key: int) -> int:
    ss = np.random.SeedSequence(root, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=True)
        fh.write("\n")


def _dump_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


class Run:
    """Output directory plus the manifest collected while a command runs."""

    def __init__(self, cfg: ExperimentConfig, out: Path, command: str, threads: int, fmt: str):
        self.cfg, self.out, self.command = cfg, out, command
        self.threads, self.fmt = threads, fmt
        self.seeds = {}
        self.files = []
        self.started = time.time()
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        _dump_json(self.out / name, obj)
        self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        _dump_csv(self.out / name, header, rows)
        self.files.append(name)

    def table(self, stem: str, header, rows) -> None:
        if self.fmt == "csv":
            self.csv(stem + ".csv", header, rows)
        else:
            self.json(stem + ".json", [dict(zip(header, r)) for r in rows])

    def finish(self, status: str) -> None:
        end = time.time()
        manifest = {"command": self.command, "config_hash": self.cfg.hash(), "root_seed": self.cfg.seed,
                    "seeds": self.seeds, "version": _version(), "files": self.files, "status": status,
                    "wall_clock": {"started": self.started, "finished": end, "seconds": end - self.started}}
        _dump_json(self.out / "manifest.json", manifest)


def _graph(run: Run, index: int = 0, volume=None):
    cfg = run.cfg
    if cfg.graph_file and volume is None:
        return deserialize_graph(cfg.graph_file)
    params = cfg.model if volume is None else cfg.model.replace(volume=float(volume))
    seed = _child_seed(cfg.seed, 1, index)
    run.seeds[f"graph_{index}"] = seed
    return sample_graph(params, seed, method=cfg.sampler)


def cmd_generate(run: Run) -> int:
    g = _graph(run)
    g.check_invariants()
    serialize_graph(g, run.out / "graph.sfp")
    run.files.append("graph.sfp")
    run.json("derived.json", dict(run.cfg.derived(), n_vertices=g.n_vertices, n_edges=g.n_edges))
    print(f"gamma = {g.params.gamma:.6g}; {g.n_vertices} vertices, {g.n_edges} edges")
    return EXIT_OK


def _chunks(n_rep: int, k: int):
    k = max(1, min(k, n_rep))
    step = math.ceil(n_rep / k)
    return [(s, min(step, n_rep - s)) for s in range(0, n_rep, step)]


def _summary(lam, taus, cens) -> dict:
    taus = np.asarray(taus, float)
    cens = np.asarray(cens, bool)
    sem = float(taus.std(ddof=1) / math.sqrt(taus.size)) if taus.size > 1 else float("nan")
    mean = float(taus.mean())
    return {"lambda": lam, "n_rep": int(taus.size), "median": float(np.median(taus)), "mean": mean,
            "sem": sem, "ci_low": mean - 1.96 * sem, "ci_high": mean + 1.96 * sem,
            "censored_fraction": float(cens.mean()), "median_is_lower_bound": bool(cens.mean() >= 0.5)}


def _replicas(run: Run, graph, lam: float, seed: int):
    dyn = run.cfg.dynamics
    parts = _chunks(dyn.n_rep, run.threads)

    def job(part):
        start, count = part
        return extinction_time_replicas(graph, lam, dyn.t_max, count, seed, engine=dyn.engine,
                                        rep_start=start)

    with ThreadPoolExecutor(max_workers=max(1, run.threads)) as ex:
        chunks = list(ex.map(job, parts))
    return sorted((r for c in chunks for r in c), key=lambda r: r.replica)


def cmd_simulate(run: Run) -> int:
    cfg = run.cfg
    dyn = cfg.dynamics
    g = _graph(run)
    seed = _child_seed(cfg.seed, 2)
    run.seeds["replicas"] = seed
    if cfg.pipeline == "survival":
        if dyn.seed_vertex is None:
            raise ConfigError("survival pipeline needs dynamics.seed_vertex")
        est = survival_probability_estimate(g, list(dyn.lambdas), dyn.seed_vertex, dyn.t_max,
                                            dyn.n_rep, seed)
        rows = [(e.lam, e.estimate, e.ci_low, e.ci_high, e.survivors, e.n_rep) for e in est]
        run.table("survival", ["lambda", "estimate", "ci_low", "ci_high", "survivors", "n_rep"], rows)
        return EXIT_OK
    records, summaries = [], []
    if dyn.coupled:
        lams = sorted(dyn.lambdas)
        per = {lam: ([], []) for lam in lams}
        from ._rng import replica_seeds
        violations = 0
        for k, s in enumerate(replica_seeds(seed, dyn.n_rep)):
            gc = build_graphical(g, max(lams), dyn.t_max, s)
            trajs, cert = coupled_run(gc, lams, record=False)
            violations += sum(cert.violations) + cert.tau_order_violations
            for lam, tr in zip(lams, trajs):
                records.append({"replica": k, "lambda": lam, "tau": tr.tau, "censored": tr.censored,
                                "final_infected": int(tr.final_infected.shape[0])})
                per[lam][0].append(tr.tau)
                per[lam][1].append(tr.censored)
        summaries = [dict(_summary(lam, *per[lam]), coupling_violations=violations) for lam in lams]
    else:
        for lam in dyn.lambdas:
            res = _replicas(run, g, lam, seed)
            records.extend(r.to_json() for r in res)
            summaries.append(_summary(lam, [r.tau for r in res], [r.censored for r in res]))
    with open(run.out / "replicas.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    run.files.append("replicas.jsonl")
    keys = list(summaries[0].keys())
    run.table("summary", keys, [[s[k] for k in keys] for s in summaries])
    return EXIT_OK


def _extract(cfg: ExperimentConfig, g):
    if cfg.pipeline == "constellation_gt2":
        return extract_constellation_gamma_gt2(g, cfg.partition)
    if cfg.pipeline == "constellation_12":
        return extract_constellation_gamma_in_1_2(g, cfg.layered)
    raise ConfigError("constellation command needs pipeline constellation_gt2 or constellation_12")


def cmd_constellation(run: Run) -> int:
    cfg = run.cfg
    n_graphs = max(1, cfg.experiment.n_graphs)
    rows = []
    first = None
    for i in range(n_graphs):
        g = _graph(run, i)
        res = _extract(cfg, g)
        ok = isinstance(res, Constellation)
        if ok and not res.verify():
            raise RuntimeError("extracted constellation failed re-validation")
        rows.append((i, ok, "" if ok else res.stage, len(res.J) if ok else 0))
        if i == 0:
            first = res
    if isinstance(first, Constellation):
        run.json("constellation.json", first.to_json())
    else:
        run.json("failure.json", first.to_json())
    run.table("success", ["graph", "success", "stage", "n_stars"], rows)
    if not any(r[1] for r in rows):
        raise PipelineFailure(f"no constellation found; first failure at stage {first.stage}")
    return EXIT_OK


def cmd_experiment(run: Run) -> int:
    cfg = run.cfg
    exp = cfg.experiment
    if len(exp.volumes) < 4:
        raise ConfigError("experiment.volumes needs at least 4 sizes")
    lam = cfg.dynamics.lambdas[0]
    results = {}
    rows = []
    for i, n in enumerate(exp.volumes):
        if exp.synthetic_rate is not None:
            taus = np.full(cfg.dynamics.n_rep, math.exp(exp.synthetic_rate * n))
            cens = np.zeros(cfg.dynamics.n_rep, bool)
        else:
            g = _graph(run, i, volume=n)
            seed = _child_seed(cfg.seed, 3, i)
            run.seeds[f"replicas_{i}"] = seed
            res = _replicas(run, g, lam, seed)
            taus = np.array([r.tau for r in res])
            cens = np.array([r.censored for r in res])
        results[n] = (taus, cens)
        s = _summary(lam, taus, cens)
        rows.append((n, s["median"], s["mean"], s["censored_fraction"], s["median_is_lower_bound"]))
    run.csv("scaling.csv", ["n", "median_tau", "mean_tau", "censored_fraction", "lower_bound"], rows)
    fit = an.extinction_scaling_fit(results, exp.predictor, exp.A, allow_censored=exp.allow_censored)
    run.json("fit.json", fit.to_dict())
    print(f"slope = {fit.slope:.6g}, R^2 = {fit.r2:.4f}")
    return EXIT_OK


def cmd_oracle(run: Run) -> int:
    g = _graph(run)
    lams = run.cfg.dynamics.lambdas
    rows = [(lam, exact_mean_extinction((g.indptr, g.indices), lam)) for lam in lams]
    run.table("oracle", ["lambda", "mean_extinction"], rows)
    return EXIT_OK


def cmd_analyze(run: Run) -> int:
    opt = run.cfg.analysis
    g = _graph(run)
    out = {"n_vertices": g.n_vertices, "n_edges": g.n_edges,
           "mean_degree": 2 * g.n_edges / max(1, g.n_vertices),
           "largest_component_fraction": an.largest_component_fraction(g),
           "config": dataclasses.asdict(opt)}
    try:
        out["tail_fit"] = an.degree_tail_fit(g, opt.tail_fraction).to_dict()
        out["tail_sweep"] = [t.to_dict() for t in an.hill_sensitivity(g)]
    except ValueError as exc:
        out["tail_fit"] = {"error": str(exc)}
    try:
        out["degree_weight"] = an.degree_weight_scaling(g, opt.n_bins).to_dict()
    except ValueError as exc:
        out["degree_weight"] = {"error": str(exc)}
    run.json("analysis.json", out)
    seed = _child_seed(run.cfg.seed, 4)
    run.seeds["pairs"] = seed
    dist = an.chemical_distance_sample(g, opt.n_pairs, seed)
    run.csv("distances.csv", ["u", "v", "euclidean", "hops"],
            [(s.u, s.v, s.euclidean, "" if s.hops is None else s.hops) for s in dist])
    return EXIT_OK


HANDLERS = {"generate": cmd_generate, "simulate": cmd_simulate, "constellation": cmd_constellation,
            "experiment": cmd_experiment, "oracle": cmd_oracle, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfpcontact", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must lie in [0, 2^64)")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out:
            cfg = dataclasses.replace(cfg, output=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(cfg, Path(cfg.output), args.command, args.threads, args.format)
    try:
        code = HANDLERS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        run.finish("config_error")
        return EXIT_CONFIG
    except PipelineFailure as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        run.finish("pipeline_failure")
        return EXIT_PIPELINE
    except (GraphFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.finish("runtime_error")
        return EXIT_RUNTIME
    run.finish("ok")
    return code


if __name__ == "__main__":
    sys.exit(main())
