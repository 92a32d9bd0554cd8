"""Command line interface.

Subcommands: simulate, observe, learn-ctbn, learn-ctbn-partial, learn-bn,
bench.  Every run leaves a manifest (tool version, resolved config, master
seed, input digests, stage timings) in the output directory, or next to the
output file as ``<stem>.manifest.json``.  Result files never embed
timestamps, so a rerun with the same config byte-matches.

Exit codes: 0 success, 1 usage error (message on stderr, nothing written),
2 runtime failure (manifest still written, with the error recorded).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._util import split_seed
from .bench import SUITES, BenchConfig, run_suite
from .bn import Dataset, learn_bn
from .ctbn import CtbnLearnConfig, learn_ctbn_full
from .io import (_jsonable, bn_result_to_dict, learn_result_to_dict,
                 load_model, load_observations, load_trajectory, save_json,
                 save_observations, save_trajectory, sha256_file)
from .model import EncodingScheme, ModelError, collect_sufficient_stats
from .partial import (PartialLearnConfig, SgdSchedule, UniformizationConfig,
                      learn_ctbn_partial)
from .simulate import ObservationSet, gillespie_sample, observe

logger = logging.getLogger("ctbnlab")


class UsageError(Exception):
    """Bad flags or config file; nothing has been written yet."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_OUT_IS_DIR = {"simulate": True, "observe": False, "learn-ctbn": False,
               "learn-ctbn-partial": False, "learn-bn": False, "bench": True}

_REQUIRED = {
    "simulate": ("model", "out"),
    "observe": ("traj", "out"),
    "learn-ctbn": ("traj", "out"),
    "learn-ctbn-partial": ("obs", "out"),
    "learn-bn": ("data", "layers", "out"),
    "bench": ("suite", "out"),
}


def _build_parser():
    parser = _Parser(prog="ctbnlab",
                     description="Structure learning for continuous-time and "
                                 "layered Bayesian networks.")
    parser.add_argument("--version", action="version",
                        version=f"ctbnlab {__version__}")
    sub = parser.add_subparsers(dest="cmd", metavar="COMMAND")
    known: dict[str, set[str]] = {}

    def command(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        known[name] = set()

        def flag(opt, **kw):
            p.add_argument(opt, default=argparse.SUPPRESS, **kw)
            known[name].add(opt.lstrip("-").replace("-", "_"))

        p.add_argument("--config", default=argparse.SUPPRESS, metavar="JSON",
                       help="JSON file with defaults for this command; "
                            "explicit flags win")
        return flag

    f = command("simulate", "Draw trajectories from a model file.")
    f("--model", metavar="PATH", help="model JSON")
    f("--horizon", type=float, metavar="F", help="trajectory length (default 50)")
    f("--seed", type=int, metavar="U64",
      help="master seed; replicate i gets a decorrelated stream (default 0)")
    f("--replicates", type=int, metavar="N", help="trajectory count (default 1)")
    f("--out", metavar="DIR", help="output directory (traj-0000.jsonl, ...)")

    f = command("observe", "Read a trajectory at a time grid, with optional "
                           "flip noise.")
    f("--traj", metavar="PATH", help="trajectory JSON-lines file")
    f("--points", type=int, metavar="N",
      help="equally spaced observation times on [0, T]")
    f("--times", metavar="CSV", help="explicit comma-separated times")
    f("--noise", type=float, metavar="F",
      help="per-node flip probability (default 0)")
    f("--seed", type=int, metavar="U64", help="noise seed (default 0)")
    f("--out", metavar="PATH", help="observation JSON file")

    f = command("learn-ctbn", "Structure learning from fully observed "
                              "trajectories.")
    f("--traj", metavar="PATH", help="trajectory JSON-lines file")
    f("--scheme", choices=("binary", "levels"),
      help="feature coding; 'binary' insists on two-level nodes")
    f("--interactions", choices=("none", "pairwise"),
      help="append pairwise indicator products (default none)")
    f("--path-len", type=int, metavar="N", help="lambda path length (default 100)")
    f("--tol", type=float, metavar="F", help="solver tolerance (default 1e-10)")
    f("--out", metavar="PATH", help="result JSON file")

    f = command("learn-ctbn-partial", "Structure learning from snapshots via "
                                      "trajectory sampling and stochastic "
                                      "proximal gradient.")
    f("--obs", metavar="PATH", help="observation JSON file")
    f("--noise", type=float, metavar="F",
      help="override the flip probability stored in the file")
    f("--eta-factor", type=float, metavar="F",
      help="uniformization rate multiplier (default 2)")
    f("--burn-in", type=int, metavar="N", help="chain burn-in steps (default 200)")
    f("--samples", type=int, metavar="M",
      help="trajectories averaged per gradient (default 5)")
    f("--thinning", type=int, metavar="N",
      help="chain steps between kept samples (default 2)")
    f("--gamma-c", type=float, metavar="F", help="step size scale (default 0.5)")
    f("--gamma-alpha", type=float, metavar="F",
      help="step size decay exponent (default 0.6)")
    f("--box", type=float, metavar="F", help="iterate box bound (default 10)")
    f("--iters", type=int, metavar="N",
      help="stochastic gradient iterations per lambda (default 3000)")
    f("--path-len", type=int, metavar="N", help="lambda path length (default 100)")
    f("--m-eval", type=int, metavar="N",
      help="trajectories in the criterion sample (default 50)")
    f("--seed", type=int, metavar="U64", help="chain seed (default 0)")
    f("--out", metavar="PATH", help="result JSON file")

    f = command("learn-bn", "Parent recovery for a layered Bayesian network "
                            "from tabular data.")
    f("--data", metavar="CSV", help="data file, header row = node names")
    f("--schema", metavar="JSON",
      help="category counts for discrete columns, e.g. {\"smoker\": 2}")
    f("--layers", metavar="JSON", help="layer blocks (names or column indices)")
    f("--family", choices=("auto", "gaussian", "logistic", "multinomial"),
      help="node family (default auto: by declared levels)")
    f("--out", metavar="PATH", help="result JSON file")

    f = command("bench", "Run a simulated benchmark suite.")
    f("--suite", choices=SUITES, help="suite name")
    f("--d", type=int, metavar="N", help="node count (default 20)")
    f("--horizon", type=float, metavar="F", help="trajectory length (default 50)")
    f("--reps", type=int, metavar="N", help="replicate count (default 20)")
    f("--seed", type=int, metavar="U64", help="master seed (default 0)")
    f("--points", type=int, metavar="N",
      help="observation grid size, partial suite only (default 400)")
    f("--noise", type=float, metavar="F",
      help="observation flip probability, partial suite only (default 0)")
    f("--m", type=int, metavar="N", help="sample size, gbn suite only (default 1000)")
    f("--path-len", type=int, metavar="N", help="lambda path length (default 100)")
    f("--iters", type=int, metavar="N",
      help="partial suite: gradient iterations per lambda")
    f("--burn-in", type=int, metavar="N", help="partial suite: chain burn-in")
    f("--samples", type=int, metavar="M",
      help="partial suite: trajectories per gradient")
    f("--thinning", type=int, metavar="N", help="partial suite: chain thinning")
    f("--partial-path-len", type=int, metavar="N",
      help="partial suite: lambda path length")
    f("--m-eval", type=int, metavar="N",
      help="partial suite: criterion sample size")
    f("--out", metavar="DIR", help="output directory")

    return parser, known


def _load_config_file(path, cmd, known):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    for key in doc:
        if key not in known:
            raise UsageError(f"config.{key}: unknown key for '{cmd}'")
    return doc


def _parse(argv):
    parser, known = _build_parser()
    ns = parser.parse_args(argv)
    cmd = getattr(ns, "cmd", None)
    if cmd is None:
        raise UsageError("a subcommand is required (see --help)")
    flags = {k: v for k, v in vars(ns).items() if k != "cmd"}
    config_path = flags.pop("config", None)
    opts: dict = {}
    if config_path is not None:
        opts.update(_load_config_file(config_path, cmd, known[cmd]))
    opts.update(flags)
    for name in _REQUIRED[cmd]:
        if opts.get(name) is None:
            raise UsageError(f"{cmd}: --{name.replace('_', '-')} is required")
    return cmd, opts


def _digest(manifest, *paths):
    for p in paths:
        if p is not None:
            manifest["inputs"][str(p)] = sha256_file(p)


def _traj_cards(states):
    return tuple(max(2, int(states[:, w].max()) + 1)
                 for w in range(states.shape[1]))


def _cmd_simulate(opts, manifest):
    horizon = float(opts.get("horizon", 50.0))
    seed = int(opts.get("seed", 0))
    reps = int(opts.get("replicates", 1))
    if reps < 1:
        raise UsageError("simulate: --replicates must be at least 1")
    manifest["config"] = {"model": str(opts["model"]), "horizon": horizon,
                          "seed": seed, "replicates": reps,
                          "out": str(opts["out"])}
    manifest["master_seed"] = seed
    _digest(manifest, opts["model"])
    model = load_model(opts["model"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    for i in range(reps):
        rng = np.random.default_rng(split_seed(seed, i))
        traj = gillespie_sample(model, horizon, rng)
        save_trajectory(traj, out / f"traj-{i:04d}.jsonl")
        logger.info("simulate: wrote traj-%04d.jsonl (%d jumps)", i,
                    len(traj.times))
    manifest["timings"]["simulate"] = time.perf_counter() - t0


def _cmd_observe(opts, manifest):
    points = opts.get("points")
    times_csv = opts.get("times")
    if (points is None) == (times_csv is None):
        raise UsageError("observe: give exactly one of --points or --times")
    if points is not None and int(points) < 1:
        raise UsageError("observe: --points must be at least 1")
    noise = float(opts.get("noise", 0.0))
    seed = int(opts.get("seed", 0))
    manifest["config"] = {"traj": str(opts["traj"]), "points": points,
                          "times": times_csv, "noise": noise, "seed": seed,
                          "out": str(opts["out"])}
    manifest["master_seed"] = seed
    if times_csv is not None:
        try:
            times = np.asarray([float(x) for x in str(times_csv).split(",")])
        except ValueError:
            raise UsageError("observe: --times must be comma-separated "
                             "floats") from None
    _digest(manifest, opts["traj"])
    traj = load_trajectory(opts["traj"])
    if points is not None:
        times = np.linspace(0.0, traj.horizon, int(points))
    t0 = time.perf_counter()
    cards = _traj_cards(traj.states) if noise > 0 else None
    rng = np.random.default_rng(seed) if noise > 0 else None
    obs = observe(traj, times, cards, noise, rng)
    save_observations(obs, opts["out"])
    manifest["timings"]["observe"] = time.perf_counter() - t0


def _cmd_learn_ctbn(opts, manifest):
    scheme_name = opts.get("scheme", "levels")
    interactions = opts.get("interactions", "none")
    if scheme_name not in ("binary", "levels"):
        raise UsageError(f"learn-ctbn: unknown scheme {scheme_name!r}")
    if interactions not in ("none", "pairwise"):
        raise UsageError(f"learn-ctbn: unknown interactions {interactions!r}")
    try:
        config = CtbnLearnConfig(path_len=int(opts.get("path_len", 100)),
                                 tol=float(opts.get("tol", 1e-10)))
    except ValueError as exc:
        raise UsageError(f"learn-ctbn: {exc}") from None
    manifest["config"] = {"traj": str(opts["traj"]), "scheme": scheme_name,
                          "interactions": interactions,
                          "path_len": config.path_len, "tol": config.tol,
                          "out": str(opts["out"])}
    _digest(manifest, opts["traj"])
    traj = load_trajectory(opts["traj"])
    cards = _traj_cards(traj.states)
    if scheme_name == "binary" and any(c != 2 for c in cards):
        raise ModelError(f"binary scheme needs two-level nodes, got {cards}")
    t0 = time.perf_counter()
    stats = collect_sufficient_stats(traj, cards)
    manifest["timings"]["stats"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    result = learn_ctbn_full(stats, EncodingScheme(None, interactions), config)
    manifest["timings"]["learn"] = time.perf_counter() - t0
    save_json(learn_result_to_dict(result), opts["out"])


def _cmd_learn_ctbn_partial(opts, manifest):
    seed = int(opts.get("seed", 0))
    try:
        uniformization = UniformizationConfig(
            eta_factor=float(opts.get("eta_factor", 2.0)),
            burn_in=int(opts.get("burn_in", 200)),
            n_samples=int(opts.get("samples", 5)),
            thinning=int(opts.get("thinning", 2)))
        schedule = SgdSchedule(
            step_scale=float(opts.get("gamma_c", 0.5)),
            step_decay=float(opts.get("gamma_alpha", 0.6)),
            iterations=int(opts.get("iters", 3000)),
            box=float(opts.get("box", 10.0)))
        config = PartialLearnConfig(
            uniformization=uniformization, schedule=schedule,
            path_len=int(opts.get("path_len", 100)),
            m_eval=int(opts.get("m_eval", 50)))
    except ValueError as exc:
        raise UsageError(f"learn-ctbn-partial: {exc}") from None
    manifest["config"] = {
        "obs": str(opts["obs"]), "noise": opts.get("noise"),
        "eta_factor": uniformization.eta_factor,
        "burn_in": uniformization.burn_in,
        "samples": uniformization.n_samples,
        "thinning": uniformization.thinning,
        "gamma_c": schedule.step_scale, "gamma_alpha": schedule.step_decay,
        "box": schedule.box, "iters": schedule.iterations,
        "path_len": config.path_len, "m_eval": config.m_eval,
        "seed": seed, "out": str(opts["out"]),
    }
    manifest["master_seed"] = seed
    _digest(manifest, opts["obs"])
    observations = load_observations(opts["obs"])
    if opts.get("noise") is not None:
        observations = ObservationSet(observations.horizon, observations.times,
                                      observations.states,
                                      float(opts["noise"]))
    t0 = time.perf_counter()
    result = learn_ctbn_partial(observations, config,
                                rng=np.random.default_rng(seed))
    manifest["timings"]["learn"] = time.perf_counter() - t0
    save_json(learn_result_to_dict(result), opts["out"])


def _read_table(path):
    with open(path, newline="") as handle:
        rows = [r for r in csv.reader(handle) if r]
    if len(rows) < 2:
        raise ModelError(f"data file {path} needs a header row and data rows")
    names = [c.strip() for c in rows[0]]
    try:
        values = np.asarray([[float(x) for x in row] for row in rows[1:]],
                            dtype=float)
    except ValueError as exc:
        raise ModelError(f"non-numeric cell in {path}: {exc}") from None
    if values.shape[1] != len(names):
        raise ModelError(f"ragged rows in {path}")
    return names, values


def _layer_blocks(doc, names):
    if not isinstance(doc, list) or not all(isinstance(b, list) for b in doc):
        raise ModelError("layers file must hold a list of lists")
    index = {n: i for i, n in enumerate(names)}
    blocks = []
    for block in doc:
        resolved = []
        for entry in block:
            if isinstance(entry, str):
                if entry not in index:
                    raise ModelError(f"layers: unknown column {entry!r}")
                resolved.append(index[entry])
            else:
                resolved.append(int(entry))
        blocks.append(tuple(resolved))
    return blocks


def _cmd_learn_bn(opts, manifest):
    family = opts.get("family", "auto")
    if family not in ("auto", "gaussian", "logistic", "multinomial"):
        raise UsageError(f"learn-bn: unknown family {family!r}")
    manifest["config"] = {"data": str(opts["data"]),
                          "schema": None if opts.get("schema") is None
                          else str(opts["schema"]),
                          "layers": str(opts["layers"]), "family": family,
                          "out": str(opts["out"])}
    _digest(manifest, opts["data"], opts.get("schema"), opts["layers"])
    names, values = _read_table(opts["data"])
    levels = [None] * len(names)
    if opts.get("schema") is not None:
        schema = json.loads(Path(opts["schema"]).read_text())
        if not isinstance(schema, dict):
            raise ModelError("schema file must hold a JSON object")
        for name, count in schema.items():
            if name not in names:
                raise ModelError(f"schema: unknown column {name!r}")
            levels[names.index(name)] = int(count)
    dataset = Dataset(values, tuple(levels))
    blocks = _layer_blocks(json.loads(Path(opts["layers"]).read_text()), names)
    t0 = time.perf_counter()
    result = learn_bn(dataset, blocks, family)
    manifest["timings"]["learn"] = time.perf_counter() - t0
    doc = bn_result_to_dict(result)
    doc["nodes"] = names
    save_json(doc, opts["out"])


_BENCH_ALIAS = {"reps": "replicates", "iters": "iterations",
                "samples": "n_samples"}


def _cmd_bench(opts, manifest):
    kwargs = {_BENCH_ALIAS.get(k, k): v for k, v in opts.items() if k != "out"}
    try:
        config = BenchConfig(out=str(opts["out"]), **kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bench: {exc}") from None
    echo = dataclasses.asdict(config)
    echo["out"] = str(opts["out"])
    manifest["config"] = echo
    manifest["master_seed"] = config.seed
    t0 = time.perf_counter()
    run_suite(config)
    manifest["timings"]["bench"] = time.perf_counter() - t0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "observe": _cmd_observe,
    "learn-ctbn": _cmd_learn_ctbn,
    "learn-ctbn-partial": _cmd_learn_ctbn_partial,
    "learn-bn": _cmd_learn_bn,
    "bench": _cmd_bench,
}


def _write_manifest(out, is_dir, manifest):
    out = Path(out)
    if is_dir:
        out.mkdir(parents=True, exist_ok=True)
        target = out / "manifest.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        target = out.with_name(out.with_suffix("").name + ".manifest.json")
    target.write_text(json.dumps(_jsonable(manifest), sort_keys=True, indent=2)
                      + "\n")


def main(argv=None):
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(message)s")
    try:
        cmd, opts = _parse(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = {"tool": "ctbnlab", "version": __version__, "subcommand": cmd,
                "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "config": dict(opts), "master_seed": None, "inputs": {},
                "timings": {}, "error": None}
    try:
        _HANDLERS[cmd](opts, manifest)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - recorded, then reported
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        _write_manifest(opts["out"], _OUT_IS_DIR[cmd], manifest)
        print(f"error: {manifest['error']}", file=sys.stderr)
        return 2
    _write_manifest(opts["out"], _OUT_IS_DIR[cmd], manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
