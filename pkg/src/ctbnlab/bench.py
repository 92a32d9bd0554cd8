"""Seeded benchmark suites over the simulated models.

Three CTBN families (chain, five-node random digraph, inverted binary
tree), a partially observed chain variant, and a layered Gaussian network.
Each replicate draws its own model and data from a per-replicate stream
split off the master seed, so suites are reproducible and individual
replicates can be rerun in isolation.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._util import split_seed, thread_count
from .bn import LayerPartition, learn_bn, shd, simulate_gbn
from .ctbn import CtbnLearnConfig, learn_ctbn_full
from .model import CtbnModel, EncodingScheme, collect_sufficient_stats
from .partial import (
    PartialLearnConfig,
    SgdSchedule,
    UniformizationConfig,
    learn_ctbn_partial,
)
from .simulate import gillespie_sample, observe

__all__ = [
    "BenchConfig",
    "MetricsRow",
    "SuiteResult",
    "make_model_m1",
    "make_model_m2",
    "make_model_m3",
    "compute_metrics",
    "run_suite",
    "write_results",
]

logger = logging.getLogger("ctbnlab.bench")

SUITES = ("m1", "m2", "m2plus", "m3", "chain-partial", "gbn-synth")

_FAST = 9.0
_SLOW = 1.0
_NEUTRAL = 5.0


@dataclass(frozen=True)
class BenchConfig:
    """One suite run; the partial-suite solver knobs are deliberately small
    so a 20-replicate batch stays tractable."""

    suite: str
    d: int = 20
    horizon: float = 50.0
    m: int = 1000
    replicates: int = 20
    seed: int = 0
    points: int = 400
    noise: float = 0.0
    out: str | None = None
    path_len: int = 100
    burn_in: int = 200
    iterations: int = 250
    n_samples: int = 2
    thinning: int = 1
    partial_path_len: int = 25
    m_eval: int = 50

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}; choose from {SUITES}")
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.horizon <= 0 or self.m < 2:
            raise ValueError("horizon must be positive and m at least 2")
        if self.points < 2:
            raise ValueError("points must be at least 2")
        if not 0 <= self.noise < 0.5:
            raise ValueError("noise must lie in [0, 0.5)")


@dataclass(frozen=True)
class MetricsRow:
    replicate: int
    power: float
    fdr: float
    md: int
    tm: int
    power_full: float | None = None
    shd: int | None = None
    shd_empty: int | None = None
    wall_time: float = 0.0


@dataclass
class SuiteResult:
    config: BenchConfig
    rows: list
    failures: list
    aggregate: dict
    edge_sets: list = field(default_factory=list)  # (true, learned) per row
    timings: list = field(default_factory=list)


def _flip_cim(preferred):
    """2x2 generator leaving the preferred state slowly (1) and the other
    fast (9)."""
    rates = np.empty((2, 2))
    for s in (0, 1):
        rate = _SLOW if s == preferred else _FAST
        rates[s, s] = -rate
        rates[s, 1 - s] = rate
    return rates


def _neutral_cim():
    return np.array([[-_NEUTRAL, _NEUTRAL], [_NEUTRAL, -_NEUTRAL]])


def make_model_m1(d, rng):
    """Binary chain 0 -> 1 -> ... -> d-1.

    The root flips at rate 5; node k prefers to copy parent XOR a_k, with a_k
    drawn per node, leaving the preferred state at rate 1 and the other at 9.
    """
    if d < 2:
        raise ValueError("the chain model needs at least two nodes")
    cards = (2,) * d
    parents = [()] + [(k - 1,) for k in range(1, d)]
    cims = [np.array([_neutral_cim()])]
    for _k in range(1, d):
        a = int(rng.integers(2))
        cims.append(np.stack([_flip_cim(c ^ a) for c in (0, 1)]))
    return CtbnModel(cards, parents, cims)


def make_model_m2(d, rng, interactions=False):
    """Five-node random digraph: each of nodes 0..4 gets two parents among
    the other four; remaining nodes are isolated with leave rate 5.

    A node prefers a state drawn per node; the preference flips when every
    parent sits at 1.  ``interactions`` is accepted for signature parity and
    only matters to the learner's encoding, never to the model itself.
    """
    del interactions
    if d < 5:
        raise ValueError("the random-digraph model needs at least five nodes")
    cards = (2,) * d
    parents = []
    cims = []
    for w in range(5):
        others = np.array([v for v in range(5) if v != w])
        pa = np.sort(rng.choice(others, size=2, replace=False))
        preferred = int(rng.integers(2))
        parents.append(tuple(int(v) for v in pa))
        blocks = []
        for key in range(4):
            c1, c2 = key % 2, key // 2
            all_one = c1 == 1 and c2 == 1
            rates = np.empty((2, 2))
            for s in (0, 1):
                if s == preferred:
                    rate = _FAST if all_one else _SLOW
                else:
                    rate = _SLOW if all_one else _FAST
                rates[s, s] = -rate
                rates[s, 1 - s] = rate
            blocks.append(rates)
        cims.append(np.stack(blocks))
    for _w in range(5, d):
        parents.append(())
        cims.append(np.array([_neutral_cim()]))
    return CtbnModel(cards, parents, cims)


def make_model_m3(d, rng):
    """Inverted complete binary tree: arrows run child -> parent, so node i
    has parents {2i+1, 2i+2} when those exist; leaves are parentless.

    Single parents and agreeing parent pairs drive the 9/1 preference rule
    (with per-node a); disagreeing parents leave both states at rate 5.
    """
    if d < 3:
        raise ValueError("the tree model needs at least three nodes")
    cards = (2,) * d
    parents = []
    cims = []
    for i in range(d):
        pa = tuple(v for v in (2 * i + 1, 2 * i + 2) if v < d)
        parents.append(pa)
        if not pa:
            cims.append(np.array([_neutral_cim()]))
            continue
        a = int(rng.integers(2))
        blocks = []
        if len(pa) == 1:
            for c in (0, 1):
                blocks.append(_flip_cim(c ^ a))
        else:
            for key in range(4):
                c1, c2 = key % 2, key // 2
                if c1 != c2:
                    blocks.append(_neutral_cim())
                else:
                    blocks.append(_flip_cim(c1 ^ a))
        cims.append(np.stack(blocks))
    return CtbnModel(cards, parents, cims)


def compute_metrics(true_edges, learned_edges):
    """Power / FDR / selected count / exact-recovery flag."""
    true_set = frozenset((int(u), int(v)) for u, v in true_edges)
    learned = frozenset((int(u), int(v)) for u, v in learned_edges)
    hits = len(learned & true_set)
    power = hits / len(true_set) if true_set else 1.0
    fdr = len(learned - true_set) / max(len(learned), 1)
    return {
        "power": float(power),
        "fdr": float(fdr),
        "md": len(learned),
        "tm": int(learned == true_set),
    }


_CTBN_BUILDERS = {
    "m1": make_model_m1,
    "m2": make_model_m2,
    "m2plus": make_model_m2,
    "m3": make_model_m3,
}


def _run_ctbn_replicate(cfg, rng):
    model = _CTBN_BUILDERS[cfg.suite](cfg.d, rng)
    traj = gillespie_sample(model, cfg.horizon, rng)
    stats = collect_sufficient_stats(traj, model.cardinalities)
    scheme = EncodingScheme(
        interactions="pairwise" if cfg.suite == "m2plus" else "none")
    result = learn_ctbn_full(stats, scheme,
                             CtbnLearnConfig(path_len=cfg.path_len))
    true_edges = model.true_edges()
    row = compute_metrics(true_edges, result.edges)
    return row, (frozenset(true_edges), frozenset(result.edges))


def _run_partial_replicate(cfg, rng):
    model = make_model_m1(cfg.d, rng)
    traj = gillespie_sample(model, cfg.horizon, rng)
    stats = collect_sufficient_stats(traj, model.cardinalities)
    full = learn_ctbn_full(stats, config=CtbnLearnConfig(path_len=cfg.path_len))
    true_edges = frozenset(model.true_edges())
    full_power = compute_metrics(true_edges, full.edges)["power"]
    times = np.linspace(0.0, cfg.horizon, cfg.points)
    obs = observe(traj, times, model.cardinalities, cfg.noise,
                  rng if cfg.noise > 0 else None)
    pcfg = PartialLearnConfig(
        cardinalities=model.cardinalities,
        uniformization=UniformizationConfig(
            burn_in=cfg.burn_in, n_samples=cfg.n_samples, thinning=cfg.thinning),
        schedule=SgdSchedule(iterations=cfg.iterations),
        path_len=cfg.partial_path_len,
        m_eval=cfg.m_eval,
    )
    result = learn_ctbn_partial(obs, pcfg, rng)
    row = compute_metrics(true_edges, result.edges)
    row["power_full"] = float(full_power)
    return row, (true_edges, frozenset(result.edges))


def _draw_gbn(d, rng):
    blocks = [tuple(int(v) for v in b) for b in np.array_split(np.arange(d), 3)]
    weights = np.zeros((d, d))
    earlier: list[int] = []
    for i, block in enumerate(blocks):
        if i > 0:
            for v in block:
                k = int(rng.integers(1, 4))
                pars = rng.choice(np.array(earlier), size=min(k, len(earlier)),
                                  replace=False)
                for u in pars:
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                    weights[int(u), v] = sign * rng.uniform(0.5, 1.0)
        earlier.extend(block)
    return weights, LayerPartition(tuple(blocks))


def _run_gbn_replicate(cfg, rng):
    weights, layers = _draw_gbn(cfg.d, rng)
    dataset = simulate_gbn(weights, 1.0, cfg.m, rng)
    result = learn_bn(dataset, layers)
    true_edges = frozenset((int(u), int(v)) for u, v in zip(*np.nonzero(weights)))
    row = compute_metrics(true_edges, result.edges)
    row["shd"] = shd(result.edges, true_edges)
    row["shd_empty"] = shd(frozenset(), true_edges)
    return row, (true_edges, frozenset(result.edges))


_REPLICATE_RUNNERS = {
    "m1": _run_ctbn_replicate,
    "m2": _run_ctbn_replicate,
    "m2plus": _run_ctbn_replicate,
    "m3": _run_ctbn_replicate,
    "chain-partial": _run_partial_replicate,
    "gbn-synth": _run_gbn_replicate,
}


def _one_replicate(cfg, index):
    rng = np.random.default_rng(split_seed(cfg.seed, index))
    started = time.perf_counter()
    try:
        row, edge_sets = _REPLICATE_RUNNERS[cfg.suite](cfg, rng)
    except Exception as exc:
        elapsed = time.perf_counter() - started
        logger.warning("suite %s replicate %d failed after %.1fs: %s",
                       cfg.suite, index, elapsed, exc)
        return index, None, None, f"{type(exc).__name__}: {exc}", elapsed
    elapsed = time.perf_counter() - started
    logger.info("suite %s replicate %d/%d power=%.3f fdr=%.3f (%.1fs)",
                cfg.suite, index + 1, cfg.replicates,
                row["power"], row["fdr"], elapsed)
    return index, row, edge_sets, None, elapsed


_CSV_COLUMNS = {
    "m1": ("power", "fdr", "md", "tm"),
    "m2": ("power", "fdr", "md", "tm"),
    "m2plus": ("power", "fdr", "md", "tm"),
    "m3": ("power", "fdr", "md", "tm"),
    "chain-partial": ("power", "fdr", "md", "tm", "power_full"),
    "gbn-synth": ("power", "fdr", "shd", "shd_empty"),
}


def run_suite(cfg):
    """Run every replicate, aggregate the survivors, optionally write files.

    Failures are recorded and skipped rather than aborting the batch.
    """
    jobs = min(thread_count(), cfg.replicates)
    if jobs > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=jobs)(
            delayed(_one_replicate)(cfg, i) for i in range(cfg.replicates))
    else:
        outcomes = [_one_replicate(cfg, i) for i in range(cfg.replicates)]
    outcomes.sort(key=lambda item: item[0])

    rows = []
    failures = []
    edge_sets = []
    timings = []
    for index, row, edges, error, elapsed in outcomes:
        timings.append(elapsed)
        if error is not None:
            failures.append({"replicate": index, "error": error})
            continue
        rows.append(MetricsRow(replicate=index, wall_time=elapsed, **row))
        edge_sets.append(edges)

    columns = _CSV_COLUMNS[cfg.suite]
    means = {}
    for col in columns:
        means[col] = float(np.mean([getattr(row, col) for row in rows])) if rows else float("nan")
    config_echo = asdict(cfg)
    config_echo.pop("out")
    aggregate = {
        "suite": cfg.suite,
        "config": config_echo,
        "rows": len(rows),
        "failures": failures,
        "means": means,
    }
    result = SuiteResult(cfg, rows, failures, aggregate, edge_sets, timings)
    if cfg.out is not None:
        write_results(result, cfg.out)
    return result


def _format_cell(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_results(result, out_dir):
    """Emit replicates.csv and aggregate.json (no wall times; both files are
    byte-stable for a fixed config and master seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = _CSV_COLUMNS[result.config.suite]
    lines = [",".join(("replicate",) + columns)]
    for row in result.rows:
        cells = [str(row.replicate)] + [_format_cell(getattr(row, c)) for c in columns]
        lines.append(",".join(cells))
    (out / "replicates.csv").write_text("\n".join(lines) + "\n")
    (out / "aggregate.json").write_text(
        json.dumps(result.aggregate, sort_keys=True, indent=2) + "\n")
