"""File formats: model JSON, trajectory JSON-lines, observation and result
files, plus content digests for run manifests.

Two formats total: JSON for structured objects, CSV only for flat replicate
tables (owned by the bench module).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import CtbnModel, ModelError, Trajectory
from .simulate import ObservationSet

__all__ = [
    "sha256_file",
    "save_model",
    "load_model",
    "save_trajectory",
    "load_trajectory",
    "save_observations",
    "load_observations",
    "learn_result_to_dict",
    "bn_result_to_dict",
    "save_json",
]


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def save_model(model, path):
    doc = {
        "d": model.node_count,
        "cardinalities": list(model.cardinalities),
        "parents": [list(p) for p in model.parents],
        "cims": [np.asarray(c).tolist() for c in model.cims],
    }
    save_json(doc, path)


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file {path} is not valid JSON: {exc}") from exc
    for key in ("cardinalities", "parents", "cims"):
        if key not in doc:
            raise ModelError(f"model file {path} lacks the '{key}' field")
    cards = tuple(int(c) for c in doc["cardinalities"])
    if "d" in doc and int(doc["d"]) != len(cards):
        raise ModelError("model field 'd' disagrees with the cardinalities")
    parents = [tuple(int(v) for v in p) for p in doc["parents"]]
    cims = [np.asarray(c, dtype=float) for c in doc["cims"]]
    return CtbnModel(cards, parents, cims)


def save_trajectory(traj, path):
    """JSON-lines: header {"T", "initial"}, then one {"t", "node", "to"} per
    jump."""
    lines = [json.dumps({"T": traj.horizon,
                         "initial": [int(s) for s in traj.initial_state]})]
    states = traj.states
    for i, t in enumerate(traj.times):
        diff = np.flatnonzero(states[i + 1] != states[i])
        node = int(diff[0])
        lines.append(json.dumps({"t": float(t), "node": node,
                                 "to": int(states[i + 1][node])}))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path):
    raw = Path(path).read_text().strip().splitlines()
    if not raw:
        raise ModelError(f"trajectory file {path} is empty")
    try:
        head = json.loads(raw[0])
        jumps = [json.loads(line) for line in raw[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise ModelError(f"trajectory file {path} is not valid JSON-lines: {exc}") from exc
    if "T" not in head or "initial" not in head:
        raise ModelError(f"trajectory header needs 'T' and 'initial' ({path})")
    state = np.asarray([int(s) for s in head["initial"]], dtype=np.int64)
    times = []
    states = [state.copy()]
    for rec in jumps:
        if not {"t", "node", "to"} <= rec.keys():
            raise ModelError(f"jump record missing fields in {path}: {rec}")
        state = state.copy()
        state[int(rec["node"])] = int(rec["to"])
        times.append(float(rec["t"]))
        states.append(state)
    return Trajectory(float(head["T"]), np.asarray(times), np.vstack(states))


def save_observations(obs, path):
    doc = {
        "T": obs.horizon,
        "times": [float(t) for t in obs.times],
        "states": [[int(s) for s in row] for row in obs.states],
        "epsilon": obs.noise,
    }
    save_json(doc, path)


def load_observations(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"observation file {path} is not valid JSON: {exc}") from exc
    for key in ("T", "times", "states"):
        if key not in doc:
            raise ModelError(f"observation file {path} lacks the '{key}' field")
    return ObservationSet(float(doc["T"]), np.asarray(doc["times"], dtype=float),
                          np.asarray(doc["states"], dtype=np.int64),
                          float(doc.get("epsilon", 0.0)))


def _jsonable(value):
    """Recursively coerce numpy scalars/arrays and tuple keys for JSON."""
    if isinstance(value, dict):
        return {_key(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_jsonable(v) for v in value]
        return sorted(items) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _key(key):
    if isinstance(key, tuple):
        return ",".join(str(int(k)) for k in key)
    return str(key)


def learn_result_to_dict(result):
    scheme = result.scheme
    return {
        "cardinalities": list(result.cardinalities),
        "scheme": {
            "interactions": scheme.interactions,
            "reference_levels": None if scheme.reference_levels is None
            else list(scheme.reference_levels),
        },
        "betas": {_key(k): v.tolist() for k, v in result.betas.items()},
        "lambda": _jsonable(dict(result.lambda_selected)),
        "delta": _jsonable(dict(result.delta_selected)),
        "edges": sorted([int(u), int(v)] for u, v in result.edges),
        "diagnostics": _jsonable(dict(result.diagnostics)),
    }


def bn_result_to_dict(result):
    return {
        "layers": [list(b) for b in result.layers.blocks],
        "families": _jsonable(dict(result.families)),
        "edges": sorted([int(u), int(v)] for u, v in result.edges),
        "intercepts": _jsonable(dict(result.intercepts)),
        "terms": {
            str(v): {(str(u) if lvl is None else f"{u}:{lvl}"): _jsonable(coef)
                     for (u, lvl), coef in table.items()}
            for v, table in result.terms.items()
        },
        "lambda": _jsonable(dict(result.lambda_selected)),
        "delta": _jsonable(dict(result.delta_selected)),
        "diagnostics": _jsonable(dict(result.diagnostics)),
    }
