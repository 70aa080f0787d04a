"""JSON case files: one instance (config, tasks, gains) plus an assignment.

Floats are written with ``repr`` precision by the json module, so a round
trip reproduces every array bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .channel import ChannelMatrix
from .errors import ConfigError
from .model import Assignment, SystemConfig, TaskSpec
from .power import ClusterProblem

CASE_SCHEMA = "noma-mec/case/v1"
CLUSTER_SCHEMA = "noma-mec/cluster/v1"


def _flags_to_json(flags: dict) -> dict:
    def conv(v):
        if isinstance(v, dict):
            return {str(k): conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple, set)):
            return [conv(x) for x in (sorted(v) if isinstance(v, set) else v)]
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (np.floating,)):
            return float(v)
        return v
    return conv(flags)


def case_to_dict(config: SystemConfig, tasks, channels: ChannelMatrix, assignment: Assignment) -> dict:
    return {
        "schema": CASE_SCHEMA,
        "config": asdict(config),
        "tasks": [asdict(t) for t in tasks],
        "gains": channels.gains.tolist(),
        "assignment": {
            "cluster_order": [None if s is None else [int(s[0]), int(s[1])] for s in assignment.cluster_order],
            "freq_map": [None if i is None else int(i) for i in assignment.freq_map],
            "comp_alloc": np.asarray(assignment.comp_alloc).tolist(),
            "powers": np.asarray(assignment.powers, dtype=float).tolist(),
            "flags": _flags_to_json(assignment.flags),
        },
    }


def case_from_dict(doc: dict):
    """Returns (config, tasks, channels, assignment)."""
    if doc.get("schema") != CASE_SCHEMA:
        raise ConfigError(f"not a case file (schema {doc.get('schema')!r}, expected {CASE_SCHEMA!r})")
    try:
        config = SystemConfig(**doc["config"])
        tasks = [TaskSpec(**t) for t in doc["tasks"]]
        channels = ChannelMatrix.from_gains(doc["gains"])
        a = doc["assignment"]
        assignment = Assignment(
            cluster_order=[None if s is None else (int(s[0]), int(s[1])) for s in a["cluster_order"]],
            freq_map=list(a["freq_map"]),
            comp_alloc=np.array(a["comp_alloc"], dtype=int).reshape(config.n_clusters, config.max_users_per_rb),
            powers=np.array(a["powers"], dtype=float).reshape(config.num_users, config.num_freq_rbs),
            flags=dict(a.get("flags", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed case file: {exc!r}") from exc
    return config, tasks, channels, assignment


def write_case(path, config, tasks, channels, assignment):
    Path(path).write_text(json.dumps(case_to_dict(config, tasks, channels, assignment)) + "\n", encoding="utf-8")


def read_case(path):
    return case_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cluster_to_dict(cluster: ClusterProblem) -> dict:
    return {
        "schema": CLUSTER_SCHEMA,
        "users": list(cluster.users),
        "rbs": list(cluster.rbs),
        "gains": cluster.gains.tolist(),
        "min_rates": cluster.min_rates.tolist(),
        "budgets": cluster.budgets.tolist(),
        "noise": cluster.noise,
        "bandwidth": cluster.bandwidth,
    }


def cluster_from_dict(doc: dict) -> ClusterProblem:
    """Cluster description; ``users``/``rbs`` default to 0..K-1 / 0..M-1."""
    try:
        gains = np.array(doc["gains"], dtype=float)
        if gains.ndim == 1:
            gains = gains[:, None]
        K, M = gains.shape
        return ClusterProblem(
            users=tuple(doc.get("users", range(K))),
            rbs=tuple(doc.get("rbs", range(M))),
            gains=gains,
            min_rates=np.array(doc["min_rates"], dtype=float).reshape(K),
            budgets=np.array(doc.get("budgets", [1.0] * K), dtype=float).reshape(K),
            noise=float(doc["noise"]),
            bandwidth=float(doc["bandwidth"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed cluster description: {exc!r}") from exc
