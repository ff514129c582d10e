"""Experiment orchestration: grids, replicas, deterministic parallel sweeps.

A configuration names a model and its parameters; any parameter given as a
list becomes a grid axis (cells are the cartesian product, enumerated with
the axis keys sorted).  Replica ``r`` of cell ``c`` always draws from stream
``(c << 20) + r``, so results are independent of scheduling and worker
count; rows are sorted by stream id before writing.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

from . import __version__
from .io import (
    MANIFEST_SCHEMA_VERSION,
    SANTAFE_PARAM_COLUMNS,
    SPREAD_PARAM_COLUMNS,
    config_hash,
    result_columns,
)
from .santafe import SantaFeParams, run
from .spread import SpreadModelParams, run_spread

__all__ = ["ExperimentConfig", "MODELS", "STREAMS_PER_CELL", "expand_grid", "run_experiment"]

STREAMS_PER_CELL = 1 << 20

MODELS = {
    "santafe": SANTAFE_PARAM_COLUMNS,
    "spread_linear": SPREAD_PARAM_COLUMNS,
    "spread_stabilized": SPREAD_PARAM_COLUMNS,
    "spread_quadratic": SPREAD_PARAM_COLUMNS,
    "spread_price_feedback": SPREAD_PARAM_COLUMNS,
}

_REQUIRED = {
    "santafe": ("lam", "mu", "nu0", "alpha_k", "beta", "n_levels", "horizon"),
    "spread": ("lambda0_plus", "lambda0_minus", "horizon"),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    model: str
    params: dict[str, Any]
    replicas: int = 1
    seed: int = 0
    output_dir: str = "results"
    max_events: Optional[int] = None
    n_grid: int = 1001
    workers: int = 1
    schema_version: int = 1

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"config key 'model': unknown model {self.model!r}; expected one of {sorted(MODELS)}")
        allowed = set(MODELS[self.model])
        for key, value in self.params.items():
            if key not in allowed:
                raise ConfigError(
                    f"config key 'params.{key}' is not valid for model {self.model!r}; "
                    f"allowed: {sorted(allowed)}"
                )
            values = value if isinstance(value, list) else [value]
            if not values:
                raise ConfigError(f"config key 'params.{key}': empty grid axis")
            for v in values:
                if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                    raise ConfigError(f"config key 'params.{key}': non-numeric entry {v!r}")
        required = _REQUIRED["santafe" if self.model == "santafe" else "spread"]
        for key in required:
            if key not in self.params:
                raise ConfigError(f"config key 'params.{key}' is required for model {self.model!r}")
        if self.replicas < 1:
            raise ConfigError(f"config key 'replicas' must be >= 1, got {self.replicas}")
        if not 1 <= self.replicas <= STREAMS_PER_CELL:
            raise ConfigError(f"config key 'replicas' must be <= {STREAMS_PER_CELL}")
        if self.workers < 1:
            raise ConfigError(f"config key 'workers' must be >= 1, got {self.workers}")

    def resolved(self) -> dict:
        """Plain-dict form embedded in manifests (hashable, re-runnable)."""
        return {
            "schema_version": self.schema_version,
            "model": self.model,
            "params": self.params,
            "replicas": self.replicas,
            "seed": self.seed,
            "max_events": self.max_events,
            "n_grid": self.n_grid,
        }

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown config key(s): {sorted(bad)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        cfg = cls(**merged)
        cfg.validate()
        return cfg


def expand_grid(params: dict[str, Any]) -> tuple[list[str], list[dict[str, Any]]]:
    """Cartesian product over list-valued keys, enumerated deterministically."""
    axes = sorted(k for k, v in params.items() if isinstance(v, list))
    fixed = {k: v for k, v in params.items() if not isinstance(v, list)}
    if not axes:
        return [], [dict(fixed)]
    cells = []
    for combo in itertools.product(*(params[k] for k in axes)):
        cell = dict(fixed)
        cell.update(dict(zip(axes, combo)))
        cells.append(cell)
    return axes, cells


def _budget(config: ExperimentConfig) -> Optional[int]:
    env = os.environ.get("LIQLAB_BUDGET")
    if env is not None:
        return int(env)
    return config.max_events


def _build_params(model: str, cell: dict, seed: int, stream_id: int, max_events: Optional[int], n_grid: int):
    if model == "santafe":
        kwargs = dict(cell)
        kwargs["n_levels"] = int(kwargs["n_levels"])
        extra = {"max_events": max_events} if max_events else {}
        return SantaFeParams(seed=seed, stream_id=stream_id, n_grid=n_grid, **kwargs, **extra)
    variant = model.removeprefix("spread_")
    kwargs = dict(cell)
    if "spread_cap" in kwargs:
        kwargs["spread_cap"] = int(kwargs["spread_cap"])
    extra = {"max_events": max_events} if max_events else {}
    return SpreadModelParams(variant=variant, seed=seed, stream_id=stream_id, **kwargs, **extra)


def _run_task(task: tuple) -> dict:
    model, cell, seed, stream_id, max_events, n_grid = task
    params = _build_params(model, cell, seed, stream_id, max_events, n_grid)
    row: dict[str, Any] = {"model": model, "seed": seed, "stream_id": stream_id}
    if model == "santafe":
        out = run(params, record=False)
        row.update(
            lam=params.lam,
            mu=params.mu,
            nu0=params.nu0,
            alpha_k=params.alpha_k,
            beta=params.beta,
            n_levels=params.n_levels,
            horizon=params.horizon,
            burn_in=params.burn_in_time,
            tau_c=out.crisis_time,
            max_spread=out.max_spread,
            n_events=out.n_events,
            realized_var=out.realized_variance,
            aborted=out.aborted,
        )
    else:
        path = run_spread(params)
        row.update(
            lambda0_plus=params.lambda0_plus,
            lambda0_minus=params.lambda0_minus,
            alpha=params.alpha,
            beta=params.beta,
            eps=params.eps,
            horizon=params.horizon,
            spread_cap=params.spread_cap,
            tau_c=path.escape_time,
            max_spread=path.max_spread,
            n_events=path.n_events,
            realized_var=path.realized_price_var,
            aborted=path.aborted,
        )
    return row


def run_experiment(config: ExperimentConfig) -> tuple[list[dict], dict]:
    """Execute every (cell, replica) task; return sorted rows and a manifest.

    Re-running the manifest's embedded config reproduces the rows
    byte-identically at any worker count.
    """
    config.validate()
    t0 = time.monotonic()
    max_events = _budget(config)
    _, cells = expand_grid(config.params)
    tasks = []
    cell_records = []
    for c, cell in enumerate(cells):
        streams = []
        for r in range(config.replicas):
            stream_id = (c << 20) + r
            streams.append(stream_id)
            tasks.append((config.model, cell, config.seed, stream_id, max_events, config.n_grid))
        cell_records.append({"index": c, "params": cell, "stream_ids": streams})

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (config.workers * 8))))
    else:
        rows = [_run_task(t) for t in tasks]
    rows.sort(key=lambda r: r["stream_id"])

    resolved = config.resolved()
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "toolkit_version": __version__,
        "created_unix": time.time(),
        "config": resolved,
        "config_sha256": config_hash(resolved),
        "cells": cell_records,
        "totals": {
            "rows": len(rows),
            "events": int(sum(r["n_events"] for r in rows)),
            "wall_seconds": time.monotonic() - t0,
        },
    }
    return rows, manifest
