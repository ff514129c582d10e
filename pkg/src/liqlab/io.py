"""File formats: result rows, event streams, run manifests.

All files are UTF-8 with LF line endings.  Floats are written with
``repr`` (shortest round-trip), so identical results serialise to identical
bytes on any platform and at any worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .analysis.flux import ASK, BID, CANCEL, LO, MARKET

__all__ = [
    "SANTAFE_PARAM_COLUMNS",
    "SPREAD_PARAM_COLUMNS",
    "RESULT_COMMON_COLUMNS",
    "result_columns",
    "format_cell",
    "write_results_csv",
    "read_results_csv",
    "write_event_stream",
    "read_event_stream",
    "canonical_json",
    "config_hash",
    "write_manifest",
    "read_manifest",
    "SchemaError",
]

SANTAFE_PARAM_COLUMNS = ["lam", "mu", "nu0", "alpha_k", "beta", "n_levels", "horizon", "burn_in"]
SPREAD_PARAM_COLUMNS = [
    "lambda0_plus",
    "lambda0_minus",
    "alpha",
    "beta",
    "eps",
    "horizon",
    "spread_cap",
]
RESULT_COMMON_COLUMNS = [
    "seed",
    "stream_id",
    "tau_c",
    "max_spread",
    "n_events",
    "realized_var",
    "aborted",
]

_KIND_NAMES = {"LO": LO, "C": CANCEL, "MO": MARKET}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}
_SIDE_NAMES = {"B": BID, "A": ASK}
_SIDE_CODES = {v: k for k, v in _SIDE_NAMES.items()}


class SchemaError(ValueError):
    """A file does not conform to its declared schema."""


def result_columns(model: str) -> list[str]:
    params = SANTAFE_PARAM_COLUMNS if model == "santafe" else SPREAD_PARAM_COLUMNS
    return ["model"] + params + RESULT_COMMON_COLUMNS


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_results_csv(path: str | Path, rows: Iterable[dict], columns: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(row.get(c)) for c in columns) + "\n")


def read_results_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a result header")
        return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------------------
# event streams
# ---------------------------------------------------------------------------

EVENT_STREAM_COLUMNS = ["time", "type", "side", "price_ticks", "mid_change_ticks"]


def write_event_stream(
    path: str | Path,
    times: np.ndarray,
    kinds: np.ndarray,
    sides: np.ndarray,
    mid_changes: np.ndarray,
    price_ticks: Optional[np.ndarray] = None,
    queue_after: Optional[np.ndarray] = None,
) -> None:
    """Write a typed, sided event stream; prices default to the running mid."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if price_ticks is None:
        price_ticks = np.cumsum(mid_changes).astype(np.int64)
    columns = list(EVENT_STREAM_COLUMNS) + (["queue_after"] if queue_after is not None else [])
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(len(times)):
            cells = [
                repr(float(times[i])),
                _KIND_CODES[int(kinds[i])],
                _SIDE_CODES[int(sides[i])],
                str(int(price_ticks[i])),
                repr(float(mid_changes[i])),
            ]
            if queue_after is not None:
                cells.append(str(int(queue_after[i])))
            fh.write(",".join(cells) + "\n")


def read_event_stream(path: str | Path) -> dict[str, np.ndarray]:
    """Load and validate an event stream; errors carry 1-based line numbers."""
    path = Path(path)
    times: list[float] = []
    kinds: list[int] = []
    sides: list[int] = []
    mids: list[float] = []
    prices: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}:1: empty file, expected header {EVENT_STREAM_COLUMNS}")
        missing = [c for c in EVENT_STREAM_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}:1: header is missing required columns {missing}")
        col = {name: header.index(name) for name in EVENT_STREAM_COLUMNS}
        prev_t = -math.inf
        for ln, cells in enumerate(reader, start=2):
            if not cells:
                continue
            try:
                t = float(cells[col["time"]])
            except (ValueError, IndexError):
                raise SchemaError(f"{path}:{ln}: bad time field")
            if t < prev_t:
                raise SchemaError(f"{path}:{ln}: time decreases ({t} after {prev_t})")
            prev_t = t
            kind = cells[col["type"]].strip()
            if kind not in _KIND_NAMES:
                raise SchemaError(f"{path}:{ln}: unknown event type {kind!r} (expected LO/C/MO)")
            side = cells[col["side"]].strip()
            if side not in _SIDE_NAMES:
                raise SchemaError(f"{path}:{ln}: unknown side {side!r} (expected B/A)")
            try:
                price = int(cells[col["price_ticks"]])
                dmid = float(cells[col["mid_change_ticks"]])
            except ValueError:
                raise SchemaError(f"{path}:{ln}: bad price_ticks / mid_change_ticks")
            times.append(t)
            kinds.append(_KIND_NAMES[kind])
            sides.append(_SIDE_NAMES[side])
            mids.append(dmid)
            prices.append(price)
    if len(times) < 2:
        raise SchemaError(f"{path}: stream has {len(times)} events, need at least 2")
    return {
        "times": np.asarray(times),
        "kinds": np.asarray(kinds, dtype=np.int64),
        "sides": np.asarray(sides, dtype=np.int64),
        "mid_changes": np.asarray(mids),
        "price_ticks": np.asarray(prices, dtype=np.int64),
    }


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

MANIFEST_SCHEMA_VERSION = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_manifest(path: str | Path, manifest: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: manifest schema_version {manifest.get('schema_version')} "
            f"!= {MANIFEST_SCHEMA_VERSION}"
        )
    return manifest
