"""Deterministic on-disk layout of a run: timeseries.csv, summary.json, plan.json."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import RECORD_FIELDS
from .experiments import RunArtifact
from .model import constants


def _clean(x):
    """JSON-ready copy: dataclasses to dicts, numpy scalars to Python, non-finite to None."""
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _clean(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _dumps(obj) -> str:
    # json renders floats with repr, i.e. shortest round-trip decimal
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(records, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_cell(getattr(r, k)) for k in RECORD_FIELDS])


def read_csv(path) -> list[dict[str, float | None]]:
    """Parse a timeseries.csv back into dicts (empty cells become None)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in rows]


def param_hash(plan_dict: dict) -> str:
    body = {k: v for k, v in plan_dict.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(_clean(body), sort_keys=True).encode()).hexdigest()[:16]


def write_outputs(artifact: RunArtifact, directory) -> Path:
    """Write the three run files into ``directory`` (created if needed).

    With several truncations, ``timeseries.csv`` holds the finest one and
    ``timeseries_N{n}.csv`` every one.  Wall time is left out so identical
    artifacts give byte-identical files.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        plan = artifact.plan
        plan_dict = plan.as_dict()
        recs = artifact.records
        finest = recs[max(recs)] if recs else []
        write_csv(finest, out / "timeseries.csv")
        if len(recs) > 1:
            for n in sorted(recs):
                write_csv(recs[n], out / f"timeseries_N{n}.csv")
        summary = {
            "report": artifact.report,
            "constants": constants(plan.params, plan.resolved_gamma(), strict=False),
            "ok": artifact.ok,
            "failures": artifact.failures,
            "provenance": {
                "version": __version__,
                "seed": plan.seed,
                "param_hash": param_hash(plan_dict),
            },
        }
        (out / "summary.json").write_text(_dumps(summary))
        (out / "plan.json").write_text(_dumps(plan_dict))
    except OSError as exc:
        raise OSError(f"cannot write run outputs to {out}: {exc}") from exc
    return out
