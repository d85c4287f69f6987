"""Result files: per-tick CSV, summary CSV, run manifest and config loading.

Everything written here is a pure function of the results so repeated
runs produce byte-identical files (no timestamps, fixed float format).
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .. import __version__
from .experiments import ResultRow
from .scenario import TrialResult

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SERIES_HEADER = (
    ["t"]
    + [f"xi_{part}_{ax}" for part in ("phi", "v", "r", "i") for ax in "xyz"]
    + ["thrust"]
    + [f"omega_cmd_{ax}" for ax in "xyz"]
    + [f"moment_{ax}" for ax in "xyz"]
)
SUMMARY_HEADER = [
    "experiment", "variant", "heading", "integrator", "scale", "trial",
    "rmse_phi", "rmse_v", "rmse_r", "final_position_error", "steady_position_error",
    "seed", "kappa_1", "kappa_2", "kappa_3", "kappa_4",
]
SUPPORTED_FORMATS = ("csv",)


class OutputError(OSError):
    pass


def _fmt(x: Any) -> str:
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_series_csv(path: str | Path, result: TrialResult) -> Path:
    if result.series is None:
        raise ValueError("result has no per-tick series; run with record_series=True")
    s = result.series
    cols = [s["t"][:, None], s["xi"], s["xi_i"], s["thrust"], s["omega_cmd"], s["moment"]]
    table = np.hstack([np.asarray(c, dtype=float).reshape(len(s["t"]), -1) for c in cols])
    return write_csv(Path(path), SERIES_HEADER, table.tolist())


def summary_record(row: ResultRow) -> list[Any]:
    rec = row.summary()
    kappa = list(rec.pop("kappa"))
    return [rec.get(k) for k in SUMMARY_HEADER[:12]] + kappa


def write_summary_csv(path: str | Path, rows: Sequence[ResultRow]) -> Path:
    return write_csv(Path(path), SUMMARY_HEADER, (summary_record(r) for r in rows))


def write_aggregate_csv(path: str | Path, records: Sequence[dict]) -> Path:
    header = ["variant", "component", "mean", "p_lower", "p_upper", "within_band"]
    return write_csv(Path(path), header, ([r[h] for h in header] for r in records))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: str | Path, experiment: str, config: dict, seed: int, files: Sequence[Path]) -> Path:
    """Config echo plus seed, package version and a digest of every output file."""
    out_dir = Path(out_dir)
    manifest = {
        "experiment": experiment,
        "package": "se23lqr",
        "version": __version__,
        "seed": seed,
        "config": config,
        "files": {p.name: _sha256(p) for p in sorted(files, key=lambda p: p.name)},
    }
    path = out_dir / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def emit_outputs(
    out_dir: str | Path,
    experiment: str,
    rows: Sequence[ResultRow],
    config: dict,
    seed: int,
    fmt: str = "csv",
    extra: dict[str, list[dict]] | None = None,
) -> list[Path]:
    """Write the summary, any per-tick series, optional extra tables and the manifest."""
    if fmt not in SUPPORTED_FORMATS:
        raise ValueError(f"unsupported format {fmt!r}; expected one of {SUPPORTED_FORMATS}")
    out_dir = Path(out_dir)
    files = [write_summary_csv(out_dir / f"{experiment}_summary.csv", rows)]
    for i, row in enumerate(rows):
        if row.result.series is not None:
            files.append(write_series_csv(out_dir / f"{experiment}_{i:03d}_series.csv", row.result))
    for name, records in (extra or {}).items():
        files.append(write_aggregate_csv(out_dir / f"{experiment}_{name}.csv", records))
    files.append(write_manifest(out_dir, experiment, config, seed, files))
    return files


def load_config(path: str | Path) -> dict:
    """Read a TOML file with a ``[scenario]`` table plus optional ``[sweep]``, ``[uncertainty]`` and ``[monte_carlo]``."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"invalid config {path}: {exc}") from exc
