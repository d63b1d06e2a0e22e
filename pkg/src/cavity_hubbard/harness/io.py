"""Result serialization.

Every run directory holds ``results.csv`` (one row per point),
``summary.json`` (config echo, version, k-grid, full per-point records) and
``timing.json``.  Wall-clock numbers live only in ``timing.json`` so the
first two files are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__

PARAM_COLUMNS = ("L", "N", "t", "U_s", "U_l", "G", "kappa", "delta_tilde")
ED_COLUMNS = PARAM_COLUMNS + (
    "theta_z",
    "theta_x",
    "label",
    "S_z_at_0",
    "S_z_at_pi",
    "S_x_at_0",
    "S_x_at_pi",
    "n_photon",
    "fluct_ratio",
    "gap",
    "degenerate",
    "converged",
)
MF_COLUMNS = PARAM_COLUMNS + ("alpha_re", "alpha_im", "photon_number", "order_parameter", "energy", "converged")
SCALING_COLUMNS = ("L", "axis", "U_c", "evaluations", "converged")


class OutputError(OSError):
    """Could not write a result file; the message carries the path."""


@lru_cache(maxsize=1)
def artifact_version() -> str:
    """``<package version>+g<commit>`` when run from a git checkout, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--abbrev=12", "--exclude", "*"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        return __version__
    return f"{__version__}+g{out}" if out else __version__


def format_cell(value) -> str:
    """Shortest round-trip text for floats, lowercase booleans, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings, tuples as lists."""
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def ed_row(record: dict) -> list:
    inp = record["input"]
    row = [inp.get(c) for c in PARAM_COLUMNS]
    row += [record.get(c) for c in ED_COLUMNS[len(PARAM_COLUMNS) :]]
    return row


def mf_row(record: dict) -> list:
    inp = record["input"]
    alpha = record.get("alpha") or [None, None]
    return [inp.get(c) for c in PARAM_COLUMNS] + [
        alpha[0],
        alpha[1],
        record.get("photon_number"),
        record.get("order_parameter"),
        record.get("energy"),
        record.get("converged"),
    ]


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180 line endings
    w.writerow(header)
    for r in rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OutputError(f"{path}: {err.strerror or err}") from err


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"


def write_results(results, out_dir, cfg, k_grid=None) -> dict[str, Path]:
    """Write CSV, summary and timing for a list of :class:`PointResult`."""
    out = Path(out_dir)
    records = [r.record for r in results]
    if cfg.mode == "meanfield":
        text = csv_text(MF_COLUMNS, (mf_row(r) for r in records))
    else:
        text = csv_text(ED_COLUMNS, (ed_row(r) for r in records))
    summary = {
        "version": artifact_version(),
        "config": cfg.to_dict(),
        "n_points": len(records),
        "n_failed": sum(r["status"] != "ok" for r in records),
        "k_grid": k_grid,
        "records": records,
    }
    timing = {"points": [r.seconds for r in results], "total": sum(r.seconds for r in results)}
    paths = {"csv": out / "results.csv", "summary": out / "summary.json", "timing": out / "timing.json"}
    _write(paths["csv"], text)
    _write(paths["summary"], _json(summary))
    _write(paths["timing"], _json(timing))
    return paths


def write_scaling(result: dict, out_dir, cfg) -> dict[str, Path]:
    out = Path(out_dir)
    rows = [
        [r["L"], r["axis"], r.get("U_c"), len(r.get("evaluations", [])), r["status"] == "ok"]
        for r in result["per_L"]
    ]
    timing = {"per_L": [r.pop("seconds", None) for r in result["per_L"]]}
    summary = {"version": artifact_version(), "config": cfg.to_dict()} | result
    paths = {"csv": out / "scaling.csv", "summary": out / "summary.json", "timing": out / "timing.json"}
    _write(paths["csv"], csv_text(SCALING_COLUMNS, rows))
    _write(paths["summary"], _json(summary))
    _write(paths["timing"], _json(timing))
    return paths


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
