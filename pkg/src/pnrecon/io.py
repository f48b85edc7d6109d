"""File formats: histogram CSV + JSON sidecar, result JSON, ensemble tables.

Every file is written atomically (temporary file, then rename).
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from pnrecon.fock_kernel import OscillatorGrid
from pnrecon.states import QuadratureHistogram


class DataFormatError(ValueError):
    """An input file is missing, malformed or inconsistent."""


def fmt17(value) -> str:
    return format(float(value), ".17g")


def fmt6(value) -> str:
    return format(float(value), ".6g")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(_plain(obj), indent=2) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_csv(path, header, rows, formatter=fmt17) -> Path:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, (str, int, np.integer)) else formatter(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_histogram(hist: QuadratureHistogram, path, seed=None, state_descriptor=None,
                    extra=None) -> tuple[Path, Path]:
    """Histogram CSV (``x,count``) plus its JSON sidecar."""
    path = Path(path)
    write_csv(path, ["x", "count"], [(x, int(c)) for x, c in zip(hist.grid.centers, hist.counts)])
    meta = {
        "dx": hist.grid.width,
        "n_total": hist.total,
        "n_dropped": hist.dropped,
        "seed": seed,
        "state_descriptor": state_descriptor,
        "grid_min": hist.grid.lower,
        "grid_max": hist.grid.upper,
    }
    if extra:
        meta.update(extra)
    return path, write_json(sidecar_path(path), meta)


def read_histogram(path) -> tuple[QuadratureHistogram, dict]:
    """Parse a histogram CSV and its sidecar; the grid comes from the file, never from config."""
    path = Path(path)
    side = sidecar_path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: histogram file not found")
    if not side.is_file():
        raise DataFormatError(f"{path}: sidecar {side.name} not found")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{side}: invalid JSON ({exc})") from None
    if "dx" not in meta:
        raise DataFormatError(f"{side}: missing 'dx'")
    xs, counts = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "count"]:
            raise DataFormatError(f"{path}, line 1: expected header 'x,count'")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}, line {line}: expected 2 fields, got {len(row)}")
            try:
                x = float(row[0])
                c = int(row[1])
            except ValueError:
                raise DataFormatError(f"{path}, line {line}: cannot parse {','.join(row)!r}") from None
            if c < 0 or not np.isfinite(x):
                raise DataFormatError(f"{path}, line {line}: invalid bin {','.join(row)!r}")
            xs.append(x)
            counts.append(c)
    if not xs:
        raise DataFormatError(f"{path}: no bins")
    try:
        grid = OscillatorGrid(np.array(xs), float(meta["dx"]))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    hist = QuadratureHistogram(grid, np.array(counts), int(meta.get("n_dropped", 0)))
    if "n_total" in meta and int(meta["n_total"]) != hist.total:
        raise DataFormatError(f"{path}: counts sum to {hist.total}, sidecar says {meta['n_total']}")
    if hist.total == 0:
        raise DataFormatError(f"{path}: histogram is empty")
    return hist, meta


def result_record(result, **extra) -> dict:
    """JSON-ready record of a MaxLik or deterministic reconstruction."""
    rec = {
        "estimate": result.estimate,
        "K": result.relative_entropy,
        "S": result.data_entropy,
        "K_over_S": result.k_over_s,
        "mean": result.mean,
        "refit": result.refit,
    }
    if hasattr(result, "iterations"):
        rec.update(iterations=result.iterations, converged=bool(result.converged), seed=result.seed,
                   loglik_final=float(result.loglik_trace[-1]))
    else:
        rec.update(negative_count=result.negative_count, k_defined=result.k_defined, rank=result.rank)
    rec.update(extra)
    return rec


def write_refit(path, grid: OscillatorGrid, f, q) -> Path:
    """The measured-vs-reconstructed overlay: ``x,f,q``."""
    return write_csv(path, ["x", "f", "q"], zip(grid.centers, f, q))


def write_ensemble(directory, report, results, n_edge: int, bins: int = 20) -> list[Path]:
    """``ensemble.json``, ``ensemble_summary.csv`` and ``k_histogram.csv``."""
    directory = Path(directory)
    records = [result_record(r, n_edge=n_edge) for r in results]
    out = [write_json(directory / "ensemble.json", records)]
    orders = report.orders
    header = (["restart", "K", "K_over_S_pct"] + [f"m{k}" for k in orders]
              + [f"dev{k}" for k in orders])
    rows = []
    for j in range(len(results)):
        rows.append([j, fmt17(report.k_values[j]), format(report.k_over_s[j], ".3g")]
                    + [fmt17(v) for v in report.moments[j]]
                    + [fmt17(v) for v in report.relative_moment_deviations[j]])
    out.append(write_csv(directory / "ensemble_summary.csv", header, rows))
    counts, edges = np.histogram(report.k_values, bins=bins)
    out.append(write_csv(directory / "k_histogram.csv", ["K_low", "K_high", "count"],
                         [(lo, hi, int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]))
    return out
