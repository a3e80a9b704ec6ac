"""CSV, SVG and metadata writers. Output is byte-stable for a given result."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402

PLOT_FLOOR = 1e-6


class EmptyResultError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def emit_csv(result, path, columns: Sequence[str] = None) -> Path:
    """Write rows with a fixed header; floats use 17 significant digits so
    re-parsing reproduces them exactly."""
    rows = list(result.rows if hasattr(result, "rows") else result)
    if not rows:
        raise EmptyResultError(f"nothing to write to {path}")
    cols = list(columns or getattr(result, "columns", None) or rows[0].keys())
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([fmt(r[c]) for c in cols])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path: Path) -> Path:
    plt.rcParams["svg.hashsalt"] = "mixsvm"
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e
    finally:
        plt.close(fig)
    return path


def emit_plot(result, path, value: str = "excess_risk", title: str = None) -> Path:
    """Log-log plot of the per-n median of ``value`` with every seed as a
    scatter point. Nonpositive values are clamped to a floor for display."""
    rows = list(result.rows)
    if not rows:
        raise EmptyResultError(f"nothing to plot to {path}")
    n = np.array([r["n"] for r in rows], dtype=float)
    v = np.array([r[value] for r in rows], dtype=float)
    grid = np.unique(n)
    med = np.array([np.median(v[n == g]) for g in grid])
    with plt.rc_context({"svg.hashsalt": "mixsvm", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.scatter(n, np.maximum(v, PLOT_FLOOR), s=10, alpha=0.35, color="tab:gray", label="per seed")
        ax.plot(grid, np.maximum(med, PLOT_FLOOR), "o-", color="tab:blue", label="median")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(value.replace("_", " "))
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, Path(path))


def emit_lines(series: dict, path, xlabel: str, ylabel: str, logy: bool = True) -> Path:
    """Simple multi-line SVG: ``series`` maps a label to (x, y)."""
    if not series:
        raise EmptyResultError(f"nothing to plot to {path}")
    with plt.rc_context({"svg.hashsalt": "mixsvm", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for label in sorted(series):
            x, y = series[label]
            y = np.asarray(y, dtype=float)
            ax.plot(x, np.maximum(y, PLOT_FLOOR) if logy else y, "o-", ms=3, label=label)
        ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        return _save(fig, Path(path))


def write_json(obj, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    return str(o)


def metadata(command: str, resolved: dict, extra: dict = None) -> dict:
    out = {"command": command, "version": __version__, "config": resolved}
    if extra:
        out.update(extra)
    return out


def violations_doc(items: Iterable[str]) -> dict:
    items = list(items)
    return {"count": len(items), "violations": items}
