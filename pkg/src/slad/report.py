"""CSV, JSON and SVG outputs for run directories.

Everything written here is byte-stable for identical inputs: floats are
written with ``repr`` and SVG output carries no date and a fixed id salt.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SVG_RC = {"svg.hashsalt": "slad", "svg.fonttype": "none", "path.simplify": False}


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> None:
    """RFC 4180 CSV: header row first, CRLF line ends, minimal quoting."""
    header = list(header)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h) for h in header]
            row = list(row)
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([_cell(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def scatter_svg(path, samples, reference=None, title: str = "") -> None:
    """Samples over an optional reference cloud."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        if reference is not None:
            ref = np.asarray(reference)
            ax.scatter(ref[:, 0], ref[:, 1], s=3, c="0.75", label="data", linewidths=0)
        pts = np.asarray(samples)
        ax.scatter(pts[:, 0], pts[:, 1], s=3, c="tab:blue", label="samples", linewidths=0)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(title)
        ax.legend(loc="upper right", fontsize=7, markerscale=3)
        _save(fig, path)


def line_svg(path, series: dict, xlabel: str, ylabel: str, title: str = "", logy: bool = False) -> None:
    """One polyline per entry of ``series`` (name -> (xs, ys))."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5.5, 4))
        for name, (xs, ys) in series.items():
            ax.plot(xs, ys, marker="o", ms=3, label=str(name))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=7)
        _save(fig, path)
