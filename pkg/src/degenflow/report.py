"""Artifact emission: JSON reports, CSV data series, rendered figures,
and a standalone plot script over the CSVs.

All writers are deterministic: fixed float formatting, sorted keys, no
timestamps, so identical inputs produce byte-identical files.
"""

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_metadata(out_dir, version, cfg, extra=None):
    meta = {
        "version": version,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "config": cfg.as_dict(),
        "defaults_used": cfg.defaults_used,
    }
    if extra:
        meta.update(extra)
    write_json(os.path.join(out_dir, "metadata.json"), meta)


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------


def figure_trajectory(out_dir, times, states, name="trajectory"):
    fig, ax = plt.subplots(figsize=(5, 5))
    states = np.asarray(states)
    if states.ndim == 1 or states.shape[1] == 1:
        ax.plot(times, states.ravel(), lw=0.5)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
    else:
        ax.plot(states[:, 0], states[:, 1], lw=0.3)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(name)
    path = os.path.join(out_dir, f"{name}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def figure_series(out_dir, xs, ys, xlabel, ylabel, name, logy=False):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o", ms=3, lw=1)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(name)
    path = os.path.join(out_dir, f"{name}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def figure_bars(out_dir, labels, values, errors, ylabel, name):
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = np.arange(len(labels))
    ax.bar(pos, values, yerr=errors, capsize=3)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(name)
    fig.tight_layout()
    path = os.path.join(out_dir, f"{name}.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


_PLOT_TEMPLATE = '''"""Regenerate the figures for this run from its CSV files."""

import csv
import sys

import matplotlib.pyplot as plt


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {{name: [float(r[i]) for r in body] for i, name in enumerate(header)
            if all(_is_num(r[i]) for r in body)}}
    return header, body, cols


def _is_num(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


PLOTS = {plots}

for csv_name, kind, xcol, ycol, title in PLOTS:
    header, body, cols = read_csv(csv_name)
    fig, ax = plt.subplots()
    if kind == "line":
        ax.plot(cols[xcol], cols[ycol], lw=0.5)
    elif kind == "scatter":
        ax.plot(cols[xcol], cols[ycol], "o", ms=3)
    ax.set_xlabel(xcol)
    ax.set_ylabel(ycol)
    ax.set_title(title)
    out = title.replace(" ", "_") + "_replot.png"
    fig.savefig(out, dpi=120)
    print("wrote", out)
'''


def write_plot_script(out_dir, plots):
    """Emit plot.py rebuilding line/scatter figures from the CSVs.

    ``plots`` is a list of (csv_name, kind, xcol, ycol, title).
    """
    path = os.path.join(out_dir, "plot.py")
    with open(path, "w") as fh:
        fh.write(_PLOT_TEMPLATE.format(plots=repr(plots)))
    return path
