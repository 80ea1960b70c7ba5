"""Run artifacts: the metrics CSV, the manifest and an optional convergence figure.

CSV columns, one row per iteration::

    k, eta, vhat_0 .. vhat_{N-1}, min_visit, gap_history, gap_window

Floats are written with ``repr`` so files are byte-stable; gap columns are
empty on iterations that were not evaluated.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from pathlib import Path
from typing import Sequence

import numpy as np


def metric_columns(num_players: int) -> list[str]:
    return ["k", "eta"] + [f"vhat_{i}" for i in range(num_players)] + [
        "min_visit", "gap_history", "gap_window"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def metrics_rows(records: Sequence) -> list[list[str]]:
    rows = []
    for rec in records:
        gap_h = gap_w = None
        if rec.gap is not None:
            gap_h, gap_w = rec.gap.max_gap, rec.gap.max_window_gap
        rows.append([_fmt(rec.k), _fmt(rec.eta)] + [_fmt(v) for v in rec.value_estimates]
                    + [_fmt(rec.min_visit), _fmt(gap_h), _fmt(gap_w)])
    return rows


def metrics_csv(records: Sequence, num_players: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(metric_columns(num_players))
    w.writerows(metrics_rows(records))
    return buf.getvalue()


def read_metrics(path: str | Path) -> dict:
    """Columns of a metrics CSV as float arrays (NaN where blank)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {
        name: np.array([float(r[j]) if r[j] else np.nan for r in body])
        for j, name in enumerate(header)
    }


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: str | Path, seed: int, config_text: str, files: Sequence[Path],
                   extra: dict | None = None) -> dict:
    import matplotlib
    import numpy

    from pomglab import __version__

    data = {
        "seed": seed,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "config": json.loads(config_text),
        "versions": {
            "pomglab": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "files": {Path(f).name: sha256_file(f) for f in files},
    }
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return data


def plot_convergence(metrics_path: str | Path, out_path: str | Path,
                     gap_target: float | None = None) -> Path:
    """Value estimates and evaluated Nash gaps against the iteration index."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols = read_metrics(metrics_path)
    k = cols["k"]
    fig, (ax_v, ax_g) = plt.subplots(1, 2, figsize=(9, 3.4))
    for name in sorted(c for c in cols if c.startswith("vhat_")):
        ax_v.plot(k, cols[name], lw=1.2, label=f"player {name.split('_')[1]}")
    ax_v.set_xlabel("iteration")
    ax_v.set_ylabel("estimated value")
    ax_v.legend(frameon=False, fontsize=8)

    for name, style in (("gap_history", "o-"), ("gap_window", "s--")):
        ok = ~np.isnan(cols[name])
        if ok.any():
            ax_g.plot(k[ok], cols[name][ok], style, ms=3, lw=1, label=name.replace("_", " "))
    if gap_target is not None:
        ax_g.axhline(gap_target, color="0.5", lw=0.8, ls=":", label="target")
    ax_g.set_xlabel("iteration")
    ax_g.set_ylabel("Nash gap")
    if ax_g.get_legend_handles_labels()[0]:
        ax_g.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return out_path
