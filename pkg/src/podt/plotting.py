"""Optional PNG rendering of suite outputs. Needs matplotlib."""

from __future__ import annotations

import csv
from pathlib import Path


def _read(path: Path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def plot_suite(suite, out_dir) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    made = []
    curves = out_dir / "curves.csv"
    if curves.exists():
        header, rows = _read(curves)
        fig, ax = plt.subplots(figsize=(7, 4))
        x = [int(r[0]) for r in rows]
        for k, name in enumerate(header[1:], start=1):
            ax.plot(x, [float(r[k]) for r in rows], label=name)
        ax.set_xlabel("cycle")
        ax.set_title(suite.description or suite.name)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / "curves.png", dpi=120)
        plt.close(fig)
        made.append(out_dir / "curves.png")

    header, rows = _read(out_dir / "aggregate.csv")
    for metric in suite.metrics:
        col = header.index(f"{metric}_mean")
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar([r[0] for r in rows], [float(r[col]) for r in rows])
        ax.set_ylabel(metric)
        ax.tick_params(axis="x", rotation=70, labelsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / f"{metric}.png", dpi=120)
        plt.close(fig)
        made.append(out_dir / f"{metric}.png")
    return made
