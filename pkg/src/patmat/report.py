"""Benchmark report rendering: delimited trial data plus figures.

The bench command can drop a report directory holding `trials.csv` with
one row per trial and two PNG figures (wall-time per trial, fire counts
per pattern).  Rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field


@dataclass
class TrialRecord:
    trial: int
    nodes: int
    seconds: float
    fires: dict = field(default_factory=dict)
    traversals: int = 0
    vm_steps: int = 0


def write_report(outdir: str, trials: list[TrialRecord]) -> list[str]:
    """Write trials.csv and the figures; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    fire_names = sorted({name for t in trials for name in t.fires})
    csv_path = os.path.join(outdir, "trials.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "nodes", "seconds", "traversals", "vm_steps"]
            + [f"fires_{n}" for n in fire_names]
        )
        for t in trials:
            writer.writerow(
                [t.trial, t.nodes, f"{t.seconds:.6f}", t.traversals, t.vm_steps]
                + [t.fires.get(n, 0) for n in fire_names]
            )
    written.append(csv_path)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([t.trial for t in trials], [t.seconds for t in trials], marker="o", lw=1)
    ax.set_xlabel("trial")
    ax.set_ylabel("wall time (s)")
    ax.set_title("rewrite_fixpoint wall time per trial")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    times_path = os.path.join(outdir, "times.png")
    fig.savefig(times_path, dpi=120)
    plt.close(fig)
    written.append(times_path)

    totals = {n: sum(t.fires.get(n, 0) for t in trials) for n in fire_names}
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if totals:
        names = list(totals)
        ax.bar(range(len(names)), [totals[n] for n in names])
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("total fires")
    ax.set_title("rule fires across trials")
    fig.tight_layout()
    fires_path = os.path.join(outdir, "fires.png")
    fig.savefig(fires_path, dpi=120)
    plt.close(fig)
    written.append(fires_path)

    return written
