"""PNG figures written next to an experiment's CSV/JSON report."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import ExperimentReport  # noqa: E402

# no Software/date chunks, so figures stay byte-stable for a fixed report
_PNG_META = {"Software": None}


def _sd(x):
    return 0.0 if x is None or np.isnan(x) else x


def plot_arm_effects(report: ExperimentReport, path: str | Path) -> Path:
    """Grouped bars of mean new / lost GICs per arm, with one-sd whiskers."""
    rows = [r for r in report.rows if r.arm != "orig" and r.n > 0]
    if not rows:
        raise ValueError("report has no completed arms to plot")
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar(x - 0.2, [r.mean_new for r in rows], 0.4, yerr=[_sd(r.sd_new) for r in rows],
           capsize=3, label="new", color="#3b7dd8")
    ax.bar(x + 0.2, [r.mean_lost for r in rows], 0.4, yerr=[_sd(r.sd_lost) for r in rows],
           capsize=3, label="lost", color="#d8843b")
    ax.set_xticks(x, [r.arm for r in rows])
    ax.set_ylabel("GICs per user")
    ax.set_title("Profile change against the original profile")
    ax.legend(frameon=False)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_breadth(report: ExperimentReport, path: str | Path) -> Path:
    """Histogram of original-profile breadth."""
    values = [r.breadth for r in report.records if r.arm == "orig" and r.status == "ok"]
    if not values:
        raise ValueError("report has no original profiles")
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.hist(values, bins=np.arange(0, 26) - 0.5, color="#5a9e6f", edgecolor="white")
    ax.set_xlabel("GICs in profile")
    ax.set_ylabel("users")
    ax.set_xlim(-0.5, 24.5)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_figures(report: ExperimentReport, out_dir: str | Path, stem: str = "report") -> list[Path]:
    out = Path(out_dir)
    return [plot_arm_effects(report, out / f"{stem}_arms.png"), plot_breadth(report, out / f"{stem}_breadth.png")]
