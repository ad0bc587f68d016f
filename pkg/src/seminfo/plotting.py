"""Figures for correlation reports and the synthetic study (Agg backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_correlation(report, path):
    """Checkpoint curves (F1, SemInfo, log Z) and windowed correlations."""
    cks = sorted(report.checkpoints, key=lambda c: (c.step, c.name))
    x = np.arange(len(cks))
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    ax = axes[0]
    ax.plot(x, [c.corpus_f1 for c in cks], marker="o", label="corpus F1")
    ax.set_xlabel("checkpoint")
    ax.set_ylabel("F1")
    twin = ax.twinx()
    twin.plot(x, [c.mean_seminfo for c in cks], marker="s", color="tab:orange", label="SemInfo")
    twin.plot(x, [c.mean_log_Z for c in cks], marker="^", color="tab:green", label="log Z")
    ax.set_xticks(x)
    ax.set_xticklabels([str(c.step) for c in cks], rotation=45, fontsize=7)
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [l.get_label() for l in lines], fontsize=7, loc="best")

    ax = axes[1]
    wins = report.windows
    labels = [f"{w['lo']}-{w['hi']}" for w in wins]
    xs = np.arange(len(wins))
    val = lambda v: np.nan if v is None else v
    ax.bar(xs - 0.2, [val(w["rho_seminfo_f1"]) for w in wins], width=0.4, label="SemInfo vs F1")
    ax.bar(xs + 0.2, [val(w["rho_ll_f1"]) for w in wins], width=0.4, label="log Z vs F1")
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=45, fontsize=7)
    ax.set_ylim(-1.05, 1.05)
    ax.set_ylabel("Spearman")
    ax.set_title(f"sentence-level: SemInfo {_fmt(report.sentence_seminfo_f1)}, log Z {_fmt(report.sentence_ll_f1)}", fontsize=8)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_experiment(result, path):
    """Per-run corpus F1 for each objective, with baseline reference lines."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    objectives = sorted({r.objective for r in result.runs})
    for k, obj in enumerate(objectives):
        vals = [r.corpus_f1 for r in result.runs if r.objective == obj]
        ax.scatter([k] * len(vals), vals, zorder=3)
        ax.bar(k, np.mean(vals), width=0.5, alpha=0.4)
    for (name, v), ls in zip(sorted(result.baselines.items()), ["--", ":", "-."]):
        ax.axhline(v, ls=ls, color="gray", lw=1)
        ax.text(len(objectives) - 0.5, v, name, fontsize=7, va="bottom", ha="right")
    ax.set_xticks(range(len(objectives)))
    ax.set_xticklabels(objectives)
    ax.set_ylabel("corpus F1")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fmt(v):
    return "undefined" if v is None else f"{v:.3f}"
