"""Figure rendering for report artifacts.

Every report-producing command drops a PNG next to its delimited output so
runs can be eyeballed without loading the data elsewhere.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def training_curves(log_rows: list[dict], path, title: str = "") -> Path:
    """Mean return and mean episode cost over environment steps."""
    steps = [r["env_steps"] for r in log_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(steps, [r["mean_return"] for r in log_rows], color="tab:blue")
    ax1.set_xlabel("environment steps")
    ax1.set_ylabel("mean return")
    ax2.plot(steps, [r["mean_cost"] for r in log_rows], color="tab:red")
    ax2.set_xlabel("environment steps")
    ax2.set_ylabel("mean episode cost")
    if any(r.get("success_rate") is not None for r in log_rows):
        ax2b = ax1.twinx()
        ax2b.plot(steps, [r.get("success_rate", 0.0) for r in log_rows], color="tab:green", alpha=0.5)
        ax2b.set_ylabel("success rate", color="tab:green")
        ax2b.set_ylim(0, 1.05)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def eval_histograms(report, path, title: str = "") -> Path:
    """Per-scenario reward and cost distributions for one evaluation."""
    reward = report.column("reward")
    cost = report.column("cost")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.hist(reward, bins=30, color="tab:blue")
    ax1.set_xlabel("episode reward")
    ax1.set_ylabel("scenarios")
    ax2.hist(cost, bins=np.arange(-0.5, max(2.5, cost.max() + 1.0), 0.5), color="tab:red")
    ax2.set_xlabel("episode cost")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def sweep_curves(rows: list[dict], path, title: str = "") -> Path:
    """Mean reward and cost versus noise level, one line per policy."""
    labels = sorted({r["policy"] for r in rows})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    for label in labels:
        sub = sorted((r for r in rows if r["policy"] == label), key=lambda r: r["sigma"])
        sig = [r["sigma"] for r in sub]
        ax1.plot(sig, [r["mean_reward"] for r in sub], marker="o", label=label)
        ax2.plot(sig, [r["mean_cost"] for r in sub], marker="o", label=label)
    ax1.set_xlabel("noise sigma")
    ax1.set_ylabel("mean reward")
    ax2.set_xlabel("noise sigma")
    ax2.set_ylabel("mean cost")
    ax1.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def action_variance_scatter(results: dict[str, dict], sigma: float, path) -> Path:
    """Clean vs noisy mean-action outputs per policy (one panel each)."""
    n = len(results)
    fig, axes = plt.subplots(1, max(n, 1), figsize=(4.2 * max(n, 1), 3.6), squeeze=False)
    for ax, (label, res) in zip(axes[0], results.items()):
        ax.scatter(res["actions_clean"][:, 0], res["actions_clean"][:, 1], s=12, alpha=0.6, label="clean")
        ax.scatter(res["actions_noisy"][:, 0], res["actions_noisy"][:, 1], s=12, alpha=0.6, label="noisy")
        ax.set_xlim(-1.05, 1.05)
        ax.set_ylim(-1.05, 1.05)
        ax.set_xlabel("acceleration")
        ax.set_ylabel("steering")
        ax.set_title(f"{label} (var increase {res['variance_increase']:+.4f})", fontsize=9)
        ax.legend(fontsize=8)
    fig.suptitle(f"mean-action outputs, sigma={sigma}")
    return _save(fig, path)


def transfer_bars(cells: list[dict], path) -> Path:
    """SR and OOR per (policy, train->eval) cell of the transfer grid."""
    labels = [f"{c['policy']}\n{c['train_domain']}->{c['eval_domain']}" for c in cells]
    x = np.arange(len(cells))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(cells)), 3.6))
    ax.bar(x - 0.2, [c["sr"] for c in cells], width=0.4, label="SR", color="tab:green")
    ax.bar(x + 0.2, [c["oor"] for c in cells], width=0.4, label="OOR", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    return _save(fig, path)
