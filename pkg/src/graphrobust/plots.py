"""Figure rendering for the CLI report path.

Every delimited output that the CLI writes can be accompanied by a small
matplotlib figure; pass --no-figures to skip them.  Figures are a viewing
convenience only; the CSVs are the canonical outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_history(records, path) -> None:
    epochs = [r.epoch for r in records]
    fig, ax1 = plt.subplots(figsize=(6, 3.5))
    ax1.plot(epochs, [r.train_loss for r in records], label="train loss", color="tab:blue")
    ax1.plot(epochs, [r.val_metric for r in records], label="val metric", color="tab:orange")
    attacked = [r.epoch for r in records if r.attacked]
    if attacked and len(attacked) < len(records):
        ax1.axvline(attacked[0], color="grey", ls="--", lw=0.8, label="attacks start")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_spectrum(eigenvalues, response, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(eigenvalues, response, ".-", ms=4, lw=0.8)
    ax.set_xlabel(r"eigenvalue $\lambda$ of $I - D^{-1/2} A D^{-1/2}$")
    ax.set_ylabel("filter response")
    ax.axhline(0.0, color="grey", lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_diffusion(matrix, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    lim = float(np.abs(matrix).max()) or 1.0
    im = ax.imshow(matrix, cmap="RdBu_r", vmin=-lim, vmax=lim)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("node")
    ax.set_ylabel("node")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_gamma(gamma, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(len(gamma)), gamma, color="tab:blue")
    ax.set_xlabel("hop k")
    ax.set_ylabel(r"coefficient $\gamma_k$")
    ax.axhline(0.0, color="grey", lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_results(summary_rows, path) -> None:
    """Robust accuracy vs epsilon, one line per (attack, local_rule)."""
    groups = {}
    for row in summary_rows:
        groups.setdefault((row["attack"], row["local_rule"]), []).append(row)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for (attack, rule), rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda r: r["epsilon"])
        eps = [r["epsilon"] for r in rows]
        mean = [r["robust_acc_mean"] for r in rows]
        sem = [r["robust_acc_sem"] for r in rows]
        ax.errorbar(eps, mean, yerr=sem, marker="o", ms=4, capsize=3,
                    label=f"{attack} ({rule})")
    ax.set_xlabel(r"attack budget $\epsilon$")
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
