"""Figure rendering for CLI reports; files land next to the delimited output."""

from __future__ import annotations

from typing import Mapping, Sequence


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_probability_bars(
    path: str,
    entries: Sequence[tuple[str, float]],
    title: str,
    ylabel: str = "probability",
) -> None:
    plt = _pyplot()
    labels = [k if k else "(initial)" for k, _ in entries]
    values = [v for _, v in entries]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.2))
    ax.bar(range(len(values)), values, color="#4878b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05 if max(values, default=1.0) <= 1.0 else None)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_net_bars(path: str, nets: Sequence[tuple[str, float]], title: str) -> None:
    plt = _pyplot()
    labels = [k for k, _ in nets]
    values = [v for _, v in nets]
    colors = ["#b04848" if v < 0 else "#48b060" for v in values]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.2))
    ax.bar(range(len(values)), values, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("net payoff")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curves(
    path: str,
    xs: Mapping[str, Sequence[float]],
    ys: Mapping[str, Sequence[float]],
    title: str,
    xlabel: str = "t",
    ylabel: str = "integrand",
    logy: bool = False,
) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for name in ys:
        ax.plot(xs[name], ys[name], label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
