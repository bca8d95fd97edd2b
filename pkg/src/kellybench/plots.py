"""
Figure emission for backtest comparisons
========================================

Writes the three standard comparison figures (wealth paths, 12-month
rolling Sharpe ratios, weights over time) as deterministic SVG files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "kellybench"

import matplotlib.pyplot as plt

from .backtest import SHARPE_WINDOW, Comparison


def _year_axis(dates: list[int]) -> list[float]:
    return [d // 100 + (d % 100 - 1) / 12.0 for d in dates]


def _save(fig, path: str | Path, manifest: str | None) -> None:
    # no Date metadata, fixed hashsalt: reruns are byte-identical
    metadata = {"Date": None}
    if manifest is not None:
        metadata["Creator"] = f"kellybench manifest {manifest}"
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)


def wealth_figure(comparison: Comparison, path: str | Path,
                  manifest: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(9, 4.5))
    years = _year_axis(comparison.dates)
    for name, series in zip(comparison.names, comparison.wealth):
        ax.plot(years, series, label=name, linewidth=1.2)
    ax.set_xlabel("year")
    ax.set_ylabel("portfolio value")
    ax.set_title(f"Portfolio values, {comparison.split_name} split")
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path, manifest)


def sharpe_figure(comparison: Comparison, path: str | Path,
                  manifest: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(9, 4.5))
    years = _year_axis(comparison.dates[SHARPE_WINDOW - 1:])
    for name, series in zip(comparison.names, comparison.sharpe):
        ax.plot(years, series, label=name, linewidth=1.0)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("year")
    ax.set_ylabel("12-month rolling Sharpe")
    ax.set_title(f"Rolling Sharpe ratios, {comparison.split_name} split")
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path, manifest)


def weights_figure(comparison: Comparison, path: str | Path,
                   manifest: str | None = None) -> None:
    fig, axes = plt.subplots(len(comparison.names), 1, sharex=True,
                             figsize=(9, 1.8 * len(comparison.names)))
    if len(comparison.names) == 1:
        axes = [axes]
    years = _year_axis(comparison.dates)
    for ax, name, series in zip(axes, comparison.names, comparison.weights):
        ax.step(years, series, where="post", linewidth=0.9)
        ax.set_ylabel(name, fontsize=8)
        ax.set_ylim(-0.05, max(1.55, float(series.max()) + 0.05))
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("year")
    axes[0].set_title(f"Risky-asset weights, {comparison.split_name} split")
    fig.tight_layout()
    _save(fig, path, manifest)


def comparison_figures(comparison: Comparison, directory: str | Path,
                       manifest: str | None = None) -> list[Path]:
    """Write all three figures into a directory; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "portfolio_values.svg",
             directory / "rolling_sharpe.svg",
             directory / "weights.svg"]
    wealth_figure(comparison, paths[0], manifest)
    sharpe_figure(comparison, paths[1], manifest)
    weights_figure(comparison, paths[2], manifest)
    return paths
