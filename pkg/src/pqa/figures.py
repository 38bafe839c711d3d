"""Figure rendering for the report-emitting commands.

Every figure lands next to the delimited report it illustrates. The Agg
backend keeps rendering headless and byte-stable across reruns; PNG
metadata is stripped for the same reason.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_cycles_figure(layer_names: list[str], compute: list[int],
                       load: list[int], path: str | Path) -> Path:
    """Per-layer compute vs. load cycles; memory-bound layers stand out
    wherever the load bar tops the compute bar."""
    x = np.arange(len(layer_names))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(layer_names)), 3.6))
    ax.bar(x - 0.2, compute, width=0.4, label="compute", color="#4878cf")
    ax.bar(x + 0.2, load, width=0.4, label="load", color="#d65f5f")
    ax.set_xticks(x)
    ax.set_xticklabels(layer_names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("cycles")
    ax.legend(frameon=False)
    return _finish(fig, Path(path))


def save_error_figure(layer_names: list[str], mse_enc: list[float],
                      mse_out: list[float], path: str | Path) -> Path:
    """Per-layer encoding and output MSE on a log scale."""
    x = np.arange(len(layer_names))
    floor = 1e-300  # log axis cannot show exact zeros
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(layer_names)), 3.6))
    ax.plot(x, np.maximum(mse_enc, floor), "o-", label="encoding MSE")
    ax.plot(x, np.maximum(mse_out, floor), "s-", label="output MSE")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(layer_names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("MSE")
    ax.legend(frameon=False)
    return _finish(fig, Path(path))


def save_fit_figure(layer_names: list[str], mse_enc: list[float],
                    path: str | Path) -> Path:
    x = np.arange(len(layer_names))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(layer_names)), 3.4))
    ax.bar(x, np.maximum(mse_enc, 1e-300), color="#6acc65")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(layer_names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("encoding MSE")
    return _finish(fig, Path(path))


def save_sweep_heatmaps(records, out_dir: str | Path) -> list[Path]:
    """One heatmap per memory kind over the sweep grid.

    Rows are (n_p, l_s) pairs, columns (input size, channels) pairs; the
    color shows speedup when a baseline was supplied (log cycles
    otherwise) and memory-bound cells carry an ``M`` marker.
    """
    out_dir = Path(out_dir)
    paths = []
    memories = sorted({r.memory for r in records})
    for memory in memories:
        recs = [r for r in records if r.memory == memory]
        row_keys = sorted({(r.n_p, r.l_s) for r in recs})
        col_keys = sorted({(r.input_size, r.channels) for r in recs})
        grid = np.full((len(row_keys), len(col_keys)), np.nan)
        bound = np.zeros_like(grid, dtype=bool)
        have_speedup = all(r.speedup is not None for r in recs)
        for r in recs:
            i = row_keys.index((r.n_p, r.l_s))
            j = col_keys.index((r.input_size, r.channels))
            grid[i, j] = r.speedup if have_speedup else np.log10(r.cycles.total_cycles)
            bound[i, j] = r.cycles.memory_bound
        fig, ax = plt.subplots(
            figsize=(max(5.0, 0.5 * len(col_keys)), max(4.0, 0.3 * len(row_keys))))
        im = ax.imshow(grid, aspect="auto", cmap="viridis")
        for i in range(len(row_keys)):
            for j in range(len(col_keys)):
                if bound[i, j]:
                    ax.text(j, i, "M", ha="center", va="center",
                            color="white", fontsize=7)
        ax.set_xticks(range(len(col_keys)))
        ax.set_xticklabels([f"{s}/{c}" for s, c in col_keys],
                           rotation=60, ha="right", fontsize=7)
        ax.set_yticks(range(len(row_keys)))
        ax.set_yticklabels([f"np={p} ls={l}" for p, l in row_keys], fontsize=7)
        ax.set_xlabel("input size / channels")
        label = "speedup vs baseline" if have_speedup else "log10 cycles"
        fig.colorbar(im, ax=ax, label=label)
        ax.set_title(f"{memory} (M = memory bound)")
        paths.append(_finish(fig, out_dir / f"sweep_{memory}.png"))
    return paths
