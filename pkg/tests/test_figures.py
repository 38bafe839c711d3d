import numpy as np

from pqa.figures import (
    save_cycles_figure,
    save_error_figure,
    save_fit_figure,
    save_sweep_heatmaps,
)
from pqa.perfmodel import HwConfig, SweepGrid, sweep

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_cycles_figure(tmp_path):
    path = save_cycles_figure(["a", "b"], [10, 20], [5, 30],
                              tmp_path / "c.png")
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_error_and_fit_figures(tmp_path):
    p1 = save_error_figure(["a", "b"], [1e-3, 0.0], [1e-2, 1e-4],
                           tmp_path / "e.png")
    p2 = save_fit_figure(["a"], [1e-5], tmp_path / "f.png")
    assert p1.exists() and p2.exists()


def test_sweep_heatmaps_one_per_memory(tmp_path):
    grid = SweepGrid(input_sizes=(4, 8), channels=(16,), n_p_values=(8, 16),
                     l_s_values=(4,))
    records = sweep(grid, HwConfig())
    paths = save_sweep_heatmaps(records, tmp_path)
    assert sorted(p.name for p in paths) == ["sweep_ddr4.png", "sweep_hbm.png"]


def test_figures_identical_across_reruns(tmp_path):
    a = save_fit_figure(["x", "y"], [1e-2, 1e-3], tmp_path / "a.png")
    b = save_fit_figure(["x", "y"], [1e-2, 1e-3], tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
