import csv
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score as sk_silhouette

from aeface import figures, viz
from aeface.errors import ConfigError, DataError
from aeface.viz import TsneConfig


def blobs(n_per=50, seed=0, spread=0.3):
    rng = np.random.default_rng(seed)
    centres = np.array([[0, 0, 0, 0, 0], [6, 0, 0, 0, 0], [0, 6, 0, 0, 0]], dtype=float)
    x = np.concatenate([c + spread * rng.normal(size=(n_per, 5)) for c in centres])
    return x, np.repeat(np.arange(3), n_per)


def test_default_config():
    c = TsneConfig()
    assert (c.perplexity, c.iterations, c.early_exaggeration, c.exaggeration_iters) == (30, 1000, 12, 250)
    assert (c.learning_rate, c.momentum, c.final_momentum) == (200, 0.5, 0.8)


def test_perplexity_capping():
    assert viz.effective_perplexity(30, 1000) == 30
    assert viz.effective_perplexity(30, 31) == 10
    assert 1 < viz.effective_perplexity(30, 3) <= 2
    with pytest.raises(ConfigError):
        viz.effective_perplexity(30, 2)
    with pytest.raises(ConfigError):
        TsneConfig(perplexity=1.0)


def test_too_few_points():
    with pytest.raises(ConfigError):
        viz.tsne(np.eye(2))


def test_non_finite_input():
    x = np.ones((4, 2))
    x[1, 1] = np.nan
    with pytest.raises(DataError):
        viz.tsne(x)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 40), st.integers(0, 10**6), st.floats(2.0, 12.0))
def test_entropy_and_joint_invariants(n, seed, perp):
    x = np.random.default_rng(seed).normal(size=(n, 3))
    perp = viz.effective_perplexity(perp, n)
    cond, _ = viz.conditional_affinities(viz.squared_distances(x), perp)
    for row in cond:
        nz = row[row > 0]
        assert abs(-np.sum(nz * np.log(nz)) - math.log(perp)) < 1e-4
    p = viz.joint_affinities(cond)
    assert np.array_equal(p, p.T)
    off = ~np.eye(n, dtype=bool)
    assert np.all(p[off] >= 1e-12)
    assert abs(p.sum() - 1) < 1e-9


def test_squared_distances_against_loops(rng):
    x = rng.normal(size=(6, 4))
    d = viz.squared_distances(x)
    for i in range(6):
        for j in range(6):
            assert d[i, j] == pytest.approx(sum((a - b) ** 2 for a, b in zip(x[i], x[j])), abs=1e-12)


def test_duplicate_rows_coincide():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    y, _ = viz.tsne(x, TsneConfig(seed=3))
    assert np.all(np.isfinite(y))
    assert np.max(np.abs(y[0] - y[1])) < 1e-6
    assert np.linalg.norm(y[0] - y[2]) > 1e-6


@pytest.fixture(scope="module")
def blob_run():
    x, lab = blobs()
    y, kl = viz.tsne(x, TsneConfig(seed=0))
    return x, lab, y, kl


def test_kl_decreases_and_recorded_every_50(blob_run):
    _, _, _, kl = blob_run
    assert len(kl) == 1000 // 50
    post = kl[250 // 50:]
    assert post[-1] < post[0]


def test_output_centred(blob_run):
    _, _, y, _ = blob_run
    assert y.shape == (150, 2)
    assert np.all(np.abs(y.mean(axis=0)) < 1e-12)


def test_clusters_preserved(blob_run):
    x, lab, y, _ = blob_run
    assert viz.silhouette_score(y, lab) > 0.8


def test_tsne_deterministic():
    x, _ = blobs(10)
    cfg = TsneConfig(iterations=120, seed=5)
    a, _ = viz.tsne(x, cfg)
    b, _ = viz.tsne(x, cfg)
    assert a.tobytes() == b.tobytes()


def test_pca_init_runs():
    x, lab = blobs(50)
    y, _ = viz.tsne(x, TsneConfig(init="pca"))
    assert viz.silhouette_score(y, lab) > 0.8


@pytest.mark.parametrize("seed", range(4))
def test_silhouette_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 3))
    lab = rng.integers(0, 4, size=40)
    lab[:4] = [0, 1, 2, 3]
    assert viz.silhouette_score(x, lab) == pytest.approx(sk_silhouette(x, lab), abs=1e-12)


def test_silhouette_needs_two_clusters():
    with pytest.raises(DataError):
        viz.silhouette_score(np.ones((3, 2)), [0, 0, 0])


def test_export_scatter(tmp_path):
    coords = np.array([[0.0, 1.0], [2.0, -1.0], [1.5, 0.5]])
    csv_path, svg_path = viz.export_scatter(coords, [0, 1, 1], tmp_path)
    with open(csv_path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "y", "label"] and len(rows) == 4
    assert float(rows[2][0]) == 2.0 and rows[2][2] == "1"
    svg = open(svg_path).read()
    assert svg.count("<circle") == 3
    assert svg.count('r="4"') == 3
    assert viz.PALETTE[0] in svg and viz.PALETTE[1] in svg


def test_svg_points_inside_margin(tmp_path):
    coords = np.random.default_rng(0).normal(size=(30, 2))
    _, svg_path = viz.export_scatter(coords, np.arange(30) % 13, tmp_path)
    cx = [float(v) for v in re.findall(r'cx="([\d.]+)"', open(svg_path).read())]
    inner = viz.SVG_WIDTH - 2 * viz.SVG_PAD
    lo, hi = min(cx), max(cx)
    # 5% of the data span on each side of an 110% box
    assert lo == pytest.approx(viz.SVG_PAD + inner * 0.05 / 1.1, abs=1e-3)
    assert hi == pytest.approx(viz.SVG_PAD + inner * 1.05 / 1.1, abs=1e-3)


def test_export_scatter_length_mismatch(tmp_path):
    with pytest.raises(DataError):
        viz.export_scatter(np.zeros((3, 2)), [], tmp_path)


def test_figures_write_reproducible_png(tmp_path):
    x, lab = blobs(5)
    paths = [
        figures.loss_curves({"a": [1.0, 0.5, 0.2], "b": [1.0, 0.8, 0.6]}, tmp_path / "loss.png"),
        figures.scatter(x[:, :2], lab, tmp_path / "sc.png", title="t"),
        figures.score_histogram(np.linspace(-1, 1, 20), np.arange(20) % 2 == 0, tmp_path / "h.png", [0.1]),
    ]
    first = [open(p, "rb").read() for p in paths]
    assert all(b.startswith(b"\x89PNG") for b in first)
    figures.loss_curves({"a": [1.0, 0.5, 0.2], "b": [1.0, 0.8, 0.6]}, tmp_path / "loss2.png")
    assert open(tmp_path / "loss2.png", "rb").read() == first[0]
