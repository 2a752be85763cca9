"""Exact t-SNE, silhouette scoring and scatter export (CSV + SVG)."""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

P_FLOOR = 1e-12
Q_FLOOR = 1e-12


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    init: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1:
            raise ConfigError(f"perplexity must exceed 1, got {self.perplexity}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.init not in ("pca", "random"):
            raise ConfigError(f"init must be 'pca' or 'random', got {self.init!r}")


def effective_perplexity(perplexity, n):
    """Cap at (n-1)/3; when that leaves nothing above 1 (n <= 4) use the midpoint of (1, n-1)."""
    if n < 3:
        raise ConfigError(f"t-SNE needs at least 3 points, got {n}")
    cap = (n - 1) / 3.0
    if cap <= 1.0:
        cap = (1.0 + (n - 1)) / 2.0
    return min(perplexity, cap)


def squared_distances(x):
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_entropy(d, beta):
    p = np.exp(-d * beta)
    s = p.sum()
    h = np.log(s) + beta * np.dot(d, p) / s
    return h, p / s


def conditional_affinities(dist, perplexity, tol=1e-5, max_iter=50):
    """Row-wise P(j|i) with each row's entropy matched to ln(perplexity) by bisection on the precision."""
    n = dist.shape[0]
    target = np.log(perplexity)
    cond = np.zeros((n, n))
    entropies = np.empty(n)
    for i in range(n):
        d = np.delete(dist[i], i)
        d = d - d.min()  # shift-invariant; keeps exp() in range
        scale = d.mean()
        beta = 1.0 / scale if scale > 0 else 1.0
        lo, hi = 0.0, np.inf
        h, p = _row_entropy(d, beta)
        for _ in range(max_iter):
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            h, p = _row_entropy(d, beta)
        entropies[i] = h
        cond[i, np.arange(n) != i] = p
    return cond, entropies


def joint_affinities(cond):
    """Symmetrise, then floor off-diagonal entries at P_FLOOR while keeping the total at 1."""
    n = cond.shape[0]
    p = (cond + cond.T) / (2.0 * n)
    off = ~np.eye(n, dtype=bool)
    low = off & (p < P_FLOOR)
    high = off & ~low
    p[low] = P_FLOOR
    p[high] *= (1.0 - low.sum() * P_FLOOR) / p[high].sum()
    np.fill_diagonal(p, 0.0)
    return p


def _low_dim_affinities(y):
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), Q_FLOOR)
    np.fill_diagonal(q, 0.0)
    return num, q


def kl_divergence(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def initial_layout(x, cfg):
    """Starting coordinates, drawn once per distinct input row.

    Identical rows share their start, and since the update is symmetric in
    them they stay together for the whole run.
    """
    uniq, inverse = np.unique(x, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    m = uniq.shape[0]
    if cfg.init == "random":
        y = np.random.default_rng(cfg.seed).normal(0.0, 1e-4, size=(m, 2))
    else:
        centered = uniq - uniq.mean(axis=0)
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        y = np.zeros((m, 2))
        k = min(2, u.shape[1])
        y[:, :k] = u[:, :k] * s[:k]
        sd = y[:, 0].std()
        y = y / sd * 1e-4 if sd > 0 else y
    return y[inverse]


def tsne(points, cfg=None):
    """Project rows of ``points`` to 2-D. Returns ``(coords, kl_history)``.

    KL(P||Q) against the un-exaggerated P is recorded every 50 iterations.
    """
    cfg = cfg or TsneConfig()
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("t-SNE input must be a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise DataError("t-SNE input contains NaN or Inf")
    n = x.shape[0]
    perp = effective_perplexity(cfg.perplexity, n)
    cond, _ = conditional_affinities(squared_distances(x), perp)
    p = joint_affinities(cond)

    y = initial_layout(x, cfg)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    history = []
    for it in range(cfg.iterations):
        early = it < cfg.exaggeration_iters
        pe = p * cfg.early_exaggeration if early else p
        mom = cfg.momentum if early else cfg.final_momentum
        num, q = _low_dim_affinities(y)
        w = (pe - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = mom * update - cfg.learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
        if (it + 1) % 50 == 0:
            history.append(kl_divergence(p, _low_dim_affinities(y)[1]))
    y = y - y.mean(axis=0)
    return y, history


def silhouette_score(x, labels):
    """Mean silhouette under Euclidean distance; points alone in their cluster score 0."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DataError("silhouette needs at least two clusters")
    d = np.sqrt(squared_distances(x))
    s = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == c].mean() for c in classes if c != labels[i])
        s[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(s.mean())


# -- export -----------------------------------------------------------------

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
)
SVG_WIDTH, SVG_HEIGHT, SVG_PAD = 640, 480, 20


def _svg(coords, labels):
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - 0.05 * span
    span = span * 1.1
    inner_w, inner_h = SVG_WIDTH - 2 * SVG_PAD, SVG_HEIGHT - 2 * SVG_PAD
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<rect x="{SVG_PAD}" y="{SVG_PAD}" width="{inner_w}" height="{inner_h}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    for (cx, cy), lab in zip(coords, labels):
        px = SVG_PAD + (cx - lo[0]) / span[0] * inner_w
        py = SVG_PAD + (1.0 - (cy - lo[1]) / span[1]) * inner_h
        color = PALETTE[int(lab) % len(PALETTE)]
        lines.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="4" fill="{color}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_scatter(coords, labels, out_dir, csv_name="coords.csv", svg_name="scatter.svg"):
    """Write ``x,y,label`` CSV and an SVG scatter; returns both paths."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise DataError(f"expected N x 2 coordinates, got shape {coords.shape}")
    if len(labels) != len(coords):
        raise DataError(f"{len(coords)} points but {len(labels)} labels")
    if len(coords) == 0:
        raise DataError("nothing to plot")
    csv_path = os.path.join(out_dir, csv_name)
    svg_path = os.path.join(out_dir, svg_name)
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for (x, y), lab in zip(coords, labels):
            w.writerow([f"{x:.17g}", f"{y:.17g}", int(lab)])
    with open(svg_path, "w") as f:
        f.write(_svg(coords, labels))
    return csv_path, svg_path
