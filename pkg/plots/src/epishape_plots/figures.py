"""The four figure kinds: decay fit, 2-d shape slice, radial convergence,
sandwich fractions.

Output format follows the file suffix (SVG or PNG).  SVG output strips the
date and pins the hash salt, so rerunning on the same inputs reproduces the
same bytes.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "epishape-plots"

import matplotlib.pyplot as plt
import numpy as np

from .readers import SchemaError, axis_columns, read_fit, read_table


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Date": None} if out_path.suffix == ".svg" else None)
    plt.close(fig)
    return out_path


def plot_decay(curves_csv, fit_json, out_path) -> Path:
    """Log survival against the fitted decay line, rate annotated."""
    data = read_table(curves_csv, ["n", "p_hat", "se"])
    fit = read_fit(fit_json)
    ns = np.asarray(data["n"])
    ps = np.asarray(data["p_hat"])
    if len(ns) < 4:
        raise SchemaError("decay plot needs at least 4 points")
    keep = ps > 0
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(ns[keep], ps[keep], "o", label="survival estimate")
    model = fit["model"]
    power = float(model.split(":", 1)[1]) if ":" in model else 1.0
    lo, hi = fit["support"]
    grid = np.linspace(lo, hi, 200)
    anchor_i = int(np.argmax(keep))
    anchor = math.log(ps[anchor_i]) + fit["rate"] * ns[anchor_i] ** power
    ax.semilogy(
        grid,
        np.exp(anchor - fit["rate"] * grid**power),
        "-",
        label=f"fit: rate {fit['rate']:.3g}, r2 {fit['r2']:.3f}",
    )
    ax.set_xlabel("n" if power == 1.0 else f"n (fit in n^{power:.3g})")
    ax.set_ylabel("survival probability")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_path)


def plot_shape(cloud_csv, radii_csv, out_path, axes=(0, 1), eps=0.3) -> Path:
    """2-d slice of the rescaled cloud with the directional-radius outline."""
    cloud = read_table(cloud_csv, ["replica", "x_1", "x_2"])
    radii = read_table(radii_csv, ["direction_1", "direction_2", "radius"])
    xcols = axis_columns(cloud, "x_")
    dcols = axis_columns(radii, "direction_")
    if len(xcols) != len(dcols):
        raise SchemaError(
            f"dimension mismatch: cloud has {len(xcols)} axes, radii {len(dcols)}"
        )
    d = len(xcols)
    a, b = axes
    if not (0 <= a < d and 0 <= b < d and a != b):
        raise SchemaError(f"axis pair {axes} out of range for dimension {d}")
    pts = np.stack([np.asarray(cloud[c]) for c in xcols], axis=1)
    dirs = np.stack([np.asarray(radii[c]) for c in dcols], axis=1)
    rs = np.asarray(radii["radius"])
    # outline from directions lying in the plotted plane
    others = [i for i in range(d) if i not in (a, b)]
    in_plane = np.ones(len(dirs), dtype=bool)
    for i in others:
        in_plane &= dirs[:, i] == 0
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(pts[:, a], pts[:, b], s=4, alpha=0.25, linewidths=0, label="rescaled cloud")
    if np.any(in_plane):
        vecs = dirs[in_plane][:, [a, b]].astype(float)
        norms = np.linalg.norm(vecs, axis=1)
        unit = vecs / norms[:, None]
        pts_out = unit * rs[in_plane][:, None]
        order = np.argsort(np.arctan2(pts_out[:, 1], pts_out[:, 0]))
        loop = np.vstack([pts_out[order], pts_out[order][:1]])
        ax.plot(loop[:, 0], loop[:, 1], "-", color="C1", label="directional radii")
        for scale_f, style in (((1 - eps), ":"), ((1 + eps), "--")):
            ax.plot(
                scale_f * loop[:, 0], scale_f * loop[:, 1], style, color="C2",
                label=f"{scale_f:g} x outline",
            )
    ax.set_xlabel(f"x_{a + 1} / t")
    ax.set_ylabel(f"x_{b + 1} / t")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_radial(radial_csv, out_path) -> Path:
    """Per-replica ratio sequences along the ray with their mean."""
    data = read_table(radial_csv, ["n", "replica", "ratio"])
    ns = np.asarray(data["n"])
    reps = np.asarray(data["replica"])
    ratios = np.asarray(data["ratio"])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for r in np.unique(reps):
        mask = (reps == r) & np.isfinite(ratios)
        if mask.any():
            order = np.argsort(ns[mask])
            ax.plot(ns[mask][order], ratios[mask][order], color="C0", alpha=0.2, lw=0.8)
    means = []
    levels = np.unique(ns)
    for n in levels:
        vals = ratios[(ns == n) & np.isfinite(ratios)]
        means.append(vals.mean() if vals.size else math.nan)
    ax.plot(levels, means, "o-", color="C1", label="mean ratio")
    ax.set_xlabel("n")
    ax.set_ylabel("passage time / n")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_path)


def plot_sandwich(sandwich_csv, out_path) -> Path:
    """Inclusion violation fractions and the inner infected fraction over t."""
    data = read_table(
        sandwich_csv, ["t", "inner_violation", "outer_violation", "annulus_fraction"]
    )
    t = np.asarray(data["t"])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(t, data["inner_violation"], "o-", label="inner inclusion violations")
    ax.plot(t, data["outer_violation"], "s-", label="outer inclusion violations")
    ax.plot(t, data["annulus_fraction"], "^-", label="infected inside shrunken shape")
    ax.axhline(0.05, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("fraction")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, out_path)
