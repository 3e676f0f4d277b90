"""Directional growth speeds, the asymptotic shape, and its inclusion tests.

The directional time constant mu(z) is estimated from regularized passage
times along rays; the shape estimate collects rescaled infected clouds at a
fixed time and summarizes them by directional support radii.  The gauge of
the estimated shape (max of supporting half-space ratios) is an exactly
homogeneous, convex interpolant of the directional speeds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import replica_map
from .cluster import backbone, neighborhood, wave_reach
from .epidemic import neighborhood_passage_time, run_epidemic
from .errors import ConfigError, EstimationError, TruncationError
from .field import BoxField, FieldConfig
from .lattice import Box, Site, linf_norm, origin, scale


def direction_grid(d: int, refine: int = 2) -> np.ndarray:
    """Primitive integer directions with coordinates in [-refine, refine].

    refine=1 gives axes plus diagonals; larger values interleave finer
    rational directions.  Directions are deduplicated up to positive scaling.
    """
    if refine < 1:
        raise ConfigError("refine must be >= 1")
    rng = range(-refine, refine + 1)
    seen = set()
    out = []
    from itertools import product

    for v in product(rng, repeat=d):
        if all(c == 0 for c in v):
            continue
        g = math.gcd(*(abs(c) for c in v))
        prim = tuple(c // g for c in v)
        if prim not in seen:
            seen.add(prim)
            out.append(prim)
    return np.asarray(sorted(out), dtype=np.int64)


def _survives(field: BoxField, proxy_radius: int) -> bool:
    """Finite-volume survival proxy: the out-cluster of the origin reaches
    max-norm proxy_radius."""
    dist = np.abs(field.coords - np.asarray(field.box.center)).max(axis=1)
    stop = dist >= proxy_radius
    o = field.index_of(origin(field.cfg.d))
    mask = wave_reach(field, [o], forward=True, stop_mask=stop)
    return bool(np.any(mask & stop))


def _ray_indices(field: BoxField, dirs: np.ndarray) -> list:
    """Per direction, the box linear indices of its lattice ray k*v, k >= 1."""
    out = []
    for v in dirs:
        idx = []
        k = 1
        while True:
            site = tuple(int(k) * int(c) for c in v)
            if not field.box.contains(site):
                break
            idx.append(field.index_of(site))
            k += 1
        out.append(np.asarray(idx, dtype=np.int64))
    return out


def _ray_radii(mask: np.ndarray, rays: list, dirs: np.ndarray, t: float) -> np.ndarray:
    """Farthest infected site along each direction ray, rescaled by t.

    Reading the extent on the ray itself (rather than the support of the
    whole cloud) keeps one lucky excursion from inflating every direction it
    projects onto; directions with no infected ray site get radius 0.
    """
    radii = np.zeros(len(rays))
    norms = np.linalg.norm(dirs.astype(float), axis=1)
    for i, idx in enumerate(rays):
        if idx.size == 0:
            continue
        hit = np.nonzero(mask[idx])[0]
        if hit.size:
            radii[i] = (hit[-1] + 1) * norms[i] / t
    return radii


@dataclass
class RadialEstimate:
    """Per-direction speed estimate from ray passage times.

    `ratios[k, i]` is the regularized passage time to n_values[i] * z over
    n_values[i] for replica k; NaN marks excluded samples (ray endpoint not
    reached, or a neighborhood that did not fit the box).
    """

    z: Site
    n_values: list
    ratios: np.ndarray
    mu_hat: float
    ci: tuple
    replicas: int
    excluded: int
    truncated: int

    @property
    def se(self) -> float:
        return 0.25 * (self.ci[1] - self.ci[0])


def radial_limit(
    cfg: FieldConfig,
    z: Site,
    n_max: int,
    replicas: int,
    box_radius: int | None = None,
    c_prime: int = 8,
    n_values=None,
    lambda_c_hint: float | None = None,
    seed_salt: int = 0,
    jobs: int = 1,
) -> RadialEstimate:
    """Ratio sequence tau_hat(o, n z) / n along a ray and its limit estimate.

    Replicas where n z is not reached from the origin are excluded and
    counted, as are rays whose endpoint neighborhoods fail to fit the box.
    `seed_salt` offsets the replica stream so two estimates can be made
    independent.
    """
    if all(v == 0 for v in z):
        return RadialEstimate(z, [n_max], np.zeros((replicas, 1)), 0.0, (0.0, 0.0), replicas, 0, 0)
    if lambda_c_hint is not None and cfg.lam <= lambda_c_hint:
        warnings.warn(
            f"rate {cfg.lam} is at or below the critical estimate {lambda_c_hint}; "
            "radial limits are only meaningful in the supercritical phase",
            stacklevel=2,
        )
    if n_values is None:
        ladder = sorted({max(1, n_max // 8), max(1, n_max // 4), max(1, n_max // 2), n_max})
    else:
        ladder = sorted(set(int(n) for n in n_values))
    if ladder[-1] != n_max:
        raise ConfigError("n_values must end at n_max")
    reach_needed = n_max * linf_norm(z)
    if box_radius is None:
        box_radius = reach_needed + c_prime + 2
    if box_radius <= reach_needed:
        raise ConfigError("box radius must exceed n_max * |z|")
    o = origin(cfg.d)

    def one(k: int):
        rcfg = cfg.replica(k + seed_salt)
        bb = backbone(rcfg, box_radius)
        fld = bb.field
        reach = wave_reach(fld, [fld.index_of(o)], forward=True)
        row = np.full(len(ladder), np.nan)
        excl = trunc = 0
        try:
            nb_o = neighborhood(rcfg, o, bb, c_prime, with_bonds=False)
        except TruncationError:
            return row, 0, len(ladder)
        for i, n in enumerate(ladder):
            target = scale(z, n)
            if not reach[fld.index_of(target)]:
                excl += 1
                continue
            try:
                nb_t = neighborhood(rcfg, target, bb, c_prime, with_bonds=False)
            except TruncationError:
                trunc += 1
                continue
            tau = neighborhood_passage_time(rcfg, o, target, bb, c_prime, nb_o, nb_t)
            row[i] = tau / n
        return row, excl, trunc

    results = replica_map(one, replicas, jobs)
    ratios = np.vstack([r[0] for r in results])
    excluded = sum(r[1] for r in results)
    truncated = sum(r[2] for r in results)
    last = ratios[:, -1]
    good = last[np.isfinite(last)]
    if good.size == 0:
        raise EstimationError("all replicas excluded: subcritical or box too small")
    mu_hat = float(good.mean())
    rng = np.random.default_rng(cfg.seed ^ 0x52414449)
    boots = np.array(
        [rng.choice(good, size=good.size, replace=True).mean() for _ in range(500)]
    )
    ci = (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975)))
    return RadialEstimate(z, ladder, ratios, mu_hat, ci, replicas, excluded, truncated)


@dataclass
class ShapeEstimate:
    """Directional summary of rescaled infected clouds at one time.

    `radii[i]` is the median over surviving replicas of the support of the
    rescaled cloud in unit direction `unit_dirs[i]`; the speed table is its
    reciprocal.  `clouds` keeps one rescaled point array per replica.
    """

    t: float
    directions: np.ndarray
    unit_dirs: np.ndarray
    radii: np.ndarray
    radii_ci: np.ndarray
    clouds: list
    replicas: int
    excluded: int
    clipped: int
    survival_rate: float

    def speed_table(self) -> dict:
        out = {}
        for vec, r in zip(self.directions, self.radii):
            out[tuple(int(v) for v in vec)] = math.inf if r == 0 else 1.0 / float(r)
        return out

    def contains(self, points: np.ndarray, scale_factor: float) -> np.ndarray:
        """Membership of points in scale_factor * (estimated shape)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lhs = pts @ self.unit_dirs.T
        return np.all(lhs <= scale_factor * self.radii + 1e-12, axis=1)


def gauge(shape: ShapeEstimate, x) -> float:
    """Exactly homogeneous convex gauge of the estimated shape.

    gauge(x) <= 1 iff x lies in the shape; gauge(0) = 0; gauge(a x) =
    a gauge(x) for a > 0.  Warns when x points into a cone with no nearby
    sampled direction.
    """
    if shape.radii.size == 0:
        raise EstimationError("shape estimate has no directional radii")
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return 0.0
    cosines = (shape.unit_dirs @ x) / norm
    if float(cosines.max()) < math.cos(math.radians(30.0)):
        warnings.warn(
            "direction lies outside the sampled cone coverage; the gauge "
            "value is an extrapolation",
            stacklevel=2,
        )
    ok = shape.radii > 0
    if not np.any(ok):
        return math.inf
    vals = (shape.unit_dirs[ok] @ x) / shape.radii[ok]
    best = float(vals.max())
    return max(best, 0.0)


def estimate_shape(
    cfg: FieldConfig,
    t: float,
    replicas: int,
    box_radius: int,
    refine: int = 2,
    seed_salt: int = 0,
    jobs: int = 1,
) -> ShapeEstimate:
    """Rescaled infected clouds at time t and their directional radii."""
    if not t > 0:
        raise ConfigError("shape time must be > 0")
    dirs = direction_grid(cfg.d, refine)
    unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    box = Box(origin(cfg.d), box_radius)

    ray_cache: dict = {}

    def one(k: int):
        rcfg = cfg.replica(k + seed_salt)
        field = BoxField(rcfg, box)
        if "rays" not in ray_cache:
            ray_cache["rays"] = _ray_indices(field, dirs)
        if not _survives(field, max(2, box_radius // 2)):
            return None
        traj = run_epidemic(rcfg, box, horizon=t, field=field)
        mask = traj.sublevel_mask(t)
        pts = field.coords[mask] / t
        return pts, _ray_radii(mask, ray_cache["rays"], dirs, t), traj.touched_boundary

    clouds = []
    supports = []
    excluded = 0
    clipped = 0
    for res in replica_map(one, replicas, jobs):
        if res is None:
            excluded += 1
        else:
            clouds.append(res[0])
            supports.append(res[1])
            clipped += int(res[2])
    if not supports:
        raise EstimationError("all replicas died out before the survival proxy")
    sup = np.asarray(supports)
    radii = np.median(sup, axis=0)
    rng = np.random.default_rng(cfg.seed ^ 0x53484150)
    boots = np.empty((200, radii.size))
    for b in range(200):
        pick = rng.integers(0, sup.shape[0], size=sup.shape[0])
        boots[b] = np.median(sup[pick], axis=0)
    ci = np.stack([np.quantile(boots, 0.025, axis=0), np.quantile(boots, 0.975, axis=0)])
    return ShapeEstimate(
        t=t,
        directions=dirs,
        unit_dirs=unit,
        radii=radii,
        radii_ci=ci,
        clouds=clouds,
        replicas=replicas,
        excluded=excluded,
        clipped=clipped,
        survival_rate=1.0 - excluded / replicas,
    )


@dataclass
class SandwichReport:
    """Violation fractions of the two-sided shape inclusions along a time ladder.

    For each time t: `inner_violation` is the fraction of reachable sites in
    the shrunken shape not yet infected by t; `outer_violation` the fraction
    of infected sites outside the inflated shape; `annulus_fraction` the
    fraction of currently infected sites inside the shrunken shape, which
    should vanish for recovery laws with a finite d-th moment and persist
    otherwise.
    """

    eps: float
    t_values: list
    inner_violation: np.ndarray
    outer_violation: np.ndarray
    annulus_fraction: np.ndarray
    replicas_used: int
    survival_rate: float


def sandwich_check(
    cfg: FieldConfig,
    eps: float,
    t_values,
    replicas: int,
    shape_ref: ShapeEstimate,
    box_radius: int,
    seed_salt: int = 0,
    jobs: int = 1,
) -> SandwichReport:
    """Check the shrunken/inflated shape inclusions on fresh replicas."""
    if not 0 < eps <= 1:
        raise ConfigError("eps must lie in (0, 1]")
    t_values = sorted(float(t) for t in t_values)
    t_max = t_values[-1]
    axis = np.abs(shape_ref.directions).sum(axis=1) == 1  # +-e_i directions
    axis_extent = float(shape_ref.radii[axis].max())
    if box_radius <= (1 + eps) * t_max * axis_extent:
        raise ConfigError(
            "box radius must exceed (1 + eps) * t * (axis extent of the "
            "reference shape); enlarge the box or shorten the ladder"
        )
    box = Box(origin(cfg.d), box_radius)

    def one(k: int):
        rcfg = cfg.replica(k + seed_salt)
        field = BoxField(rcfg, box)
        if not _survives(field, max(2, box_radius // 2)):
            return None
        traj = run_epidemic(rcfg, box, horizon=math.inf, field=field)
        coords = field.coords.astype(float)
        ever = traj.ever_infected_mask()
        row_i, row_o, row_a = [], [], []
        for t in t_values:
            infected_by_t = traj.infection <= t
            in_small = shape_ref.contains(coords, (1 - eps) * t)
            in_big = shape_ref.contains(coords, (1 + eps) * t)
            inner_set = in_small & ever
            n_inner = int(inner_set.sum())
            viol_inner = int((inner_set & ~infected_by_t).sum())
            row_i.append(viol_inner / n_inner if n_inner else 0.0)
            n_outer = int(infected_by_t.sum())
            viol_outer = int((infected_by_t & ~in_big).sum())
            row_o.append(viol_outer / n_outer if n_outer else 0.0)
            zeta = infected_by_t & ~(traj.recovery <= t)
            n_zeta = int(zeta.sum())
            in_ann = int((zeta & in_small).sum())
            row_a.append(in_ann / n_zeta if n_zeta else 0.0)
        return row_i, row_o, row_a

    rows = [r for r in replica_map(one, replicas, jobs) if r is not None]
    used = len(rows)
    excluded = replicas - used
    if used == 0:
        raise EstimationError("all replicas died out before the survival proxy")
    inner = np.asarray([r[0] for r in rows])
    outer = np.asarray([r[1] for r in rows])
    annulus = np.asarray([r[2] for r in rows])
    return SandwichReport(
        eps=eps,
        t_values=t_values,
        inner_violation=inner.mean(axis=0),
        outer_violation=outer.mean(axis=0),
        annulus_fraction=annulus.mean(axis=0),
        replicas_used=used,
        survival_rate=used / replicas,
    )


@dataclass
class GrowthTailReport:
    """Tail probabilities P(tau_hat(o, z) > K |z|) along axis rays."""

    k_grid: list
    radii: list
    tail: np.ndarray  # (len(k_grid), len(radii))
    counts: np.ndarray
    fits: dict
    accepted_k: float | None


def linear_growth_tail(
    cfg: FieldConfig,
    replicas: int,
    k_grid,
    radii=(2, 4, 8, 16),
    box_radius: int | None = None,
    c_prime: int = 8,
    r2_min: float = 0.9,
    jobs: int = 1,
) -> GrowthTailReport:
    """Estimate the linear-growth tail and fit its stretched-exponential decay.

    For each K in the grid, fits log P(tau_hat > K r) against r^(1/d) and
    reports the smallest K whose fit has a negative slope with R^2 above
    `r2_min`.
    """
    from .stats import tail_fit

    radii = sorted(set(int(r) for r in radii))
    if box_radius is None:
        box_radius = radii[-1] + c_prime + 2
    d = cfg.d
    o = origin(d)
    def one(k: int) -> dict:
        rcfg = cfg.replica(k)
        bb = backbone(rcfg, box_radius)
        got: dict = {r: [] for r in radii}
        try:
            nb_o = neighborhood(rcfg, o, bb, c_prime, with_bonds=False)
        except TruncationError:
            return got
        for axis in range(d):
            for r in radii:
                z = tuple(r if a == axis else 0 for a in range(d))
                try:
                    nb_z = neighborhood(rcfg, z, bb, c_prime, with_bonds=False)
                except TruncationError:
                    continue
                tau = neighborhood_passage_time(rcfg, o, z, bb, c_prime, nb_o, nb_z)
                got[r].append(tau)
        return got

    samples: dict = {r: [] for r in radii}
    for got in replica_map(one, replicas, jobs):
        for r in radii:
            samples[r].extend(got[r])
    counts = np.asarray([len(samples[r]) for r in radii])
    if int(counts.min()) == 0:
        raise EstimationError("no usable ray samples; enlarge the box or replicas")
    k_grid = sorted(float(k) for k in k_grid)
    tail = np.zeros((len(k_grid), len(radii)))
    for ki, K in enumerate(k_grid):
        for ri, r in enumerate(radii):
            vals = np.asarray(samples[r])
            tail[ki, ri] = float((vals > K * r).mean())
    fits = {}
    accepted = None
    for ki, K in enumerate(k_grid):
        try:
            fit = tail_fit(radii, tail[ki], model="exp_n_pow", power=1.0 / d)
        except EstimationError:
            continue
        fits[K] = fit
        if accepted is None and fit.rate > 0 and fit.r2 >= r2_min:
            accepted = K
    return GrowthTailReport(list(k_grid), radii, tail, counts, fits, accepted)
