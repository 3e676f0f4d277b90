"""Critical-point estimation and statistical checks on the percolation field.

Survival probabilities to box boundaries, bisection brackets for the
critical rate, log-linear tail fits, positive-association (FKG) covariance
checks over monotone events, and the slab percolation probe.

Survival events on a fixed seed are monotone in the infection rate by the
shared-clock coupling, so bisection operates on an exactly non-decreasing
per-seed curve rather than a noisy one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import backbone, neighborhood_radius, wave_reach
from ._parallel import replica_map
from .errors import ConfigError, EstimationError, TruncationError
from .field import BoxField, FieldConfig, bond_open_over_seeds, child_seeds
from .lattice import Box, OrientedBond, check_bond, origin


@dataclass(frozen=True)
class SurvivalCurve:
    """Monte Carlo estimate of one boundary-connection probability."""

    lam: float
    n: int
    direction: str
    p_hat: float
    se: float
    replicas: int


@dataclass(frozen=True)
class LambdaBracket:
    """Bisection bracket for the critical rate at a fixed box radius."""

    direction: str
    n: int
    lo: float
    hi: float
    p_lo: float
    p_hi: float
    tol: float
    replicas: int

    def overlaps(self, other: "LambdaBracket") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


@dataclass(frozen=True)
class TailFit:
    """Least-squares decay-rate fit of log survival against n or n^power."""

    model: str
    power: float
    rate: float
    r2: float
    support: tuple

    def as_record(self) -> dict:
        model = self.model if self.power == 1.0 else f"{self.model}:{self.power:g}"
        return {
            "model": model,
            "rate": self.rate,
            "r2": self.r2,
            "support": list(self.support),
        }


def _max_reach_norm(field: BoxField, start_idx: int, direction: str) -> int:
    """Largest max-norm distance from the box center reached by the cluster.

    Stops sweeping at the box boundary: once it is hit, the maximum equals
    the box radius and every smaller radius is hit too.
    """
    mask = wave_reach(
        field,
        [start_idx],
        forward=(direction == "out"),
        stop_mask=field.boundary_mask,
    )
    dist = np.abs(field.coords - np.asarray(field.box.center)).max(axis=1)
    return int(dist[mask].max())


def survival_indicators(
    cfg: FieldConfig, ns, direction: str, replicas: int, jobs: int = 1
) -> np.ndarray:
    """Indicator matrix (replicas, len(ns)) of boundary connection events.

    One field per replica serves every radius in `ns`: the origin connects
    to the radius-n sphere exactly when its cluster inside the largest box
    reaches max-norm n, because the path prefix up to its first exit lives
    in the radius-n box.
    """
    if direction not in ("out", "in"):
        raise ConfigError(f"direction must be 'out' or 'in', got {direction!r}")
    ns = sorted(set(int(n) for n in ns))
    if any(n < 1 for n in ns):
        raise ConfigError("survival radii must be >= 1")
    n_top = ns[-1]
    box = Box(origin(cfg.d), n_top)

    def one(k: int) -> list:
        field = BoxField(cfg.replica(k), box)
        reach = _max_reach_norm(field, field.index_of(origin(cfg.d)), direction)
        return [reach >= n for n in ns]

    return np.asarray(replica_map(one, replicas, jobs), dtype=bool)


def survival_probability(
    cfg: FieldConfig, n: int, direction: str, replicas: int, jobs: int = 1
) -> SurvivalCurve:
    """Monte Carlo frequency of the origin-to-boundary connection event."""
    if replicas < 100:
        raise ConfigError("survival estimates need >= 100 replicas")
    ind = survival_indicators(cfg, [n], direction, replicas, jobs)[:, 0]
    p = float(ind.mean())
    se = math.sqrt(p * (1.0 - p) / replicas)
    return SurvivalCurve(cfg.lam, n, direction, p, se, replicas)


def survival_curve_family(
    cfg: FieldConfig, ns, direction: str, replicas: int, jobs: int = 1
) -> list:
    """Survival curves over a radius ladder, sharing fields across radii."""
    if replicas < 100:
        raise ConfigError("survival estimates need >= 100 replicas")
    ns = sorted(set(int(n) for n in ns))
    ind = survival_indicators(cfg, ns, direction, replicas, jobs)
    out = []
    for i, n in enumerate(ns):
        p = float(ind[:, i].mean())
        se = math.sqrt(p * (1.0 - p) / replicas)
        out.append(SurvivalCurve(cfg.lam, n, direction, p, se, replicas))
    return out


def _survival_fraction(
    cfg: FieldConfig, lam: float, n: int, direction: str, replicas: int, jobs: int = 1
) -> float:
    return float(
        survival_indicators(cfg.with_lambda(lam), [n], direction, replicas, jobs).mean()
    )


def estimate_lambda_c(
    cfg: FieldConfig,
    n: int,
    tol: float,
    replicas: int,
    direction: str = "out",
    lo: float = 0.05,
    hi: float = 4.0,
    threshold: float = 0.5,
    jobs: int = 1,
) -> LambdaBracket:
    """Bisection bracket of the rate where survival to radius n crosses 1/2.

    All rate evaluations reuse the same replica seeds, so the empirical
    curve is exactly non-decreasing and bisection is safe.
    """
    if not tol > 0:
        raise ConfigError("tolerance must be > 0")
    p_lo = _survival_fraction(cfg, lo, n, direction, replicas, jobs)
    p_hi = _survival_fraction(cfg, hi, n, direction, replicas, jobs)
    grow = 0
    while p_lo >= threshold and lo > 1e-6:
        lo /= 2.0
        p_lo = _survival_fraction(cfg, lo, n, direction, replicas, jobs)
        grow += 1
        if grow > 24:
            break
    grow = 0
    while p_hi < threshold:
        hi *= 2.0
        p_hi = _survival_fraction(cfg, hi, n, direction, replicas, jobs)
        grow += 1
        if grow > 24:
            raise EstimationError(
                "survival never crossed the threshold; too few replicas or "
                "a degenerate recovery distribution"
            )
    if p_lo >= threshold:
        raise EstimationError("survival exceeds the threshold at arbitrarily small rates")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p_mid = _survival_fraction(cfg, mid, n, direction, replicas, jobs)
        if p_mid >= threshold:
            hi, p_hi = mid, p_mid
        else:
            lo, p_lo = mid, p_mid
    return LambdaBracket(direction, n, lo, hi, p_lo, p_hi, tol, replicas)


def tail_fit(ns, p_hats, model: str = "exp_n", power: float = 1.0) -> TailFit:
    """Fit log p = a - rate * n^power by least squares.

    Zero probabilities are dropped (their log is undefined); at least four
    positive support points must remain.
    """
    if model not in ("exp_n", "exp_n_pow"):
        raise ConfigError(f"unknown tail model {model!r}")
    if model == "exp_n":
        power = 1.0
    elif not 0 < power <= 1:
        raise ConfigError("power must lie in (0, 1]")
    ns = np.asarray(ns, dtype=float)
    ps = np.asarray(p_hats, dtype=float)
    keep = ps > 0
    ns, ps = ns[keep], ps[keep]
    if ns.size < 4:
        raise EstimationError(
            f"tail fit needs >= 4 positive support points, have {ns.size}"
        )
    x = ns**power
    y = np.log(ps)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = intercept + slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return TailFit(model, power, -float(slope), r2, (float(ns.min()), float(ns.max())))


# -- monotone events and positive association --------------------------------


@dataclass(frozen=True)
class MonotoneEvent:
    """Increasing indicator event: an OR of AND-clauses over open bonds.

    The syntax admits no negation, so every expressible event is increasing
    in the bond configuration by construction; anything else is rejected
    when parsing.
    """

    clauses: tuple

    def __post_init__(self) -> None:
        if not self.clauses:
            raise ConfigError("monotone event needs at least one clause")
        for clause in self.clauses:
            if not clause:
                raise ConfigError("monotone event clauses must be nonempty")
            for bond in clause:
                check_bond(bond)

    @classmethod
    def parse(cls, obj, d: int) -> "MonotoneEvent":
        """Parse [[bond, ...], ...] with bond = [[x...], [y...]]."""
        if not isinstance(obj, (list, tuple)):
            raise ConfigError("monotone event must be a list of clauses")
        clauses = []
        for clause in obj:
            if not isinstance(clause, (list, tuple)):
                raise ConfigError("each clause must be a list of bonds")
            bonds = []
            for bond in clause:
                if (
                    not isinstance(bond, (list, tuple))
                    or len(bond) != 2
                    or any(len(e) != d for e in bond)
                ):
                    raise ConfigError(f"malformed bond in event spec: {bond!r}")
                bonds.append(
                    OrientedBond(tuple(int(v) for v in bond[0]), tuple(int(v) for v in bond[1]))
                )
            clauses.append(tuple(bonds))
        return cls(tuple(clauses))

    def bonds(self) -> list:
        seen = []
        for clause in self.clauses:
            for bond in clause:
                if bond not in seen:
                    seen.append(bond)
        return seen


def _bond_openness_over_replicas(cfg: FieldConfig, bonds, replicas: int) -> dict:
    """bond -> bool array over replica seeds, vectorized over the seeds."""
    seeds = child_seeds(cfg.seed, replicas)
    return {bond: bond_open_over_seeds(cfg, bond, seeds) for bond in bonds}


@dataclass(frozen=True)
class FkgReport:
    cov: float
    se: float
    mean_u: float
    mean_v: float
    replicas: int


def fkg_check(
    cfg: FieldConfig, u_event: MonotoneEvent, v_event: MonotoneEvent, replicas: int
) -> FkgReport:
    """Empirical covariance of two increasing events with its standard error.

    Positive association predicts Cov >= 0; the caller tests against
    -3 * se to allow for Monte Carlo noise.
    """
    bonds = {b for b in u_event.bonds()} | {b for b in v_event.bonds()}
    opens = _bond_openness_over_replicas(cfg, sorted(bonds), replicas)

    def evaluate(event: MonotoneEvent) -> np.ndarray:
        value = np.zeros(replicas, dtype=bool)
        for clause in event.clauses:
            term = np.ones(replicas, dtype=bool)
            for bond in clause:
                term &= opens[bond]
            value |= term
        return value.astype(float)

    u = evaluate(u_event)
    v = evaluate(v_event)
    mu, mv = float(u.mean()), float(v.mean())
    prod = (u - mu) * (v - mv)
    cov = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    return FkgReport(cov, se, mu, mv, replicas)


def random_monotone_event(
    d: int,
    rng,
    window: int = 2,
    max_clauses: int = 2,
    max_bonds: int = 3,
) -> MonotoneEvent:
    """Random increasing event: an OR of AND-clauses of bonds near the origin."""
    from .lattice import direction_step

    clauses = []
    for _ in range(int(rng.integers(1, max_clauses + 1))):
        bonds = []
        for _ in range(int(rng.integers(1, max_bonds + 1))):
            tail = tuple(int(v) for v in rng.integers(-window, window + 1, size=d))
            j = int(rng.integers(0, 2 * d))
            head = tuple(a + b for a, b in zip(tail, direction_step(d, j)))
            bonds.append(OrientedBond(tail, head))
        clauses.append(tuple(bonds))
    return MonotoneEvent(tuple(clauses))


# -- slab probe ----------------------------------------------------------------


@dataclass(frozen=True)
class SlabReport:
    thickness: int
    extent: int
    heights: tuple
    p_by_height: tuple
    se_by_height: tuple
    min_p: float
    replicas: int


def slab_percolation_probe(
    cfg: FieldConfig,
    thickness: int,
    extent: int,
    replicas: int,
    heights=None,
    jobs: int = 1,
) -> SlabReport:
    """Frequency that slab clusters reach lateral distance extent/2.

    The slab keeps the last coordinate in [0, thickness] and is clipped to
    lateral radius extent/2; "reaches lateral distance extent/2" stands in
    for having an infinite cluster inside the slab.  The minimum over start
    heights is reported, matching the uniform-in-position statement.
    """
    if thickness < 1 or extent < 4:
        raise ConfigError("need thickness >= 1 and extent >= 4")
    d = cfg.d
    half = extent // 2
    if heights is None:
        heights = sorted({0, thickness // 2, thickness})
    heights = [int(h) for h in heights]
    if any(h < 0 or h > thickness for h in heights):
        raise ConfigError("start heights must lie inside the slab")
    radius = max(half, thickness)
    center = (0,) * (d - 1) + (thickness // 2,)
    box = Box(center, radius)
    def one(k: int) -> list:
        field = BoxField(cfg.replica(k), box)
        in_slab = (field.coords[:, -1] >= 0) & (field.coords[:, -1] <= thickness)
        lateral = np.abs(field.coords[:, :-1]).max(axis=1)
        region = in_slab & (lateral <= half)
        row = []
        for h in heights:
            start = field.index_of((0,) * (d - 1) + (h,))
            mask = wave_reach(field, [start], forward=True, region_mask=region)
            row.append(bool(np.any(mask & (lateral >= half))))
        return row

    hits = np.asarray(replica_map(one, replicas, jobs), dtype=bool)
    p = hits.mean(axis=0)
    se = np.sqrt(p * (1 - p) / replicas)
    return SlabReport(
        thickness,
        extent,
        tuple(heights),
        tuple(float(v) for v in p),
        tuple(float(v) for v in se),
        float(p.min()),
        replicas,
    )


# -- neighborhood-radius tail --------------------------------------------------


def kappa_tail_curve(
    cfg: FieldConfig,
    box_radius: int,
    replicas: int,
    n_values,
    c_prime: int = 8,
    grid_spacing: int = 2,
    jobs: int = 1,
) -> list:
    """Survival curves P(radius >= n) of the neighborhood radius.

    Samples sites on a grid deep enough inside the box that radii up to
    max(n_values) - 1 are checkable for every site, so all survival points
    share the same sample count.  Sites with clipped roots are skipped and
    reported via the per-point replica counts.
    """
    n_values = sorted(set(int(n) for n in n_values))
    if n_values[0] < 1:
        raise ConfigError("radius survival needs n >= 1")
    cap = max(1, n_values[-1] - 1)
    margin = box_radius - c_prime * cap
    if margin < 0:
        raise ConfigError(
            "box too small for the requested tail range: need "
            f"radius >= {c_prime * cap}"
        )
    def one(k: int) -> list:
        rcfg = cfg.replica(k)
        bb = backbone(rcfg, box_radius)
        coords = bb.field.coords
        norms = np.abs(coords).max(axis=1)
        step = np.all(coords % grid_spacing == 0, axis=1)
        usable = step & (norms <= margin)
        radii = []
        for idx in np.nonzero(usable)[0]:
            x = bb.field.site_of(int(idx))
            try:
                radii.append(neighborhood_radius(rcfg, x, bb, c_prime, cap=cap))
            except TruncationError:
                continue
        return radii

    counts = {n: 0 for n in n_values}
    hits = {n: 0 for n in n_values}
    for radii in replica_map(one, replicas, jobs):
        for radius in radii:
            for n in n_values:
                counts[n] += 1
                if radius is None or radius >= n:
                    hits[n] += 1
    curves = []
    for n in n_values:
        if counts[n] == 0:
            continue
        p = hits[n] / counts[n]
        se = math.sqrt(p * (1 - p) / counts[n])
        curves.append(SurvivalCurve(cfg.lam, n, "kappa", p, se, counts[n]))
    return curves
