"""Event-free epidemic dynamics via first-passage times on the open digraph.

A site y becomes infected at the minimum over open in-bonds (x, y) of
infection_time[x] + clock(x, y), which is exactly the single-source shortest
path distance from the origin.  The literal germ-scheduling simulation is
equivalent and only used as an independent oracle in the test suite; the
production path runs Dijkstra over the sampled box.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .cluster import Backbone, Neighborhood, neighborhood
from .errors import ConfigError, TruncationError
from .field import BoxField, FieldConfig, is_open, unit_clock
from .lattice import Box, OrientedBond, Site, neighbors, origin, region_is_bounded

INF = math.inf


@dataclass(frozen=True)
class StateSnapshot:
    """Immune / infected partition of the ever-infected set at time t."""

    t: float
    immune: frozenset
    infected: frozenset


class EpidemicTrajectory:
    """Per-site infection and recovery times of one epidemic in a box.

    Infection starts at the origin at time zero; sites outside the box never
    infect (absorbing boundary).  Times beyond the horizon are reported as
    infinity.  `touched_boundary` flags that the infection reached the box
    boundary before the horizon, in which case growth statistics drawn from
    this replica are biased by the clipping.
    """

    def __init__(
        self,
        cfg: FieldConfig,
        box: Box,
        horizon: float,
        field: BoxField,
        infection: np.ndarray,
        recovery: np.ndarray,
    ):
        self.cfg = cfg
        self.box = box
        self.horizon = horizon
        self.field = field
        self.infection = infection
        self.recovery = recovery
        self.touched_boundary = bool(
            np.any(infection[field.boundary_mask] <= horizon)
        )

    def infection_time(self, site: Site) -> float:
        return float(self.infection[self.field.index_of(site)])

    def recovery_time(self, site: Site) -> float:
        return float(self.recovery[self.field.index_of(site)])

    @cached_property
    def infection_times(self) -> dict:
        """Site -> infection time map (finite entries only)."""
        idx = np.nonzero(np.isfinite(self.infection))[0]
        return {self.field.site_of(int(i)): float(self.infection[i]) for i in idx}

    def ever_infected_mask(self) -> np.ndarray:
        return np.isfinite(self.infection)

    def sublevel_mask(self, t: float) -> np.ndarray:
        """Sites infected by time t (immune or still infected)."""
        return self.infection <= t

    def snapshot(self, t: float) -> StateSnapshot:
        if t > self.horizon:
            raise ConfigError(f"snapshot time {t} beyond horizon {self.horizon}")
        hit = self.infection <= t
        rec = self.recovery <= t
        immune = {self.field.site_of(int(i)) for i in np.nonzero(hit & rec)[0]}
        infected = {self.field.site_of(int(i)) for i in np.nonzero(hit & ~rec)[0]}
        return StateSnapshot(t, frozenset(immune), frozenset(infected))

    def to_rows(self):
        """(coords..., infection, recovery) per site, lexicographic order."""
        for i in range(self.field.n_sites):
            yield (
                *self.field.site_of(i),
                float(self.infection[i]),
                float(self.recovery[i]),
            )


def run_epidemic(
    cfg: FieldConfig, box: Box, horizon: float, field: BoxField | None = None
) -> EpidemicTrajectory:
    """Earliest-infection computation from the origin, clipped to box and horizon."""
    if not horizon > 0:
        raise ConfigError(f"horizon must be > 0, got {horizon}")
    o = origin(cfg.d)
    if not box.contains_strictly(o):
        raise ConfigError("the origin must lie in the box interior")
    if field is None:
        field = BoxField(cfg, box)
    graph = field.open_digraph()
    dist = dijkstra(graph, directed=True, indices=field.index_of(o))
    infection = np.where(dist <= horizon, dist, INF)
    recovery = infection + field.T
    return EpidemicTrajectory(cfg, box, horizon, field, infection, recovery)


def passage_time(cfg: FieldConfig, x: Site, y: Site, region) -> float:
    """Infimum of clock sums over open paths x -> y with interior in `region`.

    Zero when x == y, infinity when unreachable.  Lazily samples the field,
    so the region must be bounded.
    """
    if x == y:
        return 0.0
    if not region_is_bounded(region):
        raise ConfigError("passage_time requires a bounded region")
    if not region.contains(x):
        return INF
    dist = {x: 0.0}
    done = set()
    heap = [(0.0, x)]
    while heap:
        t, s = heapq.heappop(heap)
        if s == y:
            return t
        if s in done or t > dist.get(s, INF):
            continue
        done.add(s)
        if s != x and not region.contains(s):
            continue
        for v in neighbors(s):
            if v in done:
                continue
            bond = OrientedBond(s, v)
            if not is_open(cfg, bond):
                continue
            cand = t + unit_clock(cfg, bond) / cfg.lam
            if cand < dist.get(v, INF):
                dist[v] = cand
                heapq.heappush(heap, (cand, v))
    return INF


def neighborhood_passage_time(
    cfg: FieldConfig,
    x: Site,
    y: Site,
    bb: Backbone,
    c_prime: int = 8,
    nx: Neighborhood | None = None,
    ny: Neighborhood | None = None,
) -> float:
    """Minimal passage time from the core of x to the core of y.

    Zero whenever the two cores intersect.  Truncation of either
    neighborhood propagates as TruncationError.
    """
    if nx is None:
        nx = neighborhood(cfg, x, bb, c_prime)
    if ny is None:
        ny = neighborhood(cfg, y, bb, c_prime)
    if nx.core & ny.core:
        return 0.0
    fld = bb.field
    sources = [fld.index_of(s) for s in sorted(nx.core)]
    targets = np.asarray([fld.index_of(s) for s in sorted(ny.core)])
    dist = dijkstra(
        fld.open_digraph(), directed=True, indices=sources, min_only=True
    )
    return float(dist[targets].min())


def passage_times_from_origin(
    cfg: FieldConfig, box: Box, field: BoxField | None = None
) -> np.ndarray:
    """Vector of passage times from the origin to every box site."""
    if field is None:
        field = BoxField(cfg, box)
    o = field.index_of(origin(cfg.d))
    return dijkstra(field.open_digraph(), directed=True, indices=o)
