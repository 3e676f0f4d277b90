"""Graph searches over the open-bond digraph.

Directed clusters inside or outside a region, hop-count (chemical) distances,
the finite-volume backbone of doubly boundary-connected sites, root sets that
avoid the backbone, and the neighborhood machinery (radius, core sites, bond
set) used to regularize passage times.

Path semantics follow two conventions used throughout:

* "within A": every path site except the final endpoint lies in A, so a
  search may step out of A only on its last bond.
* "outside A": every path site, endpoints included, avoids A.

The backbone of a box is the set of sites connected to the box boundary both
ways by open paths of at least one bond; the one-bond requirement makes the
all-closed field give an empty backbone instead of the bare boundary.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import ConfigError, TruncationError
from .field import BoxField, FieldConfig, is_open, unit_clocks_at
from .lattice import (
    Box,
    OrientedBond,
    Site,
    bond_direction,
    linf_dist,
    neighbors,
    origin,
    region_is_bounded,
)

# -- vectorized wave traversals over a BoxField -------------------------------


def wave_reach(
    field: BoxField,
    start: np.ndarray,
    *,
    lam: float | None = None,
    forward: bool = True,
    region_mask: np.ndarray | None = None,
    include_start: bool = True,
    targets_mask: np.ndarray | None = None,
    stop_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Sites reachable from `start` along open bonds, as a bool mask.

    With include_start=False a start site is reported only if re-reached
    through at least one bond.  `region_mask` constrains every visited site
    (starts are expanded regardless; callers pre-filter them if needed).
    Traversal follows bond orientation when forward, reversed otherwise.
    If `targets_mask` is given the sweep stops early once all targets are
    reached; if `stop_mask` is given it stops once any of those sites is
    reached.
    """
    open_mat = field.open_out(lam)
    nbr = field.nbr
    n = field.n_sites
    reached = np.zeros(n, dtype=bool)
    expanded = np.zeros(n, dtype=bool)
    frontier = np.asarray(start, dtype=np.int64)
    if include_start:
        reached[frontier] = True
    pending = None
    if targets_mask is not None:
        pending = int(np.count_nonzero(targets_mask & ~reached))
        if pending == 0:
            return reached
    while frontier.size:
        expanded[frontier] = True
        hits = []
        for j in range(open_mat.shape[1]):
            targets = nbr[frontier, j]
            if forward:
                ok = open_mat[frontier, j] & (targets >= 0)
            else:
                ok = targets >= 0
                tv = targets[ok]
                ok[ok] = open_mat[tv, j ^ 1]
            hit = targets[ok]
            if hit.size:
                hits.append(hit)
        if not hits:
            break
        cand = np.concatenate(hits)
        cand = cand[~reached[cand]]
        if region_mask is not None:
            cand = cand[region_mask[cand]]
        if cand.size == 0:
            break
        reached[cand] = True
        if stop_mask is not None and bool(np.any(stop_mask[cand])):
            break
        if pending is not None:
            pending = int(np.count_nonzero(targets_mask & ~reached))
            if pending == 0:
                break
        frontier = np.unique(cand[~expanded[cand]])
    return reached


def wave_hops(
    field: BoxField,
    start: np.ndarray,
    *,
    lam: float | None = None,
    forward: bool = True,
    region_mask: np.ndarray | None = None,
    stop_index: int | None = None,
) -> np.ndarray:
    """Minimal bond counts from `start` (multi-source), -1 where unreached.

    If `stop_index` is given the sweep finishes the wave on which that site
    is reached and then stops; all hop values not exceeding that distance are
    final at that point.
    """
    nbr = field.nbr
    open_mat = field.open_out(lam)
    hops = np.full(field.n_sites, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(start, dtype=np.int64))
    hops[frontier] = 0
    level = 0
    while frontier.size:
        if stop_index is not None and hops[stop_index] >= 0:
            break
        level += 1
        hits = []
        for j in range(open_mat.shape[1]):
            targets = nbr[frontier, j]
            if forward:
                ok = open_mat[frontier, j] & (targets >= 0)
            else:
                ok = targets >= 0
                tv = targets[ok]
                ok[ok] = open_mat[tv, j ^ 1]
            hit = targets[ok]
            if hit.size:
                hits.append(hit)
        if not hits:
            break
        cand = np.concatenate(hits)
        cand = cand[hops[cand] < 0]
        if region_mask is not None:
            cand = cand[region_mask[cand]]
        if cand.size == 0:
            break
        cand = np.unique(cand)
        hops[cand] = level
        frontier = cand
    return hops


# -- general-region cluster API (scalar, lazily sampled) ----------------------


@dataclass(frozen=True)
class ClusterReport:
    """Directed cluster of `root` inside `region`.

    `hops` maps each member to its minimal bond count from the root (toward
    the root for direction "in").  Members always lie inside the region;
    `touched_boundary` records that some open bond led out of it, i.e. the
    cluster has endpoints just past the region in the traversal direction.
    """

    root: Site
    direction: str
    region: object
    hops: dict
    touched_boundary: bool

    @property
    def sites(self) -> set:
        return set(self.hops)


def cluster(
    cfg: FieldConfig,
    x: Site,
    direction: str,
    region,
    hop_budget: int | None = None,
) -> ClusterReport:
    """BFS cluster of x over open bonds, constrained to `region`.

    direction "out" follows bonds forward (who x infects), "in" follows them
    reversed (who infects x).  For "in" the root itself may sit outside the
    region, since it is the unconstrained endpoint of every path.
    """
    if direction not in ("out", "in"):
        raise ConfigError(f"direction must be 'out' or 'in', got {direction!r}")
    if hop_budget is not None and hop_budget < 0:
        raise ConfigError("hop_budget must be >= 0")
    if hop_budget is None and not region_is_bounded(region):
        raise ConfigError("unbounded region requires a hop_budget")
    hops: dict = {}
    touched = False
    root_in = region.contains(x)
    if direction == "out" and not root_in:
        return ClusterReport(x, direction, region, hops, False)
    if root_in:
        hops[x] = 0
    seen = {x}
    queue = deque([(x, 0)])
    while queue:
        s, h = queue.popleft()
        if hop_budget is not None and h >= hop_budget:
            continue
        if s != x and not region.contains(s):
            continue
        for t in neighbors(s):
            if t in seen:
                continue
            bond = OrientedBond(s, t) if direction == "out" else OrientedBond(t, s)
            if not is_open(cfg, bond):
                continue
            seen.add(t)
            if region.contains(t):
                hops[t] = h + 1
                queue.append((t, h + 1))
            else:
                touched = True
    return ClusterReport(x, direction, region, hops, touched)


def chemical_distance(cfg: FieldConfig, x: Site, y: Site, region) -> float:
    """Minimal number of open bonds on a path x -> y within `region`.

    The endpoint y may lie outside the region.  Returns math.inf when y is
    unreachable; that is a value, not an error.
    """
    if x == y:
        return 0.0
    if not region_is_bounded(region):
        raise ConfigError("chemical_distance requires a bounded region")
    if not region.contains(x):
        return float("inf")
    seen = {x}
    queue = deque([(x, 0)])
    while queue:
        s, h = queue.popleft()
        if s != x and not region.contains(s):
            continue
        for t in neighbors(s):
            if t in seen:
                continue
            if not is_open(cfg, OrientedBond(s, t)):
                continue
            if t == y:
                return float(h + 1)
            seen.add(t)
            if region.contains(t):
                queue.append((t, h + 1))
    return float("inf")


# -- backbone, roots, neighborhoods -------------------------------------------


@dataclass
class Backbone:
    """Finite-volume stand-in for the doubly infinite core.

    Members are the box sites joined to the box boundary by open paths of at
    least one bond in both directions.
    """

    box: Box
    member_mask: np.ndarray
    field: BoxField

    @cached_property
    def members(self) -> frozenset:
        idx = np.nonzero(self.member_mask)[0]
        return frozenset(self.field.site_of(int(i)) for i in idx)

    def contains(self, site: Site) -> bool:
        if not self.box.contains(site):
            return False
        return bool(self.member_mask[self.field.index_of(site)])


def backbone(cfg: FieldConfig, radius: int, field: BoxField | None = None) -> Backbone:
    """Two-sweep construction of the doubly boundary-connected site set."""
    if radius < 2:
        raise ConfigError(f"backbone radius must be >= 2, got {radius}")
    if field is None:
        field = BoxField(cfg, Box(origin(cfg.d), radius))
    elif field.box.radius != radius:
        raise ConfigError("field box radius does not match requested radius")
    bdry = np.nonzero(field.boundary_mask)[0]
    reaches_bdry = wave_reach(field, bdry, forward=False, include_start=False)
    reached_from_bdry = wave_reach(field, bdry, forward=True, include_start=False)
    return Backbone(field.box, reaches_bdry & reached_from_bdry, field)


def backbone_flip_fraction(cfg: FieldConfig, radius: int, probe_radius: int | None = None) -> float:
    """Fraction of probe-box sites whose backbone membership differs at 2x radius.

    Convergence diagnostic for the finite-volume construction; neither
    inclusion between the two member sets holds in general.
    """
    probe = radius // 2 if probe_radius is None else probe_radius
    if probe > radius - 1:
        raise ConfigError("probe radius must fit inside the smaller box")
    small = backbone(cfg, radius)
    big = backbone(cfg, 2 * radius)
    flips = 0
    total = 0
    for site in Box(origin(cfg.d), probe).sites():
        total += 1
        if small.contains(site) != big.contains(site):
            flips += 1
    return flips / total


@dataclass(frozen=True)
class RootPair:
    """Sites reachable from / reaching x by open paths avoiding the backbone.

    x itself belongs to both sets exactly when it is not a backbone member.
    `truncated` warns that a root touched the box boundary, so the sets may
    be clipped; the caller should enlarge the box.
    """

    x: Site
    outgoing: frozenset
    incoming: frozenset
    truncated: bool


def _flood_indices(
    field: BoxField, start: int, allowed: np.ndarray, forward: bool
) -> set:
    """Local depth-first flood over open bonds; start must satisfy `allowed`.

    Plain Python on array lookups: cheap when the flooded set is small,
    which is the regime these sets live in away from criticality.
    """
    nbr = field.nbr
    open_mat = field.open_out()
    seen = {start}
    stack = [start]
    twod = open_mat.shape[1]
    while stack:
        c = stack.pop()
        for j in range(twod):
            t = int(nbr[c, j])
            if t < 0 or t in seen or not allowed[t]:
                continue
            ok = bool(open_mat[c, j]) if forward else bool(open_mat[t, j ^ 1])
            if ok:
                seen.add(t)
                stack.append(t)
    return seen


def roots(cfg: FieldConfig, x: Site, bb: Backbone) -> RootPair:
    if linf_dist(x, bb.box.center) > bb.box.radius - 1:
        raise ConfigError("root site must lie strictly inside the backbone box")
    if bb.contains(x):
        return RootPair(x, frozenset(), frozenset(), False)
    fld = bb.field
    comp = ~bb.member_mask
    xi = fld.index_of(x)
    out_idx = _flood_indices(fld, xi, comp, forward=True)
    in_idx = _flood_indices(fld, xi, comp, forward=False)
    bdry = fld.boundary_mask
    truncated = any(bool(bdry[i]) for i in out_idx) or any(
        bool(bdry[i]) for i in in_idx
    )
    to_sites = lambda idx: frozenset(fld.site_of(i) for i in idx)
    return RootPair(x, to_sites(out_idx), to_sites(in_idx), truncated)


@dataclass(frozen=True)
class Neighborhood:
    """Regularizing neighborhood of x.

    `radius` is the smallest l such that (i) no root of x sits on the sphere
    of radius l, (ii) the box of radius l meets the backbone, and (iii) all
    backbone sites in that box are mutually joined by open paths inside the
    box blown up by `c_prime`.  `core` is the backbone intersection, `bonds`
    the open bonds inside the radius-l box together with the bonds of the
    chosen connecting paths.
    """

    x: Site
    radius: int
    core: frozenset
    bonds: frozenset


def _linf_from(field: BoxField, x: Site) -> np.ndarray:
    return np.abs(field.coords - np.asarray(x, dtype=np.int64)).max(axis=1)


def _mutually_connected(
    field: BoxField, core_idx: np.ndarray, subbox_mask: np.ndarray
) -> bool:
    """All ordered core pairs joined by open paths inside the sub-box.

    Equivalent to the core lying in one strongly connected class of the
    digraph restricted to the sub-box: it suffices that the lexicographically
    first core site reaches and is reached by every other one in there.
    """
    pivot = int(core_idx.min())
    targets = np.zeros(field.n_sites, dtype=bool)
    targets[core_idx] = True
    fwd = wave_reach(
        field, [pivot], forward=True, region_mask=subbox_mask, targets_mask=targets
    )
    if not bool(np.all(fwd[core_idx])):
        return False
    bwd = wave_reach(
        field, [pivot], forward=False, region_mask=subbox_mask, targets_mask=targets
    )
    return bool(np.all(bwd[core_idx]))


def neighborhood_radius(
    cfg: FieldConfig,
    x: Site,
    bb: Backbone,
    c_prime: int = 8,
    cap: int | None = None,
) -> int | None:
    """Smallest admissible radius, or None if none up to the cap.

    The cap defaults to the largest l whose blown-up box still fits inside
    the backbone box; passing a smaller cap censors the search, which is all
    tail statistics need.  Raises TruncationError when the roots of x are
    clipped or when not even l = 1 fits.
    """
    if c_prime < 2:
        raise ConfigError(f"c_prime must be >= 2, got {c_prime}")
    rp = roots(cfg, x, bb)
    if rp.truncated:
        raise TruncationError(f"roots of {x} reach the box boundary; enlarge the box")
    l_max = (bb.box.radius - linf_dist(x, bb.box.center)) // c_prime
    if cap is not None:
        l_max = min(l_max, cap)
    if l_max < 1:
        raise TruncationError(f"no admissible radius fits at {x}; enlarge the box")
    root_dists = {linf_dist(y, x) for y in rp.outgoing | rp.incoming}
    dist_x = _linf_from(bb.field, x)
    for l in range(1, l_max + 1):
        if l in root_dists:
            continue
        core_idx = np.nonzero(bb.member_mask & (dist_x <= l))[0]
        if core_idx.size == 0:
            continue
        if _mutually_connected(bb.field, core_idx, dist_x <= c_prime * l):
            return l
    return None


def neighborhood(
    cfg: FieldConfig,
    x: Site,
    bb: Backbone,
    c_prime: int = 8,
    with_bonds: bool = True,
) -> Neighborhood:
    """Full neighborhood of x: radius, core sites, and bond set.

    The bond set only matters for weight computations; callers that just
    need the core (set-to-set passage times) can skip its construction with
    with_bonds=False and get an empty bond set.
    """
    l = neighborhood_radius(cfg, x, bb, c_prime)
    if l is None:
        raise TruncationError(f"no admissible radius at {x} fits the box; enlarge it")
    fld = bb.field
    dist_x = _linf_from(fld, x)
    core_idx = np.nonzero(bb.member_mask & (dist_x <= l))[0]
    core = frozenset(fld.site_of(int(i)) for i in core_idx)
    if not with_bonds:
        return Neighborhood(x, l, core, frozenset())

    bonds: set = set()
    open_mat = fld.open_out()
    inner = dist_x <= l
    inner_idx = np.nonzero(inner)[0]
    for j in range(2 * cfg.d):
        tails = inner_idx[open_mat[inner_idx, j]]
        heads = fld.nbr[tails, j]
        ok = heads >= 0
        tails, heads = tails[ok], heads[ok]
        ok = inner[heads]
        for a, b in zip(tails[ok], heads[ok]):
            bonds.add((fld.site_of(int(a)), fld.site_of(int(b))))

    subbox = dist_x <= c_prime * l
    core_list = [int(i) for i in core_idx]
    for z in core_list:
        hz = wave_hops(fld, [z], forward=False, region_mask=subbox)
        for y in core_list:
            if y == z:
                continue
            cur = y
            while cur != z:
                nxt = -1
                for j in range(2 * cfg.d):
                    t = fld.nbr[cur, j]
                    if (
                        t >= 0
                        and open_mat[cur, j]
                        and subbox[t]
                        and hz[t] == hz[cur] - 1
                        and (nxt < 0 or t < nxt)
                    ):
                        nxt = int(t)
                if nxt < 0:
                    raise TruncationError(
                        f"connecting path between core sites of {x} broke; "
                        "this indicates an inconsistent backbone"
                    )
                bonds.add((fld.site_of(cur), fld.site_of(nxt)))
                cur = nxt
    return Neighborhood(x, l, core, frozenset(bonds))


def neighborhood_weight(cfg: FieldConfig, nb: Neighborhood) -> float:
    """Total clock budget of the neighborhood: sum of bond passage times.

    Zero for an empty bond set.  Bonds are summed in sorted order so the
    floating-point result is reproducible.
    """
    if not nb.bonds:
        return 0.0
    bonds = sorted(nb.bonds)
    coords = np.asarray([b[0] for b in bonds], dtype=np.int64)
    dirs = np.asarray([bond_direction(OrientedBond(*b)) for b in bonds], dtype=np.int64)
    clocks = unit_clocks_at(cfg, coords, dirs) / cfg.lam
    total = 0.0
    for v in clocks:
        total += float(v)
    return total
