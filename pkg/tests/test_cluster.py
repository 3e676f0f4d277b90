import math

import numpy as np
import pytest

from epishape.cluster import (
    backbone,
    backbone_flip_fraction,
    chemical_distance,
    cluster,
    neighborhood,
    neighborhood_radius,
    neighborhood_weight,
    roots,
    wave_hops,
    wave_reach,
)
from epishape.epidemic import neighborhood_passage_time
from epishape.errors import ConfigError, TruncationError
from epishape.field import BoxField, FieldConfig, RecoveryDist, edge_clock
from epishape.lattice import (
    AllRegion,
    Box,
    BoxRegion,
    OrientedBond,
    box_boundary,
    l1_dist,
    linf_dist,
    origin,
)
from oracles import brute_backbone_member, brute_kappa, brute_roots, hops_within

FULLY_OPEN = FieldConfig(2, 100.0, RecoveryDist.constant(1e6), seed=3)
ALL_CLOSED = FieldConfig(2, 1e-9, RecoveryDist.constant(1e-6), seed=3)
SUP2 = FieldConfig(2, 3.0, RecoveryDist.exponential(1.0), seed=17)


def _sub2(seed):
    return FieldConfig(2, 0.9, RecoveryDist.exponential(1.0), seed=seed)


# -- cluster / chemical distance ------------------------------------------------


def test_cluster_fully_open_is_whole_box():
    box = Box(origin(2), 3)
    rep = cluster(FULLY_OPEN, origin(2), "out", BoxRegion(box))
    assert rep.sites == set(box.sites())
    for y, h in rep.hops.items():
        assert h == l1_dist(origin(2), y)
    assert rep.touched_boundary  # open bonds leave the box


def test_cluster_all_closed_is_singleton():
    rep = cluster(ALL_CLOSED, origin(2), "out", BoxRegion(Box(origin(2), 3)))
    assert rep.hops == {origin(2): 0}
    assert not rep.touched_boundary


@pytest.mark.parametrize("seed", range(50))
@pytest.mark.parametrize("direction", ["out", "in"])
def test_cluster_hops_match_floyd_warshall(seed, direction):
    cfg = _sub2(seed)
    box = Box(origin(2), 2)
    region_sites = list(box.sites())
    rep = cluster(cfg, origin(2), direction, BoxRegion(box))
    oracle = hops_within(cfg, region_sites)
    o = origin(2)
    for y in region_sites:
        want = oracle[(o, y)] if direction == "out" else oracle[(y, o)]
        if math.isinf(want):
            assert y not in rep.hops
        else:
            assert rep.hops.get(y) == int(want), (y, want)


@pytest.mark.parametrize("seed", range(25))
def test_chemical_distance_matches_floyd_warshall(seed):
    cfg = _sub2(1000 + seed)
    box = Box(origin(2), 2)
    region_sites = list(box.sites())
    # endpoint one step outside the region exercises the within-semantics
    target_out = (3, 0)
    oracle = hops_within(cfg, region_sites, extra_targets=[target_out])
    region = BoxRegion(box)
    for y in list(box.sites()) + [target_out]:
        got = chemical_distance(cfg, origin(2), y, region)
        assert got == oracle[(origin(2), y)]


def test_chemical_distance_trivials():
    region = BoxRegion(Box(origin(2), 3))
    assert chemical_distance(FULLY_OPEN, (1, 1), (1, 1), region) == 0.0
    assert chemical_distance(FULLY_OPEN, (0, 0), (2, -1), region) == 3.0
    assert math.isinf(chemical_distance(ALL_CLOSED, (0, 0), (1, 0), region))


def test_cluster_monotone_in_region():
    for seed in range(10):
        cfg = _sub2(seed)
        small = cluster(cfg, origin(2), "out", BoxRegion(Box(origin(2), 2))).sites
        large = cluster(cfg, origin(2), "out", BoxRegion(Box(origin(2), 4))).sites
        assert small <= large


def test_cluster_requires_budget_on_unbounded_region():
    with pytest.raises(ConfigError):
        cluster(SUP2, origin(2), "out", AllRegion())
    rep = cluster(SUP2, origin(2), "out", AllRegion(), hop_budget=2)
    assert all(h <= 2 for h in rep.hops.values())


def test_cluster_in_direction_root_outside_region():
    # the target endpoint may sit outside the region: who infects (3, 0)
    # through the box?
    box = Box(origin(2), 2)
    rep = cluster(FULLY_OPEN, (3, 0), "in", BoxRegion(box))
    assert rep.sites == set(box.sites())
    assert rep.hops[(2, 0)] == 1
    assert (3, 0) not in rep.hops


# -- backbone ---------------------------------------------------------------------


def test_backbone_fully_open_and_closed():
    bb = backbone(FULLY_OPEN, 4)
    assert bb.members == set(Box(origin(2), 4).sites())
    assert backbone(ALL_CLOSED, 4).members == frozenset()


@pytest.mark.parametrize("seed", range(30))
def test_backbone_matches_per_site_oracle(seed):
    cfg = FieldConfig(2, 1.6, RecoveryDist.exponential(1.0), seed=seed)
    box = Box(origin(2), 4)
    bb = backbone(cfg, 4)
    for x in box.sites():
        assert bb.contains(x) == brute_backbone_member(cfg, x, box), x


def test_backbone_flip_fraction_runs():
    frac = backbone_flip_fraction(SUP2, 6)
    assert 0.0 <= frac <= 1.0


# -- roots -------------------------------------------------------------------------


def test_roots_fully_open_empty():
    bb = backbone(FULLY_OPEN, 4)
    rp = roots(FULLY_OPEN, (1, 1), bb)
    assert rp.outgoing == frozenset() and rp.incoming == frozenset()
    assert not rp.truncated


def test_roots_all_closed_singleton():
    bb = backbone(ALL_CLOSED, 4)
    rp = roots(ALL_CLOSED, (1, 1), bb)
    assert rp.outgoing == frozenset({(1, 1)})
    assert rp.incoming == frozenset({(1, 1)})


@pytest.mark.parametrize("seed", range(50))
def test_roots_match_brute_force(seed):
    cfg = FieldConfig(2, 1.8, RecoveryDist.exponential(1.0), seed=2000 + seed)
    box = Box(origin(2), 6)
    bb = backbone(cfg, 6)
    for x in [(0, 0), (2, -1), (-3, 3)]:
        rp = roots(cfg, x, bb)
        want_out, want_in = brute_roots(cfg, x, set(bb.members), box)
        assert rp.outgoing == frozenset(want_out)
        assert rp.incoming == frozenset(want_in)


def test_roots_membership_characterization():
    # x belongs to both root sets exactly when it is not a backbone member
    for seed in range(20):
        cfg = FieldConfig(2, 2.2, RecoveryDist.exponential(1.0), seed=seed)
        bb = backbone(cfg, 5)
        for x in [(0, 0), (1, 2)]:
            rp = roots(cfg, x, bb)
            if bb.contains(x):
                assert x not in rp.outgoing and x not in rp.incoming
            else:
                assert x in rp.outgoing and x in rp.incoming


# -- neighborhood -------------------------------------------------------------------


def test_neighborhood_fully_open():
    bb = backbone(FULLY_OPEN, 6)
    nb = neighborhood(FULLY_OPEN, origin(2), bb, c_prime=2)
    assert nb.radius == 1
    assert nb.core == frozenset(Box(origin(2), 1).sites())


@pytest.mark.parametrize("seed", range(50))
def test_neighborhood_matches_brute_force(seed):
    cfg = FieldConfig(2, 2.5, RecoveryDist.exponential(1.0), seed=3000 + seed)
    box = Box(origin(2), 6)
    bb = backbone(cfg, 6)
    for x in [(0, 0), (1, 1)]:
        want = brute_kappa(cfg, x, set(bb.members), box, c_prime=3)
        try:
            nb = neighborhood(cfg, x, bb, c_prime=3)
            got = (nb.radius, set(nb.core))
        except TruncationError:
            got = None
        assert got == want, (x, got, want)


def test_neighborhood_radius_censoring_consistent():
    cfg = SUP2
    bb = backbone(cfg, 10)
    full = neighborhood_radius(cfg, origin(2), bb, c_prime=3)
    capped = neighborhood_radius(cfg, origin(2), bb, c_prime=3, cap=1)
    if full == 1:
        assert capped == 1
    else:
        assert capped is None


def test_roots_inside_neighborhood_box():
    # sphere condition forces every root within the neighborhood radius
    for seed in range(20):
        cfg = FieldConfig(2, 2.5, RecoveryDist.exponential(1.0), seed=4000 + seed)
        bb = backbone(cfg, 8)
        x = (1, 0)
        rp = roots(cfg, x, bb)
        try:
            nb = neighborhood(cfg, x, bb, c_prime=3)
        except TruncationError:
            continue
        for y in rp.outgoing | rp.incoming:
            assert linf_dist(y, x) <= nb.radius


def test_neighborhood_weight_matches_resummation():
    bb = backbone(SUP2, 8)
    nb = neighborhood(SUP2, origin(2), bb, c_prime=3)
    want = 0.0
    for bond in sorted(nb.bonds):
        want += edge_clock(SUP2, OrientedBond(*bond))
    assert neighborhood_weight(SUP2, nb) == want
    assert want > 0.0


def test_neighborhood_weight_empty_bonds_zero():
    from epishape.cluster import Neighborhood

    nb = Neighborhood((0, 0), 1, frozenset({(1, 1)}), frozenset())
    assert neighborhood_weight(SUP2, nb) == 0.0


def test_neighborhood_bonds_inside_blown_up_box():
    bb = backbone(SUP2, 10)
    nb = neighborhood(SUP2, (0, 0), bb, c_prime=3)
    for a, b in nb.bonds:
        assert linf_dist(a, (0, 0)) <= 3 * nb.radius
        assert linf_dist(b, (0, 0)) <= 3 * nb.radius


def test_truncation_when_box_too_small():
    cfg = ALL_CLOSED
    bb = backbone(cfg, 4)
    with pytest.raises(TruncationError):
        neighborhood(cfg, origin(2), bb, c_prime=3)


# -- conditional chemical-distance tail ----------------------------------------


def test_conditional_distance_tail_decreasing():
    # P(D >= c*l1 + n^d | connected) is a survival function evaluated at
    # increasing thresholds, so it must be non-increasing; report the decay.
    cfg_base = FieldConfig(2, 1.5, RecoveryDist.exponential(1.0), seed=77)
    x, y = origin(2), (3, 2)
    samples = []
    region = BoxRegion(Box(origin(2), 6))
    for k in range(400):
        d = chemical_distance(cfg_base.replica(k), x, y, region)
        if math.isfinite(d):
            samples.append(d)
    assert len(samples) > 50
    samples = np.asarray(samples)
    c2 = 1.0
    tail = [(samples >= c2 * l1_dist(x, y) + n**2).mean() for n in range(4)]
    assert all(a >= b for a, b in zip(tail, tail[1:]))


# -- wave engine sanity -----------------------------------------------------------


def test_wave_hops_match_cluster_hops():
    cfg = _sub2(5)
    box = Box(origin(2), 3)
    field = BoxField(cfg, box)
    hops = wave_hops(field, [field.index_of(origin(2))], forward=True)
    rep = cluster(cfg, origin(2), "out", BoxRegion(box))
    for y in box.sites():
        h = hops[field.index_of(y)]
        assert rep.hops.get(y, -1) == h if h >= 0 else y not in rep.hops


def test_wave_reach_one_bond_semantics():
    field = BoxField(ALL_CLOSED, Box(origin(2), 2))
    bdry = np.nonzero(field.boundary_mask)[0]
    reached = wave_reach(field, bdry, forward=True, include_start=False)
    assert not reached.any()


def test_root_radius_tail_fit():
    # log-survival of the root radius decays linearly at a supercritical rate
    from epishape.stats import tail_fit

    cfg0 = FieldConfig(2, 2.5, RecoveryDist.exponential(1.0), seed=321)
    radii = []
    for k in range(300):
        cfg = cfg0.replica(k)
        bb = backbone(cfg, 10)
        for x in [(0, 0), (3, -2)]:
            rp = roots(cfg, x, bb)
            if rp.truncated:
                continue
            sites = rp.outgoing | rp.incoming
            radii.append(max((linf_dist(y, x) for y in sites), default=-1))
    radii = np.asarray(radii)
    ns = np.arange(0, 5)
    surv = [(radii >= n).mean() for n in ns]
    assert all(a >= b for a, b in zip(surv, surv[1:]))
    fit = tail_fit(ns + 1, surv, model="exp_n")  # shift keeps support positive
    assert fit.rate > 0
    assert fit.r2 >= 0.9
    print(f"\nroot-radius tail: survival={np.round(surv, 4).tolist()} "
          f"rate={fit.rate:.3f} r2={fit.r2:.3f}")
