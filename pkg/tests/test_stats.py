import math

import numpy as np
import pytest

from epishape.errors import ConfigError, EstimationError
from epishape.field import BoxField, FieldConfig, RecoveryDist
from epishape.lattice import Box, OrientedBond, origin
from epishape.cluster import wave_reach
from epishape.stats import (
    MonotoneEvent,
    estimate_lambda_c,
    fkg_check,
    kappa_tail_curve,
    random_monotone_event,
    slab_percolation_probe,
    survival_curve_family,
    survival_indicators,
    survival_probability,
    tail_fit,
)
from oracles import quad_open_probability

EXP2 = FieldConfig(2, 1.0, RecoveryDist.exponential(1.0), seed=31)


# -- survival ---------------------------------------------------------------------


def test_survival_near_zero_rate():
    cfg = FieldConfig(3, 1e-6, RecoveryDist.exponential(1.0), seed=1)
    curve = survival_probability(cfg, 5, "out", 1000)
    assert curve.p_hat == 0.0


def test_survival_dense_field():
    # open probability 0.99 per bond: the boundary is reached essentially always
    lam = -math.log(1 - 0.99)  # constant T = 1
    cfg = FieldConfig(3, lam, RecoveryDist.constant(1.0), seed=2)
    curve = survival_probability(cfg, 5, "out", 200)
    assert curve.p_hat > 0.9


def test_survival_monotone_in_radius():
    ind = survival_indicators(EXP2, [2, 3, 4, 5], "out", 300)
    p = ind.mean(axis=0)
    assert all(a >= b for a, b in zip(p, p[1:]))
    # per replica the events are nested exactly
    assert not np.any(ind[:, 1:] & ~ind[:, :-1])


def test_survival_replica_floor():
    with pytest.raises(ConfigError):
        survival_probability(EXP2, 3, "out", 50)


def test_survival_monotone_in_lambda_per_seed():
    for lam_lo, lam_hi in [(0.4, 0.8), (0.8, 1.6)]:
        lo = survival_indicators(EXP2.with_lambda(lam_lo), [3], "out", 200)
        hi = survival_indicators(EXP2.with_lambda(lam_hi), [3], "out", 200)
        assert not np.any(lo & ~hi)


def test_out_in_symmetry_constant_recovery():
    # constant T makes bonds independent; the reversed field has the same law
    cfg = FieldConfig(2, 1.1, RecoveryDist.constant(1.0), seed=9)
    out = survival_curve_family(cfg, [2, 3, 4, 5], "out", 600)
    inn = survival_curve_family(cfg, [2, 3, 4, 5], "in", 600)
    for a, b in zip(out, inn):
        se = math.hypot(a.se, b.se)
        assert abs(a.p_hat - b.p_hat) <= 3 * max(se, 1e-9)


# -- lambda_c ---------------------------------------------------------------------


def test_lambda_c_bracket_properties():
    br = estimate_lambda_c(EXP2, n=4, tol=0.1, replicas=150)
    assert br.hi - br.lo <= 0.1 + 1e-12
    assert br.p_lo < 0.5 <= br.p_hi
    # reproducible
    br2 = estimate_lambda_c(EXP2, n=4, tol=0.1, replicas=150)
    assert (br.lo, br.hi) == (br2.lo, br2.hi)


def test_lambda_c_out_in_overlap_constant_recovery():
    cfg = FieldConfig(2, 1.0, RecoveryDist.constant(1.0), seed=5)
    out = estimate_lambda_c(cfg, n=5, tol=0.1, replicas=250, direction="out")
    inn = estimate_lambda_c(cfg, n=5, tol=0.1, replicas=250, direction="in")
    assert out.overlaps(inn)


def test_lambda_c_rejects_bad_tolerance():
    with pytest.raises(ConfigError):
        estimate_lambda_c(EXP2, n=4, tol=0.0, replicas=100)


# -- tail fits ---------------------------------------------------------------------


def test_tail_fit_exponential_synthetic():
    ns = np.arange(1, 9)
    fit = tail_fit(ns, np.exp(-0.7 * ns))
    assert abs(fit.rate - 0.7) < 0.01
    assert fit.r2 > 0.999


def test_tail_fit_stretched_synthetic():
    ns = np.arange(1, 9)
    fit = tail_fit(ns, np.exp(-(ns ** (1 / 3))), model="exp_n_pow", power=1 / 3)
    assert abs(fit.rate - 1.0) < 0.05
    assert fit.r2 > 0.99


def test_tail_fit_model_mismatch_lowers_r2():
    ns = np.arange(1, 9)
    data = np.exp(-0.7 * ns)
    matched = tail_fit(ns, data, model="exp_n")
    mismatched = tail_fit(ns, data, model="exp_n_pow", power=1 / 3)
    assert mismatched.r2 < matched.r2


def test_tail_fit_drops_zeros_and_errors_when_thin():
    ns = [1, 2, 3, 4, 5]
    ps = [0.5, 0.2, 0.1, 0.0, 0.0]
    with pytest.raises(EstimationError):
        tail_fit(ns, ps)
    fit = tail_fit([1, 2, 3, 4, 5], [0.5, 0.2, 0.1, 0.05, 0.0])
    assert fit.support == (1.0, 4.0)


def test_tail_fit_record_shape():
    fit = tail_fit(np.arange(1, 6), np.exp(-0.5 * np.arange(1, 6)))
    rec = fit.as_record()
    assert set(rec) == {"model", "rate", "r2", "support"}


# -- FKG ---------------------------------------------------------------------------


def test_fkg_same_event_gives_variance():
    e = MonotoneEvent(((OrientedBond((0, 0), (1, 0)),),))
    rep = fkg_check(EXP2, e, e, 4000)
    var = rep.mean_u * (1 - rep.mean_u)
    assert rep.cov > 0
    assert abs(rep.cov - var) < 1e-9  # identical indicator: cov == variance


def test_fkg_constant_recovery_independent_bonds():
    cfg = FieldConfig(2, 1.0, RecoveryDist.constant(1.0), seed=3)
    u = MonotoneEvent(((OrientedBond((0, 0), (1, 0)),),))
    v = MonotoneEvent(((OrientedBond((0, 0), (0, 1)),),))
    rep = fkg_check(cfg, u, v, 20000)
    assert abs(rep.cov) <= 3 * rep.se


def test_fkg_exponential_recovery_positive_same_site():
    cfg = FieldConfig(2, 1.0, RecoveryDist.exponential(1.0), seed=3)
    u = MonotoneEvent(((OrientedBond((0, 0), (1, 0)),),))
    v = MonotoneEvent(((OrientedBond((0, 0), (0, 1)),),))
    rep = fkg_check(cfg, u, v, 40000)
    # analytic covariance via quadrature: E[(1-e^{-lam T})^2] - p^2
    from scipy import integrate

    lam = cfg.lam
    p = quad_open_probability(cfg)
    e2, _ = integrate.quad(
        lambda t: (1 - math.exp(-lam * t)) ** 2 * math.exp(-t), 0, np.inf
    )
    want = e2 - p * p
    assert want > 0
    assert abs(rep.cov - want) <= 3 * rep.se


def test_fkg_random_pairs_nonnegative():
    rng = np.random.default_rng(11)
    for _ in range(6):
        u = random_monotone_event(2, rng)
        v = random_monotone_event(2, rng)
        rep = fkg_check(EXP2, u, v, 4000)
        assert rep.cov >= -3 * rep.se


def test_monotone_event_parse_and_reject():
    spec = [[[[0, 0], [1, 0]], [[0, 0], [0, 1]]], [[[1, 1], [1, 2]]]]
    ev = MonotoneEvent.parse(spec, d=2)
    assert len(ev.clauses) == 2 and len(ev.clauses[0]) == 2
    with pytest.raises(ConfigError):
        MonotoneEvent.parse([[[[0, 0], [2, 0]]]], d=2)  # not nearest neighbor
    with pytest.raises(ConfigError):
        MonotoneEvent.parse([[[[0, 0, 0], [1, 0, 0]]]], d=2)  # wrong dimension
    with pytest.raises(ConfigError):
        MonotoneEvent.parse({"not": []}, d=2)  # negation is not expressible
    with pytest.raises(ConfigError):
        MonotoneEvent(())


# -- slab probe ----------------------------------------------------------------------


def test_slab_probe_monotone_in_thickness_per_seed():
    cfg = FieldConfig(2, 2.0, RecoveryDist.exponential(1.0), seed=13)
    thin = slab_percolation_probe(cfg, 2, 16, 80, heights=[0])
    thick = slab_percolation_probe(cfg, 4, 16, 80, heights=[0])
    assert thick.p_by_height[0] >= thin.p_by_height[0]


def test_slab_region_coincides_with_box_when_thick():
    # slab thickness >= box extent: the clipped slab contains the whole
    # lateral box, so the reachable sets coincide
    cfg = FieldConfig(2, 1.5, RecoveryDist.exponential(1.0), seed=29)
    half = 4
    field = BoxField(cfg, Box((0, half), half))
    in_slab = (field.coords[:, -1] >= 0) & (field.coords[:, -1] <= 2 * half)
    assert bool(np.all(in_slab))
    start = field.index_of((0, 0))
    free = wave_reach(field, [start], forward=True)
    clipped = wave_reach(field, [start], forward=True, region_mask=in_slab)
    assert bool(np.all(free == clipped))


def test_slab_probe_supercritical_positive():
    cfg = FieldConfig(2, 3.0, RecoveryDist.exponential(1.0), seed=37)
    rep = slab_percolation_probe(cfg, 4, 24, 120)
    assert rep.min_p > 0.0
    assert len(rep.heights) == len(rep.p_by_height)


# -- kappa tail ------------------------------------------------------------------------


def test_kappa_tail_curve_smoke():
    cfg = FieldConfig(2, 3.0, RecoveryDist.exponential(1.0), seed=21)
    curves = kappa_tail_curve(cfg, 12, replicas=4, n_values=[1, 2, 3], c_prime=3)
    assert curves[0].p_hat == 1.0  # radius >= 1 by definition
    ps = [c.p_hat for c in curves]
    assert all(a >= b for a, b in zip(ps, ps[1:]))


def test_constant_recovery_pc_mapping_stable_across_n():
    # huge constant recovery makes bonds independent with p = 1 - exp(-rate T);
    # the mapped crossing probability stays put as the box grows
    cfg = FieldConfig(2, 1.0, RecoveryDist.constant(100.0), seed=4)
    br6 = estimate_lambda_c(cfg, n=6, tol=0.02, replicas=250, lo=1e-4, hi=0.2)
    br10 = estimate_lambda_c(cfg, n=10, tol=0.02, replicas=250, lo=1e-4, hi=0.2)
    p6 = (1 - math.exp(-100 * br6.lo), 1 - math.exp(-100 * br6.hi))
    p10 = (1 - math.exp(-100 * br10.lo), 1 - math.exp(-100 * br10.hi))
    # widen each mapped bracket by the binomial se of the crossing estimate
    se = 3 * math.sqrt(0.25 / 250)
    assert p6[0] - se <= p10[1] and p10[0] - se <= p6[1]


def test_slab_probe_supercritical_d3():
    cfg = FieldConfig(3, 0.70, RecoveryDist.exponential(1.0), seed=88)
    rep = slab_percolation_probe(cfg, 4, 32, 100, jobs=2)
    assert rep.min_p > 0.0
