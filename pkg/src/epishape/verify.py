"""Exact-invariant battery behind `epishape verify`.

Each check exercises an identity or monotonicity that must hold exactly
(couplings, equivalences, nestings) or a law that must hold within Monte
Carlo error on a fresh checkout.  Prints one line per check and returns a
nonzero exit code on any violation.
"""

from __future__ import annotations

import math

import numpy as np

from .cluster import (
    Backbone,
    backbone,
    chemical_distance,
    cluster,
    neighborhood,
    neighborhood_weight,
    roots,
    wave_reach,
)
from .epidemic import neighborhood_passage_time, passage_time, run_epidemic
from .errors import TruncationError
from .field import BoxField, FieldConfig, RecoveryDist, edge_clock, is_open, recovery_time
from .lattice import (
    Box,
    BoxRegion,
    OrientedBond,
    box_boundary,
    neighbors,
    origin,
)


def _check_lattice() -> list:
    msgs = []
    for d in (2, 3, 4):
        for n in range(1, 6):
            got = len(box_boundary(Box(origin(d), n)))
            want = (2 * n + 1) ** d - (2 * n - 1) ** d
            if got != want:
                msgs.append(f"boundary count wrong at d={d} n={n}: {got} != {want}")
    x = (3, -1, 2)
    for y in neighbors(x):
        if x not in neighbors(y):
            msgs.append(f"neighbor relation not symmetric at {x}/{y}")
    return msgs


def _check_field() -> list:
    msgs = []
    cfg = FieldConfig(3, 0.8, RecoveryDist.exponential(1.0), seed=101)
    o = origin(3)
    bond = OrientedBond(o, (0, 1, 0))
    if recovery_time(cfg, o) != recovery_time(cfg, o):
        msgs.append("recovery_time not deterministic")
    if edge_clock(cfg.with_lambda(1.6), bond) != edge_clock(cfg, bond) / 2:
        msgs.append("edge clock does not scale exactly with the rate")
    # shared-seed coupling: open sets nested across rates, exactly
    field = BoxField(cfg, Box(o, 6))
    lo = field.open_out(0.5)
    hi = field.open_out(1.5)
    if bool(np.any(lo & ~hi)):
        msgs.append("open-bond sets not nested across rates under one seed")
    # marginal law vs closed form, 3 standard errors
    p_hat = float(field.open_out(cfg.lam).mean())
    p = cfg.lam / (1 + cfg.lam)
    se = math.sqrt(p * (1 - p) / field.open_out(cfg.lam).size)
    if abs(p_hat - p) > 3 * se:
        msgs.append(f"open marginal off: {p_hat:.5f} vs {p:.5f} (3se={3 * se:.5f})")
    return msgs


def _check_epidemic(quick: bool) -> list:
    msgs = []
    cfg = FieldConfig(2, 1.1, RecoveryDist.exponential(1.0), seed=77)
    box = Box(origin(2), 3)
    seeds = 3 if quick else 10
    for k in range(seeds):
        rcfg = cfg.replica(k)
        traj = run_epidemic(rcfg, box, horizon=1e9)
        region = BoxRegion(box)
        for y in box.sites():
            pt = passage_time(rcfg, origin(2), y, region)
            it = traj.infection_time(y)
            same = (math.isinf(pt) and math.isinf(it)) or pt == it
            if not same:
                msgs.append(f"epidemic/passage mismatch at seed {k} site {y}")
                break
    # monotone in the rate, pointwise, same seed
    t_lo = run_epidemic(cfg.with_lambda(0.8), box, horizon=1e9).infection
    t_hi = run_epidemic(cfg.with_lambda(1.6), box, horizon=1e9).infection
    if bool(np.any(t_hi > t_lo)):
        msgs.append("infection times not monotone in the rate under one seed")
    # snapshot partition equals the sublevel set
    traj = run_epidemic(cfg, box, horizon=5.0)
    snap = traj.snapshot(2.5)
    hit = {s for s, t in traj.infection_times.items() if t <= 2.5}
    if snap.immune | snap.infected != hit or snap.immune & snap.infected:
        msgs.append("snapshot does not partition the infected-by-t set")
    return msgs


def _check_cluster(quick: bool) -> list:
    msgs = []
    cfg = FieldConfig(2, 1.4, RecoveryDist.exponential(1.0), seed=55)
    small = BoxRegion(Box(origin(2), 2))
    large = BoxRegion(Box(origin(2), 4))
    for k in range(2 if quick else 8):
        rcfg = cfg.replica(k)
        a = cluster(rcfg, origin(2), "out", small).sites
        b = cluster(rcfg, origin(2), "out", large).sites
        if not a <= b:
            msgs.append(f"cluster not monotone in the region at seed {k}")
    # backbone membership against per-site scalar searches (interior sites;
    # a boundary site can satisfy the one-bond rule only through a cycle,
    # which the scalar cluster API does not report)
    rcfg = cfg.replica(3)
    bb = backbone(rcfg, 4)
    box4 = Box(origin(2), 4)
    region = BoxRegion(box4)
    bdry = box_boundary(box4)
    for x in Box(origin(2), 3).sites():
        fwd = cluster(rcfg, x, "out", region).sites & bdry
        bwd = cluster(rcfg, x, "in", region).sites & bdry
        want = bool(fwd) and bool(bwd)
        if want != bb.contains(x):
            msgs.append(f"backbone membership mismatch at {x}")
            break
    # roots sit inside the radius box
    sup = FieldConfig(2, 3.0, RecoveryDist.exponential(1.0), seed=19)
    bb = backbone(sup, 10)
    for k, x in enumerate([(0, 0), (1, 2), (-2, 1)]):
        rp = roots(sup, x, bb)
        try:
            nb = neighborhood(sup, x, bb, c_prime=3)
        except TruncationError:
            continue
        if any(
            max(abs(a - b) for a, b in zip(y, x)) > nb.radius
            for y in rp.outgoing | rp.incoming
        ):
            msgs.append(f"roots escape the neighborhood box at {x}")
        if neighborhood_weight(sup, nb) < 0:
            msgs.append("negative neighborhood weight")
    return msgs


def _check_subadditivity(quick: bool) -> list:
    msgs = []
    cfg = FieldConfig(2, 3.0, RecoveryDist.exponential(1.0), seed=23)
    triples = [((0, 0), (2, 1), (4, 0)), ((0, 0), (-1, 2), (1, 3))]
    count = 0
    for k in range(2 if quick else 6):
        rcfg = cfg.replica(k)
        bb = backbone(rcfg, 12)
        for x, y, z in triples:
            try:
                nx = neighborhood(rcfg, x, bb, 3)
                ny = neighborhood(rcfg, y, bb, 3)
                nz = neighborhood(rcfg, z, bb, 3)
            except TruncationError:
                continue
            txz = neighborhood_passage_time(rcfg, x, z, bb, 3, nx, nz)
            txy = neighborhood_passage_time(rcfg, x, y, bb, 3, nx, ny)
            tyz = neighborhood_passage_time(rcfg, y, z, bb, 3, ny, nz)
            uy = neighborhood_weight(rcfg, ny)
            count += 1
            if txz > txy + uy + tyz + 1e-12:
                msgs.append(f"subadditivity violated at seed {k} triple {(x, y, z)}")
    if count == 0:
        msgs.append("no usable subadditivity triples (unexpected at this rate)")
    return msgs


def _check_chemical(quick: bool) -> list:
    msgs = []
    cfg = FieldConfig(2, 100.0, RecoveryDist.constant(1e6), seed=1)
    region = BoxRegion(Box(origin(2), 3))
    d = chemical_distance(cfg, (0, 0), (2, -1), region)
    if d != 3.0:
        msgs.append(f"fully open chemical distance != l1: {d}")
    if chemical_distance(cfg, (1, 1), (1, 1), region) != 0.0:
        msgs.append("chemical distance to self is not 0")
    return msgs


def run_battery(quick: bool = False) -> int:
    checks = [
        ("lattice geometry", lambda: _check_lattice()),
        ("field determinism and coupling", lambda: _check_field()),
        ("epidemic equals passage times", lambda: _check_epidemic(quick)),
        ("cluster and backbone", lambda: _check_cluster(quick)),
        ("neighborhood subadditivity", lambda: _check_subadditivity(quick)),
        ("chemical distance", lambda: _check_chemical(quick)),
    ]
    failures = 0
    for name, fn in checks:
        msgs = fn()
        if msgs:
            failures += len(msgs)
            print(f"[fail] {name}")
            for m in msgs:
                print(f"       {m}")
        else:
            print(f"[ ok ] {name}")
    if failures:
        print(f"verify: {failures} violation(s)")
        return 1
    print("verify: all invariants hold")
    return 0
