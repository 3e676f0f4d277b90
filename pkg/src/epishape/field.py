"""Lazily sampled random field driving the epidemic / percolation model.

Every random quantity is a pure function of (seed, entity key).  Site keys
yield recovery times T_x, ordered-bond keys yield unit-rate exponential
clocks e1(x, y), and a third key kind yields sprinkling coins.  Nothing is
ever stored: a query, issued in any order by any worker, always returns the
same value, which is what makes shared-seed couplings across infection rates
exact rather than statistical.

The rate enters only through e_lambda(x, y) = e1(x, y) / lambda, so the set
of open bonds grows monotonically with lambda on a fixed seed.

Each entity consumes exactly two 64-bit words produced by a splitmix64-style
keyed hash, and all distributions are sampled by inverse CDF, so consumption
never depends on query order.  `BoxField` materializes the same values in
bulk for a whole box; its entries are bit-identical to the scalar accessors.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .lattice import (
    Box,
    OrientedBond,
    Site,
    bond_direction,
    check_bond,
    direction_step,
)

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_TAG_SITE = np.uint64(0x53495445)       # distinct key kinds keep the three
_TAG_BOND = np.uint64(0x424F4E44)       # fields mutually independent
_TAG_SPRINKLE = np.uint64(0x53505249)
_TAG_CHILD = np.uint64(0x4348494C)
_WORD_A = np.uint64(0xA5A5A5A5A5A5A5A5)
_WORD_B = np.uint64(0xC3C3C3C3C3C3C3C3)

_INV_2_53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    # uint64 wraparound is the point here; silence the scalar overflow warning
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _absorb(state: np.ndarray, value: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        mixed = (state + _PHI) ^ value
    return _mix(mixed)


def _as_u64(values) -> np.ndarray:
    if isinstance(values, (int, np.integer)):
        return np.asarray(int(values) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64).astype(np.uint64)


def _entity_state(seed, tag: np.uint64, parts: list) -> np.ndarray:
    state = _mix(_as_u64(seed) ^ tag)
    for part in parts:
        state = _absorb(state, _as_u64(part))
    return state


def _u_open_closed(word: np.ndarray) -> np.ndarray:
    """Uniform on (0, 1]; safe under log."""
    return ((word >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53


def _u_closed_open(word: np.ndarray) -> np.ndarray:
    """Uniform on [0, 1); `u < p` is exact at p in {0, 1}."""
    return (word >> np.uint64(11)).astype(np.float64) * _INV_2_53


def child_seed(seed: int, index: int) -> int:
    """Derived seed for replica `index`; deterministic and collision-mixed."""
    state = _entity_state(seed, _TAG_CHILD, [_as_u64(index)])
    return int(state)


def child_seeds(seed: int, count: int) -> np.ndarray:
    """uint64 array of the first `count` replica seeds of `seed`."""
    return _entity_state(seed, _TAG_CHILD, [np.arange(count, dtype=np.int64)])


@dataclass(frozen=True)
class RecoveryDist:
    """Distribution of the time a site stays infected.

    Kinds: constant(t0), exponential(mean), uniform(a, b), pareto(shape,
    scale).  All parameters must be strictly positive, which also rules out
    the degenerate all-mass-at-zero case.  The pareto kind with shape <= d
    is the stock counterexample with an infinite d-th moment.
    """

    kind: str
    params: tuple

    _KINDS = {"constant": 1, "exponential": 1, "uniform": 2, "pareto": 2}
    _ALIASES = {"const": "constant", "exp": "exponential", "unif": "uniform"}

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown recovery kind {self.kind!r}")
        if len(self.params) != self._KINDS[self.kind]:
            raise ConfigError(
                f"recovery kind {self.kind!r} takes {self._KINDS[self.kind]} "
                f"parameter(s), got {self.params!r}"
            )
        if any(not (p > 0) for p in self.params):
            raise ConfigError(f"recovery parameters must be > 0: {self.params!r}")
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise ConfigError("uniform recovery needs a < b")

    @classmethod
    def constant(cls, t0: float) -> "RecoveryDist":
        return cls("constant", (float(t0),))

    @classmethod
    def exponential(cls, mean: float) -> "RecoveryDist":
        return cls("exponential", (float(mean),))

    @classmethod
    def uniform(cls, a: float, b: float) -> "RecoveryDist":
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def pareto(cls, shape: float, scale: float) -> "RecoveryDist":
        return cls("pareto", (float(shape), float(scale)))

    @classmethod
    def parse(cls, text: str) -> "RecoveryDist":
        """Parse 'kind:p1[:p2]', e.g. 'exp:1.0' or 'uniform:0.5:1.5'."""
        parts = text.strip().split(":")
        kind = cls._ALIASES.get(parts[0], parts[0])
        try:
            params = tuple(float(p) for p in parts[1:])
        except ValueError as exc:
            raise ConfigError(f"bad recovery spec {text!r}: {exc}") from exc
        return cls(kind, params)

    def spec(self) -> str:
        return ":".join([self.kind] + [repr(p) for p in self.params])

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF at u; u must lie in (0, 1]."""
        if self.kind == "constant":
            return np.full_like(u, self.params[0])
        if self.kind == "exponential":
            return -self.params[0] * np.log(u)
        if self.kind == "uniform":
            a, b = self.params
            return a + (b - a) * (1.0 - u)
        shape, scl = self.params
        return scl * u ** (-1.0 / shape)

    def mean(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "exponential":
            return self.params[0]
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        shape, scl = self.params
        return math.inf if shape <= 1 else shape * scl / (shape - 1)

    def finite_moment(self, order: int) -> bool:
        """Whether E[T^order] is finite."""
        return self.kind != "pareto" or self.params[0] > order


@dataclass(frozen=True)
class FieldConfig:
    """Model parameters plus the global seed that fixes the whole field."""

    d: int
    lam: float
    recovery: RecoveryDist
    seed: int

    def __post_init__(self) -> None:
        if self.d not in (2, 3, 4):
            raise ConfigError(f"dimension must be 2, 3 or 4, got {self.d}")
        if not self.lam > 0:
            raise ConfigError(f"infection rate must be > 0, got {self.lam}")

    def replica(self, index: int) -> "FieldConfig":
        return dataclasses.replace(self, seed=child_seed(self.seed, index))

    def with_lambda(self, lam: float) -> "FieldConfig":
        return dataclasses.replace(self, lam=float(lam))

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "lambda": self.lam,
            "recovery": self.recovery.spec(),
            "seed": self.seed,
        }


# -- vectorized samplers ----------------------------------------------------


def recovery_times_at(cfg: FieldConfig, coords: np.ndarray) -> np.ndarray:
    """Recovery times for an (n, d) int array of sites."""
    coords = np.asarray(coords, dtype=np.int64)
    state = _entity_state(cfg.seed, _TAG_SITE, [_as_u64(coords[..., k]) for k in range(cfg.d)])
    word = _absorb(state, _WORD_A)
    return cfg.recovery.quantile(_u_open_closed(word))


def unit_clocks_at(cfg: FieldConfig, coords: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Unit-rate clocks e1 for bonds (site, site + step(dir)); broadcastable."""
    coords = np.asarray(coords, dtype=np.int64)
    dirs = np.asarray(dirs, dtype=np.int64)
    parts = [_as_u64(coords[..., k]) for k in range(cfg.d)] + [_as_u64(dirs)]
    state = _entity_state(cfg.seed, _TAG_BOND, parts)
    word = _absorb(state, _WORD_A)
    return -np.log(_u_open_closed(word))


def sprinkle_uniforms_at(cfg: FieldConfig, coords: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64)
    dirs = np.asarray(dirs, dtype=np.int64)
    parts = [_as_u64(coords[..., k]) for k in range(cfg.d)] + [_as_u64(dirs)]
    state = _entity_state(cfg.seed, _TAG_SPRINKLE, parts)
    word = _absorb(state, _WORD_A)
    return _u_closed_open(word)


# -- scalar accessors (the reference semantics) ------------------------------


def recovery_time(cfg: FieldConfig, x: Site) -> float:
    """Time the individual at x stays infected once infected."""
    if len(x) != cfg.d:
        raise ConfigError(f"site {x} does not have dimension {cfg.d}")
    return float(recovery_times_at(cfg, np.asarray([x]))[0])


def unit_clock(cfg: FieldConfig, bond: OrientedBond) -> float:
    check_bond(bond, cfg.d)
    j = bond_direction(bond)
    return float(unit_clocks_at(cfg, np.asarray([bond[0]]), np.asarray([j]))[0])


def edge_clock(cfg: FieldConfig, bond: OrientedBond) -> float:
    """Passage time of the bond at rate lambda: e1(bond) / lambda."""
    return unit_clock(cfg, bond) / cfg.lam


def is_open(cfg: FieldConfig, bond: OrientedBond) -> bool:
    """Whether tail would infect head: edge_clock < recovery_time(tail)."""
    return edge_clock(cfg, bond) < recovery_time(cfg, bond[0])


def bond_open_over_seeds(cfg: FieldConfig, bond: OrientedBond, seeds: np.ndarray) -> np.ndarray:
    """Openness of one bond across many seeds; entry k equals is_open at seed k."""
    check_bond(bond, cfg.d)
    j = bond_direction(bond)
    coord_parts = [_as_u64(c) for c in bond.tail]
    site_state = _entity_state(seeds, _TAG_SITE, coord_parts)
    t = cfg.recovery.quantile(_u_open_closed(_absorb(site_state, _WORD_A)))
    bond_state = _entity_state(seeds, _TAG_BOND, coord_parts + [_as_u64(j)])
    e1 = -np.log(_u_open_closed(_absorb(bond_state, _WORD_A)))
    return (e1 / cfg.lam) < t


def bernoulli_sprinkle(cfg: FieldConfig, bond: OrientedBond, eps: float) -> bool:
    """Independent Bernoulli(eps) coin per bond, independent of the field."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"sprinkle probability must be in [0, 1], got {eps}")
    check_bond(bond, cfg.d)
    j = bond_direction(bond)
    u = float(sprinkle_uniforms_at(cfg, np.asarray([bond[0]]), np.asarray([j]))[0])
    return u < eps


# -- bulk view over one box ---------------------------------------------------


class BoxField:
    """All field values for the sites of one box, sampled up front.

    A thin vectorized cache over the lazy field: `T[i]` and `E1[i, j]` are
    bit-identical to `recovery_time` / `unit_clock` at the corresponding site
    and direction.  Site linear order is lexicographic in coordinates, which
    doubles as the deterministic tie-break order everywhere downstream.
    """

    def __init__(self, cfg: FieldConfig, box: Box):
        if box.dim != cfg.d:
            raise ConfigError(f"box dimension {box.dim} != field dimension {cfg.d}")
        self.cfg = cfg
        self.box = box
        d = cfg.d
        side = 2 * box.radius + 1
        self.side = side
        self.n_sites = side**d
        lo = np.asarray(box.center, dtype=np.int64) - box.radius

        grids = np.indices((side,) * d).reshape(d, -1).T  # lexicographic
        self.coords = grids + lo  # (n, d) int64
        self._lo = lo
        self._strides = np.asarray(
            [side ** (d - 1 - k) for k in range(d)], dtype=np.int64
        )

        self.T = recovery_times_at(cfg, self.coords)

        offs = grids  # offsets within [0, side)
        nbr = np.empty((self.n_sites, 2 * d), dtype=np.int64)
        base = offs @ self._strides
        for j in range(2 * d):
            axis, sign = divmod(j, 2)
            delta = -1 if sign == 0 else 1
            target = base + delta * self._strides[axis]
            valid = (
                (offs[:, axis] + delta >= 0) & (offs[:, axis] + delta < side)
            )
            nbr[:, j] = np.where(valid, target, -1)
        self.nbr = nbr

        dirs = np.broadcast_to(np.arange(2 * d), (self.n_sites, 2 * d))
        self.E1 = unit_clocks_at(
            cfg, self.coords[:, None, :], dirs
        )  # (n, 2d)

        self.boundary_mask = (
            np.abs(self.coords - np.asarray(box.center)).max(axis=1) == box.radius
        )
        self._open_cache: dict[float, np.ndarray] = {}
        self._csr_cache: dict[float, object] = {}

    # Bonds that leave the box keep their clock but have nbr == -1; traversals
    # must mask on nbr validity.

    def index_of(self, site: Site) -> int:
        off = np.asarray(site, dtype=np.int64) - self._lo
        if np.any(off < 0) or np.any(off >= self.side):
            raise ConfigError(f"site {site} outside box {self.box}")
        return int(off @ self._strides)

    def site_of(self, index: int) -> Site:
        off = []
        for k in range(self.cfg.d):
            s = int(self._strides[k])
            off.append(index // s)
            index %= s
        return tuple(int(o + l) for o, l in zip(off, self._lo))

    def open_out(self, lam: float | None = None) -> np.ndarray:
        """Bool (n, 2d): bond from site i in direction j is open at rate lam."""
        lam = self.cfg.lam if lam is None else float(lam)
        cached = self._open_cache.get(lam)
        if cached is None:
            cached = (self.E1 / lam) < self.T[:, None]
            self._open_cache[lam] = cached
        return cached

    def edge_weights(self, lam: float | None = None) -> np.ndarray:
        lam = self.cfg.lam if lam is None else float(lam)
        return self.E1 / lam

    def open_digraph(self, lam: float | None = None):
        """CSR matrix of edge clocks over open in-box bonds (cached per rate)."""
        from scipy.sparse import csr_matrix

        lam = self.cfg.lam if lam is None else float(lam)
        cached = self._csr_cache.get(lam)
        if cached is None:
            open_mat = self.open_out(lam)
            valid = open_mat & (self.nbr >= 0)
            rows, dirs = np.nonzero(valid)
            cols = self.nbr[rows, dirs]
            data = self.edge_weights(lam)[rows, dirs]
            cached = csr_matrix(
                (data, (rows, cols)), shape=(self.n_sites, self.n_sites)
            )
            self._csr_cache[lam] = cached
        return cached
