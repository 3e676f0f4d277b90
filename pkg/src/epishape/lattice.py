"""Integer-lattice geometry: sites, oriented bonds, boxes, slabs, cones, regions.

Sites are plain tuples of ints so they key dicts and sets cheaply.  Boxes use
the max-norm (a box of radius n around c is c + [-n, n]^d); the l1 norm only
enters through the nearest-neighbor relation.  Everything here is pure and
deterministic, so it is safe to call from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator, NamedTuple

from .errors import ConfigError

Site = tuple  # tuple of d signed ints

# Box radii beyond this would not fit comfortably in the int32 index tables.
MAX_BOX_RADIUS = 1 << 20


class OrientedBond(NamedTuple):
    """Ordered nearest-neighbor pair; `tail` infects `head`."""

    tail: Site
    head: Site


def l1_dist(x: Site, y: Site) -> int:
    return sum(abs(a - b) for a, b in zip(x, y))


def linf_dist(x: Site, y: Site) -> int:
    return max(abs(a - b) for a, b in zip(x, y))


def linf_norm(x: Site) -> int:
    return max(abs(a) for a in x)


def origin(d: int) -> Site:
    return (0,) * d


def scale(x: Site, k: int) -> Site:
    return tuple(k * a for a in x)


def direction_step(d: int, j: int) -> Site:
    """Unit step for direction index j in 0..2d-1 (axis-major, minus then plus)."""
    axis, sign = divmod(j, 2)
    step = [0] * d
    step[axis] = -1 if sign == 0 else 1
    return tuple(step)


def opposite_direction(j: int) -> int:
    return j ^ 1


def neighbors(x: Site) -> list:
    """The 2d nearest neighbors of x, axis-major, minus before plus."""
    out = []
    for i in range(len(x)):
        for s in (-1, 1):
            y = list(x)
            y[i] += s
            out.append(tuple(y))
    return out


def check_bond(bond: OrientedBond, d: int | None = None) -> None:
    tail, head = bond
    if d is not None and (len(tail) != d or len(head) != d):
        raise ConfigError(f"bond endpoints must have dimension {d}: {bond}")
    if len(tail) != len(head) or l1_dist(tail, head) != 1:
        raise ConfigError(f"bond endpoints must be nearest neighbors: {bond}")


def bond_direction(bond: OrientedBond) -> int:
    """Direction index of head relative to tail."""
    check_bond(bond)
    for i, (a, b) in enumerate(zip(bond.tail, bond.head)):
        if b == a - 1:
            return 2 * i
        if b == a + 1:
            return 2 * i + 1
    raise ConfigError(f"degenerate bond: {bond}")


@dataclass(frozen=True)
class Box:
    """Max-norm ball of integer sites: {y : ||y - center||_inf <= radius}."""

    center: Site
    radius: int

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ConfigError(f"box radius must be >= 0, got {self.radius}")
        if self.radius > MAX_BOX_RADIUS:
            raise ConfigError(f"box radius {self.radius} exceeds {MAX_BOX_RADIUS}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, y: Site) -> bool:
        return linf_dist(y, self.center) <= self.radius

    def contains_strictly(self, y: Site) -> bool:
        return linf_dist(y, self.center) < self.radius

    def sites(self) -> Iterator[Site]:
        ranges = [range(c - self.radius, c + self.radius + 1) for c in self.center]
        return (tuple(p) for p in product(*ranges))

    def size(self) -> int:
        return (2 * self.radius + 1) ** self.dim


def box_boundary(b: Box) -> set:
    """Sites at max-norm distance exactly b.radius from the center.

    The radius-0 box has no boundary in this sense and is rejected.
    """
    if b.radius < 1:
        raise ConfigError("box boundary requires radius >= 1")
    return {y for y in b.sites() if linf_dist(y, b.center) == b.radius}


def exterior_vertex_boundary(a: Iterable) -> set:
    """Sites outside A adjacent to some site of A."""
    a = set(a)
    out = set()
    for x in a:
        for y in neighbors(x):
            if y not in a:
                out.add(y)
    return out


@dataclass(frozen=True)
class Slab:
    """Sites whose `axis` coordinate lies in {0, ..., thickness}."""

    thickness: int
    axis: int = -1

    def __post_init__(self) -> None:
        if self.thickness < 1:
            raise ConfigError(f"slab thickness must be >= 1, got {self.thickness}")

    def contains(self, y: Site) -> bool:
        return 0 <= y[self.axis] <= self.thickness


@dataclass(frozen=True)
class Cone:
    """Union of max-norm balls B(t*direction, amplitude*t) over t >= 0."""

    direction: tuple
    amplitude: float

    def __post_init__(self) -> None:
        if self.amplitude <= 0:
            raise ConfigError("cone amplitude must be > 0")
        if all(v == 0 for v in self.direction):
            raise ConfigError("cone direction must be nonzero")

    def contains(self, z: Site) -> bool:
        # Feasibility of |z_i - t*x_i| <= amp*t for all i, some t >= 0. Each
        # coordinate constrains t to an interval; intersect them.
        lo, hi = 0.0, math.inf
        for zi, xi in zip(z, self.direction):
            a = xi + self.amplitude  # z_i <= a t
            b = xi - self.amplitude  # b t <= z_i
            if a > 0:
                lo = max(lo, zi / a)
            elif a == 0:
                if zi > 0:
                    return False
            else:
                hi = min(hi, zi / a)
            if b > 0:
                hi = min(hi, zi / b)
            elif b == 0:
                if zi < 0:
                    return False
            else:
                lo = max(lo, zi / b)
        return lo <= hi + 1e-12


class AllRegion:
    """The whole lattice."""

    def contains(self, y: Site) -> bool:  # noqa: ARG002 - uniform interface
        return True

    def __repr__(self) -> str:
        return "AllRegion()"


@dataclass(frozen=True)
class BoxRegion:
    box: Box

    def contains(self, y: Site) -> bool:
        return self.box.contains(y)


@dataclass(frozen=True)
class SlabRegion:
    """A slab clipped to a box, so searches stay bounded."""

    slab: Slab
    clip: Box

    def contains(self, y: Site) -> bool:
        return self.slab.contains(y) and self.clip.contains(y)


@dataclass(frozen=True)
class ComplementRegion:
    """Sites avoiding `excluded`, optionally clipped to a box."""

    excluded: frozenset
    clip: Box | None = None

    def contains(self, y: Site) -> bool:
        if y in self.excluded:
            return False
        return self.clip is None or self.clip.contains(y)


def region_is_bounded(region) -> bool:
    if isinstance(region, (BoxRegion, SlabRegion)):
        return True
    if isinstance(region, ComplementRegion):
        return region.clip is not None
    return False
