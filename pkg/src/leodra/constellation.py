"""Walker-star virtual-node grid: positions, neighbours, polar logic, ISL lengths.

Nodes are addressed as ``(plane, slot)``. Slot ``s`` sits at orbital phase
``s * 360 / M`` degrees; planes are spaced ``180 / N`` degrees apart in
longitude, so the first and last plane meet at a counter-rotating seam where
no inter-plane links exist.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple


class InvalidNodeError(ValueError):
    pass


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class ConstellationParams:
    n_planes: int = 12
    sats_per_plane: int = 24
    altitude_km: float = 600.0
    inclination_deg: float = 90.0
    polar_threshold_deg: float = 75.0
    earth_radius_km: float = 6371.0
    light_speed_km_s: float = 299792.458

    def __post_init__(self) -> None:
        if self.n_planes < 2:
            raise ValueError(f"n_planes must be >= 2, got {self.n_planes}")
        if self.sats_per_plane < 3:
            raise ValueError(f"sats_per_plane must be >= 3, got {self.sats_per_plane}")
        if not self.altitude_km > 0:
            raise ValueError(f"altitude_km must be positive, got {self.altitude_km}")
        if not 0 < self.polar_threshold_deg < 90:
            raise ValueError(
                f"polar_threshold_deg must lie in (0, 90), got {self.polar_threshold_deg}"
            )

    @property
    def orbit_radius_km(self) -> float:
        return self.earth_radius_km + self.altitude_km


class NodeId(NamedTuple):
    plane: int
    slot: int

    def __str__(self) -> str:
        return f"({self.plane},{self.slot})"


class Direction(enum.Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"

    # members are singletons; identity hashing skips the slow Enum.__hash__
    __hash__ = object.__hash__

    @property
    def opposite(self) -> Direction:
        return _OPPOSITE[self]

    @property
    def is_vertical(self) -> bool:
        return self in (Direction.UP, Direction.DOWN)

    @property
    def is_horizontal(self) -> bool:
        return not self.is_vertical


_OPPOSITE = {
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
}

DIRECTIONS = (Direction.UP, Direction.DOWN, Direction.LEFT, Direction.RIGHT)


@dataclass(frozen=True)
class GeoPosition:
    latitude_deg: float
    longitude_deg: float


@dataclass(frozen=True)
class Region:
    """Inclusive rectangle of planes and slots; slots do not wrap."""

    plane_min: int
    slot_min: int
    plane_max: int
    slot_max: int

    @classmethod
    def from_corners(cls, a: tuple[int, int], b: tuple[int, int]) -> Region:
        return cls(min(a[0], b[0]), min(a[1], b[1]), max(a[0], b[0]), max(a[1], b[1]))

    @classmethod
    def full(cls, params: ConstellationParams) -> Region:
        return cls(0, 0, params.n_planes - 1, params.sats_per_plane - 1)

    def __contains__(self, node: object) -> bool:
        p, s = node  # type: ignore[misc]
        return self.plane_min <= p <= self.plane_max and self.slot_min <= s <= self.slot_max

    def nodes(self) -> list[NodeId]:
        return [
            NodeId(p, s)
            for p in range(self.plane_min, self.plane_max + 1)
            for s in range(self.slot_min, self.slot_max + 1)
        ]

    def __len__(self) -> int:
        return (self.plane_max - self.plane_min + 1) * (self.slot_max - self.slot_min + 1)


def check_node(params: ConstellationParams, node: tuple[int, int]) -> NodeId:
    p, s = node
    if not (0 <= p < params.n_planes and 0 <= s < params.sats_per_plane):
        raise InvalidNodeError(
            f"node {tuple(node)} outside grid of {params.n_planes} planes x "
            f"{params.sats_per_plane} slots"
        )
    return NodeId(int(p), int(s))


def slot_phase_deg(params: ConstellationParams, slot: int) -> float:
    return slot * 360.0 / params.sats_per_plane


@functools.lru_cache(maxsize=4096)
def slot_latitude_deg(params: ConstellationParams, slot: int) -> float:
    alpha = math.radians(slot_phase_deg(params, slot))
    # clamp guards asin against sin() rounding just past +/-1
    return math.degrees(math.asin(max(-1.0, min(1.0, math.sin(alpha)))))


def node_position(params: ConstellationParams, node: tuple[int, int]) -> GeoPosition:
    p, s = check_node(params, node)
    alpha = slot_phase_deg(params, s)
    lon = p * 180.0 / params.n_planes
    ascending = alpha <= 90.0 or alpha >= 270.0
    if not ascending:
        lon -= 180.0
    return GeoPosition(slot_latitude_deg(params, s), lon)


@functools.lru_cache(maxsize=4096)
def slot_is_polar(params: ConstellationParams, slot: int) -> bool:
    # tolerance keeps slots sitting exactly on the threshold (e.g. 75 deg) non-polar
    return abs(slot_latitude_deg(params, slot)) > params.polar_threshold_deg + 1e-9


def is_polar(params: ConstellationParams, node: tuple[int, int]) -> bool:
    return slot_is_polar(params, check_node(params, node).slot)


def step(params: ConstellationParams, node: NodeId, direction: Direction) -> NodeId:
    """Grid coordinate one hop away, ignoring link availability (slots wrap)."""
    p, s = node
    m = params.sats_per_plane
    if direction is Direction.UP:
        return NodeId(p, (s + 1) % m)
    if direction is Direction.DOWN:
        return NodeId(p, (s - 1) % m)
    if direction is Direction.RIGHT:
        return NodeId(p + 1, s)
    return NodeId(p - 1, s)


def neighbors(
    params: ConstellationParams,
    node: tuple[int, int],
    region: Region | None = None,
) -> dict[Direction, NodeId | None]:
    """Live neighbour in each direction, ``None`` where the link is absent.

    Inter-plane links need both endpoints outside the polar caps and never
    cross the seam. With ``region`` set, nodes outside it do not exist.
    """
    node = check_node(params, node)
    if region is not None and node not in region:
        raise InvalidNodeError(f"node {node} outside simulated region")
    out: dict[Direction, NodeId | None] = {}
    polar = slot_is_polar(params, node.slot)
    for d in DIRECTIONS:
        other = step(params, node, d)
        # same slot on both ends, so the polar test covers both endpoints
        ok = d.is_vertical or (0 <= other.plane < params.n_planes and not polar)
        if ok and region is not None and other not in region:
            ok = False
        out[d] = other if ok else None
    return out


def direction_between(params: ConstellationParams, a: NodeId, b: NodeId) -> Direction:
    for d in DIRECTIONS:
        if step(params, a, d) == b:
            return d
    raise TopologyError(f"{a} and {b} are not grid-adjacent")


def isl_length_km(params: ConstellationParams, a: tuple[int, int], b: tuple[int, int]) -> float:
    a = check_node(params, a)
    b = check_node(params, b)
    d = direction_between(params, a, b)
    if neighbors(params, a)[d] != b:
        raise TopologyError(f"no live ISL between {a} and {b}")
    r = params.orbit_radius_km
    if d.is_vertical:
        return 2.0 * r * math.sin(math.pi / params.sats_per_plane)
    lat = math.radians(slot_latitude_deg(params, a.slot))
    return 2.0 * r * math.sin(math.pi / (2 * params.n_planes)) * math.cos(lat)


def prop_delay_s(params: ConstellationParams, a: tuple[int, int], b: tuple[int, int]) -> float:
    return isl_length_km(params, a, b) / params.light_speed_km_s


def all_nodes(params: ConstellationParams) -> Iterator[NodeId]:
    for p in range(params.n_planes):
        for s in range(params.sats_per_plane):
            yield NodeId(p, s)
