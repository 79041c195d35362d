"""Minimum-hop direction estimation and primary/secondary direction enhancement.

Routing is recomputed at every hop from the current node (datagram
semantics), so both functions are pure in ``(current, dst)``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable

from .constellation import (
    ConstellationParams,
    Direction,
    NodeId,
    Region,
    check_node,
    neighbors,
    slot_is_polar,
    slot_latitude_deg,
    slot_phase_deg,
    step,
)

log = logging.getLogger(__name__)


class DegeneratePathError(ValueError):
    pass


class RoutingDeadEndError(RuntimeError):
    pass


class HDir(enum.Enum):
    EAST = "east"
    WEST = "west"
    NONE = "none"


class VDir(enum.Enum):
    # NORTH follows increasing slot index (the direction of motion), which is
    # northbound on the ascending half of the orbit.
    NORTH = "north"
    SOUTH = "south"
    NONE = "none"


_H_TO_DIR = {HDir.EAST: Direction.RIGHT, HDir.WEST: Direction.LEFT}
_V_TO_DIR = {VDir.NORTH: Direction.UP, VDir.SOUTH: Direction.DOWN}


@dataclass(frozen=True)
class PathSpec:
    n_h: int
    n_v: int
    d_h: HDir
    d_v: VDir
    crosses_pole: bool = False

    def __post_init__(self) -> None:
        if (self.n_h == 0) != (self.d_h is HDir.NONE):
            raise ValueError(f"n_h={self.n_h} inconsistent with d_h={self.d_h}")
        if (self.n_v == 0) != (self.d_v is VDir.NONE):
            raise ValueError(f"n_v={self.n_v} inconsistent with d_v={self.d_v}")

    @property
    def hops(self) -> int:
        return self.n_h + self.n_v

    @property
    def horizontal(self) -> Direction | None:
        return _H_TO_DIR.get(self.d_h)

    @property
    def vertical(self) -> Direction | None:
        return _V_TO_DIR.get(self.d_v)


@dataclass(frozen=True)
class HopChoice:
    primary: Direction
    secondary: Direction | None = None

    def __post_init__(self) -> None:
        if self.secondary is not None and self.secondary.is_vertical == self.primary.is_vertical:
            raise ValueError("secondary direction must be orthogonal to primary")


def _ring_walk(m: int, start: int, direction: int, length: int) -> list[int]:
    return [(start + direction * i) % m for i in range(length + 1)]


def _crosses_pole(params: ConstellationParams, slots: list[int]) -> bool:
    """True when the walk passes over a latitude extremum (a pole) strictly inside it."""
    dphi = 360.0 / params.sats_per_plane
    for i in range(1, len(slots) - 1):
        if abs(slot_phase_deg(params, slots[i]) % 180.0 - 90.0) < 1e-9:
            return True
    for a, b in zip(slots, slots[1:]):
        lo = slot_phase_deg(params, a)
        if (b - a) % params.sats_per_plane != 1:
            lo -= dphi
        hi = lo + dphi
        # open interval (lo, hi) against pole phases 90 + 180k
        k = (lo - 90.0) // 180.0 + 1
        pole = 90.0 + 180.0 * k
        if lo < pole < hi:
            return True
    return False


def _vertical_candidates(
    params: ConstellationParams, s1: int, s2: int, needs_horizontal: bool
) -> Iterable[tuple[int, int, list[int]]]:
    """Yield ``(first_step, n_v, slot_walk)`` for hop-minimal vertical options.

    When horizontal hops remain, the walk must visit at least one non-polar
    slot where those hops can be taken.
    """
    m = params.sats_per_plane

    def usable(walk: list[int]) -> bool:
        return not needs_horizontal or any(not slot_is_polar(params, s) for s in walk)

    up = (s2 - s1) % m
    if up == 0:
        if usable([s1]):
            yield 0, 0, [s1]
    else:
        for sign, length in ((1, up), (-1, m - up)):
            walk = _ring_walk(m, s1, sign, length)
            if usable(walk):
                yield sign, length, walk
    if needs_horizontal and slot_is_polar(params, s1):
        # leave the polar cap first, then take the shorter arc to s2
        for sign in (1, -1):
            k = 1
            while slot_is_polar(params, (s1 + sign * k) % m):
                k += 1
            t = (s1 + sign * k) % m
            exit_walk = _ring_walk(m, s1, sign, k)
            rest_up = (s2 - t) % m
            for sign2, length in ((1, rest_up), (-1, (m - rest_up) % m)):
                walk = exit_walk + _ring_walk(m, t, sign2, length)[1:]
                yield sign, k + length, walk


def estimate_direction(
    params: ConstellationParams, src: tuple[int, int], dst: tuple[int, int]
) -> PathSpec:
    """Hop-minimal path parameters from ``src`` to ``dst``.

    Horizontal hops never wrap through the seam. Among equal-length
    candidates the non-pole-crossing one wins, then east, then north.
    """
    src = check_node(params, src)
    dst = check_node(params, dst)
    if src == dst:
        raise DegeneratePathError(f"source and destination coincide at {src}")
    dp = dst.plane - src.plane
    n_h = abs(dp)
    d_h = HDir.NONE if dp == 0 else (HDir.EAST if dp > 0 else HDir.WEST)
    best = None
    for sign, n_v, walk in _vertical_candidates(params, src.slot, dst.slot, n_h > 0):
        crosses = _crosses_pole(params, walk)
        key = (n_h + n_v, crosses, d_h is not HDir.EAST, sign != 1)
        if best is None or key < best[0]:
            best = (key, sign, n_v, crosses)
    assert best is not None  # the equatorial slot is never polar
    _, sign, n_v, crosses = best
    d_v = VDir.NONE if n_v == 0 else (VDir.NORTH if sign == 1 else VDir.SOUTH)
    return PathSpec(n_h, n_v, d_h, d_v, crosses)


def hop_distance(params: ConstellationParams, a: NodeId, b: NodeId) -> int:
    return 0 if a == b else estimate_direction(params, a, b).hops


def enhance_direction(
    params: ConstellationParams,
    current: tuple[int, int],
    dst: tuple[int, int],
    spec: PathSpec | None = None,
    region: Region | None = None,
) -> HopChoice:
    """Label the remaining horizontal/vertical moves as primary and secondary.

    Only live links that keep the path hop-minimal are eligible. With both a
    horizontal and a vertical move available, the vertical one is primary when
    it climbs to higher |latitude| (horizontal hops are cheaper there) and the
    horizontal one is primary otherwise.
    """
    current = check_node(params, current)
    dst = check_node(params, dst)
    if spec is None:
        spec = estimate_direction(params, current, dst)
    remaining = spec.hops
    live = neighbors(params, current, region)

    def productive(d: Direction | None) -> bool:
        if d is None or live[d] is None:
            return False
        return hop_distance(params, live[d], dst) == remaining - 1

    h = spec.horizontal if productive(spec.horizontal) else None
    v = spec.vertical if productive(spec.vertical) else None
    if v is None:
        # polar detours may leave the cap either way; take whichever side is live
        v = next((d for d in (Direction.UP, Direction.DOWN) if productive(d)), None)
    if h is None and v is None:
        raise RoutingDeadEndError(f"no hop-minimal live link from {current} towards {dst}")
    if h is None:
        return HopChoice(v)  # type: ignore[arg-type]
    if v is None:
        return HopChoice(h)
    lat_here = abs(slot_latitude_deg(params, current.slot))
    lat_next = abs(slot_latitude_deg(params, step(params, current, v).slot))
    if lat_next > lat_here + 1e-9:
        return HopChoice(v, h)
    return HopChoice(h, v)


def primary_path(
    params: ConstellationParams,
    src: tuple[int, int],
    dst: tuple[int, int],
    region: Region | None = None,
) -> list[tuple[NodeId, HopChoice | None]]:
    """Hop-by-hop trace following primary directions only; last entry has no choice."""
    node = check_node(params, src)
    dst = check_node(params, dst)
    spec = estimate_direction(params, node, dst)
    trace: list[tuple[NodeId, HopChoice | None]] = []
    for _ in range(spec.hops):
        choice = enhance_direction(params, node, dst, region=region)
        trace.append((node, choice))
        node = step(params, node, choice.primary)
    if node != dst:
        raise RoutingDeadEndError(f"primary walk from {src} ended at {node}, not {dst}")
    trace.append((node, None))
    return trace
