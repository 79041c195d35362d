"""Primary/secondary selection policies.

``choose_dra`` is the plain buffer-threshold rule. ``choose_probabilistic``
blends local queue length with the traffic metric piggybacked by the
neighbour and, once the primary looks congested, picks the primary with
probability :func:`f_p`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .constellation import DIRECTIONS, Direction
from .routing import HopChoice


class PolicyKind(enum.Enum):
    DRA_THRESHOLD = "dra"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class PolicyParams:
    kind: PolicyKind = PolicyKind.PROBABILISTIC
    n_threshold: int = 150
    n_buffer: int = 200
    p_pref: float = 0.9
    w_ngbr: float = 0.25
    w_buffer: float = 0.8

    def __post_init__(self) -> None:
        if not 0 < self.n_threshold <= self.n_buffer:
            raise ValueError(
                f"need 0 < n_threshold <= n_buffer, got {self.n_threshold}, {self.n_buffer}"
            )
        for name in ("p_pref", "w_ngbr", "w_buffer"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class NeighborView:
    """Per-node state the policies read: outgoing queue lengths and last metrics.

    ``live`` lists the directions that have a link; dead directions are
    ignored by :func:`outgoing_metric`.
    """

    queue_len: dict[Direction, int] = field(default_factory=lambda: dict.fromkeys(DIRECTIONS, 0))
    last_metric: dict[Direction, float] = field(
        default_factory=lambda: dict.fromkeys(DIRECTIONS, 0.0)
    )
    live: tuple[Direction, ...] = DIRECTIONS

    def __post_init__(self) -> None:
        # fixed order keeps float sums identical across processes
        self.live = tuple(d for d in DIRECTIONS if d in self.live)


def outgoing_metric(view: NeighborView, dest_neighbor: Direction, w_ngbr: float) -> float:
    total = 0.0
    count = 0
    for d in view.live:
        if d is dest_neighbor:
            continue
        total += w_ngbr * view.last_metric[d] + (1.0 - w_ngbr) * view.queue_len[d]
        count += 1
    # averaging over live links only; with all four live this is the divide-by-3 form
    return total / count if count else 0.0


def congestion_level(queue_len: float, last_metric: float, w_buffer: float) -> float:
    return w_buffer * queue_len + (1.0 - w_buffer) * last_metric


def f_p(c_p: float, c_s: float, p_pref: float) -> float:
    """Probability of taking the primary; equals ``p_pref`` when ``c_p == c_s``."""
    # ratio first so that c_p == c_s returns p_pref bit for bit
    return p_pref * ((c_s + 1.0) / (c_p + 1.0 + (c_s - c_p) * p_pref))


def choose_dra(view: NeighborView, choice: HopChoice, params: PolicyParams) -> Direction:
    if view.queue_len[choice.primary] < params.n_threshold:
        return choice.primary
    if choice.secondary is not None and view.queue_len[choice.secondary] < params.n_threshold:
        return choice.secondary
    return choice.primary


def choose_probabilistic(
    view: NeighborView, choice: HopChoice, params: PolicyParams, random_draw: float
) -> Direction:
    primary, secondary = choice.primary, choice.secondary
    c_p = congestion_level(view.queue_len[primary], view.last_metric[primary], params.w_buffer)
    if c_p < params.n_threshold or secondary is None:
        return primary
    c_s = congestion_level(view.queue_len[secondary], view.last_metric[secondary], params.w_buffer)
    if random_draw < f_p(c_p, c_s, params.p_pref):
        return primary
    return secondary


def choose(
    view: NeighborView, choice: HopChoice, params: PolicyParams, random_draw: float
) -> Direction:
    if params.kind is PolicyKind.DRA_THRESHOLD:
        return choose_dra(view, choice, params)
    return choose_probabilistic(view, choice, params, random_draw)
