"""Discrete-event simulation of a rectangular sub-region of the constellation.

Each node owns four FIFO output buffers, one per direction, each drained by
its own transmitter. Packets are routed hop by hop: the routing table gives
a primary/secondary pair and the configured policy picks one. Every packet
carries the sender's traffic metric, which the receiver stores as the latest
metric heard from that neighbour.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import logging
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace

from .congestion import NeighborView, PolicyKind, PolicyParams, choose, outgoing_metric
from .constellation import (
    ConstellationParams,
    Direction,
    NodeId,
    Region,
    neighbors,
    prop_delay_s,
)
from .routing import HopChoice, RoutingDeadEndError, enhance_direction, primary_path

log = logging.getLogger(__name__)

PAPER_REGION = Region.from_corners((2, 3), (7, 9))


class ConfigError(ValueError):
    pass


class UnreachableError(ConfigError):
    pass


@dataclass(frozen=True)
class SimConfig:
    constellation: ConstellationParams = field(default_factory=ConstellationParams)
    region: Region = PAPER_REGION
    lambda_in: float = 1.5e4
    t_step: float = 0.1
    n_pairs: int = 10
    n_packets: int = 500
    packet_size_bits: int = 8192
    link_rate_bps: float = 2.5e7
    policy: PolicyParams = field(default_factory=PolicyParams)
    generation_duration: float = 1.0
    seed: int = 0
    replications: int = 20
    hop_limit: int | None = None

    def __post_init__(self) -> None:
        c = self.constellation
        r = self.region
        for corner in ((r.plane_min, r.slot_min), (r.plane_max, r.slot_max)):
            if not (0 <= corner[0] < c.n_planes and 0 <= corner[1] < c.sats_per_plane):
                raise ConfigError(f"region corner {corner} outside the constellation")
        if self.lambda_in < 0:
            raise ConfigError("lambda_in must be non-negative")
        for name in ("t_step", "link_rate_bps", "generation_duration"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_pairs", "n_packets", "packet_size_bits", "replications"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        n = len(r)
        if self.n_pairs > n * (n - 1):
            raise ConfigError(f"n_pairs={self.n_pairs} exceeds the {n * (n - 1)} ordered pairs")

    @property
    def t_tx(self) -> float:
        return self.packet_size_bits / self.link_rate_bps

    @property
    def max_hops(self) -> int:
        if self.hop_limit is not None:
            return self.hop_limit
        return 4 * (self.constellation.n_planes + self.constellation.sats_per_plane)


@dataclass
class SimStats:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    loop_dropped: int = 0
    avg_e2e_delay: float = 0.0
    per_flow_delays: dict[tuple[NodeId, NodeId], float] = field(default_factory=dict)
    avg_prop_delay: float = 0.0
    avg_queueing_delay: float = 0.0
    max_queue_observed: int = 0
    # self-checks accumulated while running
    causality_violations: int = 0
    fifo_violations: int = 0
    max_decomposition_error: float = 0.0
    end_time: float = 0.0

    @property
    def drop_rate(self) -> float:
        return self.dropped / self.generated if self.generated else 0.0


class Packet:
    __slots__ = (
        "id", "src", "dst", "created_at", "header_metric", "hop_count",
        "queue_wait_accum", "prop_accum", "tx_accum", "enqueued_at", "enqueue_seq",
    )

    def __init__(self, pid: int, src: NodeId, dst: NodeId, created_at: float) -> None:
        self.id = pid
        self.src = src
        self.dst = dst
        self.created_at = created_at
        self.header_metric = 0.0
        self.hop_count = 0
        self.queue_wait_accum = 0.0
        self.prop_accum = 0.0
        self.tx_accum = 0.0
        self.enqueued_at = 0.0
        self.enqueue_seq = 0


@functools.lru_cache(maxsize=32)
def routing_table(
    params: ConstellationParams, region: Region
) -> dict[tuple[NodeId, NodeId], HopChoice]:
    """Primary/secondary choice for every (node, destination) pair in the region.

    Raises :class:`UnreachableError` if some pair cannot be routed inside the
    region along a hop-minimal path.
    """
    nodes = region.nodes()
    table: dict[tuple[NodeId, NodeId], HopChoice] = {}
    for dst in nodes:
        for node in nodes:
            if node == dst:
                continue
            try:
                table[node, dst] = enhance_direction(params, node, dst, region=region)
            except RoutingDeadEndError as exc:
                raise UnreachableError(str(exc)) from exc
    for src in nodes:
        for dst in nodes:
            if src != dst:
                try:
                    primary_path(params, src, dst, region=region)
                except RoutingDeadEndError as exc:
                    raise UnreachableError(str(exc)) from exc
    return table


# event kinds; order only matters for readability, ties break on sequence number
_GENERATE, _INJECT, _TX_DONE, _ARRIVE = range(4)


class Simulator:
    def __init__(self, config: SimConfig) -> None:
        self.config = config
        params = config.constellation
        self.params = params
        self.region = config.region
        self.nodes = self.region.nodes()
        self.table = routing_table(params, self.region)
        self.links: dict[NodeId, dict[Direction, NodeId | None]] = {}
        self.prop: dict[tuple[NodeId, Direction], float] = {}
        self.views: dict[NodeId, NeighborView] = {}
        self.queues: dict[tuple[NodeId, Direction], deque[Packet]] = {}
        self.busy: dict[tuple[NodeId, Direction], Packet | None] = {}
        self.last_departed_seq: dict[tuple[NodeId, Direction], int] = {}
        for node in self.nodes:
            live = neighbors(params, node, self.region)
            self.links[node] = live
            self.views[node] = NeighborView(
                live=tuple(d for d, other in live.items() if other is not None)
            )
            for d, other in live.items():
                if other is not None:
                    self.prop[node, d] = prop_delay_s(params, node, other)
                    self.queues[node, d] = deque()
                    self.busy[node, d] = None
                    self.last_departed_seq[node, d] = -1
        self.pairs = [(s, d) for s in self.nodes for d in self.nodes if s != d]
        self.rng = random.Random(config.seed)
        self.t_tx = config.t_tx
        self.max_hops = config.max_hops
        self.stats = SimStats()
        self.now = 0.0
        self._events: list[tuple[float, int, int, object, object]] = []
        self._seq = itertools.count()
        self._pid = itertools.count()
        self._enq_seq = itertools.count()
        self._delays: list[float] = []
        self._prop_sum = 0.0
        self._queue_sum = 0.0
        self._flow_delays: dict[tuple[NodeId, NodeId], list[float]] = defaultdict(list)

    def schedule(self, t: float, kind: int, a: object = None, b: object = None) -> None:
        heapq.heappush(self._events, (t, next(self._seq), kind, a, b))

    def run(self) -> SimStats:
        cfg = self.config
        if cfg.lambda_in > 0:
            self.schedule(0.0, _GENERATE)
        events = self._events
        stats = self.stats
        while events:
            t, _, kind, a, b = heapq.heappop(events)
            if t < self.now:
                stats.causality_violations += 1
            self.now = t
            if kind == _TX_DONE:
                self.on_transmit_complete(a, b)  # type: ignore[arg-type]
            elif kind == _ARRIVE:
                self.on_arrival(a, b[0], b[1])  # type: ignore[arg-type,index]
            elif kind == _INJECT:
                stats.generated += 1
                self.forward(a.src, a)  # type: ignore[attr-defined]
            else:
                self.generate_traffic(t)
        return self._finish()

    def draw_pairs(self) -> list[tuple[NodeId, NodeId]]:
        """Distinct ordered (src, dst) pairs for one window, uniform over the region."""
        return self.rng.sample(self.pairs, self.config.n_pairs)

    def generate_traffic(self, now: float) -> None:
        cfg = self.config
        rng = self.rng
        for src, dst in self.draw_pairs():
            t = now
            for _ in range(cfg.n_packets):
                t += rng.expovariate(cfg.lambda_in)
                self.schedule(t, _INJECT, Packet(next(self._pid), src, dst, t))
        nxt = now + cfg.t_step
        if nxt < cfg.generation_duration - 1e-12:
            self.schedule(nxt, _GENERATE)

    def on_arrival(self, node: NodeId, packet: Packet, from_dir: Direction) -> None:
        self.views[node].last_metric[from_dir] = packet.header_metric
        self.forward(node, packet)

    def forward(self, node: NodeId, packet: Packet) -> None:
        stats = self.stats
        if node == packet.dst:
            self._deliver(packet)
            return
        if packet.hop_count >= self.max_hops:
            stats.dropped += 1
            stats.loop_dropped += 1
            return
        view = self.views[node]
        policy = self.config.policy
        choice = self.table[node, packet.dst]
        draw = self.rng.random() if policy.kind is PolicyKind.PROBABILISTIC else 0.0
        d = choose(view, choice, policy, draw)
        qlen = view.queue_len[d]
        if qlen >= policy.n_buffer:
            stats.dropped += 1
            return
        packet.header_metric = outgoing_metric(view, d, policy.w_ngbr)
        packet.enqueued_at = self.now
        packet.enqueue_seq = next(self._enq_seq)
        view.queue_len[d] = qlen + 1
        if qlen + 1 > stats.max_queue_observed:
            stats.max_queue_observed = qlen + 1
        key = (node, d)
        if self.busy[key] is None:
            self._start_tx(key, packet)
        else:
            self.queues[key].append(packet)

    def _start_tx(self, key: tuple[NodeId, Direction], packet: Packet) -> None:
        if packet.enqueue_seq < self.last_departed_seq[key]:
            self.stats.fifo_violations += 1
        self.last_departed_seq[key] = packet.enqueue_seq
        packet.queue_wait_accum += self.now - packet.enqueued_at
        self.busy[key] = packet
        self.schedule(self.now + self.t_tx, _TX_DONE, key[0], key[1])

    def on_transmit_complete(self, node: NodeId, d: Direction) -> None:
        key = (node, d)
        packet = self.busy[key]
        assert packet is not None
        self.busy[key] = None
        self.views[node].queue_len[d] -= 1
        prop = self.prop[key]
        packet.tx_accum += self.t_tx
        packet.prop_accum += prop
        packet.hop_count += 1
        other = self.links[node][d]
        self.schedule(self.now + prop, _ARRIVE, other, (packet, d.opposite))
        queue = self.queues[key]
        if queue:
            self._start_tx(key, queue.popleft())

    def _deliver(self, packet: Packet) -> None:
        stats = self.stats
        stats.delivered += 1
        delay = self.now - packet.created_at
        parts = packet.queue_wait_accum + packet.tx_accum + packet.prop_accum
        err = abs(delay - parts)
        if err > stats.max_decomposition_error:
            stats.max_decomposition_error = err
        self._delays.append(delay)
        self._prop_sum += packet.prop_accum
        self._queue_sum += packet.queue_wait_accum
        self._flow_delays[packet.src, packet.dst].append(delay)

    def _finish(self) -> SimStats:
        stats = self.stats
        stats.end_time = self.now
        n = len(self._delays)
        if n:
            stats.avg_e2e_delay = sum(self._delays) / n
            stats.avg_prop_delay = self._prop_sum / n
            stats.avg_queueing_delay = self._queue_sum / n
        stats.per_flow_delays = {
            k: sum(v) / len(v) for k, v in sorted(self._flow_delays.items())
        }
        return stats


def run(config: SimConfig) -> SimStats:
    """Run one replication to full drain and return its statistics."""
    stats = Simulator(config).run()
    log.debug(
        "seed=%d policy=%s generated=%d delivered=%d dropped=%d e2e=%.6f",
        config.seed, config.policy.kind.value, stats.generated, stats.delivered,
        stats.dropped, stats.avg_e2e_delay,
    )
    return stats


def replicate(config: SimConfig, replications: int | None = None) -> list[tuple[int, SimStats]]:
    """Independent replications with seeds ``config.seed + k``."""
    n = config.replications if replications is None else replications
    out = []
    for k in range(n):
        seed = config.seed + k
        out.append((seed, run(replace(config, seed=seed))))
    return out
