"""Queueing analysis of probabilistic routing on a uniform infinite mesh.

Every node receives Poisson traffic at rate ``lambda_`` and every outgoing
queue is treated as M/M/1 with service rate ``mu``. By symmetry all
horizontal queues share a mean length ``N_h`` and all vertical ones ``N_v``;
the routing probabilities depend on those means through the piggybacked
metrics, giving a two-variable fixed point.
"""

from __future__ import annotations

import enum
import heapq
import math
import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .congestion import f_p


class IndeterminateInputError(ValueError):
    pass


class UnstableSolutionError(ValueError):
    pass


class MeshVariant(enum.Enum):
    PAPER_SIMPLIFIED = "paper"
    EXACT_FP = "exact"


@dataclass(frozen=True)
class MeshParams:
    p_h: float = 0.5
    p_pref: float = 0.9
    lambda_: float = 1.0
    mu: float = 1.0
    variant: MeshVariant = MeshVariant.EXACT_FP

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_h <= 1.0 and 0.0 <= self.p_pref <= 1.0):
            raise ValueError("p_h and p_pref must lie in [0, 1]")
        if self.lambda_ < 0 or not self.mu > 0:
            raise ValueError("need lambda_ >= 0 and mu > 0")

    @property
    def load(self) -> float:
        return self.lambda_ / self.mu


@dataclass(frozen=True)
class MeshSolution:
    n_h: float
    n_v: float
    rho_h: float
    rho_v: float
    p_right: float
    p_up: float
    stable: bool
    iterations: int


def mean_metrics(n_h: float, n_v: float) -> tuple[float, float]:
    """Expected metric from a horizontal and from a vertical neighbour."""
    return (n_h + 2.0 * n_v) / 3.0, (n_v + 2.0 * n_h) / 3.0


def _direction_prob(
    n_same: float, n_other: float, share: float, p_pref: float, variant: MeshVariant
) -> float:
    # share = probability the primary lies on this axis
    if variant is MeshVariant.PAPER_SIMPLIFIED:
        if n_same == 0 and n_other == 0:
            raise IndeterminateInputError("closed form is 0/0 at N_h = N_v = 0")
        num = n_other + 2.0 * n_same
        first = p_pref * share * num / (n_same * (1 + p_pref) + n_other * (2 - p_pref))
        second = (1 - share) * (1 - p_pref) * num / (n_other * (1 + p_pref) + n_same * (2 - p_pref))
        return 0.5 * (first + second)
    m_same, m_other = mean_metrics(n_same, n_other)
    as_primary = f_p(m_same, m_other, p_pref)
    as_secondary = 1.0 - f_p(m_other, m_same, p_pref)
    return 0.5 * share * as_primary + 0.5 * (1 - share) * as_secondary


def p_right(n_h: float, n_v: float, params: MeshParams) -> float:
    return _direction_prob(n_h, n_v, params.p_h, params.p_pref, params.variant)


def p_up(n_h: float, n_v: float, params: MeshParams) -> float:
    return _direction_prob(n_v, n_h, 1.0 - params.p_h, params.p_pref, params.variant)


def p_right_text_form(n_h: float, n_v: float, params: MeshParams) -> float:
    """Four-term sum using f_p (not its complement) for the secondary terms.

    Kept only to show that this reading does not reduce to the closed form.
    """
    m_h, m_v = mean_metrics(n_h, n_v)
    return 0.5 * params.p_h * f_p(m_h, m_v, params.p_pref) + 0.5 * (1 - params.p_h) * f_p(
        m_v, m_h, params.p_pref
    )


def _mm1_len(rho: float) -> float:
    return rho / (1.0 - rho)


def _solve_by_split(params: MeshParams, tol: float, scan_points: int = 4001) -> MeshSolution | None:
    """Root of ``P_right(x) = x`` over the routing split ``x = P(right)``.

    Since ``P(right) + P(up) = 1/2``, the fixed point is one-dimensional in
    ``x``; only splits keeping both utilisations below one are scanned. Among
    several roots the least congested is returned.
    """
    load = params.load
    lo = max(0.0, 0.5 - 1.0 / load) if load > 0 else 0.0
    hi = min(0.5, 1.0 / load) if load > 0 else 0.5
    eps = 1e-12
    if hi - lo <= 2 * eps:
        return None

    def g(x: float) -> float:
        n_h, n_v = _mm1_len(load * x), _mm1_len(load * (0.5 - x))
        return p_right(n_h, n_v, params) - x

    xs = np.linspace(lo + eps, hi - eps, scan_points)
    gs = np.array([g(x) for x in xs])
    best = None
    for i in np.flatnonzero(np.sign(gs[:-1]) != np.sign(gs[1:])):
        x = brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        n_h, n_v = _mm1_len(load * x), _mm1_len(load * (0.5 - x))
        if best is None or n_h + n_v < best[0] + best[1]:
            best = (n_h, n_v)
    if best is None:
        return None
    n_h, n_v = best
    pr, pu = p_right(n_h, n_v, params), p_up(n_h, n_v, params)
    sol = MeshSolution(_mm1_len(load * pr), _mm1_len(load * pu), load * pr, load * pu, pr, pu, True, 0)
    # near rho = 1 the map is ill-conditioned, so accept a relative residual
    if abs(sol.n_h - n_h) >= tol * max(1.0, n_h) or abs(sol.n_v - n_v) >= tol * max(1.0, n_v):
        return None
    return sol


def solve_fixed_point(
    params: MeshParams, tol: float = 1e-10, max_iter: int = 100_000, damping: float = 0.5
) -> MeshSolution:
    """Damped iteration ``N <- (1-g) N + g rho/(1-rho)`` on both axes.

    Converges when the undamped update moves each component by less than
    ``tol``. If an iterate pushes a utilisation to one or above, the split
    search decides whether a stable point exists at all; when none does (or
    iterations run out) ``stable=False`` comes back with the last iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    load = params.load
    n_h = n_v = 1e-6 if params.variant is MeshVariant.EXACT_FP else 1.0
    pr = pu = 0.25
    for it in range(1, max_iter + 1):
        pr = p_right(n_h, n_v, params)
        pu = p_up(n_h, n_v, params)
        rho_h, rho_v = load * pr, load * pu
        if rho_h >= 1.0 or rho_v >= 1.0:
            sol = _solve_by_split(params, tol)
            if sol is not None:
                return MeshSolution(**{**sol.__dict__, "iterations": it})
            return MeshSolution(n_h, n_v, rho_h, rho_v, pr, pu, False, it)
        target_h = _mm1_len(rho_h)
        target_v = _mm1_len(rho_v)
        if abs(target_h - n_h) < tol and abs(target_v - n_v) < tol:
            return MeshSolution(target_h, target_v, rho_h, rho_v, pr, pu, True, it)
        n_h += damping * (target_h - n_h)
        n_v += damping * (target_v - n_v)
    return MeshSolution(n_h, n_v, load * pr, load * pu, pr, pu, False, max_iter)


def expected_path_delay(sol: MeshSolution, hops_h: int = 3, hops_v: int = 3) -> float:
    """Expected queueing delay along a path, in units of one transmission time."""
    if not sol.stable:
        raise UnstableSolutionError("delay undefined for an unstable operating point")
    return hops_h * sol.n_h + hops_v * sol.n_v


class MicroSimResult(NamedTuple):
    n_h: float
    n_v: float
    diverging: bool


# direction index -> (dx, dy); 0 right, 1 left, 2 up, 3 down
_TORUS_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))
_TORUS_OPPOSITE = (1, 0, 3, 2)


def mesh_micro_sim(
    params: MeshParams,
    torus_size: int = 8,
    sim_packets: int = 200_000,
    seed: int = 0,
    warmup_fraction: float = 0.05,
) -> MicroSimResult:
    """Event-driven oracle for the mesh analysis on a wrap-around torus.

    Each node gets Poisson(``lambda_``) packets. A packet's primary is
    horizontal with probability ``p_h`` (left/right equally likely) and its
    secondary is one of the two orthogonal directions. The choice uses only
    the last metric heard from each neighbour, which is the mean length of
    that neighbour's other three queues, stamped when the neighbour enqueued
    the packet it sent. Packets leave the system after one exponential
    service at rate ``mu``. Returns time-averaged queue lengths per axis.
    """
    if torus_size < 4:
        raise ValueError("torus_size must be >= 4")
    if params.lambda_ == 0 or sim_packets <= 0:
        return MicroSimResult(0.0, 0.0, False)

    rng = random.Random(seed)
    rand = rng.random
    expo = rng.expovariate
    k = torus_size
    n_nodes = k * k
    lam, mu, p_h, p_pref = params.lambda_, params.mu, params.p_h, params.p_pref

    neighbour = [
        [((i % k + dx) % k) + ((i // k + dy) % k) * k for dx, dy in _TORUS_STEPS]
        for i in range(n_nodes)
    ]
    qlen = [[0, 0, 0, 0] for _ in range(n_nodes)]
    metric = [[0.0, 0.0, 0.0, 0.0] for _ in range(n_nodes)]
    # per-queue FIFO of metrics stamped at enqueue time
    fifo: list[list[list[float]]] = [[[], [], [], []] for _ in range(n_nodes)]
    heads = [[0, 0, 0, 0] for _ in range(n_nodes)]
    last_t = [[0.0, 0.0, 0.0, 0.0] for _ in range(n_nodes)]
    area = [0.0, 0.0]  # horizontal, vertical (queue-length x time)
    half_area = [0.0, 0.0]

    # events: (time, seq, kind, node, direction); kind 0 = arrival, 1 = departure
    events: list[tuple[float, int, int, int, int]] = []
    seq = 0
    for i in range(n_nodes):
        heapq.heappush(events, (expo(lam), seq, 0, i, 0))
        seq += 1

    horizon = sim_packets / (lam * n_nodes)
    t_start = warmup_fraction * horizon
    t_half = 0.5 * (t_start + horizon)
    generated = 0

    def account(i: int, d: int, now: float) -> None:
        t0 = last_t[i][d]
        if now > t_start:
            lo = t0 if t0 > t_start else t_start
            w = qlen[i][d] * (now - lo)
            area[d >> 1] += w
            if lo < t_half:
                half_area[d >> 1] += qlen[i][d] * ((now if now < t_half else t_half) - lo)
        last_t[i][d] = now

    while events:
        now, _, kind, i, d = heapq.heappop(events)
        if now > horizon:
            break
        if kind == 0:
            generated += 1
            if generated < sim_packets:
                heapq.heappush(events, (now + expo(lam), seq, 0, i, 0))
                seq += 1
            if rand() < p_h:
                prim = 0 if rand() < 0.5 else 1
                sec = 2 if rand() < 0.5 else 3
            else:
                prim = 2 if rand() < 0.5 else 3
                sec = 0 if rand() < 0.5 else 1
            m = metric[i]
            c_p, c_s = m[prim], m[sec]
            go = prim if rand() < (c_s + 1.0) * p_pref / (c_p + 1.0 + (c_s - c_p) * p_pref) else sec
            q = qlen[i]
            account(i, go, now)
            q[go] += 1
            fifo[i][go].append((q[0] + q[1] + q[2] + q[3] - q[go]) / 3.0)
            if q[go] == 1:
                heapq.heappush(events, (now + expo(mu), seq, 1, i, go))
                seq += 1
        else:
            account(i, d, now)
            qlen[i][d] -= 1
            stamped = fifo[i][d][heads[i][d]]
            heads[i][d] += 1
            if heads[i][d] > 1024:
                del fifo[i][d][: heads[i][d]]
                heads[i][d] = 0
            metric[neighbour[i][d]][_TORUS_OPPOSITE[d]] = stamped
            if qlen[i][d] > 0:
                heapq.heappush(events, (now + expo(mu), seq, 1, i, d))
                seq += 1

    end = min(now, horizon) if events else now
    for i in range(n_nodes):
        for d in range(4):
            account(i, d, end)
    span = end - t_start
    if span <= 0:
        return MicroSimResult(0.0, 0.0, False)
    per_axis = 2 * n_nodes
    n_h = area[0] / (span * per_axis)
    n_v = area[1] / (span * per_axis)
    first_span = t_half - t_start
    second = [(area[a] - half_area[a]) / ((end - t_half) * per_axis) for a in (0, 1)]
    first = [half_area[a] / (first_span * per_axis) for a in (0, 1)]
    diverging = any(s > 1.5 * f + 5.0 for f, s in zip(first, second))
    return MicroSimResult(n_h, n_v, diverging)
