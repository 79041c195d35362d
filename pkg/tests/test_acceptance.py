"""Acceptance criteria 1-9, one test each, at the stated tolerances.

Each test prints a PASS/FAIL line; the lines are repeated in the terminal
summary under "acceptance criteria".
"""

import math
import random
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats as sps

from leodra.congestion import PolicyKind, PolicyParams, f_p
from leodra.constellation import ConstellationParams, Region, all_nodes
from leodra.desim import SimConfig, replicate, run
from leodra.meshmodel import (
    MeshParams,
    MeshVariant,
    expected_path_delay,
    mesh_micro_sim,
    solve_fixed_point,
)
from leodra.routing import estimate_direction

from conftest import bfs_distances

REPLICATIONS = 20
KINDS = (PolicyKind.DRA_THRESHOLD, PolicyKind.PROBABILISTIC)


class PolicyRuns:
    """Replication sets shared by criteria 6, 7 and 8, computed once per session."""

    def __init__(self) -> None:
        self.cache: dict[tuple[int, PolicyKind], list] = {}
        self.elapsed: dict[tuple[int, PolicyKind], float] = {}

    @staticmethod
    def config(n_buffer: int, kind: PolicyKind) -> SimConfig:
        threshold = math.floor(0.75 * n_buffer + 0.5)
        policy = PolicyParams(kind=kind, n_buffer=n_buffer, n_threshold=threshold)
        return SimConfig(lambda_in=1.5e4, policy=policy, seed=0)

    def get(self, n_buffer: int, kind: PolicyKind) -> list:
        key = (n_buffer, kind)
        if key not in self.cache:
            t0 = time.perf_counter()
            self.cache[key] = replicate(self.config(n_buffer, kind), REPLICATIONS)
            self.elapsed[key] = time.perf_counter() - t0
        return self.cache[key]

    def delays(self, n_buffer: int, kind: PolicyKind) -> np.ndarray:
        return np.array([s.avg_e2e_delay for _, s in self.get(n_buffer, kind)])


@pytest.fixture(scope="session")
def policy_runs() -> PolicyRuns:
    return PolicyRuns()


def lower_with_confidence(lower: np.ndarray, higher: np.ndarray) -> tuple[bool, float]:
    # one-sided Welch test at the 5% level
    res = sps.ttest_ind(lower, higher, equal_var=False, alternative="less")
    return bool(res.pvalue < 0.05), float(res.pvalue)


def test_criterion_1_fp_law(criterion_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 10_000
    cp = rng.uniform(0, 1e4, n)
    cs = rng.uniform(0, 1e4, n)
    p = rng.uniform(0, 1, n)
    # perturbations relative to the magnitude so they survive rounding
    delta = rng.uniform(1e-3, 10, n)
    interior = (p > 0) & (p < 1)

    exact = all(f_p(float(c), float(c), float(q)) == float(q) for c, q in zip(cp, p))
    base = np.array([f_p(a, b, q) for a, b, q in zip(cp, cs, p)])
    up_p = np.array([f_p(a + d, b, q) for a, b, q, d in zip(cp, cs, p, delta)])
    up_s = np.array([f_p(a, b + d, q) for a, b, q, d in zip(cp, cs, p, delta)])
    mono = bool(np.all(up_p[interior] < base[interior]) and np.all(up_s[interior] > base[interior]))
    complement = (cp + 1) * (1 - p) / (cp + 1 + (cs - cp) * p)
    comp_err = float(np.max(np.abs((1 - base) - complement)))
    elapsed = time.perf_counter() - t0

    ok = exact and mono and comp_err <= 1e-12 and elapsed < 1.0
    criterion_report(
        1, ok,
        f"f_p(c,c,p)==p exact={exact}, monotone={mono}, complement err={comp_err:.2e}, "
        f"{elapsed:.2f}s",
    )
    assert ok


def test_criterion_2_routing_matches_bfs(criterion_report):
    t0 = time.perf_counter()
    small = ConstellationParams(n_planes=6, sats_per_plane=8)
    small_nodes = list(all_nodes(small))
    mismatches = 0
    checked = 0
    for src in small_nodes:
        dist = bfs_distances(small, src)
        for dst in small_nodes:
            if src != dst:
                checked += 1
                mismatches += estimate_direction(small, src, dst).hops != dist[dst]

    paper = ConstellationParams(n_planes=12, sats_per_plane=24)
    nodes = list(all_nodes(paper))
    rng = random.Random(99)
    bfs_cache = {}
    for _ in range(1000):
        src, dst = rng.sample(nodes, 2)
        if src not in bfs_cache:
            bfs_cache[src] = bfs_distances(paper, src)
        checked += 1
        mismatches += estimate_direction(paper, src, dst).hops != bfs_cache[src][dst]
    elapsed = time.perf_counter() - t0

    ok = mismatches == 0 and elapsed < 10.0
    criterion_report(2, ok, f"{checked} pairs, {mismatches} mismatches, {elapsed:.2f}s")
    assert ok


def test_criterion_3_symmetric_fixed_point(criterion_report):
    sol = solve_fixed_point(MeshParams(p_h=0.5, lambda_=2.0, variant=MeshVariant.EXACT_FP))
    ok = sol.stable and abs(sol.n_h - 1) <= 1e-6 and abs(sol.n_v - 1) <= 1e-6
    criterion_report(3, ok, f"N_h={sol.n_h:.9f} N_v={sol.n_v:.9f}")
    assert ok


def test_criterion_4_analysis_vs_micro_sim(criterion_report):
    t0 = time.perf_counter()
    lines = []
    all_ok = True
    for p_h in (0.5, 0.7):
        for load in (1.0, 2.0, 3.0):
            params = MeshParams(p_h=p_h, lambda_=load, variant=MeshVariant.EXACT_FP)
            sol = solve_fixed_point(params)
            sim = mesh_micro_sim(params, torus_size=8, sim_packets=1_000_000, seed=1)
            if not sol.stable:
                all_ok = False
                lines.append(
                    f"({p_h},{load}) no stable fixed point; sim N_h={sim.n_h:.2f} "
                    f"N_v={sim.n_v:.2f} diverging={sim.diverging}"
                )
                continue
            err_h = abs(sol.n_h - sim.n_h) / sol.n_h
            err_v = abs(sol.n_v - sim.n_v) / sol.n_v
            ok = err_h <= 0.10 and err_v <= 0.10
            all_ok &= ok
            lines.append(
                f"({p_h},{load}) N_h {sol.n_h:.3f}/{sim.n_h:.3f} ({err_h:.1%}) "
                f"N_v {sol.n_v:.3f}/{sim.n_v:.3f} ({err_v:.1%}) {'ok' if ok else 'off'}"
            )
    elapsed = time.perf_counter() - t0
    all_ok &= elapsed < 120.0
    criterion_report(4, all_ok, "; ".join(lines) + f"; {elapsed:.0f}s")
    assert all_ok


def test_criterion_5_delay_curve_shape(criterion_report):
    ok = True
    details = []
    for variant in MeshVariant:
        loads, delays = [], []
        for load in np.arange(0.0, 4.0, 0.02):
            sol = solve_fixed_point(MeshParams(p_h=0.5, lambda_=float(load), variant=variant))
            if not sol.stable:
                break
            loads.append(float(load))
            delays.append(expected_path_delay(sol, 3, 3))
        d1 = np.diff(delays)
        d2 = np.diff(delays, 2)
        ok &= len(delays) > 10 and bool(np.all(d1 > 0)) and bool(np.all(d2 > 0))
        details.append(
            f"{variant.value}: {len(delays)} stable points up to lambda/mu={loads[-1]:.2f}, "
            f"min slope {d1.min():.3g}, min curvature {d2.min():.3g}"
        )
    criterion_report(5, ok, "; ".join(details))
    assert ok


def test_criterion_6_probabilistic_beats_dra(criterion_report, policy_runs):
    dra = policy_runs.delays(200, PolicyKind.DRA_THRESHOLD)
    prob = policy_runs.delays(200, PolicyKind.PROBABILISTIC)
    gap = dra.mean() - prob.mean()
    confident, pvalue = lower_with_confidence(prob, dra)
    elapsed = policy_runs.elapsed[200, PolicyKind.DRA_THRESHOLD] + policy_runs.elapsed[200, PolicyKind.PROBABILISTIC]
    ok = confident and gap >= 1e-3 and elapsed < 600
    criterion_report(
        6, ok,
        f"DRA {dra.mean() * 1e3:.2f} ms, probabilistic {prob.mean() * 1e3:.2f} ms, "
        f"gap {gap * 1e3:.2f} ms, one-sided p={pvalue:.2g}, {elapsed:.0f}s",
    )
    assert ok


def test_criterion_7_large_buffer_convergence(criterion_report, policy_runs):
    parts = []
    ok = True
    for n_buffer in (1000, 2000):
        dra = policy_runs.delays(n_buffer, PolicyKind.DRA_THRESHOLD).mean()
        prob = policy_runs.delays(n_buffer, PolicyKind.PROBABILISTIC).mean()
        rel = abs(dra - prob) / min(dra, prob)
        ok &= rel < 0.05
        parts.append(f"N_buffer={n_buffer}: DRA {dra * 1e3:.1f} ms, prob {prob * 1e3:.1f} ms ({rel:.1%})")
    dra200 = policy_runs.delays(200, PolicyKind.DRA_THRESHOLD)
    prob200 = policy_runs.delays(200, PolicyKind.PROBABILISTIC)
    confident, pvalue = lower_with_confidence(prob200, dra200)
    ok &= confident
    parts.append(f"N_buffer=200 probabilistic lower p={pvalue:.2g}")
    criterion_report(7, ok, "; ".join(parts))
    assert ok


def _invariant_failures(config: SimConfig, stats) -> list[str]:
    bad = []
    if stats.generated != stats.delivered + stats.dropped:
        bad.append("conservation")
    if stats.causality_violations:
        bad.append("causality")
    if stats.fifo_violations:
        bad.append("fifo")
    if stats.max_decomposition_error >= 1e-9:
        bad.append("decomposition")
    if stats.max_queue_observed > config.policy.n_buffer:
        bad.append("buffer")
    return bad


def test_criterion_8_simulator_invariants(criterion_report, policy_runs):
    failures = []
    count = 0
    for n_buffer in (200, 1000, 2000):
        for kind in KINDS:
            base = PolicyRuns.config(n_buffer, kind)
            for seed, stats in policy_runs.get(n_buffer, kind):
                count += 1
                for name in _invariant_failures(replace(base, seed=seed), stats):
                    failures.append(f"{name}@{n_buffer}/{kind.value}/{seed}")
    # bit-identical reruns of the first replication of each heavy-load set
    for kind in KINDS:
        cfg = PolicyRuns.config(200, kind)
        if run(cfg) != policy_runs.get(200, kind)[0][1]:
            failures.append(f"determinism@{kind.value}")
    zero = _zero_load_config()
    stats = run(zero)
    count += 1
    failures.extend(f"{name}@zero-load" for name in _invariant_failures(zero, stats))
    ok = not failures
    max_err = max(s.max_decomposition_error for runs in policy_runs.cache.values() for _, s in runs)
    criterion_report(
        8, ok,
        f"{count} runs checked, max decomposition error {max_err:.1e} s"
        + (f", failures: {failures[:5]}" if failures else ""),
    )
    assert ok


def _zero_load_config() -> SimConfig:
    return SimConfig(
        region=Region.from_corners((3, 0), (4, 0)), n_pairs=1, n_packets=1,
        generation_duration=0.1, seed=0,
    )


def test_criterion_9_zero_load_exactness(criterion_report):
    stats = run(_zero_load_config())
    chord_km = 2 * (6371.0 + 600.0) * math.sin(math.pi / (2 * 12))
    expected = 327.68e-6 + chord_km / 299792.458
    err = abs(stats.avg_e2e_delay - expected)
    ok = stats.delivered == 1 and err <= 1e-9
    criterion_report(
        9, ok, f"e2e {stats.avg_e2e_delay * 1e6:.6f} us vs {expected * 1e6:.6f} us (err {err:.1e} s)"
    )
    assert ok
