from collections import deque

import pytest

from leodra.constellation import ConstellationParams, NodeId, Region, all_nodes, neighbors


def bfs_distances(params: ConstellationParams, src, region: Region | None = None) -> dict[NodeId, int]:
    """Hop distances from ``src`` over the live-link graph (independent of routing)."""
    dist = {NodeId(*src): 0}
    frontier = deque([NodeId(*src)])
    while frontier:
        u = frontier.popleft()
        for v in neighbors(params, u, region).values():
            if v is not None and v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist


@pytest.fixture(scope="session")
def paper_params() -> ConstellationParams:
    return ConstellationParams(n_planes=12, sats_per_plane=24, altitude_km=600.0)


@pytest.fixture(scope="session")
def small_params() -> ConstellationParams:
    return ConstellationParams(n_planes=6, sats_per_plane=8)


@pytest.fixture(scope="session")
def small_bfs(small_params):
    return {n: bfs_distances(small_params, n) for n in all_nodes(small_params)}


_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_report():
    """Record one summary line per acceptance criterion, printed at session end."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
