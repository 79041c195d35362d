"""Experiment plumbing: JSON configs, sweeps, replication and CSV rows.

Config files are a single flat JSON object whose keys mirror the fields of
:class:`SimConfig`, :class:`ConstellationParams` and :class:`PolicyParams`.
The policy kind goes under ``"policy"`` and the region under ``"region"`` as
``[[p_min, s_min], [p_max, s_max]]``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from .congestion import PolicyKind, PolicyParams
from .constellation import ConstellationParams, Region
from .desim import SimConfig, SimStats, run
from .meshmodel import MeshParams, MeshVariant, expected_path_delay, solve_fixed_point


class ConfigFileError(ValueError):
    """Malformed config; ``line`` points into the offending file when known."""

    def __init__(self, message: str, path: str = "<config>", line: int | None = None) -> None:
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


_CONSTELLATION_KEYS = {f.name for f in fields(ConstellationParams)}
_POLICY_KEYS = {f.name for f in fields(PolicyParams)} - {"kind"}
_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"constellation", "policy", "region"}
_INT_KEYS = {
    "n_planes", "sats_per_plane", "n_threshold", "n_buffer", "n_pairs", "n_packets",
    "packet_size_bits", "seed", "replications", "hop_limit",
}


def _key_line(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _number(value: Any, key: str) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{key} must be a number, got {value!r}")
    if key in _INT_KEYS:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _region(value: Any) -> Region:
    try:
        (a, b) = value
        corners = [tuple(_number(v, "n_planes") for v in corner) for corner in (a, b)]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"region must be [[p, s], [p, s]] with integers, got {value!r}") from exc
    if any(len(c) != 2 for c in corners):
        raise ValueError(f"region must be [[p, s], [p, s]], got {value!r}")
    return Region.from_corners(*corners)


def parse_config(text: str, path: str = "<config>") -> SimConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(exc.msg, path, exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigFileError("top level must be a JSON object", path, 1)

    constellation: dict[str, Any] = {}
    policy: dict[str, Any] = {}
    sim: dict[str, Any] = {}
    for key, value in doc.items():
        try:
            if key == "policy":
                policy["kind"] = PolicyKind(value)
            elif key == "region":
                sim["region"] = _region(value)
            elif key in _CONSTELLATION_KEYS:
                constellation[key] = _number(value, key)
            elif key in _POLICY_KEYS:
                policy[key] = _number(value, key)
            elif key in _SIM_KEYS:
                sim[key] = None if value is None and key == "hop_limit" else _number(value, key)
            else:
                raise ValueError(f"unknown key {key!r}")
        except (TypeError, ValueError) as exc:
            raise ConfigFileError(str(exc), path, _key_line(text, key)) from exc

    # field-level checks live in the dataclasses; report the first key involved
    try:
        c = ConstellationParams(**constellation)
    except ValueError as exc:
        raise ConfigFileError(str(exc), path, _first_line(text, constellation)) from exc
    try:
        p = PolicyParams(**policy)
    except ValueError as exc:
        raise ConfigFileError(str(exc), path, _first_line(text, policy)) from exc
    try:
        return SimConfig(constellation=c, policy=p, **sim)
    except ValueError as exc:
        raise ConfigFileError(str(exc), path, _first_line(text, sim)) from exc


def _first_line(text: str, keys: Iterable[str]) -> int | None:
    lines = [n for n in (_key_line(text, k) for k in keys) if n is not None]
    return min(lines) if lines else None


def load_config(path: str) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(exc.strerror or "cannot read file", path) from exc
    return parse_config(text, path)


class SweepVariable(enum.Enum):
    LAMBDA_IN = "lambda_in"
    N_BUFFER = "n_buffer"


@dataclass(frozen=True)
class SweepSpec:
    variable: SweepVariable
    values: tuple[float, ...]
    threshold_ratio: float = 0.75
    policies: tuple[PolicyKind, ...] = (PolicyKind.DRA_THRESHOLD, PolicyKind.PROBABILISTIC)
    replications: int = 20

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if not 0 < self.threshold_ratio <= 1:
            raise ValueError("threshold_ratio must lie in (0, 1]")
        if not self.policies:
            raise ValueError("sweep needs at least one policy")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.variable is SweepVariable.N_BUFFER:
            for v in self.values:
                if v != int(v) or v < 1:
                    raise ValueError(f"n_buffer values must be positive integers, got {v}")


def threshold_for(n_buffer: int, ratio: float) -> int:
    # round half up, never below one packet
    return max(1, math.floor(ratio * n_buffer + 0.5))


def apply_value(config: SimConfig, spec: SweepSpec, value: float, kind: PolicyKind) -> SimConfig:
    policy = replace(config.policy, kind=kind)
    if spec.variable is SweepVariable.N_BUFFER:
        n = int(value)
        policy = replace(policy, n_buffer=n, n_threshold=threshold_for(n, spec.threshold_ratio))
        return replace(config, policy=policy)
    return replace(config, policy=policy, lambda_in=float(value))


def run_replications(config: SimConfig, replications: int, jobs: int = 1) -> list[tuple[int, SimStats]]:
    """Seeds ``config.seed + k``; results come back in seed order whatever ``jobs`` is."""
    seeds = [config.seed + k for k in range(replications)]
    configs = [replace(config, seed=s) for s in seeds]
    if jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, configs))
    else:
        results = [run(c) for c in configs]
    return list(zip(seeds, results))


def ci95_halfwidth(samples: Sequence[float]) -> float:
    n = len(samples)
    if n < 2:
        return float("nan")
    return float(sps.t.ppf(0.975, n - 1) * statistics.stdev(samples) / math.sqrt(n))


# CSV schemas. Counts are packets, delays seconds, rates packets per second.
SIM_COLUMNS = [
    "row_type", "policy", "seed", "lambda_in_pkt_per_s", "n_buffer_packets",
    "n_threshold_packets", "generated", "delivered", "dropped", "drop_rate",
    "mean_e2e_delay_s", "mean_prop_delay_s", "mean_queueing_delay_s",
    "max_queue_packets", "ci95_halfwidth_s",
]
SWEEP_COLUMNS = ["row_type", "variable", "variable_value"] + SIM_COLUMNS[1:]
MESH_COLUMNS = [
    "lambda_over_mu", "p_h", "p_pref", "variant", "N_h_packets", "N_v_packets",
    "normalized_delay_ttx", "stable",
]
_AVERAGED = [
    "generated", "delivered", "dropped", "drop_rate", "mean_e2e_delay_s",
    "mean_prop_delay_s", "mean_queueing_delay_s", "max_queue_packets",
]


def replication_row(config: SimConfig, seed: int, s: SimStats) -> dict[str, Any]:
    return {
        "row_type": "replication",
        "policy": config.policy.kind.value,
        "seed": seed,
        "lambda_in_pkt_per_s": config.lambda_in,
        "n_buffer_packets": config.policy.n_buffer,
        "n_threshold_packets": config.policy.n_threshold,
        "generated": s.generated,
        "delivered": s.delivered,
        "dropped": s.dropped,
        "drop_rate": s.drop_rate,
        "mean_e2e_delay_s": s.avg_e2e_delay,
        "mean_prop_delay_s": s.avg_prop_delay,
        "mean_queueing_delay_s": s.avg_queueing_delay,
        "max_queue_packets": s.max_queue_observed,
        "ci95_halfwidth_s": "",
    }


def aggregate_row(rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    agg = dict(rows[0])
    agg["row_type"] = "aggregate"
    agg["seed"] = ""
    for col in _AVERAGED:
        agg[col] = float(np.mean([r[col] for r in rows]))
    agg["ci95_halfwidth_s"] = ci95_halfwidth([r["mean_e2e_delay_s"] for r in rows])
    return agg


def simulate_rows(config: SimConfig, replications: int, jobs: int = 1) -> list[dict[str, Any]]:
    rows = [replication_row(config, seed, s) for seed, s in run_replications(config, replications, jobs)]
    return rows + [aggregate_row(rows)]


def sweep_rows(config: SimConfig, spec: SweepSpec, jobs: int = 1) -> list[dict[str, Any]]:
    out = []
    for value in spec.values:
        for kind in spec.policies:
            cfg = apply_value(config, spec, value, kind)
            rows = simulate_rows(cfg, spec.replications, jobs)
            shown = int(value) if spec.variable is SweepVariable.N_BUFFER else float(value)
            for r in rows:
                out.append({"variable": spec.variable.value, "variable_value": shown, **r})
    return out


def _axis(doc: dict[str, Any], key: str, default: list[Any]) -> list[Any]:
    value = doc.get(key, default)
    if isinstance(value, dict):
        try:
            return [float(x) for x in np.linspace(value["start"], value["stop"], int(value["num"]))]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{key} range needs numeric start, stop and num") from exc
    if not isinstance(value, list):
        value = [value]
    if not value:
        raise ValueError(f"{key} must not be empty")
    return value


def parse_grid(text: str, path: str = "<grid>") -> list[MeshParams]:
    """Cartesian product of the grid axes, in lambda-major order."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(exc.msg, path, exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigFileError("top level must be a JSON object", path, 1)
    known = {"lambda_over_mu", "p_h", "p_pref", "variant"}
    for key in doc:
        if key not in known:
            raise ConfigFileError(f"unknown key {key!r}", path, _key_line(text, key))
    if "lambda_over_mu" not in doc:
        raise ConfigFileError("missing key 'lambda_over_mu'", path)
    grid = []
    key = "lambda_over_mu"
    try:
        loads = _axis(doc, "lambda_over_mu", [])
        key = "p_h"
        p_hs = _axis(doc, "p_h", [0.5])
        key = "p_pref"
        prefs = _axis(doc, "p_pref", [0.9])
        key = "variant"
        variants = [MeshVariant(v) for v in _axis(doc, "variant", ["exact"])]
        for load in loads:
            for p_h in p_hs:
                for pref in prefs:
                    for variant in variants:
                        key = "lambda_over_mu"
                        grid.append(
                            MeshParams(p_h=_number(p_h, "p_h"), p_pref=_number(pref, "p_pref"),
                                       lambda_=_number(load, key), variant=variant)
                        )
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(str(exc), path, _key_line(text, key)) from exc
    return grid


def mesh_rows(grid: Sequence[MeshParams], hops_h: int = 3, hops_v: int = 3) -> list[dict[str, Any]]:
    out = []
    for params in grid:
        sol = solve_fixed_point(params)
        stable = sol.stable
        out.append({
            "lambda_over_mu": params.load,
            "p_h": params.p_h,
            "p_pref": params.p_pref,
            "variant": params.variant.value,
            "N_h_packets": sol.n_h if stable else float("nan"),
            "N_v_packets": sol.n_v if stable else float("nan"),
            "normalized_delay_ttx": expected_path_delay(sol, hops_h, hops_v) if stable else float("nan"),
            "stable": "true" if stable else "false",
        })
    return out


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
