"""``leodra`` command line.

Exit codes: 0 success, 2 bad input (config, grid, node or arguments),
3 topology that cannot be routed inside the configured region.
Set ``LEODRA_LOG`` (e.g. ``INFO`` or ``DEBUG``) for progress logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .congestion import PolicyKind
from .constellation import ConstellationParams, InvalidNodeError, NodeId, check_node
from .desim import UnreachableError
from .experiment import (
    MESH_COLUMNS,
    SIM_COLUMNS,
    SWEEP_COLUMNS,
    ConfigFileError,
    SweepSpec,
    SweepVariable,
    load_config,
    mesh_rows,
    parse_grid,
    simulate_rows,
    sweep_rows,
    write_csv,
)
from .routing import DegeneratePathError, RoutingDeadEndError, estimate_direction, primary_path

log = logging.getLogger("leodra")

EXIT_OK, EXIT_INPUT, EXIT_UNREACHABLE = 0, 2, 3


def _node(text: str) -> NodeId:
    try:
        p, s = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected P,S got {text!r}") from exc
    return NodeId(p, s)


def _values(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def _policies(text: str) -> tuple[PolicyKind, ...]:
    try:
        return tuple(PolicyKind(x.strip()) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"policies must be from {[k.value for k in PolicyKind]}"
        ) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leodra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicate one configuration and write a stats CSV")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--replications", type=int, help="override the config value")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")

    sw = sub.add_parser("sweep", help="sweep lambda_in or n_buffer for each policy")
    sw.add_argument("--config", required=True)
    sw.add_argument("--variable", required=True, choices=[v.value for v in SweepVariable])
    sw.add_argument("--values", required=True, type=_values, help="comma separated, increasing")
    sw.add_argument("--out", required=True)
    sw.add_argument("--policies", type=_policies, default=(PolicyKind.DRA_THRESHOLD, PolicyKind.PROBABILISTIC))
    sw.add_argument("--replications", type=int, help="defaults to the config value")
    sw.add_argument("--threshold-ratio", type=float, default=0.75)
    sw.add_argument("--jobs", type=int, default=1)

    mesh = sub.add_parser("mesh-solve", help="mesh fixed point over a parameter grid")
    mesh.add_argument("--grid", required=True)
    mesh.add_argument("--out", required=True)
    mesh.add_argument("--hops-h", type=int, default=3)
    mesh.add_argument("--hops-v", type=int, default=3)

    route = sub.add_parser("route", help="print the direction estimate and primary trace")
    route.add_argument("--src", required=True, type=_node)
    route.add_argument("--dst", required=True, type=_node)
    route.add_argument("--config", help="take constellation parameters and region from a config")
    return parser


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    n = args.replications if args.replications is not None else config.replications
    if n < 1:
        raise ConfigFileError("replications must be >= 1", args.config)
    rows = simulate_rows(config, n, args.jobs)
    write_csv(args.out, SIM_COLUMNS, rows)
    agg = rows[-1]
    print(
        f"policy={agg['policy']} replications={n} delivered={agg['delivered']:.1f} "
        f"drop_rate={agg['drop_rate']:.4f} mean_e2e_delay_s={agg['mean_e2e_delay_s']:.6g} "
        f"ci95_halfwidth_s={agg['ci95_halfwidth_s']:.3g}"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    try:
        spec = SweepSpec(
            variable=SweepVariable(args.variable),
            values=args.values,
            threshold_ratio=args.threshold_ratio,
            policies=args.policies,
            replications=args.replications if args.replications is not None else config.replications,
        )
    except ValueError as exc:
        raise ConfigFileError(str(exc), "sweep") from exc
    rows = sweep_rows(config, spec, args.jobs)
    write_csv(args.out, SWEEP_COLUMNS, rows)
    for row in rows:
        if row["row_type"] == "aggregate":
            print(
                f"{row['variable']}={row['variable_value']} policy={row['policy']} "
                f"mean_e2e_delay_s={row['mean_e2e_delay_s']:.6g} drop_rate={row['drop_rate']:.4f}"
            )
    return EXIT_OK


def cmd_mesh_solve(args: argparse.Namespace) -> int:
    try:
        with open(args.grid, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(exc.strerror or "cannot read file", args.grid) from exc
    rows = mesh_rows(parse_grid(text, args.grid), args.hops_h, args.hops_v)
    write_csv(args.out, MESH_COLUMNS, rows)
    unstable = sum(r["stable"] == "false" for r in rows)
    print(f"points={len(rows)} unstable={unstable}")
    return EXIT_OK


def cmd_route(args: argparse.Namespace) -> int:
    params, region = ConstellationParams(), None
    if args.config:
        config = load_config(args.config)
        params, region = config.constellation, config.region
    try:
        src, dst = check_node(params, args.src), check_node(params, args.dst)
        if region is not None and (src not in region or dst not in region):
            raise InvalidNodeError("node outside the configured region")
        spec = estimate_direction(params, src, dst)
        trace = primary_path(params, src, dst, region=region)
    except (InvalidNodeError, DegeneratePathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(
        f"n_h={spec.n_h} n_v={spec.n_v} d_h={spec.d_h.name} d_v={spec.d_v.name} "
        f"crosses_pole={spec.crosses_pole} hops={spec.hops}"
    )
    for node, choice in trace:
        if choice is None:
            print(f"{node} destination")
        else:
            second = choice.secondary.name if choice.secondary is not None else "-"
            print(f"{node} primary={choice.primary.name} secondary={second}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "mesh-solve": cmd_mesh_solve,
    "route": cmd_route,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LEODRA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnreachableError, RoutingDeadEndError) as exc:
        print(f"error: unreachable topology: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE


if __name__ == "__main__":
    sys.exit(main())
