"""Command-line entry point: generation, construction, verification, export."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import lattice, movements, pipeline, suites
from .lattice import Permutation, Tiling, l2_distance
from .oracle import OracleLimits, exact_distance
from .contflow import (
    FrameParams,
    build_swap_field,
    bump_battery,
    format_field_spec,
    integrate_time1_map,
    l1l2_norm,
    trace_to_csv,
    verify_swap_map,
    weak_divergence_residual,
)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cubeflows",
        description="Discrete incompressible flows on cube tilings",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random permutation at a target distance")
    g.add_argument("--nu", type=int, required=True)
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--delta", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    c = sub.add_parser("cost", help="recompute the cost of a flow file")
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--format", choices=["text", "json"], default="text")

    k = sub.add_parser("connect", help="construct a flow connecting a permutation to the identity")
    k.add_argument("--nu", type=int)
    k.add_argument("--N", type=int)
    k.add_argument("--delta", type=float)
    k.add_argument("--epsilon", type=float)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--perm", help="permutation file (overrides --nu/--N/--delta/--seed)")
    k.add_argument("--out", required=True)

    o = sub.add_parser("oracle", help="exact minimum-cost distance to the identity")
    o.add_argument("--perm", required=True)
    o.add_argument("--mode", choices=["S", "E", "SE"], default="E")
    o.add_argument("--max-array", type=int, default=4)
    o.add_argument("--format", choices=["text", "json"], default="text")

    v = sub.add_parser("verify", help="run a named acceptance suite")
    v.add_argument("suite", nargs="?", help="suite id; omit to list")
    v.add_argument("--quick", action="store_true", help="reduced instance counts")

    f = sub.add_parser("field", help="build/verify/dump the end-cube swap field")
    f.add_argument("--N", type=int, required=True)
    f.add_argument("--M", type=int, required=True)
    f.add_argument("--dump-field", help="write the region/coefficient listing here")
    f.add_argument("--trace", help="x,y start point for a trajectory dump")
    f.add_argument("--out", help="trajectory CSV path (with --trace)")
    f.add_argument("--step", type=float, default=1e-4)
    f.add_argument("--verify", action="store_true", help="run the norm/map/divergence checks")

    e = sub.add_parser("exponent", help="run the cost-vs-distance experiment grid")
    e.add_argument("--nu", type=int, default=2)
    e.add_argument("--N", default="32,64", help="comma-separated resolutions")
    e.add_argument("--deltas", default=",".join(str(d) for d in suites.EXPONENT_DELTAS))
    e.add_argument("--seeds", type=int, default=5)
    e.add_argument("--out", required=True)
    return ap


def _cmd_gen(args) -> int:
    t = Tiling(args.nu, args.N)
    rng = np.random.Generator(np.random.Philox(args.seed))
    p = pipeline.random_permutation_at_l2(t, args.delta, rng)
    lattice.write_permutation(args.out, p)
    print(f"wrote {args.out}: l2 = {l2_distance(p, Permutation.identity(t)):.6f}")
    return 0


def _cmd_cost(args) -> int:
    flow = movements.read_flow(args.infile)
    if args.format == "json":
        print(json.dumps({"steps": flow.duration, "total_cost": flow.total_cost()}))
    else:
        print(f"steps={flow.duration} total_cost={flow.total_cost():.9f}")
    return 0


def _cmd_connect(args) -> int:
    if args.perm:
        p = lattice.read_permutation(args.perm)
        t = p.tiling
    else:
        if args.nu is None or args.N is None or args.delta is None:
            print("connect: need --perm or all of --nu/--N/--delta", file=sys.stderr)
            return 2
        t = Tiling(args.nu, args.N)
        rng = np.random.Generator(np.random.Philox(args.seed))
        p = pipeline.random_permutation_at_l2(t, args.delta, rng)
    delta = l2_distance(p, Permutation.identity(t))
    cfg = None
    if delta > 0 and args.epsilon is not None:
        cfg = pipeline.PipelineConfig.derive(t, delta, epsilon=args.epsilon)
    flow, cost, ledger = pipeline.connect_to_identity(p, cfg)
    movements.write_flow(args.out, flow)
    print(json.dumps(ledger, default=float, indent=2))
    print(f"wrote {args.out}: steps={flow.duration} total_cost={cost:.9f}")
    return 0


def _cmd_oracle(args) -> int:
    p = lattice.read_permutation(args.perm)
    ident = Permutation.identity(p.tiling)
    d, witness = exact_distance(p, ident, args.mode, OracleLimits(max_array=args.max_array))
    if args.format == "json":
        print(json.dumps({"mode": args.mode, "distance": d, "witness_steps": witness.duration}))
    else:
        print(f"mode={args.mode} distance={d:.9f} witness_steps={witness.duration}")
    return 0


def _cmd_verify(args) -> int:
    if not args.suite:
        print("available suites: " + ", ".join(suites.suite_names()))
        return 0
    if args.suite not in suites.SUITES:
        print(f"unknown suite {args.suite!r}; available: {', '.join(suites.suite_names())}", file=sys.stderr)
        return 2
    result = suites.run_suite(args.suite, quick=args.quick)
    for line in result.lines:
        print(line)
    print(json.dumps({"suite": result.name, "passed": result.passed}))
    return 0 if result.passed else 1


def _cmd_field(args) -> int:
    params = FrameParams(args.N, args.M)
    f = build_swap_field(params)
    if args.dump_field:
        with open(args.dump_field, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_field_spec(f))
        print(f"wrote {args.dump_field}")
    if args.trace:
        x, y = (float(v) for v in args.trace.split(","))
        trace = integrate_time1_map(f, (x, y), args.step)
        csv_text = trace_to_csv(trace)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(csv_text)
            print(f"wrote {args.out}: terminal = {trace.terminal}")
        else:
            print(csv_text, end="")
    if args.verify:
        nrm = l1l2_norm(f, 64)
        bound = 20.0 * args.M / args.N**2
        rep = verify_swap_map(params, samples_per_cube=50, hstep=args.step)
        res = weak_divergence_residual(f, bump_battery(params))
        ok = nrm <= bound and rep.passed and res <= 1e-6
        print(
            json.dumps(
                {
                    "norm": nrm,
                    "norm_bound": bound,
                    "map_worst_error": rep.worst_error,
                    "divergence_residual": res,
                    "passed": ok,
                }
            )
        )
        return 0 if ok else 1
    return 0


def _cmd_exponent(args) -> int:
    n_list = [int(x) for x in args.N.split(",") if x]
    deltas = [float(x) for x in args.deltas.split(",") if x]
    seeds = list(range(1, args.seeds + 1))
    rows, slope = pipeline.exponent_experiment(args.nu, n_list, deltas, seeds, args.out)
    print(f"wrote {args.out}: {len(rows)} rows, log-log slope {slope:.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "gen": _cmd_gen,
        "cost": _cmd_cost,
        "connect": _cmd_connect,
        "oracle": _cmd_oracle,
        "verify": _cmd_verify,
        "field": _cmd_field,
        "exponent": _cmd_exponent,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
