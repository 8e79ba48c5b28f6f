"""Command line entry point: ``sampled-attention {gen,sweep,zoo,budget,index}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import AttentionError
from .harness import (
    budget_table,
    budget_table_csv,
    config_from_dict,
    format_budget_grid,
    load_config,
    parse_kv,
    run_sweep,
    zoo_demo,
)
from .lsh import LshConfig, build_index, save_index
from .workloads import gen_workload, read_workload, write_workload


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _cmd_gen(args):
    values = {}
    if args.config:
        values = {
            k[len("workload."):]: v
            for k, v in parse_kv(Path(args.config).read_text()).items()
            if k.startswith("workload.")
        }
    flags = {
        "kind": args.kind, "n": args.n, "d": args.d, "temperature": args.temperature,
        "cone_angle": args.cone_angle, "top20_mass": args.top20_mass, "seed": args.seed,
    }
    if args.no_sink_flip:
        flags["sink_flip"] = "false"
    values.update({k: str(v) for k, v in flags.items() if v is not None})
    cfg = config_from_dict(
        {"seed": values.get("seed", "0"), "methods": "topk", "budgets": "1",
         **{f"workload.{k}": v for k, v in values.items()}}
    )
    workload = gen_workload(cfg.workload)
    write_workload(workload, args.out)
    print(f"wrote {cfg.workload.kind} workload n={workload.n} d={workload.d} to {args.out}")


def _cmd_sweep(args):
    overrides = _overrides(args.set)
    overrides["seed"] = str(args.seed)
    cfg = load_config(args.config, overrides)
    result = run_sweep(cfg, threads=args.threads)
    if args.out:
        result.write_csv(args.out)
    else:
        sys.stdout.write(result.to_csv())


def _cmd_zoo(args):
    zoo_demo(trials=args.trials, seed=args.seed)


def _cmd_budget(args):
    workload = read_workload(args.workload) if args.workload else None
    cells = budget_table(
        _int_list(args.K), _int_list(args.L), args.min_collisions,
        workload=workload, reseeds=args.reseeds, seed=args.seed,
    )
    print(format_budget_grid(cells))
    if args.out:
        Path(args.out).write_text(budget_table_csv(cells))


def _cmd_index(args):
    workload = read_workload(args.workload)
    config = LshConfig(args.K, args.L, args.min_collisions, args.seed)
    index = build_index(workload.keys, config)
    Path(args.out).write_bytes(save_index(index))
    print(f"indexed {index.n} keys into {config.L} tables of {config.K} bits -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sampled-attention",
        description="Sampling-based attention estimation: workloads, sweeps, LSH tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a workload and write it as an MPWL file")
    p.add_argument("--config", help="read workload.* keys from this config file")
    p.add_argument("--kind", choices=["gaussian", "cone", "longtail", "zoo"])
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--cone-angle", type=float)
    p.add_argument("--no-sink-flip", action="store_true")
    p.add_argument("--top20-mass", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("sweep", help="run an experiment config and write the CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True, help="master seed (u64)")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("zoo", help="print the zoo TopK vs sampling example")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_zoo)

    p = sub.add_parser("budget", help="expected (and optionally measured) budget per (K, L)")
    p.add_argument("--K", default="7,8,9,10,11")
    p.add_argument("--L", default="75,100,120,150,200,300")
    p.add_argument("--min-collisions", type=int, default=2)
    p.add_argument("--workload", help="MPWL file for measured budgets")
    p.add_argument("--reseeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the grid as CSV")
    p.set_defaults(func=_cmd_budget)

    p = sub.add_parser("index", help="build an LSH index over a workload's keys and serialize it")
    p.add_argument("--workload", required=True)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--L", type=int, default=150)
    p.add_argument("--min-collisions", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (AttentionError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
