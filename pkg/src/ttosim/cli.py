"""Command line entry points: run / resume / sweep / crosscheck."""

from __future__ import annotations

import argparse
import json
import sys

from .driver import crosscheck, load_config, resume, run_quench, sweep


def _add_output_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", default=None,
                   help="override the output directory from the config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttosim",
        description="Tree tensor operator simulation of boundary-driven "
                    "open spin chains")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for sweeps (default: serial)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a quench from a config file")
    p_run.add_argument("config")
    _add_output_arg(p_run)

    p_res = sub.add_parser("resume", help="continue from a checkpoint")
    p_res.add_argument("checkpoint")
    p_res.add_argument("--t-max", type=float, default=None)
    p_res.add_argument("--measure-every", type=int, default=None)
    _add_output_arg(p_res)

    p_sw = sub.add_parser("sweep", help="one run per value of one parameter")
    p_sw.add_argument("config")
    p_sw.add_argument("--axis", required=True,
                      choices=["gamma", "delta", "sites", "chi_max",
                               "kraus_max", "dt"])
    p_sw.add_argument("--values", required=True,
                      help="comma-separated list of axis values")
    _add_output_arg(p_sw)

    p_cc = sub.add_parser("crosscheck",
                          help="run with exact-oracle co-propagation (<= 6 sites)")
    p_cc.add_argument("config")
    _add_output_arg(p_cc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            res = run_quench(cfg, output_dir=args.output_dir)
            print(f"run finished: {len(res.records)} records -> "
                  f"{res.records_path}")
        elif args.command == "resume":
            if args.output_dir is None:
                print("resume requires --output-dir", file=sys.stderr)
                return 2
            res = resume(args.checkpoint, args.output_dir, t_max=args.t_max,
                         measure_every=args.measure_every)
            print(f"resume finished: {len(res.records)} new records -> "
                  f"{res.records_path}")
        elif args.command == "sweep":
            cfg = load_config(args.config)
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            out = args.output_dir or (cfg.output_dir + "_sweep")
            summary = sweep(cfg, args.axis, values, out,
                            workers=args.threads or 1)
            failed = [r for r in summary["runs"] if r["status"] != "ok"]
            print(f"sweep finished: {len(summary['runs']) - len(failed)} ok, "
                  f"{len(failed)} failed -> {out}")
            if failed:
                return 1
        elif args.command == "crosscheck":
            cfg = load_config(args.config)
            res = crosscheck(cfg, output_dir=args.output_dir)
            report = res.manifest.get("oracle_crosscheck", {})
            print(json.dumps({"max_deviation": report.get("max_deviation")},
                             indent=2))
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
