"""Command-line entry points for the study drivers.

Subcommands: convergence, greedy, eval, darcy-field, dump-defaults.
Configuration comes from optional key=value files plus command-line
overrides; exit code is 0 on success and nonzero with a stage tag otherwise.
"""

import argparse
import logging
import sys

from uwrom import rom, studies, transport


def _add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config entry")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _config_from_args(args, **extra):
    overrides = {}
    if args.config:
        overrides.update(studies.load_config_file(args.config))
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.outdir:
        overrides["outdir"] = args.outdir
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return studies.make_config(**overrides)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uwrom",
        description="Reduced-basis studies for ultraweak advection-reaction "
                    "transport")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="h-refinement study (T.1/T.2/T.3)")
    p.add_argument("testcase", choices=["T.1", "T.2", "T.3"])
    _add_common(p)

    p = sub.add_parser("greedy", help="greedy training study (P.1/P.2/P.3)")
    p.add_argument("testcase", choices=["P.1", "P.2", "P.3"])
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a stored reduced model")
    p.add_argument("model", help="model file written by the greedy study")
    p.add_argument("mu", nargs="+",
                   help="parameters as c_w,c_c,g_0 triples")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("darcy-field", help="solve and dump the Darcy velocity")
    p.add_argument("--resolution", type=int, default=64)
    _add_common(p)

    p = sub.add_parser("dump-defaults", help="print the built-in defaults")
    p.add_argument("--testcase", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO)
    stage = args.command
    try:
        if args.command == "convergence":
            cfg = _config_from_args(args, testcase=args.testcase)
            studies.run_convergence(cfg)
        elif args.command == "greedy":
            cfg = _config_from_args(args, testcase=args.testcase)
            studies.run_greedy_study(cfg)
        elif args.command == "eval":
            stage = "eval:load"
            mus = []
            for spec_str in args.mu:
                parts = [float(s) for s in spec_str.split(",")]
                if len(parts) != 3:
                    raise ValueError(f"expected c_w,c_c,g_0, got {spec_str!r}")
                mus.append(transport.Parameter(*parts))
            stage = "eval:solve"
            for rec in studies.rom_eval(args.model, mus):
                mu = rec["mu"]
                print(f"mu=({mu.c_w:g},{mu.c_c:g},{mu.g_0:g}) "
                      f"delta={rec['delta']:.6e} "
                      f"trace_norm={rec['trace_norm']:.6e} "
                      f"time={rec['time'] * 1e6:.1f}us")
                print("  w_N = [" + ", ".join(f"{v:.10e}" for v in rec["w"]) + "]")
        elif args.command == "darcy-field":
            cfg = _config_from_args(args, testcase="T.3")
            path = studies.run_darcy_field(cfg, resolution=args.resolution)
            print(path)
        elif args.command == "dump-defaults":
            print(studies.dump_defaults(args.testcase), end="")
    except Exception as err:  # noqa: BLE001 - single CLI failure funnel
        print(f"error [{stage}]: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
