"""Command line interface: ``tvdecopt {run,sweep,lower-bound,certify-network}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness, network as netmod, span_oracle
from .solver import DivergenceError


def _config(args, extra=()):
    mapping = harness.read_config_file(args.config) if args.config else {}
    mapping.update(harness.parse_pairs(list(args.overrides) + list(extra)))
    return harness.RunConfig.from_mapping(mapping)


def cmd_run(args) -> int:
    cfg = _config(args)
    record = harness.run(cfg)
    print(harness.summary_line(cfg, record))
    return 0


def cmd_sweep(args) -> int:
    pairs = harness.parse_pairs(args.overrides)
    vary = pairs.pop("vary", None)
    values = pairs.pop("values", None)
    if vary is None or values is None:
        raise harness.ConfigError("sweep needs vary=<key> and values=<v1,v2,...>")
    args.overrides = [f"{k}={v}" for k, v in pairs.items()]
    cfg = _config(args)
    vals = [v for v in values.split(",") if v]
    rows = harness.sweep(cfg, vary, vals)
    for row in rows:
        print(f"{vary}={row['value']} comms={row['comms']} subgrads={row['subgrads']} "
              f"final_gap={row['final_gap']:.6g}")
    if len(rows) >= 2:
        slope = harness.loglog_slope([float(r["value"]) for r in rows],
                                     [r["final_gap"] for r in rows])
        print(f"loglog_slope={slope:.4f}")
    print(f"summary_rows={len(rows)}")
    return 0


def cmd_lower_bound(args) -> int:
    pairs = harness.parse_pairs(args.overrides)
    n, d = int(pairs.get("n", 6)), int(pairs.get("d", 5))
    trace = span_oracle.simulate(n, d)
    floor = span_oracle.communication_floor(n, d)
    need = int(floor) if floor == int(floor) else int(floor) + 1
    ok = trace.reached_at is not None and trace.reached_at >= floor and not trace.envelope_violations
    print(f"n={n} d={d} rounds={trace.reached_at} floor={floor:g} "
          f"rounds>={need} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_certify(args) -> int:
    pairs = harness.parse_pairs(args.overrides)
    topology = pairs.get("topology", "rotating_star")
    n = int(pairs.get("n", 6))
    seed = int(pairs.get("seed", 0))
    rounds = int(pairs.get("rounds", 0))
    net = netmod.make_network(topology, n, seed=seed, p=float(pairs.get("p", 0.3)))
    rounds = rounds or (net.period or 32)
    report = netmod.certify_chi(net, rounds=rounds, trials=int(pairs.get("trials", 100)),
                                seed=seed, raise_on_failure=False)
    print(f"topology={topology} n={n} rounds={rounds} declared_chi={report.declared:.6g} "
          f"certified_chi={report.chi:.6g} tight_chi={max(report.tight):.6g} "
          f"{'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvdecopt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [
        ("run", cmd_run, "run one configuration and write its CSV"),
        ("sweep", cmd_sweep, "repeat run over vary=<key> values=<a,b,...>"),
        ("lower-bound", cmd_lower_bound, "simulate the span automaton: n=<n> d=<d>"),
        ("certify-network", cmd_certify, "certify the chi of a topology"),
    ]:
        p = sub.add_parser(name, help=help_)
        if name in ("run", "sweep"):
            p.add_argument("--config", help="flat key = value file")
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (harness.InvariantError, netmod.CertificationError, DivergenceError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
