"""Command-line entry point: ``ncota {run,sweep,ptx-solve,bound,verify}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ncota import harness, verify
from ncota.config import ConfigError, load_config
from ncota.optimizer import solve_ptx

log = logging.getLogger("ncota")


def _apply_overrides(cfg, args):
    for key, section, name in (("seed", "run", "seed"), ("trials", "run", "trials"),
                               ("stride", "run", "stride")):
        value = getattr(args, key, None)
        if value is not None:
            cfg = cfg.set(section, name, value)
    if getattr(args, "pin_deployment", False):
        cfg = cfg.set("run", "pin_deployment", "true")
    return cfg


def _common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--pin-deployment", action="store_true",
                   help="reuse the trial-0 deployment in every trial")
    p.add_argument("--out", type=Path)


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = args.out or Path("results.csv")
    _, agg = harness.run_experiment(cfg, out)
    log.info("wrote %s and %s (%d sampled iterations)", out, harness.aggregate_path(out), len(agg))
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    section, _, key = args.param.partition(".")
    out = args.out or Path("sweep.csv")
    summary = []
    for value in args.values.split(","):
        value = value.strip()
        point = cfg.set(section, key, value)
        path = out.with_name(f"{out.stem}.{key}={value}{out.suffix or '.csv'}")
        _, agg = harness.run_experiment(point, path)
        summary.append((value,) + agg[-1])
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((args.param,) + harness.COLUMNS[1:])
        for row in summary:
            w.writerow([row[0]] + [harness._fmt(v) for v in row[1:]])
    return 0


def cmd_ptx(args) -> int:
    p = solve_ptx(args.theta, args.varpi, args.M, args.Q, args.noise_ratio, 1.0, 1.0)
    print(repr(p))
    return 0


def cmd_bound(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    c, kbar, rows = harness.bound_table(cfg)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        fh.write(f"# sigma1={c.sigma1!r} sigma2={c.sigma2!r} kbar={kbar}\n")
        w = csv.writer(fh)
        w.writerow(("k", "B1", "B2", "B3", "total"))
        for row in rows:
            w.writerow([harness._fmt(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_verify(args) -> int:
    names = [args.suite] if args.suite else list(verify.SUITES)
    kw = {} if args.seed is None else {"seed": args.seed}
    entries = []
    for name in names:
        extra = dict(kw) if name != "rate" else {}
        if name == "rate" and args.trials is not None:
            extra["trials"] = args.trials
        entries.extend(verify.run_suite(name, **extra))
    report = [e.as_dict() for e in entries]
    text = json.dumps(report, indent=2)
    if args.out:
        args.out.write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if all(e.verdict == "pass" for e in entries) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncota", description=__doc__)
    ap.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("config", type=Path)
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over one parameter (section.key)")
    p.add_argument("config", type=Path)
    p.add_argument("param")
    p.add_argument("values", help="comma-separated values")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ptx-solve", help="transmit probability root")
    p.add_argument("theta", type=float)
    p.add_argument("varpi", type=float)
    p.add_argument("M", type=int)
    p.add_argument("Q", type=int)
    p.add_argument("noise_ratio", type=float, help="N0 / (Lambda* E)")
    p.set_defaults(func=cmd_ptx)

    p = sub.add_parser("bound", help="print variance constants and bound curves as CSV")
    p.add_argument("config", type=Path)
    _common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", help="run self-check suites")
    p.add_argument("suite", nargs="?", choices=verify.SUITES)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
