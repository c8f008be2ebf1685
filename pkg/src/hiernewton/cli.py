"""Command line: ``hiernewton {run,check,list}``.

Exit codes: 0 success, 1 configuration or usage error, 2 solver failure
(``run``) or failed assertions (``check``).
"""

from __future__ import annotations

import argparse
import io
import os
import sys

from . import config as cfgmod
from .checks import SUITES
from .control import critical_damping
from .sim import SolverFailure, Simulator, simulate_point_mass

__all__ = ["main", "point_mass_csv"]

DEFAULT_COUNTS = {"derivatives": 100, "hlsp-oracle": 50, "kkt": 50, "equivalence": None}


def _fmt(v):
    return f"{v:.12g}"


def point_mass_csv(cfg: cfgmod.PointMassConfig) -> str:
    """One ``q``/``qd`` column pair per damping value, sharing the time column."""
    runs = []
    for mu in cfg.mus:
        kv = critical_damping(cfg.kp, cfg.mass, mu if cfg.gain_rule == "kv(kp,mu)" else 0.0)
        runs.append(simulate_point_mass(cfg.controller, mu, cfg.kp, kv, cfg.mass, cfg.q0, cfg.qd0,
                                        cfg.dt, cfg.duration))
    buf = io.StringIO()
    cols = ["t"] + [f"{name}_mu{_fmt(mu)}" for mu in cfg.mus for name in ("q", "qd")]
    buf.write(",".join(cols) + "\n")
    t = runs[0][0]
    for k in range(t.size):
        vals = [t[k]] + [v for _, q, qd in runs for v in (q[k], qd[k])]
        buf.write(",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def _write(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def cmd_run(args) -> int:
    try:
        doc = cfgmod.load_document(args.config)
        for item in args.override:
            doc = cfgmod.apply_override(doc, item)
        scenario = cfgmod.build(doc)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(scenario, cfgmod.PointMassConfig):
        _write(point_mass_csv(scenario), args.out)
        return 0
    if args.dump_hlsp:
        os.makedirs(args.dump_hlsp, exist_ok=True)
    sim = Simulator(scenario, dump_dir=args.dump_hlsp)
    try:
        log = sim.run()
    except SolverFailure as exc:
        _write(exc.log.to_csv(include_timing=args.timing), args.out)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(log.to_csv(include_timing=args.timing), args.out)
    return 0


def cmd_check(args) -> int:
    suite = SUITES[args.suite]
    count = args.seeds if args.seeds is not None else DEFAULT_COUNTS[args.suite]
    results = suite(seed=args.seed, count=count) if count is not None else suite(seed=args.seed)
    for res in results:
        print(res.line())
    ok = all(r.passed for r in results)
    print(f"{args.suite}: {'all passed' if ok else 'FAILED'}")
    return 0 if ok else 2


def cmd_list(args) -> int:
    for name, fig in cfgmod.SHIPPED.items():
        print(f"{name} → {fig}")
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="hiernewton",
                                description="Prioritised least-squares control of planar chains.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario file and write the CSV log")
    r.add_argument("config", help="scenario TOML file or the name of a shipped scenario")
    r.add_argument("--out", help="CSV destination (default: standard output)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="replace a config entry, e.g. run.method=GN or tasks.2.kp=4")
    r.add_argument("--dump-hlsp", metavar="DIR", help="write every solved hierarchy to DIR")
    r.add_argument("--timing", action="store_true",
                   help="record solver wall time in solve_us (otherwise 0, so logs are reproducible)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run a validation suite")
    c.add_argument("suite", choices=sorted(SUITES))
    c.add_argument("--seeds", type=int, help="number of random cases")
    c.add_argument("--seed", type=int, default=0, help="first seed")
    c.set_defaults(func=cmd_check)

    ls = sub.add_parser("list", help="list the shipped scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are configuration errors here
        return 0 if exc.code == 0 else 1
    if getattr(args, "seeds", None) is not None and args.seeds < 1:
        print("error: --seeds must be positive", file=sys.stderr)
        return 1
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
