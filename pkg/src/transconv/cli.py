"""Command line: ``transconv run`` and ``transconv generate``.

Exit codes for ``run``: 0 when every check passes, 2 when any check fails,
1 on malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import TransconvError
from .scenarios import KINDS, ScenarioError, generate, load_scenario, run_scenario


def _parser():
    p = argparse.ArgumentParser(prog="transconv",
                                description="Verify convolution and Brascamp-Lieb bounds "
                                            "on polyhedral scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(q):
        q.add_argument("--level", type=int, help="quadrature subdivision level")
        q.add_argument("--seed", type=int)
        q.add_argument("--tolerance", type=float, help="relative slack on every bound")
        q.add_argument("--samples", type=int, help="Monte Carlo sample count (0 disables)")

    r = sub.add_parser("run", help="run a scenario and write a JSON report")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--out", type=Path, help="report path (default: stdout)")
    r.add_argument("--epsilon", type=float, help="thickening width for the oracle")
    r.add_argument("--threads", type=int,
                   help="worker threads (default: $TRANSCONV_THREADS or 1)")
    common(r)

    g = sub.add_parser("generate", help="write a deterministic scenario")
    g.add_argument("--scenario", dest="kind", required=True, choices=KINDS,
                   help="scenario kind")
    g.add_argument("--out", required=True, type=Path, help="output directory")
    g.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                   help="generator parameter, e.g. codims=[1,1,2]")
    common(g)
    return p


def _params(items):
    out = {}
    for item in items:
        key, _, val = item.partition("=")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "generate":
        try:
            path = generate(args.kind, 0 if args.seed is None else args.seed, args.out,
                            _params(args.param), level=args.level, tolerance=args.tolerance,
                            samples=args.samples)
        except (ScenarioError, TransconvError, ValueError) as exc:
            print(f"transconv: {exc}", file=sys.stderr)
            return 1
        print(path)
        return 0

    try:
        sc = load_scenario(args.scenario)
        sc = sc.with_overrides(level=args.level, seed=args.seed, tolerance=args.tolerance,
                               samples=args.samples, epsilon=args.epsilon, threads=args.threads)
        report = run_scenario(sc, args.out)
    except (ScenarioError, TransconvError, ValueError, KeyError) as exc:
        print(f"transconv: {exc}", file=sys.stderr)
        return 1
    text = json.dumps(report, indent=1)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return 0 if report["passed"] else 2


if __name__ == "__main__":
    sys.exit(main())
