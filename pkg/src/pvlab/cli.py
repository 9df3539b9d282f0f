"""Command line entry point: ``pvlab run | list | selftest``.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 usage or
config error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

from pvlab import kernels, registry
from pvlab.experiments import ConfigError, load_config, parse_config, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SELFTEST_CONFIG = {
    "experiment": "scaling",
    "functional": {"name": "count", "params": {"d": 2, "scale": 7 ** 0.5}},
    "s_grid": [10, 20, 40, 80],
    "n_reps": 400,
    "seed": 20240601,
    "bounds": True,
    "output": {"csv": "selftest.csv", "summary": "selftest.json"},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"pvlab: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pvlab", description="Monte Carlo checks of Poisson variance bounds.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $PVLAB_THREADS or 1)")
    p.add_argument("--backend", choices=["cython", "python"], default=None, help="kernel backend")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    lst = sub.add_parser("list", help="list registered functionals")
    lst.add_argument("--json", action="store_true", help="machine-readable output")
    sub.add_parser("selftest", help="run a fixed config twice and compare CSV output byte for byte")
    return p


def _report(res) -> int:
    for r in res.rules:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    if res.passed:
        return EXIT_OK
    print(f"assertion failed: {', '.join(res.failed_rules)}", file=sys.stderr)
    return EXIT_FAIL


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    if args.threads:
        cfg = dataclasses.replace(cfg, workers=args.threads)
    return _report(run_experiment(cfg))


def cmd_list(args) -> int:
    if args.json:
        doc = [{"name": e.name, "tag": e.tag, "description": e.description, "params": e.schema()}
               for e in registry.REGISTRY.values()]
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    for e in registry.REGISTRY.values():
        print(f"{e.name:22s} [{e.tag}] {e.description}")
        for k, p in e.params.items():
            print(f"    {k} ({p.type.__name__}, default {p.default!r}): {p.doc}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    text = json.dumps(SELFTEST_CONFIG)
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in ("a", "b"):
            d = Path(tmp) / run
            d.mkdir()
            res = run_experiment(parse_config(text, d))
            outputs.append((d / "selftest.csv").read_bytes())
    same = outputs[0] == outputs[1]
    print(f"{'PASS' if same else 'FAIL'} determinism: CSV reruns are "
          f"{'byte-identical' if same else 'different'} ({len(outputs[0])} bytes)")
    code = _report(res)
    return code if same else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("pvlab: error: --threads must be positive", file=sys.stderr)
            return EXIT_USAGE
        os.environ["PVLAB_THREADS"] = str(args.threads)
    if args.backend:
        try:
            kernels.use_backend(args.backend)
        except ImportError as exc:
            print(f"pvlab: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return {"run": cmd_run, "list": cmd_list, "selftest": cmd_selftest}[args.command](args)
    except ConfigError as exc:
        print(f"pvlab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
