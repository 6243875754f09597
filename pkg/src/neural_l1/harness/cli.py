"""``neural-l1 run --config <path> ...``

Exit codes: 0 ok (diverged runs are flagged in metrics, not errors),
1 other failure, 2 config error, 3 certification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..certify import format_report
from ..controllers import ControllerKind
from ..errors import CertificationFailed, ConfigError, NeuralL1Error
from . import io as out_io
from .config import load_config
from .sim import certify_scenario, compare, format_ranking, run_grid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CERT = 3

log = logging.getLogger("neural_l1")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _kinds(text: str):
    try:
        return tuple(ControllerKind.from_label(t) for t in text.split(",") if t.strip())
    except NeuralL1Error as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neural-l1", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="certify and simulate every scenario in a config file")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, default=Path("runs"))
    r.add_argument("--seed", type=_u64, default=None, help="override every scenario's seed")
    r.add_argument("--controllers", type=_kinds, default=None,
                   help="comma list from lf,deep-mrac,l1,neural-l1")
    r.add_argument("--certify-only", action="store_true", help="write certificate.txt and stop")
    r.add_argument("--strict-bounds", action="store_true",
                   help="also require the conservative generalisation-error rate in audits")
    r.add_argument("--override-certification", action="store_true",
                   help="run even when the design fails certification")
    r.add_argument("--workers", type=int, default=None, help="thread count (default from NEURAL_L1_WORKERS)")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def _prepare(args):
    scenarios = load_config(args.config)
    if args.seed is not None:
        scenarios = [s.with_seed(args.seed) for s in scenarios]
    if args.controllers:
        scenarios = [s.with_controllers(args.controllers) for s in scenarios]
    if args.override_certification:
        scenarios = [replace(s, override_certification=True) for s in scenarios]
    return scenarios


def cmd_run(args) -> int:
    scenarios = _prepare(args)
    if args.certify_only:
        failed = False
        for sc in sorted(scenarios, key=lambda s: s.name):
            _, _, report = certify_scenario(sc, override=True)
            d = args.out / sc.name
            d.mkdir(parents=True, exist_ok=True)
            (d / "certificate.txt").write_text(format_report(report))
            print(f"{sc.name}: certified={report.passed}"
                  + ("" if report.passed else f" failing={','.join(report.failing())}"))
            failed |= not report.passed and not sc.override_certification
        return EXIT_CERT if failed else EXIT_OK
    results = run_grid(scenarios, strict=args.strict_bounds, workers=args.workers)
    audit_failed = False
    for res in results:
        d = out_io.write_result(res, args.out)
        print(f"[{res.config.name}] certified={res.report.passed} -> {d}")
        ms = list(res.metrics.values())
        if len(ms) >= 2:
            print(format_ranking(compare(ms)))
        for k, a in sorted(res.audits.items()):
            print(f"  audit {k.label}: {'pass' if a.passed else 'FAIL'}")
            audit_failed |= not a.passed
    if args.strict_bounds and audit_failed:
        print("certification failed: a run audit violated a certified bound", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificationFailed as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except NeuralL1Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
