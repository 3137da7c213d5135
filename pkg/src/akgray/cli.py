"""Command-line entry point: ``akgray <validate|classify|decompose|suite>``.

Exit codes: 0 success, 1 internal error, 2 verdict failure, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from typing import Optional, Sequence

import numpy as np

from .chart import ChartError, ChartSpec, ExpressionSyntaxError, load_chart, sample_points, validate_chart
from .classify import (TOL_GATED, TOL_VALIDATE, TOL_VERDICT, ChartValidationError, classify_chart,
                       point_report)
from .decompose import DEFAULT_RANK_TOL, GateError, decompose_chart, decompose_point
from .registry import CALIBRATION_ONLY, get_chart

EXIT_OK, EXIT_INTERNAL, EXIT_VERDICT, EXIT_INPUT = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with verdict failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default)


def _text_lines(doc, prefix: str = ""):
    if isinstance(doc, dict):
        for k in sorted(doc):
            yield from _text_lines(doc[k], f"{prefix}{k}." if prefix or k else k)
    elif isinstance(doc, list) and doc and isinstance(doc[0], (dict, list)):
        for i, v in enumerate(doc):
            yield from _text_lines(v, f"{prefix}{i}.")
    else:
        if isinstance(doc, float):
            doc = f"{doc:.3e}"
        elif doc is None or isinstance(doc, (bool, list)):
            doc = json.dumps(doc, default=_json_default)
        yield f"{prefix.rstrip('.')}: {doc}"


def emit(doc, as_text: bool) -> None:
    if as_text:
        print("\n".join(_text_lines(doc)))
    else:
        print(dumps(doc))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("chart", nargs="?", help="registry name, e.g. kodaira_thurston or product:a:b")
    common.add_argument("--spec", metavar="FILE", help="load the chart from a JSON file instead")
    common.add_argument("--point", help="comma-separated coordinates of a single point")
    common.add_argument("-n", type=int, default=None, help="number of sampled points")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="text", action="store_false", default=False, help="JSON output (default)")
    fmt.add_argument("--text", dest="text", action="store_true", default=False, help="flat key: value output")
    common.add_argument("--calibration", action="store_true",
                        help="report validation failures without failing (calibration charts)")

    p = _Parser(prog="akgray", description="Canonical Hermitian connection toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check g, J define an almost-Hermitian structure")
    sub.add_parser("classify", parents=[common], help="almost-Kaehler and Gray condition residuals")
    sub.add_parser("decompose", parents=[common], help="Kaehler-nullity decomposition")
    s = sub.add_parser("suite", help="run the acceptance battery")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("-n", type=int, default=100)
    sfmt = s.add_mutually_exclusive_group()
    sfmt.add_argument("--json", dest="text", action="store_false", default=False)
    sfmt.add_argument("--text", dest="text", action="store_true", default=False)
    return p


def resolve_chart(args) -> ChartSpec:
    if args.spec:
        if args.chart:
            raise InputError("give either a chart name or --spec, not both")
        try:
            return load_chart(args.spec)
        except OSError as exc:
            raise InputError(f"cannot read {args.spec}: {exc}") from exc
        except (ValueError, ArithmeticError) as exc:
            raise InputError(f"{args.spec}: {exc}") from exc
    if not args.chart:
        raise InputError("a chart name or --spec FILE is required")
    return get_chart(args.chart)


def parse_point(text: str, chart: ChartSpec) -> list[float]:
    try:
        pt = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad --point {text!r}: {exc}") from exc
    if len(pt) != chart.dim:
        raise InputError(f"--point has {len(pt)} coordinates, chart {chart.name} has dimension {chart.dim}")
    if not all(np.isfinite(pt)):
        raise InputError("--point coordinates must be finite")
    return pt


def _points(args, chart: ChartSpec, default_n: int) -> list[list[float]]:
    if args.point is not None:
        return [parse_point(args.point, chart)]
    n = default_n if args.n is None else args.n
    if n < 1:
        raise InputError("-n must be at least 1")
    return [list(map(float, p)) for p in sample_points(chart, n, args.seed)]


def cmd_validate(args) -> tuple[dict, int]:
    chart = resolve_chart(args)
    tol = TOL_VALIDATE if args.tol is None else args.tol
    pts = _points(args, chart, 100)
    reps = [validate_chart(chart, p, tol) for p in pts]
    bad = [i for i, r in enumerate(reps) if not r.passed]
    doc = {
        "chart": chart.name,
        "seed": args.seed,
        "n_samples": len(pts),
        "tolerance": tol,
        "max": {
            "residual_J_square": max(r.residual_J_square for r in reps),
            "residual_compat": max(r.residual_compat for r in reps),
        },
        "min_g_eigenvalue": min(r.residual_g_spd for r in reps),
        "failed_points": len(bad),
        "first_failure": {"point": pts[bad[0]], **reps[bad[0]].to_dict()} if bad else None,
        "pass": not bad,
    }
    if bad and args.calibration:
        doc["flagged"] = True
        doc["calibration_only"] = chart.name in CALIBRATION_ONLY
        return doc, EXIT_OK
    return doc, EXIT_OK if not bad else EXIT_VERDICT


def cmd_classify(args) -> tuple[dict, int]:
    chart = resolve_chart(args)
    tol = TOL_VERDICT if args.tol is None else args.tol
    if args.point is not None:
        rep = point_report(chart, parse_point(args.point, chart), tol, TOL_GATED)
        return rep.to_dict(), EXIT_OK
    n = 100 if args.n is None else args.n
    if n < 1:
        raise InputError("-n must be at least 1")
    return classify_chart(chart, n, args.seed, tol, TOL_GATED), EXIT_OK


def cmd_decompose(args) -> tuple[dict, int]:
    chart = resolve_chart(args)
    tol = TOL_VERDICT if args.tol is None else args.tol
    if args.point is not None:
        return decompose_point(chart, parse_point(args.point, chart), args.rank_tol, tol), EXIT_OK
    n = 50 if args.n is None else args.n
    if n < 1:
        raise InputError("-n must be at least 1")
    return decompose_chart(chart, n, args.seed, args.rank_tol, tol), EXIT_OK


def cmd_suite(args) -> tuple[dict, int]:
    from .suite import run_suite
    if args.n < 1:
        raise InputError("-n must be at least 1")
    doc, results = run_suite(args.seed, args.n)
    for r in results:
        print(r.line(), file=sys.stderr)
    return doc, EXIT_OK if doc["passed"] else EXIT_VERDICT


COMMANDS = {"validate": cmd_validate, "classify": cmd_classify,
            "decompose": cmd_decompose, "suite": cmd_suite}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc, code = COMMANDS[args.command](args)
    except (InputError, ChartError, ExpressionSyntaxError) as exc:
        print(f"akgray: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ChartValidationError as exc:
        emit({"chart": exc.chart, "point": [float(x) for x in exc.point],
              "validation": exc.report.to_dict(), "pass": False}, args.text)
        print(f"akgray: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except GateError as exc:
        print(f"akgray: gate refused: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except Exception:  # noqa: BLE001 - anything else is a bug
        traceback.print_exc()
        return EXIT_INTERNAL
    emit(doc, args.text)
    return code


if __name__ == "__main__":
    sys.exit(main())
