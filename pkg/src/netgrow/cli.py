"""Command-line surface: macs, search, report, calibrate.

Exit codes: 0 success, 2 validation problems (bad files, bad flags, bounds),
3 evaluator failures, 4 empty candidate set.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .costs import network_macs
from .estimator import (
    EvaluatorError,
    ExternalRef,
    SurrogateParams,
    SurrogateRef,
    calibrate,
    load_surrogate_params,
)
from .growth import GrowthParams
from .model import (
    ValidationError,
    base_config,
    config_from_dict,
    load_config,
    load_template,
    parse_ratio,
    save_config,
)
from .search import EmptyCandidateSetError, SearchSpec, run_search
from .trace import (
    TraceWriter,
    build_manifest,
    header_record,
    parse_trace,
    rewrite_trace,
    save_manifest,
    sha256_file,
    spec_from_header,
    state_from_trace,
    write_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EVALUATOR = 3
EXIT_EMPTY = 4

_MACS_SUFFIXES = {"K": 10**3, "M": 10**6, "B": 10**9, "G": 10**9}


def parse_macs(text: str) -> int:
    """Accept raw counts or K/M/B suffixed values: 690000000, 690M, 0.69B."""
    text = text.strip()
    suffix = text[-1:].upper()
    if suffix in _MACS_SUFFIXES:
        try:
            return round(float(text[:-1]) * _MACS_SUFFIXES[suffix])
        except ValueError as exc:
            raise ValidationError(f"cannot parse MACs value {text!r}") from exc
    try:
        return int(text)
    except ValueError as exc:
        raise ValidationError(f"cannot parse MACs value {text!r}") from exc


def _parse_ratios(text: str):
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValidationError("ratio list is empty")
    return tuple(parse_ratio(p.strip()) for p in parts)


def _evaluator_from_flags(args, template) -> SurrogateRef | ExternalRef:
    spec = args.evaluator
    if spec == "surrogate":
        if args.surrogate_params:
            params = load_surrogate_params(args.surrogate_params)
        else:
            params = SurrogateParams.from_template(template, seed=args.seed)
        return SurrogateRef(params)
    if spec.startswith("exec:"):
        command = spec[len("exec:") :]
        if not command.strip():
            raise ValidationError("exec evaluator needs a command after 'exec:'")
        return ExternalRef(command=command, timeout=args.timeout)
    raise ValidationError(f"unknown evaluator {spec!r} (use 'surrogate' or 'exec:<command>')")


def _add_evaluator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--evaluator",
        default="surrogate",
        help="'surrogate' (default) or 'exec:<command>' for an external process",
    )
    parser.add_argument(
        "--surrogate-params",
        metavar="FILE",
        help="JSON file of surrogate coefficients (default: derived from template)",
    )
    parser.add_argument(
        "--timeout", type=float, default=30.0, help="per-request timeout for exec evaluators"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)


def _format_table(breakdown) -> str:
    lines = [f"{'section':<12}{'macs':>16}"]
    lines.append(f"{'stem':<12}{breakdown.stem_macs:>16,}")
    for i, macs in enumerate(breakdown.per_stage_macs):
        lines.append(f"{f'stage {i}':<12}{macs:>16,}")
    lines.append(f"{'head':<12}{breakdown.head_macs:>16,}")
    lines.append(f"{'total':<12}{breakdown.total_macs:>16,}")
    lines.append(f"{'params':<12}{breakdown.total_params:>16,}")
    return "\n".join(lines)


def cmd_macs(args) -> int:
    template = load_template(args.template)
    config = load_config(args.config) if args.config else base_config(template)
    breakdown = network_macs(template, config)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "stem_macs": breakdown.stem_macs,
                    "per_stage_macs": list(breakdown.per_stage_macs),
                    "head_macs": breakdown.head_macs,
                    "total_macs": breakdown.total_macs,
                    "total_params": breakdown.total_params,
                },
                indent=2,
            )
        )
    else:
        print(_format_table(breakdown))
    return EXIT_OK


def cmd_search(args) -> int:
    template = load_template(args.template)
    template_sha = sha256_file(args.template)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.jsonl"

    if args.resume:
        if args.target_macs is not None:
            raise ValidationError(
                "--resume takes the search settings from the trace header; "
                "drop --target-macs"
            )
        parsed = parse_trace(args.resume)
        if parsed.header["template_sha256"] != template_sha:
            raise ValidationError(
                "resume refused: template file hash differs from the trace header"
            )
        spec = spec_from_header(parsed.header, workers=args.workers)
        state, next_iteration = state_from_trace(template, parsed)
        trace_path = Path(args.resume)
        rewrite_trace(trace_path, parsed)  # drop any partial tail
        header = parsed.header
        writer = TraceWriter(trace_path)  # append
    else:
        if args.target_macs is None:
            raise ValidationError("--target-macs is required (or --resume)")
        growth = GrowthParams(
            step_resolution=args.sr,
            step_depth=args.sd,
            step_width=args.sw,
            ratios=_parse_ratios(args.ratios),
            delta=parse_ratio(args.delta),
        )
        spec = SearchSpec(
            target_macs=parse_macs(args.target_macs),
            iterations=args.iterations,
            growth=growth,
            evaluator=_evaluator_from_flags(args, template),
            seed=args.seed,
            workers=args.workers,
            frontier_only=args.frontier_only,
            relax_on_empty=args.relax_on_empty,
        )
        state = None
        next_iteration = 1
        base_macs = network_macs(template, base_config(template)).total_macs
        header = header_record(template_sha, template.name, base_macs, spec)
        writer = TraceWriter(trace_path, header)

    try:
        with writer:
            final, records = run_search(
                template,
                spec,
                state=state,
                start_iteration=next_iteration,
                on_iteration=writer.write_iteration,
                on_error=writer.write_error,
            )
    except (EmptyCandidateSetError, EvaluatorError):
        print(f"trace (partial): {trace_path}", file=sys.stderr)
        raise

    result_path = out_dir / "result.json"
    save_config(final, result_path)
    manifest = build_manifest(args.template, header, __version__)
    save_manifest(manifest, out_dir / "manifest.json")
    final_macs = network_macs(template, final).total_macs
    print(f"selected config: {result_path}")
    print(f"trace: {trace_path}")
    print(f"final MACs: {final_macs:,} (target {spec.target_macs:,})")
    for record in records:
        best = record.best()
        print(
            f"  iteration {record.iteration}: budget {record.step_budget:,} "
            f"candidates {len(record.candidates)} best accuracy {best.accuracy:.6f}"
        )
    return EXIT_OK


def cmd_report(args) -> int:
    parsed = parse_trace(args.trace)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_report(parsed, fh)
        print(f"report: {args.out}")
    else:
        write_report(parsed, sys.stdout)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    template = load_template(args.template)
    try:
        obj = json.loads(Path(args.reference).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read reference {args.reference}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"reference {args.reference} is not valid JSON (line {exc.lineno}): {exc.msg}"
        ) from exc
    points = obj.get("points") if isinstance(obj, dict) else None
    if not isinstance(points, list):
        raise ValidationError("reference file must be an object with a 'points' array")
    reference = []
    for i, point in enumerate(points):
        try:
            reference.append((config_from_dict(point["config"]), float(point["accuracy"])))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"reference point {i} malformed: {exc}") from exc
    rho = calibrate(template, reference, _evaluator_from_flags(args, template), args.workers)
    print("undefined" if rho is None else f"{rho:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgrow",
        description="Greedy stage-wise network enlarging under a MACs budget",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_macs = sub.add_parser("macs", help="compute the MACs/params breakdown of a config")
    p_macs.add_argument("--template", required=True)
    p_macs.add_argument("--config", help="config JSON overriding the base widths/depths")
    p_macs.add_argument("--format", choices=["table", "json"], default="table")
    p_macs.set_defaults(func=cmd_macs)

    p_search = sub.add_parser("search", help="enlarge the base network to a target budget")
    p_search.add_argument("--template", required=True)
    p_search.add_argument("--target-macs", help="e.g. 690M or 690000000")
    p_search.add_argument("--iterations", type=int, default=10)
    p_search.add_argument("--delta", default="0.01", help="budget tolerance (fraction of target)")
    p_search.add_argument("--sr", type=int, default=8, help="resolution step")
    p_search.add_argument("--sd", type=int, default=1, help="depth step")
    p_search.add_argument("--sw", type=int, default=2, help="width step")
    p_search.add_argument(
        "--ratios",
        default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
        help="comma-separated depth/width split ratios",
    )
    _add_evaluator_flags(p_search)
    p_search.add_argument("--resume", metavar="TRACE", help="continue an interrupted run")
    p_search.add_argument("--frontier-only", action="store_true", help="grow only the newest element")
    p_search.add_argument(
        "--relax-on-empty",
        action="store_true",
        help="admit the nearest-MACs candidate when none meets tolerance",
    )
    p_search.add_argument("--out", default="netgrow-run", help="output directory")
    p_search.set_defaults(func=cmd_search)

    p_report = sub.add_parser("report", help="summarize a trace as CSV")
    p_report.add_argument("--trace", required=True)
    p_report.add_argument("--out", help="CSV path (default: stdout)")
    p_report.set_defaults(func=cmd_report)

    p_cal = sub.add_parser("calibrate", help="Spearman rho of an evaluator against references")
    p_cal.add_argument("--template", required=True)
    p_cal.add_argument("--reference", required=True, help="JSON file of (config, accuracy) points")
    _add_evaluator_flags(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EmptyCandidateSetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except EvaluatorError as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR


if __name__ == "__main__":
    raise SystemExit(main())
