"""Append-only JSONL search traces, resume logic, manifests and reports.

Trace bytes are deterministic: compact separators, sorted keys, ratios as
exact fraction strings, no wall-clock fields.  A fixed seed plus a
deterministic evaluator therefore reproduces a trace byte for byte, and
resuming a killed run converges on the same file an uninterrupted run
writes.  Timing lives in the in-memory records and the manifest only.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

from .estimator import ExternalRef, SurrogateParams, SurrogateRef
from .growth import GrowthParams
from .model import ArchConfig, NetworkTemplate, ValidationError, format_ratio, parse_ratio
from .search import IterationRecord, SearchElement, SearchSpec, SearchState

TRACE_SCHEMA = 1


def trace_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _evaluator_to_dict(spec: SearchSpec) -> dict:
    ev = spec.evaluator
    if isinstance(ev, SurrogateRef):
        if ev.params is None:
            raise ValidationError("surrogate params must be resolved before tracing")
        return {"kind": "surrogate", "params": ev.params.to_dict()}
    return {"kind": "external", "command": ev.command, "timeout": ev.timeout}


def _evaluator_from_dict(obj: dict) -> SurrogateRef | ExternalRef:
    if obj.get("kind") == "surrogate":
        return SurrogateRef(SurrogateParams.from_dict(obj["params"]))
    if obj.get("kind") == "external":
        return ExternalRef(command=obj["command"], timeout=float(obj["timeout"]))
    raise ValidationError(f"unknown evaluator kind {obj.get('kind')!r}")


def header_record(template_sha256: str, template_name: str, base_macs: int, spec: SearchSpec) -> dict:
    g = spec.growth
    return {
        "type": "header",
        "schema": TRACE_SCHEMA,
        "template_sha256": template_sha256,
        "template_name": template_name,
        "base_macs": base_macs,
        "target_macs": spec.target_macs,
        "iterations": spec.iterations,
        "seed": spec.seed,
        "step_resolution": g.step_resolution,
        "step_depth": g.step_depth,
        "step_width": g.step_width,
        "ratios": [format_ratio(p) for p in g.ratios],
        "delta": format_ratio(g.delta),
        "evaluator": _evaluator_to_dict(spec),
        "frontier_only": spec.frontier_only,
        "relax_on_empty": spec.relax_on_empty,
    }


def spec_from_header(header: dict, workers: int = 1) -> SearchSpec:
    growth = GrowthParams(
        step_resolution=header["step_resolution"],
        step_depth=header["step_depth"],
        step_width=header["step_width"],
        ratios=tuple(parse_ratio(p) for p in header["ratios"]),
        delta=parse_ratio(header["delta"]),
    )
    return SearchSpec(
        target_macs=header["target_macs"],
        iterations=header["iterations"],
        growth=growth,
        evaluator=_evaluator_from_dict(header["evaluator"]),
        seed=header["seed"],
        workers=workers,
        frontier_only=header["frontier_only"],
        relax_on_empty=header["relax_on_empty"],
    )


def candidate_record(iteration: int, index: int, entry) -> dict:
    cand = entry.candidate
    prov = cand.provenance
    return {
        "type": "candidate",
        "iteration": iteration,
        "index": index,
        "parent": cand.parent,
        "branch": prov.branch,
        "stage": getattr(prov, "stage", None),
        "ratio": format_ratio(prov.ratio) if prov.branch == "stage" else None,
        "resolution": cand.config.resolution,
        "widths": list(cand.config.widths),
        "depths": list(cand.config.depths),
        "macs": cand.macs,
        "accuracy": entry.accuracy,
    }


def iteration_summary(record: IterationRecord) -> dict:
    best = record.best()
    return {
        "type": "iteration",
        "iteration": record.iteration,
        "budget": record.step_budget,
        "candidates": len(record.candidates),
        "selected": record.selected,
        "selected_macs": best.candidate.macs,
        "selected_accuracy": best.accuracy,
        "relaxed": record.relaxed,
    }


class TraceWriter:
    """Single writer appending candidate and summary lines, flushed per block."""

    def __init__(self, path: str | Path, header: dict | None = None):
        self.path = Path(path)
        mode = "w" if header is not None else "a"
        self._fh: IO[str] = open(self.path, mode, encoding="utf-8")
        if header is not None:
            self._fh.write(trace_line(header))
            self._fh.flush()

    def write_iteration(self, record: IterationRecord) -> None:
        for index, entry in enumerate(record.candidates):
            self._fh.write(trace_line(candidate_record(record.iteration, index, entry)))
        self._fh.write(trace_line(iteration_summary(record)))
        self._fh.flush()

    def write_error(self, iteration: int, error: Exception) -> None:
        self._fh.write(
            trace_line(
                {
                    "type": "error",
                    "iteration": iteration,
                    "kind": type(error).__name__,
                    "message": str(error),
                }
            )
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> TraceWriter:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


@dataclass
class TraceIteration:
    candidates: list[dict]
    summary: dict


@dataclass
class ParsedTrace:
    header: dict
    iterations: list[TraceIteration]

    def lines(self) -> Iterable[str]:
        yield trace_line(self.header)
        for it in self.iterations:
            for cand in it.candidates:
                yield trace_line(cand)
            yield trace_line(it.summary)


def parse_trace(path: str | Path) -> ParsedTrace:
    """Parse a trace, dropping any incomplete trailing iteration or line.

    A run killed mid-iteration leaves candidate lines without their summary
    (possibly a torn final line); those are discarded so resumption replays
    the iteration from scratch.
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read trace {path}: {exc}") from exc
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValidationError(f"trace {path} is empty")

    def parse(line: str) -> dict | None:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            return None
        return obj if isinstance(obj, dict) else None

    header = parse(lines[0])
    if header is None or header.get("type") != "header":
        raise ValidationError(f"trace {path} does not start with a header record")
    if header.get("schema") != TRACE_SCHEMA:
        raise ValidationError(
            f"trace schema {header.get('schema')!r} not supported (expected {TRACE_SCHEMA})"
        )

    iterations: list[TraceIteration] = []
    pending: list[dict] = []
    for line in lines[1:]:
        obj = parse(line)
        if obj is None:
            break  # torn tail from a kill mid-write
        if obj.get("type") == "candidate":
            pending.append(obj)
        elif obj.get("type") == "iteration":
            iterations.append(TraceIteration(pending, obj))
            pending = []
        elif obj.get("type") == "error":
            break  # the run aborted here; resumption replays this iteration
        else:
            raise ValidationError(f"trace {path} has unknown record type {obj.get('type')!r}")
    return ParsedTrace(header, iterations)


def rewrite_trace(path: str | Path, parsed: ParsedTrace) -> None:
    """Truncate a trace file to its complete iterations."""
    Path(path).write_text("".join(parsed.lines()), encoding="utf-8")


def _config_from_record(record: dict) -> ArchConfig:
    return ArchConfig(
        resolution=record["resolution"],
        widths=tuple(record["widths"]),
        depths=tuple(record["depths"]),
    )


def state_from_trace(template: NetworkTemplate, parsed: ParsedTrace) -> tuple[SearchState, int]:
    """Rebuild the selected-config set S; returns (state, next iteration)."""
    state = SearchState.initial(template, seed=parsed.header["seed"])
    if state.elements[0].macs != parsed.header["base_macs"]:
        raise ValidationError(
            "trace base MACs do not match the template; was the template edited?"
        )
    for it in parsed.iterations:
        selected = it.summary["selected"]
        if not 0 <= selected < len(it.candidates):
            raise ValidationError("trace iteration summary points at a missing candidate")
        chosen = it.candidates[selected]
        state.elements.append(
            SearchElement(_config_from_record(chosen), chosen["macs"], chosen["accuracy"])
        )
        state.iteration = it.summary["iteration"]
    return state, state.iteration + 1


# --- Run manifest -----------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    template_path: str
    template_sha256: str
    tool_version: str
    created: str
    seed: int
    search: dict  # header-shaped echo of the search spec

    def to_dict(self) -> dict:
        return {
            "template_path": self.template_path,
            "template_sha256": self.template_sha256,
            "tool_version": self.tool_version,
            "created": self.created,
            "seed": self.seed,
            "search": self.search,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> RunManifest:
        known = {"template_path", "template_sha256", "tool_version", "created", "seed", "search"}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown manifest field(s): {', '.join(sorted(unknown))}")
        try:
            return cls(
                template_path=obj["template_path"],
                template_sha256=obj["template_sha256"],
                tool_version=obj["tool_version"],
                created=obj["created"],
                seed=obj["seed"],
                search=obj["search"],
            )
        except KeyError as exc:
            raise ValidationError(f"manifest missing field {exc.args[0]!r}") from exc


def build_manifest(template_path: str | Path, header: dict, tool_version: str) -> RunManifest:
    return RunManifest(
        template_path=str(template_path),
        template_sha256=header["template_sha256"],
        tool_version=tool_version,
        created=datetime.now(timezone.utc).isoformat(),
        seed=header["seed"],
        search=header,
    )


def save_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> RunManifest:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    return RunManifest.from_dict(obj)


# --- Report -----------------------------------------------------------------

REPORT_COLUMNS = [
    "iteration",
    "budget",
    "best_accuracy",
    "resolution",
    "widths",
    "depths",
    "parent",
    "resolution_drop",
]


def report_rows(parsed: ParsedTrace) -> list[dict]:
    """One row per iteration; resolution drops (a different parent winning)
    are flagged since they make the resolution column non-monotone."""
    rows = []
    previous_resolution: int | None = None
    for it in parsed.iterations:
        chosen = it.candidates[it.summary["selected"]]
        resolution = chosen["resolution"]
        rows.append(
            {
                "iteration": it.summary["iteration"],
                "budget": it.summary["budget"],
                "best_accuracy": chosen["accuracy"],
                "resolution": resolution,
                "widths": " ".join(map(str, chosen["widths"])),
                "depths": " ".join(map(str, chosen["depths"])),
                "parent": chosen["parent"],
                "resolution_drop": previous_resolution is not None
                and resolution < previous_resolution,
            }
        )
        previous_resolution = resolution
    return rows


def write_report(parsed: ParsedTrace, out: IO[str]) -> None:
    writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS)
    writer.writeheader()
    for row in report_rows(parsed):
        writer.writerow(row)
