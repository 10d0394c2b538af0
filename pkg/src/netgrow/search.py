"""Greedy enlargement loop: schedule, generate, evaluate, select, repeat.

Each iteration raises the step budget along an exponential schedule from the
base MACs to the target, generates candidates from every element of the
selected-config set S, scores them through the evaluator, and appends the
best one to S.  The element appended at the final iteration is the result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .costs import network_macs
from .estimator import EvaluatorError, EvaluatorPool, EvaluatorRef, SurrogateRef
from .growth import Candidate, CandidateBatch, GrowthParams, collect_candidates
from .model import ArchConfig, NetworkTemplate, ValidationError, base_config, dominates


class EmptyCandidateSetError(Exception):
    """No candidate met the budget tolerance at some iteration."""

    def __init__(self, iteration: int, step_budget: int, near_misses: list[tuple[int, int]]):
        self.iteration = iteration
        self.step_budget = step_budget
        self.near_misses = near_misses  # (macs, |macs - step_budget|), nearest first
        misses = ", ".join(f"{macs} (off by {off})" for macs, off in near_misses[:5])
        super().__init__(
            f"iteration {iteration}: no candidate within tolerance of budget "
            f"{step_budget}; nearest MACs: {misses or 'none generated'}"
        )


@dataclass(frozen=True)
class SearchSpec:
    target_macs: int
    iterations: int
    growth: GrowthParams = field(default_factory=GrowthParams)
    evaluator: EvaluatorRef = field(default_factory=SurrogateRef)
    seed: int = 0
    workers: int = 1
    frontier_only: bool = False
    relax_on_empty: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.target_macs < 1:
            raise ValidationError("target MACs must be positive")


@dataclass(frozen=True)
class SearchElement:
    config: ArchConfig
    macs: int
    accuracy: float | None  # None for the base element, never evaluated


@dataclass
class SearchState:
    elements: list[SearchElement]
    iteration: int = 0
    seed: int = 0

    @classmethod
    def initial(cls, template: NetworkTemplate, seed: int = 0) -> SearchState:
        config = base_config(template)
        macs = network_macs(template, config).total_macs
        return cls(elements=[SearchElement(config, macs, None)], seed=seed)


@dataclass(frozen=True)
class CandidateEval:
    candidate: Candidate
    accuracy: float


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    step_budget: int
    candidates: tuple[CandidateEval, ...]
    selected: int
    relaxed: bool
    wall_time: float

    def best(self) -> CandidateEval:
        return self.candidates[self.selected]


def budget_schedule(base_macs: int, target_macs: int, iterations: int, i: int) -> int:
    """Step budget B0 * (T / B0)^(i / N), rounded, with the endpoint pinned."""
    if base_macs <= 0 or target_macs <= base_macs:
        raise ValidationError(
            f"need target > base > 0, got base={base_macs} target={target_macs}"
        )
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    if not 0 <= i <= iterations:
        raise ValidationError(f"iteration {i} outside 0..{iterations}")
    if i == 0:
        return base_macs
    if i == iterations:
        return target_macs
    return round(base_macs * (target_macs / base_macs) ** (i / iterations))


def select_best(candidates: list[Candidate], accuracies: list[float]) -> int:
    """Index of the highest accuracy; ties prefer fewer MACs, then earlier."""
    if not candidates:
        raise ValidationError("cannot select from an empty candidate list")
    if len(candidates) != len(accuracies):
        raise ValidationError("candidates and accuracies differ in length")
    best = 0
    for i in range(1, len(candidates)):
        if accuracies[i] > accuracies[best] or (
            accuracies[i] == accuracies[best] and candidates[i].macs < candidates[best].macs
        ):
            best = i
    return best


def _relaxed_pick(batch: CandidateBatch, step_budget: int) -> Candidate | None:
    if not batch.rejected:
        return None
    nearest = min(range(len(batch.rejected)), key=lambda i: abs(batch.rejected[i].macs - step_budget))
    r = batch.rejected[nearest]
    return Candidate(r.config, r.macs, r.provenance, r.parent)


def run_iteration(
    template: NetworkTemplate,
    spec: SearchSpec,
    state: SearchState,
    pool: EvaluatorPool,
    iteration: int,
    base_macs: int,
) -> IterationRecord:
    start = time.perf_counter()
    step_budget = budget_schedule(base_macs, spec.target_macs, spec.iterations, iteration)
    if spec.frontier_only:
        last = len(state.elements) - 1
        parents = [(last, state.elements[last].config)]
    else:
        parents = [(i, e.config) for i, e in enumerate(state.elements)]
    batch = collect_candidates(template, parents, step_budget, spec.target_macs, spec.growth)

    relaxed = False
    candidates = batch.accepted
    if not candidates:
        if spec.relax_on_empty:
            pick = _relaxed_pick(batch, step_budget)
            if pick is not None:
                candidates = [pick]
                relaxed = True
        if not candidates:
            misses = sorted(
                ((r.macs, abs(r.macs - step_budget)) for r in batch.rejected),
                key=lambda pair: pair[1],
            )
            raise EmptyCandidateSetError(iteration, step_budget, misses)

    results = pool.evaluate_all([(c.config, c.macs) for c in candidates])
    accuracies = [r.accuracy for r in results]
    selected = select_best(candidates, accuracies)

    chosen = candidates[selected]
    assert dominates(chosen.config, state.elements[chosen.parent].config)
    state.elements.append(SearchElement(chosen.config, chosen.macs, accuracies[selected]))
    state.iteration = iteration

    return IterationRecord(
        iteration=iteration,
        step_budget=step_budget,
        candidates=tuple(
            CandidateEval(c, a) for c, a in zip(candidates, accuracies)
        ),
        selected=selected,
        relaxed=relaxed,
        wall_time=time.perf_counter() - start,
    )


def run_search(
    template: NetworkTemplate,
    spec: SearchSpec,
    state: SearchState | None = None,
    start_iteration: int = 1,
    on_iteration: Callable[[IterationRecord], None] | None = None,
    on_error: Callable[[int, Exception], None] | None = None,
) -> tuple[ArchConfig, list[IterationRecord]]:
    """Run iterations start..N, returning the final config and all records.

    Pass a resumed state plus start_iteration to continue an interrupted run;
    on_iteration fires after each completed iteration (the trace writer hook)
    and on_error fires once before an aborting failure propagates.
    """
    if state is None:
        state = SearchState.initial(template, spec.seed)
    base_macs = state.elements[0].macs
    if spec.target_macs <= base_macs:
        raise ValidationError(
            f"target MACs {spec.target_macs} must exceed base MACs {base_macs}"
        )
    records: list[IterationRecord] = []
    with EvaluatorPool(spec.evaluator, template, spec.workers) as pool:
        for i in range(start_iteration, spec.iterations + 1):
            try:
                record = run_iteration(template, spec, state, pool, i, base_macs)
            except (EvaluatorError, EmptyCandidateSetError) as exc:
                if on_error is not None:
                    on_error(i, exc)
                raise
            records.append(record)
            if on_iteration is not None:
                on_iteration(record)
    return state.elements[-1].config, records
