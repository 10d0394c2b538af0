"""Candidate construction for one budget step.

Two branches per parent config: grow the input resolution alone, or grow one
stage's depth-then-width split by a ratio p (p of the budget goes to depth
first, the rest to width).  A grown config is admitted only when its MACs
land within delta * target of the step budget.  Growth loops stop at the
template's bounds rather than failing; hitting a bound just means the
acceptance check decides.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .costs import total_macs
from .model import ArchConfig, NetworkTemplate, ValidationError


@dataclass(frozen=True)
class GrowthParams:
    step_resolution: int = 8
    step_depth: int = 1
    step_width: int = 2
    ratios: tuple[Fraction, ...] = tuple(Fraction(i, 10) for i in range(11))
    delta: Fraction = Fraction(1, 100)

    def __post_init__(self) -> None:
        if min(self.step_resolution, self.step_depth, self.step_width) < 1:
            raise ValidationError("growth steps must be >= 1")
        if not self.ratios:
            raise ValidationError("ratio set must be non-empty")
        if any(not 0 <= p <= 1 for p in self.ratios):
            raise ValidationError("ratios must lie in [0, 1]")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        ordered = tuple(sorted(set(self.ratios)))
        if ordered != self.ratios:
            object.__setattr__(self, "ratios", ordered)


@dataclass(frozen=True)
class ResolutionGrowth:
    branch = "resolution"


@dataclass(frozen=True)
class StageGrowth:
    stage: int
    ratio: Fraction

    branch = "stage"


Provenance = ResolutionGrowth | StageGrowth


@dataclass(frozen=True)
class Candidate:
    config: ArchConfig
    macs: int
    provenance: Provenance
    parent: int  # index into the search state's element list


@dataclass(frozen=True)
class RejectedGrowth:
    """A growth run whose end state missed the budget tolerance."""

    config: ArchConfig
    macs: int
    provenance: Provenance
    parent: int


@dataclass
class CandidateBatch:
    accepted: list[Candidate]
    rejected: list[RejectedGrowth]


def within_tolerance(macs: int, step_budget: int, target: int, delta: Fraction) -> bool:
    return abs(macs - step_budget) <= delta * target


def _resolution_end_state(
    template: NetworkTemplate, config: ArchConfig, step_budget: int, params: GrowthParams
) -> tuple[ArchConfig, int]:
    resolution = config.resolution
    current = config
    macs = total_macs(template, current)
    while macs < step_budget and resolution < template.max_resolution:
        resolution = min(resolution + params.step_resolution, template.max_resolution)
        current = ArchConfig(resolution, config.widths, config.depths)
        macs = total_macs(template, current)
    return current, macs


def _stage_end_state(
    template: NetworkTemplate,
    config: ArchConfig,
    stage: int,
    ratio: Fraction,
    step_budget: int,
    params: GrowthParams,
) -> tuple[ArchConfig, int]:
    limit = template.stages[stage]
    depth_budget = ratio * step_budget
    widths = list(config.widths)
    depths = list(config.depths)
    current = config
    macs = total_macs(template, current)
    while macs <= depth_budget and depths[stage] < limit.max_depth:
        depths[stage] = min(depths[stage] + params.step_depth, limit.max_depth)
        current = ArchConfig(config.resolution, tuple(widths), tuple(depths))
        macs = total_macs(template, current)
    while macs <= step_budget and widths[stage] < limit.max_width:
        widths[stage] = min(widths[stage] + params.step_width, limit.max_width)
        current = ArchConfig(config.resolution, tuple(widths), tuple(depths))
        macs = total_macs(template, current)
    return current, macs


def grow_resolution(
    template: NetworkTemplate,
    config: ArchConfig,
    step_budget: int,
    target: int,
    params: GrowthParams,
    parent: int = 0,
) -> Candidate | None:
    """Resolution-only growth toward the step budget; None if tolerance missed."""
    grown, macs = _resolution_end_state(template, config, step_budget, params)
    if within_tolerance(macs, step_budget, target, params.delta):
        return Candidate(grown, macs, ResolutionGrowth(), parent)
    return None


def proportional_collection(
    template: NetworkTemplate,
    config: ArchConfig,
    stage: int,
    step_budget: int,
    target: int,
    params: GrowthParams,
    parent: int = 0,
) -> list[Candidate]:
    """Depth-then-width growth of one stage, once per ratio in P.

    Every ratio run restarts from the input config.  Duplicates (different
    ratios reaching the same end config) keep the first, i.e. smallest, ratio.
    """
    if not 0 <= stage < template.num_stages:
        raise ValidationError(f"stage index {stage} outside 0..{template.num_stages - 1}")
    out: list[Candidate] = []
    seen: set[tuple] = set()
    for ratio in params.ratios:
        grown, macs = _stage_end_state(template, config, stage, ratio, step_budget, params)
        if not within_tolerance(macs, step_budget, target, params.delta):
            continue
        key = grown.key()
        if key in seen:
            continue
        seen.add(key)
        out.append(Candidate(grown, macs, StageGrowth(stage, ratio), parent))
    return out


def collect_candidates(
    template: NetworkTemplate,
    parents: Sequence[tuple[int, ArchConfig]],
    step_budget: int,
    target: int,
    params: GrowthParams,
) -> CandidateBatch:
    """All branches for all parents, deduplicated, in deterministic order.

    Order: parents as given, then resolution branch before stage branches,
    stages ascending, ratios ascending.  Parents already past the step budget
    contribute nothing.  Rejected end states are kept for diagnostics.
    """
    if step_budget <= 0:
        raise ValidationError("step budget must be positive")
    accepted: list[Candidate] = []
    rejected: list[RejectedGrowth] = []
    seen: set[tuple] = set()

    def admit(config: ArchConfig, macs: int, provenance: Provenance, parent: int) -> None:
        if within_tolerance(macs, step_budget, target, params.delta):
            key = config.key()
            if key not in seen:
                seen.add(key)
                accepted.append(Candidate(config, macs, provenance, parent))
        else:
            rejected.append(RejectedGrowth(config, macs, provenance, parent))

    for parent, config in parents:
        if total_macs(template, config) > step_budget:
            continue
        grown, macs = _resolution_end_state(template, config, step_budget, params)
        admit(grown, macs, ResolutionGrowth(), parent)
        for stage in range(template.num_stages):
            per_stage_seen: set[tuple] = set()
            for ratio in params.ratios:
                grown, macs = _stage_end_state(template, config, stage, ratio, step_budget, params)
                key = grown.key()
                if key in per_stage_seen:
                    continue
                per_stage_seen.add(key)
                admit(grown, macs, StageGrowth(stage, ratio), parent)
    return CandidateBatch(accepted, rejected)


def generate_candidates(
    template: NetworkTemplate,
    parents: Sequence[ArchConfig],
    step_budget: int,
    target: int,
    params: GrowthParams,
) -> list[Candidate]:
    """The candidate set C for one iteration, given the elements of S."""
    indexed = list(enumerate(parents))
    return collect_candidates(template, indexed, step_budget, target, params).accepted
