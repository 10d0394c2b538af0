"""Independent oracles for toy networks, written straight from the math.

Nothing here calls into netgrow's cost model, candidate generator or engine;
these functions replay the growth pseudocode and the accounting conventions
(ceil at strides, one multiply-add = 1 MAC) in plain arithmetic so the real
implementations can be checked against them.  Toy networks use plain-conv
stages only, which keeps the hand formulas short.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class ToyNet:
    """A plain-conv toy: stem, stages of (kernel, stride, base/max w and d), head."""

    stem_out: int
    stem_kernel: int
    stem_stride: int
    stages: tuple[tuple[int, int, int, int, int, int], ...]  # (k, stride, w0, d0, wmax, dmax)
    head_channels: int
    num_classes: int
    base_resolution: int
    max_resolution: int


def toy_macs(net: ToyNet, resolution: int, widths, depths) -> tuple[int, list[int]]:
    """Straight-line MAC count: conv cost is h*w*c_in*c_out*k^2, ceil at strides."""
    size = math.ceil(resolution / net.stem_stride)
    total = size * size * 3 * net.stem_out * net.stem_kernel**2
    per_stage = []
    c_in = net.stem_out
    for (k, stride, *_), w, d in zip(net.stages, widths, depths):
        size = math.ceil(size / stride)
        stage = size * size * c_in * w * k * k
        for _ in range(d - 1):
            stage += size * size * w * w * k * k
        per_stage.append(stage)
        total += stage
        c_in = w
    total += size * size * c_in * net.head_channels  # 1x1 head conv
    total += size * size * net.head_channels  # global pool
    total += net.head_channels * net.num_classes  # classifier
    return total, per_stage


def toy_base(net: ToyNet) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
    return (
        net.base_resolution,
        tuple(s[2] for s in net.stages),
        tuple(s[3] for s in net.stages),
    )


def oracle_schedule(base: int, target: int, n: int, i: int) -> int:
    if i == 0:
        return base
    if i == n:
        return target
    return round(base * (target / base) ** (i / n))


def oracle_enumerate(
    macs_fn,  # (resolution, widths, depths) -> total MACs
    stage_limits,  # [(max_width, max_depth), ...]
    max_resolution: int,
    parents,  # list of (resolution, widths, depths)
    step_budget: int,
    target: int,
    s_r: int,
    s_d: int,
    s_w: int,
    ratios,  # ascending Fractions
    delta: Fraction,
):
    """Replay of the two growth loops: resolution branch, then per-stage
    depth-first/width-second runs for each ratio.  Returns (accepted, rejected)
    lists of plain dicts in deterministic order with global config dedup."""
    accepted: list[dict] = []
    rejected: list[dict] = []
    seen = set()

    def finish(r, w, d, macs, branch, stage, ratio, parent):
        entry = {
            "parent": parent,
            "branch": branch,
            "stage": stage,
            "ratio": None if ratio is None else str(ratio),
            "resolution": r,
            "widths": list(w),
            "depths": list(d),
            "macs": macs,
        }
        if abs(macs - step_budget) <= delta * target:
            if (r, tuple(w), tuple(d)) not in seen:
                seen.add((r, tuple(w), tuple(d)))
                accepted.append(entry)
        else:
            rejected.append(entry)

    for parent, (r0, w0, d0) in enumerate(parents):
        macs0 = macs_fn(r0, w0, d0)
        if macs0 > step_budget:
            continue

        r, macs = r0, macs0
        while macs < step_budget and r < max_resolution:
            r = min(r + s_r, max_resolution)
            macs = macs_fn(r, w0, d0)
        finish(r, w0, d0, macs, "resolution", None, None, parent)

        for j in range(len(stage_limits)):
            wmax, dmax = stage_limits[j]
            stage_seen = set()
            for p in ratios:
                depth_budget = p * step_budget
                w, d = list(w0), list(d0)
                macs = macs0
                while macs <= depth_budget and d[j] < dmax:
                    d[j] = min(d[j] + s_d, dmax)
                    macs = macs_fn(r0, w, d)
                while macs <= step_budget and w[j] < wmax:
                    w[j] = min(w[j] + s_w, wmax)
                    macs = macs_fn(r0, w, d)
                key = (r0, tuple(w), tuple(d))
                if key in stage_seen:
                    continue
                stage_seen.add(key)
                finish(r0, w, d, macs, "stage", j, p, parent)
    return accepted, rejected


def oracle_enumerate_toy(net: ToyNet, parents, step_budget, target, s_r, s_d, s_w, ratios, delta):
    return oracle_enumerate(
        lambda r, w, d: toy_macs(net, r, w, d)[0],
        [(wmax, dmax) for (_, _, _, _, wmax, dmax) in net.stages],
        net.max_resolution,
        parents,
        step_budget,
        target,
        s_r,
        s_d,
        s_w,
        ratios,
        delta,
    )


def oracle_surrogate(
    weights, scales, res_weight: float, res_scale: float, per_stage_macs, resolution: int
) -> float:
    score = sum(a * (1.0 - math.exp(-m / b)) for a, b, m in zip(weights, scales, per_stage_macs))
    score += res_weight * (1.0 - math.exp(-resolution / res_scale))
    return min(1.0, max(0.0, score))


def oracle_search(
    net: ToyNet,
    target: int,
    iterations: int,
    s_r: int,
    s_d: int,
    s_w: int,
    ratios,
    delta: Fraction,
    surrogate,  # dict with weights/scales/res_weight/res_scale
):
    """Full greedy replay with the noise-free surrogate.

    Returns (selected list, iteration dicts) or raises ToyEmpty at the first
    iteration with no admissible candidate.
    """
    base = toy_base(net)
    base_macs, _ = toy_macs(net, *base)
    pool = [base]
    trace = []
    for i in range(1, iterations + 1):
        budget = oracle_schedule(base_macs, target, iterations, i)
        accepted, _ = oracle_enumerate_toy(
            net, pool, budget, target, s_r, s_d, s_w, ratios, delta
        )
        if not accepted:
            raise ToyEmpty(i)
        for entry in accepted:
            _, per_stage = toy_macs(net, entry["resolution"], entry["widths"], entry["depths"])
            entry["accuracy"] = oracle_surrogate(
                surrogate["weights"],
                surrogate["scales"],
                surrogate["res_weight"],
                surrogate["res_scale"],
                per_stage,
                entry["resolution"],
            )
        best = 0
        for k in range(1, len(accepted)):
            if accepted[k]["accuracy"] > accepted[best]["accuracy"] or (
                accepted[k]["accuracy"] == accepted[best]["accuracy"]
                and accepted[k]["macs"] < accepted[best]["macs"]
            ):
                best = k
        chosen = accepted[best]
        pool.append((chosen["resolution"], tuple(chosen["widths"]), tuple(chosen["depths"])))
        trace.append({"iteration": i, "budget": budget, "candidates": accepted, "selected": best})
    return pool, trace


class ToyEmpty(Exception):
    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"no admissible candidate at iteration {iteration}")


def toy_template(net: ToyNet):
    """The ToyNet expressed as a real template (engine-side input only)."""
    from netgrow.model import Head, NetworkTemplate, PlainConv, StageTemplate, Stem

    return NetworkTemplate(
        name="toy",
        stem=Stem(net.stem_out, net.stem_kernel, net.stem_stride),
        stages=tuple(
            StageTemplate(PlainConv(k), stride, w0, d0, wmax, dmax)
            for (k, stride, w0, d0, wmax, dmax) in net.stages
        ),
        head=Head(net.head_channels, net.num_classes),
        base_resolution=net.base_resolution,
        min_resolution=net.base_resolution,
        max_resolution=net.max_resolution,
    )


def toy_surrogate(net: ToyNet) -> dict:
    """Literal surrogate coefficients shared by oracle and engine runs."""
    _, per_stage = toy_macs(net, *toy_base(net))
    return {
        "weights": [0.3] * len(net.stages),
        "scales": [float(2 * m) for m in per_stage],
        "res_weight": 0.2,
        "res_scale": float(2 * net.base_resolution),
    }


def random_toy(rng: random.Random, fine: bool = False) -> ToyNet:
    """A random 2-stage toy.  With fine=True, widths are large enough that
    width steps stay well inside a 1% budget tolerance band."""
    if fine:
        w1 = rng.randrange(128, 224, 2)
        w2 = rng.randrange(192, 320, 2)
    else:
        w1 = rng.randrange(32, 96, 2)
        w2 = rng.randrange(48, 128, 2)
    d1 = rng.choice([1, 2])
    base_r = rng.choice([32, 48])
    return ToyNet(
        stem_out=rng.choice([4, 8]),
        stem_kernel=3,
        stem_stride=2,
        stages=(
            (3, 1, w1, d1, 3 * w1, 3 * d1),
            (3, 2, w2, 1, 3 * w2, 3),
        ),
        head_channels=rng.choice([32, 64]),
        num_classes=10,
        base_resolution=base_r,
        max_resolution=3 * base_r,
    )
