"""Exact multiply-accumulate and parameter counting for stage-structured nets.

One multiply-add pair counts as 1 MAC (not 2 FLOPs).  Spatial sizes use
ceiling division at strides, matching "same" padding.  Squeeze-excitation
and pooling are included; activations and batch-norm compute are not.
Channel counts derived from rationals (expansion, SE reduction) use exact
integer arithmetic so results never wobble with float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import (
    ArchConfig,
    BlockKind,
    GhostBlock,
    MBConv,
    NetworkTemplate,
    PlainConv,
    ResidualBasic,
    ValidationError,
    validate_config,
)

STEM_IN_CHANNELS = 3  # RGB input

# GhostNet's default cheap-operation settings: half the channels come from
# the primary 1x1 conv, half from a 3x3 depthwise over those.
GHOST_CHEAP_RATIO = 2
GHOST_CHEAP_KERNEL = 3


@dataclass(frozen=True)
class MacsBreakdown:
    stem_macs: int
    per_stage_macs: tuple[int, ...]
    head_macs: int
    total_macs: int
    total_params: int

    def __post_init__(self) -> None:
        assert self.total_macs == self.stem_macs + sum(self.per_stage_macs) + self.head_macs


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def round_half_up(value: Fraction) -> int:
    return (2 * value.numerator + value.denominator) // (2 * value.denominator)


def expanded_channels(c_in: int, expansion_ratio: Fraction) -> int:
    return max(1, round_half_up(c_in * expansion_ratio))


def se_channels(c_expanded: int, se_ratio: Fraction) -> int:
    """SE bottleneck width: floor of the expanded channels times the ratio."""
    scaled = c_expanded * se_ratio
    return max(1, scaled.numerator // scaled.denominator)


def conv_macs(h_out: int, w_out: int, c_in: int, c_out: int, k: int, groups: int = 1) -> int:
    if min(h_out, w_out, c_in, c_out, k, groups) < 1:
        raise ValidationError("conv dimensions must be positive")
    if c_in % groups or c_out % groups:
        raise ValidationError(f"channels ({c_in}, {c_out}) not divisible by groups={groups}")
    return h_out * w_out * (c_in // groups) * c_out * k * k


def _conv_params(c_in: int, c_out: int, k: int, groups: int = 1, bias: bool = False) -> int:
    weights = (c_in // groups) * c_out * k * k
    return weights + (c_out if bias else 0)


def _bn_params(channels: int) -> int:
    return 2 * channels


def _se_cost(h: int, w: int, c_expanded: int, se_ratio: Fraction) -> tuple[int, int]:
    """Global pool, squeeze/excite 1x1 convs, and the channel rescale."""
    if se_ratio == 0:
        return 0, 0
    c_red = se_channels(c_expanded, se_ratio)
    macs = (
        h * w * c_expanded  # global average pool
        + conv_macs(1, 1, c_expanded, c_red, 1)
        + conv_macs(1, 1, c_red, c_expanded, 1)
        + h * w * c_expanded  # rescale multiply
    )
    params = _conv_params(c_expanded, c_red, 1, bias=True) + _conv_params(
        c_red, c_expanded, 1, bias=True
    )
    return macs, params


def _mbconv_cost(
    block: MBConv, c_in: int, c_out: int, h_in: int, w_in: int, stride: int
) -> tuple[int, int]:
    h_out, w_out = ceil_div(h_in, stride), ceil_div(w_in, stride)
    macs = 0
    params = 0
    if block.expansion_ratio == 1:
        c_exp = c_in
    else:
        c_exp = expanded_channels(c_in, block.expansion_ratio)
        macs += conv_macs(h_in, w_in, c_in, c_exp, 1)
        params += _conv_params(c_in, c_exp, 1) + _bn_params(c_exp)
    k = block.kernel_size
    macs += conv_macs(h_out, w_out, c_exp, c_exp, k, groups=c_exp)
    params += _conv_params(c_exp, c_exp, k, groups=c_exp) + _bn_params(c_exp)
    se_macs, se_params = _se_cost(h_out, w_out, c_exp, block.se_ratio)
    macs += se_macs
    params += se_params
    macs += conv_macs(h_out, w_out, c_exp, c_out, 1)
    params += _conv_params(c_exp, c_out, 1) + _bn_params(c_out)
    return macs, params


def _ghost_module_cost(h: int, w: int, c_in: int, c_out: int) -> tuple[int, int]:
    """Primary 1x1 conv for half the channels, cheap depthwise for the rest."""
    primary = ceil_div(c_out, GHOST_CHEAP_RATIO)
    k = GHOST_CHEAP_KERNEL
    macs = conv_macs(h, w, c_in, primary, 1) + conv_macs(h, w, primary, primary, k, groups=primary)
    params = (
        _conv_params(c_in, primary, 1)
        + _bn_params(primary)
        + _conv_params(primary, primary, k, groups=primary)
        + _bn_params(primary)
    )
    return macs, params


def _ghost_cost(
    block: GhostBlock, c_in: int, c_out: int, h_in: int, w_in: int, stride: int
) -> tuple[int, int]:
    h_out, w_out = ceil_div(h_in, stride), ceil_div(w_in, stride)
    c_exp = expanded_channels(c_in, block.expansion_ratio)
    macs, params = _ghost_module_cost(h_in, w_in, c_in, c_exp)
    k = block.kernel_size
    if stride == 2:
        macs += conv_macs(h_out, w_out, c_exp, c_exp, k, groups=c_exp)
        params += _conv_params(c_exp, c_exp, k, groups=c_exp) + _bn_params(c_exp)
    se_macs, se_params = _se_cost(h_out, w_out, c_exp, block.se_ratio)
    macs += se_macs
    params += se_params
    gm2_macs, gm2_params = _ghost_module_cost(h_out, w_out, c_exp, c_out)
    macs += gm2_macs
    params += gm2_params
    # Conv shortcut only on stride-2 blocks; stride-1 shortcuts are treated
    # as parameter-free so cost stays monotone in width.
    if stride == 2:
        macs += conv_macs(h_out, w_out, c_in, c_in, k, groups=c_in)
        macs += conv_macs(h_out, w_out, c_in, c_out, 1)
        params += (
            _conv_params(c_in, c_in, k, groups=c_in)
            + _bn_params(c_in)
            + _conv_params(c_in, c_out, 1)
            + _bn_params(c_out)
        )
    return macs, params


def _residual_cost(
    block: ResidualBasic, c_in: int, c_out: int, h_in: int, w_in: int, stride: int
) -> tuple[int, int]:
    h_out, w_out = ceil_div(h_in, stride), ceil_div(w_in, stride)
    k = block.kernel_size
    # Shortcut is modeled parameter-free (padded identity), so no conv there.
    macs = conv_macs(h_out, w_out, c_in, c_out, k) + conv_macs(h_out, w_out, c_out, c_out, k)
    params = (
        _conv_params(c_in, c_out, k)
        + _bn_params(c_out)
        + _conv_params(c_out, c_out, k)
        + _bn_params(c_out)
    )
    return macs, params


def _plain_cost(
    block: PlainConv, c_in: int, c_out: int, h_in: int, w_in: int, stride: int
) -> tuple[int, int]:
    h_out, w_out = ceil_div(h_in, stride), ceil_div(w_in, stride)
    macs = conv_macs(h_out, w_out, c_in, c_out, block.kernel_size)
    params = _conv_params(c_in, c_out, block.kernel_size) + _bn_params(c_out)
    return macs, params


def _block_cost(
    block: BlockKind, c_in: int, c_out: int, h_in: int, w_in: int, stride: int
) -> tuple[int, int]:
    if min(h_in, w_in) < 1:
        raise ValidationError("spatial dimensions must be positive")
    if stride not in (1, 2):
        raise ValidationError(f"stride must be 1 or 2, got {stride}")
    if isinstance(block, MBConv):
        return _mbconv_cost(block, c_in, c_out, h_in, w_in, stride)
    if isinstance(block, GhostBlock):
        return _ghost_cost(block, c_in, c_out, h_in, w_in, stride)
    if isinstance(block, ResidualBasic):
        return _residual_cost(block, c_in, c_out, h_in, w_in, stride)
    return _plain_cost(block, c_in, c_out, h_in, w_in, stride)


def block_macs(block: BlockKind, c_in: int, c_out: int, h_in: int, w_in: int, stride: int) -> int:
    return _block_cost(block, c_in, c_out, h_in, w_in, stride)[0]


def block_params(block: BlockKind, c_in: int, c_out: int, h_in: int, w_in: int, stride: int) -> int:
    return _block_cost(block, c_in, c_out, h_in, w_in, stride)[1]


def network_macs(template: NetworkTemplate, config: ArchConfig) -> MacsBreakdown:
    """Full per-stage MAC and parameter accounting for one config."""
    validate_config(template, config)
    stem = template.stem
    size = ceil_div(config.resolution, stem.stride)
    stem_macs = conv_macs(size, size, STEM_IN_CHANNELS, stem.out_channels, stem.kernel_size)
    params = _conv_params(STEM_IN_CHANNELS, stem.out_channels, stem.kernel_size) + _bn_params(
        stem.out_channels
    )

    c_prev = stem.out_channels
    per_stage = []
    for stage, width, depth in zip(template.stages, config.widths, config.depths):
        macs, p = _block_cost(stage.block, c_prev, width, size, size, stage.stride)
        size = ceil_div(size, stage.stride)
        for _ in range(depth - 1):
            m2, p2 = _block_cost(stage.block, width, width, size, size, 1)
            macs += m2
            p += p2
        per_stage.append(macs)
        params += p
        c_prev = width

    head = template.head
    head_macs = (
        conv_macs(size, size, c_prev, head.channels, 1)
        + size * size * head.channels  # global average pool
        + head.channels * head.num_classes  # classifier
    )
    params += _conv_params(c_prev, head.channels, 1) + _bn_params(head.channels)
    params += head.channels * head.num_classes + head.num_classes

    return MacsBreakdown(
        stem_macs=stem_macs,
        per_stage_macs=tuple(per_stage),
        head_macs=head_macs,
        total_macs=stem_macs + sum(per_stage) + head_macs,
        total_params=params,
    )


def total_macs(template: NetworkTemplate, config: ArchConfig) -> int:
    return network_macs(template, config).total_macs


def params_count(template: NetworkTemplate, config: ArchConfig) -> int:
    return network_macs(template, config).total_params
