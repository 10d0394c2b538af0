"""Stage-structured network descriptions and search-space points.

A network is described by a stem, an ordered list of stages (one block kind,
stride, width/depth bounds each) and a classifier head.  A point in the
search space pins the input resolution and one width/depth per stage.
All types are immutable values: growth operations return new configs, so a
config held in a result set can never be corrupted by later steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path


class ValidationError(ValueError):
    """A template, config or input file violates its schema or invariants."""


def parse_ratio(value: int | float | str | Fraction) -> Fraction:
    """Parse an exact rational from JSON-friendly forms: 3, 0.25, "1/24".

    Floats go through their decimal string so 0.1 means 1/10, not the
    nearest binary double.  Exactness matters: derived channel counts use
    floor/round on these ratios and must not wobble by one.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a ratio: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a ratio: {value!r}") from exc
    raise ValidationError(f"not a ratio: {value!r}")


def format_ratio(value: Fraction) -> str:
    return str(value)


def _require_positive_int(value: object, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValidationError(f"{what} must be a positive integer, got {value!r}")
    return value


def _require_odd_kernel(value: object) -> int:
    k = _require_positive_int(value, "kernel_size")
    if k % 2 == 0:
        raise ValidationError(f"kernel_size must be odd, got {k}")
    return k


@dataclass(frozen=True)
class MBConv:
    """Inverted bottleneck: expand 1x1, depthwise kxk, SE, project 1x1."""

    expansion_ratio: Fraction
    kernel_size: int
    se_ratio: Fraction

    kind = "mbconv"

    def __post_init__(self) -> None:
        _require_odd_kernel(self.kernel_size)
        if self.expansion_ratio <= 0:
            raise ValidationError("expansion_ratio must be > 0")
        if not 0 <= self.se_ratio <= 1:
            raise ValidationError("se_ratio must be in [0, 1]")


@dataclass(frozen=True)
class GhostBlock:
    """Ghost bottleneck: two ghost modules around a depthwise stride conv."""

    expansion_ratio: Fraction
    kernel_size: int
    se_ratio: Fraction

    kind = "ghost"

    def __post_init__(self) -> None:
        _require_odd_kernel(self.kernel_size)
        if self.expansion_ratio <= 0:
            raise ValidationError("expansion_ratio must be > 0")
        if not 0 <= self.se_ratio <= 1:
            raise ValidationError("se_ratio must be in [0, 1]")


@dataclass(frozen=True)
class ResidualBasic:
    """Two kxk convs with a parameter-free shortcut."""

    kernel_size: int

    kind = "residual_basic"

    def __post_init__(self) -> None:
        _require_odd_kernel(self.kernel_size)


@dataclass(frozen=True)
class PlainConv:
    """A single kxk conv, no residual."""

    kernel_size: int

    kind = "plain_conv"

    def __post_init__(self) -> None:
        _require_odd_kernel(self.kernel_size)


BlockKind = MBConv | GhostBlock | ResidualBasic | PlainConv


@dataclass(frozen=True)
class StageTemplate:
    block: BlockKind
    stride: int
    base_width: int
    base_depth: int
    max_width: int
    max_depth: int

    def __post_init__(self) -> None:
        if self.stride not in (1, 2):
            raise ValidationError(f"stage stride must be 1 or 2, got {self.stride}")
        _require_positive_int(self.base_width, "base_width")
        _require_positive_int(self.base_depth, "base_depth")
        _require_positive_int(self.max_width, "max_width")
        _require_positive_int(self.max_depth, "max_depth")
        if self.base_width > self.max_width:
            raise ValidationError("base_width exceeds max_width")
        if self.base_depth > self.max_depth:
            raise ValidationError("base_depth exceeds max_depth")


@dataclass(frozen=True)
class Stem:
    out_channels: int
    kernel_size: int
    stride: int

    def __post_init__(self) -> None:
        _require_positive_int(self.out_channels, "stem out_channels")
        _require_odd_kernel(self.kernel_size)
        if self.stride not in (1, 2):
            raise ValidationError(f"stem stride must be 1 or 2, got {self.stride}")


@dataclass(frozen=True)
class Head:
    channels: int
    num_classes: int

    def __post_init__(self) -> None:
        _require_positive_int(self.channels, "head channels")
        _require_positive_int(self.num_classes, "num_classes")


@dataclass(frozen=True)
class NetworkTemplate:
    name: str
    stem: Stem
    stages: tuple[StageTemplate, ...]
    head: Head
    base_resolution: int
    min_resolution: int
    max_resolution: int

    def __post_init__(self) -> None:
        if len(self.stages) < 1:
            raise ValidationError("template needs at least one stage")
        _require_positive_int(self.base_resolution, "base_resolution")
        _require_positive_int(self.min_resolution, "min_resolution")
        _require_positive_int(self.max_resolution, "max_resolution")
        if not self.min_resolution <= self.base_resolution <= self.max_resolution:
            raise ValidationError(
                "resolutions must satisfy min <= base <= max, got "
                f"{self.min_resolution} <= {self.base_resolution} <= {self.max_resolution}"
            )

    @property
    def num_stages(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class ArchConfig:
    """One search-space point: input resolution plus per-stage width/depth."""

    resolution: int
    widths: tuple[int, ...]
    depths: tuple[int, ...]

    def __post_init__(self) -> None:
        _require_positive_int(self.resolution, "resolution")
        if len(self.widths) != len(self.depths):
            raise ValidationError("widths and depths must have equal length")
        for w in self.widths:
            _require_positive_int(w, "width")
        for d in self.depths:
            _require_positive_int(d, "depth")

    def key(self) -> tuple:
        """Hashable identity used for dedup and noise seeding."""
        return (self.resolution, self.widths, self.depths)


def validate_config(template: NetworkTemplate, config: ArchConfig) -> None:
    """Reject configs outside the template's bounds.  Never clamps."""
    if len(config.widths) != template.num_stages:
        raise ValidationError(
            f"config has {len(config.widths)} stages, template has {template.num_stages}"
        )
    if not template.min_resolution <= config.resolution <= template.max_resolution:
        raise ValidationError(
            f"resolution {config.resolution} outside "
            f"[{template.min_resolution}, {template.max_resolution}]"
        )
    for i, stage in enumerate(template.stages):
        w, d = config.widths[i], config.depths[i]
        if not stage.base_width <= w <= stage.max_width:
            raise ValidationError(
                f"stage {i} width {w} outside [{stage.base_width}, {stage.max_width}]"
            )
        if not stage.base_depth <= d <= stage.max_depth:
            raise ValidationError(
                f"stage {i} depth {d} outside [{stage.base_depth}, {stage.max_depth}]"
            )


def base_config(template: NetworkTemplate) -> ArchConfig:
    """The starting point: base resolution, base widths, base depths."""
    return ArchConfig(
        resolution=template.base_resolution,
        widths=tuple(s.base_width for s in template.stages),
        depths=tuple(s.base_depth for s in template.stages),
    )


def dominates(a: ArchConfig, b: ArchConfig) -> bool:
    """True iff a is element-wise >= b over resolution, widths and depths."""
    if len(a.widths) != len(b.widths):
        raise ValidationError("configs have mismatched stage counts")
    if a.resolution < b.resolution:
        return False
    for wa, wb in zip(a.widths, b.widths):
        if wa < wb:
            return False
    for da, db in zip(a.depths, b.depths):
        if da < db:
            return False
    return True


# --- JSON interchange -----------------------------------------------------

_BLOCK_FIELDS = {
    "mbconv": {"kind", "expansion_ratio", "kernel_size", "se_ratio"},
    "ghost": {"kind", "expansion_ratio", "kernel_size", "se_ratio"},
    "residual_basic": {"kind", "kernel_size"},
    "plain_conv": {"kind", "kernel_size"},
}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")


def block_from_dict(obj: dict) -> BlockKind:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("block must be an object with a 'kind' field")
    kind = obj["kind"]
    if kind not in _BLOCK_FIELDS:
        raise ValidationError(f"unknown block kind {kind!r}")
    _reject_unknown(obj, _BLOCK_FIELDS[kind], f"block {kind}")
    try:
        if kind == "mbconv":
            return MBConv(
                expansion_ratio=parse_ratio(obj["expansion_ratio"]),
                kernel_size=obj["kernel_size"],
                se_ratio=parse_ratio(obj["se_ratio"]),
            )
        if kind == "ghost":
            return GhostBlock(
                expansion_ratio=parse_ratio(obj["expansion_ratio"]),
                kernel_size=obj["kernel_size"],
                se_ratio=parse_ratio(obj["se_ratio"]),
            )
        if kind == "residual_basic":
            return ResidualBasic(kernel_size=obj["kernel_size"])
        return PlainConv(kernel_size=obj["kernel_size"])
    except KeyError as exc:
        raise ValidationError(f"block {kind} missing field {exc.args[0]!r}") from exc


def block_to_dict(block: BlockKind) -> dict:
    out: dict = {"kind": block.kind, "kernel_size": block.kernel_size}
    if isinstance(block, (MBConv, GhostBlock)):
        out["expansion_ratio"] = format_ratio(block.expansion_ratio)
        out["se_ratio"] = format_ratio(block.se_ratio)
    return out


def template_from_dict(obj: dict) -> NetworkTemplate:
    if not isinstance(obj, dict):
        raise ValidationError("template must be a JSON object")
    _reject_unknown(
        obj,
        {"name", "stem", "stages", "head", "base_resolution", "min_resolution", "max_resolution"},
        "template",
    )
    try:
        stem_obj = obj["stem"]
        _reject_unknown(stem_obj, {"out_channels", "kernel_size", "stride"}, "stem")
        stem = Stem(
            out_channels=stem_obj["out_channels"],
            kernel_size=stem_obj["kernel_size"],
            stride=stem_obj["stride"],
        )
        stages = []
        for i, st in enumerate(obj["stages"]):
            _reject_unknown(
                st,
                {"block", "stride", "base_width", "base_depth", "max_width", "max_depth"},
                f"stage {i}",
            )
            stages.append(
                StageTemplate(
                    block=block_from_dict(st["block"]),
                    stride=st["stride"],
                    base_width=st["base_width"],
                    base_depth=st["base_depth"],
                    max_width=st["max_width"],
                    max_depth=st["max_depth"],
                )
            )
        head_obj = obj["head"]
        _reject_unknown(head_obj, {"channels", "num_classes"}, "head")
        head = Head(channels=head_obj["channels"], num_classes=head_obj["num_classes"])
        return NetworkTemplate(
            name=str(obj.get("name", "unnamed")),
            stem=stem,
            stages=tuple(stages),
            head=head,
            base_resolution=obj["base_resolution"],
            min_resolution=obj["min_resolution"],
            max_resolution=obj["max_resolution"],
        )
    except KeyError as exc:
        raise ValidationError(f"template missing field {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ValidationError(f"malformed template: {exc}") from exc


def template_to_dict(template: NetworkTemplate) -> dict:
    return {
        "name": template.name,
        "stem": {
            "out_channels": template.stem.out_channels,
            "kernel_size": template.stem.kernel_size,
            "stride": template.stem.stride,
        },
        "stages": [
            {
                "block": block_to_dict(s.block),
                "stride": s.stride,
                "base_width": s.base_width,
                "base_depth": s.base_depth,
                "max_width": s.max_width,
                "max_depth": s.max_depth,
            }
            for s in template.stages
        ],
        "head": {"channels": template.head.channels, "num_classes": template.head.num_classes},
        "base_resolution": template.base_resolution,
        "min_resolution": template.min_resolution,
        "max_resolution": template.max_resolution,
    }


def config_from_dict(obj: dict) -> ArchConfig:
    if not isinstance(obj, dict):
        raise ValidationError("config must be a JSON object")
    _reject_unknown(obj, {"resolution", "widths", "depths"}, "config")
    try:
        return ArchConfig(
            resolution=obj["resolution"],
            widths=tuple(obj["widths"]),
            depths=tuple(obj["depths"]),
        )
    except KeyError as exc:
        raise ValidationError(f"config missing field {exc.args[0]!r}") from exc


def config_to_dict(config: ArchConfig) -> dict:
    return {
        "resolution": config.resolution,
        "widths": list(config.widths),
        "depths": list(config.depths),
    }


def _load_json(path: Path, what: str) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {what} {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{what} {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc


def load_template(path: str | Path) -> NetworkTemplate:
    return template_from_dict(_load_json(Path(path), "template"))


def save_template(template: NetworkTemplate, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(template_to_dict(template), indent=2) + "\n", encoding="utf-8"
    )


def load_config(path: str | Path) -> ArchConfig:
    return config_from_dict(_load_json(Path(path), "config"))


def save_config(config: ArchConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")
