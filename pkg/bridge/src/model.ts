/** Template document parsing, mirroring the engine's JSON schema. */

import { parseRatio, Ratio } from "./ratio.js";

export type BlockKind =
  | { kind: "mbconv"; kernelSize: number; expansionRatio: Ratio; seRatio: Ratio }
  | { kind: "ghost"; kernelSize: number; expansionRatio: Ratio; seRatio: Ratio }
  | { kind: "residual_basic"; kernelSize: number }
  | { kind: "plain_conv"; kernelSize: number };

export interface StageTemplate {
  block: BlockKind;
  stride: number;
  baseWidth: number;
  baseDepth: number;
  maxWidth: number;
  maxDepth: number;
}

export interface NetworkTemplate {
  name: string;
  stem: { outChannels: number; kernelSize: number; stride: number };
  stages: StageTemplate[];
  head: { channels: number; numClasses: number };
  baseResolution: number;
  minResolution: number;
  maxResolution: number;
}

function requirePositiveInt(value: unknown, what: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 1) {
    throw new Error(`${what} must be a positive integer, got ${JSON.stringify(value)}`);
  }
  return value;
}

function asRecord(value: unknown, what: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error(`${what} must be an object`);
  }
  return value as Record<string, unknown>;
}

function parseBlock(value: unknown): BlockKind {
  const obj = asRecord(value, "block");
  const kernelSize = requirePositiveInt(obj.kernel_size, "kernel_size");
  if (kernelSize % 2 === 0) {
    throw new Error(`kernel_size must be odd, got ${kernelSize}`);
  }
  switch (obj.kind) {
    case "mbconv":
    case "ghost":
      return {
        kind: obj.kind,
        kernelSize,
        expansionRatio: parseRatio(obj.expansion_ratio),
        seRatio: parseRatio(obj.se_ratio),
      };
    case "residual_basic":
    case "plain_conv":
      return { kind: obj.kind, kernelSize };
    default:
      throw new Error(`unknown block kind ${JSON.stringify(obj.kind)}`);
  }
}

export function parseTemplate(value: unknown): NetworkTemplate {
  const obj = asRecord(value, "template");
  const stem = asRecord(obj.stem, "stem");
  const head = asRecord(obj.head, "head");
  if (!Array.isArray(obj.stages) || obj.stages.length === 0) {
    throw new Error("template needs a non-empty stages array");
  }
  const stages = obj.stages.map((raw, i) => {
    const stage = asRecord(raw, `stage ${i}`);
    const stride = requirePositiveInt(stage.stride, "stride");
    if (stride !== 1 && stride !== 2) {
      throw new Error(`stage stride must be 1 or 2, got ${stride}`);
    }
    return {
      block: parseBlock(stage.block),
      stride,
      baseWidth: requirePositiveInt(stage.base_width, "base_width"),
      baseDepth: requirePositiveInt(stage.base_depth, "base_depth"),
      maxWidth: requirePositiveInt(stage.max_width, "max_width"),
      maxDepth: requirePositiveInt(stage.max_depth, "max_depth"),
    };
  });
  return {
    name: typeof obj.name === "string" ? obj.name : "unnamed",
    stem: {
      outChannels: requirePositiveInt(stem.out_channels, "stem out_channels"),
      kernelSize: requirePositiveInt(stem.kernel_size, "stem kernel_size"),
      stride: requirePositiveInt(stem.stride, "stem stride"),
    },
    stages,
    head: {
      channels: requirePositiveInt(head.channels, "head channels"),
      numClasses: requirePositiveInt(head.num_classes, "num_classes"),
    },
    baseResolution: requirePositiveInt(obj.base_resolution, "base_resolution"),
    minResolution: requirePositiveInt(obj.min_resolution, "min_resolution"),
    maxResolution: requirePositiveInt(obj.max_resolution, "max_resolution"),
  };
}
