/**
 * The engine's synthetic accuracy model, recomputed independently:
 * saturating per-stage terms plus a resolution term, with an optional
 * perturbation keyed by (seed, config) through sha256 so results never
 * depend on evaluation order.
 */

import { createHash } from "node:crypto";

import { networkMacs } from "./costs.js";
import { NetworkTemplate } from "./model.js";

export interface SurrogateParams {
  stageWeights: number[];
  stageScales: number[];
  resolutionWeight: number;
  resolutionScale: number;
  noise: number;
  seed: number;
}

export function parseSurrogateParams(value: unknown): SurrogateParams {
  if (typeof value !== "object" || value === null) {
    throw new Error("surrogate params must be an object");
  }
  const obj = value as Record<string, unknown>;
  const weights = obj.stage_weights;
  const scales = obj.stage_scales;
  if (!Array.isArray(weights) || !Array.isArray(scales) || weights.length !== scales.length) {
    throw new Error("stage_weights and stage_scales must be arrays of equal length");
  }
  const params: SurrogateParams = {
    stageWeights: weights.map(Number),
    stageScales: scales.map(Number),
    resolutionWeight: Number(obj.resolution_weight),
    resolutionScale: Number(obj.resolution_scale),
    noise: Number(obj.noise ?? 0),
    seed: Number(obj.seed ?? 0),
  };
  if (params.stageScales.some((b) => !(b > 0)) || !(params.resolutionScale > 0)) {
    throw new Error("surrogate scales must be positive");
  }
  return params;
}

export function configNoise(seed: number, resolution: number, widths: number[], depths: number[]): number {
  const key = `${seed}|${resolution}|${widths.join(",")}|${depths.join(",")}`;
  const digest = createHash("sha256").update(key, "ascii").digest("hex");
  const u = Number(BigInt("0x" + digest.slice(0, 16))) / 2 ** 64;
  return 2 * u - 1;
}

export function surrogateAccuracy(
  template: NetworkTemplate,
  params: SurrogateParams,
  resolution: number,
  widths: number[],
  depths: number[],
): number {
  if (params.stageWeights.length !== template.stages.length) {
    throw new Error("surrogate params sized for a different template");
  }
  const breakdown = networkMacs(template, resolution, widths, depths);
  let score = 0;
  for (let i = 0; i < params.stageWeights.length; i++) {
    score += params.stageWeights[i]! * (1 - Math.exp(-breakdown.perStageMacs[i]! / params.stageScales[i]!));
  }
  score += params.resolutionWeight * (1 - Math.exp(-resolution / params.resolutionScale));
  if (params.noise > 0) {
    score += params.noise * configNoise(params.seed, resolution, widths, depths);
  }
  return Math.min(1, Math.max(0, score));
}
