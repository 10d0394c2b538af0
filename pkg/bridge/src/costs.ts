/**
 * MAC counting for the mirrored cost conventions: one multiply-add = 1 MAC,
 * ceiling division at strides, squeeze-excitation and pooling included.
 * All channel derivations use exact integer arithmetic (see ratio.ts).
 */

import { BlockKind, NetworkTemplate } from "./model.js";
import { floorTimes, isOne, isZero, Ratio, roundHalfUpTimes } from "./ratio.js";

const STEM_IN_CHANNELS = 3;
const GHOST_CHEAP_RATIO = 2;
const GHOST_CHEAP_KERNEL = 3;

export interface MacsBreakdown {
  stemMacs: number;
  perStageMacs: number[];
  headMacs: number;
  totalMacs: number;
}

function ceilDiv(a: number, b: number): number {
  return Math.ceil(a / b);
}

function expandedChannels(cIn: number, ratio: Ratio): number {
  return Math.max(1, roundHalfUpTimes(cIn, ratio));
}

function seChannels(cExpanded: number, ratio: Ratio): number {
  return Math.max(1, floorTimes(cExpanded, ratio));
}

function convMacs(h: number, w: number, cIn: number, cOut: number, k: number, groups = 1): number {
  return h * w * (cIn / groups) * cOut * k * k;
}

function seMacs(h: number, w: number, cExpanded: number, ratio: Ratio): number {
  if (isZero(ratio)) {
    return 0;
  }
  const reduced = seChannels(cExpanded, ratio);
  return (
    h * w * cExpanded + // global average pool
    cExpanded * reduced +
    reduced * cExpanded +
    h * w * cExpanded // rescale multiply
  );
}

function mbconvMacs(
  block: Extract<BlockKind, { kind: "mbconv" }>,
  cIn: number,
  cOut: number,
  hIn: number,
  wIn: number,
  stride: number,
): number {
  const hOut = ceilDiv(hIn, stride);
  const wOut = ceilDiv(wIn, stride);
  let macs = 0;
  let cExp = cIn;
  if (!isOne(block.expansionRatio)) {
    cExp = expandedChannels(cIn, block.expansionRatio);
    macs += convMacs(hIn, wIn, cIn, cExp, 1);
  }
  macs += convMacs(hOut, wOut, cExp, cExp, block.kernelSize, cExp);
  macs += seMacs(hOut, wOut, cExp, block.seRatio);
  macs += convMacs(hOut, wOut, cExp, cOut, 1);
  return macs;
}

function ghostModuleMacs(h: number, w: number, cIn: number, cOut: number): number {
  const primary = ceilDiv(cOut, GHOST_CHEAP_RATIO);
  return (
    convMacs(h, w, cIn, primary, 1) +
    convMacs(h, w, primary, primary, GHOST_CHEAP_KERNEL, primary)
  );
}

function ghostMacs(
  block: Extract<BlockKind, { kind: "ghost" }>,
  cIn: number,
  cOut: number,
  hIn: number,
  wIn: number,
  stride: number,
): number {
  const hOut = ceilDiv(hIn, stride);
  const wOut = ceilDiv(wIn, stride);
  const cExp = expandedChannels(cIn, block.expansionRatio);
  let macs = ghostModuleMacs(hIn, wIn, cIn, cExp);
  if (stride === 2) {
    macs += convMacs(hOut, wOut, cExp, cExp, block.kernelSize, cExp);
  }
  macs += seMacs(hOut, wOut, cExp, block.seRatio);
  macs += ghostModuleMacs(hOut, wOut, cExp, cOut);
  if (stride === 2) {
    // conv shortcut only on downsampling blocks
    macs += convMacs(hOut, wOut, cIn, cIn, block.kernelSize, cIn);
    macs += convMacs(hOut, wOut, cIn, cOut, 1);
  }
  return macs;
}

function blockMacs(
  block: BlockKind,
  cIn: number,
  cOut: number,
  hIn: number,
  wIn: number,
  stride: number,
): number {
  const hOut = ceilDiv(hIn, stride);
  const wOut = ceilDiv(wIn, stride);
  switch (block.kind) {
    case "mbconv":
      return mbconvMacs(block, cIn, cOut, hIn, wIn, stride);
    case "ghost":
      return ghostMacs(block, cIn, cOut, hIn, wIn, stride);
    case "residual_basic":
      // parameter-free shortcut: two full convolutions only
      return (
        convMacs(hOut, wOut, cIn, cOut, block.kernelSize) +
        convMacs(hOut, wOut, cOut, cOut, block.kernelSize)
      );
    case "plain_conv":
      return convMacs(hOut, wOut, cIn, cOut, block.kernelSize);
  }
}

export function networkMacs(
  template: NetworkTemplate,
  resolution: number,
  widths: number[],
  depths: number[],
): MacsBreakdown {
  if (widths.length !== template.stages.length || depths.length !== template.stages.length) {
    throw new Error(
      `config has ${widths.length} stages, template has ${template.stages.length}`,
    );
  }
  let size = ceilDiv(resolution, template.stem.stride);
  const stemMacs = convMacs(size, size, STEM_IN_CHANNELS, template.stem.outChannels, template.stem.kernelSize);
  let cPrev = template.stem.outChannels;
  const perStageMacs: number[] = [];
  for (let i = 0; i < template.stages.length; i++) {
    const stage = template.stages[i]!;
    const width = widths[i]!;
    const depth = depths[i]!;
    let macs = blockMacs(stage.block, cPrev, width, size, size, stage.stride);
    size = ceilDiv(size, stage.stride);
    for (let b = 1; b < depth; b++) {
      macs += blockMacs(stage.block, width, width, size, size, 1);
    }
    perStageMacs.push(macs);
    cPrev = width;
  }
  const headMacs =
    convMacs(size, size, cPrev, template.head.channels, 1) +
    size * size * template.head.channels +
    template.head.channels * template.head.numClasses;
  const totalMacs = stemMacs + perStageMacs.reduce((a, b) => a + b, 0) + headMacs;
  return { stemMacs, perStageMacs, headMacs, totalMacs };
}
