/**
 * Exact rationals for channel-count derivation.
 *
 * Expansion and squeeze-excitation ratios arrive as "n/d" strings or plain
 * numbers; deriving channel counts through floats would wobble at floor
 * boundaries (96 * (1/24) floors to 3 in doubles), so everything stays in
 * integer arithmetic.
 */

export interface Ratio {
  num: number;
  den: number;
}

export function parseRatio(value: unknown): Ratio {
  if (typeof value === "number" && Number.isFinite(value)) {
    return fromDecimalString(String(value));
  }
  if (typeof value === "string") {
    const slash = value.indexOf("/");
    if (slash >= 0) {
      const num = Number(value.slice(0, slash));
      const den = Number(value.slice(slash + 1));
      if (!Number.isInteger(num) || !Number.isInteger(den) || den === 0) {
        throw new Error(`not a ratio: ${value}`);
      }
      return normalize(num, den);
    }
    return fromDecimalString(value);
  }
  throw new Error(`not a ratio: ${JSON.stringify(value)}`);
}

function fromDecimalString(text: string): Ratio {
  const match = /^(-?\d+)(?:\.(\d+))?$/.exec(text.trim());
  if (!match) {
    throw new Error(`not a ratio: ${text}`);
  }
  const whole = match[1]!;
  const frac = match[2] ?? "";
  const den = 10 ** frac.length;
  const num = Number(whole) * den + (whole.startsWith("-") ? -1 : 1) * Number(frac || "0");
  return normalize(num, den);
}

function gcd(a: number, b: number): number {
  while (b !== 0) {
    [a, b] = [b, a % b];
  }
  return a;
}

function normalize(num: number, den: number): Ratio {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const g = gcd(Math.abs(num), den) || 1;
  return { num: num / g, den: den / g };
}

/** floor(value * ratio), exactly. */
export function floorTimes(value: number, ratio: Ratio): number {
  const scaled = value * ratio.num;
  return (scaled - (scaled % ratio.den)) / ratio.den;
}

/** round-half-up(value * ratio), exactly. */
export function roundHalfUpTimes(value: number, ratio: Ratio): number {
  const scaled = 2 * value * ratio.num + ratio.den;
  const den = 2 * ratio.den;
  return (scaled - (scaled % den)) / den;
}

export function isZero(ratio: Ratio): boolean {
  return ratio.num === 0;
}

export function isOne(ratio: Ratio): boolean {
  return ratio.num === ratio.den;
}
