/**
 * Wire protocol, version 1: one JSON object per line on stdin, one response
 * per request on stdout, matched by id (responses may be emitted out of
 * order by other implementations).  A malformed line yields an error object
 * with the offending id, or -1 when no id could be recovered, and the
 * process keeps serving.
 */

export const PROTOCOL_VERSION = 1;

export interface EvalRequest {
  id: number;
  resolution: number;
  widths: number[];
  depths: number[];
  budgetMacs: number;
}

export type EvalResponse =
  | { id: number; accuracy: number; meta: Record<string, unknown> }
  | { id: number; error: string };

export function parseRequest(line: string): EvalRequest {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new RequestError(-1, "not valid JSON");
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new RequestError(-1, "request must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const id = typeof obj.id === "number" && Number.isInteger(obj.id) ? obj.id : -1;
  if (id === -1) {
    throw new RequestError(-1, "request lacks an integer id");
  }
  if (obj.protocol !== PROTOCOL_VERSION) {
    throw new RequestError(id, `protocol mismatch: expected ${PROTOCOL_VERSION}`);
  }
  if (typeof obj.resolution !== "number" || !Number.isInteger(obj.resolution) || obj.resolution < 1) {
    throw new RequestError(id, "resolution must be a positive integer");
  }
  if (!Array.isArray(obj.stages) || obj.stages.length === 0) {
    throw new RequestError(id, "stages must be a non-empty array");
  }
  const widths: number[] = [];
  const depths: number[] = [];
  for (const stage of obj.stages) {
    if (typeof stage !== "object" || stage === null) {
      throw new RequestError(id, "each stage must be an object");
    }
    const { width, depth } = stage as Record<string, unknown>;
    if (!Number.isInteger(width) || (width as number) < 1 || !Number.isInteger(depth) || (depth as number) < 1) {
      throw new RequestError(id, "stage width and depth must be positive integers");
    }
    widths.push(width as number);
    depths.push(depth as number);
  }
  const budget = obj.budget;
  let budgetMacs = 0;
  if (typeof budget === "object" && budget !== null && "macs" in budget) {
    const macs = (budget as Record<string, unknown>).macs;
    if (typeof macs === "number" && Number.isFinite(macs)) {
      budgetMacs = macs;
    }
  }
  return { id, resolution: obj.resolution, widths, depths, budgetMacs };
}

export class RequestError extends Error {
  constructor(public readonly id: number, message: string) {
    super(message);
  }
}
