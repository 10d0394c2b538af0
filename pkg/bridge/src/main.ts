#!/usr/bin/env node
/**
 * Reference evaluator process.
 *
 * Modes:
 *   echo             constant accuracy for every request (--accuracy, default 0.5)
 *   surrogate-mirror recompute the engine's surrogate from a params document
 *                    (--params file: {protocol, surrogate, template})
 *   trainer-stub     validate the request and return a deterministic
 *                    placeholder; this is the seam where a real proxy-task
 *                    finetune (config -> model builder -> short finetune ->
 *                    validation accuracy) would attach
 */

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";
import { pathToFileURL } from "node:url";

import { NetworkTemplate, parseTemplate } from "./model.js";
import { EvalResponse, parseRequest, RequestError } from "./protocol.js";
import { configNoise, parseSurrogateParams, surrogateAccuracy, SurrogateParams } from "./surrogate.js";

interface Options {
  mode: "echo" | "surrogate-mirror" | "trainer-stub";
  paramsPath?: string;
  accuracy: number;
}

function parseArgs(argv: string[]): Options {
  const options: Options = { mode: "echo", accuracy: 0.5 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]!;
    switch (arg) {
      case "--mode": {
        const mode = argv[++i];
        if (mode !== "echo" && mode !== "surrogate-mirror" && mode !== "trainer-stub") {
          throw new Error(`unknown mode ${mode}`);
        }
        options.mode = mode;
        break;
      }
      case "--params":
        options.paramsPath = argv[++i];
        break;
      case "--accuracy": {
        const value = Number(argv[++i]);
        if (!(value >= 0 && value <= 1)) {
          throw new Error("--accuracy must be in [0, 1]");
        }
        options.accuracy = value;
        break;
      }
      default:
        throw new Error(`unknown flag ${arg}`);
    }
  }
  return options;
}

interface MirrorConfig {
  template: NetworkTemplate;
  surrogate: SurrogateParams;
}

function loadMirrorConfig(path: string): MirrorConfig {
  const doc = JSON.parse(readFileSync(path, "utf-8")) as Record<string, unknown>;
  if (doc.protocol !== 1) {
    throw new Error(`params document has protocol ${JSON.stringify(doc.protocol)}, expected 1`);
  }
  return {
    template: parseTemplate(doc.template),
    surrogate: parseSurrogateParams(doc.surrogate),
  };
}

export function handleLine(line: string, options: Options, mirror: MirrorConfig | null): EvalResponse | null {
  if (!line.trim()) {
    return null;
  }
  try {
    const request = parseRequest(line);
    switch (options.mode) {
      case "echo":
        return { id: request.id, accuracy: options.accuracy, meta: { mode: "echo" } };
      case "surrogate-mirror": {
        if (mirror === null) {
          return { id: request.id, error: "surrogate-mirror needs --params" };
        }
        const accuracy = surrogateAccuracy(
          mirror.template,
          mirror.surrogate,
          request.resolution,
          request.widths,
          request.depths,
        );
        return { id: request.id, accuracy, meta: { mode: "surrogate-mirror" } };
      }
      case "trainer-stub": {
        // no training happens here; the placeholder is keyed by the config so
        // repeated calls and reordered calls agree
        const accuracy = 0.5 + 0.1 * configNoise(0, request.resolution, request.widths, request.depths);
        return {
          id: request.id,
          accuracy,
          meta: {
            mode: "trainer-stub",
            seam: "config -> model builder -> proxy finetune -> validation accuracy",
            budget_macs: request.budgetMacs,
          },
        };
      }
    }
  } catch (err) {
    if (err instanceof RequestError) {
      return { id: err.id, error: err.message };
    }
    return { id: -1, error: String(err instanceof Error ? err.message : err) };
  }
}

function main(): void {
  const options = parseArgs(process.argv.slice(2));
  let mirror: MirrorConfig | null = null;
  if (options.mode === "surrogate-mirror") {
    if (!options.paramsPath) {
      throw new Error("surrogate-mirror needs --params <file>");
    }
    mirror = loadMirrorConfig(options.paramsPath);
  }
  const reader = createInterface({ input: process.stdin, crlfDelay: Infinity });
  reader.on("line", (line) => {
    const response = handleLine(line, options, mirror);
    if (response !== null) {
      process.stdout.write(JSON.stringify(response) + "\n");
    }
  });
}

if (process.argv[1] && pathToFileURL(process.argv[1]).href === import.meta.url) {
  main();
}
