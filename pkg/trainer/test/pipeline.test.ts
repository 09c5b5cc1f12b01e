/** End-to-end contract with the search engine: a trained toy library must
 * pass `library validate`, filter, and search to a non-dominated front. */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { buildLibraryRecords, DEFAULT_CONFIG } from "../src/distill.js";
import { writeLibrary } from "../src/library.js";
import { loadSpace } from "../src/space.js";

const SPACE_PATH = new URL("../spaces/toy8.json", import.meta.url).pathname;

function blocknas(args: string[]) {
  const proc = spawnSync("python3", ["-m", "blocknas", ...args], { encoding: "utf-8" });
  return proc;
}

describe("trainer-to-engine pipeline", () => {
  it("emits a library the engine validates, filters, and searches", () => {
    const space = loadSpace(SPACE_PATH);
    const dir = mkdtempSync(join(tmpdir(), "pipe-"));
    const libPath = join(dir, "toy8.jsonl");
    const config = {
      ...DEFAULT_CONFIG,
      dataset: "synth8",
      images: 16,
      batchSize: 4,
      epochsPerBlock: 1.0,
      seed: 11,
    };
    const records = buildLibraryRecords(space, config);
    writeLibrary(libPath, space, records, config);

    for (const rec of records) {
      if (rec.option_id === "m") expect(rec.mse_loss).toBe(0.0);
    }

    const validate = blocknas(["library", "validate", libPath, "--space", SPACE_PATH]);
    expect(validate.stderr).toBe("");
    expect(validate.status).toBe(0);
    expect(validate.stdout).toContain("complete library");

    const filtered = join(dir, "filtered.jsonl");
    const filter = blocknas([
      "filter", libPath, "--space", SPACE_PATH, "--d", "0.1", "--cost", "macs",
      "-o", filtered, "--report", join(dir, "report.json"),
    ]);
    expect(filter.status).toBe(0);

    const resultPath = join(dir, "result.json");
    const search = blocknas([
      "search", filtered, "--space", SPACE_PATH, "--pop", "16", "--steps", "8",
      "--seed", "3", "--cost", "macs", "-o", resultPath,
    ]);
    expect(search.status).toBe(0);

    const result = JSON.parse(readFileSync(resultPath, "utf-8"));
    expect(result.front.length).toBeGreaterThan(0);
    const pts = result.front.map((e: any) => [e.surrogate, e.macs]);
    for (const a of pts) {
      for (const b of pts) {
        if (a === b) continue;
        const dominates = b[0] <= a[0] && b[1] <= a[1] && (b[0] < a[0] || b[1] < a[1]);
        expect(dominates).toBe(false);
      }
    }
    console.log(
      `\nACCEPTANCE 9 trainer-contract: PASS (library validated; ` +
      `front size ${result.front.length}, non-dominated)`,
    );
  }, 120_000);
});
