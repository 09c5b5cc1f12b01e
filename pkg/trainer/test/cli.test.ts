/** CLI smoke tests over the compiled entry point. */

import { execSync, spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

const ROOT = join(dirname(fileURLToPath(import.meta.url)), "..");
const CLI = join(ROOT, "dist", "cli.js");
const SPACE = join(ROOT, "spaces", "toy8.json");

function cli(args: string[]) {
  return spawnSync("node", [CLI, ...args], { encoding: "utf-8" });
}

describe("trainer cli", () => {
  beforeAll(() => {
    if (!existsSync(CLI)) execSync("npx tsc -p tsconfig.json", { cwd: ROOT });
  });

  it("build-library then cka produce consumable artifacts", () => {
    const dir = mkdtempSync(join(tmpdir(), "cli-"));
    const lib = join(dir, "lib.jsonl");
    const ckpt = join(dir, "ckpt");

    const build = cli([
      "build-library", "--space", SPACE, "--out", lib,
      "--dataset", "synth8", "--images", "8", "--batch", "4",
      "--seed", "2", "--checkpoints", ckpt, "--cache", join(dir, "cache"),
    ]);
    expect(build.status).toBe(0);
    const lines = readFileSync(lib, "utf-8").trim().split("\n");
    expect(JSON.parse(lines[0]).space_name).toBe("toy8");
    expect(lines.length).toBe(1 + 15);

    const heat = join(dir, "heat.csv");
    const cka = cli([
      "cka", "--space", SPACE, "--out", heat,
      "--dataset", "synth8", "--images", "8", "--seed", "2",
      "--choices", "0,2,1", "--checkpoints", ckpt,
    ]);
    expect(cka.stderr).toBe("");
    expect(cka.status).toBe(0);
    const rows = readFileSync(heat, "utf-8").trim().split("\n");
    expect(rows[0]).toBe("layer,input,block0,block1,block2");
    // diagonal of the matrix body is all 1.0
    for (let i = 1; i < rows.length; i++) {
      expect(rows[i].split(",")[i]).toBe("1.00000000");
    }
  }, 120_000);

  it("rejects unknown commands and missing flags", () => {
    expect(cli(["nope"]).status).toBe(2);
    const missing = cli(["build-library", "--space", SPACE]);
    expect(missing.status).toBe(1);
    expect(missing.stderr).toContain("--out");
  });
});
