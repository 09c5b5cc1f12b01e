/** Trainer command line: build real block libraries and CKA heatmap data. */

import { existsSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Block } from "./blocks.js";
import { ckaHeatmap, heatmapToCsv } from "./cka.js";
import { makeDataset } from "./dataset.js";
import { BkdRecordOut, DEFAULT_CONFIG, Mothernet, TrainerConfig, buildLibraryRecords } from "./distill.js";
import { writeLibrary } from "./library.js";
import { loadSpace } from "./space.js";
import { Tensor4 } from "./tensor.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got '${key}'`);
    }
    args.set(key.slice(2), argv[i + 1]);
  }
  return args;
}

function configFrom(args: Map<string, string>): TrainerConfig {
  return {
    dataset: args.get("dataset") ?? DEFAULT_CONFIG.dataset,
    images: args.has("images") ? Number(args.get("images")) : DEFAULT_CONFIG.images,
    epochsPerBlock: args.has("epochs") ? Number(args.get("epochs")) : DEFAULT_CONFIG.epochsPerBlock,
    batchSize: args.has("batch") ? Number(args.get("batch")) : DEFAULT_CONFIG.batchSize,
    learningRate: args.has("lr") ? Number(args.get("lr")) : DEFAULT_CONFIG.learningRate,
    seed: args.has("seed") ? Number(args.get("seed")) : DEFAULT_CONFIG.seed,
    cacheDir: args.get("cache"),
    checkpointDir: args.get("checkpoints"),
  };
}

function cmdBuildLibrary(args: Map<string, string>): void {
  const space = loadSpace(required(args, "space"));
  const out = required(args, "out");
  const config = configFrom(args);
  const records = buildLibraryRecords(space, config, (p) => {
    process.stderr.write(
      `${p.skipped ? "skip " : "train"} slot ${p.slot} option ${p.option}\n`,
    );
  });
  writeLibrary(out, space, records, config);
  process.stdout.write(`ok: wrote ${records.length} records to ${out}\n`);
}

function cmdCka(args: Map<string, string>): void {
  const space = loadSpace(required(args, "space"));
  const out = required(args, "out");
  const config = configFrom(args);
  const [h, w] = space.slots[0].in_resolution;
  const input = makeDataset(config.dataset, config.images, space.slots[0].in_channels, h, w, config.seed);

  const choices = (args.get("choices") ?? space.slots.map(() => "0").join(","))
    .split(",")
    .map((s) => Number(s));
  if (choices.length !== space.slots.length) {
    throw new Error(`choices must list ${space.slots.length} option indices`);
  }

  const mothernet = new Mothernet(space, config.seed);
  const blocks: Block[] = [];
  for (const slot of space.slots) {
    const choice = choices[slot.slot_index];
    const option = slot.options[choice];
    const block = new Block(slot, option, undefined);
    if (choice === 0) {
      block.copyFrom(mothernet.blocks[slot.slot_index]);
    } else {
      const dir = config.checkpointDir;
      if (!dir) throw new Error("non-mothernet choices need --checkpoints from a build-library run");
      const path = join(dir, `slot${slot.slot_index}_${option.option_id}.json`);
      if (!existsSync(path)) {
        throw new Error(`no trained weights at ${path}; run build-library first`);
      }
      block.weightsIn(JSON.parse(readFileSync(path, "utf-8")).weights);
    }
    blocks.push(block);
  }

  const layers: { name: string; acts: Tensor4 }[] = [{ name: "input", acts: input }];
  let x = input;
  blocks.forEach((block, i) => {
    x = block.forward(x);
    layers.push({ name: `block${i}`, acts: x });
  });
  writeFileSync(out, heatmapToCsv(ckaHeatmap(layers)), "utf-8");
  process.stdout.write(`ok: wrote ${layers.length}x${layers.length} heatmap to ${out}\n`);
}

function required(args: Map<string, string>, key: string): string {
  const value = args.get(key);
  if (value === undefined) throw new Error(`missing required --${key}`);
  return value;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "build-library") {
      cmdBuildLibrary(parseArgs(rest));
    } else if (command === "cka") {
      cmdCka(parseArgs(rest));
    } else {
      process.stderr.write("usage: cli.js build-library|cka --flag value ...\n");
      return 2;
    }
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
