/** Blockwise distillation: train every replacement option to mimic its
 * mothernet block's output feature map, and record the achieved MSE.
 *
 * The mothernet is the stack of option-0 blocks with seeded random weights.
 * Teacher activations are computed once per slot and cached (to disk when a
 * cache dir is given), so every option trains from identical inputs and the
 * run order cannot influence results. Completed records persist one file per
 * (slot, option); rerunning a partially finished build retrains nothing.
 */

import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Block, Param } from "./blocks.js";
import { makeDataset, sliceImages } from "./dataset.js";
import { blockMacs } from "./macs.js";
import { Rng } from "./rng.js";
import { mse, mseGrad, Tensor4 } from "./tensor.js";
import { BlockSlot, SearchSpace, outResolution } from "./space.js";

export interface TrainerConfig {
  dataset: string; // e.g. "synth32"
  images: number;
  epochsPerBlock: number; // the "1e" budget: one full pass by default
  batchSize: number;
  learningRate: number;
  seed: number;
  cacheDir?: string; // teacher activation cache
  checkpointDir?: string; // per-block weights + progress records
}

export const DEFAULT_CONFIG: TrainerConfig = {
  dataset: "synth32",
  images: 32,
  epochsPerBlock: 1.0,
  batchSize: 8,
  learningRate: 0.01,
  seed: 0,
};

export interface BkdRecordOut {
  slot_index: number;
  option_id: string;
  mse_loss: number;
  cost_macs: number;
  cost_latency_us: number | null;
  trained_epochs: number;
}

class Adam {
  private m: Float64Array[];
  private v: Float64Array[];
  private t = 0;

  constructor(private params: Param[], private lr: number, private b1 = 0.9, private b2 = 0.999, private eps = 1e-8) {
    this.m = params.map((p) => new Float64Array(p.w.length));
    this.v = params.map((p) => new Float64Array(p.w.length));
  }

  step(): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.b1, this.t);
    const c2 = 1 - Math.pow(this.b2, this.t);
    for (let i = 0; i < this.params.length; i++) {
      const { w, g } = this.params[i];
      const m = this.m[i];
      const v = this.v[i];
      for (let j = 0; j < w.length; j++) {
        m[j] = this.b1 * m[j] + (1 - this.b1) * g[j];
        v[j] = this.b2 * v[j] + (1 - this.b2) * g[j] * g[j];
        w[j] -= (this.lr * (m[j] / c1)) / (Math.sqrt(v[j] / c2) + this.eps);
      }
    }
  }
}

export class Mothernet {
  readonly blocks: Block[];

  constructor(readonly space: SearchSpace, seed: number) {
    // one weight stream per slot keeps teachers stable under slot subsets
    this.blocks = space.slots.map(
      (slot) => new Block(slot, slot.options[0], new Rng(seed * 7919 + slot.slot_index)),
    );
  }

  /** Activations at every slot boundary: [input, block0 out, block1 out, ...]. */
  activations(input: Tensor4): Tensor4[] {
    const acts = [input];
    let x = input;
    for (const block of this.blocks) {
      x = block.forward(x);
      acts.push(x);
    }
    return acts;
  }
}

function tensorToBytes(t: Tensor4): Buffer {
  const header = Buffer.alloc(16);
  header.writeInt32LE(t.n, 0);
  header.writeInt32LE(t.c, 4);
  header.writeInt32LE(t.h, 8);
  header.writeInt32LE(t.w, 12);
  return Buffer.concat([header, Buffer.from(t.data.buffer.slice(0))]);
}

function tensorFromBytes(buf: Buffer): Tensor4 {
  const n = buf.readInt32LE(0);
  const c = buf.readInt32LE(4);
  const h = buf.readInt32LE(8);
  const w = buf.readInt32LE(12);
  const body = buf.subarray(16);
  const data = new Float64Array(body.buffer, body.byteOffset, n * c * h * w);
  return new Tensor4(n, c, h, w, data.slice());
}

export class TeacherCache {
  /** Per-slot (input, target) pairs for distillation. */
  readonly pairs: { input: Tensor4; target: Tensor4 }[] = [];

  constructor(space: SearchSpace, config: TrainerConfig) {
    const [h, w] = space.slots[0].in_resolution;
    const channels = space.slots[0].in_channels;
    if (config.cacheDir) mkdirSync(config.cacheDir, { recursive: true });

    const loadSlot = (i: number): { input: Tensor4; target: Tensor4 } | null => {
      if (!config.cacheDir) return null;
      const inPath = join(config.cacheDir, `slot${i}_in.bin`);
      const outPath = join(config.cacheDir, `slot${i}_out.bin`);
      if (!existsSync(inPath) || !existsSync(outPath)) return null;
      return { input: tensorFromBytes(readFileSync(inPath)), target: tensorFromBytes(readFileSync(outPath)) };
    };

    let cachedAll = true;
    for (let i = 0; i < space.slots.length; i++) {
      const pair = loadSlot(i);
      if (pair === null) {
        cachedAll = false;
        break;
      }
      this.pairs.push(pair);
    }
    if (cachedAll && this.pairs.length === space.slots.length) return;

    this.pairs.length = 0;
    const dataset = makeDataset(config.dataset, config.images, channels, h, w, config.seed);
    const mothernet = new Mothernet(space, config.seed);
    const acts = mothernet.activations(dataset);
    for (let i = 0; i < space.slots.length; i++) {
      this.pairs.push({ input: acts[i], target: acts[i + 1] });
      if (config.cacheDir) {
        writeFileSync(join(config.cacheDir, `slot${i}_in.bin`), tensorToBytes(acts[i]));
        writeFileSync(join(config.cacheDir, `slot${i}_out.bin`), tensorToBytes(acts[i + 1]));
      }
    }
  }
}

export interface DistillResult {
  record: BkdRecordOut;
  block: Block;
}

export function distillBlock(
  space: SearchSpace,
  teacher: TeacherCache,
  slotIndex: number,
  optionIndex: number,
  config: TrainerConfig,
): DistillResult {
  const slot: BlockSlot = space.slots[slotIndex];
  const option = slot.options[optionIndex];
  const { input, target } = teacher.pairs[slotIndex];
  const [oh, ow] = outResolution(slot);
  if (target.h !== oh || target.w !== ow || target.c !== slot.out_channels) {
    throw new Error(
      `teacher target shape ${target.c}x${target.h}x${target.w} does not match slot ` +
      `${slot.out_channels}x${oh}x${ow}`,
    );
  }

  if (optionIndex === 0) {
    // self-distillation identity: the student is the teacher block itself
    const student = new Block(slot, option, new Rng(1));
    student.copyFrom(new Mothernet(space, config.seed).blocks[slotIndex]);
    const out = student.forward(input);
    const loss = mse(out, target);
    return {
      record: {
        slot_index: slotIndex,
        option_id: option.option_id,
        mse_loss: loss,
        cost_macs: blockMacs(slot, option),
        cost_latency_us: null,
        trained_epochs: 0.0,
      },
      block: student,
    };
  }

  const rng = new Rng(config.seed * 104729 + slotIndex * 997 + optionIndex);
  const student = new Block(slot, option, rng);
  const adam = new Adam(student.params(), config.learningRate);

  const batches: { x: Tensor4; t: Tensor4 }[] = [];
  for (let start = 0; start < input.n; start += config.batchSize) {
    const end = Math.min(start + config.batchSize, input.n);
    batches.push({ x: sliceImages(input, start, end), t: sliceImages(target, start, end) });
  }

  const totalEpochs = Math.max(1, Math.round(config.epochsPerBlock));
  let epochMean = Infinity;
  for (let epoch = 0; epoch < totalEpochs; epoch++) {
    let lossSum = 0;
    for (const { x, t } of batches) {
      student.zeroGrads();
      const out = student.forward(x);
      lossSum += mse(out, t);
      student.backward(mseGrad(out, t));
      adam.step();
    }
    epochMean = lossSum / batches.length;
  }
  if (!Number.isFinite(epochMean)) {
    throw new Error(`distillation diverged at slot ${slotIndex} option '${option.option_id}'`);
  }

  return {
    record: {
      slot_index: slotIndex,
      option_id: option.option_id,
      mse_loss: epochMean,
      cost_macs: blockMacs(slot, option),
      cost_latency_us: null,
      trained_epochs: totalEpochs,
    },
    block: student,
  };
}

export interface BuildProgress {
  slot: number;
  option: string;
  skipped: boolean;
}

export function buildLibraryRecords(
  space: SearchSpace,
  config: TrainerConfig,
  onProgress?: (p: BuildProgress) => void,
): BkdRecordOut[] {
  const teacher = new TeacherCache(space, config);
  const records: BkdRecordOut[] = [];
  const ckptDir = config.checkpointDir;
  if (ckptDir) mkdirSync(ckptDir, { recursive: true });

  for (const slot of space.slots) {
    for (let j = 0; j < slot.options.length; j++) {
      const option = slot.options[j];
      const recPath = ckptDir ? join(ckptDir, `slot${slot.slot_index}_${option.option_id}.json`) : null;
      if (recPath && existsSync(recPath)) {
        const saved = JSON.parse(readFileSync(recPath, "utf-8"));
        records.push(saved.record);
        onProgress?.({ slot: slot.slot_index, option: option.option_id, skipped: true });
        continue;
      }
      const { record, block } = distillBlock(space, teacher, slot.slot_index, j, config);
      records.push(record);
      if (recPath) {
        writeFileSync(recPath, JSON.stringify({ record, weights: block.weightsOut() }));
      }
      onProgress?.({ slot: slot.slot_index, option: option.option_id, skipped: false });
    }
  }
  return records;
}
