/** Emission of the block-library JSON Lines format the search engine loads. */

import { writeFileSync } from "node:fs";

import { BkdRecordOut, TrainerConfig } from "./distill.js";
import { SearchSpace } from "./space.js";

export const FORMAT_VERSION = 1;

export function libraryToJsonl(space: SearchSpace, records: BkdRecordOut[], config: TrainerConfig): string {
  const header = {
    space_name: space.name,
    format_version: FORMAT_VERSION,
    producer: "bkd-trainer/0.1.0",
    trainer_config: {
      dataset: config.dataset,
      images: config.images,
      epochs_per_block: config.epochsPerBlock,
      batch_size: config.batchSize,
      learning_rate: config.learningRate,
      seed: config.seed,
    },
  };
  const lines = [JSON.stringify(header)];
  for (const r of records) {
    lines.push(JSON.stringify({
      slot_index: r.slot_index,
      option_id: r.option_id,
      mse_loss: r.mse_loss,
      cost_macs: r.cost_macs,
      cost_latency_us: r.cost_latency_us,
      trained_epochs: r.trained_epochs,
    }));
  }
  return lines.join("\n") + "\n";
}

export function writeLibrary(path: string, space: SearchSpace, records: BkdRecordOut[], config: TrainerConfig): void {
  writeFileSync(path, libraryToJsonl(space, records, config), "utf-8");
}
