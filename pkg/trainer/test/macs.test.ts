import { describe, expect, it } from "vitest";

import { blockMacs, pointwiseMacs, spatialMacs } from "../src/macs.js";
import { expandedChannels } from "../src/space.js";
import type { BlockOption, BlockSlot } from "../src/space.js";

const DW = "depthwise_inverted_bottleneck" as const;
const GR = "grouped_inverted_bottleneck" as const;

function opt(partial: Partial<BlockOption> = {}): BlockOption {
  return {
    option_id: "o", layer_type: DW, kernel: 3, expansion: 2, depth: 1,
    activation: "relu", channel_scale: 1.0, ...partial,
  };
}

describe("mac counting parity with the engine's arithmetic", () => {
  it("depthwise spatial sublayer at 16x16, ce=96, k=3", () => {
    expect(spatialMacs(16, 16, 96, 3, DW)).toBe(221184);
  });

  it("two 1x1 products at unit resolution", () => {
    expect(pointwiseMacs(1, 1, 8, 8) + pointwiseMacs(1, 1, 8, 8)).toBe(128);
  });

  it("grouped spatial uses two groups with floor division", () => {
    expect(spatialMacs(4, 4, 10, 3, GR)).toBe(4 * 4 * Math.floor((9 * 100) / 2));
  });

  it("expanded channels round half-up on the half scale", () => {
    expect(expandedChannels(16, opt({ expansion: 3 }))).toBe(48);
    expect(expandedChannels(3, opt({ expansion: 3, channel_scale: 0.5 }))).toBe(5);
  });

  it("whole block by hand: stride 2, depth 1, e2", () => {
    const slot: BlockSlot = {
      slot_index: 0, in_channels: 8, out_channels: 16,
      in_resolution: [8, 8], stride: 2, options: [],
    };
    const ce = 16;
    const expected = 8 * 8 * 8 * ce + 4 * 4 * ce * 9 + 4 * 4 * ce * 16;
    expect(blockMacs(slot, opt())).toBe(expected);
  });

  it("depth doubling adds one stride-1 cell", () => {
    const slot: BlockSlot = {
      slot_index: 0, in_channels: 8, out_channels: 16,
      in_resolution: [8, 8], stride: 2, options: [],
    };
    const d1 = blockMacs(slot, opt({ depth: 1 }));
    const d2 = blockMacs(slot, opt({ depth: 2 }));
    const ce = expandedChannels(16, opt());
    const cell2 = 4 * 4 * 16 * ce + 4 * 4 * ce * 9 + 4 * 4 * ce * 16;
    expect(d2 - d1).toBe(cell2);
  });
});
