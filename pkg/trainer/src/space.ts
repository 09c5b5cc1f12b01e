/** Search-space file loading: the same JSON schema the search engine consumes. */

import { readFileSync } from "node:fs";

export type LayerType = "depthwise_inverted_bottleneck" | "grouped_inverted_bottleneck";
export type Activation = "relu" | "swish";

export interface BlockOption {
  option_id: string;
  layer_type: LayerType;
  kernel: number;
  expansion: number;
  depth: number;
  activation: Activation;
  channel_scale: number;
}

export interface BlockSlot {
  slot_index: number;
  in_channels: number;
  out_channels: number;
  in_resolution: [number, number];
  stride: number;
  options: BlockOption[];
}

export interface SearchSpace {
  name: string;
  stem_cost_macs: number;
  head_cost_macs: number;
  slots: BlockSlot[];
}

export function loadSpace(path: string): SearchSpace {
  const doc = JSON.parse(readFileSync(path, "utf-8"));
  const slots: BlockSlot[] = doc.slots.map((s: any, i: number) => ({
    slot_index: i,
    in_channels: s.in_channels,
    out_channels: s.out_channels,
    in_resolution: [s.in_resolution[0], s.in_resolution[1]],
    stride: s.stride,
    options: s.options,
  }));
  return {
    name: doc.name,
    stem_cost_macs: doc.stem_cost_macs,
    head_cost_macs: doc.head_cost_macs,
    slots,
  };
}

/** Internal expanded width; ties on the half scale round half-up. */
export function expandedChannels(inChannels: number, option: BlockOption): number {
  if (option.channel_scale === 1.0) return option.expansion * inChannels;
  return Math.floor((option.expansion * inChannels + 1) / 2);
}

export function outResolution(slot: BlockSlot): [number, number] {
  return [Math.ceil(slot.in_resolution[0] / slot.stride), Math.ceil(slot.in_resolution[1] / slot.stride)];
}
