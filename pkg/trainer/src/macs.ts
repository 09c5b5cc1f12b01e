/** Inverted-bottleneck MAC counting, mirroring the search engine's arithmetic
 * so emitted cost_macs agree with what the consumer would compute. */

import { BlockOption, BlockSlot, expandedChannels, outResolution } from "./space.js";

export const GROUPS = 2;

export function pointwiseMacs(h: number, w: number, cin: number, cout: number): number {
  return h * w * cin * cout;
}

export function spatialMacs(h: number, w: number, ce: number, kernel: number, layerType: string): number {
  if (layerType === "depthwise_inverted_bottleneck") {
    return h * w * ce * kernel * kernel;
  }
  return h * w * Math.floor((kernel * kernel * ce * ce) / GROUPS);
}

export function blockMacs(slot: BlockSlot, option: BlockOption): number {
  const [hIn, wIn] = slot.in_resolution;
  const [hOut, wOut] = outResolution(slot);
  let total = 0;
  for (let cell = 0; cell < option.depth; cell++) {
    const cin = cell === 0 ? slot.in_channels : slot.out_channels;
    const [h, w] = cell === 0 ? [hIn, wIn] : [hOut, wOut];
    const ce = expandedChannels(cin, option);
    total += pointwiseMacs(h, w, cin, ce);
    total += spatialMacs(hOut, wOut, ce, option.kernel, option.layer_type);
    total += pointwiseMacs(hOut, wOut, ce, slot.out_channels);
  }
  return total;
}
