/** Procedurally generated image sets, selected by dataset identifier.
 *
 * Distillation only needs inputs (targets are the teacher's activations), so
 * the generator produces images, not labels. "synth" images are smoothed
 * seeded noise, which keeps activation statistics reasonable through strided
 * blocks.
 */

import { Rng } from "./rng.js";
import { Tensor4 } from "./tensor.js";

export function makeDataset(identifier: string, images: number, channels: number, h: number, w: number, seed: number): Tensor4 {
  if (!identifier.startsWith("synth")) {
    throw new Error(`unknown dataset identifier '${identifier}' (expected synth*)`);
  }
  const rng = new Rng(seed);
  const raw = new Tensor4(images, channels, h, w);
  for (let i = 0; i < raw.size; i++) raw.data[i] = rng.normal();
  // light 3x3 box smoothing adds spatial correlation
  const out = new Tensor4(images, channels, h, w);
  for (let n = 0; n < images; n++) {
    for (let c = 0; c < channels; c++) {
      for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
          let acc = 0;
          let count = 0;
          for (let dy = -1; dy <= 1; dy++) {
            for (let dx = -1; dx <= 1; dx++) {
              const yy = y + dy;
              const xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += raw.at(n, c, yy, xx);
              count += 1;
            }
          }
          out.data[((n * channels + c) * h + y) * w + x] = acc / count;
        }
      }
    }
  }
  return out;
}

/** View of images [start, end) sharing the underlying storage layout. */
export function sliceImages(data: Tensor4, start: number, end: number): Tensor4 {
  const per = data.c * data.h * data.w;
  return new Tensor4(end - start, data.c, data.h, data.w, data.data.slice(start * per, end * per));
}
