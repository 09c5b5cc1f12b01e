/** Inverted-bottleneck blocks with explicit forward/backward passes.
 *
 * A cell is expand(1x1) -> act -> spatial(kxk, depthwise or 2-group) -> act ->
 * project(1x1); a block stacks `depth` cells, the first at the slot's stride,
 * the rest at stride 1 from out_channels. Spatial convs use same padding.
 * Gradients are verified against finite differences in the test suite.
 */

import { Rng } from "./rng.js";
import { Tensor4 } from "./tensor.js";
import { Activation as ActKind, BlockOption, BlockSlot, expandedChannels } from "./space.js";

export interface Param {
  w: Float64Array;
  g: Float64Array;
}

export interface Layer {
  forward(x: Tensor4): Tensor4;
  backward(gy: Tensor4): Tensor4;
  params(): Param[];
}

function samePadding(inSize: number, kernel: number, stride: number): { out: number; padBeg: number } {
  const out = Math.ceil(inSize / stride);
  const padTotal = Math.max((out - 1) * stride + kernel - inSize, 0);
  return { out, padBeg: Math.floor(padTotal / 2) };
}

export class PointwiseConv implements Layer {
  w: Float64Array;
  g: Float64Array;
  private x: Tensor4 | null = null;

  constructor(readonly cin: number, readonly cout: number, rng?: Rng) {
    this.w = new Float64Array(cout * cin);
    this.g = new Float64Array(cout * cin);
    if (rng) {
      const std = Math.sqrt(2 / cin);
      for (let i = 0; i < this.w.length; i++) this.w[i] = rng.normal() * std;
    }
  }

  forward(x: Tensor4): Tensor4 {
    if (x.c !== this.cin) throw new Error(`pointwise expects ${this.cin} channels, got ${x.c}`);
    this.x = x;
    const y = new Tensor4(x.n, this.cout, x.h, x.w);
    const hw = x.h * x.w;
    for (let n = 0; n < x.n; n++) {
      for (let co = 0; co < this.cout; co++) {
        const yBase = (n * this.cout + co) * hw;
        for (let ci = 0; ci < this.cin; ci++) {
          const wv = this.w[co * this.cin + ci];
          if (wv === 0) continue;
          const xBase = (n * this.cin + ci) * hw;
          for (let p = 0; p < hw; p++) {
            y.data[yBase + p] += wv * x.data[xBase + p];
          }
        }
      }
    }
    return y;
  }

  backward(gy: Tensor4): Tensor4 {
    const x = this.x!;
    const gx = Tensor4.zerosLike(x);
    const hw = x.h * x.w;
    for (let n = 0; n < x.n; n++) {
      for (let co = 0; co < this.cout; co++) {
        const gyBase = (n * this.cout + co) * hw;
        for (let ci = 0; ci < this.cin; ci++) {
          const xBase = (n * this.cin + ci) * hw;
          let acc = 0;
          const wv = this.w[co * this.cin + ci];
          for (let p = 0; p < hw; p++) {
            const gyv = gy.data[gyBase + p];
            acc += gyv * x.data[xBase + p];
            gx.data[xBase + p] += wv * gyv;
          }
          this.g[co * this.cin + ci] += acc;
        }
      }
    }
    return gx;
  }

  params(): Param[] {
    return [{ w: this.w, g: this.g }];
  }
}

export class DepthwiseConv implements Layer {
  w: Float64Array; // [c, k, k]
  g: Float64Array;
  private x: Tensor4 | null = null;

  constructor(readonly c: number, readonly kernel: number, readonly stride: number, rng?: Rng) {
    this.w = new Float64Array(c * kernel * kernel);
    this.g = new Float64Array(c * kernel * kernel);
    if (rng) {
      const std = Math.sqrt(2 / (kernel * kernel));
      for (let i = 0; i < this.w.length; i++) this.w[i] = rng.normal() * std;
    }
  }

  forward(x: Tensor4): Tensor4 {
    if (x.c !== this.c) throw new Error(`depthwise expects ${this.c} channels, got ${x.c}`);
    this.x = x;
    const k = this.kernel;
    const { out: oh, padBeg: padH } = samePadding(x.h, k, this.stride);
    const { out: ow, padBeg: padW } = samePadding(x.w, k, this.stride);
    const y = new Tensor4(x.n, x.c, oh, ow);
    for (let n = 0; n < x.n; n++) {
      for (let c = 0; c < x.c; c++) {
        for (let oy = 0; oy < oh; oy++) {
          for (let ox = 0; ox < ow; ox++) {
            let acc = 0;
            for (let ky = 0; ky < k; ky++) {
              const iy = oy * this.stride - padH + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (let kx = 0; kx < k; kx++) {
                const ix = ox * this.stride - padW + kx;
                if (ix < 0 || ix >= x.w) continue;
                acc += this.w[(c * k + ky) * k + kx] * x.at(n, c, iy, ix);
              }
            }
            y.data[((n * x.c + c) * oh + oy) * ow + ox] = acc;
          }
        }
      }
    }
    return y;
  }

  backward(gy: Tensor4): Tensor4 {
    const x = this.x!;
    const k = this.kernel;
    const { out: oh, padBeg: padH } = samePadding(x.h, k, this.stride);
    const { out: ow, padBeg: padW } = samePadding(x.w, k, this.stride);
    const gx = Tensor4.zerosLike(x);
    for (let n = 0; n < x.n; n++) {
      for (let c = 0; c < x.c; c++) {
        for (let oy = 0; oy < oh; oy++) {
          for (let ox = 0; ox < ow; ox++) {
            const gyv = gy.data[((n * x.c + c) * oh + oy) * ow + ox];
            if (gyv === 0) continue;
            for (let ky = 0; ky < k; ky++) {
              const iy = oy * this.stride - padH + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (let kx = 0; kx < k; kx++) {
                const ix = ox * this.stride - padW + kx;
                if (ix < 0 || ix >= x.w) continue;
                const xi = ((n * x.c + c) * x.h + iy) * x.w + ix;
                this.g[(c * k + ky) * k + kx] += gyv * x.data[xi];
                gx.data[xi] += gyv * this.w[(c * k + ky) * k + kx];
              }
            }
          }
        }
      }
    }
    return gx;
  }

  params(): Param[] {
    return [{ w: this.w, g: this.g }];
  }
}

export class GroupedConv implements Layer {
  /** Two-group kxk conv with equal in/out channel count. Odd widths split
   * ceil/floor; each output channel sees only its own group's inputs. */
  w: Float64Array; // ragged [co][cpg(co)][k][k] flattened with offsets
  g: Float64Array;
  private offsets: Int32Array;
  private groupOf: Int32Array;
  private groupStart: Int32Array;
  private groupSize: Int32Array;
  private x: Tensor4 | null = null;

  constructor(readonly c: number, readonly kernel: number, readonly stride: number, rng?: Rng, readonly groups = 2) {
    const sizes = [];
    let start = 0;
    this.groupStart = new Int32Array(this.groups);
    this.groupSize = new Int32Array(this.groups);
    for (let g = 0; g < this.groups; g++) {
      const size = Math.floor(c / this.groups) + (g < c % this.groups ? 1 : 0);
      this.groupStart[g] = start;
      this.groupSize[g] = size;
      sizes.push(size);
      start += size;
    }
    this.groupOf = new Int32Array(c);
    for (let g = 0; g < this.groups; g++) {
      for (let i = 0; i < this.groupSize[g]; i++) this.groupOf[this.groupStart[g] + i] = g;
    }
    this.offsets = new Int32Array(c + 1);
    for (let co = 0; co < c; co++) {
      this.offsets[co + 1] = this.offsets[co] + this.groupSize[this.groupOf[co]] * kernel * kernel;
    }
    this.w = new Float64Array(this.offsets[c]);
    this.g = new Float64Array(this.offsets[c]);
    if (rng) {
      for (let co = 0; co < c; co++) {
        const fanIn = this.groupSize[this.groupOf[co]] * kernel * kernel;
        const std = Math.sqrt(2 / fanIn);
        for (let i = this.offsets[co]; i < this.offsets[co + 1]; i++) this.w[i] = rng.normal() * std;
      }
    }
  }

  forward(x: Tensor4): Tensor4 {
    if (x.c !== this.c) throw new Error(`grouped conv expects ${this.c} channels, got ${x.c}`);
    this.x = x;
    const k = this.kernel;
    const { out: oh, padBeg: padH } = samePadding(x.h, k, this.stride);
    const { out: ow, padBeg: padW } = samePadding(x.w, k, this.stride);
    const y = new Tensor4(x.n, x.c, oh, ow);
    for (let n = 0; n < x.n; n++) {
      for (let co = 0; co < this.c; co++) {
        const grp = this.groupOf[co];
        const cStart = this.groupStart[grp];
        const cpg = this.groupSize[grp];
        const base = this.offsets[co];
        for (let oy = 0; oy < oh; oy++) {
          for (let ox = 0; ox < ow; ox++) {
            let acc = 0;
            for (let cl = 0; cl < cpg; cl++) {
              for (let ky = 0; ky < k; ky++) {
                const iy = oy * this.stride - padH + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (let kx = 0; kx < k; kx++) {
                  const ix = ox * this.stride - padW + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  acc += this.w[base + (cl * k + ky) * k + kx] * x.at(n, cStart + cl, iy, ix);
                }
              }
            }
            y.data[((n * x.c + co) * oh + oy) * ow + ox] = acc;
          }
        }
      }
    }
    return y;
  }

  backward(gy: Tensor4): Tensor4 {
    const x = this.x!;
    const k = this.kernel;
    const { out: oh, padBeg: padH } = samePadding(x.h, k, this.stride);
    const { out: ow, padBeg: padW } = samePadding(x.w, k, this.stride);
    const gx = Tensor4.zerosLike(x);
    for (let n = 0; n < x.n; n++) {
      for (let co = 0; co < this.c; co++) {
        const grp = this.groupOf[co];
        const cStart = this.groupStart[grp];
        const cpg = this.groupSize[grp];
        const base = this.offsets[co];
        for (let oy = 0; oy < oh; oy++) {
          for (let ox = 0; ox < ow; ox++) {
            const gyv = gy.data[((n * x.c + co) * oh + oy) * ow + ox];
            if (gyv === 0) continue;
            for (let cl = 0; cl < cpg; cl++) {
              for (let ky = 0; ky < k; ky++) {
                const iy = oy * this.stride - padH + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (let kx = 0; kx < k; kx++) {
                  const ix = ox * this.stride - padW + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  const wi = base + (cl * k + ky) * k + kx;
                  const xi = ((n * x.c + cStart + cl) * x.h + iy) * x.w + ix;
                  this.g[wi] += gyv * x.data[xi];
                  gx.data[xi] += gyv * this.w[wi];
                }
              }
            }
          }
        }
      }
    }
    return gx;
  }

  params(): Param[] {
    return [{ w: this.w, g: this.g }];
  }
}

function sigmoid(v: number): number {
  return 1 / (1 + Math.exp(-v));
}

export class Act implements Layer {
  private x: Tensor4 | null = null;

  constructor(readonly kind: ActKind) {}

  forward(x: Tensor4): Tensor4 {
    this.x = x;
    const y = Tensor4.zerosLike(x);
    if (this.kind === "relu") {
      for (let i = 0; i < x.size; i++) y.data[i] = x.data[i] > 0 ? x.data[i] : 0;
    } else {
      for (let i = 0; i < x.size; i++) y.data[i] = x.data[i] * sigmoid(x.data[i]);
    }
    return y;
  }

  backward(gy: Tensor4): Tensor4 {
    const x = this.x!;
    const gx = Tensor4.zerosLike(x);
    if (this.kind === "relu") {
      for (let i = 0; i < x.size; i++) gx.data[i] = x.data[i] > 0 ? gy.data[i] : 0;
    } else {
      for (let i = 0; i < x.size; i++) {
        const s = sigmoid(x.data[i]);
        gx.data[i] = gy.data[i] * (s + x.data[i] * s * (1 - s));
      }
    }
    return gx;
  }

  params(): Param[] {
    return [];
  }
}

export class BottleneckCell implements Layer {
  readonly layers: Layer[];

  constructor(cin: number, cout: number, stride: number, option: BlockOption, rng?: Rng) {
    const ce = expandedChannels(cin, option);
    const spatial =
      option.layer_type === "depthwise_inverted_bottleneck"
        ? new DepthwiseConv(ce, option.kernel, stride, rng)
        : new GroupedConv(ce, option.kernel, stride, rng);
    this.layers = [
      new PointwiseConv(cin, ce, rng),
      new Act(option.activation),
      spatial,
      new Act(option.activation),
      new PointwiseConv(ce, cout, rng),
    ];
  }

  forward(x: Tensor4): Tensor4 {
    for (const layer of this.layers) x = layer.forward(x);
    return x;
  }

  backward(gy: Tensor4): Tensor4 {
    for (let i = this.layers.length - 1; i >= 0; i--) gy = this.layers[i].backward(gy);
    return gy;
  }

  params(): Param[] {
    return this.layers.flatMap((l) => l.params());
  }
}

export class Block implements Layer {
  readonly cells: BottleneckCell[] = [];

  constructor(slot: BlockSlot, option: BlockOption, rng?: Rng) {
    for (let cell = 0; cell < option.depth; cell++) {
      const cin = cell === 0 ? slot.in_channels : slot.out_channels;
      const stride = cell === 0 ? slot.stride : 1;
      this.cells.push(new BottleneckCell(cin, slot.out_channels, stride, option, rng));
    }
  }

  forward(x: Tensor4): Tensor4 {
    for (const cell of this.cells) x = cell.forward(x);
    return x;
  }

  backward(gy: Tensor4): Tensor4 {
    for (let i = this.cells.length - 1; i >= 0; i--) gy = this.cells[i].backward(gy);
    return gy;
  }

  params(): Param[] {
    return this.cells.flatMap((c) => c.params());
  }

  zeroGrads(): void {
    for (const p of this.params()) p.g.fill(0);
  }

  /** Copy weights from a block of the identical architecture. */
  copyFrom(other: Block): void {
    const mine = this.params();
    const theirs = other.params();
    if (mine.length !== theirs.length) throw new Error("architecture mismatch");
    for (let i = 0; i < mine.length; i++) {
      if (mine[i].w.length !== theirs[i].w.length) throw new Error("weight shape mismatch");
      mine[i].w.set(theirs[i].w);
    }
  }

  weightsOut(): number[][] {
    return this.params().map((p) => Array.from(p.w));
  }

  weightsIn(weights: number[][]): void {
    const mine = this.params();
    if (weights.length !== mine.length) throw new Error("checkpoint does not match architecture");
    mine.forEach((p, i) => {
      if (weights[i].length !== p.w.length) throw new Error("checkpoint weight shape mismatch");
      p.w.set(weights[i]);
    });
  }
}
