/** Minimal NCHW tensor over a flat Float64Array. */

export class Tensor4 {
  readonly data: Float64Array;

  constructor(
    readonly n: number,
    readonly c: number,
    readonly h: number,
    readonly w: number,
    data?: Float64Array,
  ) {
    const size = n * c * h * w;
    if (data !== undefined) {
      if (data.length !== size) {
        throw new Error(`data length ${data.length} does not match shape ${n}x${c}x${h}x${w}`);
      }
      this.data = data;
    } else {
      this.data = new Float64Array(size);
    }
  }

  get size(): number {
    return this.data.length;
  }

  at(n: number, c: number, y: number, x: number): number {
    return this.data[((n * this.c + c) * this.h + y) * this.w + x];
  }

  clone(): Tensor4 {
    return new Tensor4(this.n, this.c, this.h, this.w, this.data.slice());
  }

  static zerosLike(t: Tensor4): Tensor4 {
    return new Tensor4(t.n, t.c, t.h, t.w);
  }
}

export function mse(a: Tensor4, b: Tensor4): number {
  if (a.size !== b.size) throw new Error("mse over mismatched shapes");
  let acc = 0;
  for (let i = 0; i < a.size; i++) {
    const d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / a.size;
}

/** Gradient of mse(a, b) with respect to a. */
export function mseGrad(a: Tensor4, b: Tensor4): Tensor4 {
  const g = Tensor4.zerosLike(a);
  const scale = 2 / a.size;
  for (let i = 0; i < a.size; i++) {
    g.data[i] = scale * (a.data[i] - b.data[i]);
  }
  return g;
}
