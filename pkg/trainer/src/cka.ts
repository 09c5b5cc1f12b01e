/** Linear centered kernel alignment between activation matrices.
 *
 * CKA(X, Y) = |Y^T X|_F^2 / (|X^T X|_F * |Y^T Y|_F) with column-centered X, Y
 * of shape [examples, features]. Invariant to orthogonal transforms and
 * isotropic scaling; 1.0 for identical representations.
 */

import { Tensor4 } from "./tensor.js";

export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array; // row-major
}

export function matrix(rows: number, cols: number, data?: Float64Array): Matrix {
  return { rows, cols, data: data ?? new Float64Array(rows * cols) };
}

export function centerColumns(m: Matrix): Matrix {
  const out = matrix(m.rows, m.cols, m.data.slice());
  for (let c = 0; c < m.cols; c++) {
    let mean = 0;
    for (let r = 0; r < m.rows; r++) mean += out.data[r * m.cols + c];
    mean /= m.rows;
    for (let r = 0; r < m.rows; r++) out.data[r * m.cols + c] -= mean;
  }
  return out;
}

/** |B^T A|_F^2 for equal-row-count matrices. */
function crossFrobeniusSq(a: Matrix, b: Matrix): number {
  if (a.rows !== b.rows) throw new Error("example counts differ");
  let total = 0;
  for (let i = 0; i < b.cols; i++) {
    for (let j = 0; j < a.cols; j++) {
      let dot = 0;
      for (let r = 0; r < a.rows; r++) {
        dot += b.data[r * b.cols + i] * a.data[r * a.cols + j];
      }
      total += dot * dot;
    }
  }
  return total;
}

export function computeCka(x: Matrix, y: Matrix): number {
  if (x.rows !== y.rows) {
    throw new Error(`matching example counts required, got ${x.rows} and ${y.rows}`);
  }
  const xc = centerColumns(x);
  const yc = centerColumns(y);
  const xx = Math.sqrt(crossFrobeniusSq(xc, xc));
  const yy = Math.sqrt(crossFrobeniusSq(yc, yc));
  if (xx === 0 || yy === 0) {
    throw new Error("degenerate activations: all-zero after centering");
  }
  return crossFrobeniusSq(xc, yc) / (xx * yy);
}

/** Flatten NCHW activations to [examples, channels*h*w] feature rows. */
export function activationsToMatrix(t: Tensor4): Matrix {
  const cols = t.c * t.h * t.w;
  return matrix(t.n, cols, t.data.slice());
}

export interface Heatmap {
  layers: string[];
  values: number[][];
}

export function ckaHeatmap(layers: { name: string; acts: Tensor4 }[]): Heatmap {
  const mats = layers.map((l) => activationsToMatrix(l.acts));
  const n = layers.length;
  const values: number[][] = [];
  for (let i = 0; i < n; i++) {
    const row: number[] = [];
    for (let j = 0; j < n; j++) {
      row.push(i === j ? 1.0 : computeCka(mats[i], mats[j]));
    }
    values.push(row);
  }
  return { layers: layers.map((l) => l.name), values };
}

export function heatmapToCsv(h: Heatmap): string {
  const lines = ["layer," + h.layers.join(",")];
  for (let i = 0; i < h.layers.length; i++) {
    lines.push(h.layers[i] + "," + h.values[i].map((v) => v.toPrecision(9)).join(","));
  }
  return lines.join("\n") + "\n";
}
