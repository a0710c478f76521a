/**
 * Minimal 1D neural-network ops on flat Float32Arrays (channels-last:
 * value(position j, channel c) = data[j * C + c]).
 *
 * Every op has an explicit backward pass; no autograd framework is used so
 * the backend stays dependency-free and byte-deterministic on CPU.
 */

export interface ConvParams {
  kernel: Float32Array; // [k, cin, cout] flattened
  bias: Float32Array; // [cout]
  k: number;
  cin: number;
  cout: number;
  stride: number;
  padLeft: number;
}

export function convOutLength(lIn: number, p: ConvParams): number {
  // 'same'-style striding: total padding is k - stride, so lOut = lIn / stride
  return Math.floor((lIn - p.stride) / p.stride) + 1;
}

export function conv1d(x: Float32Array, lIn: number, p: ConvParams): Float32Array {
  const lOut = convOutLength(lIn, p);
  const { kernel, bias, k, cin, cout, stride, padLeft } = p;
  const y = new Float32Array(lOut * cout);
  for (let j = 0; j < lOut; j++) {
    const yOff = j * cout;
    for (let co = 0; co < cout; co++) y[yOff + co] = bias[co];
    const base = j * stride - padLeft;
    for (let kk = 0; kk < k; kk++) {
      const pPos = base + kk;
      if (pPos < 0 || pPos >= lIn) continue;
      const xOff = pPos * cin;
      const wOff = kk * cin * cout;
      for (let ci = 0; ci < cin; ci++) {
        const a = x[xOff + ci];
        if (a === 0) continue;
        const wRow = wOff + ci * cout;
        for (let co = 0; co < cout; co++) {
          y[yOff + co] += a * kernel[wRow + co];
        }
      }
    }
  }
  return y;
}

export function conv1dBackward(
  x: Float32Array,
  lIn: number,
  p: ConvParams,
  dY: Float32Array,
  dKernel: Float32Array,
  dBias: Float32Array
): Float32Array {
  const lOut = convOutLength(lIn, p);
  const { kernel, k, cin, cout, stride, padLeft } = p;
  const dX = new Float32Array(lIn * cin);
  for (let j = 0; j < lOut; j++) {
    const yOff = j * cout;
    for (let co = 0; co < cout; co++) dBias[co] += dY[yOff + co];
    const base = j * stride - padLeft;
    for (let kk = 0; kk < k; kk++) {
      const pPos = base + kk;
      if (pPos < 0 || pPos >= lIn) continue;
      const xOff = pPos * cin;
      const wOff = kk * cin * cout;
      for (let ci = 0; ci < cin; ci++) {
        const a = x[xOff + ci];
        const wRow = wOff + ci * cout;
        let s = 0;
        for (let co = 0; co < cout; co++) {
          const g = dY[yOff + co];
          dKernel[wRow + co] += a * g;
          s += kernel[wRow + co] * g;
        }
        dX[xOff + ci] += s;
      }
    }
  }
  return dX;
}

/** Transposed convolution: output length = lIn * stride (pad = k - stride). */
export function convTranspose1d(x: Float32Array, lIn: number, p: ConvParams): Float32Array {
  const lOut = lIn * p.stride;
  const { kernel, bias, k, cin, cout, stride, padLeft } = p;
  const y = new Float32Array(lOut * cout);
  for (let j = 0; j < lOut; j++) {
    const yOff = j * cout;
    for (let co = 0; co < cout; co++) y[yOff + co] = bias[co];
  }
  for (let i = 0; i < lIn; i++) {
    const xOff = i * cin;
    const base = i * stride - padLeft;
    for (let kk = 0; kk < k; kk++) {
      const pos = base + kk;
      if (pos < 0 || pos >= lOut) continue;
      const yOff = pos * cout;
      const wOff = kk * cin * cout;
      for (let ci = 0; ci < cin; ci++) {
        const a = x[xOff + ci];
        if (a === 0) continue;
        const wRow = wOff + ci * cout;
        for (let co = 0; co < cout; co++) {
          y[yOff + co] += a * kernel[wRow + co];
        }
      }
    }
  }
  return y;
}

export function convTranspose1dBackward(
  x: Float32Array,
  lIn: number,
  p: ConvParams,
  dY: Float32Array,
  dKernel: Float32Array,
  dBias: Float32Array
): Float32Array {
  const lOut = lIn * p.stride;
  const { kernel, k, cin, cout, stride, padLeft } = p;
  const dX = new Float32Array(lIn * cin);
  for (let j = 0; j < lOut; j++) {
    const yOff = j * cout;
    for (let co = 0; co < cout; co++) dBias[co] += dY[yOff + co];
  }
  for (let i = 0; i < lIn; i++) {
    const xOff = i * cin;
    const base = i * stride - padLeft;
    for (let kk = 0; kk < k; kk++) {
      const pos = base + kk;
      if (pos < 0 || pos >= lOut) continue;
      const yOff = pos * cout;
      const wOff = kk * cin * cout;
      for (let ci = 0; ci < cin; ci++) {
        const a = x[xOff + ci];
        const wRow = wOff + ci * cout;
        let s = 0;
        for (let co = 0; co < cout; co++) {
          const g = dY[yOff + co];
          dKernel[wRow + co] += a * g;
          s += kernel[wRow + co] * g;
        }
        dX[xOff + ci] += s;
      }
    }
  }
  return dX;
}

export function relu(x: Float32Array): Float32Array {
  const y = new Float32Array(x.length);
  for (let i = 0; i < x.length; i++) y[i] = x[i] > 0 ? x[i] : 0;
  return y;
}

export function reluBackward(y: Float32Array, dY: Float32Array): Float32Array {
  const dX = new Float32Array(y.length);
  for (let i = 0; i < y.length; i++) dX[i] = y[i] > 0 ? dY[i] : 0;
  return dX;
}

export interface PoolResult {
  y: Float32Array;
  argmax: Int32Array;
}

/** Max pooling, width 2 stride 2 (input length must be even). */
export function maxPool2(x: Float32Array, lIn: number, c: number): PoolResult {
  const lOut = lIn >> 1;
  const y = new Float32Array(lOut * c);
  const argmax = new Int32Array(lOut * c);
  for (let j = 0; j < lOut; j++) {
    const a = 2 * j * c;
    const b = a + c;
    const o = j * c;
    for (let ch = 0; ch < c; ch++) {
      if (x[a + ch] >= x[b + ch]) {
        y[o + ch] = x[a + ch];
        argmax[o + ch] = a + ch;
      } else {
        y[o + ch] = x[b + ch];
        argmax[o + ch] = b + ch;
      }
    }
  }
  return { y, argmax };
}

export function maxPool2Backward(
  argmax: Int32Array,
  dY: Float32Array,
  lIn: number,
  c: number
): Float32Array {
  const dX = new Float32Array(lIn * c);
  for (let i = 0; i < dY.length; i++) dX[argmax[i]] += dY[i];
  return dX;
}

/** Nearest-neighbour upsampling by 2. */
export function upsample2(x: Float32Array, lIn: number, c: number): Float32Array {
  const y = new Float32Array(lIn * 2 * c);
  for (let j = 0; j < lIn; j++) {
    const src = j * c;
    const dst = 2 * j * c;
    for (let ch = 0; ch < c; ch++) {
      y[dst + ch] = x[src + ch];
      y[dst + c + ch] = x[src + ch];
    }
  }
  return y;
}

export function upsample2Backward(dY: Float32Array, lIn: number, c: number): Float32Array {
  const dX = new Float32Array(lIn * c);
  for (let j = 0; j < lIn; j++) {
    const src = 2 * j * c;
    const dst = j * c;
    for (let ch = 0; ch < c; ch++) {
      dX[dst + ch] = dY[src + ch] + dY[src + c + ch];
    }
  }
  return dX;
}

/** Concatenate two channels-last tensors of equal length along channels. */
export function concatChannels(
  a: Float32Array,
  ca: number,
  b: Float32Array,
  cb: number,
  l: number
): Float32Array {
  const c = ca + cb;
  const y = new Float32Array(l * c);
  for (let j = 0; j < l; j++) {
    y.set(a.subarray(j * ca, (j + 1) * ca), j * c);
    y.set(b.subarray(j * cb, (j + 1) * cb), j * c + ca);
  }
  return y;
}

export function splitChannels(
  dY: Float32Array,
  ca: number,
  cb: number,
  l: number
): [Float32Array, Float32Array] {
  const c = ca + cb;
  const dA = new Float32Array(l * ca);
  const dB = new Float32Array(l * cb);
  for (let j = 0; j < l; j++) {
    dA.set(dY.subarray(j * c, j * c + ca), j * ca);
    dB.set(dY.subarray(j * c + ca, (j + 1) * c), j * cb);
  }
  return [dA, dB];
}

/** Adam optimizer over a flat list of parameter/gradient array pairs. */
export class Adam {
  private m: Float32Array[];
  private v: Float32Array[];
  private t = 0;

  constructor(
    private params: Float32Array[],
    private lr = 1e-3,
    private beta1 = 0.9,
    private beta2 = 0.999,
    private eps = 1e-8
  ) {
    this.m = params.map((p) => new Float32Array(p.length));
    this.v = params.map((p) => new Float32Array(p.length));
  }

  step(grads: Float32Array[]): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let g = 0; g < this.params.length; g++) {
      const p = this.params[g];
      const grad = grads[g];
      const m = this.m[g];
      const v = this.v[g];
      for (let i = 0; i < p.length; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * grad[i];
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * grad[i] * grad[i];
        p[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}
