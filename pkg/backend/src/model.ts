/**
 * Toy 1D U-Net for 12-lead signal completion.
 *
 * Input is the 12 x 5,000 record as 24 channels (per lead: the masked
 * signal with unobserved samples zeroed, plus its observed mask); output is
 * the reconstructed 12 x 5,000 signal.  A strided stem maps the 5,000-long
 * input to the internal base resolution; the encoder/decoder then runs at
 * three resolutions with channel widths {32, 64, 128} and skip connections.
 */

import {
  Adam,
  ConvParams,
  concatChannels,
  conv1d,
  conv1dBackward,
  convTranspose1d,
  convTranspose1dBackward,
  maxPool2,
  maxPool2Backward,
  relu,
  reluBackward,
  splitChannels,
  upsample2,
  upsample2Backward,
} from "./nn";
import { glorotInit, mulberry32 } from "./rng";

export const RECORD_LEADS = 12;
export const RECORD_SAMPLES = 5000;
export const INPUT_CHANNELS = 2 * RECORD_LEADS;

const STEM_STRIDE = 5; // 5,000 -> 1,000 internal base resolution
const STEM_K = 10;
const WIDTHS = [32, 64, 128] as const;

interface LayerSpec {
  name: string;
  k: number;
  cin: number;
  cout: number;
  stride: number;
}

const LAYERS: LayerSpec[] = [
  { name: "stem", k: STEM_K, cin: INPUT_CHANNELS, cout: WIDTHS[0], stride: STEM_STRIDE },
  { name: "enc0", k: 3, cin: WIDTHS[0], cout: WIDTHS[0], stride: 1 },
  { name: "enc1a", k: 3, cin: WIDTHS[0], cout: WIDTHS[1], stride: 1 },
  { name: "enc1b", k: 3, cin: WIDTHS[1], cout: WIDTHS[1], stride: 1 },
  { name: "bota", k: 3, cin: WIDTHS[1], cout: WIDTHS[2], stride: 1 },
  { name: "botb", k: 3, cin: WIDTHS[2], cout: WIDTHS[2], stride: 1 },
  { name: "dec1a", k: 3, cin: WIDTHS[2] + WIDTHS[1], cout: WIDTHS[1], stride: 1 },
  { name: "dec1b", k: 3, cin: WIDTHS[1], cout: WIDTHS[1], stride: 1 },
  { name: "dec0a", k: 3, cin: WIDTHS[1] + WIDTHS[0], cout: WIDTHS[0], stride: 1 },
  { name: "dec0b", k: 3, cin: WIDTHS[0], cout: WIDTHS[0], stride: 1 },
  { name: "head", k: STEM_K, cin: WIDTHS[0], cout: RECORD_LEADS, stride: STEM_STRIDE },
];

interface Cache {
  x: Float32Array;
  stem: Float32Array;
  enc0: Float32Array;
  pool0: ReturnType<typeof maxPool2>;
  enc1a: Float32Array;
  enc1b: Float32Array;
  pool1: ReturnType<typeof maxPool2>;
  bota: Float32Array;
  botb: Float32Array;
  cat1: Float32Array;
  dec1a: Float32Array;
  dec1b: Float32Array;
  cat0: Float32Array;
  dec0a: Float32Array;
  dec0b: Float32Array;
}

export class ToyUNet {
  readonly params: Map<string, ConvParams> = new Map();
  readonly seed: number;
  private readonly l0 = RECORD_SAMPLES / STEM_STRIDE; // 1000
  private readonly l1 = this.l0 / 2; // 500
  private readonly l2 = this.l1 / 2; // 250

  constructor(seed: number) {
    this.seed = seed;
    const rand = mulberry32(seed);
    for (const spec of LAYERS) {
      const size = spec.k * spec.cin * spec.cout;
      this.params.set(spec.name, {
        kernel: glorotInit(rand, size, spec.k * spec.cin, spec.k * spec.cout),
        bias: new Float32Array(spec.cout),
        k: spec.k,
        cin: spec.cin,
        cout: spec.cout,
        stride: spec.stride,
        padLeft: Math.floor((spec.k - spec.stride) / 2),
      });
    }
  }

  countParams(): number {
    let n = 0;
    for (const p of this.params.values()) n += p.kernel.length + p.bias.length;
    return n;
  }

  paramList(): Float32Array[] {
    const out: Float32Array[] = [];
    for (const spec of LAYERS) {
      const p = this.params.get(spec.name)!;
      out.push(p.kernel, p.bias);
    }
    return out;
  }

  private p(name: string): ConvParams {
    return this.params.get(name)!;
  }

  /** Forward pass; the cache is only materialized when training. */
  forward(x: Float32Array, wantCache: boolean): { y: Float32Array; cache: Cache | null } {
    const { l0, l1 } = this;
    const stem = relu(conv1d(x, RECORD_SAMPLES, this.p("stem")));
    const enc0 = relu(conv1d(stem, l0, this.p("enc0")));
    const pool0 = maxPool2(enc0, l0, WIDTHS[0]);
    const enc1a = relu(conv1d(pool0.y, l1, this.p("enc1a")));
    const enc1b = relu(conv1d(enc1a, l1, this.p("enc1b")));
    const pool1 = maxPool2(enc1b, l1, WIDTHS[1]);
    const bota = relu(conv1d(pool1.y, this.l2, this.p("bota")));
    const botb = relu(conv1d(bota, this.l2, this.p("botb")));
    const cat1 = concatChannels(upsample2(botb, this.l2, WIDTHS[2]), WIDTHS[2], enc1b, WIDTHS[1], l1);
    const dec1a = relu(conv1d(cat1, l1, this.p("dec1a")));
    const dec1b = relu(conv1d(dec1a, l1, this.p("dec1b")));
    const cat0 = concatChannels(upsample2(dec1b, l1, WIDTHS[1]), WIDTHS[1], enc0, WIDTHS[0], l0);
    const dec0a = relu(conv1d(cat0, l0, this.p("dec0a")));
    const dec0b = relu(conv1d(dec0a, l0, this.p("dec0b")));
    const y = convTranspose1d(dec0b, l0, this.p("head"));
    const cache = wantCache
      ? { x, stem, enc0, pool0, enc1a, enc1b, pool1, bota, botb, cat1, dec1a, dec1b, cat0, dec0a, dec0b }
      : null;
    return { y, cache };
  }

  predict(x: Float32Array): Float32Array {
    return this.forward(x, false).y;
  }

  /** Backward pass from dY; returns gradients aligned with paramList(). */
  backward(dY: Float32Array, cache: Cache): Float32Array[] {
    const { l0, l1, l2 } = this;
    const grads = new Map<string, { k: Float32Array; b: Float32Array }>();
    for (const spec of LAYERS) {
      grads.set(spec.name, {
        k: new Float32Array(spec.k * spec.cin * spec.cout),
        b: new Float32Array(spec.cout),
      });
    }
    const bwdConv = (
      name: string,
      input: Float32Array,
      lIn: number,
      output: Float32Array,
      dOut: Float32Array,
      transpose = false
    ): Float32Array => {
      const g = grads.get(name)!;
      const fn = transpose ? convTranspose1dBackward : conv1dBackward;
      return fn(input, lIn, this.p(name), dOut, g.k, g.b);
    };

    // head is linear; everything else is followed by relu
    let d = bwdConv("head", cache.dec0b, l0, cache.dec0b, dY, true);
    d = reluBackward(cache.dec0b, d);
    d = bwdConv("dec0b", cache.dec0a, l0, cache.dec0b, d);
    d = reluBackward(cache.dec0a, d);
    d = bwdConv("dec0a", cache.cat0, l0, cache.dec0a, d);
    const [dUp0, dEnc0Skip] = splitChannels(d, WIDTHS[1], WIDTHS[0], l0);
    d = upsample2Backward(dUp0, l1, WIDTHS[1]);
    d = reluBackward(cache.dec1b, d);
    d = bwdConv("dec1b", cache.dec1a, l1, cache.dec1b, d);
    d = reluBackward(cache.dec1a, d);
    d = bwdConv("dec1a", cache.cat1, l1, cache.dec1a, d);
    const [dUp1, dEnc1Skip] = splitChannels(d, WIDTHS[2], WIDTHS[1], l1);
    d = upsample2Backward(dUp1, l2, WIDTHS[2]);
    d = reluBackward(cache.botb, d);
    d = bwdConv("botb", cache.bota, l2, cache.botb, d);
    d = reluBackward(cache.bota, d);
    d = bwdConv("bota", cache.pool1.y, l2, cache.bota, d);
    d = maxPool2Backward(cache.pool1.argmax, d, l1, WIDTHS[1]);
    for (let i = 0; i < d.length; i++) d[i] += dEnc1Skip[i];
    d = reluBackward(cache.enc1b, d);
    d = bwdConv("enc1b", cache.enc1a, l1, cache.enc1b, d);
    d = reluBackward(cache.enc1a, d);
    d = bwdConv("enc1a", cache.pool0.y, l1, cache.enc1a, d);
    d = maxPool2Backward(cache.pool0.argmax, d, l0, WIDTHS[0]);
    for (let i = 0; i < d.length; i++) d[i] += dEnc0Skip[i];
    d = reluBackward(cache.enc0, d);
    d = bwdConv("enc0", cache.stem, l0, cache.enc0, d);
    d = reluBackward(cache.stem, d);
    bwdConv("stem", cache.x, RECORD_SAMPLES, cache.stem, d);

    const out: Float32Array[] = [];
    for (const spec of LAYERS) {
      const g = grads.get(spec.name)!;
      out.push(g.k, g.b);
    }
    return out;
  }

  makeOptimizer(lr: number): Adam {
    return new Adam(this.paramList(), lr);
  }

  save(): string {
    const layers: Record<string, { kernel: string; bias: string }> = {};
    for (const spec of LAYERS) {
      const p = this.p(spec.name);
      layers[spec.name] = {
        kernel: Buffer.from(p.kernel.buffer, p.kernel.byteOffset, p.kernel.byteLength).toString("base64"),
        bias: Buffer.from(p.bias.buffer, p.bias.byteOffset, p.bias.byteLength).toString("base64"),
      };
    }
    return JSON.stringify({ format: "toy-unet", version: 1, seed: this.seed, layers });
  }

  static load(json: string): ToyUNet {
    const doc = JSON.parse(json);
    if (doc.format !== "toy-unet" || doc.version !== 1) {
      throw new Error("unrecognized model file");
    }
    const model = new ToyUNet(doc.seed ?? 0);
    for (const spec of LAYERS) {
      const entry = doc.layers?.[spec.name];
      if (!entry) throw new Error(`model file missing layer ${spec.name}`);
      const p = model.params.get(spec.name)!;
      const kernel = Buffer.from(entry.kernel, "base64");
      const bias = Buffer.from(entry.bias, "base64");
      if (kernel.length !== p.kernel.length * 4 || bias.length !== p.bias.length * 4) {
        throw new Error(`model file layer ${spec.name} has wrong shape`);
      }
      p.kernel.set(new Float32Array(kernel.buffer.slice(kernel.byteOffset, kernel.byteOffset + kernel.byteLength)));
      p.bias.set(new Float32Array(bias.buffer.slice(bias.byteOffset, bias.byteOffset + bias.byteLength)));
    }
    return model;
  }
}

/**
 * Build the 24-channel input tensor: per lead, the signal with unobserved
 * samples zeroed (channels 0..11) and the observed mask (channels 12..23).
 */
export function buildInput(signal: Float32Array, mask: Uint8Array): Float32Array {
  const x = new Float32Array(RECORD_SAMPLES * INPUT_CHANNELS);
  for (let lead = 0; lead < RECORD_LEADS; lead++) {
    for (let t = 0; t < RECORD_SAMPLES; t++) {
      const v = signal[lead * RECORD_SAMPLES + t];
      const m = mask[lead * RECORD_SAMPLES + t];
      const row = t * INPUT_CHANNELS;
      x[row + lead] = m && Number.isFinite(v) ? v : 0;
      x[row + RECORD_LEADS + lead] = m ? 1 : 0;
    }
  }
  return x;
}

/** Channels-last model output back to the row-major 12 x 5,000 layout. */
export function outputToLeads(y: Float32Array): Float32Array {
  const out = new Float32Array(RECORD_LEADS * RECORD_SAMPLES);
  for (let t = 0; t < RECORD_SAMPLES; t++) {
    for (let lead = 0; lead < RECORD_LEADS; lead++) {
      out[lead * RECORD_SAMPLES + t] = y[t * RECORD_LEADS + lead];
    }
  }
  return out;
}
