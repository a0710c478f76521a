/** Deterministic PRNG (mulberry32) so training runs are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Uniform Glorot-style init in [-limit, limit] with limit from fan sizes. */
export function glorotInit(
  rand: () => number,
  size: number,
  fanIn: number,
  fanOut: number
): Float32Array {
  const limit = Math.sqrt(6 / (fanIn + fanOut));
  const out = new Float32Array(size);
  for (let i = 0; i < size; i++) {
    out[i] = (rand() * 2 - 1) * limit;
  }
  return out;
}
