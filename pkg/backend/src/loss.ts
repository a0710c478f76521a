/**
 * Training objective: mean squared error over the masked (unobserved)
 * samples plus a first-difference continuity penalty on the same region,
 * so reconstructions track both the level and the local slope of the
 * target.  All tensors are channels-last [samples, leads].
 */

import { RECORD_LEADS, RECORD_SAMPLES } from "./model";

export const CONTINUITY_WEIGHT = 0.1;

export interface LossResult {
  loss: number;
  mse: number;
  grad: Float32Array;
}

/** `reconstruct` marks samples the loss scores (1 = unobserved/masked). */
export function maskedLoss(
  y: Float32Array,
  target: Float32Array,
  reconstruct: Uint8Array
): LossResult {
  const grad = new Float32Array(y.length);
  let se = 0;
  let n = 0;
  for (let i = 0; i < y.length; i++) {
    if (!reconstruct[i]) continue;
    const e = y[i] - target[i];
    se += e * e;
    n += 1;
  }
  if (n === 0) {
    return { loss: 0, mse: 0, grad };
  }
  for (let i = 0; i < y.length; i++) {
    if (reconstruct[i]) grad[i] = (2 * (y[i] - target[i])) / n;
  }

  let ce = 0;
  let pairs = 0;
  const c = RECORD_LEADS;
  for (let t = 0; t + 1 < RECORD_SAMPLES; t++) {
    for (let ch = 0; ch < c; ch++) {
      const i = t * c + ch;
      const j = i + c;
      if (!reconstruct[i] || !reconstruct[j]) continue;
      pairs += 1;
      ce += ((y[j] - y[i]) - (target[j] - target[i])) ** 2;
    }
  }
  if (pairs > 0) {
    const w = (2 * CONTINUITY_WEIGHT) / pairs;
    for (let t = 0; t + 1 < RECORD_SAMPLES; t++) {
      for (let ch = 0; ch < c; ch++) {
        const i = t * c + ch;
        const j = i + c;
        if (!reconstruct[i] || !reconstruct[j]) continue;
        const d = (y[j] - y[i]) - (target[j] - target[i]);
        grad[j] += w * d;
        grad[i] -= w * d;
      }
    }
  }
  const mse = se / n;
  const loss = mse + (pairs > 0 ? (CONTINUITY_WEIGHT * ce) / pairs : 0);
  return { loss, mse, grad };
}
