/**
 * Reader for the digitizer's XML record schema (training data source).
 *
 * <ecg version="1" sample_rate="500"> holds one <lead id=".." unit="uV">
 * element per lead with whitespace-separated microvolt integers and a
 * run-length <mask> child ("count:value" pairs, 1 = observed).  Values are
 * returned in millivolts, row-major in the canonical lead order.
 */

import * as fs from "fs";
import * as path from "path";
import { N_LEADS, N_SAMPLES } from "./protocol";

export const LEAD_ORDER = [
  "I", "II", "III", "aVR", "aVL", "aVF",
  "V1", "V2", "V3", "V4", "V5", "V6",
] as const;

export interface EcgRecord {
  signal: Float32Array; // [12 * 5000] mV, row-major
  mask: Uint8Array; // 1 = observed
  source: string;
}

function parseMask(text: string, context: string): Uint8Array {
  const mask = new Uint8Array(N_SAMPLES);
  let pos = 0;
  for (const token of text.trim().split(/\s+/)) {
    if (!token) continue;
    const m = /^(\d+):([01])$/.exec(token);
    if (!m) throw new Error(`${context}: bad mask token "${token}"`);
    const count = parseInt(m[1], 10);
    const value = parseInt(m[2], 10);
    if (pos + count > N_SAMPLES) throw new Error(`${context}: mask overruns record`);
    mask.fill(value, pos, pos + count);
    pos += count;
  }
  if (pos !== N_SAMPLES) {
    throw new Error(`${context}: mask covers ${pos} of ${N_SAMPLES} samples`);
  }
  return mask;
}

export function parseRecordXml(xml: string, source = "<memory>"): EcgRecord {
  const root = /<ecg\s+version="1"\s+sample_rate="500"\s*>/.exec(xml);
  if (!root) throw new Error(`${source}: not a version-1 500 Hz record`);
  const signal = new Float32Array(N_LEADS * N_SAMPLES);
  const mask = new Uint8Array(N_LEADS * N_SAMPLES);
  mask.fill(1);
  const seen = new Set<string>();
  const leadRe = /<lead\s+id="([^"]+)"\s+unit="uV"\s*>([\s\S]*?)<\/lead>/g;
  let m: RegExpExecArray | null;
  while ((m = leadRe.exec(xml)) !== null) {
    const id = m[1];
    const leadIndex = LEAD_ORDER.indexOf(id as (typeof LEAD_ORDER)[number]);
    if (leadIndex < 0) throw new Error(`${source}: unknown lead "${id}"`);
    if (seen.has(id)) throw new Error(`${source}: duplicate lead "${id}"`);
    seen.add(id);
    let body = m[2];
    const maskMatch = /<mask>([\s\S]*?)<\/mask>/.exec(body);
    if (maskMatch) {
      mask.set(parseMask(maskMatch[1], `${source}: lead ${id}`), leadIndex * N_SAMPLES);
      body = body.slice(0, maskMatch.index);
    }
    const tokens = body.trim().split(/\s+/).filter((t) => t.length > 0);
    if (tokens.length !== N_SAMPLES) {
      throw new Error(`${source}: lead ${id} has ${tokens.length} samples, expected ${N_SAMPLES}`);
    }
    const off = leadIndex * N_SAMPLES;
    for (let i = 0; i < N_SAMPLES; i++) {
      const v = parseInt(tokens[i], 10);
      if (!Number.isFinite(v)) throw new Error(`${source}: lead ${id}: bad sample "${tokens[i]}"`);
      signal[off + i] = v / 1000; // uV -> mV
    }
  }
  if (seen.size !== N_LEADS) {
    const missing = LEAD_ORDER.filter((l) => !seen.has(l));
    throw new Error(`${source}: missing leads ${missing.join(", ")}`);
  }
  return { signal, mask, source };
}

export function readRecordFile(file: string): EcgRecord {
  return parseRecordXml(fs.readFileSync(file, "utf-8"), file);
}

export function readRecordDir(dir: string): EcgRecord[] {
  const files = fs
    .readdirSync(dir)
    .filter((f) => f.endsWith(".xml"))
    .sort();
  return files.map((f) => readRecordFile(path.join(dir, f)));
}
