import { describe, expect, it } from "vitest";
import { INPUT_CHANNELS, RECORD_SAMPLES, ToyUNet, buildInput, outputToLeads } from "../src/model";
import { mulberry32 } from "../src/rng";

describe("ToyUNet", () => {
  it("stays under one million parameters", () => {
    const model = new ToyUNet(1);
    expect(model.countParams()).toBeLessThan(1_000_000);
  });

  it("maps any finite request to a finite 12x5000 output", () => {
    const model = new ToyUNet(3);
    const rand = mulberry32(44);
    const signal = new Float32Array(60000);
    const mask = new Uint8Array(60000);
    for (let i = 0; i < 60000; i++) {
      mask[i] = rand() < 0.3 ? 1 : 0;
      signal[i] = mask[i] ? (rand() * 2 - 1) * 2 : NaN;
    }
    const leads = outputToLeads(model.predict(buildInput(signal, mask)));
    expect(leads.length).toBe(60000);
    for (let i = 0; i < leads.length; i++) {
      expect(Number.isFinite(leads[i])).toBe(true);
    }
  });

  it("is deterministic for a fixed seed", () => {
    const a = new ToyUNet(7);
    const b = new ToyUNet(7);
    const c = new ToyUNet(8);
    const pa = a.paramList();
    const pb = b.paramList();
    const pc = c.paramList();
    for (let i = 0; i < pa.length; i++) {
      expect(Buffer.from(pa[i].buffer).equals(Buffer.from(pb[i].buffer))).toBe(true);
    }
    expect(pa.some((p, i) => !Buffer.from(p.buffer).equals(Buffer.from(pc[i].buffer)))).toBe(true);
  });

  it("save/load round-trips weights exactly", () => {
    const model = new ToyUNet(11);
    const clone = ToyUNet.load(model.save());
    const signal = new Float32Array(60000).fill(0.1);
    const mask = new Uint8Array(60000).fill(1);
    const x = buildInput(signal, mask);
    const ya = model.predict(x);
    const yb = clone.predict(x);
    expect(Buffer.from(ya.buffer).equals(Buffer.from(yb.buffer))).toBe(true);
  });

  it("rejects malformed model files", () => {
    expect(() => ToyUNet.load("{}")).toThrow(/unrecognized/);
    const doc = JSON.parse(new ToyUNet(1).save());
    delete doc.layers.head;
    expect(() => ToyUNet.load(JSON.stringify(doc))).toThrow(/head/);
  });

  it("buildInput zeroes unobserved samples and encodes the mask channels", () => {
    const signal = new Float32Array(60000);
    const mask = new Uint8Array(60000);
    signal[0] = 0.7; // lead 0, t 0
    mask[0] = 1;
    signal[5000] = NaN; // lead 1, t 0: unobserved NaN
    const x = buildInput(signal, mask);
    expect(x[0]).toBeCloseTo(0.7); // signal channel, lead 0
    expect(x[12]).toBe(1); // mask channel, lead 0
    expect(x[1]).toBe(0); // lead 1 signal zeroed
    expect(x[13]).toBe(0); // lead 1 mask off
    expect(x.length).toBe(RECORD_SAMPLES * INPUT_CHANNELS);
  });
});
