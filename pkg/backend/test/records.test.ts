import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { beforeAll, describe, expect, it } from "vitest";
import { LEAD_ORDER, parseRecordXml, readRecordDir } from "../src/records";

let dataDir: string;

beforeAll(() => {
  dataDir = fs.mkdtempSync(path.join(os.tmpdir(), "records-"));
  execFileSync("python3", [
    "-m", "ecgtize.cli", "synth",
    "--out", dataDir,
    "--count", "2",
    "--mask", "3x4+rhythm",
    "--seed", "500",
  ]);
});

describe("record XML reader", () => {
  it("reads records produced by the digitizer CLI", () => {
    const records = readRecordDir(dataDir);
    expect(records.length).toBe(2);
    const rec = records[0];
    expect(rec.signal.length).toBe(60000);
    expect(rec.mask.length).toBe(60000);
    // 3x4 + rhythm: 11 leads observed for 1,250 samples, lead II for 5,000
    const observed = rec.mask.reduce((a, b) => a + b, 0);
    expect(observed).toBe(11 * 1250 + 5000);
    let leadII = 0;
    for (let t = 0; t < 5000; t++) leadII += rec.mask[1 * 5000 + t];
    expect(leadII).toBe(5000);
  });

  it("scales microvolt integers to millivolts", () => {
    const samples = Array(5000).fill(0);
    samples[0] = 1500;
    samples[1] = -250;
    const body = LEAD_ORDER.map(
      (lead) => `<lead id="${lead}" unit="uV">${samples.join(" ")}<mask>5000:1</mask></lead>`
    ).join("");
    const rec = parseRecordXml(`<ecg version="1" sample_rate="500">${body}</ecg>`);
    expect(rec.signal[0]).toBeCloseTo(1.5, 6);
    expect(rec.signal[1]).toBeCloseTo(-0.25, 6);
  });

  it("rejects missing leads", () => {
    const samples = Array(5000).fill(0).join(" ");
    const body = LEAD_ORDER.slice(0, 11)
      .map((lead) => `<lead id="${lead}" unit="uV">${samples}</lead>`)
      .join("");
    expect(() => parseRecordXml(`<ecg version="1" sample_rate="500">${body}</ecg>`))
      .toThrow(/missing leads V6/);
  });

  it("rejects short sample vectors", () => {
    const body = LEAD_ORDER.map(
      (lead) => `<lead id="${lead}" unit="uV">1 2 3</lead>`
    ).join("");
    expect(() => parseRecordXml(`<ecg version="1" sample_rate="500">${body}</ecg>`))
      .toThrow(/3 samples/);
  });

  it("rejects broken masks", () => {
    const samples = Array(5000).fill(0).join(" ");
    const body = LEAD_ORDER.map(
      (lead) => `<lead id="${lead}" unit="uV">${samples}<mask>10:1</mask></lead>`
    ).join("");
    expect(() => parseRecordXml(`<ecg version="1" sample_rate="500">${body}</ecg>`))
      .toThrow(/mask covers/);
  });
});
