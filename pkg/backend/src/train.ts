/**
 * Training entry point.
 *
 *   node dist/train.js --data <record dir> --out <model.json>
 *                      [--epochs 200] [--lr 0.004] [--seed 1] [--quiet]
 *
 * One epoch is one pass over the record files; the loss is masked MSE plus
 * the continuity penalty, evaluated on the unobserved region of each
 * record.  Fixed seeds give identical loss curves run to run.
 */

import * as fs from "fs";
import { maskedLoss } from "./loss";
import { ToyUNet, buildInput, outputToLeads, RECORD_LEADS, RECORD_SAMPLES } from "./model";
import { EcgRecord, readRecordDir } from "./records";

export interface TrainOptions {
  epochs: number;
  lr: number;
  seed: number;
  log?: (epoch: number, loss: number, rmse: number) => void;
}

export interface TrainResult {
  model: ToyUNet;
  losses: number[];
  maskedRmse: number[];
}

/** Channels-last target plus the to-reconstruct mask for the loss. */
function prepare(record: EcgRecord) {
  const x = buildInput(record.signal, record.mask);
  const target = new Float32Array(RECORD_SAMPLES * RECORD_LEADS);
  const reconstruct = new Uint8Array(RECORD_SAMPLES * RECORD_LEADS);
  for (let lead = 0; lead < RECORD_LEADS; lead++) {
    for (let t = 0; t < RECORD_SAMPLES; t++) {
      target[t * RECORD_LEADS + lead] = record.signal[lead * RECORD_SAMPLES + t];
      reconstruct[t * RECORD_LEADS + lead] = record.mask[lead * RECORD_SAMPLES + t] ? 0 : 1;
    }
  }
  return { x, target, reconstruct };
}

export function train(records: EcgRecord[], options: TrainOptions): TrainResult {
  if (records.length === 0) {
    throw new Error("training dataset is empty");
  }
  const model = new ToyUNet(options.seed);
  const optimizer = model.makeOptimizer(options.lr);
  const examples = records.map(prepare);
  const losses: number[] = [];
  const maskedRmse: number[] = [];
  for (let epoch = 0; epoch < options.epochs; epoch++) {
    let lossSum = 0;
    let mseSum = 0;
    for (const ex of examples) {
      const { y, cache } = model.forward(ex.x, true);
      const { loss, mse, grad } = maskedLoss(y, ex.target, ex.reconstruct);
      const grads = model.backward(grad, cache!);
      optimizer.step(grads);
      lossSum += loss;
      mseSum += mse;
    }
    const meanLoss = lossSum / examples.length;
    const rmse = Math.sqrt(mseSum / examples.length);
    losses.push(meanLoss);
    maskedRmse.push(rmse);
    options.log?.(epoch, meanLoss, rmse);
  }
  return { model, losses, maskedRmse };
}

/** Masked-region RMSE of the trained model on one record (mV). */
export function evaluateMaskedRmse(model: ToyUNet, record: EcgRecord): number {
  const x = buildInput(record.signal, record.mask);
  const leads = outputToLeads(model.predict(x));
  let se = 0;
  let n = 0;
  for (let i = 0; i < leads.length; i++) {
    if (record.mask[i]) continue;
    const e = leads[i] - record.signal[i];
    se += e * e;
    n += 1;
  }
  return n > 0 ? Math.sqrt(se / n) : 0;
}

function parseArgs(argv: string[]): Record<string, string | boolean> {
  const out: Record<string, string | boolean> = {};
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--")) continue;
    const key = a.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      out[key] = argv[++i];
    } else {
      out[key] = true;
    }
  }
  return out;
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  const dataDir = args["data"];
  const outFile = args["out"];
  if (typeof dataDir !== "string" || typeof outFile !== "string") {
    process.stderr.write(
      "usage: train --data <record dir> --out <model.json> " +
        "[--epochs N] [--lr F] [--seed N] [--quiet]\n"
    );
    process.exit(2);
  }
  const records = readRecordDir(dataDir);
  const quiet = Boolean(args["quiet"]);
  const result = train(records, {
    epochs: parseInt(String(args["epochs"] ?? "200"), 10),
    lr: parseFloat(String(args["lr"] ?? "0.004")),
    seed: parseInt(String(args["seed"] ?? "1"), 10),
    log: quiet
      ? undefined
      : (epoch, loss, rmse) =>
          process.stderr.write(`epoch ${epoch}: loss=${loss.toExponential(4)} masked_rmse=${rmse.toFixed(5)} mV\n`),
  });
  fs.writeFileSync(outFile, result.model.save());
  process.stderr.write(`saved ${outFile} (${result.model.countParams()} params, ` +
    `final masked RMSE ${result.maskedRmse[result.maskedRmse.length - 1].toFixed(5)} mV)\n`);
}

if (require.main === module) {
  main();
}
