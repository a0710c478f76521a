/**
 * Completion responder speaking the ECGC/ECGR frame protocol.
 *
 *   node dist/serve.js --model <model.json>              # stdio, frame per stdin
 *   node dist/serve.js --model <model.json> --tcp 7777   # one frame per connection
 *
 * A malformed frame produces an ECGE error frame and the server keeps
 * serving.  Without --model a freshly initialized network is used (shape
 * checks and integration tests do not need trained weights).
 */

import * as fs from "fs";
import * as net from "net";
import { ToyUNet, buildInput, outputToLeads } from "./model";
import { FrameError, REQUEST_SIZE, packError, packResponse, parseRequest } from "./protocol";

export function respond(model: ToyUNet, frame: Buffer): Buffer {
  try {
    const request = parseRequest(frame);
    const x = buildInput(request.values, request.mask);
    const leads = outputToLeads(model.predict(x));
    for (let i = 0; i < leads.length; i++) {
      if (!Number.isFinite(leads[i])) {
        return packError("model produced non-finite output");
      }
    }
    return packResponse(leads);
  } catch (err) {
    if (err instanceof FrameError) {
      return packError(err.message);
    }
    return packError(`internal error: ${(err as Error).message}`);
  }
}

function serveStdio(model: ToyUNet): void {
  let buf: Buffer = Buffer.alloc(0);
  const drain = () => {
    while (buf.length >= REQUEST_SIZE) {
      process.stdout.write(respond(model, buf.subarray(0, REQUEST_SIZE)));
      buf = buf.subarray(REQUEST_SIZE);
    }
  };
  process.stdin.on("data", (chunk: Buffer) => {
    buf = buf.length ? Buffer.concat([buf, chunk]) : chunk;
    drain();
  });
  process.stdin.on("end", () => {
    drain();
    if (buf.length > 0) {
      process.stdout.write(respond(model, buf));
    }
    // no process.exit: the process ends once stdout drains, so piped
    // consumers always see the complete response
  });
}

function serveTcp(model: ToyUNet, port: number, onReady?: () => void): void {
  const server = net.createServer((sock) => {
    const chunks: Buffer[] = [];
    let total = 0;
    const reply = () => {
      const buf = Buffer.concat(chunks);
      chunks.length = 0;
      if (buf.length === 0) return;
      sock.end(respond(model, buf));
    };
    sock.on("data", (chunk) => {
      chunks.push(chunk);
      total += chunk.length;
      if (total >= REQUEST_SIZE) {
        reply();
        total = 0;
      }
    });
    sock.on("end", reply);
    sock.on("error", () => sock.destroy());
  });
  server.listen(port, "127.0.0.1", () => {
    process.stderr.write(`listening on 127.0.0.1:${port}\n`);
    onReady?.();
  });
}

function main(): void {
  const argv = process.argv.slice(2);
  let modelFile: string | null = null;
  let tcpPort: number | null = null;
  let seed = 1;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--model") modelFile = argv[++i];
    else if (argv[i] === "--tcp") tcpPort = parseInt(argv[++i], 10);
    else if (argv[i] === "--seed") seed = parseInt(argv[++i], 10);
  }
  const model = modelFile ? ToyUNet.load(fs.readFileSync(modelFile, "utf-8")) : new ToyUNet(seed);
  if (tcpPort !== null) {
    serveTcp(model, tcpPort);
  } else {
    serveStdio(model);
  }
}

if (require.main === module) {
  main();
}
