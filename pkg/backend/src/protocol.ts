/**
 * Binary completion frames.
 *
 * Request  "ECGC": magic, u16 LE version, 12x5,000 little-endian float32
 *                  (row-major, lead order I,II,III,aVR,aVL,aVF,V1..V6;
 *                  unobserved samples are NaN), then 12x5,000 mask bytes
 *                  (1 = observed).
 * Response "ECGR": magic, u16 LE version, 12x5,000 float32.
 * Error    "ECGE": magic, u16 LE version, u32 LE length, UTF-8 message.
 */

export const PROTOCOL_VERSION = 1;
export const N_LEADS = 12;
export const N_SAMPLES = 5000;
export const N_VALUES = N_LEADS * N_SAMPLES;
export const REQUEST_SIZE = 6 + N_VALUES * 4 + N_VALUES;
export const RESPONSE_SIZE = 6 + N_VALUES * 4;

export interface Request {
  values: Float32Array; // row-major, NaN where unobserved
  mask: Uint8Array; // 1 = observed
}

export class FrameError extends Error {}

export function parseRequest(buf: Buffer): Request {
  if (buf.length < 6) {
    throw new FrameError(`frame truncated at ${buf.length} bytes`);
  }
  if (buf.toString("latin1", 0, 4) !== "ECGC") {
    throw new FrameError(`bad request magic ${buf.subarray(0, 4).toString("hex")}`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== PROTOCOL_VERSION) {
    throw new FrameError(`unsupported protocol version ${version}`);
  }
  if (buf.length < REQUEST_SIZE) {
    throw new FrameError(`short request: ${buf.length} of ${REQUEST_SIZE} bytes`);
  }
  // copy into a fresh buffer so the Float32Array view is aligned
  const valueBytes = Uint8Array.prototype.slice.call(buf, 6, 6 + N_VALUES * 4);
  const values = new Float32Array(valueBytes.buffer, 0, N_VALUES);
  const mask = Uint8Array.prototype.slice.call(buf, 6 + N_VALUES * 4, REQUEST_SIZE);
  return { values, mask };
}

export function packResponse(values: Float32Array): Buffer {
  if (values.length !== N_VALUES) {
    throw new FrameError(`response must carry ${N_VALUES} values`);
  }
  const head = Buffer.alloc(6);
  head.write("ECGR", 0, "latin1");
  head.writeUInt16LE(PROTOCOL_VERSION, 4);
  return Buffer.concat([head, Buffer.from(values.buffer, values.byteOffset, values.byteLength)]);
}

export function packError(message: string): Buffer {
  const msg = Buffer.from(message, "utf-8");
  const head = Buffer.alloc(10);
  head.write("ECGE", 0, "latin1");
  head.writeUInt16LE(PROTOCOL_VERSION, 4);
  head.writeUInt32LE(msg.length, 6);
  return Buffer.concat([head, msg]);
}
