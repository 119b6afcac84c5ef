// Uncompressed run-length masks, row-major, counts starting with the zero run.

import type { RleDoc } from './schema.js';

export function decodeRle(doc: RleDoc): Uint8Array {
  const [h, w] = doc.size;
  const total = doc.counts.reduce((a, b) => a + b, 0);
  if (total !== h * w) {
    throw new Error(`RLE counts sum to ${total}, expected ${h * w}`);
  }
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const run of doc.counts) {
    if (value === 1) {
      out.fill(1, pos, pos + run);
    }
    pos += run;
    value ^= 1;
  }
  return out;
}

export function encodeRle(mask: Uint8Array, h: number, w: number): RleDoc {
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} != ${h}x${w}`);
  }
  const counts: number[] = [];
  let last = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === last) {
      run += 1;
    } else {
      counts.push(run);
      run = 1;
      last = v;
    }
  }
  if (mask.length > 0) {
    counts.push(run);
  }
  return { size: [h, w], counts };
}

// RGBA overlay pixels for a decoded mask; foreground gets the given color.
export function maskToOverlay(
  mask: Uint8Array,
  color: [number, number, number],
  alpha: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(mask.length * 4);
  const a = Math.round(alpha * 255);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      out[i * 4] = color[0];
      out[i * 4 + 1] = color[1];
      out[i * 4 + 2] = color[2];
      out[i * 4 + 3] = a;
    }
  }
  return out;
}
