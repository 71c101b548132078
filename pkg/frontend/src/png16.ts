/**
 * Minimal PNG decoder for the two raster payloads the service emits:
 * 8-bit grayscale masks and 16-bit grayscale superpixel label maps.
 * Canvas decoding would clamp 16-bit samples to 8 bits, so the label map
 * must be parsed from the raw bytes.
 */
import { inflate } from "pako";

export interface GrayImage {
  width: number;
  height: number;
  /** one sample per pixel, row-major */
  data: Uint16Array;
  bitDepth: 8 | 16;
}

const PNG_SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

function u32(bytes: Uint8Array, off: number): number {
  return (
    ((bytes[off] << 24) >>> 0) +
    (bytes[off + 1] << 16) +
    (bytes[off + 2] << 8) +
    bytes[off + 3]
  );
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Undo per-scanline filtering in place; bpp = bytes per pixel. */
function unfilter(raw: Uint8Array, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const src = y * (stride + 1) + 1;
    const dst = y * stride;
    for (let x = 0; x < stride; x++) {
      const cur = raw[src + x];
      const left = x >= bpp ? out[dst + x - bpp] : 0;
      const up = y > 0 ? out[dst + x - stride] : 0;
      const upLeft = y > 0 && x >= bpp ? out[dst + x - bpp - stride] : 0;
      let v: number;
      switch (filter) {
        case 0: v = cur; break;
        case 1: v = cur + left; break;
        case 2: v = cur + up; break;
        case 3: v = cur + ((left + up) >> 1); break;
        case 4: v = cur + paeth(left, up, upLeft); break;
        default: throw new Error(`unsupported PNG filter ${filter}`);
      }
      out[dst + x] = v & 0xff;
    }
  }
  return out;
}

export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG");
  }
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = -1;
  const idat: Uint8Array[] = [];
  let off = 8;
  while (off + 8 <= bytes.length) {
    const len = u32(bytes, off);
    const kind = String.fromCharCode(...bytes.subarray(off + 4, off + 8));
    const body = bytes.subarray(off + 8, off + 8 + len);
    if (kind === "IHDR") {
      width = u32(body, 0);
      height = u32(body, 4);
      bitDepth = body[8];
      colorType = body[9];
      if (body[12] !== 0) throw new Error("interlaced PNG unsupported");
    } else if (kind === "IDAT") {
      idat.push(body);
    } else if (kind === "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (colorType !== 0) throw new Error(`expected grayscale PNG, got color type ${colorType}`);
  if (bitDepth !== 8 && bitDepth !== 16) throw new Error(`unsupported bit depth ${bitDepth}`);
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let pos = 0;
  for (const c of idat) {
    compressed.set(c, pos);
    pos += c.length;
  }
  const bpp = bitDepth / 8;
  const raw = unfilter(inflate(compressed), width, height, bpp);
  const data = new Uint16Array(width * height);
  if (bitDepth === 8) {
    data.set(raw);
  } else {
    for (let i = 0; i < data.length; i++) {
      data[i] = (raw[2 * i] << 8) | raw[2 * i + 1]; // network byte order
    }
  }
  return { width, height, data, bitDepth: bitDepth as 8 | 16 };
}
