/**
 * Client-side hover support: look up the superpixel under the cursor in the
 * decoded label map and build its outline as crack-edge segments along the
 * pixel lattice, ready for a single canvas stroke pass.
 */
import { GrayImage } from "./png16.js";

export interface Segment {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/** Label under an image-space pixel, or null outside the raster. */
export function labelAt(map: GrayImage, x: number, y: number): number | null {
  const xi = Math.floor(x);
  const yi = Math.floor(y);
  if (xi < 0 || yi < 0 || xi >= map.width || yi >= map.height) return null;
  return map.data[yi * map.width + xi];
}

/**
 * Boundary segments of one labeled region: every lattice edge between a
 * pixel of the region and a pixel of any other region (or the border).
 */
export function regionOutline(map: GrayImage, label: number): Segment[] {
  const { width: w, height: h, data } = map;
  const segs: Segment[] = [];
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      if (data[y * w + x] !== label) continue;
      if (y === 0 || data[(y - 1) * w + x] !== label) {
        segs.push({ x0: x, y0: y, x1: x + 1, y1: y });
      }
      if (y === h - 1 || data[(y + 1) * w + x] !== label) {
        segs.push({ x0: x, y0: y + 1, x1: x + 1, y1: y + 1 });
      }
      if (x === 0 || data[y * w + x - 1] !== label) {
        segs.push({ x0: x, y0: y, x1: x, y1: y + 1 });
      }
      if (x === w - 1 || data[y * w + x + 1] !== label) {
        segs.push({ x0: x + 1, y0: y, x1: x + 1, y1: y + 1 });
      }
    }
  }
  return segs;
}

/** Pixel mask (1 where the node's label is set) rendered from graph labels. */
export function maskFromLabels(map: GrayImage, labels: number[]): Uint8Array {
  const out = new Uint8Array(map.data.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = labels[map.data[i]] ? 1 : 0;
  }
  return out;
}
