/** Pure pixel-level view composition, kept separate from the DOM for tests. */

export const TINT: [number, number, number] = [66, 133, 244];
export const TINT_ALPHA = 0.45;
export const BOUNDARY: [number, number, number] = [20, 20, 20];

/** Pixels whose 4-neighborhood crosses a superpixel boundary. */
export function boundaryMask(labels: Uint16Array, width: number, height: number): Uint8Array {
  const out = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const lab = labels[i];
      if (
        (x + 1 < width && labels[i + 1] !== lab) ||
        (y + 1 < height && labels[i + width] !== lab)
      ) {
        out[i] = 1;
      }
    }
  }
  return out;
}

/**
 * Compose the annotator view over a base RGBA buffer: tint the selected
 * superpixels, then draw boundary pixels on top. Returns a new buffer.
 */
export function composeView(
  base: Uint8ClampedArray,
  labels: Uint16Array,
  width: number,
  height: number,
  selected: ReadonlySet<number>,
  boundary?: Uint8Array,
): Uint8ClampedArray {
  const edges = boundary ?? boundaryMask(labels, width, height);
  const out = new Uint8ClampedArray(base);
  for (let i = 0; i < width * height; i++) {
    const o = i * 4;
    if (selected.has(labels[i])) {
      out[o] = out[o] * (1 - TINT_ALPHA) + TINT[0] * TINT_ALPHA;
      out[o + 1] = out[o + 1] * (1 - TINT_ALPHA) + TINT[1] * TINT_ALPHA;
      out[o + 2] = out[o + 2] * (1 - TINT_ALPHA) + TINT[2] * TINT_ALPHA;
    }
    if (edges[i]) {
      out[o] = BOUNDARY[0];
      out[o + 1] = BOUNDARY[1];
      out[o + 2] = BOUNDARY[2];
    }
    out[o + 3] = 255;
  }
  return out;
}

/**
 * Reconstruct the selected id set from a composed view by comparing it with
 * the untinted base (view-model consistency check: the set sent on save must
 * equal the set readable off the pixels).
 */
export function selectionFromView(
  base: Uint8ClampedArray,
  view: Uint8ClampedArray,
  labels: Uint16Array,
  width: number,
  height: number,
): Set<number> {
  const edges = boundaryMask(labels, width, height);
  const tinted = new Set<number>();
  for (let i = 0; i < width * height; i++) {
    if (edges[i]) continue; // boundary overpaint hides the tint
    const o = i * 4;
    if (base[o] !== view[o] || base[o + 1] !== view[o + 1] || base[o + 2] !== view[o + 2]) {
      tinted.add(labels[i]);
    }
  }
  return tinted;
}
