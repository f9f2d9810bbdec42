/**
 * Pure slice compositing: windowed grayscale base, ROI overlays in their
 * colors at configured opacity, optional discrepancy layer on top.  Pure
 * functions of the inputs — no canvas access — so rendering is testable
 * pixel-for-pixel.
 */

export interface OverlaySpec {
  bits: Uint8Array; // one slice, rows*cols, 0/1
  color: [number, number, number];
  opacity: number; // 0..1
}

/** Window an int16 slice into 8-bit gray. */
export function windowToGray(values: Int16Array, center: number, width: number): Uint8ClampedArray {
  const gray = new Uint8ClampedArray(values.length);
  const lo = center - width / 2;
  const scale = 255 / Math.max(width, 1e-9);
  for (let idx = 0; idx < values.length; idx++) {
    gray[idx] = Math.round((values[idx] - lo) * scale);
  }
  return gray;
}

export function grayToRgba(gray: Uint8ClampedArray): Uint8ClampedArray {
  const rgba = new Uint8ClampedArray(gray.length * 4);
  for (let idx = 0; idx < gray.length; idx++) {
    const g = gray[idx];
    rgba[idx * 4] = g;
    rgba[idx * 4 + 1] = g;
    rgba[idx * 4 + 2] = g;
    rgba[idx * 4 + 3] = 255;
  }
  return rgba;
}

/**
 * Alpha-blend overlays onto a copy of the base RGBA buffer.  Overlays with
 * opacity 0 (or no set pixels) leave the output bit-identical to the base.
 */
export function compositeSlice(baseRgba: Uint8ClampedArray, overlays: OverlaySpec[]): Uint8ClampedArray {
  const out = baseRgba.slice();
  for (const overlay of overlays) {
    if (overlay.opacity <= 0) continue;
    const a = Math.min(overlay.opacity, 1);
    const [r, g, b] = overlay.color;
    for (let idx = 0; idx < overlay.bits.length; idx++) {
      if (!overlay.bits[idx]) continue;
      const o = idx * 4;
      out[o] = Math.round(r * a + out[o] * (1 - a));
      out[o + 1] = Math.round(g * a + out[o + 1] * (1 - a));
      out[o + 2] = Math.round(b * a + out[o + 2] * (1 - a));
    }
  }
  return out;
}

/** Extract one slice (rows*cols) from a flat volume mask in wire order. */
export function sliceOfMask(bits: Uint8Array, rows: number, cols: number, k: number): Uint8Array {
  const page = rows * cols;
  return bits.subarray(k * page, (k + 1) * page);
}
