import { describe, expect, it } from 'vitest';

import { popcount, rleDecode, rleEncode } from '../src/rle.js';

describe('rle codec', () => {
  it('decodes known patterns', () => {
    expect(Array.from(rleDecode([2, 3, 1], 6))).toEqual([0, 0, 1, 1, 1, 0]);
    expect(Array.from(rleDecode([6], 6))).toEqual([0, 0, 0, 0, 0, 0]);
    expect(Array.from(rleDecode([0, 2, 1], 3))).toEqual([1, 1, 0]);
  });

  it('rejects run totals that do not fill the volume', () => {
    expect(() => rleDecode([5, 1], 4)).toThrow(/expected 4/);
  });

  it('encodes with the leading-zero-run convention', () => {
    expect(rleEncode(Uint8Array.from([0, 0, 1, 1, 1, 0]))).toEqual([2, 3, 1]);
    expect(rleEncode(Uint8Array.from([1, 1, 0]))).toEqual([0, 2, 1]);
    expect(rleEncode(Uint8Array.from([0, 0, 0]))).toEqual([3]);
  });

  it('round-trips random masks', () => {
    let seed = 1234567;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) & 0x7fffffff;
      return seed / 0x7fffffff;
    };
    for (let trial = 0; trial < 200; trial++) {
      const n = 1 + Math.floor(rand() * 200);
      const bits = new Uint8Array(n);
      const density = rand();
      for (let idx = 0; idx < n; idx++) bits[idx] = rand() < density ? 1 : 0;
      const runs = rleEncode(bits);
      for (const c of runs.slice(1)) expect(c).toBeGreaterThan(0); // canonical
      const back = rleDecode(runs, n);
      expect(Array.from(back)).toEqual(Array.from(bits));
      expect(popcount(back)).toBe(popcount(bits));
    }
  });
});
