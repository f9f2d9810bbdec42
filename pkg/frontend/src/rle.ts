/**
 * Run-length mask codec, matching the server convention exactly:
 * alternating zero-run/one-run counts, zero run first, voxels in
 * i-fastest (column) then j then k order.
 */

export function rleDecode(runs: number[], voxelCount: number): Uint8Array {
  const bits = new Uint8Array(voxelCount);
  let pos = 0;
  let value = 0;
  for (const count of runs) {
    if (count < 0) throw new Error(`negative run length ${count}`);
    if (value) bits.fill(1, pos, pos + count);
    pos += count;
    value ^= 1;
  }
  if (pos !== voxelCount) {
    throw new Error(`runs cover ${pos} voxels, expected ${voxelCount}`);
  }
  return bits;
}

export function rleEncode(bits: Uint8Array): number[] {
  const runs: number[] = [];
  let current = 0;
  let run = 0;
  for (let idx = 0; idx < bits.length; idx++) {
    const bit = bits[idx] ? 1 : 0;
    if (bit === current) {
      run += 1;
    } else {
      runs.push(run);
      current = bit;
      run = 1;
    }
  }
  runs.push(run);
  // Canonical form: a mask starting with 1 gets a leading zero-run of 0;
  // the loop above already emits that because `current` starts at 0 and a
  // leading 1 forces an immediate push of run=0.
  return runs;
}

export function popcount(bits: Uint8Array): number {
  let n = 0;
  for (let idx = 0; idx < bits.length; idx++) n += bits[idx];
  return n;
}
