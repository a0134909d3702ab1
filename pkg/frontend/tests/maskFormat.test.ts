import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { emptyMask, maskFromPgmBytes, maskToPgmBytes, paintDisc } from '../src/maskFormat.js';

const ENGINE_FIXTURES = join(__dirname, '..', '..', 'tests', 'fixtures');

describe('mask PGM format', () => {
  it('round-trips the engine fixture byte-identically', () => {
    const raw = new Uint8Array(readFileSync(join(ENGINE_FIXTURES, 'fixture_sketch_region.pgm')));
    const mask = maskFromPgmBytes(raw);
    expect(Array.from(maskToPgmBytes(mask))).toEqual(Array.from(raw));
  });

  it('writes the canonical header', () => {
    const mask = emptyMask(7, 9);
    mask.data[3] = 1;
    const bytes = maskToPgmBytes(mask);
    const header = new TextDecoder().decode(bytes.slice(0, 11));
    expect(header).toBe('P5\n7 9\n255\n');
    expect(bytes.length).toBe(11 + 63);
    expect(bytes[11 + 3]).toBe(255);
    expect(bytes[11 + 4]).toBe(0);
  });

  it('painted masks round-trip', () => {
    const mask = emptyMask(32, 32);
    paintDisc(mask, 10.5, 12.5, 3);
    paintDisc(mask, 20, 20, 2.5);
    const back = maskFromPgmBytes(maskToPgmBytes(mask));
    expect(Array.from(back.data)).toEqual(Array.from(mask.data));
    expect(back.width).toBe(32);
    expect(back.height).toBe(32);
  });

  it('rejects non-PGM payloads', () => {
    expect(() => maskFromPgmBytes(new TextEncoder().encode('P6\n2 2\n255\n....'))).toThrow();
  });
});
