// Engine mask format: binary PGM (P5), values 0/255, byte layout fully
// determined by the pixel data.

export interface MaskBitmap {
  width: number;
  height: number;
  /** Row-major 0/1 values, length width*height. */
  data: Uint8Array;
}

export function emptyMask(width: number, height: number): MaskBitmap {
  return { width, height, data: new Uint8Array(width * height) };
}

export function maskToPgmBytes(mask: MaskBitmap): Uint8Array {
  const header = `P5\n${mask.width} ${mask.height}\n255\n`;
  const headerBytes = new TextEncoder().encode(header);
  const out = new Uint8Array(headerBytes.length + mask.data.length);
  out.set(headerBytes, 0);
  for (let i = 0; i < mask.data.length; i++) {
    out[headerBytes.length + i] = mask.data[i] ? 255 : 0;
  }
  return out;
}

export function maskFromPgmBytes(bytes: Uint8Array): MaskBitmap {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x35) {
    throw new Error('not a binary PGM document');
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos]!)) pos++;
    if (bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let token = '';
    while (pos < bytes.length && !isSpace(bytes[pos]!)) {
      token += String.fromCharCode(bytes[pos]!);
      pos++;
    }
    const value = parseInt(token, 10);
    if (!Number.isFinite(value)) throw new Error(`bad PGM header token ${JSON.stringify(token)}`);
    fields.push(value);
  }
  pos++; // single whitespace byte before pixel data
  const [width, height, maxval] = fields as [number, number, number];
  if (maxval !== 255) throw new Error('mask PGM must use maxval 255');
  const data = new Uint8Array(width * height);
  for (let i = 0; i < width * height; i++) {
    data[i] = bytes[pos + i]! >= 128 ? 1 : 0;
  }
  return { width, height, data };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

export function maskToBase64(mask: MaskBitmap): string {
  const bytes = maskToPgmBytes(mask);
  const nodeBuffer = (globalThis as Record<string, any>)['Buffer'];
  if (nodeBuffer !== undefined) {
    return nodeBuffer.from(bytes).toString('base64');
  }
  let binary = '';
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

/** Paint a filled disc; the mask brush. */
export function paintDisc(mask: MaskBitmap, cx: number, cy: number, radius: number): void {
  const r2 = radius * radius;
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(mask.height - 1, Math.ceil(cy + radius));
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(mask.width - 1, Math.ceil(cx + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x + 0.5 - cx;
      const dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) {
        mask.data[y * mask.width + x] = 1;
      }
    }
  }
}

export function maskIsEmpty(mask: MaskBitmap): boolean {
  return mask.data.every((v) => v === 0);
}
