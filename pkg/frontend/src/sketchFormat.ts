// Engine sketch interchange format (line-based, integer coordinates):
//
//   hairblend-sketch v1
//   canvas <width> <height>
//   stroke <width> <x0>,<y0> <x1>,<y1> ...
//
// Serialization here must be byte-identical to the engine's writer, so the
// round trip through either side is lossless.

import type { SketchDocument, Stroke } from './types.js';

export const FORMAT_HEADER = 'hairblend-sketch v1';

export function serializeSketch(doc: SketchDocument): string {
  const lines = [FORMAT_HEADER, `canvas ${doc.width} ${doc.height}`];
  for (const stroke of doc.strokes) {
    const pts = stroke.points.map(([x, y]) => `${x},${y}`).join(' ');
    lines.push(`stroke ${stroke.width} ${pts}`);
  }
  return lines.join('\n') + '\n';
}

function parseIntStrict(token: string, what: string): number {
  if (!/^-?\d+$/.test(token)) {
    throw new Error(`bad ${what} in sketch document: ${JSON.stringify(token)}`);
  }
  return parseInt(token, 10);
}

export function parseSketch(text: string): SketchDocument {
  const lines = text.split('\n').filter((ln) => ln.trim() !== '');
  if (lines.length === 0 || lines[0] !== FORMAT_HEADER) {
    throw new Error('not a sketch interchange document');
  }
  const canvasLine = lines[1];
  if (!canvasLine || !canvasLine.startsWith('canvas ')) {
    throw new Error('sketch document missing canvas line');
  }
  const canvasTokens = canvasLine.split(/\s+/);
  const width = parseIntStrict(canvasTokens[1] ?? '', 'canvas width');
  const height = parseIntStrict(canvasTokens[2] ?? '', 'canvas height');
  const strokes: Stroke[] = [];
  for (const line of lines.slice(2)) {
    const tokens = line.split(/\s+/);
    if (tokens[0] !== 'stroke') {
      throw new Error(`unexpected line in sketch document: ${JSON.stringify(line)}`);
    }
    const strokeWidth = parseIntStrict(tokens[1] ?? '', 'stroke width');
    if (strokeWidth < 1) throw new Error('stroke width must be >= 1');
    const points: Array<[number, number]> = [];
    for (const token of tokens.slice(2)) {
      const [xs, ys, ...rest] = token.split(',');
      if (rest.length > 0 || xs === undefined || ys === undefined) {
        throw new Error(`bad point token: ${JSON.stringify(token)}`);
      }
      points.push([parseIntStrict(xs, 'x coordinate'), parseIntStrict(ys, 'y coordinate')]);
    }
    if (points.length < 1) throw new Error('stroke needs at least one point');
    strokes.push({ width: strokeWidth, points });
  }
  return { width, height, strokes };
}
