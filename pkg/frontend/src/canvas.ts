// Canvas document model: base image layer, sketch stroke layer, mask paint
// layer, and viewport. Pure state + operations; rendering lives in main.ts.

import { emptyMask, maskIsEmpty, paintDisc, type MaskBitmap } from './maskFormat.js';
import type { Point, SketchDocument, Stroke } from './types.js';

export interface Viewport {
  zoom: number;
  panX: number;
  panY: number;
}

type UndoAction =
  | { kind: 'stroke' }
  | { kind: 'mask'; previous: Uint8Array };

export class CanvasDocument {
  readonly width: number;
  readonly height: number;
  baseImageUrl: string | null = null;
  strokes: Stroke[] = [];
  mask: MaskBitmap;
  viewport: Viewport = { zoom: 1, panX: 0, panY: 0 };
  private undoStack: UndoAction[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.mask = emptyMask(width, height);
  }

  /** Quantize a pointer trace into an integer-coordinate stroke. */
  drawStroke(trace: Point[], width: number): Stroke | null {
    const points: Array<[number, number]> = [];
    for (const p of trace) {
      const x = Math.round(p.x);
      const y = Math.round(p.y);
      const last = points[points.length - 1];
      if (!last || last[0] !== x || last[1] !== y) {
        points.push([x, y]);
      }
    }
    if (points.length === 0) return null;
    const stroke: Stroke = { width: Math.max(1, Math.round(width)), points };
    this.strokes.push(stroke);
    this.undoStack.push({ kind: 'stroke' });
    return stroke;
  }

  paintMask(trace: Point[], radius: number): void {
    this.undoStack.push({ kind: 'mask', previous: this.mask.data.slice() });
    for (const p of trace) {
      paintDisc(this.mask, p.x, p.y, radius);
    }
  }

  undo(): boolean {
    const action = this.undoStack.pop();
    if (!action) return false;
    if (action.kind === 'stroke') {
      this.strokes.pop();
    } else {
      this.mask = { ...this.mask, data: action.previous };
    }
    return true;
  }

  clearStrokes(): void {
    this.strokes = [];
    this.undoStack = this.undoStack.filter((a) => a.kind !== 'stroke');
  }

  sketchDocument(): SketchDocument {
    return { width: this.width, height: this.height, strokes: this.strokes.map(cloneStroke) };
  }

  hasSketch(): boolean {
    return this.strokes.length > 0;
  }

  hasMask(): boolean {
    return !maskIsEmpty(this.mask);
  }

  /** Start a fresh document over a result image, keeping the resolution. */
  static fromResult(width: number, height: number, imageUrl: string): CanvasDocument {
    const doc = new CanvasDocument(width, height);
    doc.baseImageUrl = imageUrl;
    return doc;
  }
}

function cloneStroke(s: Stroke): Stroke {
  return { width: s.width, points: s.points.map(([x, y]) => [x, y] as [number, number]) };
}
