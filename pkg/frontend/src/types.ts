// Shared model types for the editor.

export interface Point {
  x: number;
  y: number;
}

/** Integer-coordinate polyline; matches the engine's interchange format. */
export interface Stroke {
  width: number;
  points: Array<[number, number]>;
}

export interface SketchDocument {
  width: number;
  height: number;
  strokes: Stroke[];
}

export type HairstyleCondition =
  | { type: 'text'; text: string }
  | { type: 'reference'; session: string };

export type ColorCondition =
  | { type: 'text'; text: string }
  | { type: 'reference'; session: string }
  | { type: 'rgb'; rgb: [number, number, number] };

/** Wire form of an edit request; mirrors the engine's recipe schema. */
export interface EditRequestJson {
  hairstyle?: HairstyleCondition | null;
  sketch?: { canvas: [number, number]; strokes: Stroke[] } | null;
  sketch_only?: boolean;
  shape_mask?: { pgm64: string } | null;
  color?: ColorCondition | null;
  color_mask?: { pgm64: string } | null;
}

export interface ProgressEvent {
  type: 'state' | 'progress' | 'failed';
  state?: string;
  stage?: string;
  step?: number;
  loss?: number;
  error?: string;
  result?: string;
}

export interface JobStatus {
  id: string;
  session: string;
  kind: string;
  state: 'queued' | 'running' | 'done' | 'failed';
  stage?: string;
  step?: number;
  loss?: number;
  error?: string;
  report?: unknown;
}
