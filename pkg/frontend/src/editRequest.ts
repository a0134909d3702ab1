// Edit panel state and the EditRequest JSON builder.
//
// buildEditRequest is the single place request JSON is produced; its output
// is property-tested against the shared schema so the client cannot submit a
// request the engine would reject on shape.

import type { CanvasDocument } from './canvas.js';
import { maskToBase64 } from './maskFormat.js';
import type { ColorCondition, EditRequestJson, HairstyleCondition } from './types.js';

export type HairstyleChoice =
  | { mode: 'none' }
  | { mode: 'text'; text: string }
  | { mode: 'reference'; session: string };

export type ColorChoice =
  | { mode: 'none' }
  | { mode: 'text'; text: string }
  | { mode: 'reference'; session: string }
  | { mode: 'rgb'; rgb: [number, number, number] };

export interface EditPanelState {
  hairstyle: HairstyleChoice;
  color: ColorChoice;
  includeSketch: boolean;
  useShapeMask: boolean;
  useColorMask: boolean;
}

export const initialPanelState: EditPanelState = {
  hairstyle: { mode: 'none' },
  color: { mode: 'none' },
  includeSketch: false,
  useShapeMask: false,
  useColorMask: false,
};

function hairstyleCondition(choice: HairstyleChoice): HairstyleCondition | null {
  switch (choice.mode) {
    case 'none':
      return null;
    case 'text':
      return { type: 'text', text: choice.text };
    case 'reference':
      return { type: 'reference', session: choice.session };
  }
}

function colorCondition(choice: ColorChoice): ColorCondition | null {
  switch (choice.mode) {
    case 'none':
      return null;
    case 'text':
      return { type: 'text', text: choice.text };
    case 'reference':
      return { type: 'reference', session: choice.session };
    case 'rgb':
      return { type: 'rgb', rgb: choice.rgb };
  }
}

/** Submit gating: at least one condition, and text fields must be nonempty. */
export function canSubmit(panel: EditPanelState, doc: CanvasDocument): boolean {
  const hasHairstyle =
    panel.hairstyle.mode === 'text'
      ? panel.hairstyle.text.trim().length > 0
      : panel.hairstyle.mode === 'reference'
        ? panel.hairstyle.session.length > 0
        : false;
  const hasColor =
    panel.color.mode === 'text'
      ? panel.color.text.trim().length > 0
      : panel.color.mode === 'reference'
        ? panel.color.session.length > 0
        : panel.color.mode === 'rgb';
  const hasSketch = panel.includeSketch && doc.hasSketch();
  return hasHairstyle || hasColor || hasSketch;
}

/**
 * Build the request JSON. Fields the user did not engage are omitted rather
 * than sent as null, so the document says exactly what the user asked.
 */
export function buildEditRequest(panel: EditPanelState, doc: CanvasDocument): EditRequestJson {
  if (!canSubmit(panel, doc)) {
    throw new Error('edit request needs a hairstyle condition, a color condition, or a sketch');
  }
  const request: EditRequestJson = {};
  const hairstyle = hairstyleCondition(panel.hairstyle);
  if (hairstyle) request.hairstyle = hairstyle;
  const color = colorCondition(panel.color);
  if (color) request.color = color;
  if (panel.includeSketch && doc.hasSketch()) {
    const sketch = doc.sketchDocument();
    request.sketch = {
      canvas: [sketch.width, sketch.height],
      strokes: sketch.strokes,
    };
    if (!hairstyle) request.sketch_only = true;
  }
  if (panel.useShapeMask && doc.hasMask() && hairstyle) {
    request.shape_mask = { pgm64: maskToBase64(doc.mask) };
  }
  if (panel.useColorMask && doc.hasMask() && color) {
    request.color_mask = { pgm64: maskToBase64(doc.mask) };
  }
  return request;
}
