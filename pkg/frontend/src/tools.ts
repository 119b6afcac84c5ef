// Pure editor state: gestures become committed prompt entries, entries
// serialize to the wire document. No DOM access here so every transition is
// unit-testable; the server owns all rasterization.

import type { BoxWire, ClickWire, PromptSetDoc, Polarity, RleDoc, ScribbleWire } from './schema.js';

export type Tool = 'click+' | 'click-' | 'box' | 'scribble+' | 'scribble-' | 'polygon';

export type PromptEntry =
  | { kind: 'click'; click: ClickWire }
  | { kind: 'box'; box: BoxWire }
  | { kind: 'polygon'; vertices: [number, number][] }
  | { kind: 'scribble'; scribble: ScribbleWire };

export interface InProgress {
  boxStart?: [number, number];
  boxEnd?: [number, number];
  scribblePath?: [number, number][];
  polygonVertices?: [number, number][];
}

export interface EditorState {
  tool: Tool;
  entries: PromptEntry[];
  redoStack: PromptEntry[];
  inProgress: InProgress;
  maskFeedback: boolean;
  lastMask: RleDoc | null;
  overlayOpacity: number;
}

export function initialState(): EditorState {
  return {
    tool: 'click+',
    entries: [],
    redoStack: [],
    inProgress: {},
    maskFeedback: false,
    lastMask: null,
    overlayOpacity: 0.45,
  };
}

export function setTool(state: EditorState, tool: Tool): EditorState {
  // switching tools abandons any in-progress geometry
  return { ...state, tool, inProgress: {} };
}

function commit(state: EditorState, entry: PromptEntry): EditorState {
  return { ...state, entries: [...state.entries, entry], redoStack: [], inProgress: {} };
}

function clickPolarity(tool: Tool): Polarity | null {
  if (tool === 'click+') return 'positive';
  if (tool === 'click-') return 'negative';
  return null;
}

function scribblePolarity(tool: Tool): Polarity | null {
  if (tool === 'scribble+') return 'positive';
  if (tool === 'scribble-') return 'negative';
  return null;
}

// A click lands immediately; returns null when the tool does not click or
// when the point is outside the image (callers show a cue and send nothing).
export function applyClick(state: EditorState, point: [number, number] | null): EditorState | null {
  const polarity = clickPolarity(state.tool);
  if (polarity === null || point === null) return null;
  return commit(state, { kind: 'click', click: { row: point[0], col: point[1], polarity } });
}

export function beginBox(state: EditorState, point: [number, number]): EditorState {
  if (state.tool !== 'box') return state;
  return { ...state, inProgress: { boxStart: point, boxEnd: point } };
}

export function dragBox(state: EditorState, point: [number, number]): EditorState {
  if (state.inProgress.boxStart === undefined) return state;
  return { ...state, inProgress: { ...state.inProgress, boxEnd: point } };
}

// Commit on release: corners normalize regardless of drag direction; a
// zero-area drag is discarded.
export function endBox(state: EditorState): EditorState {
  const { boxStart, boxEnd } = state.inProgress;
  if (boxStart === undefined || boxEnd === undefined) return state;
  const box: BoxWire = {
    r0: Math.min(boxStart[0], boxEnd[0]),
    c0: Math.min(boxStart[1], boxEnd[1]),
    r1: Math.max(boxStart[0], boxEnd[0]),
    c1: Math.max(boxStart[1], boxEnd[1]),
  };
  if (box.r0 === box.r1 && box.c0 === box.c1) {
    return { ...state, inProgress: {} };
  }
  return commit(state, { kind: 'box', box });
}

export function beginScribble(state: EditorState, point: [number, number]): EditorState {
  if (scribblePolarity(state.tool) === null) return state;
  return { ...state, inProgress: { scribblePath: [point] } };
}

export function extendScribble(state: EditorState, point: [number, number]): EditorState {
  const path = state.inProgress.scribblePath;
  if (path === undefined) return state;
  return { ...state, inProgress: { scribblePath: [...path, point] } };
}

// The raw freehand path goes to the server verbatim; resampling is its job.
export function endScribble(state: EditorState): EditorState {
  const path = state.inProgress.scribblePath;
  const polarity = scribblePolarity(state.tool);
  if (path === undefined || polarity === null) return state;
  if (path.length < 2) {
    return { ...state, inProgress: {} };
  }
  return commit(state, { kind: 'scribble', scribble: { path, polarity } });
}

export function addPolygonVertex(state: EditorState, point: [number, number]): EditorState {
  if (state.tool !== 'polygon') return state;
  const vertices = state.inProgress.polygonVertices ?? [];
  return { ...state, inProgress: { polygonVertices: [...vertices, point] } };
}

// Close on double-activation or first-vertex click; under three vertices the
// attempt is rejected and the in-progress ring is kept for more clicks.
export function closePolygon(state: EditorState): { state: EditorState; committed: boolean } {
  const vertices = state.inProgress.polygonVertices ?? [];
  if (vertices.length < 3) {
    return { state, committed: false };
  }
  return { state: commit(state, { kind: 'polygon', vertices }), committed: true };
}

export function undo(state: EditorState): EditorState {
  if (state.entries.length === 0) return state;
  const entries = state.entries.slice(0, -1);
  const popped = state.entries[state.entries.length - 1];
  return { ...state, entries, redoStack: [...state.redoStack, popped] };
}

export function redo(state: EditorState): EditorState {
  if (state.redoStack.length === 0) return state;
  const entry = state.redoStack[state.redoStack.length - 1];
  return {
    ...state,
    entries: [...state.entries, entry],
    redoStack: state.redoStack.slice(0, -1),
  };
}

// The full committed set is serialized every time; the server treats each
// submission as the complete prompt state, which is what makes undo a plain
// resend of the reduced set.
export function serializePrompts(state: EditorState): PromptSetDoc {
  const doc: PromptSetDoc = { clicks: [], boxes: [], polygons: [], scribbles: [] };
  for (const entry of state.entries) {
    switch (entry.kind) {
      case 'click':
        doc.clicks.push(entry.click);
        break;
      case 'box':
        doc.boxes.push(entry.box);
        break;
      case 'polygon':
        doc.polygons.push(entry.vertices);
        break;
      case 'scribble':
        doc.scribbles.push(entry.scribble);
        break;
    }
  }
  if (state.maskFeedback && state.lastMask !== null) {
    doc.mask_rle = state.lastMask;
  }
  return doc;
}

export interface ViewTransform {
  scale: number;      // canvas pixels per image pixel
  offsetX: number;
  offsetY: number;
  imageWidth: number;
  imageHeight: number;
}

// Canvas coordinates -> original-image (row, col); null outside the image.
export function canvasToImage(
  view: ViewTransform,
  canvasX: number,
  canvasY: number,
): [number, number] | null {
  const col = Math.floor((canvasX - view.offsetX) / view.scale);
  const row = Math.floor((canvasY - view.offsetY) / view.scale);
  if (row < 0 || col < 0 || row >= view.imageHeight || col >= view.imageWidth) {
    return null;
  }
  return [row, col];
}
