// Wire schema shared with the session service. Field names and nesting must
// round-trip byte-compatibly with the server's prompt documents.

export type Polarity = 'positive' | 'negative';

export interface ClickWire {
  row: number;
  col: number;
  polarity: Polarity;
}

export interface BoxWire {
  r0: number;
  c0: number;
  r1: number;
  c1: number;
}

export interface ScribbleWire {
  path: [number, number][];
  polarity: Polarity;
}

export interface RleDoc {
  size: [number, number];
  counts: number[];
}

export interface PromptSetDoc {
  clicks: ClickWire[];
  boxes: BoxWire[];
  polygons: [number, number][][];
  scribbles: ScribbleWire[];
  mask_rle?: RleDoc;
  text_embedding?: number[];
}

export interface SessionInfo {
  session_id: string;
  encode_ms: number;
  original_size: [number, number];
  model_size: number;
}

export interface MaskResponse {
  mask_rle: RleDoc;
  decode_ms: number;
  iou: number | null;
  prompts: PromptSetDoc;
}

export function emptyPromptDoc(): PromptSetDoc {
  return { clicks: [], boxes: [], polygons: [], scribbles: [] };
}

export function isValidPromptDoc(doc: PromptSetDoc): boolean {
  const intPair = (p: unknown): p is [number, number] =>
    Array.isArray(p) && p.length === 2 && p.every((v) => Number.isInteger(v));
  const polarityOk = (p: string) => p === 'positive' || p === 'negative';
  return (
    doc.clicks.every((c) => Number.isInteger(c.row) && Number.isInteger(c.col) && polarityOk(c.polarity)) &&
    doc.boxes.every((b) => [b.r0, b.c0, b.r1, b.c1].every(Number.isInteger) && b.r0 <= b.r1 && b.c0 <= b.c1) &&
    doc.polygons.every((poly) => poly.length >= 3 && poly.every(intPair)) &&
    doc.scribbles.every((s) => s.path.length >= 1 && s.path.every(intPair) && polarityOk(s.polarity))
  );
}
