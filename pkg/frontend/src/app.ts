// Canvas annotation client: loads an image into a session, turns pointer
// gestures into prompt entries, and keeps a translucent mask overlay in sync
// with the service's predictions.

import { SegmentClient, SubmitQueue } from './api.js';
import { decodeRle, encodeRle, maskToOverlay } from './rle.js';
import type { MaskResponse } from './schema.js';
import * as tools from './tools.js';
import type { EditorState, Tool, ViewTransform } from './tools.js';

const TOOLS: Tool[] = ['click+', 'click-', 'box', 'scribble+', 'scribble-', 'polygon'];
const OVERLAY_COLOR: [number, number, number] = [66, 133, 244];

interface App {
  state: EditorState;
  sessionId: string | null;
  view: ViewTransform | null;
  image: HTMLImageElement | null;
  modelSize: number;
  lastResponse: MaskResponse | null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function startApp(): void {
  const canvas = el<HTMLCanvasElement>('canvas');
  const ctx = canvas.getContext('2d')!;
  const status = el<HTMLSpanElement>('status');
  const latency = el<HTMLSpanElement>('latency');
  const iouReadout = el<HTMLSpanElement>('iou');
  const banner = el<HTMLDivElement>('banner');

  const client = new SegmentClient('');
  const app: App = {
    state: tools.initialState(),
    sessionId: null,
    view: null,
    image: null,
    modelSize: 0,
    lastResponse: null,
  };

  const queue = new SubmitQueue(
    (doc) => {
      if (!app.sessionId) return Promise.reject(new Error('no session'));
      return client.submitPrompts(app.sessionId, doc);
    },
    (resp) => {
      app.lastResponse = resp;
      app.state = { ...app.state, lastMask: resp.mask_rle };
      latency.textContent = `${resp.decode_ms.toFixed(1)} ms`;
      iouReadout.textContent = resp.iou === null ? '-' : resp.iou.toFixed(4);
      banner.hidden = true;
      redraw();
    },
    (err) => {
      // keep the last good overlay; surface the failure without blocking
      banner.textContent = String(err);
      banner.hidden = false;
    },
  );

  function sync(): void {
    if (!app.sessionId) return;
    queue.push(tools.serializePrompts(app.state));
  }

  function redraw(): void {
    if (!app.image || !app.view) return;
    const v = app.view;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(app.image, v.offsetX, v.offsetY, v.imageWidth * v.scale, v.imageHeight * v.scale);
    if (app.lastResponse) {
      const rle = app.lastResponse.mask_rle;
      const [h, w] = rle.size;
      const pixels = maskToOverlay(decodeRle(rle), OVERLAY_COLOR, app.state.overlayOpacity);
      const overlay = new OffscreenCanvas(w, h);
      const octx = overlay.getContext('2d')!;
      const imageData = octx.createImageData(w, h);
      imageData.data.set(pixels);
      octx.putImageData(imageData, 0, 0);
      ctx.imageSmoothingEnabled = false;
      // mask is in model space; stretch it over the displayed image
      ctx.drawImage(overlay, v.offsetX, v.offsetY, v.imageWidth * v.scale, v.imageHeight * v.scale);
    }
    drawMarkers();
  }

  function drawMarkers(): void {
    if (!app.view) return;
    const v = app.view;
    const toCanvas = (r: number, c: number): [number, number] => [
      v.offsetX + (c + 0.5) * v.scale,
      v.offsetY + (r + 0.5) * v.scale,
    ];
    for (const entry of app.state.entries) {
      if (entry.kind === 'click') {
        const [x, y] = toCanvas(entry.click.row, entry.click.col);
        ctx.beginPath();
        ctx.arc(x, y, 5, 0, Math.PI * 2);
        ctx.fillStyle = entry.click.polarity === 'positive' ? '#2ecc71' : '#e74c3c';
        ctx.fill();
      } else if (entry.kind === 'box') {
        const [x0, y0] = toCanvas(entry.box.r0, entry.box.c0);
        const [x1, y1] = toCanvas(entry.box.r1, entry.box.c1);
        ctx.strokeStyle = '#e74c3c';
        ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
        // the four corner markers mirror the four-negative-click encoding
        for (const [x, y] of [[x0, y0], [x0, y1], [x1, y0], [x1, y1]] as [number, number][]) {
          ctx.beginPath();
          ctx.arc(x, y, 4, 0, Math.PI * 2);
          ctx.fillStyle = '#e74c3c';
          ctx.fill();
        }
      } else if (entry.kind === 'scribble') {
        ctx.strokeStyle = entry.scribble.polarity === 'positive' ? '#2ecc71' : '#e74c3c';
        ctx.beginPath();
        entry.scribble.path.forEach(([r, c], i) => {
          const [x, y] = toCanvas(r, c);
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.stroke();
      } else {
        ctx.strokeStyle = '#e74c3c';
        ctx.beginPath();
        entry.vertices.forEach(([r, c], i) => {
          const [x, y] = toCanvas(r, c);
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.closePath();
        ctx.stroke();
      }
    }
    const ring = app.state.inProgress.polygonVertices;
    if (ring && ring.length > 0) {
      ctx.strokeStyle = '#f1c40f';
      ctx.beginPath();
      ring.forEach(([r, c], i) => {
        const [x, y] = toCanvas(r, c);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }
  }

  function pointFromEvent(ev: PointerEvent): [number, number] | null {
    if (!app.view) return null;
    const rect = canvas.getBoundingClientRect();
    return tools.canvasToImage(app.view, ev.clientX - rect.left, ev.clientY - rect.top);
  }

  let dragging = false;

  canvas.addEventListener('pointerdown', (ev) => {
    const point = pointFromEvent(ev);
    if (point === null) return;
    const tool = app.state.tool;
    if (tool === 'click+' || tool === 'click-') {
      const next = tools.applyClick(app.state, point);
      if (next) {
        app.state = next;
        redraw();
        sync();
      }
    } else if (tool === 'box') {
      app.state = tools.beginBox(app.state, point);
      dragging = true;
    } else if (tool === 'scribble+' || tool === 'scribble-') {
      app.state = tools.beginScribble(app.state, point);
      dragging = true;
    } else if (tool === 'polygon') {
      const ring = app.state.inProgress.polygonVertices ?? [];
      const first = ring[0];
      if (first && ring.length >= 3 && Math.hypot(first[0] - point[0], first[1] - point[1]) < 6) {
        const { state, committed } = tools.closePolygon(app.state);
        app.state = state;
        if (committed) sync();
      } else {
        app.state = tools.addPolygonVertex(app.state, point);
      }
      redraw();
    }
  });

  canvas.addEventListener('pointermove', (ev) => {
    if (!dragging) return;
    const point = pointFromEvent(ev);
    if (point === null) return;
    if (app.state.tool === 'box') {
      app.state = tools.dragBox(app.state, point);
    } else {
      app.state = tools.extendScribble(app.state, point);
    }
  });

  canvas.addEventListener('pointerup', () => {
    if (!dragging) return;
    dragging = false;
    const before = app.state.entries.length;
    if (app.state.tool === 'box') {
      app.state = tools.endBox(app.state);
    } else if (app.state.tool === 'scribble+' || app.state.tool === 'scribble-') {
      app.state = tools.endScribble(app.state);
    }
    redraw();
    if (app.state.entries.length > before) sync();  // submit on gesture completion
  });

  canvas.addEventListener('dblclick', () => {
    if (app.state.tool === 'polygon') {
      const { state, committed } = tools.closePolygon(app.state);
      app.state = state;
      if (committed) sync();
      else if ((app.state.inProgress.polygonVertices ?? []).length > 0) {
        banner.textContent = 'polygon needs at least 3 vertices';
        banner.hidden = false;
      }
      redraw();
    }
  });

  for (const tool of TOOLS) {
    el<HTMLButtonElement>(`tool-${tool}`).addEventListener('click', () => {
      app.state = tools.setTool(app.state, tool);
      for (const t of TOOLS) {
        el(`tool-${t}`).classList.toggle('active', t === tool);
      }
    });
  }

  el<HTMLButtonElement>('undo').addEventListener('click', () => {
    app.state = tools.undo(app.state);
    redraw();
    sync();
  });
  el<HTMLButtonElement>('redo').addEventListener('click', () => {
    app.state = tools.redo(app.state);
    redraw();
    sync();
  });
  el<HTMLButtonElement>('clear').addEventListener('click', () => {
    app.state = { ...app.state, entries: [], redoStack: [], inProgress: {}, lastMask: null };
    app.lastResponse = null;
    redraw();
    sync();
  });

  el<HTMLInputElement>('opacity').addEventListener('input', (ev) => {
    app.state = { ...app.state, overlayOpacity: Number((ev.target as HTMLInputElement).value) };
    redraw();
  });

  el<HTMLInputElement>('mask-feedback').addEventListener('change', (ev) => {
    app.state = { ...app.state, maskFeedback: (ev.target as HTMLInputElement).checked };
  });

  el<HTMLInputElement>('image-file').addEventListener('change', async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    status.textContent = 'encoding...';
    try {
      const info = await client.createSession(file);
      app.sessionId = info.session_id;
      app.modelSize = info.model_size;
      app.state = tools.initialState();
      app.lastResponse = null;
      const image = new Image();
      image.onload = () => {
        app.image = image;
        const scale = Math.min(canvas.width / image.width, canvas.height / image.height);
        app.view = {
          scale,
          offsetX: (canvas.width - image.width * scale) / 2,
          offsetY: (canvas.height - image.height * scale) / 2,
          imageWidth: image.width,
          imageHeight: image.height,
        };
        redraw();
      };
      image.src = URL.createObjectURL(file);
      status.textContent = `session ${info.session_id.slice(0, 8)} (encode ${info.encode_ms.toFixed(0)} ms)`;
    } catch (err) {
      status.textContent = 'upload failed';
      banner.textContent = String(err);
      banner.hidden = false;
    }
  });

  el<HTMLInputElement>('gt-file').addEventListener('change', async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file || !app.sessionId) return;
    // threshold the uploaded PNG into a binary mask in model space
    const bitmap = await createImageBitmap(file);
    const size = app.modelSize;
    const work = new OffscreenCanvas(size, size);
    const wctx = work.getContext('2d')!;
    wctx.drawImage(bitmap, 0, 0, size, size);
    const data = wctx.getImageData(0, 0, size, size).data;
    const mask = new Uint8Array(size * size);
    for (let i = 0; i < mask.length; i++) {
      mask[i] = data[i * 4] > 127 ? 1 : 0;
    }
    try {
      await client.putGroundTruth(app.sessionId, encodeRle(mask, size, size));
      banner.hidden = true;
    } catch (err) {
      banner.textContent = String(err);
      banner.hidden = false;
    }
  });

  client
    .health()
    .then((h) => {
      status.textContent = `model ${h.model_fingerprint} ready (${h.input_size}px)`;
    })
    .catch(() => {
      status.textContent = 'service unreachable';
    });
}

startApp();
