// Browser entry point: canvas editing surface, condition panel, job progress,
// and the iterate loop (result becomes the next session's base image).

import { ApiClient } from './apiClient.js';
import { CanvasDocument } from './canvas.js';
import { buildEditRequest, canSubmit, initialPanelState, type EditPanelState } from './editRequest.js';
import { ProgressLog } from './progress.js';
import type { Point } from './types.js';

const CANVAS_SIZE = 64;
const DISPLAY_SCALE = 6;

type Tool = 'sketch' | 'mask' | 'pan';

interface AppState {
  api: ApiClient;
  doc: CanvasDocument;
  panel: EditPanelState;
  tool: Tool;
  sessionId: string | null;
  sessionReady: boolean;
  activeJob: string | null;
  queuedRequests: Array<Record<string, unknown>>;
  history: Array<{ job: string; imageUrl: string }>;
  progress: ProgressLog;
}

const state: AppState = {
  api: new ApiClient(''),
  doc: new CanvasDocument(CANVAS_SIZE, CANVAS_SIZE),
  panel: structuredClone(initialPanelState),
  tool: 'sketch',
  sessionId: null,
  sessionReady: false,
  activeJob: null,
  queuedRequests: [],
  history: [],
  progress: new ProgressLog(),
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setupDom(): void {
  document.body.innerHTML = `
    <header><h1>hairblend editor</h1></header>
    <main>
      <section id="canvas-pane">
        <canvas id="editor" width="${CANVAS_SIZE * DISPLAY_SCALE}" height="${CANVAS_SIZE * DISPLAY_SCALE}"></canvas>
        <div id="toolbar">
          <label>image <input type="file" id="upload" accept="image/png"></label>
          <button id="tool-sketch" class="tool active">sketch</button>
          <button id="tool-mask" class="tool">mask</button>
          <button id="undo">undo</button>
          <button id="clear-strokes">clear strokes</button>
        </div>
      </section>
      <section id="panel-pane">
        <fieldset>
          <legend>hairstyle</legend>
          <select id="hairstyle-mode">
            <option value="none">none</option>
            <option value="text">text</option>
            <option value="reference">reference image</option>
          </select>
          <input id="hairstyle-text" placeholder="e.g. curly bob" hidden>
          <input id="hairstyle-ref" type="file" accept="image/png" hidden>
          <label id="sketch-toggle-label"><input type="checkbox" id="include-sketch"> apply sketch strokes</label>
          <label><input type="checkbox" id="use-shape-mask"> painted mask constrains hair shape</label>
        </fieldset>
        <fieldset>
          <legend>hair color</legend>
          <select id="color-mode">
            <option value="none">none</option>
            <option value="text">text</option>
            <option value="reference">reference image</option>
            <option value="rgb">color picker</option>
          </select>
          <input id="color-text" placeholder="e.g. auburn" hidden>
          <input id="color-ref" type="file" accept="image/png" hidden>
          <input id="color-rgb" type="color" value="#38422f" hidden>
          <label><input type="checkbox" id="use-color-mask"> painted mask limits recolor area</label>
        </fieldset>
        <button id="submit" disabled>edit</button>
        <fieldset>
          <legend>progress</legend>
          <ul id="progress-list"></ul>
        </fieldset>
        <fieldset>
          <legend>result</legend>
          <img id="result" width="${CANVAS_SIZE * DISPLAY_SCALE}" hidden>
          <button id="apply-result" hidden>use as base</button>
        </fieldset>
        <fieldset>
          <legend>history</legend>
          <ul id="history-list"></ul>
        </fieldset>
      </section>
    </main>
  `;
}

function hexToRgb(hex: string): [number, number, number] {
  const v = parseInt(hex.slice(1), 16);
  return [((v >> 16) & 255) / 255, ((v >> 8) & 255) / 255, (v & 255) / 255];
}

function render(): void {
  const canvas = el<HTMLCanvasElement>('editor');
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const base = (render as unknown as { baseImage?: HTMLImageElement }).baseImage;
  if (base) ctx.drawImage(base, 0, 0, canvas.width, canvas.height);
  // mask overlay
  ctx.fillStyle = 'rgba(80, 160, 255, 0.4)';
  const { mask } = state.doc;
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.data[y * mask.width + x]) {
        ctx.fillRect(x * DISPLAY_SCALE, y * DISPLAY_SCALE, DISPLAY_SCALE, DISPLAY_SCALE);
      }
    }
  }
  // strokes
  ctx.strokeStyle = '#ff5050';
  ctx.lineCap = 'round';
  for (const stroke of state.doc.strokes) {
    ctx.lineWidth = stroke.width * DISPLAY_SCALE * 0.6;
    ctx.beginPath();
    stroke.points.forEach(([x, y], i) => {
      const px = (x + 0.5) * DISPLAY_SCALE;
      const py = (y + 0.5) * DISPLAY_SCALE;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  el<HTMLButtonElement>('submit').disabled =
    !state.sessionReady || !canSubmit(state.panel, state.doc);
}

function canvasPoint(event: MouseEvent): Point {
  const canvas = el<HTMLCanvasElement>('editor');
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * CANVAS_SIZE,
    y: ((event.clientY - rect.top) / rect.height) * CANVAS_SIZE,
  };
}

function wireCanvas(): void {
  const canvas = el<HTMLCanvasElement>('editor');
  let trace: Point[] | null = null;
  canvas.addEventListener('mousedown', (e) => {
    trace = [canvasPoint(e)];
  });
  canvas.addEventListener('mousemove', (e) => {
    if (!trace) return;
    trace.push(canvasPoint(e));
    if (state.tool === 'mask') {
      state.doc.paintMask([canvasPoint(e)], 2.5);
      render();
    }
  });
  window.addEventListener('mouseup', () => {
    if (!trace) return;
    if (state.tool === 'sketch') {
      state.doc.drawStroke(trace, 2);
    } else if (state.tool === 'mask') {
      state.doc.paintMask(trace, 2.5);
    }
    trace = null;
    render();
  });
}

async function uploadAsSession(file: Blob, role: 'source' | 'reference'): Promise<string> {
  const id = await state.api.createSession(file, role);
  if (role === 'source') {
    state.sessionId = id;
    state.sessionReady = false;
    render();
    await state.api.waitForPrecompute(id);
    state.sessionReady = true;
    render();
  }
  return id;
}

function wirePanel(): void {
  const hairstyleMode = el<HTMLSelectElement>('hairstyle-mode');
  hairstyleMode.addEventListener('change', () => {
    el('hairstyle-text').hidden = hairstyleMode.value !== 'text';
    el('hairstyle-ref').hidden = hairstyleMode.value !== 'reference';
    if (hairstyleMode.value === 'none') state.panel.hairstyle = { mode: 'none' };
    render();
  });
  el<HTMLInputElement>('hairstyle-text').addEventListener('input', (e) => {
    state.panel.hairstyle = { mode: 'text', text: (e.target as HTMLInputElement).value };
    render();
  });
  el<HTMLInputElement>('hairstyle-ref').addEventListener('change', async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const session = await uploadAsSession(file, 'reference');
    state.panel.hairstyle = { mode: 'reference', session };
    render();
  });
  const colorMode = el<HTMLSelectElement>('color-mode');
  colorMode.addEventListener('change', () => {
    el('color-text').hidden = colorMode.value !== 'text';
    el('color-ref').hidden = colorMode.value !== 'reference';
    el('color-rgb').hidden = colorMode.value !== 'rgb';
    if (colorMode.value === 'none') state.panel.color = { mode: 'none' };
    if (colorMode.value === 'rgb') {
      state.panel.color = { mode: 'rgb', rgb: hexToRgb(el<HTMLInputElement>('color-rgb').value) };
    }
    render();
  });
  el<HTMLInputElement>('color-text').addEventListener('input', (e) => {
    state.panel.color = { mode: 'text', text: (e.target as HTMLInputElement).value };
    render();
  });
  el<HTMLInputElement>('color-rgb').addEventListener('input', (e) => {
    state.panel.color = { mode: 'rgb', rgb: hexToRgb((e.target as HTMLInputElement).value) };
    render();
  });
  el<HTMLInputElement>('color-ref').addEventListener('change', async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const session = await uploadAsSession(file, 'reference');
    state.panel.color = { mode: 'reference', session };
    render();
  });
  el<HTMLInputElement>('include-sketch').addEventListener('change', (e) => {
    state.panel.includeSketch = (e.target as HTMLInputElement).checked;
    render();
  });
  el<HTMLInputElement>('use-shape-mask').addEventListener('change', (e) => {
    state.panel.useShapeMask = (e.target as HTMLInputElement).checked;
  });
  el<HTMLInputElement>('use-color-mask').addEventListener('change', (e) => {
    state.panel.useColorMask = (e.target as HTMLInputElement).checked;
  });
  for (const tool of ['sketch', 'mask'] as const) {
    el(`tool-${tool}`).addEventListener('click', () => {
      state.tool = tool;
      document.querySelectorAll('.tool').forEach((b) => b.classList.remove('active'));
      el(`tool-${tool}`).classList.add('active');
    });
  }
  el('undo').addEventListener('click', () => {
    state.doc.undo();
    render();
  });
  el('clear-strokes').addEventListener('click', () => {
    state.doc.clearStrokes();
    render();
  });
  el<HTMLInputElement>('upload').addEventListener('change', async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    await setBaseImage(URL.createObjectURL(file));
    await uploadAsSession(file, 'source');
  });
  el('submit').addEventListener('click', submit);
  el('apply-result').addEventListener('click', applyResultAsBase);
}

async function setBaseImage(url: string): Promise<void> {
  const img = new Image();
  await new Promise((resolve, reject) => {
    img.onload = resolve;
    img.onerror = reject;
    img.src = url;
  });
  (render as unknown as { baseImage?: HTMLImageElement }).baseImage = img;
  render();
}

async function submit(): Promise<void> {
  if (!state.sessionId || !state.sessionReady) return;
  const request = buildEditRequest(state.panel, state.doc);
  if (state.activeJob) {
    // one in-flight job per session; queue the rest client-side
    state.queuedRequests.push(request as Record<string, unknown>);
    return;
  }
  const job = await state.api.submitEdit(state.sessionId, request);
  state.activeJob = job;
  state.progress = new ProgressLog();
  const list = el<HTMLUListElement>('progress-list');
  list.innerHTML = '';
  await state.api.streamEvents(job, (event) => {
    state.progress.ingest(event);
    const item = document.createElement('li');
    item.textContent = state.progress.rendered().slice(-1)[0] ?? '';
    list.appendChild(item);
    list.scrollTop = list.scrollHeight;
  });
  state.activeJob = null;
  if (state.progress.terminal === 'done') {
    const url = state.api.resultUrl(job);
    const result = el<HTMLImageElement>('result');
    result.src = `${url}?t=${Date.now()}`;
    result.hidden = false;
    el('apply-result').hidden = false;
    state.history.push({ job, imageUrl: url });
    const entry = document.createElement('li');
    entry.textContent = `job ${job.slice(0, 8)}`;
    entry.addEventListener('click', () => void setBaseImage(url));
    el('history-list').appendChild(entry);
  }
  const next = state.queuedRequests.shift();
  if (next) {
    const jobId = await state.api.submitEdit(state.sessionId, next);
    state.activeJob = jobId;
  }
}

async function applyResultAsBase(): Promise<void> {
  const last = state.history[state.history.length - 1];
  if (!last) return;
  const resp = await fetch(last.imageUrl);
  const blob = await resp.blob();
  state.doc = CanvasDocument.fromResult(CANVAS_SIZE, CANVAS_SIZE, last.imageUrl);
  await setBaseImage(URL.createObjectURL(blob));
  await uploadAsSession(blob, 'source');
}

setupDom();
wireCanvas();
wirePanel();
render();
