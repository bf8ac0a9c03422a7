/**
 * Edit session model: the base image plus mask and label layers, a history of
 * submitted (request, result) pairs, and snapshot-based undo.
 *
 * Painting a label also marks the mask (editing a label implies editing that
 * region); erasing clears both layers under the stroke.
 */

import { encodePng, RawImage } from "./png.js";

export interface ClassInfo {
  id: number;
  name: string;
  color: [number, number, number];
}

export type BrushMode = "mask" | "label" | "erase";

export interface BrushState {
  classId: number;
  radius: number;
  mode: BrushMode;
}

export interface Point {
  x: number;
  y: number;
}

export interface HistoryEntry {
  request: { mask: Uint8Array; labels: Uint8Array };
  result: Uint8Array; // encoded PNG returned by the service
}

export interface EditSession {
  width: number;
  height: number;
  image: Uint8Array;          // RGB base image
  mask: Uint8Array;           // 0/1 per pixel
  labels: Uint8Array;         // class id per pixel (meaningful under the mask)
  history: HistoryEntry[];    // append-only
  lockedWidth: number;        // panorama: committed columns render locked
  undoStack: { mask: Uint8Array; labels: Uint8Array; image: Uint8Array; width: number }[];
}

export function createSession(image: RawImage): EditSession {
  if (image.channels !== 3) throw new Error("session needs an RGB base image");
  return {
    width: image.width,
    height: image.height,
    image: image.data.slice(),
    mask: new Uint8Array(image.width * image.height),
    labels: new Uint8Array(image.width * image.height),
    history: [],
    lockedWidth: 0,
    undoStack: [],
  };
}

export function validateBrush(brush: BrushState, classes: ClassInfo[]): void {
  if (brush.radius < 1) throw new Error(`brush radius must be >= 1, got ${brush.radius}`);
  if (brush.mode === "label" && !classes.some((c) => c.id === brush.classId)) {
    throw new Error(`class ${brush.classId} is not in the class list`);
  }
}

function paintDisc(layer: Uint8Array, width: number, height: number,
                   cx: number, cy: number, radius: number, value: number): void {
  const r2 = radius * radius;
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(height - 1, Math.ceil(cy + radius));
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(width - 1, Math.ceil(cx + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        layer[y * width + x] = value;
      }
    }
  }
}

function forEachStrokeStamp(stroke: Point[], radius: number,
                            stamp: (x: number, y: number) => void): void {
  if (stroke.length === 1) {
    stamp(stroke[0].x, stroke[0].y);
    return;
  }
  const step = Math.max(1, radius / 2);
  for (let i = 1; i < stroke.length; i++) {
    const a = stroke[i - 1];
    const b = stroke[i];
    const dist = Math.hypot(b.x - a.x, b.y - a.y);
    const n = Math.max(1, Math.ceil(dist / step));
    for (let k = 0; k <= n; k++) {
      stamp(a.x + ((b.x - a.x) * k) / n, a.y + ((b.y - a.y) * k) / n);
    }
  }
}

/** Apply one stroke; returns a new session (layers copied), pushing the
 * previous layers onto the undo stack. An empty stroke is a no-op. */
export function paint(session: EditSession, stroke: Point[], brush: BrushState): EditSession {
  if (stroke.length === 0) return session;
  if (brush.radius < 1) throw new Error("brush radius must be >= 1");
  const next: EditSession = {
    ...session,
    mask: session.mask.slice(),
    labels: session.labels.slice(),
    undoStack: [...session.undoStack, snapshot(session)],
  };
  const { width, height } = session;
  forEachStrokeStamp(stroke, brush.radius, (x, y) => {
    if (brush.mode === "erase") {
      paintDisc(next.mask, width, height, x, y, brush.radius, 0);
      paintDisc(next.labels, width, height, x, y, brush.radius, 0);
    } else if (brush.mode === "mask") {
      paintDisc(next.mask, width, height, x, y, brush.radius, 1);
    } else {
      paintDisc(next.mask, width, height, x, y, brush.radius, 1);
      paintDisc(next.labels, width, height, x, y, brush.radius, brush.classId);
    }
  });
  return next;
}

function snapshot(session: EditSession) {
  return {
    mask: session.mask.slice(),
    labels: session.labels.slice(),
    image: session.image.slice(),
    width: session.width,
  };
}

/** Restore the previous layer state exactly; no-op on an empty stack. */
export function undo(session: EditSession): EditSession {
  if (session.undoStack.length === 0) return session;
  const prev = session.undoStack[session.undoStack.length - 1];
  return {
    ...session,
    mask: prev.mask.slice(),
    labels: prev.labels.slice(),
    image: prev.image.slice(),
    width: prev.width,
    undoStack: session.undoStack.slice(0, -1),
  };
}

/** Mask layer as the 1-channel 0/255 PNG the service expects. */
export function serializeMask(session: EditSession): Uint8Array {
  const bytes = new Uint8Array(session.mask.length);
  for (let i = 0; i < bytes.length; i++) bytes[i] = session.mask[i] ? 255 : 0;
  return encodePng({ width: session.width, height: session.height, channels: 1, data: bytes });
}

/** Label layer as the 1-channel class-index PNG the service expects. */
export function serializeLabels(session: EditSession): Uint8Array {
  return encodePng({
    width: session.width,
    height: session.height,
    channels: 1,
    data: session.labels.slice(),
  });
}

export function serializeImage(session: EditSession): Uint8Array {
  return encodePng({
    width: session.width,
    height: session.height,
    channels: 3,
    data: session.image.slice(),
  });
}

/** Append a submitted edit to the history and adopt the result pixels. */
export function applyResult(session: EditSession, resultPng: Uint8Array, pixels: RawImage): EditSession {
  if (pixels.width !== session.width || pixels.height !== session.height) {
    throw new Error("result dimensions do not match the session");
  }
  const rgb = pixels.channels === 3 ? pixels.data : stripAlpha(pixels);
  return {
    ...session,
    image: rgb.slice(),
    history: [
      ...session.history,
      { request: { mask: session.mask.slice(), labels: session.labels.slice() }, result: resultPng },
    ],
    undoStack: [...session.undoStack, snapshot(session)],
  };
}

/** Widen the canvas after a panorama step; previous columns become locked. */
export function applyPanorama(session: EditSession, canvas: RawImage): EditSession {
  if (canvas.height !== session.height || canvas.width <= session.width) {
    throw new Error(`panorama canvas must widen ${session.width}x${session.height}, got ${canvas.width}x${canvas.height}`);
  }
  const rgb = canvas.channels === 3 ? canvas.data : stripAlpha(canvas);
  const grow = canvas.width - session.width;
  const remap = (layer: Uint8Array) => {
    const out = new Uint8Array(canvas.width * canvas.height);
    for (let y = 0; y < session.height; y++) {
      out.set(layer.subarray(y * session.width, (y + 1) * session.width), y * canvas.width);
    }
    return out;
  };
  return {
    ...session,
    width: canvas.width,
    image: rgb.slice(),
    mask: remap(session.mask),
    labels: remap(session.labels),
    lockedWidth: session.width,
    undoStack: [...session.undoStack, snapshot(session)],
    history: session.history,
  };
}

function stripAlpha(image: RawImage): Uint8Array {
  const n = image.width * image.height;
  const out = new Uint8Array(n * 3);
  for (let i = 0; i < n; i++) {
    out[i * 3] = image.data[i * 4];
    out[i * 3 + 1] = image.data[i * 4 + 1];
    out[i * 3 + 2] = image.data[i * 4 + 2];
  }
  return out;
}
