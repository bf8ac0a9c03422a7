/**
 * Client for the editing service. All model computation is server-side; this
 * wraps the four endpoints and decodes their PNG responses.
 */

import { decodePng, RawImage } from "./png.js";
import { ClassInfo, EditSession, applyPanorama, applyResult, serializeImage,
         serializeLabels, serializeMask } from "./session.js";

export class ServerError extends Error {
  constructor(public status: number, public reason: string, public incident?: string) {
    super(`server ${status}: ${reason}`);
  }
}

async function raiseFor(resp: Response): Promise<never> {
  let reason = resp.statusText;
  let incident: string | undefined;
  try {
    const body = await resp.json();
    reason = body.error ?? reason;
    incident = body.incident;
  } catch {
    /* non-JSON error body */
  }
  throw new ServerError(resp.status, reason, incident);
}

export class EditorClient {
  private panoramaSession: string | null = null;

  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  async getClasses(): Promise<ClassInfo[]> {
    const resp = await this.fetchFn(`${this.baseUrl}/classes`);
    if (!resp.ok) await raiseFor(resp);
    return resp.json();
  }

  async getCheckpoints(): Promise<{ checkpoints: string[]; default: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/checkpoints`);
    if (!resp.ok) await raiseFor(resp);
    return resp.json();
  }

  /** POST /edit with the session's layers; returns the updated session with
   * the result appended to the history. */
  async submit(session: EditSession): Promise<EditSession> {
    const form = new FormData();
    form.append("image", new Blob([serializeImage(session) as BlobPart], { type: "image/png" }), "image.png");
    form.append("mask", new Blob([serializeMask(session) as BlobPart], { type: "image/png" }), "mask.png");
    form.append("labels", new Blob([serializeLabels(session) as BlobPart], { type: "image/png" }), "labels.png");
    const resp = await this.fetchFn(`${this.baseUrl}/edit`, { method: "POST", body: form });
    if (!resp.ok) await raiseFor(resp);
    const png = new Uint8Array(await resp.arrayBuffer());
    const pixels = await decodePng(png);
    return applyResult(session, png, pixels);
  }

  async panoramaStart(session: EditSession): Promise<void> {
    const form = new FormData();
    form.append("image", new Blob([serializeImage(session) as BlobPart], { type: "image/png" }), "image.png");
    form.append("labels", new Blob([serializeLabels(session) as BlobPart], { type: "image/png" }), "labels.png");
    const resp = await this.fetchFn(`${this.baseUrl}/panorama/start`, { method: "POST", body: form });
    if (!resp.ok) await raiseFor(resp);
    const body = await resp.json();
    this.panoramaSession = body.session;
  }

  /** One rightward extension step; the canvas widens by the server's
   * half-width rule and previously committed pixels render locked. */
  async panoramaStep(session: EditSession): Promise<EditSession> {
    if (!this.panoramaSession) {
      await this.panoramaStart(session);
    }
    const resp = await this.fetchFn(`${this.baseUrl}/panorama/step`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ session: this.panoramaSession }),
    });
    if (!resp.ok) await raiseFor(resp);
    const png = new Uint8Array(await resp.arrayBuffer());
    const canvas: RawImage = await decodePng(png);
    return applyPanorama(session, canvas);
  }
}
