/**
 * Canvas editor: layered rendering (image, label tint, mask hatch, lock
 * shade), pointer-driven painting, and the submit / undo / panorama loop.
 * At most one edit request is in flight; submit is disabled while pending.
 */

import { EditorClient, ServerError } from "./api.js";
import { BrushState, ClassInfo, EditSession, paint, Point, undo } from "./session.js";

export class Editor {
  session: EditSession;
  brush: BrushState = { classId: 0, radius: 6, mode: "label" };
  classes: ClassInfo[] = [];
  pending = false;
  compare = false;       // hold to show the pre-edit image
  private baseline: Uint8Array;
  private stroke: Point[] = [];
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private status: HTMLElement;
  private submitBtn: HTMLButtonElement;

  constructor(private root: HTMLElement, private client: EditorClient, session: EditSession) {
    this.session = session;
    this.baseline = session.image.slice();
    this.canvas = document.createElement("canvas");
    this.ctx = this.canvas.getContext("2d")!;
    this.status = document.createElement("div");
    this.submitBtn = document.createElement("button");
    this.build();
    this.render();
  }

  async init(): Promise<void> {
    this.classes = await this.client.getClasses();
    this.brush.classId = this.classes[0]?.id ?? 0;
    this.buildPalette();
    this.render();
  }

  private build(): void {
    this.root.classList.add("spmedit-editor");
    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";

    for (const mode of ["label", "mask", "erase"] as const) {
      const btn = document.createElement("button");
      btn.textContent = mode;
      btn.dataset.mode = mode;
      btn.onclick = () => {
        this.brush.mode = mode;
        this.refreshToolbar();
      };
      toolbar.appendChild(btn);
    }

    const radius = document.createElement("input");
    radius.type = "range";
    radius.min = "1";
    radius.max = "32";
    radius.value = String(this.brush.radius);
    radius.oninput = () => {
      this.brush.radius = Math.max(1, Number(radius.value));
    };
    toolbar.appendChild(radius);

    const undoBtn = document.createElement("button");
    undoBtn.textContent = "undo";
    undoBtn.onclick = () => {
      this.session = undo(this.session);
      this.render();
    };
    toolbar.appendChild(undoBtn);

    this.submitBtn.textContent = "apply edit";
    this.submitBtn.onclick = () => void this.submit();
    toolbar.appendChild(this.submitBtn);

    const panoBtn = document.createElement("button");
    panoBtn.textContent = "extend right";
    panoBtn.onclick = () => void this.panoramaStep();
    toolbar.appendChild(panoBtn);

    const compareBtn = document.createElement("button");
    compareBtn.textContent = "hold to compare";
    compareBtn.onpointerdown = () => {
      this.compare = true;
      this.render();
    };
    compareBtn.onpointerup = () => {
      this.compare = false;
      this.render();
    };
    toolbar.appendChild(compareBtn);

    this.root.appendChild(toolbar);
    const palette = document.createElement("div");
    palette.className = "palette";
    this.root.appendChild(palette);
    this.root.appendChild(this.canvas);
    this.status.className = "status";
    this.root.appendChild(this.status);

    this.canvas.onpointerdown = (ev) => {
      this.stroke = [this.canvasPoint(ev)];
      this.canvas.setPointerCapture(ev.pointerId);
    };
    this.canvas.onpointermove = (ev) => {
      if (this.stroke.length === 0) return;
      this.stroke.push(this.canvasPoint(ev));
      this.previewStroke();
    };
    this.canvas.onpointerup = () => {
      if (this.stroke.length > 0) {
        this.session = paint(this.session, this.stroke, this.brush);
        this.stroke = [];
        this.render();
      }
    };
    this.refreshToolbar();
  }

  private buildPalette(): void {
    const palette = this.root.querySelector(".palette")!;
    palette.innerHTML = "";
    for (const cls of this.classes) {
      const btn = document.createElement("button");
      btn.textContent = cls.name;
      btn.style.background = `rgb(${cls.color.join(",")})`;
      btn.onclick = () => {
        this.brush.classId = cls.id;
        this.brush.mode = "label";
        this.refreshToolbar();
      };
      palette.appendChild(btn);
    }
  }

  private refreshToolbar(): void {
    this.root.querySelectorAll<HTMLButtonElement>(".toolbar button[data-mode]").forEach((btn) => {
      btn.classList.toggle("active", btn.dataset.mode === this.brush.mode);
    });
  }

  private canvasPoint(ev: PointerEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * this.session.width,
      y: ((ev.clientY - rect.top) / rect.height) * this.session.height,
    };
  }

  private previewStroke(): void {
    const preview = paint(this.session, this.stroke, this.brush);
    this.draw(preview);
  }

  render(): void {
    this.draw(this.session);
    this.submitBtn.disabled = this.pending;
  }

  private draw(session: EditSession): void {
    const { width, height } = session;
    this.canvas.width = width;
    this.canvas.height = height;
    const img = this.ctx.createImageData(width, height);
    const source = this.compare ? this.baseline : session.image;
    const byId = new Map(this.classes.map((c) => [c.id, c.color] as const));
    for (let i = 0; i < width * height; i++) {
      let r = source[i * 3];
      let g = source[i * 3 + 1];
      let b = source[i * 3 + 2];
      if (!this.compare && session.mask[i]) {
        const color = byId.get(session.labels[i]) ?? [255, 255, 255];
        r = (r + 2 * color[0]) / 3;
        g = (g + 2 * color[1]) / 3;
        b = (b + 2 * color[2]) / 3;
      }
      if (!this.compare && session.lockedWidth && i % width < session.lockedWidth) {
        r = r * 0.85;
        g = g * 0.85;
        b = b * 0.85;
      }
      img.data[i * 4] = r;
      img.data[i * 4 + 1] = g;
      img.data[i * 4 + 2] = b;
      img.data[i * 4 + 3] = 255;
    }
    this.ctx.putImageData(img, 0, 0);
  }

  async submit(): Promise<void> {
    if (this.pending) return;
    this.pending = true;
    this.render();
    this.status.textContent = "editing…";
    try {
      this.baseline = this.session.image.slice();
      this.session = await this.client.submit(this.session);
      this.status.textContent = `edit #${this.session.history.length} applied`;
    } catch (err) {
      this.status.textContent = err instanceof ServerError
        ? `server rejected the edit: ${err.reason}`
        : `edit failed: ${err}`;
    } finally {
      this.pending = false;
      this.render();
    }
  }

  async panoramaStep(): Promise<void> {
    if (this.pending) return;
    this.pending = true;
    this.render();
    this.status.textContent = "extending…";
    try {
      this.baseline = this.session.image.slice();
      this.session = await this.client.panoramaStep(this.session);
      this.status.textContent = `canvas is now ${this.session.width}px wide`;
    } catch (err) {
      this.status.textContent = `panorama step failed: ${err}`;
    } finally {
      this.pending = false;
      this.render();
    }
  }
}
