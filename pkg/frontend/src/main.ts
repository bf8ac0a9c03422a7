/** Bootstrap: load an image file, start a session, mount the editor. */

import { EditorClient } from "./api.js";
import { Editor } from "./editor.js";
import { decodePng } from "./png.js";
import { createSession } from "./session.js";

const BASE_URL = (window as unknown as { SPMEDIT_URL?: string }).SPMEDIT_URL ?? "";

async function start(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  const picker = document.createElement("input");
  picker.type = "file";
  picker.accept = "image/png";
  picker.onchange = async () => {
    const file = picker.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    const image = await decodePng(bytes);
    const rgb = image.channels === 3 ? image : toRgb(image);
    root.innerHTML = "";
    const client = new EditorClient(BASE_URL);
    const editor = new Editor(root, client, createSession(rgb));
    await editor.init();
  };
  root.appendChild(picker);
}

function toRgb(image: { width: number; height: number; channels: number; data: Uint8Array }) {
  const n = image.width * image.height;
  const data = new Uint8Array(n * 3);
  for (let i = 0; i < n; i++) {
    if (image.channels === 4) {
      data[i * 3] = image.data[i * 4];
      data[i * 3 + 1] = image.data[i * 4 + 1];
      data[i * 3 + 2] = image.data[i * 4 + 2];
    } else {
      data[i * 3] = data[i * 3 + 1] = data[i * 3 + 2] = image.data[i];
    }
  }
  return { width: image.width, height: image.height, channels: 3 as const, data };
}

void start();
