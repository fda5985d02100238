/** DOM bootstrap: sample navigation, canvas interaction, save handling. */

import { HttpApiClient, type SampleSummary } from "./api.js";
import { composeView } from "./render.js";
import { AnnotationSession } from "./session.js";

const api = new HttpApiClient("");

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const instructionEl = document.getElementById("instruction")!;
const statusEl = document.getElementById("status")!;
const titleEl = document.getElementById("sample-title")!;
const saveButton = document.getElementById("save") as HTMLButtonElement;
const prevButton = document.getElementById("prev") as HTMLButtonElement;
const nextButton = document.getElementById("next") as HTMLButtonElement;

let samples: SampleSummary[] = [];
let index = 0;
let session: AnnotationSession | null = null;
let baseRgba: Uint8ClampedArray | null = null;

function setStatus(text: string, isError = false): void {
  statusEl.textContent = text;
  statusEl.className = isError ? "error" : "";
}

function redraw(): void {
  if (!session || !baseRgba) return;
  const view = composeView(
    baseRgba,
    session.labels,
    session.width,
    session.height,
    new Set(session.selectedIds()),
  );
  const pixels = new Uint8ClampedArray(view); // concrete ArrayBuffer backing for ImageData
  ctx.putImageData(new ImageData(pixels, session.width, session.height), 0, 0);
  const mark = session.dirty ? " (unsaved)" : "";
  titleEl.textContent = `${session.id} [${index + 1}/${samples.length}]${mark}`;
}

async function loadBaseImage(pngB64: string): Promise<Uint8ClampedArray> {
  const img = new Image();
  await new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error("image decode failed"));
    img.src = `data:image/png;base64,${pngB64}`;
  });
  const scratch = document.createElement("canvas");
  scratch.width = img.naturalWidth;
  scratch.height = img.naturalHeight;
  const sctx = scratch.getContext("2d")!;
  sctx.drawImage(img, 0, 0);
  return sctx.getImageData(0, 0, scratch.width, scratch.height).data;
}

async function openSample(i: number): Promise<void> {
  if (samples.length === 0) return;
  if (session?.dirty && !window.confirm("Discard unsaved changes?")) return;
  index = (i + samples.length) % samples.length;
  setStatus("loading...");
  try {
    session = await AnnotationSession.load(api, samples[index].id);
    baseRgba = await loadBaseImage(session.imagePng);
    canvas.width = session.width;
    canvas.height = session.height;
    instructionEl.textContent = session.instruction;
    redraw();
    setStatus(`${session.selectedIds().length} superpixels selected`);
  } catch (err) {
    setStatus(`load failed: ${(err as Error).message}`, true);
  }
}

canvas.addEventListener("click", (event) => {
  if (!session) return;
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * canvas.width);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * canvas.height);
  const id = session.toggleAt(x, y);
  if (id !== null) {
    redraw();
    setStatus(`${session.selectedIds().length} superpixels selected`);
  }
});

async function save(): Promise<void> {
  if (!session) return;
  try {
    await session.save(api);
    samples[index].n_selected = session.selectedIds().length;
    redraw();
    setStatus("saved");
  } catch (err) {
    setStatus(`save failed: ${(err as Error).message}`, true);
  }
}

saveButton.addEventListener("click", () => void save());
nextButton.addEventListener("click", () => void openSample(index + 1));
prevButton.addEventListener("click", () => void openSample(index - 1));

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key === "n") void openSample(index + 1);
  else if (event.key === "p") void openSample(index - 1);
  else if (event.key === "s") void save();
});

window.addEventListener("beforeunload", (event) => {
  if (session?.dirty) {
    event.preventDefault();
  }
});

async function boot(): Promise<void> {
  try {
    samples = await api.listSamples();
    if (samples.length === 0) {
      setStatus("manifest has no samples", true);
      return;
    }
    await openSample(0);
  } catch (err) {
    setStatus(`cannot reach the annotation API: ${(err as Error).message}`, true);
  }
}

void boot();
