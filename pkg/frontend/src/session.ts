/** Annotation session state: the selected superpixel set plus dirty tracking. */

import type { ApiClient, SampleDoc } from "./api.js";
import { base64ToBytes, decodeGrayPng } from "./png16.js";

export class AnnotationSession {
  readonly id: string;
  readonly instruction: string;
  readonly width: number;
  readonly height: number;
  readonly superpixelCount: number;
  /** one superpixel id per pixel, row-major */
  readonly labels: Uint16Array;
  /** base64 RGB PNG for the <img>/canvas layer */
  readonly imagePng: string;

  private selected: Set<number>;
  private dirtyFlag = false;

  private constructor(doc: SampleDoc, labels: Uint16Array) {
    this.id = doc.id;
    this.instruction = doc.instruction;
    this.width = doc.width;
    this.height = doc.height;
    this.superpixelCount = doc.L;
    this.labels = labels;
    this.imagePng = doc.image_png;
    this.selected = new Set(doc.gt_superpixels);
    for (const sid of this.selected) {
      if (sid < 0 || sid >= doc.L) {
        throw new RangeError(`sample carries superpixel id ${sid} outside [0, ${doc.L})`);
      }
    }
  }

  /** Fetch one sample and decode its label raster. Dirty starts false. */
  static async load(api: ApiClient, id: string): Promise<AnnotationSession> {
    const doc = await api.getSample(id);
    const raster = await decodeGrayPng(base64ToBytes(doc.labels_png));
    if (raster.width !== doc.width || raster.height !== doc.height) {
      throw new RangeError(
        `label raster ${raster.width}x${raster.height} does not match sample ${doc.width}x${doc.height}`,
      );
    }
    return new AnnotationSession(doc, raster.data);
  }

  get dirty(): boolean {
    return this.dirtyFlag;
  }

  /** Sorted snapshot of the selected superpixel ids. */
  selectedIds(): number[] {
    return [...this.selected].sort((a, b) => a - b);
  }

  isSelected(id: number): boolean {
    return this.selected.has(id);
  }

  labelAt(x: number, y: number): number | null {
    if (!Number.isInteger(x) || !Number.isInteger(y)) return null;
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return null;
    return this.labels[y * this.width + x];
  }

  /**
   * Toggle the superpixel under an image coordinate. Clicks outside the
   * canvas are no-ops; a real toggle marks the session dirty. Toggling the
   * same spot twice restores the original set (but the session stays dirty).
   */
  toggleAt(x: number, y: number): number | null {
    const id = this.labelAt(x, y);
    if (id === null) return null;
    if (this.selected.has(id)) {
      this.selected.delete(id);
    } else {
      this.selected.add(id);
    }
    this.dirtyFlag = true;
    return id;
  }

  /**
   * Persist the selection. An empty set is rejected locally (the benchmark
   * forbids empty ground truth); a failed request keeps the local state and
   * the dirty flag, and rethrows for the UI to surface.
   */
  async save(api: ApiClient): Promise<void> {
    const ids = this.selectedIds();
    if (ids.length === 0) {
      throw new Error("cannot save an empty region: select at least one superpixel");
    }
    await api.putLabels(this.id, ids);
    this.dirtyFlag = false;
  }
}
