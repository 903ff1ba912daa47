/** Review-session state: the loaded layout, optimistic local edits with a
 * pending list, undo/redo, and canonical correction payloads.
 *
 * The server resolves an edit batch against the layout it returned, so every
 * pending edit records its target in that original layout's coordinates even
 * while the display state drifts optimistically. Client-added regions have
 * no server-side identity and cannot be targeted by further edits until the
 * batch is submitted and the document reloaded.
 */

import type {
  AddedRegion,
  BBox,
  CorrectionPayload,
  EditAction,
  LayoutData,
  RegionClass,
  Target,
} from "./types.js";
import { isValidBBox, REGION_CLASSES } from "./types.js";

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export type EditResult = { ok: true } | { ok: false; error: string };

/** Display-side region: unlike the wire format, a top-level entry may carry
 * class "cell" transiently (an optimistic relabel the server will re-nest). */
interface DisplayRegion {
  class: RegionClass;
  bbox: BBox;
  score: number;
  n_rows?: number;
  n_cols?: number;
  cells?: { bbox: BBox; rows: number[]; cols: number[]; score: number }[];
}

interface Snapshot {
  regions: DisplayRegion[];
  regionOrigins: (Target | null)[];
  cellOrigins: (Target | null)[][];
  pending: EditAction[];
}

export class ReviewSession {
  readonly pageId: string;
  private readonly rawText: string;
  private regions: DisplayRegion[];
  /** per display region, its path in the server's layout (null = client-added) */
  private regionOrigins: (Target | null)[];
  /** per display region, per nested cell, its server path */
  private cellOrigins: (Target | null)[][];
  private pending: EditAction[] = [];
  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];
  selected: Target | null = null;
  transform: Transform = { scale: 1, offsetX: 0, offsetY: 0 };

  private constructor(pageId: string, rawText: string, regions: DisplayRegion[]) {
    this.pageId = pageId;
    this.rawText = rawText;
    this.regions = regions;
    this.regionOrigins = regions.map((_, i) => [i]);
    this.cellOrigins = regions.map((r, i) => (r.cells ?? []).map((_, j) => [i, j]));
  }

  /** Parse a fetched layout body, retaining the exact bytes. */
  static fromJson(text: string): ReviewSession {
    const data = JSON.parse(text) as LayoutData;
    if (typeof data.page_id !== "string" || !Array.isArray(data.regions)) {
      throw new Error("not a layout document");
    }
    return new ReviewSession(data.page_id, text, structuredClone(data.regions));
  }

  get layout(): LayoutData {
    return { page_id: this.pageId, regions: structuredClone(this.regions) as LayoutData["regions"] };
  }

  get pendingEdits(): EditAction[] {
    return structuredClone(this.pending);
  }

  get canSubmit(): boolean {
    return this.pending.length > 0;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  /** With no pending edits this returns the fetched bytes unchanged. */
  serializeLayout(): string {
    if (this.pending.length === 0) {
      return this.rawText;
    }
    return JSON.stringify({ page_id: this.pageId, regions: this.regions });
  }

  // -- editing ------------------------------------------------------------

  private snapshot(): Snapshot {
    return structuredClone({
      regions: this.regions,
      regionOrigins: this.regionOrigins,
      cellOrigins: this.cellOrigins,
      pending: this.pending,
    });
  }

  private restore(s: Snapshot): void {
    this.regions = s.regions;
    this.regionOrigins = s.regionOrigins;
    this.cellOrigins = s.cellOrigins;
    this.pending = s.pending;
  }

  /** Validate and optimistically apply one edit; on success it joins the
   * pending list (with its server-side target) and the undo stack grows. */
  applyEdit(edit: {
    action: string;
    target?: Target;
    bbox?: BBox;
    label?: RegionClass;
    region?: AddedRegion;
  }): EditResult {
    const before = this.snapshot();
    let applied: EditAction;
    if (edit.action === "add") {
      const region = edit.region;
      if (
        !region ||
        !REGION_CLASSES.includes(region.class) ||
        !isValidBBox(region.bbox) ||
        typeof region.score !== "number" ||
        region.score < 0 ||
        region.score > 1
      ) {
        return { ok: false, error: "add needs a valid region (class, bbox, score)" };
      }
      this.regions.push({ class: region.class, bbox: region.bbox, score: region.score });
      this.regionOrigins.push(null);
      this.cellOrigins.push([]);
      applied = {
        action: "add",
        region: { class: region.class, bbox: region.bbox, score: region.score },
      };
    } else if (edit.action === "move_resize" || edit.action === "relabel" || edit.action === "delete") {
      const path = edit.target;
      if (!this.resolvable(path)) {
        return { ok: false, error: `no region at ${JSON.stringify(edit.target)}` };
      }
      const origin = this.originOf(path!);
      if (origin === null) {
        return { ok: false, error: "region is not submitted yet; submit before editing it" };
      }
      if (edit.action === "move_resize") {
        if (!isValidBBox(edit.bbox)) {
          return { ok: false, error: "bbox must be [xmin, ymin, xmax, ymax] with positive extent" };
        }
        this.moveResize(path!, edit.bbox);
        applied = { action: "move_resize", target: origin, bbox: edit.bbox };
      } else if (edit.action === "relabel") {
        if (!edit.label || !REGION_CLASSES.includes(edit.label)) {
          return { ok: false, error: `unknown class ${JSON.stringify(edit.label)}` };
        }
        this.relabel(path!, edit.label);
        applied = { action: "relabel", target: origin, label: edit.label };
      } else {
        this.remove(path!);
        applied = { action: "delete", target: origin };
      }
    } else {
      return { ok: false, error: `unknown action ${JSON.stringify(edit.action)}` };
    }
    this.pending.push(applied);
    this.undoStack.push(before);
    this.redoStack = [];
    return { ok: true };
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.snapshot());
    this.restore(prev);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.snapshot());
    this.restore(next);
    return true;
  }

  /** Called by the API client once the server accepted the batch. */
  clearPending(): void {
    this.pending = [];
    this.undoStack = [];
    this.redoStack = [];
  }

  correctionPayload(operator: string, timestamp?: string): CorrectionPayload {
    const payload: CorrectionPayload = { operator, edits: structuredClone(this.pending) };
    if (timestamp !== undefined) {
      payload.timestamp = timestamp;
    }
    return payload;
  }

  /** Canonical request body for POST /documents/{id}/corrections. */
  serializeCorrection(operator: string, timestamp?: string): string {
    return JSON.stringify(this.correctionPayload(operator, timestamp));
  }

  // -- internals ------------------------------------------------------------

  private resolvable(path: Target | undefined): boolean {
    if (!Array.isArray(path) || path.length < 1 || path.length > 2) return false;
    if (!path.every((v) => Number.isInteger(v) && v >= 0)) return false;
    const region = this.regions[path[0]];
    if (!region) return false;
    if (path.length === 2) {
      return region.cells !== undefined && path[1] < region.cells.length;
    }
    return true;
  }

  private originOf(path: Target): Target | null {
    return path.length === 1
      ? this.regionOrigins[path[0]]
      : this.cellOrigins[path[0]][path[1]];
  }

  private moveResize(path: Target, bbox: BBox): void {
    if (path.length === 1) {
      this.regions[path[0]].bbox = bbox;
    } else {
      this.regions[path[0]].cells![path[1]].bbox = bbox;
    }
  }

  private relabel(path: Target, label: RegionClass): void {
    if (path.length === 1) {
      const region = this.regions[path[0]];
      if (region.class === "table" && label !== "table") {
        // the grid is a table property; its cells remain server-side regions
        // and will be re-nested on reload
        delete region.n_rows;
        delete region.n_cols;
        delete region.cells;
        this.cellOrigins[path[0]] = [];
      }
      region.class = label;
    } else {
      // a relabeled cell leaves its grid and becomes a top-level region
      const [i, j] = path;
      const cell = this.regions[i].cells![j];
      const origin = this.cellOrigins[i][j];
      this.regions[i].cells!.splice(j, 1);
      this.cellOrigins[i].splice(j, 1);
      this.regions.push({ class: label, bbox: cell.bbox, score: cell.score });
      this.regionOrigins.push(origin);
      this.cellOrigins.push([]);
    }
  }

  private remove(path: Target): void {
    if (path.length === 1) {
      this.regions.splice(path[0], 1);
      this.regionOrigins.splice(path[0], 1);
      this.cellOrigins.splice(path[0], 1);
    } else {
      this.regions[path[0]].cells!.splice(path[1], 1);
      this.cellOrigins[path[0]].splice(path[1], 1);
    }
    if (this.selected && this.selected[0] === path[0]) {
      this.selected = null;
    }
  }

  // -- view controls ----------------------------------------------------------

  select(path: Target | null): void {
    this.selected = path !== null && this.resolvable(path) ? path : null;
  }

  zoomBy(factor: number): void {
    this.transform = { ...this.transform, scale: this.transform.scale * factor };
  }

  panBy(dx: number, dy: number): void {
    this.transform = {
      ...this.transform,
      offsetX: this.transform.offsetX + dx,
      offsetY: this.transform.offsetY + dy,
    };
  }
}
