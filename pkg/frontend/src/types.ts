/** Wire types shared with the layout service. */

export type RegionClass = "handwriting" | "table" | "cell" | "text_block";

/** [xmin, ymin, xmax, ymax], origin top-left, y grows downward. */
export type BBox = [number, number, number, number];

export interface CellData {
  bbox: BBox;
  rows: number[];
  cols: number[];
  score: number;
}

export interface RegionData {
  class: Exclude<RegionClass, "cell">;
  bbox: BBox;
  score: number;
  n_rows?: number;
  n_cols?: number;
  cells?: CellData[];
}

export interface LayoutData {
  page_id: string;
  regions: RegionData[];
}

/** Path into the layout the server holds: [i] is regions[i], [i, j] is
 * regions[i].cells[j]. */
export type Target = number[];

export interface AddedRegion {
  class: RegionClass;
  bbox: BBox;
  score: number;
}

export type EditAction =
  | { action: "move_resize"; target: Target; bbox: BBox }
  | { action: "relabel"; target: Target; label: RegionClass }
  | { action: "delete"; target: Target }
  | { action: "add"; region: AddedRegion };

export interface CorrectionPayload {
  operator: string;
  edits: EditAction[];
  timestamp?: string;
}

export function isValidBBox(bbox: unknown): bbox is BBox {
  return (
    Array.isArray(bbox) &&
    bbox.length === 4 &&
    bbox.every((v) => typeof v === "number" && Number.isFinite(v)) &&
    bbox[2] > bbox[0] &&
    bbox[3] > bbox[1]
  );
}

export const REGION_CLASSES: RegionClass[] = [
  "handwriting",
  "table",
  "cell",
  "text_block",
];
