/** Pure render model: layout JSON to colored overlays plus per-table grid
 * panels, preserving the server's region order. */

import type { BBox, LayoutData, RegionClass } from "./types.js";

/** Box colors per class: tables red, cells green, text blocks blue,
 * handwriting purple. */
export const CLASS_COLORS: Record<RegionClass, string> = {
  table: "#d62728",
  cell: "#2ca02c",
  text_block: "#1f77b4",
  handwriting: "#9467bd",
};

export interface CellOverlay {
  bbox: BBox;
  color: string;
  rows: number[];
  cols: number[];
  /** true when the cell spans more than one row or column */
  spans: boolean;
  score: number;
}

export interface GridPanel {
  nRows: number;
  nCols: number;
  cells: CellOverlay[];
}

export interface Overlay {
  /** index into the layout's regions array (render order) */
  index: number;
  regionClass: RegionClass;
  bbox: BBox;
  color: string;
  score: number;
  /** present for tables: the expandable grid panel model */
  grid?: GridPanel;
}

export function layoutToOverlays(layout: LayoutData): Overlay[] {
  return layout.regions.map((region, index) => {
    const overlay: Overlay = {
      index,
      regionClass: region.class,
      bbox: region.bbox,
      color: CLASS_COLORS[region.class],
      score: region.score,
    };
    if (region.class === "table") {
      overlay.grid = {
        nRows: region.n_rows ?? 0,
        nCols: region.n_cols ?? 0,
        cells: (region.cells ?? []).map((cell) => ({
          bbox: cell.bbox,
          color: CLASS_COLORS.cell,
          rows: cell.rows,
          cols: cell.cols,
          spans: cell.rows.length > 1 || cell.cols.length > 1,
          score: cell.score,
        })),
      };
    }
    return overlay;
  });
}
