/** Canvas rendering of the overlay model over a blank page. */

import type { Overlay } from "./overlays.js";
import type { Transform } from "./state.js";

export function drawOverlays(
  ctx: CanvasRenderingContext2D,
  overlays: Overlay[],
  transform: Transform,
  options: { showCells?: boolean; lineWidth?: number } = {},
): void {
  const { scale, offsetX, offsetY } = transform;
  ctx.lineWidth = options.lineWidth ?? 2;
  const rect = ([x0, y0, x1, y1]: [number, number, number, number], color: string) => {
    ctx.strokeStyle = color;
    ctx.strokeRect(
      x0 * scale + offsetX,
      y0 * scale + offsetY,
      (x1 - x0) * scale,
      (y1 - y0) * scale,
    );
  };
  for (const overlay of overlays) {
    rect(overlay.bbox, overlay.color);
    if (options.showCells !== false && overlay.grid) {
      for (const cell of overlay.grid.cells) {
        rect(cell.bbox, cell.color);
      }
    }
  }
}
