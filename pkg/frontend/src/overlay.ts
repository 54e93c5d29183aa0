// Candidate overlays on the depth heatmap. Boxes are rendered 1:1 with the
// localization payload: no client-side re-derivation, just the server's
// bounding boxes and centroids.

import type { Candidate } from "./api.js"

export interface OverlayBox {
  id: number
  left: number
  top: number
  width: number
  height: number
  label: string
}

export function overlayBoxes(candidates: Candidate[]): OverlayBox[] {
  return candidates.map(c => ({
    id: c.id,
    left: c.bbox.x,
    top: c.bbox.y,
    width: c.bbox.w,
    height: c.bbox.h,
    label: `#${c.id} (${c.cx.toFixed(1)}, ${c.cy.toFixed(1)}) ${c.z_mm} mm`,
  }))
}

/** The candidate whose box contains the click, if any (topmost id wins). */
export function hitTest(candidates: Candidate[], x: number, y: number): Candidate | null {
  for (const c of candidates) {
    if (x >= c.bbox.x && x < c.bbox.x + c.bbox.w &&
        y >= c.bbox.y && y < c.bbox.y + c.bbox.h) {
      return c
    }
  }
  return null
}

/**
 * Click-to-fill: a grammar-valid classification line for a clicked candidate,
 * located by its left-to-right rank among the current detections. The
 * operator still picks size and category.
 */
export function prefillLine(candidates: Candidate[], target: Candidate): string {
  const byX = [...candidates].sort((a, b) => a.cx - b.cx || a.cy - b.cy)
  const rank = byX.findIndex(c => c.id === target.id) + 1
  const suffix = rank === 1 ? "st" : rank === 2 ? "nd" : rank === 3 ? "rd" : "th"
  return `<size> <category>: ${rank}${suffix} from left`
}

export function drawOverlay(ctx: CanvasRenderingContext2D, box: OverlayBox, color = "#2dd4bf"): void {
  ctx.strokeStyle = color
  ctx.lineWidth = 1
  ctx.strokeRect(box.left + 0.5, box.top + 0.5, box.width, box.height)
  ctx.fillStyle = color
  ctx.font = "10px monospace"
  ctx.fillText(box.label, box.left, Math.max(8, box.top - 2))
}
