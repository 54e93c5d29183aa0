// CVLM depth-frame decoding and the client-side grayscale heatmap.
// Format: "CVLM" magic, little-endian u16 width and height, then
// width*height little-endian u16 depth samples in mm (0 = invalid hole).

export interface DepthFrame {
  width: number
  height: number
  depths: Uint16Array
}

const MAGIC = [0x43, 0x56, 0x4c, 0x4d] // "CVLM"
const HEADER_BYTES = 8

export function decodeFrame(buffer: ArrayBuffer): DepthFrame {
  const bytes = new Uint8Array(buffer)
  if (bytes.length < HEADER_BYTES || MAGIC.some((b, i) => bytes[i] !== b)) {
    throw new Error("not a CVLM frame")
  }
  const view = new DataView(buffer)
  const width = view.getUint16(4, true)
  const height = view.getUint16(6, true)
  const expected = HEADER_BYTES + width * height * 2
  if (bytes.length !== expected) {
    throw new Error(`truncated frame: ${bytes.length} bytes, expected ${expected}`)
  }
  const depths = new Uint16Array(width * height)
  for (let i = 0; i < depths.length; i++) {
    depths[i] = view.getUint16(HEADER_BYTES + 2 * i, true)
  }
  return { width, height, depths }
}

export function depthRange(frame: DepthFrame): { min: number; max: number } {
  let min = 65535
  let max = 0
  for (const d of frame.depths) {
    if (d === 0) continue
    if (d < min) min = d
    if (d > max) max = d
  }
  return min > max ? { min: 0, max: 0 } : { min, max }
}

/** Grayscale RGBA mapping: near = bright, far = dark, holes = red. */
export function toHeatmapRgba(frame: DepthFrame): Uint8ClampedArray<ArrayBuffer> {
  const { min, max } = depthRange(frame)
  const span = Math.max(1, max - min)
  const out = new Uint8ClampedArray(new ArrayBuffer(frame.width * frame.height * 4))
  for (let i = 0; i < frame.depths.length; i++) {
    const d = frame.depths[i]
    const o = i * 4
    if (d === 0) {
      out[o] = 128
      out[o + 3] = 255
      continue
    }
    const v = Math.round(255 * (1 - (d - min) / span))
    out[o] = v
    out[o + 1] = v
    out[o + 2] = v
    out[o + 3] = 255
  }
  return out
}
