/**
 * Decoder for the binary .agrid attention-map format carried in snapshots:
 * "AGRD" magic, u16 version, u8 role, u8 frame, u32 width, u32 height
 * (all little-endian), then width*height float32 values row-major.
 */

export interface AttentionGrid {
  version: number;
  role: number;
  frame: number; // 0 = image frame, 1 = ground frame
  width: number;
  height: number;
  values: Float32Array;
}

export const AGRID_HEADER_SIZE = 16;

export function decodeAgrid(bytes: Uint8Array): AttentionGrid {
  if (bytes.length < AGRID_HEADER_SIZE) {
    throw new Error(`agrid: truncated header (${bytes.length} bytes)`);
  }
  const magic = String.fromCharCode(bytes[0]!, bytes[1]!, bytes[2]!, bytes[3]!);
  if (magic !== "AGRD") {
    throw new Error(`agrid: bad magic ${JSON.stringify(magic)}`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint16(4, true);
  const role = view.getUint8(6);
  const frame = view.getUint8(7);
  const width = view.getUint32(8, true);
  const height = view.getUint32(12, true);
  const expected = AGRID_HEADER_SIZE + 4 * width * height;
  if (bytes.length !== expected) {
    throw new Error(`agrid: expected ${expected} bytes for ${width}x${height}, got ${bytes.length}`);
  }
  const values = new Float32Array(width * height);
  for (let k = 0; k < values.length; k++) {
    values[k] = view.getFloat32(AGRID_HEADER_SIZE + 4 * k, true);
  }
  return { version, role, frame, width, height, values };
}

export function decodeAgridBase64(b64: string): AttentionGrid {
  let bytes: Uint8Array;
  if (typeof atob === "function") {
    const raw = atob(b64);
    bytes = new Uint8Array(raw.length);
    for (let k = 0; k < raw.length; k++) bytes[k] = raw.charCodeAt(k);
  } else {
    bytes = new Uint8Array(Buffer.from(b64, "base64"));
  }
  return decodeAgrid(bytes);
}

/** Jet colormap (blue -> cyan -> yellow -> red) for a value in [0, 1]. */
export function jetColor(value: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, value));
  const r = Math.min(1, Math.max(0, 1.5 - Math.abs(4 * x - 3)));
  const g = Math.min(1, Math.max(0, 1.5 - Math.abs(4 * x - 2)));
  const b = Math.min(1, Math.max(0, 1.5 - Math.abs(4 * x - 1)));
  return [Math.round(255 * r), Math.round(255 * g), Math.round(255 * b)];
}
