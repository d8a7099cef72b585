import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { AGRID_HEADER_SIZE, decodeAgrid, decodeAgridBase64, jetColor } from "../src/agrid.js";

function buildAgrid(width: number, height: number, values: number[]): Uint8Array {
  const bytes = new Uint8Array(AGRID_HEADER_SIZE + 4 * width * height);
  const view = new DataView(bytes.buffer);
  bytes.set([0x41, 0x47, 0x52, 0x44]); // "AGRD"
  view.setUint16(4, 1, true);
  view.setUint8(6, 3); // synthetic role
  view.setUint8(7, 0); // image frame
  view.setUint32(8, width, true);
  view.setUint32(12, height, true);
  values.forEach((v, k) => view.setFloat32(AGRID_HEADER_SIZE + 4 * k, v, true));
  return bytes;
}

describe("agrid decoding", () => {
  it("decodes a hand-built grid", () => {
    const grid = decodeAgrid(buildAgrid(3, 2, [0, 0.25, 0.5, 0.75, 1, 0.125]));
    expect(grid.width).toBe(3);
    expect(grid.height).toBe(2);
    expect(grid.frame).toBe(0);
    expect(Array.from(grid.values)).toEqual([0, 0.25, 0.5, 0.75, 1, 0.125]);
  });

  it("decodes the attention map from a captured snapshot", () => {
    const lines = readFileSync(join(__dirname, "fixtures", "session.jsonl"), "utf8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l));
    const snap = lines.find((m) => m.type === "snapshot" && m.payload.attention_agrid_b64);
    expect(snap).toBeDefined();
    const grid = decodeAgridBase64(snap.payload.attention_agrid_b64);
    expect(grid.width).toBe(32);
    expect(grid.height).toBe(24);
    for (const v of grid.values) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
  });

  it("rejects bad magic and truncation", () => {
    const good = buildAgrid(2, 2, [0, 0, 0, 0]);
    const bad = new Uint8Array(good);
    bad[0] = 0x58;
    expect(() => decodeAgrid(bad)).toThrow(/magic/);
    expect(() => decodeAgrid(good.slice(0, 12))).toThrow(/truncated/);
    expect(() => decodeAgrid(good.slice(0, good.length - 4))).toThrow(/expected/);
  });

  it("jet colormap is blue at 0, green-dominant mid, red at 1", () => {
    expect(jetColor(0)).toEqual([0, 0, 128]);
    expect(jetColor(0.5)).toEqual([128, 255, 128]);
    expect(jetColor(1)).toEqual([128, 0, 0]);
    expect(jetColor(-5)).toEqual(jetColor(0)); // clamped
    expect(jetColor(5)).toEqual(jetColor(1));
  });
});
