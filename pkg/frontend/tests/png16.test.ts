import { readFileSync } from "node:fs";
import { deflateSync } from "node:zlib";
import { describe, expect, it } from "vitest";

import { PngFormatError, base64ToBytes, decodeGrayPng } from "../src/png16.js";

const fixture = (name: string) => new Uint8Array(readFileSync(new URL(`./fixtures/${name}`, import.meta.url)));

// -- minimal encoder used only to drive the decoder through every filter --

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (const b of bytes) c = CRC_TABLE[(c ^ b) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, data.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(data, 8);
  view.setUint32(8 + data.length, crc32(out.subarray(4, 8 + data.length)));
  return out;
}

function encodePng16(
  values: number[][],
  filterForRow: (y: number) => number,
): Uint8Array {
  const height = values.length;
  const width = values[0].length;
  const bpp = 2;
  const stride = width * bpp;

  // raw (unfiltered) sample bytes, big-endian
  const raw = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      raw[y * stride + 2 * x] = values[y][x] >> 8;
      raw[y * stride + 2 * x + 1] = values[y][x] & 0xff;
    }
  }

  const paeth = (a: number, b: number, c: number) => {
    const p = a + b - c;
    const pa = Math.abs(p - a);
    const pb = Math.abs(p - b);
    const pc = Math.abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
  };

  const filtered = new Uint8Array(height * (stride + 1));
  for (let y = 0; y < height; y++) {
    const filter = filterForRow(y);
    filtered[y * (stride + 1)] = filter;
    for (let x = 0; x < stride; x++) {
      const value = raw[y * stride + x];
      const left = x >= bpp ? raw[y * stride + x - bpp] : 0;
      const up = y > 0 ? raw[(y - 1) * stride + x] : 0;
      const upLeft = y > 0 && x >= bpp ? raw[(y - 1) * stride + x - bpp] : 0;
      let enc: number;
      switch (filter) {
        case 0: enc = value; break;
        case 1: enc = value - left; break;
        case 2: enc = value - up; break;
        case 3: enc = value - ((left + up) >> 1); break;
        case 4: enc = value - paeth(left, up, upLeft); break;
        default: throw new Error(`bad filter ${filter}`);
      }
      filtered[y * (stride + 1) + 1 + x] = enc & 0xff;
    }
  }

  const ihdr = new Uint8Array(13);
  const iv = new DataView(ihdr.buffer);
  iv.setUint32(0, width);
  iv.setUint32(4, height);
  ihdr[8] = 16; // bit depth
  ihdr[9] = 0; // grayscale
  const signature = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);
  const idat = chunk("IDAT", new Uint8Array(deflateSync(filtered)));
  const parts = [signature, chunk("IHDR", ihdr), idat, chunk("IEND", new Uint8Array(0))];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

describe("decodeGrayPng", () => {
  const values = [
    [0, 1, 2, 300, 40000, 5],
    [65535, 0, 7, 7, 7, 7],
    [12, 13, 14, 15, 16, 17],
    [900, 901, 902, 903, 904, 905],
    [3, 1, 4, 1, 5, 9],
  ];

  it.each([0, 1, 2, 3, 4])("round-trips 16-bit samples through filter %d", async (filter) => {
    const png = encodePng16(values, () => filter);
    const decoded = await decodeGrayPng(png);
    expect(decoded.width).toBe(6);
    expect(decoded.height).toBe(5);
    expect([...decoded.data]).toEqual(values.flat());
  });

  it("round-trips mixed filters per row", async () => {
    const png = encodePng16(values, (y) => y % 5);
    const decoded = await decodeGrayPng(png);
    expect([...decoded.data]).toEqual(values.flat());
  });

  it("decodes the label raster written by the dataset tooling", async () => {
    const expected = JSON.parse(
      readFileSync(new URL("./fixtures/labels16.json", import.meta.url), "utf-8"),
    ) as { width: number; height: number; values: number[] };
    const decoded = await decodeGrayPng(fixture("labels16.png"));
    expect(decoded.width).toBe(expected.width);
    expect(decoded.height).toBe(expected.height);
    expect([...decoded.data]).toEqual(expected.values);
  });

  it("decodes a full-size superpixel map from the benchmark fixtures", async () => {
    const meta = JSON.parse(
      readFileSync(new URL("./fixtures/golden_s0000.json", import.meta.url), "utf-8"),
    ) as { width: number; height: number; max: number; sum: number; corner: number[] };
    const decoded = await decodeGrayPng(fixture("golden_s0000.png"));
    expect(decoded.width).toBe(meta.width);
    expect(decoded.height).toBe(meta.height);
    expect(Math.max(...decoded.data)).toBe(meta.max);
    expect(decoded.data.reduce((a, b) => a + b, 0)).toBe(meta.sum);
    expect(decoded.data[0]).toBe(meta.corner[0]);
    expect(decoded.data[decoded.data.length - 1]).toBe(meta.corner[1]);
  });

  it("rejects non-PNG bytes", async () => {
    await expect(decodeGrayPng(new Uint8Array([1, 2, 3]))).rejects.toBeInstanceOf(PngFormatError);
  });

  it("rejects color PNGs", async () => {
    const png = encodePng16(values, () => 0);
    png[8 + 8 + 9] = 2; // IHDR color type byte -> truecolor
    await expect(decodeGrayPng(png)).rejects.toBeInstanceOf(PngFormatError);
  });
});

describe("base64ToBytes", () => {
  it("decodes binary strings", () => {
    expect([...base64ToBytes("AAEC/w==")]).toEqual([0, 1, 2, 255]);
  });
});
