/**
 * Minimal PNG decoder for the label rasters the harness stores:
 * non-interlaced grayscale (color type 0) at bit depth 16 or 8.
 *
 * Browsers can't read 16-bit samples back out of a canvas, so the raster is
 * parsed directly: chunk walk, zlib inflate via DecompressionStream
 * (available in browsers and Node 18+), then scanline unfiltering.
 */

export interface GrayImage16 {
  width: number;
  height: number;
  /** Row-major samples; 8-bit inputs are widened, not rescaled. */
  data: Uint16Array;
}

const PNG_SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

export class PngFormatError extends Error {}

function u32(bytes: Uint8Array, offset: number): number {
  return (
    ((bytes[offset] << 24) | (bytes[offset + 1] << 16) | (bytes[offset + 2] << 8) | bytes[offset + 3]) >>>
    0
  );
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(new DecompressionStream("deflate"));
  const buffer = await new Response(stream).arrayBuffer();
  return new Uint8Array(buffer);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Undo PNG scanline filtering in place and return the raw sample bytes. */
function unfilter(raw: Uint8Array, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const rowIn = y * (stride + 1) + 1;
    const rowOut = y * stride;
    for (let x = 0; x < stride; x++) {
      const value = raw[rowIn + x];
      const left = x >= bpp ? out[rowOut + x - bpp] : 0;
      const up = y > 0 ? out[rowOut - stride + x] : 0;
      const upLeft = y > 0 && x >= bpp ? out[rowOut - stride + x - bpp] : 0;
      let recon: number;
      switch (filter) {
        case 0:
          recon = value;
          break;
        case 1:
          recon = value + left;
          break;
        case 2:
          recon = value + up;
          break;
        case 3:
          recon = value + ((left + up) >> 1);
          break;
        case 4:
          recon = value + paeth(left, up, upLeft);
          break;
        default:
          throw new PngFormatError(`unknown scanline filter ${filter} on row ${y}`);
      }
      out[rowOut + x] = recon & 0xff;
    }
  }
  return out;
}

/** Decode a grayscale PNG into 16-bit samples. */
export async function decodeGrayPng(bytes: Uint8Array): Promise<GrayImage16> {
  if (bytes.length < 8 || PNG_SIGNATURE.some((b, i) => bytes[i] !== b)) {
    throw new PngFormatError("not a PNG file");
  }
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  const idatParts: Uint8Array[] = [];
  let offset = 8;
  while (offset + 8 <= bytes.length) {
    const length = u32(bytes, offset);
    const type = String.fromCharCode(...bytes.subarray(offset + 4, offset + 8));
    const data = bytes.subarray(offset + 8, offset + 8 + length);
    if (type === "IHDR") {
      width = u32(data, 0);
      height = u32(data, 4);
      bitDepth = data[8];
      const colorType = data[9];
      if (colorType !== 0) {
        throw new PngFormatError(`expected grayscale (color type 0), got ${colorType}`);
      }
      if (bitDepth !== 8 && bitDepth !== 16) {
        throw new PngFormatError(`unsupported bit depth ${bitDepth}`);
      }
      if (data[12] !== 0) {
        throw new PngFormatError("interlaced PNGs are not supported");
      }
    } else if (type === "IDAT") {
      idatParts.push(data);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length; // length + type + data + crc
  }
  if (width === 0 || height === 0 || idatParts.length === 0) {
    throw new PngFormatError("missing IHDR or IDAT");
  }

  const compressed = new Uint8Array(idatParts.reduce((n, p) => n + p.length, 0));
  let pos = 0;
  for (const part of idatParts) {
    compressed.set(part, pos);
    pos += part.length;
  }
  const bpp = bitDepth === 16 ? 2 : 1;
  const raw = await inflate(compressed);
  const expected = height * (width * bpp + 1);
  if (raw.length < expected) {
    throw new PngFormatError(`truncated pixel data: ${raw.length} < ${expected}`);
  }
  const samples = unfilter(raw, width, height, bpp);

  const data = new Uint16Array(width * height);
  if (bitDepth === 16) {
    for (let i = 0; i < data.length; i++) {
      data[i] = (samples[2 * i] << 8) | samples[2 * i + 1]; // big-endian
    }
  } else {
    data.set(samples);
  }
  return { width, height, data };
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
