/**
 * The engine's binary scene formats.
 *
 * HSC1 cube:  magic "HSC1", u32 LE h, w, bands, then h*w*bands little-endian
 *             float32 in (row, col, band) order.
 * HSL1 label: magic "HSL1", u32 LE h, w, then h*w little-endian int32
 *             (0 = unlabeled, 1..K = classes).
 */

export interface Cube {
  h: number;
  w: number;
  bands: number;
  values: Float32Array; // row-major (row, col, band)
}

export interface LabelRaster {
  h: number;
  w: number;
  values: Int32Array; // row-major
}

export function encodeHsc1(cube: Cube): Buffer {
  const header = Buffer.alloc(16);
  header.write("HSC1", 0, "ascii");
  header.writeUInt32LE(cube.h, 4);
  header.writeUInt32LE(cube.w, 8);
  header.writeUInt32LE(cube.bands, 12);
  const payload = Buffer.alloc(cube.values.length * 4);
  for (let i = 0; i < cube.values.length; i++) {
    payload.writeFloatLE(cube.values[i], i * 4);
  }
  return Buffer.concat([header, payload]);
}

export function decodeHsc1(buf: Buffer): Cube {
  if (buf.length < 16 || buf.toString("ascii", 0, 4) !== "HSC1") {
    throw new Error(`bad cube magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const h = buf.readUInt32LE(4);
  const w = buf.readUInt32LE(8);
  const bands = buf.readUInt32LE(12);
  const expected = h * w * bands;
  const available = (buf.length - 16) / 4;
  if (available < expected) {
    throw new Error(
      `payload shorter than header implies: ${available} floats, need ${expected}`,
    );
  }
  const values = new Float32Array(expected);
  for (let i = 0; i < expected; i++) {
    values[i] = buf.readFloatLE(16 + i * 4);
  }
  return { h, w, bands, values };
}

export function encodeHsl1(raster: LabelRaster): Buffer {
  const header = Buffer.alloc(12);
  header.write("HSL1", 0, "ascii");
  header.writeUInt32LE(raster.h, 4);
  header.writeUInt32LE(raster.w, 8);
  const payload = Buffer.alloc(raster.values.length * 4);
  for (let i = 0; i < raster.values.length; i++) {
    payload.writeInt32LE(raster.values[i], i * 4);
  }
  return Buffer.concat([header, payload]);
}

export function decodeHsl1(buf: Buffer): LabelRaster {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "HSL1") {
    throw new Error(`bad label magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const h = buf.readUInt32LE(4);
  const w = buf.readUInt32LE(8);
  const expected = h * w;
  const available = (buf.length - 12) / 4;
  if (available < expected) {
    throw new Error(
      `payload shorter than header implies: ${available} labels, need ${expected}`,
    );
  }
  const values = new Int32Array(expected);
  for (let i = 0; i < expected; i++) {
    values[i] = buf.readInt32LE(12 + i * 4);
  }
  return { h, w, values };
}
