/**
 * Reader for MATLAB Level-5 MAT-file containers (little-endian).
 *
 * Supports the subset the public hyperspectral scenes use: full numeric
 * matrices (double/single/int8..uint32 classes), plain and zlib-compressed
 * elements, and the small-element tag format. Cell arrays, structs, sparse
 * and complex matrices are rejected with a precise error.
 */

import * as zlib from "zlib";

// MAT data type tags
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

// array class tags
const MX_DOUBLE = 6;
const MX_SINGLE = 7;
const MX_INT8 = 8;
const MX_UINT8 = 9;
const MX_INT16 = 10;
const MX_UINT16 = 11;
const MX_INT32 = 12;
const MX_UINT32 = 13;

const NUMERIC_CLASSES = new Set([
  MX_DOUBLE, MX_SINGLE, MX_INT8, MX_UINT8, MX_INT16, MX_UINT16, MX_INT32, MX_UINT32,
]);

const INTEGER_CLASSES = new Set([
  MX_INT8, MX_UINT8, MX_INT16, MX_UINT16, MX_INT32, MX_UINT32,
]);

export interface MatVariable {
  name: string;
  /** Dimension extents in MATLAB order (column major). */
  dims: number[];
  classType: number;
  /** Values widened to double, still in column-major element order. */
  data: Float64Array;
  /** True when the class is integral or every value is integer-valued. */
  integerValued: boolean;
}

interface Element {
  type: number;
  payload: Buffer;
}

function readTag(buf: Buffer, offset: number): { type: number; bytes: number; dataOffset: number; next: number } {
  const raw = buf.readUInt32LE(offset);
  if ((raw & 0xffff0000) !== 0) {
    // small element: byte count lives in the upper half of the tag
    const type = raw & 0xffff;
    const bytes = raw >>> 16;
    return { type, bytes, dataOffset: offset + 4, next: offset + 8 };
  }
  const bytes = buf.readUInt32LE(offset + 4);
  const padded = (bytes + 7) & ~7; // payloads align to 8-byte boundaries
  return { type: raw, bytes, dataOffset: offset + 8, next: offset + 8 + padded };
}

function* elements(buf: Buffer, offset: number, end: number): Generator<Element> {
  while (offset + 8 <= end) {
    const tag = readTag(buf, offset);
    if (tag.dataOffset + tag.bytes > end) {
      throw new Error(
        `element at offset ${offset} claims ${tag.bytes} bytes but only ` +
        `${end - tag.dataOffset} remain`,
      );
    }
    yield { type: tag.type, payload: buf.subarray(tag.dataOffset, tag.dataOffset + tag.bytes) };
    offset = tag.next;
  }
}

function widenNumeric(type: number, payload: Buffer): Float64Array {
  const view = (ctor: any, width: number) => {
    const count = payload.length / width;
    const out = new Float64Array(count);
    const dv = new DataView(payload.buffer, payload.byteOffset, payload.length);
    for (let i = 0; i < count; i++) {
      out[i] = Number(ctor(dv, i * width));
    }
    return out;
  };
  switch (type) {
    case MI_INT8: return view((dv: DataView, o: number) => dv.getInt8(o), 1);
    case MI_UINT8: return view((dv: DataView, o: number) => dv.getUint8(o), 1);
    case MI_INT16: return view((dv: DataView, o: number) => dv.getInt16(o, true), 2);
    case MI_UINT16: return view((dv: DataView, o: number) => dv.getUint16(o, true), 2);
    case MI_INT32: return view((dv: DataView, o: number) => dv.getInt32(o, true), 4);
    case MI_UINT32: return view((dv: DataView, o: number) => dv.getUint32(o, true), 4);
    case MI_SINGLE: return view((dv: DataView, o: number) => dv.getFloat32(o, true), 4);
    case MI_DOUBLE: return view((dv: DataView, o: number) => dv.getFloat64(o, true), 8);
    case MI_INT64: return view((dv: DataView, o: number) => dv.getBigInt64(o, true), 8);
    case MI_UINT64: return view((dv: DataView, o: number) => dv.getBigUint64(o, true), 8);
    default:
      throw new Error(`unsupported numeric data type ${type}`);
  }
}

function parseMatrix(payload: Buffer): MatVariable | null {
  const subs = Array.from(elements(payload, 0, payload.length));
  if (subs.length < 3) {
    throw new Error("matrix element is missing its mandatory subelements");
  }
  const [flagsEl, dimsEl, nameEl, ...rest] = subs;
  if (flagsEl.type !== MI_UINT32 || flagsEl.payload.length < 8) {
    throw new Error("malformed array-flags subelement");
  }
  const flagsWord = flagsEl.payload.readUInt32LE(0);
  const classType = flagsWord & 0xff;
  const complex = (flagsWord & 0x0800) !== 0;
  if (!NUMERIC_CLASSES.has(classType)) {
    return null; // cell/struct/char/sparse: callers decide whether to care
  }
  if (complex) {
    throw new Error("complex matrices are not supported");
  }
  if (dimsEl.type !== MI_INT32) {
    throw new Error("malformed dimensions subelement");
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsEl.payload.length; i += 4) {
    dims.push(dimsEl.payload.readInt32LE(i));
  }
  const name = nameEl.payload.toString("utf8");
  if (rest.length === 0) {
    throw new Error(`variable ${name}: missing data subelement`);
  }
  const data = widenNumeric(rest[0].type, rest[0].payload);
  const count = dims.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new Error(
      `variable ${name}: ${data.length} values for dims [${dims.join("x")}]`,
    );
  }
  const integerValued =
    INTEGER_CLASSES.has(classType) || data.every((v) => Number.isInteger(v));
  return { name, dims, classType, data, integerValued };
}

/** Parse every full numeric variable of a MAT v5 buffer. */
export function parseMatBuffer(buf: Buffer): MatVariable[] {
  if (buf.length < 128) {
    throw new Error("file shorter than the 128-byte MAT header");
  }
  const version = buf.readUInt16LE(124);
  const endian = buf.toString("ascii", 126, 128);
  if (endian === "MI") {
    throw new Error("big-endian MAT files are not supported");
  }
  if (endian !== "IM" || version !== 0x0100) {
    throw new Error(
      `not a Level-5 MAT-file (version 0x${version.toString(16)}, endian ${endian})`,
    );
  }
  const vars: MatVariable[] = [];
  for (const el of elements(buf, 128, buf.length)) {
    let inner = el;
    if (el.type === MI_COMPRESSED) {
      const inflated = zlib.inflateSync(el.payload);
      const tag = readTag(inflated, 0);
      inner = {
        type: tag.type,
        payload: inflated.subarray(tag.dataOffset, tag.dataOffset + tag.bytes),
      };
    }
    if (inner.type !== MI_MATRIX) {
      continue; // skip non-matrix top-level elements
    }
    const variable = parseMatrix(inner.payload);
    if (variable !== null) {
      vars.push(variable);
    }
  }
  return vars;
}

/**
 * Reorder column-major values to row-major.
 *
 * For dims [h, w] element (r, c) sits at r + c*h; for [h, w, bands] element
 * (r, c, b) sits at r + c*h + b*h*w. Output is row-major (r, c[, b]).
 */
export function toRowMajor(variable: MatVariable): Float64Array {
  const dims = variable.dims;
  const src = variable.data;
  if (dims.length === 2) {
    const [h, w] = dims;
    const out = new Float64Array(h * w);
    for (let r = 0; r < h; r++) {
      for (let c = 0; c < w; c++) {
        out[r * w + c] = src[r + c * h];
      }
    }
    return out;
  }
  if (dims.length === 3) {
    const [h, w, bands] = dims;
    const out = new Float64Array(h * w * bands);
    const plane = h * w;
    for (let r = 0; r < h; r++) {
      for (let c = 0; c < w; c++) {
        const rowBase = (r * w + c) * bands;
        for (let b = 0; b < bands; b++) {
          out[rowBase + b] = src[r + c * h + b * plane];
        }
      }
    }
    return out;
  }
  throw new Error(`expected a 2-D or 3-D array, got ${dims.length}-D`);
}
