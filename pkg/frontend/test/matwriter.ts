/**
 * Minimal MAT v5 writer used to synthesize test containers. Kept in the test
 * tree on purpose: it is the independent side of the round-trip checks.
 */

import * as zlib from "zlib";

export const MX_DOUBLE = 6;
export const MX_SINGLE = 7;
export const MX_UINT8 = 9;
export const MX_INT32 = 12;

const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

function pad8(buf: Buffer): Buffer {
  const rem = buf.length % 8;
  return rem === 0 ? buf : Buffer.concat([buf, Buffer.alloc(8 - rem)]);
}

function element(type: number, payload: Buffer): Buffer {
  const tag = Buffer.alloc(8);
  tag.writeUInt32LE(type, 0);
  tag.writeUInt32LE(payload.length, 4);
  return Buffer.concat([tag, pad8(payload)]);
}

function smallElement(type: number, payload: Buffer): Buffer {
  if (payload.length > 4) {
    throw new Error("small elements carry at most 4 bytes");
  }
  const out = Buffer.alloc(8);
  out.writeUInt16LE(type, 0);
  out.writeUInt16LE(payload.length, 2);
  payload.copy(out, 4);
  return out;
}

function encodeValues(dataType: number, values: number[]): Buffer {
  switch (dataType) {
    case MI_DOUBLE: {
      const buf = Buffer.alloc(values.length * 8);
      values.forEach((v, i) => buf.writeDoubleLE(v, i * 8));
      return buf;
    }
    case MI_SINGLE: {
      const buf = Buffer.alloc(values.length * 4);
      values.forEach((v, i) => buf.writeFloatLE(Math.fround(v), i * 4));
      return buf;
    }
    case MI_INT32: {
      const buf = Buffer.alloc(values.length * 4);
      values.forEach((v, i) => buf.writeInt32LE(v, i * 4));
      return buf;
    }
    case MI_UINT8: {
      const buf = Buffer.alloc(values.length);
      values.forEach((v, i) => buf.writeUInt8(v, i));
      return buf;
    }
    default:
      throw new Error(`writer does not handle data type ${dataType}`);
  }
}

export interface VarSpec {
  name: string;
  dims: number[];
  classType: number;
  dataType: number;
  /** Values in MATLAB column-major element order. */
  values: number[];
  /** Encode the name as a small element (what real writers do for short names). */
  smallName?: boolean;
}

export function matrixElement(spec: VarSpec): Buffer {
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(spec.classType, 0);
  const dims = Buffer.alloc(spec.dims.length * 4);
  spec.dims.forEach((d, i) => dims.writeInt32LE(d, i * 4));
  const nameBytes = Buffer.from(spec.name, "utf8");
  const nameEl = spec.smallName && nameBytes.length <= 4
    ? smallElement(MI_INT8, nameBytes)
    : element(MI_INT8, nameBytes);
  const body = Buffer.concat([
    element(MI_UINT32, flags),
    element(MI_INT32, dims),
    nameEl,
    element(spec.dataType, encodeValues(spec.dataType, spec.values)),
  ]);
  return element(MI_MATRIX, body);
}

export function matFile(vars: VarSpec[], options: { compress?: boolean } = {}): Buffer {
  const header = Buffer.alloc(128);
  header.write("MATLAB 5.0 MAT-file, synthesized for tests", 0, "ascii");
  header.writeUInt16LE(0x0100, 124);
  header.write("IM", 126, "ascii");
  const body = vars.map((spec) => {
    const el = matrixElement(spec);
    if (!options.compress) {
      return el;
    }
    const deflated = zlib.deflateSync(el);
    const tag = Buffer.alloc(8);
    tag.writeUInt32LE(MI_COMPRESSED, 0);
    tag.writeUInt32LE(deflated.length, 4);
    return Buffer.concat([tag, pad8(deflated)]);
  });
  return Buffer.concat([header, ...body]);
}
