/**
 * Conversion job: MAT container(s) in, HSC1/HSL1 pair out, with integrity
 * checks and a JSON summary.
 */

import * as crypto from "crypto";
import * as fs from "fs";

import { encodeHsc1, encodeHsl1 } from "./hsformats";
import { MatVariable, parseMatBuffer, toRowMajor } from "./matfile";

export interface ConversionJob {
  cubePath: string;
  cubeVar?: string;
  gtPath: string;
  gtVar?: string;
  outPrefix: string;
  expect?: { h?: number; w?: number; bands?: number; classes?: number };
}

export interface ConversionSummary {
  h: number;
  w: number;
  bands: number;
  classes: number;
  labeled: number;
  classHistogram: Record<string, number>;
  valueRange: [number, number];
  outputs: Record<string, { path: string; sha256: string }>;
}

function sha256(buf: Buffer): string {
  return crypto.createHash("sha256").update(buf).digest("hex");
}

function loadVars(path: string): MatVariable[] {
  return parseMatBuffer(fs.readFileSync(path));
}

function pickNamed(vars: MatVariable[], name: string, path: string): MatVariable {
  const found = vars.find((v) => v.name === name);
  if (!found) {
    const names = vars.map((v) => v.name).join(", ") || "(none)";
    throw new Error(`variable ${name} not found in ${path}; present: ${names}`);
  }
  return found;
}

/** The single largest numeric 3-D array is taken as the cube. */
export function detectCube(vars: MatVariable[]): MatVariable {
  const cubes = vars.filter((v) => v.dims.length === 3);
  if (cubes.length === 0) {
    throw new Error("no 3-D numeric array found to use as the cube");
  }
  return cubes.reduce((a, b) => (b.data.length > a.data.length ? b : a));
}

/** The integer-valued 2-D array matching the cube raster is the GT. */
export function detectGt(vars: MatVariable[], h: number, w: number): MatVariable {
  const candidates = vars.filter(
    (v) => v.dims.length === 2 && v.dims[0] === h && v.dims[1] === w && v.integerValued,
  );
  if (candidates.length === 0) {
    throw new Error(`no integer ${h}x${w} array found to use as ground truth`);
  }
  if (candidates.length > 1) {
    const names = candidates.map((v) => v.name).join(", ");
    throw new Error(`ambiguous ground-truth candidates (${names}); use FILE:var`);
  }
  return candidates[0];
}

export function histogram(labels: Int32Array): Record<string, number> {
  const hist: Record<string, number> = {};
  for (const v of labels) {
    if (v > 0) {
      hist[v] = (hist[v] ?? 0) + 1;
    }
  }
  return hist;
}

export function convert(job: ConversionJob): ConversionSummary {
  const cubeVars = loadVars(job.cubePath);
  const cubeVar = job.cubeVar
    ? pickNamed(cubeVars, job.cubeVar, job.cubePath)
    : detectCube(cubeVars);
  if (cubeVar.dims.length !== 3) {
    throw new Error(`cube variable ${cubeVar.name} is ${cubeVar.dims.length}-D, need 3-D`);
  }
  const [h, w, bands] = cubeVar.dims;

  const gtVars = job.gtPath === job.cubePath ? cubeVars : loadVars(job.gtPath);
  const gtVar = job.gtVar
    ? pickNamed(gtVars, job.gtVar, job.gtPath)
    : detectGt(gtVars, h, w);
  if (gtVar.dims.length !== 2) {
    throw new Error(`ground-truth variable ${gtVar.name} is ${gtVar.dims.length}-D, need 2-D`);
  }
  if (gtVar.dims[0] !== h || gtVar.dims[1] !== w) {
    throw new Error(
      `cube raster ${h}x${w} does not match ground truth ${gtVar.dims[0]}x${gtVar.dims[1]}`,
    );
  }
  if (!gtVar.integerValued) {
    throw new Error(`ground-truth variable ${gtVar.name} holds non-integer values`);
  }

  const cubeRow = toRowMajor(cubeVar);
  for (const v of cubeRow) {
    if (!Number.isFinite(v)) {
      throw new Error("cube contains non-finite values");
    }
  }
  const gtRow = toRowMajor(gtVar);

  const cubeValues = new Float32Array(cubeRow.length);
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < cubeRow.length; i++) {
    cubeValues[i] = Math.fround(cubeRow[i]);
    if (cubeRow[i] < lo) lo = cubeRow[i];
    if (cubeRow[i] > hi) hi = cubeRow[i];
  }
  const labels = new Int32Array(gtRow.length);
  for (let i = 0; i < gtRow.length; i++) {
    labels[i] = gtRow[i];
    if (labels[i] < 0) {
      throw new Error(`negative ground-truth label ${labels[i]} at flat index ${i}`);
    }
  }

  const hist = histogram(labels);
  const classes = Object.keys(hist).length
    ? Math.max(...Object.keys(hist).map(Number))
    : 0;
  const expect = job.expect ?? {};
  const checks: Array<[string, number | undefined, number]> = [
    ["h", expect.h, h], ["w", expect.w, w],
    ["bands", expect.bands, bands], ["classes", expect.classes, classes],
  ];
  for (const [what, want, got] of checks) {
    if (want !== undefined && want !== got) {
      throw new Error(`expected ${what}=${want}, decoded ${got}`);
    }
  }

  const hscPath = `${job.outPrefix}.hsc`;
  const hslPath = `${job.outPrefix}.hsl`;
  const hscBytes = encodeHsc1({ h, w, bands, values: cubeValues });
  const hslBytes = encodeHsl1({ h, w, values: labels });
  fs.writeFileSync(hscPath, hscBytes);
  fs.writeFileSync(hslPath, hslBytes);

  let labeled = 0;
  for (const count of Object.values(hist)) {
    labeled += count;
  }
  return {
    h, w, bands, classes, labeled,
    classHistogram: hist,
    valueRange: [lo, hi],
    outputs: {
      hsc: { path: hscPath, sha256: sha256(hscBytes) },
      hsl: { path: hslPath, sha256: sha256(hslBytes) },
    },
  };
}
