/** Integrity checks over a converted HSC1/HSL1 pair. */

import * as fs from "fs";

import { histogram } from "./convert";
import { decodeHsc1, decodeHsl1 } from "./hsformats";

export interface VerifyReport {
  ok: boolean;
  h: number;
  w: number;
  bands: number;
  classes: number;
  labeled: number;
  classHistogram: Record<string, number>;
}

export function verify(cubePath: string, labelPath: string): VerifyReport {
  const cube = decodeHsc1(fs.readFileSync(cubePath));
  const raster = decodeHsl1(fs.readFileSync(labelPath));
  if (cube.h !== raster.h || cube.w !== raster.w) {
    throw new Error(
      `cube raster ${cube.h}x${cube.w} does not match labels ${raster.h}x${raster.w}`,
    );
  }
  for (const v of cube.values) {
    if (!Number.isFinite(v)) {
      throw new Error("cube contains non-finite values");
    }
  }
  for (const v of raster.values) {
    if (v < 0) {
      throw new Error(`negative label ${v}`);
    }
  }
  const hist = histogram(raster.values);
  let labeled = 0;
  for (const count of Object.values(hist)) {
    labeled += count;
  }
  const classes = Object.keys(hist).length
    ? Math.max(...Object.keys(hist).map(Number))
    : 0;
  return {
    ok: true,
    h: cube.h,
    w: cube.w,
    bands: cube.bands,
    classes,
    labeled,
    classHistogram: hist,
  };
}
