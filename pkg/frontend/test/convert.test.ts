import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { convert, detectCube, detectGt } from "../src/convert";
import { decodeHsc1, decodeHsl1 } from "../src/hsformats";
import { parseMatBuffer } from "../src/matfile";
import { verify } from "../src/verify";
import { MX_DOUBLE, MX_INT32, MX_SINGLE, matFile } from "./matwriter";

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "matconv-"));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function writeScene(options: { compress?: boolean } = {}): string {
  // 2x2x3 cube, column-major: value = r + 10c + 100b; labels 0..2
  const cubeValues: number[] = [];
  for (let b = 0; b < 3; b++) {
    for (let c = 0; c < 2; c++) {
      for (let r = 0; r < 2; r++) {
        cubeValues.push(r + 10 * c + 100 * b);
      }
    }
  }
  const gtValues = [0, 1, 2, 1]; // column-major 2x2
  const file = path.join(dir, "scene.mat");
  fs.writeFileSync(
    file,
    matFile(
      [
        { name: "cube", dims: [2, 2, 3], classType: MX_SINGLE, dataType: 7, values: cubeValues },
        { name: "gt", dims: [2, 2], classType: MX_INT32, dataType: 5, values: gtValues },
      ],
      options,
    ),
  );
  return file;
}

describe("conversion", () => {
  it("writes an HSC1 payload of exactly h*w*bands floats", () => {
    const file = writeScene();
    const summary = convert({
      cubePath: file, gtPath: file, outPrefix: path.join(dir, "out"),
    });
    expect(summary.h).toBe(2);
    expect(summary.w).toBe(2);
    expect(summary.bands).toBe(3);
    const hsc = fs.readFileSync(path.join(dir, "out.hsc"));
    expect(hsc.length).toBe(16 + 12 * 4); // header + exactly 12 floats
    const cube = decodeHsc1(hsc);
    // (r, c, b) value = r + 10c + 100b in row-major band-interleaved order
    const want: number[] = [];
    for (let r = 0; r < 2; r++) {
      for (let c = 0; c < 2; c++) {
        for (let b = 0; b < 3; b++) {
          want.push(r + 10 * c + 100 * b);
        }
      }
    }
    expect(Array.from(cube.values)).toEqual(want);
  });

  it("round-trips labels and reports the class histogram", () => {
    const file = writeScene();
    const summary = convert({
      cubePath: file, gtPath: file, outPrefix: path.join(dir, "out"),
    });
    const raster = decodeHsl1(fs.readFileSync(path.join(dir, "out.hsl")));
    // column-major [0,1,2,1] -> row-major [[0,2],[1,1]]
    expect(Array.from(raster.values)).toEqual([0, 2, 1, 1]);
    expect(summary.classHistogram).toEqual({ "1": 2, "2": 1 });
    expect(summary.labeled).toBe(3);
    expect(summary.classes).toBe(2);
  });

  it("is idempotent: re-running produces byte-identical outputs", () => {
    const file = writeScene({ compress: true });
    const job = { cubePath: file, gtPath: file, outPrefix: path.join(dir, "out") };
    convert(job);
    const first = [
      fs.readFileSync(path.join(dir, "out.hsc")),
      fs.readFileSync(path.join(dir, "out.hsl")),
    ];
    const summary = convert(job);
    expect(fs.readFileSync(path.join(dir, "out.hsc")).equals(first[0])).toBe(true);
    expect(fs.readFileSync(path.join(dir, "out.hsl")).equals(first[1])).toBe(true);
    expect(summary.outputs.hsc.sha256).toHaveLength(64);
  });

  it("verify passes on anything convert produced", () => {
    const file = writeScene();
    convert({ cubePath: file, gtPath: file, outPrefix: path.join(dir, "out") });
    const report = verify(path.join(dir, "out.hsc"), path.join(dir, "out.hsl"));
    expect(report.ok).toBe(true);
    expect(report.classHistogram).toEqual({ "1": 2, "2": 1 });
    expect(report.bands).toBe(3);
  });

  it("auto-detects the largest 3-D array and the matching integer raster", () => {
    const file = writeScene();
    const vars = parseMatBuffer(fs.readFileSync(file));
    expect(detectCube(vars).name).toBe("cube");
    expect(detectGt(vars, 2, 2).name).toBe("gt");
  });

  it("honors explicit variable names", () => {
    const file = writeScene();
    const summary = convert({
      cubePath: file, cubeVar: "cube", gtPath: file, gtVar: "gt",
      outPrefix: path.join(dir, "named"),
    });
    expect(summary.bands).toBe(3);
    expect(() =>
      convert({
        cubePath: file, cubeVar: "nope", gtPath: file,
        outPrefix: path.join(dir, "x"),
      }),
    ).toThrow(/not found/);
  });

  it("rejects non-integer ground truth", () => {
    const file = path.join(dir, "bad.mat");
    fs.writeFileSync(
      file,
      matFile([
        { name: "cube", dims: [2, 2, 2], classType: MX_DOUBLE, dataType: 9,
          values: [1, 2, 3, 4, 5, 6, 7, 8] },
        { name: "gt", dims: [2, 2], classType: MX_DOUBLE, dataType: 9,
          values: [0, 0.5, 1, 1] },
      ]),
    );
    expect(() =>
      convert({ cubePath: file, gtPath: file, gtVar: "gt", outPrefix: path.join(dir, "x") }),
    ).toThrow(/non-integer/);
  });

  it("rejects dimension mismatches and honors expectations", () => {
    const file = path.join(dir, "mismatch.mat");
    fs.writeFileSync(
      file,
      matFile([
        { name: "cube", dims: [2, 2, 2], classType: MX_DOUBLE, dataType: 9,
          values: [1, 2, 3, 4, 5, 6, 7, 8] },
        { name: "gt", dims: [3, 2], classType: MX_INT32, dataType: 5,
          values: [0, 1, 0, 1, 0, 1] },
      ]),
    );
    expect(() =>
      convert({ cubePath: file, gtPath: file, gtVar: "gt", outPrefix: path.join(dir, "x") }),
    ).toThrow(/does not match/);

    const ok = writeScene();
    expect(() =>
      convert({
        cubePath: ok, gtPath: ok, outPrefix: path.join(dir, "y"),
        expect: { bands: 7 },
      }),
    ).toThrow(/expected bands=7/);
  });

  it("verify names truncated payloads precisely", () => {
    const file = writeScene();
    convert({ cubePath: file, gtPath: file, outPrefix: path.join(dir, "out") });
    const hsc = fs.readFileSync(path.join(dir, "out.hsc"));
    fs.writeFileSync(path.join(dir, "short.hsc"), hsc.subarray(0, hsc.length - 4));
    expect(() =>
      verify(path.join(dir, "short.hsc"), path.join(dir, "out.hsl")),
    ).toThrow(/payload shorter than header implies/);
  });
});
