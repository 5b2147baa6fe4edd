#!/usr/bin/env node
/**
 * CLI: convert MAT-file scenes to the engine's binary formats, or verify a
 * converted pair.
 *
 *   convert --cube FILE[:var] --gt FILE[:var] --out-prefix PATH
 *           [--expect-dims HxWxB] [--expect-classes K]
 *   verify  --cube FILE --labels FILE
 *
 * Both subcommands print a JSON report to stdout and exit non-zero on any
 * failed check.
 */

import { convert } from "./convert";
import { verify } from "./verify";

function splitVar(spec: string): { path: string; variable?: string } {
  // allow drive-letter-free "file.mat:varname"; a lone path has no colon tail
  const idx = spec.lastIndexOf(":");
  if (idx > 1 && !spec.slice(idx + 1).includes("/") && idx !== spec.length - 1) {
    return { path: spec.slice(0, idx), variable: spec.slice(idx + 1) };
  }
  return { path: spec };
}

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "convert") {
      const flags = parseFlags(rest);
      const cube = splitVar(need(flags, "cube"));
      const gt = splitVar(need(flags, "gt"));
      const expect: { h?: number; w?: number; bands?: number; classes?: number } = {};
      const dims = flags.get("expect-dims");
      if (dims !== undefined) {
        const parts = dims.split("x").map(Number);
        if (parts.length !== 3 || parts.some((p) => !Number.isInteger(p))) {
          throw new Error(`--expect-dims wants HxWxB, got ${dims}`);
        }
        [expect.h, expect.w, expect.bands] = parts;
      }
      const classes = flags.get("expect-classes");
      if (classes !== undefined) {
        expect.classes = Number(classes);
      }
      const summary = convert({
        cubePath: cube.path,
        cubeVar: cube.variable,
        gtPath: gt.path,
        gtVar: gt.variable,
        outPrefix: need(flags, "out-prefix"),
        expect,
      });
      process.stdout.write(JSON.stringify(summary, null, 2) + "\n");
      return 0;
    }
    if (command === "verify") {
      const flags = parseFlags(rest);
      const report = verify(need(flags, "cube"), need(flags, "labels"));
      process.stdout.write(JSON.stringify(report, null, 2) + "\n");
      return report.ok ? 0 : 1;
    }
    process.stderr.write("usage: cli.js convert|verify [flags]\n");
    return 2;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stdout.write(JSON.stringify({ ok: false, error: message }) + "\n");
    process.stderr.write(`error: ${message}\n`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
