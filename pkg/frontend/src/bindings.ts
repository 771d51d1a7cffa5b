/**
 * The three host-facing operations: preprocess, group-averaged prediction
 * around an in-process callback, and structure evaluation. Each one drives
 * the primary toolkit through its command line and file formats, so results
 * are byte-identical to direct CLI runs on the same inputs.
 *
 * wrapPredict inverts the external-predictor protocol: the CLI performs the
 * group averaging and, for every transformed problem, invokes a small bridge
 * script that hands the preprocessed tensor back to this process, where the
 * callback produces the density.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { readTensorDir, TensorDir, writeTensorDir } from "./format";
import { runCli, startCli } from "./primary";

export interface PreprocessOptions {
  /** comma list of trivial,pde,hull (CLI syntax) */
  kinds?: string;
  pdeOutput?: string;
  /** sample dirs to fit normalization on; defaults to the sample itself */
  fit?: string[];
  /** JSON file with previously fitted constants (wins over fit) */
  cfg?: string;
  saveCfg?: string;
}

function preprocArgs(samplePath: string, opts: PreprocessOptions): string[] {
  const args: string[] = ["--kinds", opts.kinds ?? "trivial"];
  if (opts.pdeOutput) args.push("--pde-output", opts.pdeOutput);
  if (opts.cfg) {
    args.push("--cfg", opts.cfg);
  } else {
    for (const dir of opts.fit ?? [samplePath]) args.push("--fit", dir);
  }
  return args;
}

export function preprocess(samplePath: string, outDir: string, opts: PreprocessOptions = {}): TensorDir {
  const args = ["preprocess", samplePath, "--out", outDir, ...preprocArgs(samplePath, opts)];
  if (opts.saveCfg) args.push("--save-cfg", opts.saveCfg);
  runCli(args);
  return readTensorDir(outDir);
}

export interface InputTensor {
  /** [C, nx, ny, nz] values, C-order with z fastest */
  data: Float32Array;
  shape: number[];
  channelTags?: string[];
}

export type PredictorCallback = (input: InputTensor) => Float32Array;

export interface WrapOptions extends PreprocessOptions {
  /** symmetry group applied by the primary: none, d4 or oh */
  group?: "none" | "d4" | "oh";
  /** scratch directory; a fresh temp dir by default */
  workDir?: string;
  pollMs?: number;
}

const BRIDGE = path.join(__dirname, "..", "bin", "bridge.cjs");

async function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function wrapPredict(
  callback: PredictorCallback,
  samplePath: string,
  outDir: string,
  opts: WrapOptions = {},
): Promise<TensorDir> {
  const work = opts.workDir ?? fs.mkdtempSync(path.join(require("node:os").tmpdir(), "topovox-bridge-"));
  const bridgeDir = path.join(work, "bridge");
  const ioDir = path.join(work, "io");
  fs.mkdirSync(bridgeDir, { recursive: true });

  const args = [
    "predict", samplePath,
    "--out", outDir,
    "--group", opts.group ?? "d4",
    "--predictor", "external",
    "--external-cmd", `node ${BRIDGE} ${bridgeDir} {io_dir}`,
    "--io-dir", ioDir,
    "--timeout", "600",
    ...preprocArgs(samplePath, opts),
  ];
  const child = startCli(args);
  let stderr = "";
  child.stderr!.on("data", (chunk) => (stderr += chunk));
  const exited = new Promise<number>((resolve) => child.on("close", (code) => resolve(code ?? -1)));

  const handled = new Set<number>();
  let done = false;
  void exited.then(() => (done = true));
  while (!done) {
    for (const name of fs.readdirSync(bridgeDir)) {
      const match = /^req-(\d+)\.ready$/.exec(name);
      if (!match) continue;
      const id = Number(match[1]);
      if (handled.has(id)) continue;
      handled.add(id);
      const meta = JSON.parse(fs.readFileSync(path.join(bridgeDir, `req-${id}.meta.json`), "utf8"));
      const raw = fs.readFileSync(path.join(bridgeDir, `req-${id}.f32`));
      const data = new Float32Array(raw.length / 4);
      for (let i = 0; i < data.length; i++) data[i] = raw.readFloatLE(i * 4);
      const density = callback({ data, shape: meta.shape, channelTags: meta.channel_tags });
      const spatial = meta.shape.slice(1).reduce((a: number, b: number) => a * b, 1);
      if (density.length !== spatial) {
        child.kill();
        throw new Error(`callback returned ${density.length} values, expected ${spatial}`);
      }
      const buf = Buffer.alloc(density.length * 4);
      for (let i = 0; i < density.length; i++) buf.writeFloatLE(density[i], i * 4);
      const tmp = path.join(bridgeDir, `resp-${id}.tmp`);
      fs.writeFileSync(tmp, buf);
      fs.renameSync(tmp, path.join(bridgeDir, `resp-${id}.f32`));
      fs.writeFileSync(path.join(bridgeDir, `resp-${id}.done`), "");
    }
    await sleep(opts.pollMs ?? 5);
  }
  const code = await exited;
  if (code !== 0) {
    throw new Error(`topovox predict exited with ${code}: ${stderr.trim()}`);
  }
  return readTensorDir(outDir);
}

export interface EvalRecord {
  id: string;
  iou: number;
  failed: boolean;
  reason: "" | "disconnected" | "overstressed";
  maxVm: number;
}

export interface EvaluateOptions {
  threshold?: number;
  tolFactor?: number;
}

export function evaluateSample(samplePath: string, predPath: string, opts: EvaluateOptions = {}): EvalRecord {
  const args = ["evaluate", `${samplePath}=${predPath}`, "--out", "-"];
  if (opts.threshold !== undefined) args.push("--threshold", String(opts.threshold));
  if (opts.tolFactor !== undefined) args.push("--tol-factor", String(opts.tolFactor));
  const result = runCli(args);
  const lines = result.stdout.trim().split("\n");
  const fields = lines[1].split(",");
  return {
    id: fields[0],
    iou: Number(fields[1]),
    failed: fields[2] === "1",
    reason: fields[3] as EvalRecord["reason"],
    maxVm: Number(fields[4]),
  };
}

/** Evaluate an in-memory density prediction against a stored sample. */
export function evaluateArray(
  pred: Float32Array,
  dims: [number, number, number],
  samplePath: string,
  opts: EvaluateOptions & { workDir?: string } = {},
): EvalRecord {
  const spatial = dims[0] * dims[1] * dims[2];
  if (pred.length !== spatial) {
    throw new Error(`pred: ${pred.length} values do not match dims [${dims}] (${spatial})`);
  }
  const work = opts.workDir ?? fs.mkdtempSync(path.join(require("node:os").tmpdir(), "topovox-eval-"));
  const predDir = path.join(work, "pred");
  writeTensorDir(predDir, [...dims], pred, "density");
  return evaluateSample(samplePath, predDir, opts);
}
