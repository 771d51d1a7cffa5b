/**
 * Synthetic 8x8x8 training data: bracket problems with a clamped base plate
 * and one downward top-face load, ground truths produced by the primary's
 * density optimizer. Validation problems come in exact mirror/rotation
 * orbits of held-out base problems, so the set is closed under the square
 * symmetry subgroup used by the demo.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { DEFAULT_MATERIAL, Problem, readSample, readTensorDir, writeSample } from "./format";
import { runCli } from "./primary";

export const N = 8;

function idx4(c: number, i: number, j: number, k: number): number {
  return ((c * N + i) * N + j) * N + k;
}

export type Orbit = "id" | "mx" | "my" | "rz180";

function mapPos(orbit: Orbit, i: number, j: number): [number, number] {
  switch (orbit) {
    case "id":
      return [i, j];
    case "mx":
      return [N - 1 - i, j];
    case "my":
      return [i, N - 1 - j];
    case "rz180":
      return [N - 1 - i, N - 1 - j];
  }
}

/**
 * One bracket problem: base plate z=0 fully clamped, a single -z load at
 * (loadI, loadJ) on the top face, mapped through the orbit element.
 */
export function bracketProblem(loadI: number, loadJ: number, orbit: Orbit = "id"): Problem {
  const dirichlet = new Uint8Array(3 * N * N * N);
  const forces = new Float32Array(3 * N * N * N);
  const design = new Int8Array(N * N * N).fill(-1);
  for (let i = 0; i < N; i++) {
    for (let j = 0; j < N; j++) {
      for (let c = 0; c < 3; c++) dirichlet[idx4(c, i, j, 0)] = 1;
      design[idx4(0, i, j, 0)] = 1;
    }
  }
  const [li, lj] = mapPos(orbit, loadI, loadJ);
  forces[idx4(2, li, lj, N - 1)] = -2e7;
  design[idx4(0, li, lj, N - 1)] = 1;
  return {
    dims: [N, N, N],
    voxelSizeM: [1e-3, 1e-3, 1e-3],
    material: DEFAULT_MATERIAL,
    dirichlet,
    forces,
    design,
    volumeFractionMax: 0.3,
  };
}

export interface SampleOnDisk {
  dir: string;
  problem: Problem;
  gt: Float32Array;
}

/** Write the problem, optimize it with the primary, and attach the result as gt. */
export function makeSample(dir: string, loadI: number, loadJ: number, orbit: Orbit = "id"): SampleOnDisk {
  const problem = bracketProblem(loadI, loadJ, orbit);
  writeSample(dir, problem);
  const optDir = path.join(dir, "opt");
  runCli([
    "optimize", dir, "--out", optDir,
    "--vmax", "0.3", "--max-iters", "40", "--filter-radius", "1.5",
  ]);
  const density = readTensorDir(path.join(optDir, "density"));
  writeSample(dir, problem, density.data);
  fs.rmSync(optDir, { recursive: true });
  const { gt } = readSample(dir);
  return { dir, problem, gt: gt! };
}

/** Positive-class weight = void/solid ratio over free voxels of the set. */
export function bceWeightFromSet(samples: SampleOnDisk[], threshold = 0.5): number {
  let solid = 0;
  let voidCount = 0;
  for (const s of samples) {
    for (let v = 0; v < s.gt.length; v++) {
      if (s.problem.design[v] !== -1) continue;
      if (s.gt[v] >= threshold) solid += 1;
      else voidCount += 1;
    }
  }
  if (solid === 0 || voidCount === 0) {
    throw new Error(`degenerate training set: solid=${solid}, void=${voidCount}`);
  }
  return voidCount / solid;
}
