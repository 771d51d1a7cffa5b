/**
 * Reader/writer for the sample and tensor directory formats.
 *
 * Layout per directory: a meta.json with a tensor manifest (file, dtype,
 * shape, crc32) plus one raw little-endian binary per tensor, C-contiguous
 * with z fastest. Scalar metadata carries both mm/GPa/MPa and SI values;
 * the SI fields are authoritative.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import { crc32 } from "node:zlib";

export const FORMAT_VERSION = 1;

export type Dtype = "float32" | "uint8" | "int8";

export interface TensorEntry {
  file: string;
  dtype: Dtype;
  shape: number[];
  crc32: number;
}

export interface Material {
  youngModulusPa: number;
  poissonRatio: number;
  yieldStressPa: number;
  penalizationP: number;
  rhoMin: number;
}

export interface Problem {
  dims: [number, number, number];
  voxelSizeM: [number, number, number];
  material: Material;
  /** [3, nx, ny, nz] flags, C-order */
  dirichlet: Uint8Array;
  /** [3, nx, ny, nz] force densities in N/m^3, C-order */
  forces: Float32Array;
  /** [1, nx, ny, nz] values in {-1, 0, 1}, C-order */
  design: Int8Array;
  volumeFractionMax: number;
}

export const DEFAULT_MATERIAL: Material = {
  youngModulusPa: 70e9,
  poissonRatio: 0.3,
  yieldStressPa: 450e6,
  penalizationP: 3.0,
  rhoMin: 1e-3,
};

function toBytes(data: Float32Array | Uint8Array | Int8Array, dtype: Dtype): Buffer {
  if (dtype === "float32") {
    const f = data as Float32Array;
    const buf = Buffer.alloc(f.length * 4);
    for (let i = 0; i < f.length; i++) buf.writeFloatLE(f[i], i * 4);
    return buf;
  }
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength);
}

function fromBytes(buf: Buffer, dtype: Dtype): Float32Array | Uint8Array | Int8Array {
  if (dtype === "float32") {
    const out = new Float32Array(buf.length / 4);
    for (let i = 0; i < out.length; i++) out[i] = buf.readFloatLE(i * 4);
    return out;
  }
  if (dtype === "int8") return new Int8Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.length));
  return new Uint8Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.length));
}

function writeRaw(dir: string, name: string, data: Float32Array | Uint8Array | Int8Array, dtype: Dtype, shape: number[]): TensorEntry {
  const expected = shape.reduce((a, b) => a * b, 1);
  if (data.length !== expected) {
    throw new Error(`tensor ${name}: ${data.length} values for shape [${shape}]`);
  }
  const buf = toBytes(data, dtype);
  fs.writeFileSync(path.join(dir, name), buf);
  return { file: name, dtype, shape, crc32: crc32(buf) };
}

function readRaw(dir: string, entry: TensorEntry): Float32Array | Uint8Array | Int8Array {
  const buf = fs.readFileSync(path.join(dir, entry.file));
  const itemsize = entry.dtype === "float32" ? 4 : 1;
  const expected = entry.shape.reduce((a, b) => a * b, 1) * itemsize;
  if (buf.length !== expected) {
    throw new Error(`tensor ${entry.file}: expected ${expected} bytes, found ${buf.length}`);
  }
  if (crc32(buf) !== entry.crc32) {
    throw new Error(`tensor ${entry.file}: checksum mismatch`);
  }
  return fromBytes(buf, entry.dtype);
}

/** JSON with sorted keys, matching the primary's deterministic style. */
function dumpJson(value: unknown): string {
  const sort = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sort);
    if (v !== null && typeof v === "object") {
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(v as object).sort()) {
        out[key] = sort((v as Record<string, unknown>)[key]);
      }
      return out;
    }
    return v;
  };
  return JSON.stringify(sort(value), null, 2) + "\n";
}

export function writeSample(dir: string, problem: Problem, gt?: Float32Array): void {
  fs.mkdirSync(dir, { recursive: true });
  const [nx, ny, nz] = problem.dims;
  const m = problem.material;
  const tensors: Record<string, TensorEntry> = {
    dirichlet: writeRaw(dir, "dirichlet.u8", problem.dirichlet, "uint8", [3, nx, ny, nz]),
    forces: writeRaw(dir, "forces.f32", problem.forces, "float32", [3, nx, ny, nz]),
    design: writeRaw(dir, "design.i8", problem.design, "int8", [1, nx, ny, nz]),
  };
  if (gt) {
    tensors.density = writeRaw(dir, "density.f32", gt, "float32", [nx, ny, nz]);
  }
  const meta = {
    kind: "sample",
    version: FORMAT_VERSION,
    dims: problem.dims,
    voxel_size_mm: problem.voxelSizeM.map((s) => s * 1e3),
    voxel_size_m: problem.voxelSizeM,
    material: {
      young_modulus_gpa: m.youngModulusPa / 1e9,
      young_modulus_pa: m.youngModulusPa,
      poisson_ratio: m.poissonRatio,
      yield_stress_mpa: m.yieldStressPa / 1e6,
      yield_stress_pa: m.yieldStressPa,
      penalization_p: m.penalizationP,
      rho_min: m.rhoMin,
    },
    volume_fraction_max: problem.volumeFractionMax,
    tensors,
  };
  fs.writeFileSync(path.join(dir, "meta.json"), dumpJson(meta));
}

export function readSample(dir: string): { problem: Problem; gt: Float32Array | null } {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, "meta.json"), "utf8"));
  if (meta.version !== FORMAT_VERSION) {
    throw new Error(`unsupported format version ${meta.version}`);
  }
  const mm = meta.material;
  const problem: Problem = {
    dims: meta.dims,
    voxelSizeM: meta.voxel_size_m,
    material: {
      youngModulusPa: mm.young_modulus_pa,
      poissonRatio: mm.poisson_ratio,
      yieldStressPa: mm.yield_stress_pa,
      penalizationP: mm.penalization_p,
      rhoMin: mm.rho_min,
    },
    dirichlet: readRaw(dir, meta.tensors.dirichlet) as Uint8Array,
    forces: readRaw(dir, meta.tensors.forces) as Float32Array,
    design: readRaw(dir, meta.tensors.design) as Int8Array,
    volumeFractionMax: meta.volume_fraction_max,
  };
  const gt = meta.tensors.density ? (readRaw(dir, meta.tensors.density) as Float32Array) : null;
  return { problem, gt };
}

export interface TensorDir {
  shape: number[];
  data: Float32Array;
  channelTags?: string[];
  kind: string;
}

export function readTensorDir(dir: string): TensorDir {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, "meta.json"), "utf8"));
  if (meta.version !== FORMAT_VERSION) {
    throw new Error(`unsupported format version ${meta.version}`);
  }
  const entry: TensorEntry = meta.tensors.tensor;
  return {
    shape: entry.shape,
    data: readRaw(dir, entry) as Float32Array,
    channelTags: meta.channel_tags,
    kind: meta.kind,
  };
}

export function writeTensorDir(
  dir: string,
  shape: number[],
  data: Float32Array,
  kind = "tensor",
  channelTags?: string[],
): void {
  fs.mkdirSync(dir, { recursive: true });
  const entry = writeRaw(dir, "tensor.f32", data, "float32", shape);
  const meta: Record<string, unknown> = {
    kind,
    version: FORMAT_VERSION,
    shape,
    tensors: { tensor: entry },
  };
  if (channelTags) {
    if (channelTags.length !== shape[0]) {
      throw new Error(`${channelTags.length} channel tags for ${shape[0]} channels`);
    }
    meta.channel_tags = channelTags;
  }
  fs.writeFileSync(path.join(dir, "meta.json"), dumpJson(meta));
}
