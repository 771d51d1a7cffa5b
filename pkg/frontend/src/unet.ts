/**
 * A minimal 3D encoder-decoder (one pooling level, skip connection, sigmoid
 * head) built from tfjs ops with explicitly seeded weights, so training runs
 * are reproducible. Inputs are [batch, x, y, z, channels].
 */
import * as tf from "@tensorflow/tfjs";

/** Deterministic float PRNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rng: () => number): number {
  let u = 0;
  let v = 0;
  while (u === 0) u = rng();
  while (v === 0) v = rng();
  return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
}

function heConv(rng: () => number, k: number, cin: number, cout: number): tf.Variable {
  const fanIn = k * k * k * cin;
  const std = Math.sqrt(2.0 / fanIn);
  const values = new Float32Array(k * k * k * cin * cout);
  for (let i = 0; i < values.length; i++) values[i] = gaussian(rng) * std;
  return tf.variable(tf.tensor5d(values, [k, k, k, cin, cout]));
}

function zeros(cout: number): tf.Variable {
  return tf.variable(tf.zeros([cout]));
}

export interface Unet3d {
  variables: tf.Variable[];
  forward: (x: tf.Tensor5D) => tf.Tensor5D;
  dispose: () => void;
}

/** Nearest-neighbor x2 upsampling: repeat indices along each spatial axis
 * with gather, which has gradients for any rank. */
function upsample2(x: tf.Tensor5D): tf.Tensor5D {
  return tf.tidy(() => {
    let out: tf.Tensor = x;
    for (let axis = 1; axis <= 3; axis++) {
      const size = out.shape[axis]!;
      const indices = new Int32Array(2 * size);
      for (let i = 0; i < size; i++) {
        indices[2 * i] = i;
        indices[2 * i + 1] = i;
      }
      out = tf.gather(out, tf.tensor1d(indices, "int32"), axis);
    }
    return out as tf.Tensor5D;
  });
}

export function buildUnet3d(inChannels: number, seed = 7, width = 8): Unet3d {
  const rng = makeRng(seed);
  const w1a = heConv(rng, 3, inChannels, width);
  const b1a = zeros(width);
  const w1b = heConv(rng, 3, width, width);
  const b1b = zeros(width);
  const w2a = heConv(rng, 3, width, 2 * width);
  const b2a = zeros(2 * width);
  const w2b = heConv(rng, 3, 2 * width, 2 * width);
  const b2b = zeros(2 * width);
  const w3a = heConv(rng, 3, 3 * width, width);
  const b3a = zeros(width);
  const w3b = heConv(rng, 3, width, width);
  const b3b = zeros(width);
  const wOut = heConv(rng, 1, width, 1);
  const bOut = zeros(1);

  const conv = (x: tf.Tensor5D, w: tf.Variable, b: tf.Variable) =>
    tf.relu(tf.add(tf.conv3d(x, w as unknown as tf.Tensor5D, 1, "same"), b)) as tf.Tensor5D;

  const forward = (x: tf.Tensor5D): tf.Tensor5D =>
    tf.tidy(() => {
      const e1 = conv(conv(x, w1a, b1a), w1b, b1b);
      const pooled = tf.maxPool3d(e1, 2, 2, "same");
      const e2 = conv(conv(pooled, w2a, b2a), w2b, b2b);
      const up = upsample2(e2);
      const merged = tf.concat([up, e1], 4) as tf.Tensor5D;
      const d1 = conv(conv(merged, w3a, b3a), w3b, b3b);
      const logits = tf.add(tf.conv3d(d1, wOut as unknown as tf.Tensor5D, 1, "same"), bOut);
      return tf.sigmoid(logits) as tf.Tensor5D;
    });

  const variables = [w1a, b1a, w1b, b1b, w2a, b2a, w2b, b2b, w3a, b3a, w3b, b3b, wOut, bOut];
  return {
    variables,
    forward,
    dispose: () => variables.forEach((v) => v.dispose()),
  };
}

/**
 * Weighted binary cross-entropy averaged over the free design region.
 * freeMask is 1 on voxels where the density is learnable, 0 elsewhere.
 */
export function weightedBce(
  pred: tf.Tensor,
  gt: tf.Tensor,
  freeMask: tf.Tensor,
  positiveWeight: number,
  eps = 1e-7,
): tf.Scalar {
  return tf.tidy(() => {
    const p = tf.clipByValue(pred, eps, 1 - eps);
    const perVoxel = tf.neg(
      tf.add(
        tf.mul(tf.mul(gt, Math.fround(positiveWeight)), tf.log(p)),
        tf.mul(tf.sub(1, gt), tf.log(tf.sub(1, p))),
      ),
    );
    const masked = tf.mul(perVoxel, freeMask);
    return tf.div(tf.sum(masked), tf.sum(freeMask)) as tf.Scalar;
  });
}
