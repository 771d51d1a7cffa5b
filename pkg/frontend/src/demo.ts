/**
 * End-to-end toy ablation: train a small 3D encoder-decoder on bracket
 * problems whose loads all sit near the +x edge, then compare the raw
 * predictor against its group-averaged version on a validation set that is
 * closed under mirrors and 180-degree rotation. The wrapped predictor sees
 * every orientation through its own training distribution, so its fail
 * percentage drops.
 *
 * Everything numeric that is not the network itself (ground-truth
 * generation, preprocessing, group averaging, verdicts) runs in the primary
 * toolkit behind its CLI.
 */
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { evaluateSample, InputTensor, preprocess, wrapPredict } from "./bindings";
import { bceWeightFromSet, makeSample, Orbit, SampleOnDisk } from "./data";
import { buildUnet3d, weightedBce } from "./unet";

const TRAIN_POSITIONS: Array<[number, number]> = [
  [6, 1], [6, 2], [6, 4], [6, 5],
  [5, 1], [5, 2], [5, 4], [5, 5],
];
const VALIDATION_BASES: Array<[number, number]> = [
  [6, 3],
  [5, 6],
];
const ORBITS: Orbit[] = ["id", "mx", "my", "rz180"];
const EPOCHS = 5;
const BATCH = 1;
const LEARNING_RATE = 0.006;
const SEED = 7;
const EVAL_THRESHOLD = 0.3;

export interface DemoResult {
  /** weighted BCE on the full training set at initialization */
  initialBce: number;
  /** mean minibatch weighted BCE per epoch, epochs 1..EPOCHS */
  bceHistory: number[];
  bceWeight: number;
  rawFailPct: number;
  wrappedFailPct: number;
  rawMeanIou: number;
  wrappedMeanIou: number;
}

interface TrainingTensors {
  inputs: tf.Tensor5D;
  labels: tf.Tensor5D;
  freeMask: tf.Tensor5D;
}

function toInputTensor5d(data: Float32Array, shape: number[]): tf.Tensor {
  const [c, nx, ny, nz] = shape;
  return tf.tensor4d(data, [c, nx, ny, nz]).transpose([1, 2, 3, 0]);
}

function loadTraining(samples: SampleOnDisk[], cfgPath: string, scratch: string): TrainingTensors {
  const inputs: tf.Tensor[] = [];
  const labels: tf.Tensor[] = [];
  const masks: tf.Tensor[] = [];
  for (const sample of samples) {
    const pre = preprocess(sample.dir, path.join(scratch, `pre-${path.basename(sample.dir)}`), {
      kinds: "trivial",
      cfg: cfgPath,
    });
    inputs.push(toInputTensor5d(pre.data, pre.shape));
    const [nx, ny, nz] = sample.problem.dims;
    labels.push(tf.tensor3d(sample.gt, [nx, ny, nz]).expandDims(3));
    const free = new Float32Array(sample.gt.length);
    for (let v = 0; v < free.length; v++) free[v] = sample.problem.design[v] === -1 ? 1 : 0;
    masks.push(tf.tensor3d(free, [nx, ny, nz]).expandDims(3));
  }
  return {
    inputs: tf.stack(inputs) as tf.Tensor5D,
    labels: tf.stack(labels) as tf.Tensor5D,
    freeMask: tf.stack(masks) as tf.Tensor5D,
  };
}

export async function runDemo(workDir?: string, log: (line: string) => void = console.log): Promise<DemoResult> {
  const work = workDir ?? fs.mkdtempSync(path.join(os.tmpdir(), "topovox-demo-"));
  fs.mkdirSync(work, { recursive: true });
  log(`workspace: ${work}`);

  log(`generating ${TRAIN_POSITIONS.length} training samples (loads near +x)...`);
  const training = TRAIN_POSITIONS.map(([i, j], n) =>
    makeSample(path.join(work, `train-${n}`), i, j, "id"),
  );

  const cfgPath = path.join(work, "norm.json");
  preprocess(training[0].dir, path.join(work, "pre-fit"), {
    kinds: "trivial",
    fit: training.map((s) => s.dir),
    saveCfg: cfgPath,
  });

  const posWeight = bceWeightFromSet(training);
  log(`positive-class weight from the training set: ${posWeight.toFixed(3)}`);

  const { inputs, labels, freeMask } = loadTraining(training, cfgPath, work);
  const net = buildUnet3d(inputs.shape[4]!, SEED);
  const optimizer = tf.train.adam(LEARNING_RATE);

  const initLoss = tf.tidy(
    () => weightedBce(net.forward(inputs), labels, freeMask, posWeight).dataSync()[0],
  );
  const bceHistory: number[] = [];
  log(`epoch 0 (init)  weighted BCE ${initLoss.toFixed(4)}`);
  const nSamples = inputs.shape[0]!;
  for (let epoch = 1; epoch <= EPOCHS; epoch++) {
    const stepLosses: number[] = [];
    for (let start = 0; start < nSamples; start += BATCH) {
      const stop = Math.min(start + BATCH, nSamples);
      const cost = optimizer.minimize(
        () =>
          tf.tidy(() => {
            const x = inputs.slice([start, 0, 0, 0, 0], [stop - start, -1, -1, -1, -1]) as tf.Tensor5D;
            const y = labels.slice([start, 0, 0, 0, 0], [stop - start, -1, -1, -1, -1]);
            const m = freeMask.slice([start, 0, 0, 0, 0], [stop - start, -1, -1, -1, -1]);
            return weightedBce(net.forward(x), y, m, posWeight);
          }),
        true,
      )!;
      stepLosses.push(cost.dataSync()[0]);
      cost.dispose();
    }
    const mean = stepLosses.reduce((a, b) => a + b, 0) / stepLosses.length;
    bceHistory.push(mean);
    log(`epoch ${epoch}       weighted BCE ${mean.toFixed(4)}`);
  }

  const callback = (input: InputTensor): Float32Array =>
    tf.tidy(() => {
      const x = toInputTensor5d(input.data, input.shape).expandDims(0) as tf.Tensor5D;
      const pred = net.forward(x);
      return pred.dataSync() as Float32Array;
    });

  log("\ngenerating the orbit-closed validation set...");
  const validation: Array<{ sample: SampleOnDisk; orbit: Orbit }> = [];
  for (const [i, j] of VALIDATION_BASES) {
    for (const orbit of ORBITS) {
      const dir = path.join(work, `val-${i}_${j}-${orbit}`);
      validation.push({ sample: makeSample(dir, i, j, orbit), orbit });
    }
  }

  let rawFails = 0;
  let wrappedFails = 0;
  let rawIou = 0;
  let wrappedIou = 0;
  log("sample            raw            wrapped");
  for (const { sample, orbit } of validation) {
    const name = path.basename(sample.dir);
    const rawOut = path.join(sample.dir, "pred-raw");
    const wrapOut = path.join(sample.dir, "pred-wrapped");
    await wrapPredict(callback, sample.dir, rawOut, { group: "none", kinds: "trivial", cfg: cfgPath });
    await wrapPredict(callback, sample.dir, wrapOut, { group: "d4", kinds: "trivial", cfg: cfgPath });
    const raw = evaluateSample(sample.dir, rawOut, { threshold: EVAL_THRESHOLD });
    const wrapped = evaluateSample(sample.dir, wrapOut, { threshold: EVAL_THRESHOLD });
    rawFails += raw.failed ? 1 : 0;
    wrappedFails += wrapped.failed ? 1 : 0;
    rawIou += raw.iou;
    wrappedIou += wrapped.iou;
    log(
      `${name.padEnd(16)}  ${(raw.reason || "ok").padEnd(13)}  ${(wrapped.reason || "ok").padEnd(13)}` +
        `  iou ${raw.iou.toFixed(3)} vs ${wrapped.iou.toFixed(3)}`,
    );
  }

  const result: DemoResult = {
    initialBce: initLoss,
    bceHistory,
    bceWeight: posWeight,
    rawFailPct: (100 * rawFails) / validation.length,
    wrappedFailPct: (100 * wrappedFails) / validation.length,
    rawMeanIou: rawIou / validation.length,
    wrappedMeanIou: wrappedIou / validation.length,
  };
  log(`\nfail percentage: raw ${result.rawFailPct.toFixed(1)}%  wrapped ${result.wrappedFailPct.toFixed(1)}%`);
  log(`mean IoU:        raw ${result.rawMeanIou.toFixed(3)}  wrapped ${result.wrappedMeanIou.toFixed(3)}`);

  net.dispose();
  inputs.dispose();
  labels.dispose();
  freeMask.dispose();
  return result;
}

if (require.main === module) {
  runDemo().then(
    (result) => {
      const improved = result.wrappedFailPct < result.rawFailPct;
      console.log(improved ? "\nwrapped predictor failed less: OK" : "\nno improvement: NOT OK");
      process.exit(improved ? 0 : 1);
    },
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}
