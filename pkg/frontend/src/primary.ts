/**
 * Subprocess runner for the primary command-line tool. All numeric work
 * happens on the other side of this boundary; this module only moves argv
 * and files.
 */
import { spawn, spawnSync } from "node:child_process";

const PYTHON = process.env.TOPOVOX_PYTHON ?? "python3";

export interface CliResult {
  stdout: string;
  stderr: string;
  code: number;
}

export function runCli(args: string[], opts: { allowFailure?: boolean } = {}): CliResult {
  const proc = spawnSync(PYTHON, ["-m", "topovox", ...args], {
    encoding: "utf8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw proc.error;
  }
  const code = proc.status ?? -1;
  if (code !== 0 && !opts.allowFailure) {
    throw new Error(`topovox ${args[0]} exited with ${code}: ${proc.stderr.trim()}`);
  }
  return { stdout: proc.stdout, stderr: proc.stderr, code };
}

/** Start the CLI without waiting; the caller drives it to completion. */
export function startCli(args: string[]) {
  return spawn(PYTHON, ["-m", "topovox", ...args], { stdio: ["ignore", "pipe", "pipe"] });
}
