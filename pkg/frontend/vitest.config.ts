import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 300_000,
    hookTimeout: 300_000,
    // subprocess-heavy suites; keep files sequential for readable output
    fileParallelism: false,
  },
});
