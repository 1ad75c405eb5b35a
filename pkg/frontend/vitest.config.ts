import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["test/**/*.test.ts"],
    testTimeout: 55_000,
    hookTimeout: 55_000,
    // the suite drives one shared live service; keep tests sequential
    fileParallelism: false,
  },
});
