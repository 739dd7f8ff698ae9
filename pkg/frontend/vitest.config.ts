import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    // flow tests boot the real gateway in a subprocess
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
