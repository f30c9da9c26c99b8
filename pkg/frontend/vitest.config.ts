import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the e2e test builds a synthetic market and boots the real server
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
