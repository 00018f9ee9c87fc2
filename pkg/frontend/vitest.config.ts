import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    globalSetup: ["tests/contract/server.ts"],
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
