import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    // the page under test talks to live servers on other local ports, which
    // the DOM shim would otherwise veto as cross-origin
    environmentOptions: {
      happyDOM: { settings: { fetch: { disableSameOriginPolicy: true } } },
    },
    include: ["test/**/*.test.ts"],
    globalSetup: ["test/harness/global-setup.ts"],
    // the e2e file drives one live server + one live agent; keep files
    // sequential so runs and token rotations don't interleave
    fileParallelism: false,
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
