// Edge-case behavior with a stubbed API: error banner, empty state, toasts.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { App } from "../src/app.js";

function stubClient(overrides: Partial<Record<string, unknown>>): ApiClient {
  const base = {
    executions: async () => ({
      sciunit: "stub",
      annotations: [],
      executions: [{
        ordinal: "e1",
        execution_id: "0".repeat(64),
        command: ["x"],
        working_dir: "/",
        created_at: "",
        annotations: [],
      }],
    }),
    summary: async () => ({
      nodes: [], edges: [], annotations: [], expansion_map: [],
    }),
    replete: async () => ({ nodes: [], edges: [] }),
    expand: async () => {
      throw new ApiError(404, "nope");
    },
    plan: async () => {
      throw new ApiError(400, "bad selection");
    },
    repeat: async () => {
      throw new ApiError(409, "already running");
    },
  };
  return Object.assign(Object.create(ApiClient.prototype),
    base, overrides) as ApiClient;
}

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
});

describe("App edge cases", () => {
  it("shows the empty-state message for an empty graph", async () => {
    const app = new App(root, stubClient({}));
    await app.start();
    expect(root.querySelector(".empty-state")?.textContent)
      .toMatch(/empty provenance graph/);
  });

  it("malformed payloads produce an error banner and no partial render",
    async () => {
      const app = new App(root, stubClient({
        summary: async () => ({ nodes: [{ id: "x" }] }), // missing sections
      }));
      await app.start();
      expect(root.querySelector(".error-banner")).toBeTruthy();
      expect(root.querySelectorAll("svg g.node").length).toBe(0);
    });

  it("an expand failure leaves the view unchanged and shows a toast",
    async () => {
      const app = new App(root, stubClient({
        summary: async () => ({
          nodes: [{ id: "p", ntype: "process", kind: "plain", label: "p",
                    conceal_count: 1, expandable: true }],
          edges: [], annotations: [], expansion_map: [],
        }),
      }));
      await app.start();
      const before = root.querySelector("#graph-pane")!.innerHTML;
      await app.expand("p");
      expect(root.querySelector("#graph-pane")!.innerHTML).toBe(before);
      expect(root.querySelector<HTMLElement>("#toast")!.hidden).toBe(false);
      expect(root.querySelector("#toast")!.textContent).toMatch(/expand failed/);
    });

  it("a 409 during repeat surfaces the already-running notice", async () => {
    const app = new App(root, stubClient({
      summary: async () => ({
        nodes: [{ id: "p", ntype: "process", kind: "plain", label: "p",
                  conceal_count: 0, expandable: false }],
        edges: [], annotations: [], expansion_map: [],
      }),
    }));
    await app.start();
    await app.runRepeat();
    expect(root.querySelector("#toast")!.textContent)
      .toMatch(/already running/);
  });

  it("API failure on startup renders a banner", async () => {
    const app = new App(root, stubClient({
      executions: async () => {
        throw new ApiError(500, "kaput");
      },
    }));
    await app.start();
    expect(root.querySelector(".error-banner")?.textContent).toMatch(/kaput/);
  });
});
