// Contract tests against the live primary API over the packaged fixture.

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { apiBase, STAGE_VIOLATION } from "./helpers.js";

let api: ApiClient;

beforeAll(() => {
  api = new ApiClient(apiBase());
});

describe("ApiClient against the fixture server", () => {
  it("lists the packaged execution", async () => {
    const payload = await api.executions();
    expect(payload.sciunit).toBe("pipeline");
    expect(payload.executions).toHaveLength(1);
    expect(payload.executions[0].ordinal).toBe("e1");
    expect(payload.executions[0].command).toEqual(["sh", "run.sh"]);
  });

  it("serves summary and replete views of the graph", async () => {
    // the summary view is a session (other suites may have expanded it),
    // so only order-stable facts are asserted
    const summary = await api.summary("e1");
    expect(summary.nodes.length).toBeGreaterThan(0);
    expect(summary.edges.length).toBeGreaterThan(0);
    const replete = await api.replete("e1");
    expect(replete.nodes.length).toBeGreaterThanOrEqual(summary.nodes.length);
    expect(replete.nodes.filter((n) => n.ntype === "file").length)
      .toBeGreaterThan(0);
    expect(replete.nodes.filter((n) => n.ntype === "process")).toHaveLength(4);
  });

  it("maps API errors to ApiError with status", async () => {
    await expect(api.summary("e9")).rejects.toThrowError(ApiError);
    await expect(api.summary("e9")).rejects.toMatchObject({ status: 404 });
  });

  it("plans a partial repeat for a selection", async () => {
    const replete = await api.replete("e1");
    const violation = replete.nodes.find(
      (n) => n.ntype === "process" && n.label === STAGE_VIOLATION,
    )!;
    const plan = await api.plan("e1", [violation.id]);
    expect(plan.selected_procs).toEqual([violation.id]);
    expect(plan.required_procs.length).toBe(2); // violation + model stages
    expect(plan.entry_commands).toEqual([
      ["sh", "calc_violation.sh"],
      ["sh", "gen_model.sh"],
    ]);
  });

  it("streams repeat events ending with a verified report", async () => {
    const seen: string[] = [];
    const events = await api.repeat("e1", [], (e) => seen.push(e.event));
    expect(seen[0]).toBe("started");
    const report = events[events.length - 1].report!;
    expect(report.exit_status).toBe(0);
    expect(report.outputs_matched).toBe(true);
    expect(report.paths_missing).toEqual([]);
  });
});
