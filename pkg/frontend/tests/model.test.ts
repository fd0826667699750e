import { describe, expect, it } from "vitest";

import { GraphView, ModelError, validatePayload } from "../src/model.js";
import type { SummaryPayload } from "../src/types.js";

function payload(partial: Partial<SummaryPayload> = {}): SummaryPayload {
  return {
    nodes: [
      { id: "proc:1", ntype: "process", kind: "plain", label: "driver",
        conceal_count: 0, expandable: false },
      { id: "proc:2", ntype: "process", kind: "plain", label: "stage",
        conceal_count: 2, expandable: true },
      { id: "File_G_1", ntype: "file", kind: "group", label: "File_G_1",
        conceal_count: 3, expandable: true, origin: "similarity" },
    ],
    edges: [
      { from: "proc:2", to: "proc:1", etype: "spawned", count: 1 },
      { from: "proc:2", to: "File_G_1", etype: "read", count: 1 },
    ],
    annotations: [
      { host_process_id: "proc:1", file_node_id: "/lib/z#1",
        direction: "read", label: "/lib/z" },
    ],
    expansion_map: [
      { op: "merge", inputs: ["/a#1", "/b#1"], output: "File_G_1" },
    ],
    ...partial,
  };
}

describe("validatePayload", () => {
  it("accepts well-formed payloads", () => {
    expect(() => validatePayload(payload())).not.toThrow();
  });

  it("rejects missing sections without partial state", () => {
    expect(() => validatePayload({ nodes: [] })).toThrow(ModelError);
    expect(() => validatePayload(null)).toThrow(ModelError);
  });

  it("rejects dangling edges and annotation hosts", () => {
    expect(() =>
      validatePayload(payload({
        edges: [{ from: "proc:2", to: "ghost", etype: "read", count: 1 }],
      })),
    ).toThrow(/dangles/);
    expect(() =>
      validatePayload(payload({
        annotations: [{ host_process_id: "ghost", file_node_id: "/x#1",
                        direction: "read", label: "/x" }],
      })),
    ).toThrow(/annotation host/);
  });
});

describe("GraphView", () => {
  it("counts mirror the payload", () => {
    const view = new GraphView();
    view.load(payload());
    expect(view.counts()).toEqual({ nodes: 3, edges: 2, annotations: 1 });
  });

  it("only plain visible processes are selectable", () => {
    const view = new GraphView();
    view.load(payload());
    expect(view.toggleSelect("proc:1")).toBe(true);
    expect(view.selected.has("proc:1")).toBe(true);
    expect(view.toggleSelect("File_G_1")).toBe(false);
    expect(view.toggleSelect("nope")).toBe(false);
    expect(view.toggleSelect("proc:1")).toBe(true); // toggles off
    expect(view.selected.size).toBe(0);
  });

  it("expand records a scope box; collapse restores the exact payload", () => {
    const view = new GraphView();
    const before = payload();
    view.load(before);
    const snapshot = JSON.stringify(view.payload);

    const after = payload({
      nodes: [
        ...payload().nodes,
        { id: "/rev#1", ntype: "file", kind: "plain", label: "/rev",
          conceal_count: 0, expandable: false },
      ],
      edges: [
        ...payload().edges,
        { from: "proc:2", to: "/rev#1", etype: "read", count: 1 },
      ],
    });
    const box = view.applyExpand("proc:2", after);
    expect(box.members).toEqual(["/rev#1"]);
    expect(view.boxes).toHaveLength(1);
    expect(view.canCollapse()).toBe(true);

    view.collapse("proc:2");
    expect(JSON.stringify(view.payload)).toBe(snapshot);
    expect(view.boxes).toHaveLength(0);
    expect(view.canCollapse()).toBe(false);
  });

  it("nested collapse pops LIFO to the named owner", () => {
    const view = new GraphView();
    view.load(payload());
    const base = JSON.stringify(view.payload);
    const mid = payload({
      nodes: [...payload().nodes,
        { id: "/m#1", ntype: "file", kind: "plain", label: "/m",
          conceal_count: 0, expandable: false }],
    });
    const top = payload({
      nodes: [...mid.nodes,
        { id: "/t#1", ntype: "file", kind: "plain", label: "/t",
          conceal_count: 0, expandable: false }],
    });
    view.applyExpand("proc:2", mid);
    view.applyExpand("File_G_1", top);
    view.collapse("proc:2"); // unwinds both
    expect(JSON.stringify(view.payload)).toBe(base);
  });

  it("selection drops nodes that disappear on collapse", () => {
    const view = new GraphView();
    view.load(payload());
    const withProc = payload({
      nodes: [...payload().nodes,
        { id: "proc:9", ntype: "process", kind: "plain", label: "helper",
          conceal_count: 0, expandable: false }],
    });
    view.applyExpand("proc:2", withProc);
    expect(view.toggleSelect("proc:9")).toBe(true);
    view.collapse();
    expect(view.selected.has("proc:9")).toBe(false);
  });
});
