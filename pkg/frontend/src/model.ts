// Client-side view state: the current API payload plus the snapshot stack
// that makes expand/collapse an exact roundtrip, the scope boxes of past
// expansions, and the process selection for partial repeat.

import type { SummaryNode, SummaryPayload } from "./types.js";

export class ModelError extends Error {}

export interface ScopeBox {
  owner: string;
  ownerLabel: string;
  members: string[];
}

interface Snapshot {
  owner: string;
  payload: SummaryPayload;
  boxes: ScopeBox[];
}

function clone<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}

export function validatePayload(payload: unknown): SummaryPayload {
  const p = payload as SummaryPayload;
  if (
    !p ||
    !Array.isArray(p.nodes) ||
    !Array.isArray(p.edges) ||
    !Array.isArray(p.annotations) ||
    !Array.isArray(p.expansion_map)
  ) {
    throw new ModelError("malformed graph payload: missing sections");
  }
  const ids = new Set<string>();
  for (const node of p.nodes) {
    if (typeof node.id !== "string" || typeof node.label !== "string") {
      throw new ModelError("malformed graph payload: bad node");
    }
    ids.add(node.id);
  }
  for (const edge of p.edges) {
    if (!ids.has(edge.from) || !ids.has(edge.to)) {
      throw new ModelError(
        `malformed graph payload: edge ${edge.from} -> ${edge.to} dangles`,
      );
    }
  }
  for (const annotation of p.annotations) {
    if (!ids.has(annotation.host_process_id)) {
      throw new ModelError("malformed graph payload: annotation host missing");
    }
  }
  return p;
}

export class GraphView {
  payload: SummaryPayload | null = null;
  boxes: ScopeBox[] = [];
  selected = new Set<string>();
  private snapshots: Snapshot[] = [];

  load(payload: unknown): void {
    this.payload = validatePayload(payload);
    this.boxes = [];
    this.snapshots = [];
    this.selected.clear();
  }

  get nodes(): SummaryNode[] {
    return this.payload?.nodes ?? [];
  }

  node(id: string): SummaryNode | undefined {
    return this.nodes.find((n) => n.id === id);
  }

  isEmpty(): boolean {
    return this.nodes.length === 0;
  }

  counts(): { nodes: number; edges: number; annotations: number } {
    const p = this.payload;
    return {
      nodes: p?.nodes.length ?? 0,
      edges: p?.edges.length ?? 0,
      annotations: p?.annotations.length ?? 0,
    };
  }

  /** Record the server's post-expand payload; returns the new scope box. */
  applyExpand(owner: string, next: unknown): ScopeBox {
    if (!this.payload) throw new ModelError("no graph loaded");
    const validated = validatePayload(next);
    const before = new Set(this.payload.nodes.map((n) => n.id));
    const revealed = validated.nodes
      .map((n) => n.id)
      .filter((id) => !before.has(id));
    const ownerLabel = this.node(owner)?.label ?? owner;
    this.snapshots.push({
      owner,
      payload: clone(this.payload),
      boxes: clone(this.boxes),
    });
    this.payload = validated;
    const box: ScopeBox = { owner, ownerLabel, members: revealed };
    if (revealed.length) this.boxes.push(box);
    // selection keeps only processes still visible and plain
    for (const id of [...this.selected]) {
      const node = this.node(id);
      if (!node || node.ntype !== "process" || node.kind !== "plain") {
        this.selected.delete(id);
      }
    }
    return box;
  }

  canCollapse(): boolean {
    return this.snapshots.length > 0;
  }

  /** Undo expansions LIFO until the given one (or the latest) is undone. */
  collapse(owner?: string): void {
    if (!this.snapshots.length) return;
    if (owner === undefined) {
      const snap = this.snapshots.pop()!;
      this.payload = snap.payload;
      this.boxes = snap.boxes;
    } else {
      let snap: Snapshot | undefined;
      while (this.snapshots.length) {
        snap = this.snapshots.pop()!;
        if (snap.owner === owner) break;
      }
      if (snap) {
        this.payload = snap.payload;
        this.boxes = snap.boxes;
      }
    }
    const ids = new Set(this.nodes.map((n) => n.id));
    for (const id of [...this.selected]) {
      if (!ids.has(id)) this.selected.delete(id);
    }
  }

  /** Only visible plain process nodes are selectable for partial repeat. */
  toggleSelect(id: string): boolean {
    const node = this.node(id);
    if (!node || node.ntype !== "process" || node.kind !== "plain") {
      return false;
    }
    if (this.selected.has(id)) this.selected.delete(id);
    else this.selected.add(id);
    return true;
  }

  selectAllProcesses(): void {
    for (const node of this.nodes) {
      if (node.ntype === "process" && node.kind === "plain") {
        this.selected.add(node.id);
      }
    }
  }
}
