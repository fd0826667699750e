// Layered DAG layout. Edges point from a node to what it depends on, so
// dependencies (inputs, parent processes) get low layers and are drawn at
// the top; the workflow then reads top-down (provenance flows naturally
// bottom-up, this view flips it for readability — see the legend).

import { ModelError } from "./model.js";
import type { SummaryPayload } from "./types.js";

export interface NodePosition {
  x: number;
  y: number;
  layer: number;
}

export const NODE_W = 150;
export const NODE_H = 38;
export const GAP_X = 40;
export const GAP_Y = 86;

export function layeredLayout(
  payload: SummaryPayload,
): Map<string, NodePosition> {
  const deps = new Map<string, string[]>(); // node -> its dependencies
  for (const node of payload.nodes) deps.set(node.id, []);
  for (const edge of payload.edges) deps.get(edge.from)!.push(edge.to);

  const layer = new Map<string, number>();
  const visiting = new Set<string>();
  const assign = (id: string): number => {
    const known = layer.get(id);
    if (known !== undefined) return known;
    if (visiting.has(id)) throw new ModelError(`cycle through ${id}`);
    visiting.add(id);
    let value = 0;
    for (const dep of deps.get(id) ?? []) {
      value = Math.max(value, assign(dep) + 1);
    }
    visiting.delete(id);
    layer.set(id, value);
    return value;
  };
  for (const node of payload.nodes) assign(node.id);

  const rows = new Map<number, string[]>();
  for (const node of payload.nodes) {
    const l = layer.get(node.id)!;
    if (!rows.has(l)) rows.set(l, []);
    rows.get(l)!.push(node.id);
  }
  for (const row of rows.values()) row.sort();

  // two barycenter sweeps settle most crossings and stay deterministic
  const neighbors = new Map<string, string[]>();
  for (const node of payload.nodes) neighbors.set(node.id, []);
  for (const edge of payload.edges) {
    neighbors.get(edge.from)!.push(edge.to);
    neighbors.get(edge.to)!.push(edge.from);
  }
  const order = new Map<string, number>();
  const reindex = () => {
    for (const row of rows.values()) {
      row.forEach((id, i) => order.set(id, i));
    }
  };
  reindex();
  const layerKeys = [...rows.keys()].sort((a, b) => a - b);
  for (let sweep = 0; sweep < 2; sweep++) {
    const keys = sweep % 2 ? [...layerKeys].reverse() : layerKeys;
    for (const l of keys) {
      const row = rows.get(l)!;
      const score = (id: string): number => {
        const ns = neighbors.get(id)!.filter((n) => layer.get(n) !== l);
        if (!ns.length) return order.get(id)!;
        return ns.reduce((acc, n) => acc + (order.get(n) ?? 0), 0) / ns.length;
      };
      row.sort((a, b) => score(a) - score(b) || a.localeCompare(b));
      reindex();
    }
  }

  const widest = Math.max(...[...rows.values()].map((r) => r.length), 1);
  const positions = new Map<string, NodePosition>();
  for (const l of layerKeys) {
    const row = rows.get(l)!;
    const offset = ((widest - row.length) * (NODE_W + GAP_X)) / 2;
    row.forEach((id, i) => {
      positions.set(id, {
        x: offset + i * (NODE_W + GAP_X),
        y: l * GAP_Y,
        layer: l,
      });
    });
  }
  return positions;
}
