// SVG rendering of a summary graph: process nodes first-class, annotation
// chips attached to their hosts, crown badges on concealing nodes, scope
// boxes around what past expansions revealed.

import { GAP_Y, NODE_H, NODE_W, layeredLayout } from "./layout.js";
import type { GraphView } from "./model.js";
import type { AnnotationRef } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CHIP_H = 16;

export interface RenderHandlers {
  onSelect?: (id: string) => void;
  onExpand?: (id: string) => void;
  onCollapse?: (owner: string) => void;
}

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  return node;
}

export function renderError(container: HTMLElement, message: string): void {
  container.replaceChildren();
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.setAttribute("role", "alert");
  banner.textContent = message;
  container.appendChild(banner);
}

export function renderGraph(
  container: HTMLElement,
  view: GraphView,
  handlers: RenderHandlers = {},
): void {
  container.replaceChildren();
  if (!view.payload) {
    renderError(container, "no graph loaded");
    return;
  }
  if (view.isEmpty()) {
    const empty = document.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "This execution produced an empty provenance graph.";
    container.appendChild(empty);
    return;
  }

  const payload = view.payload;
  const positions = layeredLayout(payload);

  const annotationsByHost = new Map<string, AnnotationRef[]>();
  for (const annotation of payload.annotations) {
    const list = annotationsByHost.get(annotation.host_process_id) ?? [];
    list.push(annotation);
    annotationsByHost.set(annotation.host_process_id, list);
  }

  let width = 0;
  let height = 0;
  for (const pos of positions.values()) {
    width = Math.max(width, pos.x + NODE_W);
    height = Math.max(height, pos.y + NODE_H);
  }
  const maxChips = Math.max(
    0,
    ...[...annotationsByHost.values()].map((a) => a.length),
  );
  height += GAP_Y + maxChips * CHIP_H;

  const svg = el("svg", {
    class: "graph",
    viewBox: `-20 -20 ${width + 40} ${height + 40}`,
    width: String(width + 40),
    height: String(height + 40),
  });
  const defs = el("defs");
  const marker = el("marker", {
    id: "arrow",
    viewBox: "0 0 8 8",
    refX: "7",
    refY: "4",
    markerWidth: "7",
    markerHeight: "7",
    orient: "auto-start-reverse",
  });
  marker.appendChild(el("path", { d: "M 0 0 L 8 4 L 0 8 z" }));
  defs.appendChild(marker);
  svg.appendChild(defs);

  // scope boxes behind everything they cover
  for (const box of view.boxes) {
    const members = box.members.filter((id) => positions.has(id));
    if (!members.length) continue;
    let minX = Infinity, minY = Infinity, maxX = -Infinity, maxY = -Infinity;
    for (const id of members) {
      const pos = positions.get(id)!;
      minX = Math.min(minX, pos.x);
      minY = Math.min(minY, pos.y);
      maxX = Math.max(maxX, pos.x + NODE_W);
      maxY = Math.max(maxY, pos.y + NODE_H);
    }
    const group = el("g", { class: "scope", "data-owner": box.owner });
    group.appendChild(el("rect", {
      x: String(minX - 10),
      y: String(minY - 22),
      width: String(maxX - minX + 20),
      height: String(maxY - minY + 32),
      rx: "8",
    }));
    const label = el("text", {
      x: String(minX - 2),
      y: String(minY - 8),
      class: "scope-label",
    });
    label.textContent = `from ${box.ownerLabel} (click to collapse)`;
    label.addEventListener("click", () => handlers.onCollapse?.(box.owner));
    group.appendChild(label);
    svg.appendChild(group);
  }

  const center = (id: string) => {
    const pos = positions.get(id)!;
    return { cx: pos.x + NODE_W / 2, cy: pos.y + NODE_H / 2 };
  };

  for (const edge of payload.edges) {
    const a = center(edge.from);
    const b = center(edge.to);
    // drawn from dependency up to dependent: arrows show data flowing down
    const group = el("g", {
      class: `edge ${edge.etype}`,
      "data-from": edge.from,
      "data-to": edge.to,
    });
    group.appendChild(el("line", {
      x1: String(b.cx),
      y1: String(b.cy + NODE_H / 2),
      x2: String(a.cx),
      y2: String(a.cy - NODE_H / 2),
      "marker-end": "url(#arrow)",
    }));
    if (edge.count > 1) {
      const label = el("text", {
        x: String((a.cx + b.cx) / 2 + 4),
        y: String((a.cy + b.cy) / 2),
        class: "edge-count",
      });
      label.textContent = `×${edge.count}`;
      group.appendChild(label);
    }
    svg.appendChild(group);
  }

  for (const node of payload.nodes) {
    const pos = positions.get(node.id)!;
    const classes = [
      "node",
      node.ntype,
      node.kind,
      view.selected.has(node.id) ? "selected" : "",
      node.expandable ? "expandable" : "",
    ].filter(Boolean).join(" ");
    const group = el("g", {
      class: classes,
      "data-id": node.id,
      transform: `translate(${pos.x}, ${pos.y})`,
    });
    const shape = el("rect", {
      width: String(NODE_W),
      height: String(NODE_H),
      rx: node.ntype === "process" ? "6" : "16",
    });
    shape.addEventListener("click", () => handlers.onSelect?.(node.id));
    group.appendChild(shape);
    if (node.kind === "group") {
      group.appendChild(el("rect", {
        class: "group-outline",
        x: "-4",
        y: "-4",
        width: String(NODE_W + 8),
        height: String(NODE_H + 8),
        rx: "9",
      }));
    }
    const label = el("text", {
      x: String(NODE_W / 2),
      y: String(NODE_H / 2 + 4),
      class: "node-label",
    });
    const text = node.label.length > 22
      ? node.label.slice(0, 10) + "…" + node.label.slice(-10)
      : node.label;
    label.textContent = text;
    const title = el("title");
    title.textContent = `${node.label}\n${node.id}`;
    group.appendChild(title);
    group.appendChild(label);

    if (node.expandable) {
      const badge = el("g", { class: "badge", "data-expand": node.id });
      badge.appendChild(el("circle", {
        cx: String(NODE_W),
        cy: "0",
        r: "11",
      }));
      const count = el("text", { x: String(NODE_W), y: "4", class: "badge-count" });
      count.textContent = node.conceal_count > 0 ? `+${node.conceal_count}` : "+";
      badge.appendChild(count);
      badge.addEventListener("click", (ev) => {
        ev.stopPropagation();
        handlers.onExpand?.(node.id);
      });
      group.appendChild(badge);
    }

    const chips = annotationsByHost.get(node.id) ?? [];
    chips.forEach((annotation, i) => {
      const chip = el("g", {
        class: `annotation ${annotation.direction}`,
        "data-host": node.id,
        "data-file": annotation.file_node_id,
        transform: `translate(0, ${NODE_H + 4 + i * CHIP_H})`,
      });
      chip.appendChild(el("rect", {
        width: String(NODE_W),
        height: String(CHIP_H - 2),
        rx: "7",
      }));
      const chipLabel = el("text", {
        x: String(NODE_W / 2),
        y: String(CHIP_H / 2 + 3),
        class: "annotation-label",
      });
      const name = annotation.label.split("/").pop() ?? annotation.label;
      chipLabel.textContent =
        `${annotation.direction === "read" ? "→" : "←"} ${name}`;
      const chipTitle = el("title");
      chipTitle.textContent =
        `${annotation.direction} ${annotation.file_node_id}`;
      chip.appendChild(chipTitle);
      chip.appendChild(chipLabel);
      group.appendChild(chip);
    });

    svg.appendChild(group);
  }

  container.appendChild(svg);

  const legend = document.createElement("div");
  legend.className = "legend";
  legend.textContent =
    "Inputs at top, outputs at bottom (provenance direction flipped for " +
    "readability). Rounded = process, pill = file, double border = group; " +
    "+N badges expand what a node conceals; chips are file annotations.";
  container.appendChild(legend);
}
