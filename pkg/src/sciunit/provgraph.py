"""Replete provenance graph: process nodes, versioned file nodes, and
dependency-oriented edges derived from an interaction log.

Edge direction encodes dependency: a spawned child points at its parent,
a reading process points at the file version it read, and a written file
version points at the process that wrote it.

File versioning rule: every write-open of a path mints a new version;
a read binds to the newest version whose write closed before the read
began, to the reader's own freshly written version (in which case the
read edge is implied by the write edge and omitted), or to the pristine
audited content (version 1) when nothing had been written yet.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass
from typing import Iterable

from .auditor import Interaction, InteractionLog
from .errors import CyclicGraphError, NotFoundError

PROCESS = "process"
FILE = "file"

SPAWNED = "spawned"
READ = "read"
WROTE = "wrote"


@dataclass(frozen=True)
class PNode:
    id: str
    ntype: str
    label: str
    pid: int | None = None
    path: str | None = None
    version: int | None = None

    def to_json(self) -> dict:
        data = {"id": self.id, "ntype": self.ntype, "label": self.label}
        if self.pid is not None:
            data["pid"] = self.pid
        if self.path is not None:
            data["path"] = self.path
            data["version"] = self.version
        return data


@dataclass(frozen=True)
class PEdge:
    src: str            # the depending node
    dst: str            # its dependency
    etype: str
    interval: tuple[int, int] | None = None

    def to_json(self) -> dict:
        return {
            "from": self.src,
            "to": self.dst,
            "etype": self.etype,
            "interval": list(self.interval) if self.interval else None,
        }


class RepleteGraph:
    """Immutable-after-build provenance graph with multiset edges."""

    def __init__(self, nodes: Iterable[PNode] = (), edges: Iterable[PEdge] = ()):
        self.nodes: dict[str, PNode] = {}
        self.edges: list[PEdge] = []
        for node in nodes:
            self.add_node(node)
        for edge in edges:
            self.add_edge(edge)

    def add_node(self, node: PNode) -> None:
        existing = self.nodes.get(node.id)
        if existing is not None and existing != node:
            raise CyclicGraphError(f"conflicting node id {node.id}")
        self.nodes[node.id] = node

    def add_edge(self, edge: PEdge) -> None:
        if edge.src not in self.nodes or edge.dst not in self.nodes:
            raise NotFoundError(f"edge endpoints unknown: {edge.src} -> {edge.dst}")
        self.edges.append(edge)

    def out_edges(self, node_id: str) -> list[PEdge]:
        return [e for e in self.edges if e.src == node_id]

    def in_edges(self, node_id: str) -> list[PEdge]:
        return [e for e in self.edges if e.dst == node_id]

    def process_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.ntype == PROCESS)

    def file_ids(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.ntype == FILE)

    def to_json(self) -> dict:
        return {
            "nodes": [self.nodes[i].to_json() for i in sorted(self.nodes)],
            "edges": [e.to_json() for e in sorted(
                self.edges, key=lambda e: (e.src, e.dst, e.etype, e.interval or (0, 0)))],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RepleteGraph":
        g = cls()
        for nd in data["nodes"]:
            g.add_node(PNode(id=nd["id"], ntype=nd["ntype"], label=nd["label"],
                             pid=nd.get("pid"), path=nd.get("path"),
                             version=nd.get("version")))
        for ed in data["edges"]:
            g.add_edge(PEdge(ed["from"], ed["to"], ed["etype"],
                             tuple(ed["interval"]) if ed.get("interval") else None))
        return g


def process_node_id(pid: int, argv: tuple[str, ...] | None) -> str:
    digest = hashlib.sha256(
        json.dumps([pid, list(argv or ())]).encode()).hexdigest()[:12]
    return f"proc:{pid}:{digest}"


def file_node_id(path: str, version: int) -> str:
    return f"{path}#{version}"


def _process_label(pid: int, argv: tuple[str, ...] | None) -> str:
    if argv:
        text = " ".join(argv)
        return text if len(text) <= 60 else text[:57] + "..."
    return f"pid {pid}"


def build_graph(log: InteractionLog) -> RepleteGraph:
    """Build the replete graph from an interaction log.

    One process node per pid; file versions minted per the rule above.
    The output always admits a topological order for logs whose processes
    begin reading their inputs before they finish writing their outputs;
    a residual cycle raises CyclicGraphError.
    """
    graph = RepleteGraph()

    argv_by_pid: dict[int, tuple[str, ...] | None] = {}
    for event in log.events:
        argv_by_pid.setdefault(event.pid, None)
        if event.kind == "exec" and argv_by_pid[event.pid] is None and event.argv:
            argv_by_pid[event.pid] = event.argv

    proc_id: dict[int, str] = {}
    for pid in sorted(argv_by_pid):
        node = PNode(id=process_node_id(pid, argv_by_pid[pid]), ntype=PROCESS,
                     label=_process_label(pid, argv_by_pid[pid]), pid=pid)
        proc_id[pid] = node.id
        graph.add_node(node)

    writes_by_path: dict[str, list[Interaction]] = {}
    reads_by_path: dict[str, list[Interaction]] = {}
    spawns: list[Interaction] = []
    for it in log.interactions:
        if it.kind == "open_write":
            writes_by_path.setdefault(it.obj, []).append(it)
        elif it.kind in ("open_read", "exec"):
            reads_by_path.setdefault(it.obj, []).append(it)
        elif it.kind == "fork":
            spawns.append(it)

    for path in writes_by_path:
        writes_by_path[path].sort(key=lambda it: it.start)

    # Pass 1: decide which paths need a pristine version 1.
    pristine_needed: set[str] = set()
    for path, reads in reads_by_path.items():
        writes = writes_by_path.get(path, [])
        for read in reads:
            own = [w for w in writes if w.subject == read.subject and w.start < read.start]
            closed = [w for w in writes if w.end < read.start]
            if not own and not closed:
                pristine_needed.add(path)

    # Pass 2: mint versions and thread edges.
    version_of: dict[tuple[str, int], int] = {}
    for path, writes in writes_by_path.items():
        base = 2 if path in pristine_needed else 1
        for idx, w in enumerate(writes):
            version_of[(path, id(w))] = base + idx

    def file_node(path: str, version: int, writer: int | None) -> str:
        nid = file_node_id(path, version)
        if nid not in graph.nodes:
            graph.add_node(PNode(id=nid, ntype=FILE, label=path,
                                 path=path, version=version))
        return nid

    for path, writes in writes_by_path.items():
        for w in writes:
            nid = file_node(path, version_of[(path, id(w))], w.subject)
            graph.add_edge(PEdge(nid, proc_id[w.subject], WROTE, (w.start, w.end)))

    for path in sorted(reads_by_path):
        reads = sorted(reads_by_path[path], key=lambda it: it.start)
        writes = writes_by_path.get(path, [])
        for read in reads:
            own = [w for w in writes if w.subject == read.subject and w.start < read.start]
            if own:
                # Reading its own freshly written version: dependency is
                # already carried by the wrote edge; a read edge would
                # close a two-cycle.
                continue
            closed = [w for w in writes if w.end < read.start]
            if closed:
                newest = max(closed, key=lambda w: w.end)
                version = version_of[(path, id(newest))]
            else:
                version = 1
            nid = file_node(path, version, None)
            graph.add_edge(PEdge(proc_id[read.subject], nid, READ,
                                 (read.start, read.end)))

    for sp in spawns:
        child = sp.subject
        parent = _parent_of(log, child)
        if parent is not None and parent in proc_id:
            graph.add_edge(PEdge(proc_id[child], proc_id[parent], SPAWNED,
                                 (sp.start, sp.end)))

    topo_order(graph)  # invariant check: versioning must leave the graph acyclic
    return graph


def _parent_of(log: InteractionLog, child: int) -> int | None:
    for event in log.events:
        if event.pid == child and event.kind in ("fork", "exec") \
                and event.parent_pid is not None:
            return event.parent_pid
    return None


def topo_order(graph: RepleteGraph) -> list[str]:
    """Dependencies-first order; deterministic tie-break (ntype, label, id).

    For every edge (u, v), v appears before u.  Raises CyclicGraphError
    with a witness cycle when the graph is not a DAG.
    """
    remaining: dict[str, int] = {nid: 0 for nid in graph.nodes}
    dependents: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    for edge in graph.edges:
        remaining[edge.src] += 1
        dependents[edge.dst].append(edge.src)

    def key(nid: str):
        node = graph.nodes[nid]
        return (node.ntype, node.label, node.id)

    heap = [key(n) for n, deg in remaining.items() if deg == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        _, _, nid = heapq.heappop(heap)
        order.append(nid)
        for dep in dependents[nid]:
            remaining[dep] -= 1
            if remaining[dep] == 0:
                heapq.heappush(heap, key(dep))
    if len(order) != len(graph.nodes):
        raise CyclicGraphError("provenance graph contains a cycle",
                               cycle=_find_cycle(graph, set(graph.nodes) - set(order)))
    return order


def _find_cycle(graph: RepleteGraph, candidates: set[str]) -> list[str]:
    adjacency: dict[str, list[str]] = {}
    for edge in graph.edges:
        if edge.src in candidates and edge.dst in candidates:
            adjacency.setdefault(edge.src, []).append(edge.dst)
    seen_stack: list[str] = []
    on_stack: set[str] = set()
    visited: set[str] = set()

    def dfs(nid: str) -> list[str] | None:
        seen_stack.append(nid)
        on_stack.add(nid)
        for nxt in adjacency.get(nid, ()):
            if nxt in on_stack:
                return seen_stack[seen_stack.index(nxt):] + [nxt]
            if nxt not in visited:
                found = dfs(nxt)
                if found:
                    return found
        on_stack.discard(nid)
        visited.add(nid)
        seen_stack.pop()
        return None

    for nid in sorted(candidates):
        if nid not in visited:
            found = dfs(nid)
            if found:
                return found
    return []
