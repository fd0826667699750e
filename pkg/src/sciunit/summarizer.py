"""Graph summarization: condense the replete provenance graph while
keeping an exact, replayable record of everything concealed.

Three rules are applied to the visible graph:

* similarity: nodes of the same type with identical in/out connection
  sets merge into one group node (parallel edges collapse to one per
  endpoint and edge type);
* packability: a file with a single edge to a process, a process whose
  entire output set is one edge to another process, and a file written
  by one process and read by exactly one other are packed into the
  process they hang off (the last case produces a process-to-process
  edge);
* annotation: each remaining file node with two or more edges is
  replaced by one annotation per edge, attached to the process endpoint.

Similarity and packability loop to a global fixpoint, annotation runs
last.  The summary never copies edges: the visible graph is a projection
of the replete graph through the concealment map, so undoing steps in
any click order reproduces the replete graph exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import NotFoundError
from .provgraph import FILE, PROCESS, RepleteGraph

ANNOTATED = "@annotated"  # concealment marker for files turned into annotations


@dataclass(frozen=True)
class GroupInfo:
    """A synthetic node concealing merged members."""

    id: str
    ntype: str
    label: str


@dataclass(frozen=True)
class Annotation:
    """A file reference re-attached to a process after file-node removal."""

    host_process_id: str
    file_node_id: str
    direction: str            # read | wrote
    label: str

    def to_json(self) -> dict:
        return {
            "host_process_id": self.host_process_id,
            "file_node_id": self.file_node_id,
            "direction": self.direction,
            "label": self.label,
        }


@dataclass(frozen=True)
class MergeStep:
    group_id: str
    ntype: str
    label: str
    members: tuple[str, ...]

    def to_json(self) -> dict:
        return {"op": "merge", "inputs": list(self.members), "output": self.group_id}


@dataclass(frozen=True)
class PackStep:
    host_id: str
    packed_id: str
    rule: str                 # single-edge-file | single-output-process | through-file

    def to_json(self) -> dict:
        return {"op": "pack", "inputs": [self.packed_id], "output": self.host_id,
                "rule": self.rule}


@dataclass(frozen=True)
class AnnotateStep:
    file_id: str
    annotations: tuple[Annotation, ...]

    def to_json(self) -> dict:
        return {"op": "annotate", "inputs": [self.file_id], "output": self.file_id}


@dataclass(frozen=True)
class ViewEdge:
    src: str
    dst: str
    etype: str
    count: int

    def to_json(self) -> dict:
        return {"from": self.src, "to": self.dst, "etype": self.etype,
                "count": self.count}


class SummaryGraph:
    """A replete graph plus an ordered list of applied concealment steps."""

    def __init__(self, replete: RepleteGraph):
        self.replete = replete
        self.steps: list = []
        self.parent: dict[str, str] = {}      # concealed id -> concealer (or ANNOTATED)
        self.groups: dict[str, GroupInfo] = {}
        self.members: dict[str, list[str]] = {}
        self._ordinal = 0
        self._cache: tuple | None = None

    # -- state ----------------------------------------------------------

    def _invalidate(self):
        self._cache = None

    def node_type(self, nid: str) -> str:
        if nid in self.groups:
            return self.groups[nid].ntype
        return self.replete.nodes[nid].ntype

    def node_label(self, nid: str) -> str:
        if nid in self.groups:
            return self.groups[nid].label
        return self.replete.nodes[nid].label

    def is_visible(self, nid: str) -> bool:
        return (nid in self.replete.nodes or nid in self.groups) \
            and nid not in self.parent

    def resolve(self, nid: str) -> str:
        """Map a node to its visible representative (or ANNOTATED)."""
        while nid in self.parent:
            nid = self.parent[nid]
            if nid == ANNOTATED:
                return ANNOTATED
        return nid

    def visible_nodes(self) -> list[str]:
        ids = [n for n in self.replete.nodes if n not in self.parent]
        ids += [g for g in self.groups if g not in self.parent]
        return sorted(ids)

    def projected_edges(self) -> list[ViewEdge]:
        """Project replete edges through the concealment map.

        Edges whose endpoints share a representative disappear, edges into
        annotated files are carried by annotations instead, and parallel
        edges created by grouping collapse to one per endpoint pair and
        type.  Untouched parallel edges keep their native multiplicity.
        """
        if self._cache is not None:
            return self._cache
        identity: Counter = Counter()
        collapsed: set[tuple[str, str, str]] = set()
        for edge in self.replete.edges:
            ru, rv = self.resolve(edge.src), self.resolve(edge.dst)
            if ANNOTATED in (ru, rv) or ru == rv:
                continue
            key = (ru, rv, edge.etype)
            if ru == edge.src and rv == edge.dst:
                identity[key] += 1
            else:
                collapsed.add(key)
        out = []
        for key in sorted(set(identity) | collapsed):
            count = identity.get(key, 0)
            out.append(ViewEdge(key[0], key[1], key[2], count if count else 1))
        self._cache = out
        return out

    def annotations(self) -> list[Annotation]:
        out = []
        for step in self.steps:
            if isinstance(step, AnnotateStep):
                out.extend(step.annotations)
        return sorted(out, key=lambda a: (a.host_process_id, a.file_node_id,
                                          a.direction))

    def conceal_count(self, nid: str) -> int:
        total = 0
        for member in self.members.get(nid, ()):
            if member in self.replete.nodes:
                total += 1
            total += self.conceal_count(member)
        return total

    def origin_of(self, nid: str) -> str | None:
        if nid in self.groups:
            return "similarity"
        if self.members.get(nid):
            return "packability"
        return None

    # -- step application / undo ----------------------------------------

    def _next_group_id(self, ntype: str) -> str:
        self._ordinal += 1
        return f"{'File' if ntype == FILE else 'Process'}_G_{self._ordinal}"

    def apply_merge(self, members: list[str]) -> str:
        ntype = self.node_type(members[0])
        gid = self._next_group_id(ntype)
        info = GroupInfo(gid, ntype, gid)
        self.groups[gid] = info
        self.members[gid] = list(members)
        for m in members:
            self.parent[m] = gid
        self.steps.append(MergeStep(gid, ntype, gid, tuple(members)))
        self._invalidate()
        return gid

    def apply_pack(self, packed: str, host: str, rule: str) -> None:
        self.parent[packed] = host
        self.members.setdefault(host, []).append(packed)
        self.steps.append(PackStep(host, packed, rule))
        self._invalidate()

    def apply_annotate(self, file_id: str, annotations: tuple[Annotation, ...]) -> None:
        self.parent[file_id] = ANNOTATED
        self.steps.append(AnnotateStep(file_id, annotations))
        self._invalidate()

    def _undo(self, step) -> None:
        if isinstance(step, MergeStep):
            for m in step.members:
                del self.parent[m]
            del self.groups[step.group_id]
            del self.members[step.group_id]
        elif isinstance(step, PackStep):
            del self.parent[step.packed_id]
            self.members[step.host_id].remove(step.packed_id)
            if not self.members[step.host_id]:
                del self.members[step.host_id]
        else:
            del self.parent[step.file_id]
        self.steps.remove(step)
        self._invalidate()

    def expand(self, node_id: str) -> "SummaryGraph":
        """Reveal what a visible node conceals (one expansion action).

        A pack/annotate host reveals all its directly concealed nodes and
        annotated files; a similarity group dissolves into its members.
        A plain visible node is left unchanged.
        """
        if not self.is_visible(node_id):
            raise NotFoundError(f"unknown or concealed node {node_id!r}")
        hosted = [s for s in self.steps
                  if (isinstance(s, PackStep) and s.host_id == node_id)
                  or (isinstance(s, AnnotateStep)
                      and node_id in {a.host_process_id for a in s.annotations})]
        if hosted:
            for step in reversed(hosted):
                self._undo(step)
            return self
        if node_id in self.groups:
            [step] = [s for s in self.steps
                      if isinstance(s, MergeStep) and s.group_id == node_id]
            self._undo(step)
        return self

    def expandable(self, node_id: str) -> bool:
        return bool(self.members.get(node_id)) or node_id in self.groups or any(
            isinstance(s, AnnotateStep)
            and node_id in {a.host_process_id for a in s.annotations}
            for s in self.steps)

    def fully_expanded(self) -> bool:
        return not self.steps

    # -- export ----------------------------------------------------------

    def node_json(self, nid: str) -> dict:
        data = {
            "id": nid,
            "ntype": self.node_type(nid),
            "kind": "group" if self.members.get(nid) or nid in self.groups else "plain",
            "label": self.node_label(nid),
            "conceal_count": self.conceal_count(nid),
            "expandable": self.expandable(nid),
        }
        origin = self.origin_of(nid)
        if origin:
            data["origin"] = origin
        if nid in self.replete.nodes:
            node = self.replete.nodes[nid]
            if node.pid is not None:
                data["pid"] = node.pid
        return data

    def to_json(self) -> dict:
        return {
            "nodes": [self.node_json(n) for n in self.visible_nodes()],
            "edges": [e.to_json() for e in self.projected_edges()],
            "annotations": [a.to_json() for a in self.annotations()],
            "expansion_map": [s.to_json() for s in self.steps],
        }


# -- passes ---------------------------------------------------------------


def similarity_pass(summary: SummaryGraph) -> bool:
    """Merge maximal sets of same-type nodes with equal connection sets."""
    edges = summary.projected_edges()
    in_sets: dict[str, set] = {}
    out_sets: dict[str, set] = {}
    for e in edges:
        out_sets.setdefault(e.src, set()).add((e.dst, e.etype))
        in_sets.setdefault(e.dst, set()).add((e.src, e.etype))
    buckets: dict[tuple, list[str]] = {}
    for nid in summary.visible_nodes():
        signature = (summary.node_type(nid),
                     frozenset(in_sets.get(nid, ())),
                     frozenset(out_sets.get(nid, ())))
        buckets.setdefault(signature, []).append(nid)
    changed = False
    for signature in sorted(buckets, key=lambda s: sorted(buckets[s])[0]):
        members = sorted(buckets[signature])
        if len(members) >= 2:
            summary.apply_merge(members)
            changed = True
    return changed


def _try_pack(summary: SummaryGraph, nid: str) -> bool:
    ntype = summary.node_type(nid)
    edges = summary.projected_edges()
    ins = [e for e in edges if e.dst == nid]
    outs = [e for e in edges if e.src == nid]
    in_count = sum(e.count for e in ins)
    out_count = sum(e.count for e in outs)
    if ntype == FILE:
        if in_count + out_count == 1:
            other = ins[0].src if ins else outs[0].dst
            if summary.node_type(other) == PROCESS:
                summary.apply_pack(nid, other, "single-edge-file")
                return True
        elif (in_count, out_count) == (1, 1):
            reader, writer = ins[0].src, outs[0].dst
            if reader != writer and summary.node_type(reader) == PROCESS \
                    and summary.node_type(writer) == PROCESS:
                summary.apply_pack(nid, writer, "through-file")
                return True
    elif ntype == PROCESS and out_count == 1:
        target = outs[0].dst
        if target != nid and summary.node_type(target) == PROCESS:
            summary.apply_pack(nid, target, "single-output-process")
            return True
    return False


def packability_pass(summary: SummaryGraph) -> bool:
    """Pack single-edge files, single-output processes, and through-files.

    Nodes are visited in deterministic id order, repeatedly, until a full
    sweep changes nothing.  A packed process carries its already-packed
    subtree with it.
    """
    changed_any = False
    while True:
        changed = False
        for nid in summary.visible_nodes():
            if _try_pack(summary, nid):
                changed = True
        if not changed:
            return changed_any
        changed_any = True


def annotate_pass(summary: SummaryGraph) -> bool:
    """Replace every remaining multi-edge file with per-edge annotations."""
    edges = summary.projected_edges()
    todo = []
    for nid in summary.visible_nodes():
        if summary.node_type(nid) != FILE:
            continue
        incident = [e for e in edges if nid in (e.src, e.dst)]
        if sum(e.count for e in incident) < 2:
            continue
        annotations = []
        label = summary.node_label(nid)
        for e in incident:
            if e.dst == nid:      # a process depends on (read) this file
                annotations.extend(
                    [Annotation(e.src, nid, "read", label)] * e.count)
            else:                 # this file depends on (was written by) a process
                annotations.extend(
                    [Annotation(e.dst, nid, "wrote", label)] * e.count)
        todo.append((nid, tuple(annotations)))
    for nid, annotations in todo:
        summary.apply_annotate(nid, annotations)
    return bool(todo)


def summarize(replete: RepleteGraph) -> SummaryGraph:
    """Run similarity+packability to a global fixpoint, then annotate."""
    summary = SummaryGraph(replete)
    while True:
        changed = similarity_pass(summary)
        changed |= packability_pass(summary)
        if not changed:
            break
    annotate_pass(summary)
    return summary


def expand(summary: SummaryGraph, node_id: str) -> SummaryGraph:
    return summary.expand(node_id)


def expand_all(summary: SummaryGraph) -> SummaryGraph:
    """Expand until nothing is concealed (replete view restored)."""
    while summary.steps:
        for nid in summary.visible_nodes():
            if summary.expandable(nid):
                summary.expand(nid)
                break
        else:
            raise AssertionError("steps remain but nothing is expandable")
    return summary
