"""Exact repeat, partial repeat via sub-container construction, and
modified repeat (re-package of an edited materialized container).

Partial repeat: from the processes a user selects, pull in every process
that transitively depends on them, collect all file versions those
processes touch (intermediate inputs produced by excluded processes are
carried over as data), mirror exactly those files into a fresh sandbox,
and re-run the required processes whose parents were excluded, in
dependency order.

Two execution backends: ``redirect`` roots absolute paths in the sandbox
(chroot, so it needs privileges and a self-contained sandbox) and
``portable`` runs with the working directory inside the mirrored tree and
a rewritten environment, which is correct for relative-path pipelines on
any host.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .container import Sciunit, materialize_container
from .errors import (
    BackendUnavailableError,
    InvalidArgumentError,
    NotFoundError,
    PlanIncompleteError,
)
from .provgraph import FILE, PROCESS, RepleteGraph

log = logging.getLogger(__name__)


@dataclass
class SubContainerPlan:
    """Everything needed to re-execute a selected subset of processes."""

    selected_procs: list[str]
    required_procs: list[str]
    dep_files: list[tuple[str, str]]          # (file node id, role read|wrote)
    entry_commands: list[list[str]]

    def to_json(self) -> dict:
        return {
            "selected_procs": self.selected_procs,
            "required_procs": self.required_procs,
            "dep_files": [list(pair) for pair in self.dep_files],
            "entry_commands": self.entry_commands,
        }


@dataclass
class RepeatReport:
    execution_id: str
    backend: str
    exit_status: int
    paths_written: list[str] = field(default_factory=list)
    paths_missing: list[str] = field(default_factory=list)
    commands_run: list[list[str]] = field(default_factory=list)
    outputs_matched: bool | None = None
    mismatched: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "execution_id": self.execution_id,
            "backend": self.backend,
            "exit_status": self.exit_status,
            "paths_written": self.paths_written,
            "paths_missing": self.paths_missing,
            "commands_run": self.commands_run,
            "outputs_matched": self.outputs_matched,
            "mismatched": self.mismatched,
        }

    def human_table(self) -> str:
        rows = [
            ("execution", self.execution_id[:16]),
            ("backend", self.backend),
            ("exit status", str(self.exit_status)),
            ("commands run", str(len(self.commands_run))),
            ("paths written", str(len(self.paths_written))),
            ("paths missing", ", ".join(self.paths_missing) or "none"),
        ]
        if self.outputs_matched is not None:
            rows.append(("outputs match", "yes" if self.outputs_matched
                         else "NO: " + ", ".join(self.mismatched)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def get_procs(selected, all_procs, graph: RepleteGraph) -> set[str]:
    """Selected processes plus every process that depends on them.

    "Depends" follows edge direction: p is included when a dependency
    path leads from p to some selected process.
    """
    selected = set(selected)
    all_procs = set(all_procs)
    unknown = selected - set(graph.nodes)
    if unknown:
        raise NotFoundError(f"unknown process ids: {sorted(unknown)}")
    if not selected <= all_procs:
        raise InvalidArgumentError("selected processes must be a subset of all")
    dependents: dict[str, list[str]] = {}
    for edge in graph.edges:
        dependents.setdefault(edge.dst, []).append(edge.src)
    result = set(selected)
    stack = list(selected)
    seen = set(selected)
    while stack:
        current = stack.pop()
        for dep in dependents.get(current, ()):
            if dep not in seen:
                seen.add(dep)
                stack.append(dep)
                if dep in all_procs:
                    result.add(dep)
    return result


def get_deps(required, graph: RepleteGraph) -> dict[str, str]:
    """All file versions the required processes read, wrote, or executed.

    Inputs produced by processes outside the required set are included:
    partial repeat assumes they still exist from the previous run.
    """
    required = set(required)
    deps: dict[str, str] = {}
    for edge in graph.edges:
        if edge.etype == "read" and edge.src in required \
                and graph.nodes[edge.dst].ntype == FILE:
            deps.setdefault(edge.dst, "read")
        elif edge.etype == "wrote" and edge.dst in required \
                and graph.nodes[edge.src].ntype == FILE:
            deps[edge.src] = "wrote"
    return deps


def _argv_by_node(graph: RepleteGraph, ilog) -> dict[str, list[str]]:
    argv_by_pid: dict[int, list[str]] = {}
    for event in ilog.events:
        if event.kind == "exec" and event.pid not in argv_by_pid and event.argv:
            argv_by_pid[event.pid] = list(event.argv)
    return {node.id: argv_by_pid.get(node.pid, [])
            for node in graph.nodes.values() if node.ntype == PROCESS}


def _entry_commands(required, graph: RepleteGraph, ilog) -> list[list[str]]:
    """argv of required processes whose parents are excluded, topo order."""
    from .provgraph import topo_order

    required = set(required)
    parent_of: dict[str, str] = {}
    for edge in graph.edges:
        if edge.etype == "spawned":
            parent_of[edge.src] = edge.dst
    argv_of = _argv_by_node(graph, ilog)
    commands = []
    for nid in topo_order(graph):
        if nid not in required:
            continue
        parent = parent_of.get(nid)
        if (parent is None or parent not in required) and argv_of.get(nid):
            commands.append(argv_of[nid])
    return commands


def load_provenance(sciunit: Sciunit, execution_id: str):
    """(replete graph, interaction log) of a stored execution."""
    from .auditor import InteractionLog
    from .provgraph import build_graph

    log_path = sciunit.log_path(execution_id)
    if not log_path.is_file():
        raise NotFoundError(f"execution {execution_id} has no interaction log")
    ilog = InteractionLog.from_ndjson(log_path.read_text())
    return build_graph(ilog), ilog


def build_sub_container(selected, execution_id: str, sciunit: Sciunit,
                        dest_dir) -> tuple[SubContainerPlan, Path]:
    """Materialize the parent container and mirror only the plan's files.

    Returns the plan and the new sandbox directory.
    """
    if not selected:
        raise InvalidArgumentError("no processes selected for partial repeat")
    graph, ilog = load_provenance(sciunit, execution_id)
    all_procs = set(graph.process_ids())
    required = get_procs(set(selected), all_procs, graph)
    deps = get_deps(required, graph)
    plan = SubContainerPlan(
        selected_procs=sorted(selected),
        required_procs=sorted(required),
        dep_files=sorted(deps.items()),
        entry_commands=_entry_commands(required, graph, ilog),
    )
    dest_dir = Path(dest_dir)
    parent_root = dest_dir / "parent"
    sandbox = dest_dir / "sandbox"
    materialize_container(sciunit, execution_id, parent_root)
    sandbox.mkdir(parents=True, exist_ok=True)
    missing = []
    for file_id, _role in plan.dep_files:
        path = graph.nodes[file_id].path
        src = parent_root / path.lstrip("/")
        dst = sandbox / path.lstrip("/")
        if not src.exists():
            missing.append(path)
            continue
        dst.parent.mkdir(parents=True, exist_ok=True)
        if not dst.exists():
            shutil.copy(src, dst)
    if missing:
        raise PlanIncompleteError(
            "parent container lacks required files", paths=sorted(set(missing)))
    return plan, sandbox


class PortableBackend:
    """Run commands with cwd inside the mirrored tree and a rewritten env.

    The captured environment is replayed except PATH (taken from the host
    so interpreters resolve) and PWD.  Valid for relative-path pipelines.
    """

    name = "portable"

    @staticmethod
    def available() -> bool:
        return True

    def run(self, sandbox: Path, argv: list[str], working_dir: str,
            environment: dict[str, str]) -> int:
        cwd = Path(sandbox) / working_dir.lstrip("/")
        cwd.mkdir(parents=True, exist_ok=True)
        env = dict(environment)
        env["PATH"] = os.environ.get("PATH", os.defpath)
        env["PWD"] = str(cwd)
        argv = list(argv)
        if argv and os.path.isabs(argv[0]):
            mirrored = Path(sandbox) / argv[0].lstrip("/")
            if mirrored.exists():
                argv[0] = str(mirrored)
        proc = subprocess.run(argv, cwd=cwd, env=env)
        return proc.returncode


class RedirectBackend:
    """Root every absolute path inside the sandbox via chroot.

    Needs root privileges and a sandbox containing the full interpreter
    stack (which a live audit of a dynamically linked program captures).
    """

    name = "redirect"

    @staticmethod
    def available() -> bool:
        return hasattr(os, "chroot") and os.geteuid() == 0

    def run(self, sandbox: Path, argv: list[str], working_dir: str,
            environment: dict[str, str]) -> int:
        if not self.available():
            raise BackendUnavailableError("redirect backend requires root")
        sandbox = str(sandbox)
        wd = working_dir

        def enter():
            os.chroot(sandbox)
            os.chdir(wd if os.path.isdir(wd) else "/")

        env = dict(environment)
        env["PWD"] = wd
        proc = subprocess.run(list(argv), env=env, preexec_fn=enter)
        return proc.returncode


BACKENDS = {"portable": PortableBackend, "redirect": RedirectBackend}


def _resolvable_in_sandbox(sandbox: Path, argv0: str, env_path: str) -> bool:
    if os.path.isabs(argv0):
        return (Path(sandbox) / argv0.lstrip("/")).exists()
    for d in (env_path or "").split(":"):
        if d and (Path(sandbox) / d.lstrip("/") / argv0).exists():
            return True
    return False


def choose_backend(preference: str, sandbox: Path, argv,
                   environment: dict[str, str]):
    """Resolve the backend preference against what this host can run.

    ``auto`` picks redirect only when privileged and the command resolves
    inside the sandbox; otherwise it falls back to portable.
    """
    if preference in ("portable", ""):
        return PortableBackend()
    if preference == "redirect":
        if not RedirectBackend.available():
            raise BackendUnavailableError("redirect backend requires root")
        return RedirectBackend()
    if preference == "auto":
        if RedirectBackend.available() and argv and _resolvable_in_sandbox(
                sandbox, argv[0], environment.get("PATH", "")):
            return RedirectBackend()
        return PortableBackend()
    raise InvalidArgumentError(f"unknown backend {preference!r}")


def _written_paths(graph: RepleteGraph, procs) -> list[str]:
    procs = set(procs)
    out = set()
    for edge in graph.edges:
        if edge.etype == "wrote" and edge.dst in procs:
            out.add(graph.nodes[edge.src].path)
    return sorted(out)


def _compare_outputs(sandbox: Path, reference: Path, paths) -> list[str]:
    mismatched = []
    for path in paths:
        got = sandbox / path.lstrip("/")
        want = reference / path.lstrip("/")
        if not got.is_file() or not want.is_file():
            mismatched.append(path)
        elif got.read_bytes() != want.read_bytes():
            mismatched.append(path)
    return mismatched


def repeat(execution_id: str, sciunit: Sciunit, backend: str = "auto",
           scratch_dir=None, verify: bool = False) -> RepeatReport:
    """Materialize a container and re-run its audited command inside it."""
    manifest = sciunit.load_manifest(execution_id)
    with tempfile.TemporaryDirectory(dir=scratch_dir, prefix="sciunit-repeat-") as tmp:
        sandbox = Path(tmp) / "sandbox"
        materialize_container(sciunit, execution_id, sandbox)
        runner = choose_backend(backend, sandbox, manifest.command,
                                manifest.environment)
        status = runner.run(sandbox, manifest.command, manifest.working_dir,
                            manifest.environment)
        report = RepeatReport(
            execution_id=execution_id,
            backend=runner.name,
            exit_status=status,
            commands_run=[list(manifest.command)],
        )
        try:
            graph, _ = load_provenance(sciunit, execution_id)
        except NotFoundError:
            graph = None
        if graph is not None:
            written = _written_paths(graph, graph.process_ids())
            report.paths_written = [
                p for p in written if (sandbox / p.lstrip("/")).exists()]
            report.paths_missing = [
                p for p in written if not (sandbox / p.lstrip("/")).exists()]
            if verify:
                reference = Path(tmp) / "reference"
                materialize_container(sciunit, execution_id, reference)
                report.mismatched = _compare_outputs(sandbox, reference, written)
                report.outputs_matched = not report.mismatched
    return report


def repeat_partial(selected, execution_id: str, sciunit: Sciunit,
                   backend: str = "auto", scratch_dir=None,
                   verify: bool = False) -> RepeatReport:
    """Build the sub-container for the selection and re-run it."""
    manifest = sciunit.load_manifest(execution_id)
    graph, _ = load_provenance(sciunit, execution_id)
    with tempfile.TemporaryDirectory(dir=scratch_dir, prefix="sciunit-partial-") as tmp:
        plan, sandbox = build_sub_container(selected, execution_id, sciunit, tmp)
        runner = choose_backend(
            backend, sandbox,
            plan.entry_commands[0] if plan.entry_commands else manifest.command,
            manifest.environment)
        status = 0
        for argv in plan.entry_commands:
            status = runner.run(sandbox, argv, manifest.working_dir,
                                manifest.environment)
            if status != 0:
                log.warning("entry command %s exited with %d", argv, status)
                break
        report = RepeatReport(
            execution_id=execution_id,
            backend=runner.name,
            exit_status=status,
            commands_run=[list(a) for a in plan.entry_commands],
        )
        written = _written_paths(graph, plan.required_procs)
        report.paths_written = [
            p for p in written if (sandbox / p.lstrip("/")).exists()]
        report.paths_missing = [
            p for p in written if not (sandbox / p.lstrip("/")).exists()]
        if verify:
            reference = Path(tmp) / "parent"   # kept by build_sub_container
            report.mismatched = _compare_outputs(sandbox, reference, written)
            report.outputs_matched = not report.mismatched
    return report
