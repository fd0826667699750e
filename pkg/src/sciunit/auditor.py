"""Audit mode: turn a monitored reference execution into a path-mirrored
sandbox of every touched dependency plus an interaction log.

The canonical trace format is NDJSON, one event per line with keys
``{seq, pid, kind, path?, parent_pid?, argv?}``.  Live tracing (strace)
and recorded strace text are both adapters that produce this stream, so
the whole pipeline is testable from fixtures on any platform.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BackendUnavailableError,
    LogInconsistencyError,
    ParseError,
)

log = logging.getLogger(__name__)

EVENT_KINDS = ("exec", "fork", "open_read", "open_write", "close", "exit")

ROLE_READ = "read"
ROLE_WRITTEN = "written"
ROLE_EXECUTED = "executed"


@dataclass(frozen=True)
class TraceEvent:
    """One process/file interaction at a logical time ``seq``."""

    seq: int
    pid: int
    kind: str
    path: str | None = None
    parent_pid: int | None = None
    argv: tuple[str, ...] | None = None

    def to_json(self) -> dict:
        data = {"seq": self.seq, "pid": self.pid, "kind": self.kind}
        if self.path is not None:
            data["path"] = self.path
        if self.parent_pid is not None:
            data["parent_pid"] = self.parent_pid
        if self.argv is not None:
            data["argv"] = list(self.argv)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TraceEvent":
        return cls(
            seq=int(data["seq"]),
            pid=int(data["pid"]),
            kind=data["kind"],
            path=data.get("path"),
            parent_pid=(int(data["parent_pid"]) if data.get("parent_pid") is not None else None),
            argv=(tuple(data["argv"]) if data.get("argv") is not None else None),
        )


@dataclass(frozen=True)
class Interaction:
    """A subject/object relation with its logical time range."""

    subject: int            # pid
    obj: str | int          # path for file events, child pid for forks
    kind: str               # open_read | open_write | exec | fork
    start: int
    end: int


class InteractionLog:
    """Ordered trace events plus derived interaction time ranges."""

    def __init__(self, events: list[TraceEvent], interactions: list[Interaction]):
        self.events = events
        self.interactions = interactions

    @property
    def intervals(self) -> dict[tuple[int, str | int], list[tuple[int, int]]]:
        out: dict[tuple[int, str | int], list[tuple[int, int]]] = {}
        for it in self.interactions:
            out.setdefault((it.subject, it.obj), []).append((it.start, it.end))
        return out

    def pids(self) -> list[int]:
        seen: list[int] = []
        for ev in self.events:
            if ev.pid not in seen:
                seen.append(ev.pid)
        return seen

    def to_ndjson(self) -> str:
        return "".join(json.dumps(ev.to_json(), sort_keys=True) + "\n"
                       for ev in self.events)

    @classmethod
    def from_ndjson(cls, text: str) -> "InteractionLog":
        events = parse_trace_ndjson(text)
        _, log_ = ingest_trace(events)
        return log_


class DependencySet:
    """Every path the reference execution touched, with its roles."""

    def __init__(self):
        self.roles: dict[str, set[str]] = {}

    def add(self, path: str, role: str) -> None:
        self.roles.setdefault(path, set()).add(role)

    def entries(self) -> list[tuple[str, str]]:
        return [(path, role)
                for path in sorted(self.roles)
                for role in sorted(self.roles[path])]

    def paths(self) -> list[str]:
        return sorted(self.roles)

    def __contains__(self, path: str) -> bool:
        return path in self.roles

    def __len__(self) -> int:
        return len(self.roles)


def parse_trace_ndjson(text: str) -> list[TraceEvent]:
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            events.append(TraceEvent.from_json(data))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad trace event: {exc}", line=lineno) from None
    return events


def ingest_trace(events) -> tuple[DependencySet, InteractionLog]:
    """Validate an ordered event stream and derive dependencies + intervals.

    Open intervals left unclosed are closed at the owning process's exit
    (or at the end of the log).  Any pid other than the root must first
    appear in a fork or exec event naming a known parent.
    """
    events = list(events)
    deps = DependencySet()
    interactions: list[Interaction] = []
    known_pids: set[int] = set()
    open_files: dict[tuple[int, str], list[tuple[int, str]]] = {}
    spawn_start: dict[int, int] = {}
    exec_start: dict[tuple[int, str], int] = {}
    exit_seq: dict[int, int] = {}
    last_seq = 0

    for i, ev in enumerate(events):
        if ev.seq <= last_seq:
            raise ParseError(
                f"seq {ev.seq} does not increase (previous {last_seq})", line=i + 1)
        last_seq = ev.seq
        if ev.kind not in EVENT_KINDS:
            raise ParseError(f"unknown event kind {ev.kind!r}", line=i + 1)

        if ev.kind == "fork":
            if ev.parent_pid is None or ev.parent_pid not in known_pids:
                raise LogInconsistencyError(
                    f"fork of pid {ev.pid} names unknown parent {ev.parent_pid}")
            if ev.pid in known_pids:
                raise LogInconsistencyError(f"pid {ev.pid} forked twice")
            known_pids.add(ev.pid)
            spawn_start[ev.pid] = ev.seq
            continue

        if not known_pids:
            # first event establishes the root process
            if ev.kind != "exec":
                raise LogInconsistencyError(
                    f"log must start with the root exec, got {ev.kind!r}")
            known_pids.add(ev.pid)
        elif ev.pid not in known_pids:
            if ev.kind == "exec" and ev.parent_pid in known_pids:
                known_pids.add(ev.pid)
                spawn_start[ev.pid] = ev.seq
            else:
                raise LogInconsistencyError(
                    f"pid {ev.pid} appears without a fork/exec naming its parent")

        if ev.kind == "exec":
            if not ev.path:
                raise ParseError("exec event without a program path", line=i + 1)
            deps.add(ev.path, ROLE_EXECUTED)
            exec_start[(ev.pid, ev.path)] = ev.seq
        elif ev.kind in ("open_read", "open_write"):
            if not ev.path:
                raise ParseError(f"{ev.kind} event without a path", line=i + 1)
            deps.add(ev.path, ROLE_READ if ev.kind == "open_read" else ROLE_WRITTEN)
            open_files.setdefault((ev.pid, ev.path), []).append((ev.seq, ev.kind))
        elif ev.kind == "close":
            stack = open_files.get((ev.pid, ev.path or ""))
            if stack:
                start, kind = stack.pop()
                interactions.append(Interaction(ev.pid, ev.path, kind, start, ev.seq))
            # unmatched closes are tolerated (fd inherited across fork)
        elif ev.kind == "exit":
            exit_seq[ev.pid] = ev.seq
            for (pid, path), stack in open_files.items():
                if pid != ev.pid:
                    continue
                while stack:
                    start, kind = stack.pop()
                    interactions.append(Interaction(pid, path, kind, start, ev.seq))

    end_of_log = last_seq
    for (pid, path), stack in open_files.items():
        while stack:
            start, kind = stack.pop()
            interactions.append(
                Interaction(pid, path, kind, start, exit_seq.get(pid, end_of_log)))
    for (pid, path), start in exec_start.items():
        interactions.append(
            Interaction(pid, path, "exec", start, exit_seq.get(pid, end_of_log)))
    for pid, start in spawn_start.items():
        interactions.append(
            Interaction(pid, pid, "fork", start, exit_seq.get(pid, end_of_log)))

    interactions.sort(key=lambda it: (it.start, it.end, it.subject, str(it.obj)))
    return deps, InteractionLog(events, interactions)


_PROGRAM_PATTERNS = (
    re.compile(r"\.so(\.\d+)*$"),
    re.compile(r"^/(usr/)?lib(32|64)?/"),
    re.compile(r"^/etc/ld\.so"),
)


def is_data_file(path: str, roles: set[str], source_root: str = "/") -> bool:
    """Heuristic split between optional data files and program dependencies.

    Read-only files count as data unless they were executed, look like a
    shared library/loader artifact, or carry an execute bit on disk.
    """
    if roles != {ROLE_READ}:
        return False
    if any(pat.search(path) for pat in _PROGRAM_PATTERNS):
        return False
    real = Path(source_root) / path.lstrip("/")
    try:
        if os.access(real, os.X_OK) and real.is_file():
            return False
    except OSError:
        pass
    return True


@dataclass(frozen=True)
class SandboxPolicy:
    """Whether optional data files are copied into the sandbox."""

    include_data: bool = True

    @classmethod
    def parse(cls, name: str) -> "SandboxPolicy":
        if name in ("include-data", "all"):
            return cls(include_data=True)
        if name in ("exclude-data", "no-data"):
            return cls(include_data=False)
        raise ParseError(f"unknown sandbox policy {name!r}")


@dataclass
class SandboxReport:
    copied: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    external: list[str] = field(default_factory=list)


def _mirror_copy(source: Path, target: Path) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    if source.is_dir() and not source.is_symlink():
        target.mkdir(exist_ok=True)
        return
    if target.exists() or target.is_symlink():
        return
    shutil.copy(source, target, follow_symlinks=False)


def build_sandbox(deps: DependencySet, policy: SandboxPolicy, sandbox_root,
                  source_root="/") -> SandboxReport:
    """Mirror every dependency into the sandbox at its original absolute path.

    Symlinked dependencies are copied as links together with every link in
    the chain and the final target.  Files that vanished since the audit
    are recorded as missing, not fatal.
    """
    sandbox_root = Path(sandbox_root)
    sandbox_root.mkdir(parents=True, exist_ok=True)
    source_root = Path(source_root)
    report = SandboxReport()
    for path in deps.paths():
        roles = deps.roles[path]
        if not policy.include_data and is_data_file(path, roles, str(source_root)):
            report.external.append(path)
            continue
        chain_ok = True
        current = path
        for _ in range(40):  # symlink chains beyond this are hostile
            source = source_root / current.lstrip("/")
            target = sandbox_root / current.lstrip("/")
            if not source.exists() and not source.is_symlink():
                log.warning("audit-incomplete: %s vanished before copy", current)
                report.missing.append(current)
                chain_ok = False
                break
            _mirror_copy(source, target)
            if source.is_symlink():
                nxt = os.readlink(source)
                if not os.path.isabs(nxt):
                    nxt = os.path.normpath(os.path.join(os.path.dirname(current), nxt))
                current = nxt
            else:
                break
        if chain_ok:
            report.copied.append(path)
    return report


def capture_environment() -> dict[str, str]:
    return dict(os.environ)


STRACE_SYSCALLS = "execve,openat,open,creat,close,clone,clone3,fork,vfork,chdir"


def live_tracing_available() -> bool:
    if shutil.which("strace") is None:
        return False
    try:
        probe = subprocess.run(
            ["strace", "-qq", "-o", os.devnull, "/bin/true"],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, timeout=10)
        return probe.returncode == 0
    except (OSError, subprocess.TimeoutExpired):
        return False


def audit(command, sandbox_root, policy: SandboxPolicy | None = None,
          cwd=None) -> tuple[Path, InteractionLog, DependencySet, dict[str, str]]:
    """Run a command under live tracing and build its sandbox.

    Platform-gated: raises BackendUnavailableError when tracing cannot run
    here, in which case recorded-trace ingestion is the portable path.
    """
    from .strace import parse_strace_text

    if not live_tracing_available():
        raise BackendUnavailableError(
            "live tracing unavailable (strace missing or ptrace forbidden); "
            "use `ingest` with a recorded trace instead")
    policy = policy or SandboxPolicy()
    environment = capture_environment()
    workdir = str(cwd or os.getcwd())
    with tempfile.NamedTemporaryFile("r", suffix=".strace", delete=False) as tf:
        trace_path = tf.name
    try:
        proc = subprocess.run(
            ["strace", "-f", "-y", "-qq", "-v", "-s", "4096",
             "-e", "trace=" + STRACE_SYSCALLS, "-o", trace_path, "--"] + list(command),
            cwd=workdir)
        if proc.returncode != 0:
            log.warning("audited command exited with status %d", proc.returncode)
        text = Path(trace_path).read_text(errors="replace")
    finally:
        os.unlink(trace_path)
    events, parse_report = parse_strace_text(text, initial_cwd=workdir)
    if parse_report.failures:
        log.warning("strace parse skipped %d unparseable line(s)",
                    parse_report.failures)
    deps, ilog = ingest_trace(events)
    report = build_sandbox(deps, policy, sandbox_root, source_root="/")
    return Path(sandbox_root), ilog, deps, environment, report


def _sandbox_annotations(report: SandboxReport) -> list[tuple[str, str]]:
    return ([("external", p) for p in report.external]
            + [("missing", p) for p in report.missing])


def package_recorded(sciunit, trace_text: str, tree_root, working_dir: str,
                     policy: SandboxPolicy | None = None,
                     command=None, environment=None, extra_deps=()):
    """Package an execution from a recorded trace plus a source tree.

    The portable path: every dependency named by the trace is copied out
    of ``tree_root`` into a fresh path-mirrored sandbox, which is then
    committed.  The command defaults to the root exec's argv.
    """
    from .container import commit_container

    policy = policy or SandboxPolicy()
    events = parse_trace_ndjson(trace_text)
    deps, ilog = ingest_trace(events)
    for path, role in extra_deps:
        deps.add(path, role)
    if command is None:
        roots = [e for e in events if e.kind == "exec"]
        if not roots or not roots[0].argv:
            raise ParseError("trace has no root exec argv; pass a command")
        command = list(roots[0].argv)
    with tempfile.TemporaryDirectory(prefix="sciunit-audit-") as tmp:
        sandbox = Path(tmp) / "sandbox"
        report = build_sandbox(deps, policy, sandbox, source_root=tree_root)
        return commit_container(
            sciunit, sandbox, command, dict(environment or {}), working_dir,
            log_text=ilog.to_ndjson(),
            annotations=_sandbox_annotations(report))


def package_live(sciunit, command, working_dir=None,
                 policy: SandboxPolicy | None = None, extra_deps=()):
    """Audit a live command run and commit the resulting sandbox."""
    from .container import commit_container

    policy = policy or SandboxPolicy()
    workdir = str(working_dir or os.getcwd())
    with tempfile.TemporaryDirectory(prefix="sciunit-audit-") as tmp:
        sandbox = Path(tmp) / "sandbox"
        sandbox_root, ilog, deps, environment, report = audit(
            command, sandbox, policy=policy, cwd=workdir)
        if extra_deps:
            extra = DependencySet()
            for path, role in extra_deps:
                extra.add(path, role)
            extra_report = build_sandbox(extra, policy, sandbox_root,
                                         source_root="/")
            report.missing.extend(extra_report.missing)
            report.external.extend(extra_report.external)
        return commit_container(
            sciunit, sandbox_root, list(command), environment, workdir,
            log_text=ilog.to_ndjson(),
            annotations=_sandbox_annotations(report))
