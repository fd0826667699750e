"""Adapter from ``strace -f -y`` text output to canonical trace events.

Follow-forks output interleaves per-pid lines and splits syscalls that
block into ``<unfinished ...>`` / ``<... resumed>`` halves; both are
stitched back together here.  Unknown syscalls are skipped silently;
lines that should parse but do not are counted in the parse report.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from .auditor import TraceEvent

# `pid  1.23 name(args) = ret <dur>` with every decoration optional
_LINE_RE = re.compile(
    r"^(?:(?P<pid>\d+)\s+)?"
    r"(?:\d+\.\d+\s+)?"
    r"(?P<body>.*?)\s*$"
)
_CALL_RE = re.compile(
    r"^(?P<name>[a-z_][a-z0-9_]*)\((?P<args>.*)\)\s*=\s*(?P<ret>-?\d+|\?)"
    r"(?P<rest>.*)$"
)
_UNFINISHED_RE = re.compile(r"^(?P<head>.*?)\s*<unfinished \.\.\.>$")
_RESUMED_RE = re.compile(r"^<\.\.\. (?P<name>[a-z_][a-z0-9_]*) resumed>(?P<tail>.*)$")
_EXITED_RE = re.compile(r"^\+\+\+ exited with (-?\d+) \+\+\+$")
_KILLED_RE = re.compile(r"^\+\+\+ killed by .* \+\+\+$")
_SIGNAL_RE = re.compile(r"^--- SIG.* ---$")
_STR_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')
_FD_PATH_RE = re.compile(r"^(\d+)<(.*)>$")

_WRITE_FLAGS = ("O_WRONLY", "O_RDWR", "O_APPEND", "O_CREAT", "O_TRUNC")

_FORK_CALLS = {"fork", "vfork", "clone", "clone3"}
_IGNORED_CALLS = {
    "exit_group", "exit", "wait4", "waitid", "waitpid", "arch_prctl", "brk",
    "mmap", "mprotect", "munmap", "rt_sigaction", "rt_sigprocmask", "getpid",
    "set_tid_address", "set_robust_list", "prlimit64", "getrandom", "futex",
    "read", "write", "pread64", "pwrite64", "lseek", "fstat", "newfstatat",
    "stat", "lstat", "access", "faccessat", "faccessat2", "ioctl", "fcntl",
    "dup", "dup2", "dup3", "pipe", "pipe2", "getdents64", "statx", "umask",
    "getcwd", "rseq", "sysinfo", "uname", "getuid", "geteuid", "getgid",
    "getegid", "getppid", "gettid", "readlink", "readlinkat", "execveat",
}


@dataclass
class ParseReport:
    """What the adapter did with each input line."""

    lines: int = 0
    events: int = 0
    skipped_unknown: int = 0
    failures: int = 0
    failed_lines: list[int] = field(default_factory=list)


def _unescape(s: str) -> str:
    return s.encode("latin-1", "backslashreplace").decode("unicode_escape")

def _parse_strings(raw: str) -> list[str]:
    return [_unescape(m.group(1)) for m in _STR_RE.finditer(raw)]


def _split_args(raw: str) -> list[str]:
    """Split top-level syscall arguments on commas."""
    args, depth, quote, cur, esc = [], 0, False, [], False
    for ch in raw:
        if esc:
            cur.append(ch)
            esc = False
            continue
        if ch == "\\":
            cur.append(ch)
            esc = True
            continue
        if ch == '"':
            quote = not quote
            cur.append(ch)
            continue
        if quote:
            cur.append(ch)
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            args.append("".join(cur).strip())
            cur = []
            continue
        cur.append(ch)
    if cur:
        args.append("".join(cur).strip())
    return args


class _PidState:
    __slots__ = ("cwd", "fds", "pending")

    def __init__(self, cwd: str):
        self.cwd = cwd
        self.fds: dict[int, str] = {}
        self.pending: dict[str, str] = {}


def parse_strace_text(text: str, initial_cwd: str = "/",
                      root_pid: int | None = None) -> tuple[list[TraceEvent], ParseReport]:
    """Convert strace text into ordered canonical events plus a report."""
    report = ParseReport()
    events: list[TraceEvent] = []
    states: dict[int, _PidState] = {}
    seq = 0
    first_pid: int | None = None

    def state_for(pid: int) -> _PidState:
        st = states.get(pid)
        if st is None:
            st = _PidState(initial_cwd)
            states[pid] = st
        return st

    def emit(pid, kind, path=None, parent_pid=None, argv=None):
        nonlocal seq
        seq += 1
        events.append(TraceEvent(seq=seq, pid=pid, kind=kind, path=path,
                                 parent_pid=parent_pid, argv=argv))
        report.events += 1

    def resolve(pid: int, path: str, dirfd_arg: str | None) -> str:
        if os.path.isabs(path):
            return os.path.normpath(path)
        base = None
        if dirfd_arg:
            m = _FD_PATH_RE.match(dirfd_arg)
            if m:
                base = m.group(2)
            elif dirfd_arg.startswith("AT_FDCWD"):
                m2 = re.match(r"AT_FDCWD<(.*)>", dirfd_arg)
                base = m2.group(1) if m2 else state_for(pid).cwd
        if base is None:
            base = state_for(pid).cwd
        return os.path.normpath(os.path.join(base, path))

    def handle_call(pid: int, name: str, argstr: str, ret: str, lineno: int):
        nonlocal first_pid
        st = state_for(pid)
        if first_pid is None:
            first_pid = pid
        if name in _FORK_CALLS:
            if ret.isdigit() and int(ret) > 0:
                child = int(ret)
                states[child] = _PidState(st.cwd)
                states[child].fds = dict(st.fds)
                emit(child, "fork", parent_pid=pid)
            return
        if name == "execve":
            if ret != "0":
                return  # failed exec (PATH probing)
            args = _split_args(argstr)
            if not args:
                report.failures += 1
                report.failed_lines.append(lineno)
                return
            prog = _parse_strings(args[0])
            argv = tuple(_parse_strings(args[1])) if len(args) > 1 else ()
            if not prog:
                report.failures += 1
                report.failed_lines.append(lineno)
                return
            emit(pid, "exec", path=resolve(pid, prog[0], None),
                 parent_pid=None, argv=argv or None)
            return
        if name in ("open", "openat", "creat"):
            if not ret.lstrip("-").isdigit() or int(ret) < 0:
                return  # failed open: not a dependency
            args = _split_args(argstr)
            if name == "openat":
                dirfd, rest = (args[0] if args else ""), args[1:]
            else:
                dirfd, rest = None, args
            strings = _parse_strings(rest[0]) if rest else []
            if not strings:
                report.failures += 1
                report.failed_lines.append(lineno)
                return
            path = resolve(pid, strings[0], dirfd)
            flags = rest[1] if len(rest) > 1 else "O_WRONLY"  # creat implies write
            kind = "open_write" if (name == "creat" or
                                    any(f in flags for f in _WRITE_FLAGS)) else "open_read"
            st.fds[int(ret)] = path
            emit(pid, kind, path=path)
            return
        if name == "close":
            args = _split_args(argstr)
            if not args:
                return
            m = _FD_PATH_RE.match(args[0])
            if m:
                path = m.group(2)
                st.fds.pop(int(m.group(1)), None)
            elif args[0].isdigit():
                path = st.fds.pop(int(args[0]), None)
            else:
                path = None
            if path and "<" not in path:
                emit(pid, "close", path=os.path.normpath(path))
            return
        if name == "chdir":
            if ret == "0":
                strings = _parse_strings(argstr)
                if strings:
                    st.cwd = resolve(pid, strings[0], None)
            return
        if name in _IGNORED_CALLS:
            report.skipped_unknown += 1
            return
        report.skipped_unknown += 1

    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        report.lines += 1
        m = _LINE_RE.match(raw)
        body = m.group("body")
        pid = int(m.group("pid")) if m.group("pid") else (root_pid or 1)
        st = state_for(pid)

        if _SIGNAL_RE.match(body) or _KILLED_RE.match(body):
            continue
        exited = _EXITED_RE.match(body)
        if exited:
            emit(pid, "exit")
            continue
        unfinished = _UNFINISHED_RE.match(body)
        if unfinished:
            head = unfinished.group("head")
            name = head.split("(", 1)[0].strip()
            st.pending[name] = head
            continue
        resumed = _RESUMED_RE.match(body)
        if resumed:
            head = st.pending.pop(resumed.group("name"), None)
            if head is None:
                report.failures += 1
                report.failed_lines.append(lineno)
                continue
            body = head + resumed.group("tail")
        call = _CALL_RE.match(body)
        if call:
            handle_call(pid, call.group("name"), call.group("args"),
                        call.group("ret"), lineno)
            continue
        if body.endswith("= ?") or body.split("(", 1)[0].strip() in _IGNORED_CALLS:
            report.skipped_unknown += 1
            continue
        report.failures += 1
        report.failed_lines.append(lineno)

    return _normalize_fork_order(events, first_pid), report


def _normalize_fork_order(events: list[TraceEvent], root_pid: int | None) -> list[TraceEvent]:
    """Guarantee each child's fork event precedes its first own event.

    strace interleaves per-pid lines, so a child can log syscalls before
    the parent's clone() return is printed.  Forks are hoisted (and
    synthesized for attach races) and seq numbers reassigned densely.
    """
    forks = {ev.pid: ev for ev in events if ev.kind == "fork"}
    placed: set[int] = set()
    out: list[TraceEvent] = []
    for ev in events:
        if ev.kind == "fork":
            if ev.pid in placed:
                continue
            placed.add(ev.pid)
            out.append(ev)
            continue
        if ev.pid not in placed and ev.pid != root_pid:
            fork = forks.get(ev.pid) or TraceEvent(
                seq=0, pid=ev.pid, kind="fork", parent_pid=root_pid)
            placed.add(ev.pid)
            out.append(fork)
        elif ev.pid == root_pid:
            placed.add(ev.pid)
        out.append(ev)
    return [TraceEvent(seq=i, pid=ev.pid, kind=ev.kind, path=ev.path,
                       parent_pid=ev.parent_pid, argv=ev.argv)
            for i, ev in enumerate(out, 1)]
