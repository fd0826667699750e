import pytest

from sciunit.auditor import ingest_trace
from sciunit.strace import parse_strace_text

FIXTURE = """\
1000  execve("/bin/sh", ["sh", "run.sh"], 0x7ffd4 /* 20 vars */) = 0
1000  openat(AT_FDCWD</work>, "/etc/ld.so.cache", O_RDONLY|O_CLOEXEC) = 3</etc/ld.so.cache>
1000  close(3</etc/ld.so.cache>)        = 0
1000  openat(AT_FDCWD</work>, "run.sh", O_RDONLY) = 3</work/run.sh>
1000  close(3</work/run.sh>)            = 0
1000  clone(child_stack=NULL, flags=SIGCHLD) = 1001
1001  execve("/usr/bin/grep", ["grep", "x", "in.txt"], 0x55 /* 20 vars */) = 0
1001  openat(AT_FDCWD</work>, "in.txt", O_RDONLY) = 3</work/in.txt>
1001  openat(AT_FDCWD</work>, "out.txt", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 4</work/out.txt>
1001  close(3</work/in.txt>)            = 0
1001  close(4</work/out.txt>)           = 0
1001  +++ exited with 0 +++
1000  --- SIGCHLD {si_signo=SIGCHLD} ---
1000  +++ exited with 0 +++
"""


class TestStraceParsing:
    def test_fixture_produces_expected_events(self):
        events, report = parse_strace_text(FIXTURE, initial_cwd="/work")
        kinds = [(e.pid, e.kind, e.path) for e in events]
        assert kinds == [
            (1000, "exec", "/bin/sh"),
            (1000, "open_read", "/etc/ld.so.cache"),
            (1000, "close", "/etc/ld.so.cache"),
            (1000, "open_read", "/work/run.sh"),
            (1000, "close", "/work/run.sh"),
            (1001, "fork", None),
            (1001, "exec", "/usr/bin/grep"),
            (1001, "open_read", "/work/in.txt"),
            (1001, "open_write", "/work/out.txt"),
            (1001, "close", "/work/in.txt"),
            (1001, "close", "/work/out.txt"),
            (1001, "exit", None),
            (1000, "exit", None),
        ]
        assert report.failures == 0
        assert events[0].argv == ("sh", "run.sh")
        fork = [e for e in events if e.kind == "fork"][0]
        assert fork.parent_pid == 1000

    def test_events_feed_ingest_cleanly(self):
        events, _ = parse_strace_text(FIXTURE, initial_cwd="/work")
        deps, log = ingest_trace(events)
        assert deps.roles["/work/out.txt"] == {"written"}
        assert deps.roles["/usr/bin/grep"] == {"executed"}
        assert log.intervals[(1001, "/work/in.txt")] == [(8, 10)]

    def test_open_read_flag_variants(self):
        text = (
            '7  execve("/p", ["p"], 0x1 /* 1 var */) = 0\n'
            '7  openat(AT_FDCWD</d>, "a", O_RDONLY) = 3</d/a>\n'
            '7  openat(AT_FDCWD</d>, "b", O_RDWR) = 4</d/b>\n'
            '7  openat(AT_FDCWD</d>, "c", O_WRONLY|O_APPEND) = 5</d/c>\n'
            '7  creat("d", 0644) = 6</d/d>\n'
        )
        events, report = parse_strace_text(text)
        kinds = {e.path: e.kind for e in events if e.path and e.kind.startswith("open")}
        assert kinds == {
            "/d/a": "open_read",
            "/d/b": "open_write",
            "/d/c": "open_write",
            "/d": "open_write",  # creat of "d" resolved against default cwd "/"
        }
        assert report.failures == 0

    def test_garbage_line_counted_not_fatal(self):
        text = (
            '5  execve("/p", ["p"], 0x1 /* 0 vars */) = 0\n'
            "complete nonsense here\n"
            "5  +++ exited with 0 +++\n"
        )
        events, report = parse_strace_text(text)
        assert report.failures == 1
        assert [e.kind for e in events] == ["exec", "exit"]

    def test_unknown_syscalls_skipped_silently(self):
        text = (
            '5  execve("/p", ["p"], 0x1 /* 0 vars */) = 0\n'
            "5  mmap(NULL, 8192, PROT_READ, MAP_PRIVATE, 3, 0) = 0\n"
            "5  futex(0x7f, FUTEX_WAIT, 2, NULL) = 0\n"
        )
        events, report = parse_strace_text(text)
        assert report.failures == 0
        assert report.skipped_unknown == 2
        assert len(events) == 1

    def test_unfinished_resumed_stitching(self):
        text = (
            '5  execve("/p", ["p"], 0x1 /* 0 vars */) = 0\n'
            '5  openat(AT_FDCWD</w>, "f", O_RDONLY <unfinished ...>\n'
            "6  fork() = 0\n"
            "5  <... openat resumed>) = 3</w/f>\n"
        )
        events, report = parse_strace_text(text)
        opens = [e for e in events if e.kind == "open_read"]
        assert [e.path for e in opens] == ["/w/f"]

    def test_child_lines_before_clone_return_are_reordered(self):
        text = (
            '10  execve("/sh", ["sh"], 0x1 /* 0 vars */) = 0\n'
            '11  execve("/child", ["child"], 0x1 /* 0 vars */) = 0\n'
            "10  clone(child_stack=NULL, flags=SIGCHLD) = 11\n"
            "11  +++ exited with 0 +++\n"
            "10  +++ exited with 0 +++\n"
        )
        events, _ = parse_strace_text(text)
        ingest_trace(events)  # must not raise
        pid11 = [e.kind for e in events if e.pid == 11]
        assert pid11[0] == "fork"

    def test_close_without_decoration_uses_fd_table(self):
        text = (
            '5  execve("/p", ["p"], 0x1 /* 0 vars */) = 0\n'
            '5  openat(AT_FDCWD</w>, "f", O_RDONLY) = 3\n'
            "5  close(3) = 0\n"
        )
        events, _ = parse_strace_text(text)
        assert [(e.kind, e.path) for e in events[1:]] == [
            ("open_read", "/w/f"), ("close", "/w/f")]

    def test_chdir_changes_relative_resolution(self):
        text = (
            '5  execve("/p", ["p"], 0x1 /* 0 vars */) = 0\n'
            '5  chdir("/other") = 0\n'
            '5  openat(AT_FDCWD, "rel.txt", O_RDONLY) = 3\n'
        )
        events, _ = parse_strace_text(text)
        assert events[-1].path == "/other/rel.txt"

    def test_seq_is_dense_and_increasing(self):
        events, _ = parse_strace_text(FIXTURE, initial_cwd="/work")
        assert [e.seq for e in events] == list(range(1, len(events) + 1))
