"""Deterministic single-file archive for sandbox trees and bundles.

Layout: 4 magic bytes, then one record per entry, entries sorted by path.
Record header fields are fixed-width little-endian: u32 path length,
path bytes (UTF-8, '/'-separated, relative), u8 kind, u32 permission
bits, u64 content size, followed by the raw content (file bytes, or the
link target for symlinks).  No timestamps or ownership are recorded, so
the archive bytes are a pure function of tree content.
"""

from __future__ import annotations

import io
import os
import stat
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

from .errors import AuditIncompleteError, CorruptionError, InvalidArgumentError

TREE_MAGIC = b"SUA1"
BUNDLE_MAGIC = b"SUB1"

KIND_FILE = 0
KIND_DIR = 1
KIND_SYMLINK = 2

_HEADER_TAIL = struct.Struct("<BIQ")  # kind, mode, size
_PATH_LEN = struct.Struct("<I")

_COPY_BUF = 1 << 20


@dataclass(frozen=True)
class ArchiveEntry:
    """One archive record: normalized relative path, kind, mode, size."""

    path: str
    kind: int
    mode: int
    size: int
    link_target: str = ""


def _check_path(path: str) -> str:
    if not path or path.startswith("/"):
        raise InvalidArgumentError(f"archive paths must be relative: {path!r}")
    parts = path.split("/")
    if any(p in ("", ".", "..") for p in parts):
        raise InvalidArgumentError(f"archive path not normalized: {path!r}")
    return path


def write_archive(entries: Iterable[tuple[ArchiveEntry, object]], out: BinaryIO,
                  magic: bytes = TREE_MAGIC) -> None:
    """Write entries (already sorted by path) with their content sources.

    The content source may be ``None`` (dirs), ``bytes``, a filesystem
    path to read from, or a readable binary stream.
    """
    out.write(magic)
    last = None
    for entry, source in entries:
        _check_path(entry.path)
        if last is not None and entry.path <= last:
            raise InvalidArgumentError(
                f"archive entries out of order: {entry.path!r} after {last!r}")
        last = entry.path
        raw_path = entry.path.encode("utf-8")
        out.write(_PATH_LEN.pack(len(raw_path)))
        out.write(raw_path)
        out.write(_HEADER_TAIL.pack(entry.kind, entry.mode, entry.size))
        if entry.kind == KIND_DIR:
            continue
        if entry.kind == KIND_SYMLINK:
            out.write(entry.link_target.encode("utf-8"))
            continue
        written = 0
        if isinstance(source, bytes):
            out.write(source)
            written = len(source)
        elif isinstance(source, (str, Path)):
            with open(source, "rb") as fh:
                while True:
                    buf = fh.read(_COPY_BUF)
                    if not buf:
                        break
                    out.write(buf)
                    written += len(buf)
        else:
            while True:
                buf = source.read(_COPY_BUF)
                if not buf:
                    break
                out.write(buf)
                written += len(buf)
        if written != entry.size:
            raise AuditIncompleteError(
                f"{entry.path}: size changed while archiving "
                f"({entry.size} -> {written})", paths=[entry.path])


def _tree_entries(root: Path) -> Iterator[tuple[ArchiveEntry, object]]:
    records = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        rel_dir = os.path.relpath(dirpath, root)
        if rel_dir != ".":
            records.append(rel_dir.replace(os.sep, "/"))
        for name in filenames + [d for d in dirnames
                                 if os.path.islink(os.path.join(dirpath, d))]:
            rel = os.path.join(rel_dir, name) if rel_dir != "." else name
            records.append(rel.replace(os.sep, "/"))
    for rel in sorted(set(records)):
        full = root / rel
        try:
            st = os.lstat(full)
        except OSError as exc:
            raise AuditIncompleteError(f"cannot stat {full}: {exc}", paths=[rel])
        mode = stat.S_IMODE(st.st_mode)
        if stat.S_ISLNK(st.st_mode):
            target = os.readlink(full)
            entry = ArchiveEntry(rel, KIND_SYMLINK, mode,
                                 len(target.encode("utf-8")), target)
            yield entry, None
        elif stat.S_ISDIR(st.st_mode):
            yield ArchiveEntry(rel, KIND_DIR, mode, 0), None
        elif stat.S_ISREG(st.st_mode):
            if not os.access(full, os.R_OK):
                raise AuditIncompleteError(f"unreadable entry: {full}", paths=[rel])
            yield ArchiveEntry(rel, KIND_FILE, mode, st.st_size), full
        else:
            raise AuditIncompleteError(
                f"unsupported file type at {full}", paths=[rel])


def archive_tree(root, out: BinaryIO | None = None) -> bytes | None:
    """Archive a directory tree deterministically.

    Entries are sorted by relative path, so the output is independent of
    filesystem enumeration order.  Returns the bytes when ``out`` is None,
    otherwise streams into ``out``.
    """
    root = Path(root)
    if not root.is_dir():
        raise AuditIncompleteError(f"not a directory: {root}", paths=[str(root)])
    if out is None:
        buf = io.BytesIO()
        write_archive(_tree_entries(root), buf)
        return buf.getvalue()
    write_archive(_tree_entries(root), out)
    return None


def iter_archive(stream, magic: bytes = TREE_MAGIC,
                 want_content: bool = True) -> Iterator[tuple[ArchiveEntry, bytes | None]]:
    """Parse an archive, yielding entries (and content when requested)."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(bytes(stream))
    got = stream.read(4)
    if got != magic:
        raise CorruptionError(
            f"bad archive magic: expected {magic!r}, got {got!r}")
    while True:
        head = stream.read(4)
        if not head:
            return
        if len(head) < 4:
            raise CorruptionError("truncated archive header")
        (path_len,) = _PATH_LEN.unpack(head)
        raw_path = stream.read(path_len)
        tail = stream.read(_HEADER_TAIL.size)
        if len(raw_path) < path_len or len(tail) < _HEADER_TAIL.size:
            raise CorruptionError("truncated archive entry")
        kind, mode, size = _HEADER_TAIL.unpack(tail)
        path = _check_path(raw_path.decode("utf-8"))
        if kind == KIND_DIR:
            yield ArchiveEntry(path, kind, mode, size), None
            continue
        content = stream.read(size)
        if len(content) < size:
            raise CorruptionError(f"truncated content for {path}")
        if kind == KIND_SYMLINK:
            entry = ArchiveEntry(path, kind, mode, size,
                                 content.decode("utf-8"))
            yield entry, None
        else:
            yield ArchiveEntry(path, kind, mode, size), (content if want_content else None)


def extract_archive(stream, destination, magic: bytes = TREE_MAGIC) -> Path:
    """Materialize an archive into a directory; returns the directory path."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    dir_modes = []
    for entry, content in iter_archive(stream, magic=magic):
        target = destination / entry.path
        target.parent.mkdir(parents=True, exist_ok=True)
        if entry.kind == KIND_DIR:
            target.mkdir(exist_ok=True)
            dir_modes.append((target, entry.mode))
        elif entry.kind == KIND_SYMLINK:
            if target.is_symlink() or target.exists():
                target.unlink()
            os.symlink(entry.link_target, target)
        else:
            target.write_bytes(content)
            os.chmod(target, entry.mode)
    # Directory permissions go last so read-only dirs do not block children.
    for target, mode in dir_modes:
        os.chmod(target, mode)
    return destination


def list_archive(stream, magic: bytes = TREE_MAGIC) -> list[ArchiveEntry]:
    return [e for e, _ in iter_archive(stream, magic=magic, want_content=False)]
