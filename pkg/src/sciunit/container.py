"""Sciunit namespaces and container versions over the shared chunk store.

A sciunit directory holds ``sciunit.json`` (name, annotations, execution
order), one manifest per container version under ``manifests/``, the
interaction log per version under ``logs/``, and the deduplicated chunk
store (``objects/`` + ``store.meta``).

A container version ("execution") is identified by the SHA-256 of its
chunk digests, command, and working directory; annotations, environment,
and timestamps never affect the id.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .archive import (
    BUNDLE_MAGIC,
    ArchiveEntry,
    KIND_FILE,
    archive_tree,
    extract_archive,
    iter_archive,
    write_archive,
)
from .chunkstore import ChunkList, ChunkStore, RollingHashParams
from .errors import CorruptionError, InvalidArgumentError, NotFoundError, StorageError

_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

SCIUNIT_META = "sciunit.json"


def canonical_json(obj) -> str:
    """The one JSON serialization used for hashing and wire payloads."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def compute_execution_id(digests, command, working_dir) -> str:
    payload = canonical_json(
        {"chunks": list(digests), "command": list(command), "working_dir": working_dir}
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class Manifest:
    """Identifies one container version inside a sciunit."""

    execution_id: str
    command: list[str]
    environment: dict[str, str]
    working_dir: str
    chunk_list: ChunkList
    provenance_ref: str = ""
    created_at: str = ""
    annotations: list[tuple[str, str]] = field(default_factory=list)

    def recompute_id(self) -> str:
        return compute_execution_id(self.chunk_list.digests, self.command, self.working_dir)

    def to_json(self) -> dict:
        return {
            "execution_id": self.execution_id,
            "command": self.command,
            "environment": self.environment,
            "working_dir": self.working_dir,
            "chunk_list": self.chunk_list.to_json(),
            "provenance_ref": self.provenance_ref,
            "created_at": self.created_at,
            "annotations": [list(kv) for kv in self.annotations],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Manifest":
        return cls(
            execution_id=data["execution_id"],
            command=list(data["command"]),
            environment=dict(data["environment"]),
            working_dir=data["working_dir"],
            chunk_list=ChunkList.from_json(data["chunk_list"]),
            provenance_ref=data.get("provenance_ref", ""),
            created_at=data.get("created_at", ""),
            annotations=[tuple(kv) for kv in data.get("annotations", [])],
        )

    def verify(self) -> None:
        actual = self.recompute_id()
        if actual != self.execution_id:
            raise CorruptionError(
                f"manifest id {self.execution_id} does not match content ({actual})"
            )


class Sciunit:
    """A named research object: annotations plus an ordered execution list."""

    def __init__(self, path):
        self.path = Path(path)
        meta = self.path / SCIUNIT_META
        if not meta.is_file():
            raise NotFoundError(f"no sciunit at {self.path}")
        data = json.loads(meta.read_text())
        self.name = data["name"]
        self.annotations: list[tuple[str, str]] = [tuple(kv) for kv in data["annotations"]]
        self.executions: list[str] = list(data["executions"])

    @classmethod
    def create(cls, root, name, params: RollingHashParams | None = None) -> "Sciunit":
        if not _NAME_RE.match(name):
            raise InvalidArgumentError(
                f"invalid sciunit name {name!r} (allowed: [A-Za-z0-9_.-]+)")
        path = Path(root) / name
        if (path / SCIUNIT_META).exists():
            raise StorageError(f"sciunit {name!r} already exists at {path}")
        path.mkdir(parents=True, exist_ok=True)
        (path / "manifests").mkdir(exist_ok=True)
        (path / "logs").mkdir(exist_ok=True)
        ChunkStore.create(path, params)
        (path / SCIUNIT_META).write_text(json.dumps(
            {"name": name, "annotations": [], "executions": []},
            indent=2, sort_keys=True) + "\n")
        return cls(path)

    @classmethod
    def open(cls, root, name) -> "Sciunit":
        return cls(Path(root) / name)

    def save(self) -> None:
        data = {
            "name": self.name,
            "annotations": [list(kv) for kv in self.annotations],
            "executions": self.executions,
        }
        tmp = self.path / (SCIUNIT_META + ".tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.path / SCIUNIT_META)

    @property
    def store(self) -> ChunkStore:
        return ChunkStore.open(self.path)

    def annotate(self, key: str, value: str) -> "Sciunit":
        """Append an annotation; never affects any execution id."""
        self.annotations.append((str(key), str(value)))
        self.save()
        return self

    def manifest_path(self, execution_id: str) -> Path:
        return self.path / "manifests" / f"{execution_id}.json"

    def log_path(self, execution_id: str) -> Path:
        return self.path / "logs" / f"{execution_id}.ndjson"

    def load_manifest(self, execution_id: str) -> Manifest:
        path = self.manifest_path(execution_id)
        if not path.is_file():
            raise NotFoundError(f"unknown execution {execution_id}")
        return Manifest.from_json(json.loads(path.read_text()))

    def resolve(self, ref: str) -> str:
        """Resolve an ordinal alias (``e1``, ``e2``, ...) or id prefix."""
        if re.fullmatch(r"e[1-9][0-9]*", ref):
            idx = int(ref[1:]) - 1
            if idx >= len(self.executions):
                raise NotFoundError(f"no execution {ref} (have {len(self.executions)})")
            return self.executions[idx]
        matches = [e for e in self.executions if e.startswith(ref)]
        if not matches:
            raise NotFoundError(f"unknown execution {ref!r}")
        if len(set(matches)) > 1:
            raise InvalidArgumentError(f"ambiguous execution prefix {ref!r}")
        return matches[0]

    def record_manifest(self, manifest: Manifest, log_text: str | None = None) -> None:
        self.manifest_path(manifest.execution_id).write_text(
            json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
        if log_text is not None:
            self.log_path(manifest.execution_id).write_text(log_text)
        if manifest.execution_id not in self.executions:
            self.executions.append(manifest.execution_id)
            self.save()


def commit_container(sciunit: Sciunit, sandbox_root, command, environment,
                     working_dir, provenance_ref: str = "",
                     log_text: str | None = None,
                     annotations=()) -> Manifest:
    """Archive a completed audit sandbox, chunk it, and record the manifest.

    Committing identical content twice yields the same execution id and
    writes no new chunk bytes.  Annotations (e.g. external/missing path
    notes from the sandbox build) never affect the id.
    """
    store = sciunit.store
    lock = store.write_lock()
    try:
        with tempfile.TemporaryFile(dir=sciunit.path) as spool:
            archive_tree(sandbox_root, spool)
            spool.seek(0)
            chunk_list = store.put_stream(spool)
        execution_id = compute_execution_id(chunk_list.digests, command, working_dir)
        manifest = Manifest(
            execution_id=execution_id,
            command=list(command),
            environment=dict(environment),
            working_dir=str(working_dir),
            chunk_list=chunk_list,
            provenance_ref=provenance_ref or (execution_id if log_text is not None else ""),
            created_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            annotations=[tuple(kv) for kv in annotations],
        )
        sciunit.record_manifest(manifest, log_text)
    finally:
        lock.release()
    return manifest


def materialize_container(sciunit: Sciunit, execution_id: str, destination) -> Path:
    """Rebuild the sandbox tree of an execution by concatenating its chunks."""
    manifest = sciunit.load_manifest(execution_id)
    store = sciunit.store
    with tempfile.TemporaryFile(dir=sciunit.path) as spool:
        store.read_stream(manifest.chunk_list, spool)
        spool.seek(0)
        return extract_archive(spool, destination)


def _bundle_entries(manifest: Manifest, log_text: str, store: ChunkStore):
    manifest_blob = (json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n").encode()
    log_blob = log_text.encode()
    entries = [
        (ArchiveEntry("log.ndjson", KIND_FILE, 0o644, len(log_blob)), log_blob),
        (ArchiveEntry("manifest.json", KIND_FILE, 0o644, len(manifest_blob)), manifest_blob),
    ]
    for digest in sorted(set(manifest.chunk_list.digests)):
        path = store._chunk_path(digest)
        entries.append((
            ArchiveEntry(f"objects/{digest[:2]}/{digest[2:]}", KIND_FILE,
                         0o644, path.stat().st_size),
            path,
        ))
    entries.sort(key=lambda pair: pair[0].path)
    return entries


def export_bundle(sciunit: Sciunit, execution_id: str, out=None) -> bytes | None:
    """Pack one execution (manifest + log + referenced chunks) into a bundle.

    Chunks shared by several executions appear once per bundle; the bundle
    is self-contained and importable on a fresh machine.
    """
    manifest = sciunit.load_manifest(execution_id)
    missing = sciunit.store.missing(manifest.chunk_list.digests)
    if missing:
        raise CorruptionError("cannot export: chunks missing", digests=missing)
    log_path = sciunit.log_path(execution_id)
    log_text = log_path.read_text() if log_path.is_file() else ""
    entries = _bundle_entries(manifest, log_text, sciunit.store)
    if out is None:
        buf = io.BytesIO()
        write_archive(entries, buf, magic=BUNDLE_MAGIC)
        return buf.getvalue()
    write_archive(entries, out, magic=BUNDLE_MAGIC)
    return None


def import_bundle(sciunit: Sciunit, bundle) -> Manifest:
    """Verify a bundle chunk-by-chunk and record its execution.

    Every chunk digest and the manifest id are checked before anything is
    accepted; a tampered bundle is rejected without touching the store.
    """
    manifest = None
    log_text = ""
    chunks: dict[str, bytes] = {}
    for entry, content in iter_archive(bundle, magic=BUNDLE_MAGIC):
        if entry.path == "manifest.json":
            manifest = Manifest.from_json(json.loads(content.decode()))
        elif entry.path == "log.ndjson":
            log_text = content.decode()
        elif entry.path.startswith("objects/") and entry.kind == KIND_FILE:
            digest = "".join(entry.path.split("/")[1:])
            actual = hashlib.sha256(content).hexdigest()
            if actual != digest:
                raise CorruptionError(
                    f"bundle chunk {digest} is corrupt", digests=[digest])
            chunks[digest] = content
    if manifest is None:
        raise CorruptionError("bundle has no manifest.json")
    manifest.verify()
    needed = set(manifest.chunk_list.digests)
    store = sciunit.store
    absent = [d for d in needed if d not in chunks and not store.has_chunk(d)]
    if absent:
        raise CorruptionError("bundle is missing referenced chunks", digests=absent)
    lock = store.write_lock()
    try:
        for digest in sorted(needed & set(chunks)):
            store.put_chunk(chunks[digest])
        sciunit.record_manifest(manifest, log_text if log_text else None)
    finally:
        lock.release()
    return manifest
