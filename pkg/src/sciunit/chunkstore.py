"""Content-defined chunking and the content-addressed block store.

Chunk boundaries are picked by a polynomial rolling hash over a sliding
window: a boundary is declared at byte ``i`` when the low ``boundary_bits``
bits of the window hash equal the threshold and the current chunk is at
least ``min_chunk`` long; a boundary is forced at ``max_chunk``.  The hash
of the window ``B_1..B_n`` is ``sum(B_x * p^(n-x)) mod M`` and rolls in
O(1) per byte, so identical content re-synchronises to identical chunk
boundaries even after insertions (unlike fixed-size chunking).

All containers of a sciunit share one store: chunks are written once,
keyed by the SHA-256 of their payload, under ``objects/<2 hex>/<62 hex>``.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np
from filelock import FileLock, Timeout

from .errors import (
    BusyError,
    CorruptionError,
    InvalidArgumentError,
    NotFoundError,
    StorageError,
)

MERSENNE_61 = (1 << 61) - 1
DEFAULT_MULTIPLIER = 1_000_003

STORE_META = "store.meta"
STORE_LOCK = "store.lock"
STORE_FORMAT_VERSION = 1

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _is_probable_prime(n: int) -> bool:
    # Deterministic Miller-Rabin for n < 3.3e24 with the first 12 prime bases.
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class RollingHashParams:
    """Window, modulus, and boundary parameters for content-defined chunking.

    The average chunk size is about ``2**boundary_bits`` bytes.
    """

    window_len: int = 48
    multiplier: int = DEFAULT_MULTIPLIER
    modulus: int = MERSENNE_61
    boundary_bits: int = 12
    min_chunk: int = 1024
    max_chunk: int = 64 * 1024

    def __post_init__(self):
        if self.window_len < 1:
            raise InvalidArgumentError("window_len must be >= 1")
        if not (0 < self.multiplier < self.modulus):
            raise InvalidArgumentError("multiplier must satisfy 0 < p < modulus")
        if not _is_probable_prime(self.modulus):
            raise InvalidArgumentError("modulus must be prime")
        if not (1 <= self.boundary_bits < 30):
            raise InvalidArgumentError("boundary_bits must be in [1, 30)")
        if not (self.min_chunk < (1 << self.boundary_bits) < self.max_chunk):
            raise InvalidArgumentError(
                "min_chunk < 2**boundary_bits < max_chunk must hold"
            )
        if self.min_chunk < 1:
            raise InvalidArgumentError("min_chunk must be >= 1")

    @property
    def mask(self) -> int:
        return (1 << self.boundary_bits) - 1

    @property
    def threshold(self) -> int:
        # Low-bit pattern that declares a boundary; fixed to the all-ones mask.
        return self.mask

    @property
    def avg_chunk(self) -> int:
        return 1 << self.boundary_bits

    def to_json(self) -> dict:
        return {
            "window_len": self.window_len,
            "multiplier": self.multiplier,
            "modulus": self.modulus,
            "boundary_bits": self.boundary_bits,
            "min_chunk": self.min_chunk,
            "max_chunk": self.max_chunk,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RollingHashParams":
        return cls(**{k: int(v) for k, v in data.items()})


# Per-parameter tables: p^i for i < n, p^n, and b * p^n for every byte b.
_TABLE_CACHE: dict = {}


def _tables(params: RollingHashParams):
    key = (params.multiplier, params.modulus, params.window_len)
    cached = _TABLE_CACHE.get(key)
    if cached is None:
        p, m, n = params.multiplier, params.modulus, params.window_len
        powers = [1] * n
        for i in range(1, n):
            powers[i] = powers[i - 1] * p % m
        p_n = powers[-1] * p % m
        out_tab = [b * p_n % m for b in range(256)]
        cached = (powers, p_n, out_tab)
        _TABLE_CACHE[key] = cached
    return cached


def direct_hash(window: bytes, params: RollingHashParams) -> int:
    """Polynomial hash of one full window, evaluated from scratch."""
    n = params.window_len
    if len(window) != n:
        raise InvalidArgumentError(
            f"window length {len(window)} != window_len {n}"
        )
    powers, _, _ = _tables(params)
    m = params.modulus
    total = 0
    for i, b in enumerate(window):
        total += b * powers[n - 1 - i]
    return total % m


def roll_hash(prev: int, incoming: int, outgoing: int, params: RollingHashParams) -> int:
    """Hash of the window shifted right by one byte, from the previous hash."""
    _, p_n, _ = _tables(params)
    m = params.modulus
    return (prev * params.multiplier + incoming - outgoing * p_n) % m


def _scan_m61(buf, h, ring, ring_pos, filled, pos, chunk_start,
              mult, out_tab, n, mask, threshold, min_chunk, max_chunk, out):
    # Sequential boundary scan specialised to modulus 2^61-1 so every
    # intermediate fits in a signed 64-bit integer (the same source runs
    # interpreted or numba-compiled).  Multiplication by `mult` (< 2^22)
    # splits h into 41 low / 20 high bits; the high product re-enters via
    # the identity 2^61 ≡ 1 (mod M).
    M = 2305843009213693951
    low41 = 2199023255551
    low20 = 1048575
    count = 0
    for i in range(len(buf)):
        b = int(buf[i])
        lo = h & low41
        hi = h >> 41
        t = lo * mult
        t = (t & M) + (t >> 61)
        u = hi * mult
        s = t + ((u & low20) << 41) + (u >> 20)
        s = (s & M) + (s >> 61)
        if s >= M:
            s -= M
        if filled < n:
            s = s + b
            filled += 1
        else:
            s = s + b + (M - out_tab[int(ring[ring_pos])])
        s = (s & M) + (s >> 61)
        if s >= M:
            s -= M
        h = s
        ring[ring_pos] = buf[i]
        ring_pos += 1
        if ring_pos == n:
            ring_pos = 0
        pos += 1
        clen = pos - chunk_start
        if clen >= max_chunk:
            out[count] = pos
            count += 1
            chunk_start = pos
        elif filled == n and clen >= min_chunk and (h & mask) == threshold:
            out[count] = pos
            count += 1
            chunk_start = pos
    return count, h, ring_pos, filled, pos, chunk_start


_COMPILED_SCAN = None


def _compiled_scan_m61():
    global _COMPILED_SCAN
    if _COMPILED_SCAN is None:
        from numba import njit

        _COMPILED_SCAN = njit(cache=True, nogil=True)(_scan_m61)
    return _COMPILED_SCAN


class Chunker:
    """Incremental content-defined chunker.

    ``update()`` accepts arbitrary byte slices and returns the chunks that
    completed inside them; ``finalize()`` flushes the trailing partial
    chunk.  Boundaries depend only on (data, params), never on how the
    data was sliced across calls.
    """

    def __init__(self, params: RollingHashParams | None = None, use_compiled: bool | None = None):
        self.params = params or RollingHashParams()
        n = self.params.window_len
        self._h = 0
        self._ring = np.zeros(n, dtype=np.uint8)
        self._ring_pos = 0
        self._filled = 0
        self._pos = 0
        self._chunk_start = 0
        self._emitted_upto = 0
        self._finalized = False
        _, _, out_tab = _tables(self.params)
        fast = (self.params.modulus == MERSENNE_61
                and self.params.multiplier < (1 << 22))
        if use_compiled is None:
            use_compiled = fast
        if use_compiled and not fast:
            raise InvalidArgumentError(
                "compiled scan requires modulus 2^61-1 and multiplier < 2^22"
            )
        if fast:
            self._out_tab = np.asarray(out_tab, dtype=np.int64)
            self._scan = _compiled_scan_m61() if use_compiled else _scan_m61
        else:
            self._out_tab = out_tab
            self._scan = None

    def update(self, data: bytes) -> list[tuple[int, int]]:
        """Feed bytes; return (offset, length) of chunks completed so far."""
        if self._finalized:
            raise InvalidArgumentError("chunker already finalized")
        if not data:
            return []
        p = self.params
        if self._scan is not None:
            buf = np.frombuffer(data, dtype=np.uint8)
            out = np.empty(len(data) // max(p.min_chunk, 1) + 2, dtype=np.int64)
            (count, self._h, self._ring_pos, self._filled,
             self._pos, self._chunk_start) = self._scan(
                buf, self._h, self._ring, self._ring_pos, self._filled,
                self._pos, self._chunk_start, p.multiplier, self._out_tab,
                p.window_len, p.mask, p.threshold, p.min_chunk, p.max_chunk,
                out)
            ends = out[:count].tolist()
        else:
            ends = self._scan_generic(data)
        chunks = []
        start = self._emitted_upto
        for end in ends:
            chunks.append((start, end - start))
            start = end
        self._emitted_upto = start
        return chunks

    def _scan_generic(self, data: bytes) -> list[int]:
        # Arbitrary-modulus fallback: plain big-int arithmetic.
        p = self.params
        m = p.modulus
        mult = p.multiplier
        n = p.window_len
        out_tab = self._out_tab
        h = self._h
        ring = self._ring
        ring_pos = self._ring_pos
        filled = self._filled
        pos = self._pos
        chunk_start = self._chunk_start
        mask, threshold = p.mask, p.threshold
        ends = []
        for b in data:
            if filled < n:
                h = (h * mult + b) % m
                filled += 1
            else:
                h = (h * mult + b - out_tab[ring[ring_pos]]) % m
            ring[ring_pos] = b
            ring_pos = (ring_pos + 1) % n
            pos += 1
            clen = pos - chunk_start
            if clen >= p.max_chunk:
                ends.append(pos)
                chunk_start = pos
            elif filled == n and clen >= p.min_chunk and (h & mask) == threshold:
                ends.append(pos)
                chunk_start = pos
        self._h, self._ring_pos, self._filled = h, ring_pos, filled
        self._pos, self._chunk_start = pos, chunk_start
        return ends

    def finalize(self) -> list[tuple[int, int]]:
        """Flush the trailing chunk (if any).  Idempotent."""
        if self._finalized:
            return []
        self._finalized = True
        if self._pos > self._chunk_start:
            return [(self._chunk_start, self._pos - self._chunk_start)]
        return []


def chunk_stream(data, params: RollingHashParams | None = None,
                 read_size: int = 1 << 20) -> list[tuple[int, int]]:
    """Chunk a byte string or readable binary stream into (offset, length) pairs.

    Concatenating the chunks in order reproduces the input exactly; an
    empty input yields an empty list.
    """
    params = params or RollingHashParams()
    chunker = Chunker(params)
    boundaries: list[tuple[int, int]] = []
    if isinstance(data, (bytes, bytearray, memoryview)):
        stream: BinaryIO = io.BytesIO(bytes(data))
    else:
        stream = data
    while True:
        buf = stream.read(read_size)
        if not buf:
            break
        boundaries.extend(chunker.update(buf))
    boundaries.extend(chunker.finalize())
    return boundaries


def iter_chunk_payloads(stream, params: RollingHashParams | None = None,
                        read_size: int = 1 << 20) -> Iterator[bytes]:
    """Yield chunk payloads of a stream in order (single pass, bounded memory)."""
    params = params or RollingHashParams()
    chunker = Chunker(params)
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(bytes(stream))
    pending = bytearray()
    while True:
        buf = stream.read(read_size)
        if not buf:
            break
        pending.extend(buf)
        consumed = 0
        for _, length in chunker.update(buf):
            yield bytes(pending[consumed:consumed + length])
            consumed += length
        if consumed:
            del pending[:consumed]
    for _, length in chunker.finalize():
        yield bytes(pending[:length])


@dataclass(frozen=True)
class Chunk:
    """One content-addressed block: SHA-256 digest, length, payload."""

    digest: str
    length: int
    payload: bytes

    @classmethod
    def of(cls, payload: bytes) -> "Chunk":
        return cls(hashlib.sha256(payload).hexdigest(), len(payload), payload)


@dataclass(frozen=True)
class ChunkList:
    """Ordered chunk digests describing one stream, plus its total length."""

    digests: tuple[str, ...]
    total_length: int

    def to_json(self) -> dict:
        return {"digests": list(self.digests), "total_length": self.total_length}

    @classmethod
    def from_json(cls, data: dict) -> "ChunkList":
        return cls(tuple(data["digests"]), int(data["total_length"]))


class ChunkStore:
    """One-file-per-chunk store under ``objects/``, shared by all containers.

    Writers must serialise through :meth:`write_lock`; reads need no lock.
    Chunk files hold raw payload bytes only; ``store.meta`` records the
    format version and chunking parameters.
    """

    def __init__(self, root, params: RollingHashParams | None = None, create: bool = False):
        self.root = Path(root)
        self.objects = self.root / "objects"
        meta_path = self.root / STORE_META
        if create:
            self.objects.mkdir(parents=True, exist_ok=True)
            if meta_path.exists():
                raise StorageError(f"store already exists at {self.root}")
            self.params = params or RollingHashParams()
            meta = {
                "format_version": STORE_FORMAT_VERSION,
                "params": self.params.to_json(),
            }
            meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        else:
            if not meta_path.is_file():
                raise StorageError(f"no chunk store at {self.root}")
            meta = json.loads(meta_path.read_text())
            if meta.get("format_version") != STORE_FORMAT_VERSION:
                raise StorageError(
                    f"unsupported store format {meta.get('format_version')!r}"
                )
            self.params = RollingHashParams.from_json(meta["params"])
            if params is not None and params != self.params:
                raise StorageError("requested params differ from on-disk store params")

    @classmethod
    def create(cls, root, params: RollingHashParams | None = None) -> "ChunkStore":
        return cls(root, params=params, create=True)

    @classmethod
    def open(cls, root) -> "ChunkStore":
        return cls(root)

    def write_lock(self, timeout: float = 10.0):
        """Single-writer lock; raises BusyError if it cannot be acquired."""
        lock = FileLock(str(self.root / STORE_LOCK))
        try:
            lock.acquire(timeout=timeout)
        except Timeout:
            raise BusyError(f"store write lock busy: {self.root}") from None
        return lock

    def _chunk_path(self, digest: str) -> Path:
        if len(digest) != 64 or any(c not in "0123456789abcdef" for c in digest):
            raise InvalidArgumentError(f"malformed digest {digest!r}")
        return self.objects / digest[:2] / digest[2:]

    def put_chunk(self, payload: bytes) -> str:
        """Persist a payload once; returns its digest.  Idempotent."""
        digest = hashlib.sha256(payload).hexdigest()
        path = self._chunk_path(digest)
        if path.exists():
            return digest
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(payload)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise StorageError(f"cannot write chunk {digest}: {exc}") from exc
        return digest

    def get_chunk(self, digest: str) -> bytes:
        path = self._chunk_path(digest)
        try:
            payload = path.read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"unknown chunk {digest}") from None
        except OSError as exc:
            raise StorageError(f"cannot read chunk {digest}: {exc}") from exc
        actual = hashlib.sha256(payload).hexdigest()
        if actual != digest:
            raise CorruptionError(
                f"chunk {digest} is corrupt (stored bytes hash to {actual})",
                digests=[digest],
            )
        return payload

    def has_chunk(self, digest: str) -> bool:
        return self._chunk_path(digest).exists()

    def missing(self, digests) -> list[str]:
        return [d for d in digests if not self.has_chunk(d)]

    def iter_digests(self) -> Iterator[str]:
        if not self.objects.is_dir():
            return
        for sub in sorted(self.objects.iterdir()):
            if not sub.is_dir():
                continue
            for f in sorted(sub.iterdir()):
                if not f.name.startswith("."):
                    yield sub.name + f.name

    def chunk_count(self) -> int:
        return sum(1 for _ in self.iter_digests())

    def total_payload_bytes(self) -> int:
        total = 0
        for sub in self.objects.iterdir() if self.objects.is_dir() else ():
            if sub.is_dir():
                for f in sub.iterdir():
                    if not f.name.startswith("."):
                        total += f.stat().st_size
        return total

    def put_stream(self, stream, read_size: int = 1 << 20) -> ChunkList:
        """Chunk a stream with the store's params and persist every chunk."""
        digests = []
        total = 0
        for payload in iter_chunk_payloads(stream, self.params, read_size):
            digests.append(self.put_chunk(payload))
            total += len(payload)
        return ChunkList(tuple(digests), total)

    def read_stream(self, chunk_list: ChunkList, out) -> None:
        """Concatenate the chunks of a ChunkList into a writable stream."""
        missing = self.missing(chunk_list.digests)
        if missing:
            raise CorruptionError(
                f"{len(missing)} chunk(s) missing from store", digests=missing
            )
        for digest in chunk_list.digests:
            out.write(self.get_chunk(digest))
