"""Binary embedding interchange format and the persistent gallery database.

File layout (``*.emb``), all integers little-endian:

    magic "EMB1" | version u8=1 | reserved 3 bytes | dim u32 | count u64
    | encoder_id: u16 length + UTF-8 bytes
    then per record:
    key "video_id/frame_index": u16 length + UTF-8 bytes
    | label flag u8 | (label: u16 length + UTF-8 bytes, if flag)
    | dim x f32
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .core import EmbeddingRecord, atomic_write_bytes

MAGIC = b"EMB1"
VERSION = 1


class StoreFormatError(ValueError):
    """An .emb file violates the format contract."""


class StoreError(ValueError):
    """A store operation violates the store invariants."""


class EmbeddingStore:
    """Ordered collection of embeddings sharing one encoder and one dimension.

    Instances are treated as immutable snapshots: ``upsert`` returns a new
    store, so concurrent readers of a published snapshot are always safe.
    """

    def __init__(self, encoder_id: str, dim: int,
                 records: Iterable[EmbeddingRecord] = ()):
        if dim <= 0:
            raise StoreError("dim must be positive")
        self.encoder_id = encoder_id
        self.dim = dim
        self._records: list[EmbeddingRecord] = []
        self._index: dict[tuple[str, int], int] = {}
        for rec in records:
            self._check(rec)
            key = (rec.video_id, rec.frame_index)
            if key in self._index:
                raise StoreError(f"duplicate key {rec.key}")
            self._index[key] = len(self._records)
            self._records.append(rec)

    def _check(self, rec: EmbeddingRecord) -> None:
        if rec.vector.shape != (self.dim,):
            raise StoreError(
                f"{rec.key}: vector dim {rec.vector.shape[0]} != store dim {self.dim}")
        if rec.encoder_id != self.encoder_id:
            raise StoreError(
                f"{rec.key}: encoder {rec.encoder_id!r} != store encoder {self.encoder_id!r}")

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EmbeddingRecord]:
        return iter(self._records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (self.encoder_id == other.encoder_id and self.dim == other.dim
                and self._records == other._records)

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(self._records)

    def get(self, video_id: str, frame_index: int) -> EmbeddingRecord | None:
        pos = self._index.get((video_id, frame_index))
        return None if pos is None else self._records[pos]

    def upsert(self, records: Iterable[EmbeddingRecord]) -> "EmbeddingStore":
        """New snapshot with ``records`` appended; existing keys are replaced."""
        merged = list(self._records)
        index = dict(self._index)
        for rec in records:
            self._check(rec)
            key = (rec.video_id, rec.frame_index)
            if key in index:
                merged[index[key]] = rec
            else:
                index[key] = len(merged)
                merged.append(rec)
        return EmbeddingStore(self.encoder_id, self.dim, merged)

    def filter_by(self, predicate: Callable[[EmbeddingRecord], bool]
                  ) -> list[EmbeddingRecord]:
        """Stable-ordered subset of records; the store itself is unmodified."""
        return [r for r in self._records if predicate(r)]

    def matrix(self) -> np.ndarray:
        """Record vectors stacked in store order, shape (len, dim) float32."""
        if not self._records:
            return np.empty((0, self.dim), dtype=np.float32)
        return np.stack([r.vector for r in self._records])


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise StoreError(f"string too long for u16 length prefix: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


def write_store(store: EmbeddingStore, path: Path | str) -> None:
    parts = [MAGIC,
             struct.pack("<B3x", VERSION),
             struct.pack("<I", store.dim),
             struct.pack("<Q", len(store)),
             _pack_str(store.encoder_id)]
    for rec in store:
        parts.append(_pack_str(rec.key))
        if rec.label is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01")
            parts.append(_pack_str(rec.label))
        vec = np.ascontiguousarray(rec.vector, dtype="<f4")
        parts.append(vec.tobytes())
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise StoreFormatError(
                f"{self.path}: truncated file (wanted {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        raw = self.take(self.u16())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreFormatError(f"{self.path}: corrupt string field: {exc}") from exc


def read_store(path: Path | str) -> EmbeddingStore:
    path = Path(path)
    rd = _Reader(path.read_bytes(), str(path))
    if rd.take(4) != MAGIC:
        raise StoreFormatError(f"{path}: bad magic, not an embedding store")
    version = rd.u8()
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    rd.take(3)  # reserved
    dim = rd.u32()
    count = rd.u64()
    encoder_id = rd.string()
    records = []
    for _ in range(count):
        key = rd.string()
        video_id, _, frame_str = key.rpartition("/")
        if not video_id:
            raise StoreFormatError(f"{path}: malformed record key {key!r}")
        label = rd.string() if rd.u8() else None
        vec = np.frombuffer(rd.take(4 * dim), dtype="<f4").copy()
        records.append(EmbeddingRecord(video_id=video_id, frame_index=int(frame_str),
                                       encoder_id=encoder_id, vector=vec, label=label))
    if rd.pos != len(rd.data):
        raise StoreFormatError(f"{path}: {len(rd.data) - rd.pos} trailing bytes")
    return EmbeddingStore(encoder_id, dim, records)


def store_from_records(records: Sequence[EmbeddingRecord]) -> EmbeddingStore:
    """Build a store from a non-empty record sequence, inferring encoder and dim."""
    if not records:
        raise StoreError("cannot infer encoder/dim from an empty record list")
    first = records[0]
    return EmbeddingStore(first.encoder_id, first.vector.shape[0], records)
