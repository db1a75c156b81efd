"""Append-only persistent store for embedding vectors.

File format, little-endian throughout, one record per vector:

    8 bytes   key hash (uint64)
    4 bytes   dim (uint32)
    dim * 8   IEEE-754 float64 values
    4 bytes   CRC32 over the preceding record bytes

Binary float64 storage keeps cached vectors bit-identical across store
and load, which text serialization cannot guarantee. A record whose
checksum fails is treated as a miss and evicted; a structurally broken
tail (truncated write, implausible dim) drops the remainder of the file.
Either case logs a warning and compacts the file to the surviving
records.
"""

from __future__ import annotations

import logging
import os
import struct
import threading
import zlib
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<QI")
_CRC = struct.Struct("<I")

# A dim beyond this is taken as evidence of corruption rather than a real
# vector; record boundaries can no longer be trusted after it.
MAX_DIM = 1_000_000


def _pack_record(key: int, values: np.ndarray) -> bytes:
    body = _HEADER.pack(key, values.shape[0]) + values.astype("<f8").tobytes()
    return body + _CRC.pack(zlib.crc32(body))


class VectorCache:
    """Vector store keyed by 64-bit request hashes, persisted to one file.

    Writes are serialized by a lock; reads come from an in-memory map and
    may run concurrently.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[int, np.ndarray] = {}
        self._load()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: int) -> bool:
        return key in self._entries

    def get(self, key: int) -> np.ndarray | None:
        """Return the stored float64 vector for ``key``, or None on miss."""
        return self._entries.get(key)

    def put(self, key: int, values: np.ndarray) -> None:
        """Store a vector; get after put returns it bit-identically."""
        arr = np.asarray(values, dtype=np.float64).copy()
        arr.setflags(write=False)
        with self._lock:
            self._entries[key] = arr
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as fh:
                fh.write(_pack_record(key, arr))

    def clear(self) -> None:
        """Drop every entry and delete the backing file."""
        with self._lock:
            self._entries.clear()
            if self.path.exists():
                self.path.unlink()

    def stats(self) -> dict:
        size = self.path.stat().st_size if self.path.exists() else 0
        return {"path": str(self.path), "entries": len(self._entries), "file_bytes": size}

    def _load(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        offset = 0
        evicted = 0
        dropped_tail = False
        while offset < len(data):
            header = data[offset : offset + _HEADER.size]
            if len(header) < _HEADER.size:
                dropped_tail = True
                break
            key, dim = _HEADER.unpack(header)
            if dim == 0 or dim > MAX_DIM:
                # Cannot resync record boundaries past a bogus length.
                dropped_tail = True
                break
            record_len = _HEADER.size + dim * 8 + _CRC.size
            record = data[offset : offset + record_len]
            if len(record) < record_len:
                dropped_tail = True
                break
            body, (crc,) = record[: -_CRC.size], _CRC.unpack(record[-_CRC.size :])
            if zlib.crc32(body) != crc:
                evicted += 1
                offset += record_len
                continue
            values = np.frombuffer(record[_HEADER.size : -_CRC.size], dtype="<f8").copy()
            values.setflags(write=False)
            self._entries[key] = values
            offset += record_len
        if evicted or dropped_tail:
            logger.warning(
                "vector cache %s: evicted %d corrupt record(s)%s; compacting",
                self.path,
                evicted,
                " and a truncated tail" if dropped_tail else "",
            )
            self._rewrite()

    def _rewrite(self) -> None:
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            for key, values in self._entries.items():
                fh.write(_pack_record(key, values))
        os.replace(tmp, self.path)
