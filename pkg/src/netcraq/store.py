"""Per-node register-array storage with implicit clean/dirty object state.

The store is a dense, pre-allocated block of K*V value cells (mirroring
static switch register memory) plus one read index and one write index per
key. A key is clean iff its read index is 0; the last tail-acknowledged
value always lives in cell 0 of the key's block, and pending (dirty)
versions stack at offsets 1..V-1. The read index points at the newest local
version, the write index at the next free slot.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass


@dataclass(frozen=True)
class StoreConfig:
    num_keys: int
    versions_per_key: int

    def __post_init__(self):
        if self.num_keys < 1:
            raise ValueError("num_keys must be >= 1")
        if self.versions_per_key < 2:
            raise ValueError("versions_per_key must be >= 2 (clean cell + one pending slot)")


CLEAN = "clean"
DIRTY = "dirty"

_SNAP_MAGIC = b"OSNP"


class ObjectStore:
    """K*V register cells with per-key read/write index registers."""

    def __init__(self, config: StoreConfig):
        self.config = config
        k, v = config.num_keys, config.versions_per_key
        self.cells: list[int | None] = [None] * (k * v)
        self.read_index = [0] * k
        self.write_index = [0] * k

    @property
    def num_keys(self) -> int:
        return self.config.num_keys

    @property
    def versions_per_key(self) -> int:
        return self.config.versions_per_key

    def _check_key(self, key: int):
        if not 0 <= key < self.config.num_keys:
            raise IndexError(f"key {key} out of range (K={self.config.num_keys})")

    def state_of(self, key: int) -> str:
        self._check_key(key)
        return CLEAN if self.read_index[key] == 0 else DIRTY

    def read_latest_clean(self, key: int) -> int:
        """Value in cell 0 of the key's block; 0 for a never-written key."""
        self._check_key(key)
        cell = self.cells[key * self.config.versions_per_key]
        return 0 if cell is None else cell

    def read_latest_any(self, key: int) -> int:
        """Newest local version, clean or pending (only the tail serves this
        for dirty objects; callers enforce that)."""
        self._check_key(key)
        cell = self.cells[key * self.config.versions_per_key + self.read_index[key]]
        return 0 if cell is None else cell

    def append_pending(self, key: int, value: int) -> bool:
        """Commit a pending version. Returns False (dropped, store unchanged)
        when the key's register space is exhausted.

        The first pending write lands at offset 1, preserving the last
        acknowledged value in cell 0 until the tail's ACK arrives.
        """
        self._check_key(key)
        v = self.config.versions_per_key
        offset = 1 if self.read_index[key] == 0 else self.write_index[key]
        if offset >= v:
            return False
        self.cells[key * v + offset] = value
        self.read_index[key] = offset
        self.write_index[key] = offset + 1
        return True

    def commit_clean(self, key: int, value: int):
        """Install the tail-acknowledged value and delete all pending versions."""
        self._check_key(key)
        v = self.config.versions_per_key
        base = key * v
        self.cells[base] = value
        for off in range(1, v):
            self.cells[base + off] = None
        self.read_index[key] = 0
        self.write_index[key] = 0

    # -- snapshot export/import (controller recovery copy) ------------------

    def snapshot(self) -> bytes:
        """Flat binary dump of every cell and index register."""
        k, v = self.config.num_keys, self.config.versions_per_key
        out = bytearray(_SNAP_MAGIC)
        out += struct.pack(">II", k, v)
        for cell in self.cells:
            if cell is None:
                out += b"\x00" + bytes(16)
            else:
                out += b"\x01" + cell.to_bytes(16, "big")
        for idx in self.read_index:
            out += struct.pack(">H", idx)
        for idx in self.write_index:
            out += struct.pack(">H", idx)
        return bytes(out)

    def load_snapshot(self, blob: bytes):
        """Replace all state with the snapshot's (shape must match)."""
        if blob[:4] != _SNAP_MAGIC:
            raise ValueError("not a store snapshot")
        k, v = struct.unpack(">II", blob[4:12])
        if (k, v) != (self.config.num_keys, self.config.versions_per_key):
            raise ValueError(
                f"snapshot shape {k}x{v} != store shape "
                f"{self.config.num_keys}x{self.config.versions_per_key}"
            )
        expected = 12 + k * v * 17 + 2 * k * 2
        if len(blob) != expected:
            raise ValueError(f"snapshot is {len(blob)} bytes, expected {expected}")
        off = 12
        cells: list[int | None] = []
        for _ in range(k * v):
            flag = blob[off]
            raw = blob[off + 1 : off + 17]
            cells.append(int.from_bytes(raw, "big") if flag else None)
            off += 17
        read_index = list(struct.unpack(f">{k}H", blob[off : off + 2 * k]))
        off += 2 * k
        write_index = list(struct.unpack(f">{k}H", blob[off : off + 2 * k]))
        self.cells = cells
        self.read_index = read_index
        self.write_index = write_index


def init(config: StoreConfig) -> ObjectStore:
    return ObjectStore(config)
