"""Binary codecs for the two KV header formats carried over datagrams.

NetCRAQ frame (21 bytes, constant size):

    ┌──────────┬────────────┬──────────────┐
    │ op (1B)  │ key (4B)   │ value (16B)  │
    │ 2-bit op │ u32 BE     │ u128 BE      │
    └──────────┴────────────┴──────────────┘

The 2-bit op code sits in the low bits of byte 0; the upper six bits are
reserved and must be zero (strict decoding).

Baseline chain frame (25 + 4*sc bytes, grows 4 bytes per embedded node):

    ┌─────┬─────┬───────┬─────┬────┬────────┬─────────────┐
    │ op  │ key │ value │ seq │ sc │ cursor │ sc x node   │
    │ 1B  │ 4B  │ 16B   │ u16 │ u8 │ u8     │ u32 BE each │
    └─────┴─────┴───────┴─────┴────┴────────┴─────────────┘

All multi-byte integers are big-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

NETCRAQ_FRAME_SIZE = 21
BASELINE_FIXED_SIZE = 25
SEQ_MAX = 0xFFFF
VALUE_MAX = (1 << 128) - 1
KEY_MAX = 0xFFFFFFFF


class FrameError(ValueError):
    """Raised on any malformed frame (bad length, reserved bits, bad code)."""


class KvOp(IntEnum):
    READ = 0
    READ_REPLY = 1
    WRITE = 2
    ACK = 3


@dataclass(frozen=True)
class NetcraqFrame:
    op: KvOp
    key_id: int
    value: int = 0

    def __post_init__(self):
        if not 0 <= self.key_id <= KEY_MAX:
            raise FrameError(f"key_id out of range: {self.key_id}")
        if not 0 <= self.value <= VALUE_MAX:
            raise FrameError("value does not fit in 128 bits")


@dataclass(frozen=True)
class BaselineFrame:
    op: KvOp
    key: int
    value: int = 0
    seq: int = 0
    sc: int = 0
    nodes: tuple = field(default=())
    cursor: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) != self.sc:
            raise FrameError(f"sc={self.sc} but {len(self.nodes)} nodes embedded")
        if not 0 <= self.cursor <= self.sc:
            raise FrameError(f"cursor {self.cursor} beyond sc {self.sc}")
        if not 0 <= self.seq <= SEQ_MAX:
            raise FrameError(f"seq out of range: {self.seq}")
        if not 0 <= self.key <= KEY_MAX:
            raise FrameError(f"key out of range: {self.key}")
        if not 0 <= self.value <= VALUE_MAX:
            raise FrameError("value does not fit in 128 bits")
        for n in self.nodes:
            if not 0 <= n <= 0xFFFFFFFF:
                raise FrameError(f"node address out of range: {n}")


def encode_netcraq(frame: NetcraqFrame) -> bytes:
    return (
        struct.pack(">BI", frame.op, frame.key_id)
        + frame.value.to_bytes(16, "big")
    )


def decode_netcraq(data: bytes) -> NetcraqFrame:
    if len(data) != NETCRAQ_FRAME_SIZE:
        raise FrameError(f"expected {NETCRAQ_FRAME_SIZE} bytes, got {len(data)}")
    op_byte, key_id = struct.unpack(">BI", data[:5])
    if op_byte & 0xFC:
        raise FrameError(f"reserved bits set in op byte: {op_byte:#04x}")
    return NetcraqFrame(KvOp(op_byte), key_id, int.from_bytes(data[5:], "big"))


def encode_baseline(frame: BaselineFrame) -> bytes:
    head = struct.pack(">BI", frame.op, frame.key) + frame.value.to_bytes(16, "big")
    tail = struct.pack(">HBB", frame.seq, frame.sc, frame.cursor)
    return head + tail + struct.pack(f">{frame.sc}I", *frame.nodes)


def decode_baseline(data: bytes) -> BaselineFrame:
    if len(data) < BASELINE_FIXED_SIZE:
        raise FrameError(f"truncated frame: {len(data)} bytes")
    op_byte, key = struct.unpack(">BI", data[:5])
    if op_byte > 3:
        raise FrameError(f"unknown op code: {op_byte}")
    value = int.from_bytes(data[5:21], "big")
    seq, sc, cursor = struct.unpack(">HBB", data[21:25])
    if len(data) != BASELINE_FIXED_SIZE + 4 * sc:
        raise FrameError(
            f"sc={sc} implies {BASELINE_FIXED_SIZE + 4 * sc} bytes, got {len(data)}"
        )
    nodes = struct.unpack(f">{sc}I", data[25:])
    if cursor > sc:
        raise FrameError(f"cursor {cursor} beyond sc {sc}")
    return BaselineFrame(KvOp(op_byte), key, value, seq, sc, nodes, cursor)


def overhead_bytes(kind: str, chain_length: int) -> int:
    """Application-header size for one frame of the given protocol.

    Feeds the simulator's size-dependent serialization cost: the netcraq
    header is constant, the baseline header is affine in the number of
    embedded chain nodes.
    """
    if chain_length < 1:
        raise ValueError("chain_length must be >= 1")
    if kind == "netcraq":
        return NETCRAQ_FRAME_SIZE
    if kind == "baseline":
        return BASELINE_FIXED_SIZE + 4 * chain_length
    raise ValueError(f"unknown protocol kind: {kind!r}")
