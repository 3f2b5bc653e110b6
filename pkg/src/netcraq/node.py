"""Per-node protocol state machines.

Each handler consumes one decoded frame plus the node's installed context
and returns a list of output actions; it never touches the transport. The
netcraq handler implements the apportioned-read chain logic (any node
answers clean reads, dirty reads go to the tail, writes propagate hop by
hop and the tail fans out acknowledgements). The baseline handler
implements tail-only chain replication driven by the node list embedded in
the frame.

Addresses are opaque integers (one per endpoint, allocated by the
controller). `source` is the address replies must go to: the transport
passes the originating client through on forwarded frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .store import CLEAN, ObjectStore
from .wire import BaselineFrame, KvOp, NetcraqFrame, SEQ_MAX


class NodeRole(Enum):
    HEAD = "head"
    REPLICA = "replica"
    TAIL = "tail"


class SequenceExhausted(RuntimeError):
    """The baseline 16-bit sequence counter has no values left."""


@dataclass
class NodeContext:
    my_id: int
    my_role: NodeRole
    store: ObjectStore
    tail_addr: int = 0
    successor_addr: int | None = None
    multicast_members: tuple[int, ...] = ()
    epoch: int = 0
    writes_enabled: bool = True
    # baseline-only registers
    seq_counter: int = 0
    last_seq_seen: int = 0


@dataclass(frozen=True)
class Send:
    dest: int
    frame: object


@dataclass(frozen=True)
class Multicast:
    frame: object


@dataclass(frozen=True)
class Reply:
    client: int
    frame: object


@dataclass(frozen=True)
class Drop:
    reason: str


Action = Send | Multicast | Reply | Drop


def handle_netcraq(ctx: NodeContext, frame: NetcraqFrame, source: int) -> list[Action]:
    store = ctx.store
    if not 0 <= frame.key_id < store.num_keys:
        return [Drop("key-range")]

    if frame.op == KvOp.READ:
        if store.state_of(frame.key_id) == CLEAN:
            value = store.read_latest_clean(frame.key_id)
            return [Reply(source, NetcraqFrame(KvOp.READ_REPLY, frame.key_id, value))]
        if ctx.my_role == NodeRole.TAIL:
            value = store.read_latest_any(frame.key_id)
            return [Reply(source, NetcraqFrame(KvOp.READ_REPLY, frame.key_id, value))]
        # dirty at a non-tail node: only the tail may answer
        return [Send(ctx.tail_addr, frame)]

    if frame.op == KvOp.WRITE:
        if not ctx.writes_enabled:
            return [Drop("writes-disabled")]
        if not store.append_pending(frame.key_id, frame.value):
            return [Drop("version-overflow")]
        if ctx.my_role != NodeRole.TAIL:
            return [Send(ctx.successor_addr, frame)]
        store.commit_clean(frame.key_id, frame.value)
        ack = NetcraqFrame(KvOp.ACK, frame.key_id, frame.value)
        return [Reply(source, ack), Multicast(ack)]

    if frame.op == KvOp.ACK:
        store.commit_clean(frame.key_id, frame.value)
        return []

    return [Drop("unexpected-op")]


def handle_baseline(ctx: NodeContext, frame: BaselineFrame, source: int) -> list[Action]:
    store = ctx.store
    if not 0 <= frame.key < store.num_keys:
        return [Drop("key-range")]
    if frame.cursor >= frame.sc:
        return [Drop("cursor-beyond-list")]

    if frame.op == KvOp.READ:
        if ctx.my_role != NodeRole.TAIL:
            nxt = frame.cursor + 1
            if nxt >= frame.sc:
                return [Drop("cursor-beyond-list")]
            return [Send(frame.nodes[nxt], replace(frame, cursor=nxt))]
        value = store.read_latest_clean(frame.key)
        reply = replace(frame, op=KvOp.READ_REPLY, value=value)
        return _route_reply_back(reply, source)

    if frame.op == KvOp.READ_REPLY:
        return _route_reply_back(frame, source)

    if frame.op == KvOp.WRITE:
        if not ctx.writes_enabled:
            return [Drop("writes-disabled")]
        if frame.cursor == 0:
            if ctx.my_role != NodeRole.HEAD:
                return [Drop("write-not-at-head")]
            if ctx.seq_counter >= SEQ_MAX:
                raise SequenceExhausted(
                    f"16-bit sequence field exhausted after {SEQ_MAX} writes"
                )
            ctx.seq_counter += 1
            frame = replace(frame, seq=ctx.seq_counter)
        if frame.seq < ctx.last_seq_seen:
            return [Drop("stale-seq")]
        ctx.last_seq_seen = frame.seq
        store.commit_clean(frame.key, frame.value)  # CR keeps a single version
        if ctx.my_role != NodeRole.TAIL:
            nxt = frame.cursor + 1
            if nxt >= frame.sc:
                return [Drop("cursor-beyond-list")]
            return [Send(frame.nodes[nxt], replace(frame, cursor=nxt))]
        return [Reply(source, replace(frame, op=KvOp.ACK))]

    return [Drop("unexpected-op")]


def _route_reply_back(frame: BaselineFrame, source: int) -> list[Action]:
    # Walk the embedded node list back to its first entry, which answers
    # the client; a read injected at the tail (sc=1) answers immediately.
    if frame.cursor == 0:
        return [Reply(source, frame)]
    nxt = frame.cursor - 1
    return [Send(frame.nodes[nxt], replace(frame, cursor=nxt))]


def apply_role_update(
    ctx: NodeContext,
    new_role: NodeRole,
    new_tail: int,
    new_successor: int | None,
    new_members: tuple[int, ...],
    epoch: int,
    writes_enabled: bool | None = None,
) -> NodeContext:
    """Install a controller update; stale epochs are discarded."""
    if epoch < ctx.epoch:
        return ctx
    ctx.my_role = new_role
    ctx.tail_addr = new_tail
    ctx.successor_addr = new_successor
    ctx.multicast_members = tuple(m for m in new_members if m != ctx.my_id)
    ctx.epoch = epoch
    if writes_enabled is not None:
        ctx.writes_enabled = writes_enabled
    return ctx
