"""Control plane: chain construction, role installation, failure detection,
and two-phase recovery.

Pure functions compute ChainConfig transitions (buildable and testable on
their own); the Controller class applies them to live simulator endpoints,
polls heartbeats, and drives the redirect/recover sequence. Every
reconfiguration bumps the config epoch; nodes discard installations tagged
with an older epoch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .node import NodeContext, NodeRole, apply_role_update
from .store import ObjectStore, StoreConfig

REDIRECTED = "redirected"
RECOVERING = "recovering"
RECOVERED = "recovered"
_PHASE_ORDER = (REDIRECTED, RECOVERING, RECOVERED)


class ChainError(ValueError):
    pass


class UnrecoverableChainError(ChainError):
    """The chain cannot lose another node and stay a chain."""


class RecoveryAborted(RuntimeError):
    """Phase 2 could not start; the phase-1 configuration stands."""


@dataclass(frozen=True)
class ChainConfig:
    nodes: tuple[int, ...]  # ordered addresses, head first, tail last
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) < 2:
            raise ChainError("a chain needs at least 2 nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ChainError("node addresses must be unique")

    @property
    def head(self) -> int:
        return self.nodes[0]

    @property
    def tail(self) -> int:
        return self.nodes[-1]

    def role_of(self, addr: int) -> NodeRole:
        if addr == self.head:
            return NodeRole.HEAD
        if addr == self.tail:
            return NodeRole.TAIL
        if addr in self.nodes:
            return NodeRole.REPLICA
        raise ChainError(f"{addr} not in chain")

    def successor_of(self, addr: int) -> int | None:
        i = self.nodes.index(addr)
        return None if i == len(self.nodes) - 1 else self.nodes[i + 1]


@dataclass
class FailureRecord:
    node_id: int
    detected_at: int
    position: int  # index in the config the node failed out of
    phase: str = REDIRECTED

    def advance(self, phase: str):
        if _PHASE_ORDER.index(phase) < _PHASE_ORDER.index(self.phase):
            raise ValueError(f"phase cannot move {self.phase} -> {phase}")
        self.phase = phase


def build_chain(node_ids, store_config: StoreConfig):
    """First node is the head, last the tail, the rest replicas.

    Returns the chain config plus a fresh NodeContext per node, ready to be
    installed on transports.
    """
    config = ChainConfig(tuple(node_ids), epoch=0)
    contexts = {}
    for addr in config.nodes:
        contexts[addr] = NodeContext(
            my_id=addr,
            my_role=config.role_of(addr),
            store=ObjectStore(store_config),
            tail_addr=config.tail,
            successor_addr=config.successor_of(addr),
            multicast_members=tuple(n for n in config.nodes if n != addr),
            epoch=config.epoch,
        )
    return config, contexts


def detect_failure(heartbeats: dict[int, int], now: int, timeout: int) -> list[int]:
    """Nodes whose last heartbeat is at least `timeout` old."""
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    return [n for n, last in heartbeats.items() if now - last >= timeout]


def phase1_redirect(config: ChainConfig, failed_id: int) -> ChainConfig:
    """Excise the failed node and re-link the chain around it."""
    if failed_id not in config.nodes:
        raise ChainError(f"{failed_id} not in chain")
    survivors = tuple(n for n in config.nodes if n != failed_id)
    if len(survivors) < 2:
        raise UnrecoverableChainError("chain would shrink below 2 nodes")
    return ChainConfig(survivors, epoch=config.epoch + 1)


def phase2_reinsert(config: ChainConfig, replacement_id: int, position: int) -> ChainConfig:
    """Put the replacement node back at the failed node's original position."""
    if replacement_id in config.nodes:
        raise ChainError(f"{replacement_id} already in chain")
    if not 0 <= position <= len(config.nodes):
        raise ChainError(f"position {position} out of range")
    nodes = config.nodes[:position] + (replacement_id,) + config.nodes[position:]
    return ChainConfig(nodes, epoch=config.epoch + 1)


def donor_for(config: ChainConfig, position: int) -> int:
    """The surviving neighbour whose store seeds the replacement: the
    predecessor in general, the successor when the head slot is refilled."""
    if position == 0:
        return config.nodes[0]
    return config.nodes[position - 1]


class Controller:
    """Single logical control-plane actor for one simulated chain."""

    def __init__(self, net, endpoints: dict, config: ChainConfig,
                 store_config: StoreConfig, addr: int):
        self.net = net
        self.endpoints = endpoints  # addr -> NodeEndpoint
        self.config = config
        self.store_config = store_config
        self.addr = addr
        self.records: list[FailureRecord] = []
        self.writes_disabled_windows: list[tuple[int, int]] = []
        self._last_heard: dict[int, int] = {}
        self._hb_period = 0
        self._hb_timeout = 0
        self._hb_running = False
        self._on_failure = None
        self._disable_started_at = None
        net.register(addr, self._on_event)

    # -- installation --------------------------------------------------------

    def install_all(self, writes_enabled: bool | None = None):
        for addr in self.config.nodes:
            ep = self.endpoints.get(addr)
            if ep is None:
                continue
            apply_role_update(
                ep.ctx,
                self.config.role_of(addr),
                self.config.tail,
                self.config.successor_of(addr),
                tuple(n for n in self.config.nodes if n != addr),
                self.config.epoch,
                writes_enabled,
            )

    # -- heartbeats ----------------------------------------------------------

    def start_heartbeats(self, period: int, timeout: int, on_failure=None):
        """Poll every node with a ping each period; declare nodes failed when
        silent for the timeout and hand them to on_failure."""
        self._hb_period = period
        self._hb_timeout = timeout
        self._on_failure = on_failure
        self._hb_running = True
        for addr in self.config.nodes:
            self._last_heard[addr] = self.net.now
        self.net.call_at(self.net.now + period, self._heartbeat_tick)

    def stop_heartbeats(self):
        self._hb_running = False

    def _heartbeat_tick(self):
        if not self._hb_running:
            return
        failed = [n for n in detect_failure(self._last_heard, self.net.now, self._hb_timeout)
                  if n in self.config.nodes]
        for addr in failed:
            record = self.phase1(addr)
            if self._on_failure is not None:
                self._on_failure(record)
        ping = json.dumps({"cmd": "ping"}).encode()
        for addr in self.config.nodes:
            self.net.send(self.addr, addr, ping, kind="control", op="ctl")
        self.net.call_at(self.net.now + self._hb_period, self._heartbeat_tick)

    def _on_event(self, net, ev):
        if ev.kind != "control":
            return
        msg = json.loads(ev.payload)
        if msg.get("cmd") == "pong":
            self._last_heard[msg["node"]] = net.now

    # -- failure handling ----------------------------------------------------

    def phase1(self, failed_id: int) -> FailureRecord:
        position = self.config.nodes.index(failed_id)
        self.config = phase1_redirect(self.config, failed_id)
        self._last_heard.pop(failed_id, None)
        self.install_all()
        record = FailureRecord(failed_id, self.net.now, position)
        self.records.append(record)
        return record

    def phase2(self, record: FailureRecord, replacement_id: int,
               copy_duration: int, on_complete=None):
        """Disable writes, copy the donor snapshot, re-insert the replacement,
        re-enable writes. The copy occupies `copy_duration` simulated time."""
        if record.phase != REDIRECTED:
            raise ValueError(f"record is {record.phase}, expected {REDIRECTED}")
        donor = donor_for(self.config, record.position)
        donor_ep = self.endpoints.get(donor)
        if donor_ep is None or donor in getattr(self.net, "_dead", ()):
            raise RecoveryAborted(f"donor {donor} unreachable")
        replacement_ep = self.endpoints[replacement_id]
        record.advance(RECOVERING)
        self.config = replace(self.config, epoch=self.config.epoch + 1)
        self.install_all(writes_enabled=False)
        self._disable_started_at = self.net.now
        snapshot = donor_ep.ctx.store.snapshot()

        def finish_copy():
            replacement_ep.ctx.store.load_snapshot(snapshot)
            self.config = phase2_reinsert(self.config, replacement_id, record.position)
            self.endpoints[replacement_id] = replacement_ep
            self.install_all(writes_enabled=True)
            self._last_heard[replacement_id] = self.net.now
            record.advance(RECOVERED)
            self.writes_disabled_windows.append((self._disable_started_at, self.net.now))
            self._disable_started_at = None
            if on_complete is not None:
                on_complete(snapshot)

        self.net.call_at(self.net.now + copy_duration, finish_copy)
        return donor, snapshot
