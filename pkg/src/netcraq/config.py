"""Run-configuration file shared by the controller, bench harness and CLI.

JSON on disk; unknown keys are rejected so typos surface instead of being
silently defaulted.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .net import LinkModel
from .store import StoreConfig


@dataclass
class RunConfig:
    chain_length: int = 4
    num_keys: int = 1024
    versions_per_key: int = 8
    heartbeat_period_us: float = 500.0
    detection_timeout_us: float = 1500.0
    propagation_us: float = 10.0
    per_byte_us: float = 0.01
    per_packet_proc_us: float = 1.0
    seed: int = 0
    # experiment sizing
    distance_reads: int = 400
    latency_rates: list = field(default_factory=lambda: [1000, 5000, 10000, 20000])
    latency_ops: int = 800
    mixed_ops: int = 8000
    mixed_fractions: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75])
    scaling_lengths: list = field(default_factory=lambda: [4, 5, 6, 7, 8])
    scaling_reads: int = 300
    # real-transport mode: node index -> "host:port"
    udp_addrs: list = field(default_factory=list)

    def store_config(self) -> StoreConfig:
        return StoreConfig(self.num_keys, self.versions_per_key)

    def link_model(self, loss=()) -> LinkModel:
        return LinkModel(self.propagation_us, self.per_byte_us,
                         self.per_packet_proc_us, tuple(loss))


def load_config(path) -> RunConfig:
    with open(path) as f:
        raw = json.load(f)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


def save_config(cfg: RunConfig, path):
    with open(path, "w") as f:
        json.dump(asdict(cfg), f, indent=2)
        f.write("\n")
