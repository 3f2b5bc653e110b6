"""Software chain replication with apportioned reads, a tail-only chain
baseline, a deterministic network simulator, a per-key consistency verifier
and a benchmark harness."""

from .controller import ChainConfig, build_chain, detect_failure, phase1_redirect
from .net import LinkModel, Network
from .node import NodeContext, NodeRole, handle_baseline, handle_netcraq
from .store import ObjectStore, StoreConfig
from .verify import HistoryEntry, brute_force_oracle, check_per_key
from .wire import (BaselineFrame, FrameError, KvOp, NetcraqFrame,
                   decode_baseline, decode_netcraq, encode_baseline,
                   encode_netcraq, overhead_bytes)

__version__ = "0.1.0"
