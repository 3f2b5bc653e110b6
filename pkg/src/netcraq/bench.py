"""Workload generation, experiment orchestration, metrics and CSV emission.

Four experiment shapes are reproduced at desk scale:

  distance sweep   read throughput per injection distance from the tail
  latency sweep    response latency at increasing offered rates, mixing
                   injection points across all nodes
  mixed workload   read throughput and dirty-commit budget as the write
                   fraction rises
  chain scaling    read cost at the head as the chain grows

Distance, mixed and scaling use closed-loop clients: the self-clocked
completion rate is the attainable rate (the simulator deliberately has no
queuing model, so an offered-rate search cannot saturate). The latency
sweep drives open-loop clients at the given rates.

Throughputs are compared between protocols on identical op plans and seeds;
a (spec, seed) pair fully determines every CSV byte.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field

from . import verify
from .controller import build_chain
from .net import LinkModel, Network, NodeEndpoint
from .store import StoreConfig
from .verify import HistoryEntry
from .wire import BaselineFrame, KvOp, NetcraqFrame, decode_baseline, decode_netcraq, \
    encode_baseline, encode_netcraq

PROTOCOLS = ("netcraq", "baseline")

NODE_BASE = 0x0A000001      # 10.0.0.1
CLIENT_BASE = 0x0A010001    # 10.1.0.1
CONTROLLER_ADDR = 0x0A00FFFE

DEFAULT_STORE = StoreConfig(num_keys=1024, versions_per_key=8)

US = 1000  # ns per simulated microsecond


@dataclass
class WorkloadSpec:
    total_ops: int = 1000
    write_fraction: float = 0.0
    key_dist: str = "uniform"       # uniform | zipfian
    zipf_exponent: float = 0.99
    rate_qps: float | None = None   # None: closed loop
    target: str = "head"            # head | tail | round_robin | index:<i>
    num_clients: int = 1
    seed: int = 0
    timeout_us: float | None = 2000.0
    max_read_attempts: int = 1

    def __post_init__(self):
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write fraction must be within [0, 1]")
        if self.rate_qps is not None and self.rate_qps <= 0:
            raise ValueError("rate must be positive")
        if self.total_ops < 1 or self.num_clients < 1:
            raise ValueError("need at least one op and one client")


class KeySampler:
    def __init__(self, spec: WorkloadSpec, num_keys: int):
        self.num_keys = num_keys
        self._cdf = None
        if spec.key_dist == "zipfian":
            weights = [1.0 / (rank + 1) ** spec.zipf_exponent for rank in range(num_keys)]
            total = sum(weights)
            acc, cdf = 0.0, []
            for w in weights:
                acc += w / total
                cdf.append(acc)
            self._cdf = cdf
        elif spec.key_dist != "uniform":
            raise ValueError(f"unknown key distribution {spec.key_dist!r}")

    def sample(self, rng: random.Random) -> int:
        if self._cdf is None:
            return rng.randrange(self.num_keys)
        return min(bisect.bisect_left(self._cdf, rng.random()), self.num_keys - 1)


@dataclass(frozen=True)
class PlannedOp:
    kind: str   # read | write
    key: int
    entry: int  # chain index the op is injected at


def plan_ops(spec: WorkloadSpec, chain_length: int, num_keys: int,
             client_index: int, count: int) -> list[PlannedOp]:
    rng = random.Random(spec.seed * 1_000_003 + 1009 * (client_index + 1))
    sampler = KeySampler(spec, num_keys)
    ops = []
    for i in range(count):
        is_write = rng.random() < spec.write_fraction
        key = sampler.sample(rng)
        if is_write:
            entry = 0  # writes enter at the head
        elif spec.target == "head":
            entry = 0
        elif spec.target == "tail":
            entry = chain_length - 1
        elif spec.target == "round_robin":
            entry = (client_index + i) % chain_length
        elif spec.target.startswith("index:"):
            entry = int(spec.target.split(":", 1)[1])
        else:
            raise ValueError(f"unknown target policy {spec.target!r}")
        ops.append(PlannedOp("write" if is_write else "read", key, entry))
    return ops


class SimCluster:
    """One protocol chain plus its clients on one deterministic network."""

    def __init__(self, protocol: str, chain_length: int,
                 store_config: StoreConfig = DEFAULT_STORE,
                 link: LinkModel | None = None, seed: int = 0):
        if protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {protocol!r}")
        self.protocol = protocol
        self.store_config = store_config
        self.net = Network(link, seed)
        node_ids = [NODE_BASE + i for i in range(chain_length)]
        self.chain, contexts = build_chain(node_ids, store_config)
        self.endpoints = {addr: NodeEndpoint(self.net, ctx, protocol)
                          for addr, ctx in contexts.items()}
        self.version_counter = itertools.count(1)
        self.history: list[HistoryEntry] = []
        self.clients: list[Client] = []

    def add_client(self, plan: list[PlannedOp], *, rate_qps: float | None = None,
                   timeout_us: float | None = None, max_read_attempts: int = 1) -> "Client":
        addr = CLIENT_BASE + len(self.clients)
        client = Client(self, addr, plan, rate_qps=rate_qps,
                        timeout_us=timeout_us, max_read_attempts=max_read_attempts)
        self.clients.append(client)
        return client

    def start(self):
        for client in self.clients:
            client.start()

    def run(self, max_time: int | None = None):
        return self.net.run_until_quiescent(max_time)

    def dirty_commits(self) -> int:
        return sum(ep.dirty_appends for ep in self.endpoints.values())

    def node_drops(self) -> int:
        return sum(sum(ep.drop_counts.values()) for ep in self.endpoints.values())

    def reconcile_outcomes(self):
        """Classify timed-out writes whose frames were observably dropped."""
        dropped_versions = set()
        for _, _, op, _, value in itertools.chain.from_iterable(
                ep.drop_records for ep in self.endpoints.values()):
            if op == "WRITE":
                dropped_versions.add(value >> 64)
        for _, _, _, op, _, payload in self.net.metrics.drop_records:
            if op != "WRITE":
                continue
            if self.protocol == "netcraq":
                dropped_versions.add(decode_netcraq(payload).value >> 64)
            else:
                dropped_versions.add(decode_baseline(payload).value >> 64)
        for entry in self.history:
            if (entry.kind == verify.WRITE and entry.outcome == verify.TIMED_OUT
                    and entry.version in dropped_versions):
                entry.outcome = verify.DROPPED


class Client:
    """Issues planned ops against the chain and records the history.

    Closed loop (rate_qps None): the next op goes out the instant the
    previous one completes or finally times out. Open loop: op i goes out
    at i/rate regardless of completions.
    """

    def __init__(self, cluster: SimCluster, addr: int, plan: list[PlannedOp], *,
                 rate_qps: float | None, timeout_us: float | None,
                 max_read_attempts: int = 1):
        self.cluster = cluster
        self.addr = addr
        self.plan = plan
        self.rate_qps = rate_qps
        self.timeout_ns = None if timeout_us is None else int(timeout_us * US)
        self.max_read_attempts = max_read_attempts
        self.entries: list[HistoryEntry] = []
        self.stray_replies = 0
        self._attempts: dict[int, int] = {}
        self._outstanding: dict[tuple[str, int], deque] = {}
        cluster.net.register(addr, self.on_event)

    def start(self):
        net = self.cluster.net
        if self.rate_qps is None:
            if self.plan:
                net.call_at(net.now, lambda: self._issue(0))
        else:
            gap = 1e9 / self.rate_qps
            base = net.now
            for i in range(len(self.plan)):
                net.call_at(base + int(round(i * gap)), lambda i=i: self._issue(i))

    # -- op lifecycle --------------------------------------------------------

    def _issue(self, index: int):
        op = self.plan[index]
        net = self.cluster.net
        if op.kind == verify.WRITE:
            version = next(self.cluster.version_counter)
            value = (version << 64) | op.key
        else:
            version, value = 0, 0
        entry = HistoryEntry(self.addr, op.kind, op.key, version, invoke=net.now)
        self.entries.append(entry)
        self.cluster.history.append(entry)
        self._attempts[index] = 0
        reply_op = "READ_REPLY" if op.kind == verify.READ else "ACK"
        self._outstanding.setdefault((reply_op, op.key), deque()).append((index, entry))
        self._send(index, attempt=0, value=value)

    def _send(self, index: int, attempt: int, value: int):
        op = self.plan[index]
        chain = self.cluster.chain
        entry_index = (op.entry + attempt) % len(chain.nodes)
        dest = chain.nodes[entry_index]
        if self.cluster.protocol == "netcraq":
            kv = KvOp.WRITE if op.kind == verify.WRITE else KvOp.READ
            payload = encode_netcraq(NetcraqFrame(kv, op.key, value))
        else:
            if op.kind == verify.WRITE:
                frame = BaselineFrame(KvOp.WRITE, op.key, value, 0,
                                      len(chain.nodes), chain.nodes, 0)
            else:
                suffix = chain.nodes[entry_index:]
                frame = BaselineFrame(KvOp.READ, op.key, 0, 0,
                                      len(suffix), suffix, 0)
            kv = frame.op
            payload = encode_baseline(frame)
        net = self.cluster.net
        net.send(self.addr, dest, payload, reply_to=self.addr, op=kv.name, key=op.key)
        if self.timeout_ns is not None:
            net.call_at(net.now + self.timeout_ns,
                        lambda: self._on_timeout(index, attempt))

    def _on_timeout(self, index: int, attempt: int):
        entry = self.entries[index]
        if entry.outcome != verify.PENDING or self._attempts[index] != attempt:
            return
        op = self.plan[index]
        if op.kind == verify.READ and attempt + 1 < self.max_read_attempts:
            self._attempts[index] = attempt + 1
            self._send(index, attempt + 1, 0)
            return
        entry.outcome = verify.TIMED_OUT
        self._advance(index)

    def on_event(self, net: Network, ev):
        if ev.kind != "data":
            return
        if self.cluster.protocol == "netcraq":
            frame = decode_netcraq(ev.payload)
            key, value = frame.key_id, frame.value
        else:
            frame = decode_baseline(ev.payload)
            key, value = frame.key, frame.value
        queue = self._outstanding.get((frame.op.name, key))
        entry = None
        index = None
        while queue:
            index, candidate = queue.popleft()
            if candidate.outcome == verify.PENDING:
                entry = candidate
                break
        if entry is None:
            self.stray_replies += 1
            return
        entry.complete = net.now
        if entry.kind == verify.READ:
            entry.outcome = verify.REPLIED
            entry.version = value >> 64
        else:
            entry.outcome = verify.ACKED
        self._advance(index)

    def _advance(self, index: int):
        if self.rate_qps is None and index + 1 < len(self.plan):
            self._issue(index + 1)


# -- run driver ---------------------------------------------------------------

@dataclass
class RunResult:
    protocol: str
    chain_length: int
    cluster: SimCluster
    history: list[HistoryEntry]
    completed: int
    completed_reads: int
    duration_ns: int
    latencies_ns: list[int]
    qps: float
    read_qps: float
    msgs_per_query: float
    dirty_commits: int
    drops: int

    @property
    def trace(self):
        return self.cluster.net.trace


def run_workload(protocol: str, chain_length: int, spec: WorkloadSpec, *,
                 store_config: StoreConfig = DEFAULT_STORE,
                 link: LinkModel | None = None) -> RunResult:
    cluster = SimCluster(protocol, chain_length, store_config, link, spec.seed)
    per_client = spec.total_ops // spec.num_clients
    leftover = spec.total_ops - per_client * spec.num_clients
    client_rate = None if spec.rate_qps is None else spec.rate_qps / spec.num_clients
    for c in range(spec.num_clients):
        count = per_client + (1 if c < leftover else 0)
        plan = plan_ops(spec, chain_length, store_config.num_keys, c, count)
        cluster.add_client(plan, rate_qps=client_rate, timeout_us=spec.timeout_us,
                           max_read_attempts=spec.max_read_attempts)
    cluster.start()
    cluster.run()
    cluster.reconcile_outcomes()
    return summarize(cluster, spec)


def summarize(cluster: SimCluster, spec: WorkloadSpec) -> RunResult:
    history = cluster.history
    done = [e for e in history if e.outcome in (verify.REPLIED, verify.ACKED)]
    reads_done = sum(1 for e in done if e.kind == verify.READ)
    latencies = [e.complete - e.invoke for e in done]
    if done:
        span = max(e.complete for e in done) - min(e.invoke for e in history)
    else:
        span = 0
    if spec.rate_qps is not None:
        # the offered window is total_ops/rate long even if completions bunch up
        span = max(span, int(round(spec.total_ops * 1e9 / spec.rate_qps)))
    span = max(span, 1)
    qps = len(done) * 1e9 / span
    read_qps = reads_done * 1e9 / span
    msgs = cluster.net.metrics.data_deliveries / max(len(done), 1)
    drops = cluster.net.metrics.total_drops() + cluster.node_drops()
    return RunResult(
        protocol=cluster.protocol,
        chain_length=len(cluster.chain.nodes),
        cluster=cluster,
        history=history,
        completed=len(done),
        completed_reads=reads_done,
        duration_ns=span,
        latencies_ns=latencies,
        qps=qps,
        read_qps=read_qps,
        msgs_per_query=msgs,
        dirty_commits=cluster.dirty_commits(),
        drops=drops,
    )


def percentile_ns(latencies: list[int], q: float) -> float:
    if not latencies:
        return 0.0
    ordered = sorted(latencies)
    rank = max(0, math.ceil(q * len(ordered)) - 1)
    return float(ordered[rank])


# -- metrics rows and CSV -----------------------------------------------------

CSV_COLUMNS = [
    "experiment", "protocol", "chain_length", "distance_from_tail",
    "offered_rate", "completed_qps",
    "latency_mean_us", "latency_p95_us", "latency_p99_us",
    "wire_msgs_per_query", "dirty_commits", "drops",
]


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    protocol: str
    chain_length: int
    distance_from_tail: int
    offered_rate: float
    completed_qps: float
    latency_mean_us: float
    latency_p95_us: float
    latency_p99_us: float
    wire_msgs_per_query: float
    dirty_commits: int
    drops: int

    def __post_init__(self):
        if self.completed_qps > self.offered_rate + 1e-9:
            raise ValueError("completed QPS cannot exceed the offered rate")

    def as_list(self):
        return [getattr(self, col) for col in CSV_COLUMNS]


def make_row(experiment: str, result: RunResult, *, distance: int,
             offered_rate: float | None = None, qps: float | None = None) -> MetricsRow:
    lat = result.latencies_ns
    mean_us = (sum(lat) / len(lat) / US) if lat else 0.0
    completed_qps = result.qps if qps is None else qps
    return MetricsRow(
        experiment=experiment,
        protocol=result.protocol,
        chain_length=result.chain_length,
        distance_from_tail=distance,
        offered_rate=completed_qps if offered_rate is None else offered_rate,
        completed_qps=completed_qps,
        latency_mean_us=mean_us,
        latency_p95_us=percentile_ns(lat, 0.95) / US,
        latency_p99_us=percentile_ns(lat, 0.99) / US,
        wire_msgs_per_query=result.msgs_per_query,
        dirty_commits=result.dirty_commits,
        drops=result.drops,
    )


def emit_csv(rows: list[MetricsRow], path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def rows_to_csv_bytes(rows: list[MetricsRow]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue().encode()


def parse_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [dict(r) for r in csv.DictReader(f)]


# -- the four experiments -----------------------------------------------------

def run_distance_sweep(chain_length: int = 4,
                       workload: WorkloadSpec | None = None, *,
                       store_config: StoreConfig = DEFAULT_STORE,
                       link: LinkModel | None = None,
                       protocols=PROTOCOLS,
                       runs_out: list | None = None) -> list[MetricsRow]:
    spec = workload or WorkloadSpec(total_ops=400)
    if spec.write_fraction != 0.0:
        raise ValueError("distance sweep is read-only")
    rows = []
    for protocol in protocols:
        for distance in range(chain_length):
            point = WorkloadSpec(
                total_ops=spec.total_ops, write_fraction=0.0,
                key_dist=spec.key_dist, zipf_exponent=spec.zipf_exponent,
                rate_qps=None, target=f"index:{chain_length - 1 - distance}",
                num_clients=1, seed=spec.seed, timeout_us=spec.timeout_us)
            result = run_workload(protocol, chain_length, point,
                                  store_config=store_config, link=link)
            rows.append(make_row("distance", result, distance=distance))
            if runs_out is not None:
                runs_out.append((f"distance_{protocol}_d{distance}", result))
    return rows


def run_latency_sweep(chain_length: int = 4,
                      rates: list | None = None, *,
                      total_ops: int = 800, seed: int = 0,
                      store_config: StoreConfig = DEFAULT_STORE,
                      link: LinkModel | None = None,
                      protocols=PROTOCOLS,
                      runs_out: list | None = None) -> list[MetricsRow]:
    rates = list(rates or [1000, 5000, 10000, 20000])
    if rates != sorted(rates):
        raise ValueError("rates must be ascending")
    rows = []
    for protocol in protocols:
        for rate in rates:
            # one open-loop client per node so every injection distance
            # contributes to the pooled latency figures
            cluster = SimCluster(protocol, chain_length, store_config, link, seed)
            per_client = total_ops // chain_length
            spec = WorkloadSpec(total_ops=per_client * chain_length,
                                rate_qps=rate, seed=seed, timeout_us=None)
            for c in range(chain_length):
                point = WorkloadSpec(total_ops=per_client, target=f"index:{c}",
                                     seed=seed, timeout_us=None)
                plan = plan_ops(point, chain_length, store_config.num_keys, c, per_client)
                cluster.add_client(plan, rate_qps=rate / chain_length, timeout_us=None)
            cluster.start()
            cluster.run()
            result = summarize(cluster, spec)
            rows.append(make_row("latency", result, distance=-1, offered_rate=float(rate)))
            if runs_out is not None:
                runs_out.append((f"latency_{protocol}_r{rate}", result))
    return rows


def run_mixed_workload(chain_length: int = 4,
                       write_fractions: list | None = None, *,
                       total_ops: int = 8000, seed: int = 0,
                       store_config: StoreConfig = DEFAULT_STORE,
                       link: LinkModel | None = None,
                       protocols=PROTOCOLS,
                       runs_out: list | None = None) -> list[MetricsRow]:
    fractions = list(write_fractions or [0.0, 0.25, 0.5, 0.75])
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("write fractions must lie in [0, 1]")
    rows = []
    for protocol in protocols:
        for frac in fractions:
            # zipfian keys so same-key writes overlap and dirty versions
            # actually accumulate at desk-scale op counts
            spec = WorkloadSpec(
                total_ops=total_ops, write_fraction=frac, key_dist="zipfian",
                target="round_robin", num_clients=8,
                seed=seed * 7 + int(frac * 100))
            result = run_workload(protocol, chain_length, spec,
                                  store_config=store_config, link=link)
            rows.append(make_row(f"mixed_wf{frac}", result, distance=-1,
                                 offered_rate=result.qps, qps=result.read_qps))
            if runs_out is not None:
                runs_out.append((f"mixed_{protocol}_wf{frac}", result))
    return rows


def run_chain_scaling(lengths=None, *, reads: int = 300, seed: int = 0,
                      store_config: StoreConfig = DEFAULT_STORE,
                      link: LinkModel | None = None,
                      protocols=PROTOCOLS,
                      runs_out: list | None = None) -> list[MetricsRow]:
    lengths = list(lengths or range(4, 9))
    rows = []
    for protocol in protocols:
        for n in lengths:
            spec = WorkloadSpec(total_ops=reads, target="head", seed=seed)
            result = run_workload(protocol, n, spec,
                                  store_config=store_config, link=link)
            rows.append(make_row("scaling", result, distance=n - 1))
            if runs_out is not None:
                runs_out.append((f"scaling_{protocol}_n{n}", result))
    return rows
