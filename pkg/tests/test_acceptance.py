"""Acceptance suite: one test per criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass line per
criterion. Quantitative checks run on the deterministic simulator with the
default link model; message counts are exact trace counts.
"""

import random
import time

import pytest

from history_gen import random_history
from netcraq.bench import (DEFAULT_STORE, PlannedOp, SimCluster, WorkloadSpec,
                           plan_ops, rows_to_csv_bytes, run_distance_sweep,
                           run_mixed_workload, run_chain_scaling, run_workload)
from netcraq.controller import Controller, RECOVERED
from netcraq.net import DropRule, LinkModel, NodeEndpoint, write_trace
from netcraq.node import NodeContext, NodeRole, SequenceExhausted, handle_baseline
from netcraq.store import ObjectStore, StoreConfig
from netcraq.verify import (ACKED, DROPPED, REPLIED, TIMED_OUT,
                            brute_force_oracle, check_per_key)
from netcraq.wire import (SEQ_MAX, BaselineFrame, KvOp, NetcraqFrame,
                          decode_baseline, decode_netcraq, encode_baseline,
                          encode_netcraq)

CLIENT0 = 0x0A010001


def _ok(n, detail):
    print(f"\nPASS criterion {n}: {detail}")


def test_criterion_01_wire_roundtrip_and_sizes():
    t0 = time.time()
    rng = random.Random(1)
    for _ in range(10_000):
        frame = NetcraqFrame(KvOp(rng.randrange(4)), rng.randrange(1 << 32),
                             rng.randrange(1 << 128))
        encoded = encode_netcraq(frame)
        assert len(encoded) == 21
        assert decode_netcraq(encoded) == frame
    for _ in range(10_000):
        sc = rng.randrange(0, 9)
        frame = BaselineFrame(KvOp(rng.randrange(4)), rng.randrange(1 << 32),
                              rng.randrange(1 << 128), rng.randrange(1 << 16),
                              sc, tuple(rng.randrange(1 << 32) for _ in range(sc)),
                              rng.randrange(sc + 1))
        encoded = encode_baseline(frame)
        assert len(encoded) == 25 + 4 * sc
        assert decode_baseline(encoded) == frame
    elapsed = time.time() - t0
    assert elapsed < 1.0
    _ok(1, f"20,000 frames round-trip, 21B / 25+4*sc layouts ({elapsed:.2f}s)")


def test_criterion_02_message_count_laws():
    t0 = time.time()
    # netcraq clean read costs 2 at every injection point
    for entry in range(4):
        cluster = SimCluster("netcraq", 4)
        cluster.add_client([PlannedOp("read", 5, entry)])
        cluster.start()
        cluster.run()
        assert len(cluster.net.trace) == 2, f"clean read at node {entry}"

    # netcraq write at the head: 4 chain messages + 1 client ACK + 3 multicast
    cluster = SimCluster("netcraq", 4)
    cluster.add_client([PlannedOp("write", 5, 0)])
    cluster.start()
    cluster.run()
    trace = cluster.net.trace
    assert len(trace) == 8
    assert sum(1 for ev in trace if ev.op == "WRITE") == 4
    assert sum(1 for ev in trace if ev.op == "ACK" and ev.dst == CLIENT0) == 1
    assert sum(1 for ev in trace if ev.op == "ACK" and ev.dst != CLIENT0) == 3

    # dirty read at a non-tail node: suppress one ACK so the key stays dirty
    nodes = cluster.chain.nodes
    link = LinkModel(loss=(DropRule(src=nodes[3], dst=nodes[1], op="ACK", nth=1),))
    cluster = SimCluster("netcraq", 4, link=link)
    cluster.add_client([PlannedOp("write", 5, 0)])
    cluster.start()
    cluster.run()
    before = len(cluster.net.trace)
    reader = cluster.add_client([PlannedOp("read", 5, 1)])
    reader.start()
    cluster.run()
    assert len(cluster.net.trace) - before == 3
    assert reader.entries[0].version == 1

    # baseline: read at the head costs 2n = 8, write costs n+1 = 5
    cluster = SimCluster("baseline", 4)
    cluster.add_client([PlannedOp("read", 5, 0)])
    cluster.start()
    cluster.run()
    assert len(cluster.net.trace) == 8

    cluster = SimCluster("baseline", 4)
    cluster.add_client([PlannedOp("write", 5, 0)])
    cluster.start()
    cluster.run()
    assert len(cluster.net.trace) == 5

    elapsed = time.time() - t0
    assert elapsed < 1.0
    _ok(2, f"2 / 3 / 8 / 4+1+3 / 5 wire messages, exact trace counts ({elapsed:.2f}s)")


def test_criterion_03_distance_independence():
    rows = run_distance_sweep(4, WorkloadSpec(total_ops=400))
    netcraq = [r for r in rows if r.protocol == "netcraq"]
    baseline = sorted((r for r in rows if r.protocol == "baseline"),
                      key=lambda r: r.distance_from_tail)
    qps = {r.completed_qps for r in netcraq}
    assert len(qps) == 1, f"netcraq QPS varies with distance: {qps}"
    lat = [r.latency_mean_us for r in baseline]
    assert all(a < b for a, b in zip(lat, lat[1:])), lat
    _ok(3, f"netcraq QPS constant at {qps.pop():.0f}/s over all distances; "
           f"baseline latency strictly increasing {[f'{x:.1f}' for x in lat]}")


def test_criterion_04_chain_scaling():
    t0 = time.time()
    rows = run_chain_scaling(range(4, 9), reads=300)
    nq = {r.chain_length: r for r in rows if r.protocol == "netcraq"}
    bl = {r.chain_length: r for r in rows if r.protocol == "baseline"}
    for n in range(4, 9):
        assert nq[n].wire_msgs_per_query == 2.0
        assert bl[n].wire_msgs_per_query == float(2 * n)
    assert bl[8].wire_msgs_per_query / nq[8].wire_msgs_per_query == 8.0
    qps_ratio = nq[8].completed_qps / bl[8].completed_qps
    assert 6.0 <= qps_ratio <= 12.0, qps_ratio
    elapsed = time.time() - t0
    assert elapsed < 10.0
    _ok(4, f"messages/read 2 vs 2n for n in 4..8; ratio at n=8 = 8 exactly; "
           f"QPS ratio {qps_ratio:.2f} within [6, 12] ({elapsed:.1f}s)")


def test_criterion_05_mixed_workloads():
    t0 = time.time()
    fractions = [0.0, 0.25, 0.5, 0.75]
    rows = run_mixed_workload(4, fractions, total_ops=8000)
    nq = [r for r in rows if r.protocol == "netcraq"]
    bl = [r for r in rows if r.protocol == "baseline"]
    dirty = [r.dirty_commits for r in nq]
    assert dirty[0] == 0
    assert all(a < b for a, b in zip(dirty, dirty[1:])), dirty
    for frac, n_row, b_row in zip(fractions, nq, bl):
        assert n_row.completed_qps > b_row.completed_qps, \
            f"wf={frac}: {n_row.completed_qps} <= {b_row.completed_qps}"
    factors = [n.completed_qps / b.completed_qps for n, b in zip(nq, bl)]
    elapsed = time.time() - t0
    assert elapsed < 30.0
    _ok(5, f"dirty commits {dirty} strictly increasing; read-QPS factors "
           f"{[f'{f:.2f}x' for f in factors]} all > 1 ({elapsed:.1f}s)")


def test_criterion_06_consistency_at_scale():
    t0 = time.time()
    spec = WorkloadSpec(total_ops=100_000, write_fraction=0.25,
                        key_dist="uniform", target="round_robin",
                        num_clients=8, seed=42)
    result = run_workload("netcraq", 4, spec)
    assert result.completed + result.drops >= 100_000 or result.completed == 100_000
    verdict = check_per_key(result.history)
    assert verdict.ok, verdict.report()

    # oracle equivalence over 10,000 randomized small histories
    agreements = 0
    for seed in range(10_000):
        history = random_history(random.Random(seed))
        assert check_per_key(history).ok == brute_force_oracle(history), seed
        agreements += 1

    # a seeded corrupted history (version regression) is rejected
    small = run_workload("netcraq", 4, WorkloadSpec(
        total_ops=300, write_fraction=0.3, target="round_robin",
        num_clients=2, seed=7))
    assert check_per_key(small.history).ok
    rng = random.Random(7)
    reads = [e for e in small.history if e.kind == "read"
             and e.outcome == REPLIED and e.version > 0]
    corrupted = rng.choice(reads)
    corrupted.version = 0  # regress below the acknowledged floor
    bad = check_per_key(small.history)
    assert not bad.ok
    assert any(v.kind in ("stale-version", "session-regression")
               for v in bad.violations)

    elapsed = time.time() - t0
    assert elapsed < 60.0
    _ok(6, f"100,000 mixed ops: zero violations; oracle agreement on "
           f"{agreements} histories; corrupted history rejected ({elapsed:.1f}s)")


def test_criterion_07_write_loss_serves_previous_version():
    cluster0 = SimCluster("netcraq", 4)
    nodes = cluster0.chain.nodes
    # the first write settles chain-wide; the second dies on the r2 -> r3 hop
    link = LinkModel(loss=(DropRule(src=nodes[1], dst=nodes[2], op="WRITE", nth=2),))
    cluster = SimCluster("netcraq", 4, link=link)

    writer = cluster.add_client([PlannedOp("write", 5, 0)])
    cluster.start()
    cluster.run()
    assert writer.entries[0].outcome == ACKED  # version 1 settled chain-wide

    lost = cluster.add_client([PlannedOp("write", 5, 0)], timeout_us=500.0)
    lost.start()
    cluster.run()
    cluster.reconcile_outcomes()
    assert lost.entries[0].outcome == DROPPED  # version 2 died before the tail

    versions = []
    for entry in range(4):
        reader = cluster.add_client([PlannedOp("read", 5, entry)])
        reader.start()
        cluster.run()
        versions.append(reader.entries[0].version)
    assert versions == [1, 1, 1, 1], versions
    assert check_per_key(cluster.history).ok
    _ok(7, "write lost before the tail: reads at every node return the "
           "previous version")


def test_criterion_08_overflow_semantics():
    # V=4: three pending versions fit, a fourth unacknowledged write is dropped
    store = ObjectStore(StoreConfig(num_keys=1, versions_per_key=4))
    assert store.append_pending(0, 1)
    assert store.append_pending(0, 2)
    assert store.append_pending(0, 3)
    assert not store.append_pending(0, 4)

    # and through the chain: the overflowing write never reaches the tail
    cluster = SimCluster("netcraq", 2,
                         store_config=StoreConfig(num_keys=4, versions_per_key=4),
                         link=LinkModel(loss=(
                             DropRule(dst=0x0A000002, op="WRITE", probability=1.0),)))
    writers = cluster.add_client([PlannedOp("write", 0, 0)] * 4, timeout_us=200.0)
    cluster.start()
    cluster.run()
    head = cluster.endpoints[cluster.chain.nodes[0]]
    assert head.drop_counts["version-overflow"] == 1
    assert [e.outcome for e in writers.entries].count(TIMED_OUT) == 4

    # baseline: the 16-bit sequence field exhausts exactly at write 65,536
    ctx = NodeContext(my_id=1, my_role=NodeRole.HEAD,
                      store=ObjectStore(StoreConfig(num_keys=1, versions_per_key=2)),
                      tail_addr=2, successor_addr=2)
    frame = BaselineFrame(KvOp.WRITE, 0, 0, 0, 2, (1, 2), 0)
    for i in range(SEQ_MAX):
        [action] = handle_baseline(ctx, frame, CLIENT0)
        assert action.frame.seq == i + 1
    with pytest.raises(SequenceExhausted):
        handle_baseline(ctx, frame, CLIENT0)
    _ok(8, "V=4 drops the 4th pending write; baseline write 65,536 raises "
           "sequence exhaustion")


def test_criterion_09_failure_recovery():
    t0 = time.time()
    store_config = DEFAULT_STORE
    cluster = SimCluster("netcraq", 4, seed=17)
    ctl = Controller(cluster.net, cluster.endpoints, cluster.chain,
                     store_config, addr=0x0A00FFFE)

    spec = WorkloadSpec(total_ops=1200, write_fraction=0.25, key_dist="zipfian",
                        target="round_robin", num_clients=4, seed=17)
    for c in range(4):
        plan = plan_ops(spec, 4, store_config.num_keys, c, 300)
        cluster.add_client(plan, timeout_us=800.0, max_read_attempts=5)

    victim = cluster.chain.nodes[2]
    replacement_addr = 0x0A000099
    replacement = NodeEndpoint(cluster.net, NodeContext(
        my_id=replacement_addr, my_role=NodeRole.REPLICA,
        store=ObjectStore(store_config)), "netcraq")
    cluster.endpoints[replacement_addr] = replacement

    window_writer = cluster.add_client(
        [PlannedOp("write", k, 0) for k in range(40, 50)], timeout_us=800.0)

    state = {}

    def on_complete(snapshot):
        state["copy_faithful"] = replacement.ctx.store.snapshot() == snapshot
        state["recovered_at"] = cluster.net.now
        cluster.chain = ctl.config  # push the new address list to clients

    def start_phase2(record):
        state["disabled_at"] = cluster.net.now
        ctl.phase2(record, replacement_addr, copy_duration=3_000_000,
                   on_complete=on_complete)
        cluster.net.call_at(cluster.net.now + 1_000_000, window_writer.start)

    def on_failure(record):
        state["phase1_at"] = cluster.net.now
        state["record"] = record
        cluster.net.call_at(cluster.net.now + 2_000_000,
                            lambda: start_phase2(record))

    ctl.start_heartbeats(period=500_000, timeout=1_500_000, on_failure=on_failure)
    cluster.net.call_at(5_000_000, lambda: cluster.net.kill(victim))

    workload_clients = cluster.clients[:4]

    def maybe_stop():
        done = all(e.outcome != "pending"
                   for cl in cluster.clients for e in cl.entries)
        started = all(cl.entries for cl in workload_clients)
        if done and started and "recovered_at" in state:
            ctl.stop_heartbeats()
        else:
            cluster.net.call_at(cluster.net.now + 2_000_000, maybe_stop)

    for client in workload_clients:
        client.start()
    cluster.net.call_at(2_000_000, maybe_stop)
    cluster.run()
    cluster.reconcile_outcomes()

    # phase 1: the victim is excised and reads keep completing afterwards
    assert state["record"].node_id == victim
    assert victim not in ctl.config.nodes
    reads_after = [e for e in cluster.history
                   if e.kind == "read" and e.invoke > state["phase1_at"]
                   and e.outcome == REPLIED]
    assert reads_after, "no read completed after the failover"

    # phase 2: byte-identical donor copy, recovered at the original slot
    assert state["copy_faithful"]
    assert state["record"].phase == RECOVERED
    assert ctl.config.nodes.index(replacement_addr) == state["record"].position

    # writes were provably rejected while the copy was in progress
    head = cluster.endpoints[ctl.config.head]
    assert head.drop_counts["writes-disabled"] > 0
    margin = 100_000  # one link traversal, generously
    t1, t2 = ctl.writes_disabled_windows[0]
    in_window = [e for e in cluster.history if e.kind == "write"
                 and t1 + margin <= e.invoke <= t2 - margin]
    assert in_window, "no write landed in the copy window"
    assert all(e.outcome != ACKED for e in in_window)

    verdict = check_per_key(cluster.history)
    assert verdict.ok, verdict.report()
    elapsed = time.time() - t0
    assert elapsed < 30.0
    _ok(9, f"replica killed at 5ms, redirected at {state['phase1_at']/1e6:.1f}ms, "
           f"recovered at {state['recovered_at']/1e6:.1f}ms; donor copy "
           f"byte-identical; {len(in_window)} in-window writes all rejected; "
           f"history consistent ({elapsed:.1f}s)")


def test_criterion_10_determinism(tmp_path):
    def distance_artifacts():
        runs = []
        rows = run_distance_sweep(4, WorkloadSpec(total_ops=100, seed=23),
                                  runs_out=runs)
        return rows, runs

    rows1, runs1 = distance_artifacts()
    rows2, runs2 = distance_artifacts()
    assert rows_to_csv_bytes(rows1) == rows_to_csv_bytes(rows2)
    for (label, r1), (_, r2) in zip(runs1, runs2):
        p1, p2 = tmp_path / f"{label}_a.txt", tmp_path / f"{label}_b.txt"
        write_trace(r1.trace, p1)
        write_trace(r2.trace, p2)
        assert p1.read_bytes() == p2.read_bytes(), label

    mixed1 = rows_to_csv_bytes(run_mixed_workload(4, [0.0, 0.5], total_ops=1000))
    mixed2 = rows_to_csv_bytes(run_mixed_workload(4, [0.0, 0.5], total_ops=1000))
    assert mixed1 == mixed2
    _ok(10, "same-seed reruns produce byte-identical traces and CSVs")
