"""Post-hoc consistency checking of recorded operation histories.

The harness embeds a per-key-monotonic version counter in the upper 64 bits
of every written value, so a history is a sequence of timed invocations and
completions tagged with versions. check_per_key enforces, per key:

  (a) every read returns a previously written version (or 0, the initial
      register value),
  (b) a read invoked at or after a write's client-visible ACK completion
      never returns an older version,
  (c) versions observed by one client for one key never go backwards,
  (d) a write that was dropped before reaching the tail is never observed.

Reads concurrent with the ACK fan-out window may return either version:
(b) binds only from the ACK completion instant.

brute_force_oracle re-derives the verdict independently for small
histories: it exhaustively searches effect subsets for the unacknowledged
writes over the per-key commit order (version-tag order, which the harness
assigns in invoke order) and checks that some choice explains every read.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations

READ = "read"
WRITE = "write"

REPLIED = "replied"
ACKED = "acked"
DROPPED = "dropped"
TIMED_OUT = "timed_out"
PENDING = "pending"


class HistoryError(ValueError):
    pass


class OracleLimitExceeded(RuntimeError):
    pass


@dataclass
class HistoryEntry:
    client: int
    kind: str  # read | write
    key: int
    version: int  # written tag, or tag returned to a completed read
    invoke: int
    complete: int | None = None
    outcome: str = PENDING


@dataclass(frozen=True)
class Violation:
    kind: str
    key: int
    index: int  # position of the offending entry in the history
    detail: str


@dataclass
class Verdict:
    ok: bool
    violations: list[Violation]

    def report(self) -> str:
        lines = [f"verdict: {'PASS' if self.ok else 'FAIL'} "
                 f"({len(self.violations)} violations)"]
        for v in self.violations:
            lines.append(f"  [{v.kind}] key={v.key} entry={v.index}: {v.detail}")
        return "\n".join(lines)


def _validate(history: list[HistoryEntry]):
    for i, e in enumerate(history):
        if e.kind not in (READ, WRITE):
            raise HistoryError(f"entry {i}: unknown kind {e.kind!r}")
        if e.complete is not None and e.complete < e.invoke:
            raise HistoryError(f"entry {i}: completes before it is invoked")
        if e.outcome in (REPLIED, ACKED) and e.complete is None:
            raise HistoryError(f"entry {i}: {e.outcome} without a completion time")


def check_per_key(history: list[HistoryEntry]) -> Verdict:
    _validate(history)
    violations: list[Violation] = []
    by_key: dict[int, list[tuple[int, HistoryEntry]]] = {}
    for i, e in enumerate(history):
        by_key.setdefault(e.key, []).append((i, e))

    for key, entries in by_key.items():
        writes = {e.version: e for _, e in entries if e.kind == WRITE}
        acked = [e for e in writes.values() if e.outcome == ACKED]
        reads = [(i, e) for i, e in entries if e.kind == READ and e.outcome == REPLIED]

        for i, r in reads:
            v = r.version
            if v != 0:
                w = writes.get(v)
                if w is None:
                    violations.append(Violation(
                        "phantom-version", key, i,
                        f"read returned version {v}, never written to this key"))
                    continue
                if w.outcome == DROPPED:
                    violations.append(Violation(
                        "dropped-version", key, i,
                        f"read returned version {v} of a dropped write"))
                if w.invoke >= r.complete:
                    violations.append(Violation(
                        "future-version", key, i,
                        f"read completed at {r.complete} but version {v} "
                        f"was invoked at {w.invoke}"))
            floor = max((w.version for w in acked if w.complete <= r.invoke), default=0)
            if v < floor:
                violations.append(Violation(
                    "stale-version", key, i,
                    f"read invoked at {r.invoke} returned {v}, but version "
                    f"{floor} was acknowledged by then"))

        by_client: dict[int, list[tuple[int, HistoryEntry]]] = {}
        for i, r in reads:
            by_client.setdefault(r.client, []).append((i, r))
        for client, client_reads in by_client.items():
            client_reads.sort(key=lambda ir: ir[1].invoke)
            prev = 0
            for i, r in client_reads:
                if r.version < prev:
                    violations.append(Violation(
                        "session-regression", key, i,
                        f"client {client} observed {prev} then {r.version}"))
                prev = max(prev, r.version)

    return Verdict(not violations, violations)


def brute_force_oracle(history: list[HistoryEntry], max_ops_per_key: int = 10) -> bool:
    """Independent verdict by exhaustive search; refuses large histories."""
    _validate(history)
    by_key: dict[int, list[HistoryEntry]] = {}
    for e in history:
        by_key.setdefault(e.key, []).append(e)

    for key, entries in by_key.items():
        if len(entries) > max_ops_per_key:
            raise OracleLimitExceeded(
                f"key {key} has {len(entries)} ops (limit {max_ops_per_key})")
        if not _explainable(entries):
            return False
    return True


def _explainable(entries: list[HistoryEntry]) -> bool:
    writes = sorted((e for e in entries if e.kind == WRITE), key=lambda e: e.version)
    for prev, cur in zip(writes, writes[1:]):
        if cur.invoke < prev.invoke:
            raise HistoryError(
                "version tags must follow per-key invoke order (harness contract)")
    reads = [e for e in entries if e.kind == READ and e.outcome == REPLIED]
    required = [w for w in writes if w.outcome == ACKED]
    optional = [w for w in writes if w.outcome not in (ACKED, DROPPED)]

    for r in range(len(optional) + 1):
        for chosen in combinations(optional, r):
            effective = sorted(required + list(chosen), key=lambda w: w.version)
            # Tag order is the only candidate commit order (tags are assigned
            # in invoke order); reject it if it contradicts ack real time.
            ok = True
            for a, b in zip(effective, effective[1:]):
                if b.complete is not None and a.invoke > b.complete:
                    ok = False
                    break
            if ok and _order_explains(effective, required, reads):
                return True
    return False


def _order_explains(effective, acked, reads) -> bool:
    pos = {w.version: i for i, w in enumerate(effective)}
    last_by_client: dict[int, int] = {}
    for r in sorted(reads, key=lambda e: e.invoke):
        if r.version == 0:
            p = -1
        elif r.version in pos:
            p = pos[r.version]
            if effective[p].invoke >= r.complete:
                return False  # a read cannot see a write from its future
        else:
            return False
        for a in acked:
            if a.complete <= r.invoke and pos[a.version] > p:
                return False
        if p < last_by_client.get(r.client, -2):
            return False
        last_by_client[r.client] = max(p, last_by_client.get(r.client, -2))
    return True


# -- history file export/import (consumed by the CLI `check` command) --------

def save_history(history: list[HistoryEntry], path):
    with open(path, "w") as f:
        for e in history:
            f.write(json.dumps(asdict(e)) + "\n")


def load_history(path) -> list[HistoryEntry]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(HistoryEntry(**json.loads(line)))
    return out
