"""Loopback integration tests for the best-effort real UDP transport."""

import json
import socket

import pytest

from netcraq.controller import build_chain
from netcraq.net import pack_datagram, udp_serve, unpack_datagram
from netcraq.node import NodeRole
from netcraq.store import StoreConfig
from netcraq.wire import KvOp, NetcraqFrame, decode_netcraq, encode_netcraq

STORE = StoreConfig(num_keys=8, versions_per_key=4)
N1, N2 = 0x0A000001, 0x0A000002


@pytest.fixture
def chain():
    _, contexts = build_chain([N1, N2], STORE)
    addr_map = {N1: ("127.0.0.1", 0), N2: ("127.0.0.1", 0)}
    # bind ephemeral ports one node at a time, fixing the map as we go
    servers = []
    for addr in (N1, N2):
        server = udp_serve(contexts[addr], "netcraq", addr_map)
        addr_map[addr] = server.bound_address
        servers.append(server)
    for server in servers:  # both maps must see the final ports
        server.addr_map = dict(addr_map)
        server.sock_map = {v: k for k, v in addr_map.items()}
    yield servers, addr_map
    for server in servers:
        server.stop()


def _client_sock():
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(("127.0.0.1", 0))
    sock.settimeout(3.0)
    return sock


def test_two_node_chain_answers_write_then_read(chain):
    servers, addr_map = chain
    sock = _client_sock()
    me = sock.getsockname()
    sock.sendto(pack_datagram(me, encode_netcraq(NetcraqFrame(KvOp.WRITE, 3, 42))),
                addr_map[N1])
    data, _ = sock.recvfrom(4096)
    _, frame_bytes = unpack_datagram(data)
    assert decode_netcraq(frame_bytes).op == KvOp.ACK

    sock.sendto(pack_datagram(me, encode_netcraq(NetcraqFrame(KvOp.READ, 3))),
                addr_map[N1])
    data, _ = sock.recvfrom(4096)
    _, frame_bytes = unpack_datagram(data)
    reply = decode_netcraq(frame_bytes)
    assert reply == NetcraqFrame(KvOp.READ_REPLY, 3, 42)
    sock.close()


def test_malformed_datagram_counted_not_fatal(chain):
    servers, addr_map = chain
    sock = _client_sock()
    me = sock.getsockname()
    sock.sendto(pack_datagram(me, b"\xffgarbage"), addr_map[N1])
    # server still answers afterwards
    sock.sendto(pack_datagram(me, encode_netcraq(NetcraqFrame(KvOp.READ, 1))),
                addr_map[N1])
    data, _ = sock.recvfrom(4096)
    _, frame_bytes = unpack_datagram(data)
    assert decode_netcraq(frame_bytes).op == KvOp.READ_REPLY
    assert servers[0].malformed == 1
    sock.close()


def test_control_install_changes_behavior_without_restart(chain):
    servers, addr_map = chain
    head, tail = servers
    sock = _client_sock()
    # flip the roles via the control channel: N2 becomes head, N1 tail
    for server, role, successor in ((head, "tail", None), (tail, "head", N1)):
        msg = {"cmd": "install", "role": role, "tail": N1, "successor": successor,
               "members": [N1 if server.ctx.my_id == N2 else N2], "epoch": 1}
        sock.sendto(json.dumps(msg).encode(), addr_map[server.ctx.my_id])
        data, _ = sock.recvfrom(4096)
        assert json.loads(data)["cmd"] == "installed"
    assert head.ctx.my_role == NodeRole.TAIL
    assert tail.ctx.my_role == NodeRole.HEAD

    # a write entering at the new head (N2) now acks from the new tail (N1)
    me = sock.getsockname()
    sock.sendto(pack_datagram(me, encode_netcraq(NetcraqFrame(KvOp.WRITE, 2, 7))),
                addr_map[N2])
    data, _ = sock.recvfrom(4096)
    _, frame_bytes = unpack_datagram(data)
    assert decode_netcraq(frame_bytes).op == KvOp.ACK
    assert head.ctx.store.read_latest_clean(2) == 7
    sock.close()


def test_ping_pong_control(chain):
    servers, addr_map = chain
    sock = _client_sock()
    sock.sendto(json.dumps({"cmd": "ping"}).encode(), addr_map[N1])
    data, _ = sock.recvfrom(4096)
    assert json.loads(data) == {"cmd": "pong", "node": N1}
    sock.close()
