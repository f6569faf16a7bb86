"""Client behaviour against live servers: hello metadata, the episode
loop, error surfacing, and byte-level protocol conformance."""

import socket
import socketserver
import statistics
import threading
import time

import numpy as np
import pytest

from gridarb_agent import (
    ActionDimensionMismatch,
    ConnectionFailed,
    EpisodeFinished,
    IndexOutOfRange,
    ProtocolViolation,
    UnknownCommand,
    VersionMismatch,
    client_reset,
    client_step,
    connect,
)

from conftest import GOLDEN, TOY_CONFIG, TOY_DP_CONFIG, serve_argv


def test_connect_caches_hello_metadata_for_the_default_feeder(default_server):
    with connect(default_server) as client:
        assert client.protocol_version == "1"
        assert client.action_dim == 4
        assert client.state_dim == 40
        assert client.horizon == 96
        assert client.dt_hours == 0.25
        assert client.action_low.shape == (4,)
        assert np.all(client.action_low < client.action_high)


def test_connect_to_a_dead_port_raises_connection_failed():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(ConnectionFailed):
        connect(("127.0.0.1", port), timeout=2.0)


def test_alien_protocol_version_raises_version_mismatch():
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            self.rfile.readline()
            self.wfile.write(
                b'{"ok": true, "payload": {"version": "99", "state_dim": 1,'
                b' "action_dim": 1, "horizon": 1, "action_bounds":'
                b' [[0], [0]], "dt_hours": 1}}\n')

    server = socketserver.TCPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with pytest.raises(VersionMismatch):
            connect(("127.0.0.1", server.server_address[1]))
    finally:
        server.shutdown()
        server.server_close()


def test_endpoint_string_form_connects(toy_server):
    host, port = toy_server
    with connect(f"{host}:{port}") as client:
        assert client.action_dim == 1


def test_unsupported_endpoints_are_rejected():
    with pytest.raises(ValueError):
        connect(42)
    with pytest.raises(ValueError):
        connect("localhost")


def test_zero_action_step_returns_zero_reward(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        state, reward, done, info = client_step(client, [0.0])
        assert reward == 0.0
        assert done is False
        assert info["realized_powers"] == [0]
        assert info["violation_sum"] == 0
        assert state.shape == (client.state_dim,)


def test_episode_is_done_exactly_on_the_96th_step(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        for t in range(96):
            _, _, done, _ = client_step(client, [5.0])
            assert done is (t == 95)
        with pytest.raises(EpisodeFinished):
            client_step(client, [5.0])


def test_wrong_action_length_raises_action_dimension_mismatch(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        with pytest.raises(ActionDimensionMismatch) as excinfo:
            client_step(client, [1.0, 2.0])
        assert excinfo.value.code == "ActionDimensionMismatch"
        # the session survives the error
        _, _, _, info = client_step(client, [0.0])
        assert info["converged"] is True


def test_scalar_action_is_wrapped_for_a_single_unit(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        _, _, _, info = client_step(client, 25.0)
        assert info["realized_powers"] == [25]


def test_step_before_reset_surfaces_protocol_violation(toy_server):
    with connect(toy_server) as client:
        with pytest.raises(ProtocolViolation) as excinfo:
            client_step(client, [0.0])
        assert excinfo.value.code == "ProtocolViolation"


def test_reset_selector_forms(toy_server):
    with connect(toy_server) as a, connect(toy_server) as b:
        state = client_reset(a, None)
        assert a.day == 0
        assert state.shape == (a.state_dim,)
        first = client_reset(a, {"seed": 7})
        second = client_reset(b, {"seed": 7})
        assert np.array_equal(first, second)
        with pytest.raises(ValueError):
            client_reset(a, 3.5)
        with pytest.raises(ValueError):
            client_reset(a, True)


def test_out_of_range_day_raises_index_out_of_range(toy_server):
    with connect(toy_server) as client:
        with pytest.raises(IndexOutOfRange):
            client_reset(client, 5)


def test_calls_after_close_fail_locally(toy_server):
    client = connect(toy_server)
    client.close()
    with pytest.raises(ConnectionFailed):
        client_reset(client, 0)
    client.close()  # idempotent


def test_golden_transcript_is_reproduced_byte_for_byte():
    """Driving the golden conversation through the public client API must
    emit and receive exactly the fixture's bytes."""
    client = connect(serve_argv(TOY_DP_CONFIG, seed=0), record=True)
    client_reset(client, 0)
    client_step(client, [0.0])
    client_step(client, [50.0])
    client_step(client, [-50.0])
    client.raw_request("this line is not JSON")
    with pytest.raises(UnknownCommand):
        client.call("warp")
    with pytest.raises(ActionDimensionMismatch):
        client_step(client, [1.0, 2.0])
    with pytest.raises(IndexOutOfRange):
        client_reset(client, 5)
    client.close()
    mine = "\n".join(client.transcript) + "\n"
    assert mine == GOLDEN.read_text(encoding="utf-8")


def test_tcp_and_child_transports_see_identical_bytes(toy_server):
    """The same requests against the same seed produce the same bytes no
    matter which transport carries them."""
    requests = [
        '{"cmd": "hello"}',
        '{"cmd": "reset", "payload": {"seed": 3}}',
        '{"cmd": "step", "payload": {"action": [12.5]}}',
        '{"cmd": "step", "payload": {"action": [-30]}}',
        '{"cmd": "close"}',
    ]
    over_tcp = connect(toy_server, record=True)
    over_pipe = connect(serve_argv(TOY_CONFIG, seed=0), record=True)
    try:
        for line in requests:
            over_tcp.raw_request(line)
            over_pipe.raw_request(line)
    finally:
        for client in (over_tcp, over_pipe):
            client.closed = True
            client._transport.close()
    assert over_tcp.transcript == over_pipe.transcript


def test_median_step_round_trip_stays_under_5ms(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        timings = []
        done = False
        for _ in range(300):
            if done:
                client_reset(client, 0)
                done = False
            start = time.perf_counter()
            _, _, done, _ = client_step(client, [10.0])
            timings.append(time.perf_counter() - start)
    assert statistics.median(timings) < 0.005


def test_info_fields_round_trip_with_full_precision(toy_server):
    with connect(toy_server) as client:
        client_reset(client, 0)
        state, reward, _, info = client_step(client, [37.25])
        assert isinstance(reward, float)
        assert reward == -37.25 * 0.25 * 0.05
        assert len(info["v_mag"]) == 1
        assert 0.9 < info["v_mag"][0] < 1.1
        assert state.dtype == np.float64
