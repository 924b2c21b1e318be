import socket
import threading

import numpy as np
import pytest

from config.scenario import scenario_from_dict
from harness.simulation import build_attack_engine, run_scenario
from perception.camera import Frame, MarkerObservation
from telemetry import (
    HEADER,
    FlightEndpoint,
    MessageReader,
    MessageType,
    PlantEndpoint,
    ProxySession,
    TelemetryMessage,
    check_step_order,
    decode,
    decode_stream,
    encode,
    parse_address,
)
from telemetry.protocol import FRAME_SHAPE, MAX_PAYLOAD
from telemetry.proxy import DOWNSTREAM, UPSTREAM
from utils.errors import (
    ConfigError,
    LengthMismatchError,
    ProtocolError,
    TruncatedMessageError,
    UnknownMessageTypeError,
)
from vehicle.dynamics import STATE_DIM


class TestProtocol:
    def test_heartbeat_is_header_only(self):
        data = encode(TelemetryMessage.heartbeat(7))
        assert len(data) == 13
        assert HEADER.unpack(data) == (MessageType.HEARTBEAT, 7, 0)

    def test_measurement_carries_optional_beacon(self):
        y = np.linspace(-1.0, 1.0, STATE_DIM)
        msg, used = decode(encode(TelemetryMessage.measurement(3, y, np.array([1.0, 2.0, 0.0]))))
        assert used == 13 + 15 * 8
        values, beacon = msg.as_measurement()
        np.testing.assert_array_equal(values, y)
        np.testing.assert_array_equal(beacon, [1.0, 2.0, 0.0])

        plain, _ = decode(encode(TelemetryMessage.measurement(3, y)))
        assert plain.as_measurement()[1] is None

    def test_frame_and_observation_payloads(self, rng):
        pixels = rng.integers(0, 256, size=(4, 6), dtype=np.uint8)
        msg, _ = decode(encode(TelemetryMessage.frame(2, Frame(pixels, 2))))
        frame = msg.as_frame()
        assert (frame.width, frame.height, frame.step) == (6, 4, 2)
        np.testing.assert_array_equal(frame.pixels, pixels)

        obs = MarkerObservation(np.array([10.5, -3.0]), 42.0, True, 9)
        back, _ = decode(encode(TelemetryMessage.observation(9, obs)))
        shown = back.as_observation()
        assert shown.visible and shown.side == 42.0 and shown.step == 9
        np.testing.assert_array_equal(shown.center, obs.center)

    def test_truncated_buffers(self):
        data = encode(TelemetryMessage.command(1, np.ones(4)))
        with pytest.raises(TruncatedMessageError):
            decode(data[:-1])
        with pytest.raises(TruncatedMessageError):
            decode(data[:5])

    def test_unknown_tag(self):
        with pytest.raises(UnknownMessageTypeError):
            decode(HEADER.pack(9, 0, 0))
        with pytest.raises(UnknownMessageTypeError):
            encode(TelemetryMessage(99, 0))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            decode(HEADER.pack(MessageType.MEASUREMENT, 0, 8) + bytes(8))
        with pytest.raises(LengthMismatchError):
            decode(HEADER.pack(MessageType.FRAME, 0, MAX_PAYLOAD + 1))
        bad_frame = TelemetryMessage(MessageType.FRAME, 0, FRAME_SHAPE.pack(2, 2) + bytes(3))
        with pytest.raises(LengthMismatchError):
            encode(bad_frame)
        with pytest.raises(LengthMismatchError):
            encode(TelemetryMessage.command(0, np.ones(3)))

    def test_decode_stream_keeps_residue(self):
        first = encode(TelemetryMessage.heartbeat(0))
        second = encode(TelemetryMessage.command(1, np.zeros(4)))
        messages, residue = decode_stream(first + second + second[:10])
        assert [m.type for m in messages] == [MessageType.HEARTBEAT, MessageType.COMMAND]
        assert residue == second[:10]

    def test_reader_reassembles_split_messages(self):
        data = encode(TelemetryMessage.command(4, np.arange(4.0))) + encode(TelemetryMessage.heartbeat(5))
        reader = MessageReader()
        received = []
        for i in range(len(data)):
            received.extend(reader.feed(data[i:i + 1]))
        assert [m.step for m in received] == [4, 5]
        np.testing.assert_array_equal(received[0].as_command(), np.arange(4.0))
        assert reader.bytes_read == len(data)

    def test_reader_reports_stream_cut_inside_message(self):
        left, right = socket.socketpair()
        with left, right:
            left.sendall(encode(TelemetryMessage.heartbeat(0)) + encode(TelemetryMessage.heartbeat(1))[:6])
            left.shutdown(socket.SHUT_WR)
            reader = MessageReader(right)
            assert reader.receive().step == 0
            with pytest.raises(TruncatedMessageError):
                reader.receive()

    def test_clean_end_of_stream(self):
        left, right = socket.socketpair()
        with left, right:
            left.shutdown(socket.SHUT_WR)
            assert MessageReader(right).receive() is None

    def test_step_order(self):
        assert check_step_order(None, TelemetryMessage.heartbeat(3)) == 3
        assert check_step_order(3, TelemetryMessage.heartbeat(3)) == 3
        with pytest.raises(ProtocolError):
            check_step_order(4, TelemetryMessage.heartbeat(3))


class TestAddresses:
    def test_parse(self):
        assert parse_address("127.0.0.1:9000") == ("127.0.0.1", 9000)
        assert parse_address("localhost:1") == ("localhost", 1)

    @pytest.mark.parametrize("text", ["9000", ":9000", "host:port", "host:0", "host:70000"])
    def test_rejects_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_address(text)


def _split_run(config, seed, mode=None, engine=None):
    """Plant and flight endpoints over socket pairs, optionally through a proxy"""
    plant_sock, far = socket.socketpair()
    session, proxy_thread = None, None
    if mode is None:
        flight_sock = far
    else:
        flight_sock, proxy_flight = socket.socketpair()
        session = ProxySession(far, proxy_flight, mode, engine, terminate_on_attack_stop=False)
        proxy_thread = threading.Thread(target=session.run, daemon=True)
        proxy_thread.start()

    plant = PlantEndpoint(config, seed, plant_sock)
    plant_thread = threading.Thread(target=plant.run, daemon=True)
    plant_thread.start()
    flight = FlightEndpoint(config, flight_sock).run()
    plant_thread.join(timeout=60)
    plant_sock.close()
    flight_sock.close()
    if proxy_thread is not None:
        proxy_thread.join(timeout=60)
        assert not proxy_thread.is_alive()
    assert not plant_thread.is_alive()
    return plant, flight, session


class TestSplitProcess:
    def test_matches_in_process_run(self, short_config):
        plant, flight, _ = _split_run(short_config, seed=3)
        record = run_scenario(short_config, seed=3)
        assert plant.ended_by == "duration"
        assert flight.ended_by == "heartbeat"
        assert len(flight.decisions) == len(record)
        np.testing.assert_allclose(np.array(plant.states), record.true_state, rtol=0, atol=1e-9)
        table = flight.to_frame()
        np.testing.assert_allclose(table[[f"u{i}" for i in range(4)]].to_numpy(), record.command, rtol=0, atol=1e-9)
        assert list(plant.to_frame().columns[:2]) == ["step", "true_x0"]

    def test_flight_rejects_session_without_heartbeat(self):
        left, right = socket.socketpair()
        with left, right:
            left.sendall(encode(TelemetryMessage.command(0, np.zeros(4))))
            endpoint = FlightEndpoint(scenario_from_dict({}), right)
            with pytest.raises(ProtocolError):
                endpoint.run()


class TestProxy:
    def test_rejects_bad_modes(self):
        left, right = socket.socketpair()
        with left, right:
            with pytest.raises(ValueError):
                ProxySession(left, right, mode="sniff")
            with pytest.raises(ValueError):
                ProxySession(left, right, mode="attack")

    def test_pass_mode_is_transparent(self, short_config):
        plant, flight, session = _split_run(short_config, seed=4, mode="pass")
        record = run_scenario(short_config, seed=4)
        np.testing.assert_array_equal(np.array(plant.states), record.true_state)
        assert session.summary.bytes[UPSTREAM] > 0
        assert session.summary.bytes[DOWNSTREAM] == len(record) * (13 + 4 * 8)
        assert session.summary.messages[DOWNSTREAM] == len(record)
        assert session.summary.messages[UPSTREAM] == 2 * short_config.n_steps + 2

    def test_pass_mode_relays_malformed_bytes(self):
        plant, plant_far = socket.socketpair()
        flight, flight_far = socket.socketpair()
        session = ProxySession(plant_far, flight_far, mode="pass")
        thread = threading.Thread(target=session.run, daemon=True)
        thread.start()
        # an all-ones header carries no valid message type
        sent = encode(TelemetryMessage.heartbeat(0)) + b"\xff" * HEADER.size + encode(TelemetryMessage.heartbeat(1))
        with plant, flight:
            plant.sendall(sent)
            plant.shutdown(socket.SHUT_WR)
            received = b""
            while chunk := flight.recv(4096):
                received += chunk
        thread.join(timeout=10)
        assert not thread.is_alive()
        assert received == sent
        assert session.summary.ended_by == "eof"
        assert session.summary.bytes[UPSTREAM] == len(sent)
        assert UPSTREAM in session.uncounted

    def test_zero_deviation_attack_forwards_unchanged(self, short_config):
        config = short_config.with_overrides({"attack": {"enabled": True, "start_step": 0, "s0": [0.0] * STATE_DIM}})
        engine = build_attack_engine(config)
        plant, flight, session = _split_run(config, seed=5, mode="attack", engine=engine)
        nominal = run_scenario(short_config, seed=5)
        np.testing.assert_array_equal(np.array(plant.states), nominal.true_state)
        summary = session.summary
        assert summary.falsified == 0
        assert summary.ended_by == "heartbeat"
        assert summary.messages[DOWNSTREAM] == config.n_steps
        assert summary.messages[UPSTREAM] == 2 * config.n_steps + 2

    def test_attack_through_proxy_matches_in_process_attack(self, short_attack_config):
        engine = build_attack_engine(short_attack_config)
        plant, _, session = _split_run(short_attack_config, seed=6, mode="attack", engine=engine)
        record = run_scenario(short_attack_config, seed=6)
        n = min(len(plant.states), len(record))
        assert n > 10
        np.testing.assert_allclose(np.array(plant.states)[:n], record.true_state[:n], rtol=0, atol=1e-9)
        assert session.summary.falsified > 0
        assert session.summary.attack_start_step == 10
        assert session.summary.to_dict()["mode"] == "attack"
