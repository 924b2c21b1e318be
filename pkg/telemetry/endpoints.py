"""
Split-process endpoints: the plant and the flight stack on either side of
a byte stream

A session is lock-step. The plant opens it with a Heartbeat, then per
step sends Measurement and Frame and waits for the RotorCommand. The
flight stack answers a Heartbeat instead of a command when its mission is
complete; the plant sends a final Heartbeat when the scenario duration
runs out.
"""

import socket
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from config import get_logger
from config.scenario import ScenarioConfig
from control.mission import PHASE_CODES
from detectors.calibration import DetectorCalibration
from detectors.recurrent import RecurrentDetectorModel
from harness.simulation import FlightDecision, FlightStack, PlantSide
from telemetry.protocol import MessageReader, MessageType, TelemetryMessage, check_step_order, send_message
from utils.errors import ConfigError, ProtocolError
from vehicle.dynamics import STATE_DIM

logger = get_logger("drone_fdi.telemetry")


def parse_address(text: str) -> Tuple[str, int]:
    """'host:port' -> (host, port)"""
    host, sep, port = str(text).rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address must look like host:port, got {text!r}")
    try:
        number = int(port)
    except ValueError as e:
        raise ConfigError(f"invalid port in address {text!r}") from e
    if not 0 < number < 65536:
        raise ConfigError(f"port out of range in address {text!r}")
    return host, number


def listen_once(address: Tuple[str, int]) -> socket.socket:
    """Accept a single connection on address"""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind(address)
        server.listen(1)
        logger.info(f"Listening on {address[0]}:{address[1]}")
        conn, peer = server.accept()
    finally:
        server.close()
    logger.info(f"Accepted connection from {peer[0]}:{peer[1]}")
    return conn


def connect(address: Tuple[str, int]) -> socket.socket:
    sock = socket.create_connection(address)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


class PlantEndpoint:
    """Simulator side: truth, sensors and camera behind a socket"""

    def __init__(self, config: ScenarioConfig, seed: Optional[int], sock: socket.socket):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.plant = PlantSide(config, self.seed)
        self.sock = sock
        self.reader = MessageReader(sock)
        self.states: List[np.ndarray] = []
        self.markers: List[np.ndarray] = []
        self.ended_by = "duration"
        self.logger = logger.getChild("plant")

    def run(self) -> "PlantEndpoint":
        send_message(self.sock, TelemetryMessage.heartbeat(0))
        last_step = None
        for t in range(self.config.n_steps):
            packet = self.plant.sense()
            self.states.append(packet.state)
            self.markers.append(packet.marker)
            send_message(self.sock, TelemetryMessage.measurement(t, packet.measurement, packet.beacon))
            send_message(self.sock, TelemetryMessage.frame(t, packet.frame))

            reply = self.reader.receive()
            if reply is None:
                self.ended_by = "eof"
                break
            last_step = check_step_order(last_step, reply)
            if reply.type == MessageType.HEARTBEAT:
                self.ended_by = "heartbeat"
                break
            if reply.type != MessageType.COMMAND or reply.step != t:
                raise ProtocolError(f"expected the rotor command for step {t}, got {reply.type.name} {reply.step}")
            self.plant.advance(reply.as_command())
        else:
            send_message(self.sock, TelemetryMessage.heartbeat(self.config.n_steps))
        self.logger.info(f"Plant session ended after {len(self.states)} steps ({self.ended_by})")
        return self

    def to_frame(self) -> pd.DataFrame:
        states = np.array(self.states, dtype=float).reshape(-1, STATE_DIM)
        markers = np.array(self.markers, dtype=float).reshape(-1, 3)
        data = {"step": np.arange(len(states))}
        data.update({f"true_x{i}": states[:, i] for i in range(STATE_DIM)})
        data.update({f"marker_{axis}": markers[:, i] for i, axis in enumerate("xyz")})
        return pd.DataFrame(data)


class FlightEndpoint:
    """Flight-stack side: consumes sensor messages, answers with rotor commands"""

    def __init__(self, config: ScenarioConfig, sock: socket.socket,
                 calibration: Optional[DetectorCalibration] = None,
                 recurrent_model: Optional[RecurrentDetectorModel] = None):
        self.config = config
        self.stack = FlightStack(config, calibration, recurrent_model)
        self.sock = sock
        self.reader = MessageReader(sock)
        self.decisions: List[FlightDecision] = []
        self.ended_by = "eof"
        self.logger = logger.getChild("flight")

    def _expect_open(self) -> bool:
        opening = self.reader.receive()
        if opening is None:
            return False
        if opening.type != MessageType.HEARTBEAT:
            raise ProtocolError(f"session must open with a heartbeat, got {opening.type.name}")
        return True

    def run(self) -> "FlightEndpoint":
        if not self._expect_open():
            return self
        last_step = None
        while True:
            msg = self.reader.receive()
            if msg is None:
                self.ended_by = "eof"
                break
            last_step = check_step_order(last_step, msg)
            if msg.type == MessageType.HEARTBEAT:
                self.ended_by = "heartbeat"
                break
            if msg.type != MessageType.MEASUREMENT:
                raise ProtocolError(f"expected a measurement, got {msg.type.name} at step {msg.step}")
            step = msg.step
            y, beacon = msg.as_measurement()

            vision = self.reader.receive()
            if vision is None:
                self.ended_by = "eof"
                break
            last_step = check_step_order(last_step, vision)
            if vision.type == MessageType.FRAME:
                decision = self.stack.process(step, y, beacon, frame=vision.as_frame())
            elif vision.type == MessageType.OBSERVATION:
                decision = self.stack.process(step, y, beacon, observation=vision.as_observation())
            else:
                raise ProtocolError(f"expected a frame or observation, got {vision.type.name} at step {step}")
            self.decisions.append(decision)

            if decision.complete:
                send_message(self.sock, TelemetryMessage.heartbeat(step))
                self.ended_by = "mission_complete"
                break
            send_message(self.sock, TelemetryMessage.command(step, decision.command))
        self.logger.info(f"Flight session ended after {len(self.decisions)} steps ({self.ended_by})")
        return self

    def to_frame(self) -> pd.DataFrame:
        estimates = np.array([d.estimate for d in self.decisions], dtype=float).reshape(-1, STATE_DIM)
        commands = np.array([d.command for d in self.decisions], dtype=float).reshape(-1, 4)
        data = {
            "step": np.array([d.step for d in self.decisions], dtype=np.int64),
            "phase": np.array([PHASE_CODES[d.phase] for d in self.decisions], dtype=np.int64),
        }
        data.update({f"est_x{i}": estimates[:, i] for i in range(STATE_DIM)})
        data.update({f"u{i}": commands[:, i] for i in range(4)})
        data["visible"] = np.array([d.observation.visible for d in self.decisions], dtype=bool)
        data["residual_dim"] = np.array([d.residual.dim for d in self.decisions], dtype=np.int64)
        for name in self.stack.detectors:
            verdicts = [d.verdicts.get(name) for d in self.decisions]
            data[f"{name}_score"] = np.array([np.nan if v is None else v.score for v in verdicts], dtype=float)
            data[f"{name}_alarm"] = np.array([False if v is None else v.alarm for v in verdicts], dtype=bool)
        return pd.DataFrame(data)
