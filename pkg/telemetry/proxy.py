"""
Man-in-the-middle proxy between the plant and the flight stack

pass:   bytes are relayed untouched in both directions
attack: messages are decoded, handed to the AttackEngine and re-encoded
"""

import select
import socket
from dataclasses import dataclass, field
from typing import Dict, Optional, Set, Tuple

from attack.engine import AttackEngine
from config import get_logger
from telemetry.endpoints import connect, listen_once
from telemetry.protocol import MessageReader, MessageType, TelemetryMessage, check_step_order, encode
from utils.errors import ProtocolError

logger = get_logger("drone_fdi.telemetry.proxy")

PROXY_MODES = ("pass", "attack")
UPSTREAM = "plant->flight"
DOWNSTREAM = "flight->plant"


@dataclass
class SessionSummary:
    mode: str
    messages: Dict[str, int] = field(default_factory=lambda: {UPSTREAM: 0, DOWNSTREAM: 0})
    bytes: Dict[str, int] = field(default_factory=lambda: {UPSTREAM: 0, DOWNSTREAM: 0})
    falsified: int = 0
    ended_by: str = "eof"
    attack_start_step: Optional[int] = None
    attack_stop_step: Optional[int] = None
    stop_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "messages": dict(self.messages),
            "bytes": dict(self.bytes),
            "falsified": self.falsified,
            "ended_by": self.ended_by,
            "attack_start_step": self.attack_start_step,
            "attack_stop_step": self.attack_stop_step,
            "stop_reason": self.stop_reason,
        }


class ProxySession:
    """
    One proxied plant <-> flight session

    Each direction is handled serially: a message is fully processed and
    forwarded before the next one from the same side is looked at.
    """

    def __init__(self, plant_sock: socket.socket, flight_sock: socket.socket, mode: str = "pass",
                 engine: Optional[AttackEngine] = None, terminate_on_attack_stop: bool = True,
                 chunk_size: int = 1 << 16):
        if mode not in PROXY_MODES:
            raise ValueError(f"proxy mode must be one of {PROXY_MODES}, got {mode!r}")
        if mode == "attack" and engine is None:
            raise ValueError("attack mode needs an AttackEngine")
        self.plant = plant_sock
        self.flight = flight_sock
        self.mode = mode
        self.engine = engine
        self.terminate_on_attack_stop = terminate_on_attack_stop
        self.chunk_size = chunk_size
        self.summary = SessionSummary(mode)
        self.readers = {UPSTREAM: MessageReader(plant_sock), DOWNSTREAM: MessageReader(flight_sock)}
        self.last_step: Dict[str, Optional[int]] = {UPSTREAM: None, DOWNSTREAM: None}
        # pass-mode directions whose bytes stopped decoding
        self.uncounted: Set[str] = set()
        self._opened = False
        self.logger = logger.getChild("session")

    def _target(self, direction: str) -> socket.socket:
        return self.flight if direction == UPSTREAM else self.plant

    def _send(self, direction: str, data: bytes) -> None:
        self._target(direction).sendall(data)
        self.summary.bytes[direction] += len(data)

    def run(self) -> SessionSummary:
        """
        Relay until either side closes or the session is ended

        Raises:
            ProtocolError: attack mode received a malformed message; the session is aborted
        """
        self.logger.info(f"Proxy session started in {self.mode} mode")
        try:
            self._loop()
        except ProtocolError as e:
            self.summary.ended_by = "error"
            self.logger.error(f"Aborting session: {e}")
            raise
        finally:
            self._close()
            if self.engine is not None:
                st = self.engine.state
                self.summary.attack_start_step = st.start_step if st.active else None
                self.summary.attack_stop_step = st.stop_step
                self.summary.stop_reason = st.stop_reason
            self.logger.info(f"Proxy session ended ({self.summary.ended_by}): {self.summary.messages}")
        return self.summary

    def _loop(self) -> None:
        sources = {self.plant: UPSTREAM, self.flight: DOWNSTREAM}
        while True:
            readable, _, _ = select.select(list(sources), [], [])
            for sock in readable:
                direction = sources[sock]
                data = sock.recv(self.chunk_size)
                if not data:
                    self.summary.ended_by = "eof"
                    return
                if self.mode == "pass":
                    self._send(direction, data)
                    self._count_passed(direction, data)
                    continue
                for msg in self.readers[direction].feed(data):
                    if not self._handle(direction, msg):
                        return

    def _count_passed(self, direction: str, data: bytes) -> None:
        """Count messages in relayed bytes; malformed streams are still relayed, just no longer counted"""
        if direction in self.uncounted:
            return
        try:
            self.summary.messages[direction] += len(self.readers[direction].feed(data))
        except ProtocolError as e:
            self.uncounted.add(direction)
            self.logger.warning(f"Stopped counting {direction} messages: {e}")

    def _handle(self, direction: str, msg: TelemetryMessage) -> bool:
        """Forward one message in attack mode; False ends the session"""
        self.last_step[direction] = check_step_order(self.last_step[direction], msg)
        self.summary.messages[direction] += 1
        engine = self.engine
        step = msg.step
        out = msg

        if direction == UPSTREAM:
            if msg.type == MessageType.HEARTBEAT:
                self._send(direction, encode(msg))
                if self._opened:
                    self.summary.ended_by = "heartbeat"
                    return False
                self._opened = True
                return True
            if msg.type == MessageType.MEASUREMENT:
                y, beacon = msg.as_measurement()
                y_f = engine.on_measurement(step, y)
                if y_f is not y:
                    out = TelemetryMessage.measurement(step, y_f, beacon)
            elif msg.type == MessageType.FRAME:
                frame = msg.as_frame()
                shown = engine.on_frame(step, frame)
                if shown is not frame:
                    out = TelemetryMessage.frame(step, shown)
            elif msg.type == MessageType.OBSERVATION:
                obs = msg.as_observation()
                shown = engine.on_observation(step, obs)
                if shown is not obs:
                    out = TelemetryMessage.observation(step, shown)
            if out is not msg:
                self.summary.falsified += 1
            self._send(direction, encode(out))
            return True

        if msg.type == MessageType.HEARTBEAT:
            self._send(direction, encode(msg))
            self.summary.ended_by = "heartbeat"
            return False
        if msg.type == MessageType.COMMAND:
            engine.on_command(step, msg.as_command())
            if engine.state.stopped and self.terminate_on_attack_stop:
                closing = encode(TelemetryMessage.heartbeat(step))
                self._send(UPSTREAM, closing)
                self._send(DOWNSTREAM, closing)
                self.summary.ended_by = "attack_stop"
                return False
        self._send(direction, encode(out))
        return True

    def _close(self) -> None:
        for sock in (self.plant, self.flight):
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


def serve_proxy(listen: Tuple[str, int], upstream: Tuple[str, int], mode: str,
                engine: Optional[AttackEngine] = None, terminate_on_attack_stop: bool = True) -> SessionSummary:
    """Wait for the flight stack on listen, connect to the plant at upstream and run one session"""
    flight_sock = listen_once(listen)
    try:
        plant_sock = connect(upstream)
    except OSError:
        flight_sock.close()
        raise
    session = ProxySession(plant_sock, flight_sock, mode, engine, terminate_on_attack_stop)
    return session.run()
