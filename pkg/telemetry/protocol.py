"""
Binary telemetry protocol between the plant and the flight stack

Every message is a 13-byte little-endian header followed by its payload:

    u8  type tag   1 Measurement, 2 MarkerObservation, 3 Frame,
                   4 RotorCommand, 5 Heartbeat
    u64 step index
    u32 payload length in bytes

Payloads are float64 arrays, except Frame which is u32 width, u32 height
and the raw 8-bit pixels.
"""

import socket
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np

from perception.camera import Frame, MarkerObservation
from utils.errors import LengthMismatchError, ProtocolError, TruncatedMessageError, UnknownMessageTypeError
from vehicle.sensing import BEACON_DIM, MEASUREMENT_DIM

HEADER = struct.Struct("<BQI")
FRAME_SHAPE = struct.Struct("<II")
FLOAT = np.dtype("<f8")
# a 4K frame is 33 MB; anything larger is a corrupt header
MAX_PAYLOAD = 64 * 1024 * 1024


class MessageType(IntEnum):
    MEASUREMENT = 1
    OBSERVATION = 2
    FRAME = 3
    COMMAND = 4
    HEARTBEAT = 5


_FLOAT_COUNTS = {
    MessageType.MEASUREMENT: (MEASUREMENT_DIM, MEASUREMENT_DIM + BEACON_DIM),
    MessageType.OBSERVATION: (4,),
    MessageType.COMMAND: (4,),
    MessageType.HEARTBEAT: (0,),
}


@dataclass(frozen=True)
class TelemetryMessage:
    type: MessageType
    step: int
    payload: bytes = b""

    @classmethod
    def measurement(cls, step: int, y: np.ndarray, beacon: Optional[np.ndarray] = None) -> "TelemetryMessage":
        values = np.asarray(y, dtype=float)
        if beacon is not None:
            values = np.concatenate([values, np.asarray(beacon, dtype=float)])
        return cls(MessageType.MEASUREMENT, step, values.astype(FLOAT).tobytes())

    @classmethod
    def observation(cls, step: int, obs: MarkerObservation) -> "TelemetryMessage":
        values = np.array([obs.center[0], obs.center[1], obs.side, 1.0 if obs.visible else 0.0])
        return cls(MessageType.OBSERVATION, step, values.astype(FLOAT).tobytes())

    @classmethod
    def frame(cls, step: int, frame: Frame) -> "TelemetryMessage":
        pixels = np.ascontiguousarray(frame.pixels, dtype=np.uint8)
        return cls(MessageType.FRAME, step, FRAME_SHAPE.pack(frame.width, frame.height) + pixels.tobytes())

    @classmethod
    def command(cls, step: int, u: np.ndarray) -> "TelemetryMessage":
        return cls(MessageType.COMMAND, step, np.asarray(u, dtype=float).astype(FLOAT).tobytes())

    @classmethod
    def heartbeat(cls, step: int) -> "TelemetryMessage":
        return cls(MessageType.HEARTBEAT, step)

    def floats(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=FLOAT).astype(float)

    def as_measurement(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        values = self.floats()
        beacon = values[MEASUREMENT_DIM:] if values.shape[0] > MEASUREMENT_DIM else None
        return values[:MEASUREMENT_DIM], beacon

    def as_observation(self) -> MarkerObservation:
        cx, cy, side, visible = self.floats()
        return MarkerObservation(np.array([cx, cy]), float(side), bool(visible), self.step)

    def as_frame(self) -> Frame:
        width, height = FRAME_SHAPE.unpack_from(self.payload)
        pixels = np.frombuffer(self.payload, dtype=np.uint8, offset=FRAME_SHAPE.size)
        return Frame(pixels.reshape(height, width).copy(), self.step)

    def as_command(self) -> np.ndarray:
        return self.floats()


def _check_payload(tag: MessageType, payload: bytes) -> None:
    if tag == MessageType.FRAME:
        if len(payload) < FRAME_SHAPE.size:
            raise LengthMismatchError(f"frame payload of {len(payload)} bytes has no size prefix")
        width, height = FRAME_SHAPE.unpack_from(payload)
        if len(payload) != FRAME_SHAPE.size + width * height:
            raise LengthMismatchError(f"frame {width}x{height} does not match payload of {len(payload)} bytes")
        return
    allowed = _FLOAT_COUNTS[tag]
    if len(payload) % FLOAT.itemsize or len(payload) // FLOAT.itemsize not in allowed:
        raise LengthMismatchError(f"{tag.name} payload of {len(payload)} bytes, expected {allowed} float64 values")


def encode(msg: TelemetryMessage) -> bytes:
    """
    Header plus payload

    Raises:
        UnknownMessageTypeError: type outside the closed set
        LengthMismatchError: payload size not valid for the type
    """
    try:
        tag = MessageType(msg.type)
    except ValueError as e:
        raise UnknownMessageTypeError(f"unknown message type {msg.type}") from e
    _check_payload(tag, msg.payload)
    return HEADER.pack(tag, msg.step, len(msg.payload)) + msg.payload


def decode(buffer: bytes, offset: int = 0) -> Tuple[TelemetryMessage, int]:
    """
    Message starting at buffer[offset] and the number of bytes it used

    Raises:
        TruncatedMessageError: the buffer ends inside the message
        UnknownMessageTypeError: unknown type tag
        LengthMismatchError: declared length does not fit the payload contents
    """
    available = len(buffer) - offset
    if available < HEADER.size:
        raise TruncatedMessageError(f"{available} bytes cannot hold a {HEADER.size}-byte header")
    raw_tag, step, length = HEADER.unpack_from(buffer, offset)
    try:
        tag = MessageType(raw_tag)
    except ValueError as e:
        raise UnknownMessageTypeError(f"unknown message type tag {raw_tag}") from e
    if length > MAX_PAYLOAD:
        raise LengthMismatchError(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    used = HEADER.size + length
    if available < used:
        raise TruncatedMessageError(f"{tag.name} needs {used} bytes, buffer holds {available}")
    start = offset + HEADER.size
    payload = bytes(buffer[start:start + length])
    _check_payload(tag, payload)
    return TelemetryMessage(tag, step, payload), used


def _decode_all(buffer) -> Tuple[List[TelemetryMessage], int]:
    messages = []
    offset = 0
    while True:
        try:
            msg, used = decode(buffer, offset)
        except TruncatedMessageError:
            return messages, offset
        messages.append(msg)
        offset += used


def decode_stream(buffer: bytes) -> Tuple[List[TelemetryMessage], bytes]:
    """Every whole message at the front of a buffer, plus the incomplete residue"""
    messages, offset = _decode_all(buffer)
    return messages, bytes(buffer[offset:])


class MessageReader:
    """Buffered reader of whole messages from a stream socket"""

    def __init__(self, sock: Optional[socket.socket] = None, chunk_size: int = 1 << 16):
        self.sock = sock
        self.chunk_size = chunk_size
        self.buffer = bytearray()
        self.pending: List[TelemetryMessage] = []
        self.bytes_read = 0

    def feed(self, data: bytes) -> List[TelemetryMessage]:
        """Add received bytes; return the messages they complete"""
        self.bytes_read += len(data)
        self.buffer.extend(data)
        messages, offset = _decode_all(self.buffer)
        del self.buffer[:offset]
        return messages

    def receive(self) -> Optional[TelemetryMessage]:
        """
        Next message, or None on a clean end of stream

        Raises:
            TruncatedMessageError: the stream ended inside a message
        """
        while not self.pending:
            data = self.sock.recv(self.chunk_size)
            if not data:
                if self.buffer:
                    raise TruncatedMessageError(f"stream closed with {len(self.buffer)} bytes of a partial message")
                return None
            self.pending.extend(self.feed(data))
        return self.pending.pop(0)


def send_message(sock: socket.socket, msg: TelemetryMessage) -> int:
    data = encode(msg)
    sock.sendall(data)
    return len(data)


def check_step_order(previous: Optional[int], msg: TelemetryMessage) -> int:
    """Step indices must not decrease along a stream"""
    if previous is not None and msg.step < previous:
        raise ProtocolError(f"step index went back from {previous} to {msg.step}")
    return msg.step
