"""
Telemetry package: binary wire protocol, split-process endpoints and the MITM proxy
"""

from .protocol import (
    HEADER,
    MessageReader,
    MessageType,
    TelemetryMessage,
    check_step_order,
    decode,
    decode_stream,
    encode,
    send_message,
)
from .endpoints import FlightEndpoint, PlantEndpoint, connect, listen_once, parse_address
from .proxy import PROXY_MODES, ProxySession, SessionSummary, serve_proxy
