"""Server-hospital message vocabulary and two interchangeable transports.

Wire format: every frame is a 4-byte little-endian payload length followed
by the payload; the payload is a 1-byte type tag and the message fields in
declaration order. Integers are little-endian (u32/u64), floats IEEE-754
little-endian 64-bit, parameter vectors a u32 element count followed by the
elements. Example frames::

    Shutdown                            01 00 00 00   06
    BroadcastModel(round=0, [1.0])      11 00 00 00   02  00 00 00 00
                                        01 00 00 00   00 00 00 00 00 00 f0 3f

The message vocabulary deliberately has no variant that could carry feature
rows or labels — only parameters, sample counts, and metric scalars — so
raw data cannot leave a hospital through this layer no matter what the
caller does.

Two transports implement the same connection interface: an in-process one
built on queues (every message still passes through encode/decode, so byte
counts and codec behavior match the network exactly) and a TCP one. A
federation run is bit-identical across the two.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Register",
    "BroadcastModel",
    "LocalUpdate",
    "EvalRequest",
    "EvalResult",
    "Shutdown",
    "Message",
    "MESSAGE_TYPES",
    "TransportError",
    "ProtocolError",
    "FramingError",
    "TransportClosedError",
    "encode",
    "decode",
    "InProcessTransport",
    "TcpTransport",
    "server_listen",
    "worker_connect",
]

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1


class TransportError(Exception):
    """Base class for everything that can go wrong at this layer."""


class ProtocolError(TransportError):
    """A frame or message violates the protocol (bad tag, bad field)."""


class FramingError(TransportError):
    """A frame is incomplete or has stray bytes."""


class TransportClosedError(TransportError):
    """The peer (or this side) closed the connection."""


def _check_u32(name: str, value: int) -> None:
    if not isinstance(value, (int, np.integer)) or not 0 <= value <= _U32_MAX:
        raise ValueError(f"{name} must be a u32, got {value!r}")


def _check_u64(name: str, value: int) -> None:
    if not isinstance(value, (int, np.integer)) or not 0 <= value <= _U64_MAX:
        raise ValueError(f"{name} must be a u64, got {value!r}")


def _check_params(params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"params must be a flat vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("params contain non-finite values")
    return p


@dataclass(frozen=True)
class Register:
    """Worker announces itself: identity plus local train/test sizes."""

    hospital_id: int
    n_train: int
    n_test: int

    def __post_init__(self) -> None:
        _check_u32("hospital_id", self.hospital_id)
        _check_u64("n_train", self.n_train)
        _check_u64("n_test", self.n_test)


@dataclass(frozen=True, eq=False)
class BroadcastModel:
    """Server pushes the current global parameters for local training."""

    round: int
    params: np.ndarray

    def __post_init__(self) -> None:
        _check_u32("round", self.round)
        object.__setattr__(self, "params", _check_params(self.params))

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.round == other.round
            and np.array_equal(self.params, other.params)
        )


@dataclass(frozen=True, eq=False)
class LocalUpdate:
    """Worker returns locally trained parameters and its train-set size."""

    hospital_id: int
    round: int
    n_samples: int
    params: np.ndarray

    def __post_init__(self) -> None:
        _check_u32("hospital_id", self.hospital_id)
        _check_u32("round", self.round)
        _check_u64("n_samples", self.n_samples)
        object.__setattr__(self, "params", _check_params(self.params))

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and (self.hospital_id, self.round, self.n_samples)
            == (other.hospital_id, other.round, other.n_samples)
            and np.array_equal(self.params, other.params)
        )


@dataclass(frozen=True, eq=False)
class EvalRequest:
    """Server asks a worker to score candidate parameters on local test data."""

    round: int
    params: np.ndarray

    def __post_init__(self) -> None:
        _check_u32("round", self.round)
        object.__setattr__(self, "params", _check_params(self.params))

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.round == other.round
            and np.array_equal(self.params, other.params)
        )


@dataclass(frozen=True)
class EvalResult:
    """Worker's local metric value plus its test-set size."""

    hospital_id: int
    round: int
    value: float
    n_test: int

    def __post_init__(self) -> None:
        _check_u32("hospital_id", self.hospital_id)
        _check_u32("round", self.round)
        _check_u64("n_test", self.n_test)
        if not np.isfinite(self.value):
            raise ValueError(f"value must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Shutdown:
    """Server ends the session."""


Message = Register | BroadcastModel | LocalUpdate | EvalRequest | EvalResult | Shutdown

MESSAGE_TYPES: tuple[type, ...] = (
    Register, BroadcastModel, LocalUpdate, EvalRequest, EvalResult, Shutdown,
)

_TAGS = {
    Register: 0x01,
    BroadcastModel: 0x02,
    LocalUpdate: 0x03,
    EvalRequest: 0x04,
    EvalResult: 0x05,
    Shutdown: 0x06,
}


def _pack_params(params: np.ndarray) -> bytes:
    return _U32.pack(params.size) + params.astype("<f8").tobytes()


def encode(msg: Message) -> bytes:
    """Serialize one message into a complete frame (length prefix included)."""
    if type(msg) not in _TAGS:
        raise ProtocolError(f"not a protocol message: {type(msg).__name__}")
    parts = [bytes([_TAGS[type(msg)]])]
    if isinstance(msg, Register):
        parts += [_U32.pack(msg.hospital_id), _U64.pack(msg.n_train), _U64.pack(msg.n_test)]
    elif isinstance(msg, BroadcastModel):
        parts += [_U32.pack(msg.round), _pack_params(msg.params)]
    elif isinstance(msg, LocalUpdate):
        parts += [_U32.pack(msg.hospital_id), _U32.pack(msg.round),
                  _U64.pack(msg.n_samples), _pack_params(msg.params)]
    elif isinstance(msg, EvalRequest):
        parts += [_U32.pack(msg.round), _pack_params(msg.params)]
    elif isinstance(msg, EvalResult):
        parts += [_U32.pack(msg.hospital_id), _U32.pack(msg.round),
                  _F64.pack(msg.value), _U64.pack(msg.n_test)]
    payload = b"".join(parts)
    return _U32.pack(len(payload)) + payload


class _PayloadReader:
    """Sequential field extraction with protocol errors on short payloads."""

    def __init__(self, payload: bytes):
        self._buf = payload
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._buf):
            raise ProtocolError(
                f"payload too short: wanted {n} more bytes at offset {self._pos}, "
                f"have {len(self._buf) - self._pos}"
            )
        chunk = self._buf[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def params(self) -> np.ndarray:
        count = self.u32()
        raw = self._take(8 * count)
        values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise ProtocolError("frame carries non-finite parameter values")
        return values

    def done(self) -> None:
        if self._pos != len(self._buf):
            raise ProtocolError(
                f"payload has {len(self._buf) - self._pos} unexpected trailing bytes"
            )


def decode(data: bytes) -> Message:
    """Parse one complete frame back into a message (inverse of encode)."""
    if len(data) < 4:
        raise FramingError(f"frame shorter than its length prefix: {len(data)} bytes")
    declared = _U32.unpack(data[:4])[0]
    if len(data) < 4 + declared:
        raise FramingError(
            f"frame declares {declared} payload bytes, only {len(data) - 4} available"
        )
    if len(data) > 4 + declared:
        raise FramingError(f"frame has {len(data) - 4 - declared} trailing bytes")
    if declared == 0:
        raise ProtocolError("empty payload (missing type tag)")
    reader = _PayloadReader(data[5:])
    tag = data[4]
    try:
        if tag == 0x01:
            msg: Message = Register(reader.u32(), reader.u64(), reader.u64())
        elif tag == 0x02:
            msg = BroadcastModel(reader.u32(), reader.params())
        elif tag == 0x03:
            msg = LocalUpdate(reader.u32(), reader.u32(), reader.u64(), reader.params())
        elif tag == 0x04:
            msg = EvalRequest(reader.u32(), reader.params())
        elif tag == 0x05:
            msg = EvalResult(reader.u32(), reader.u32(), reader.f64(), reader.u64())
        elif tag == 0x06:
            msg = Shutdown()
        else:
            raise ProtocolError(f"unknown message type tag 0x{tag:02X}")
    except ValueError as exc:  # field validation inside the dataclasses
        raise ProtocolError(str(exc)) from None
    reader.done()
    return msg


# --------------------------------------------------------------------------
# connections


class _InProcessState:
    """Shared close flag for one connection pair."""

    def __init__(self):
        self.lock = threading.Lock()
        self.closed = False


_CLOSED = object()


class InProcessConnection:
    """One endpoint of an in-process connection pair.

    Frames still pass through encode/decode, so behavior (validation,
    byte counts) matches the TCP transport exactly.
    """

    def __init__(self, out_q: queue.Queue, in_q: queue.Queue, state: _InProcessState):
        self._out = out_q
        self._in = in_q
        self._state = state
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, msg: Message) -> None:
        frame = encode(msg)
        with self._state.lock:
            if self._state.closed:
                raise TransportClosedError("connection closed")
            self._out.put(frame)
            self.bytes_sent += len(frame)

    def recv(self) -> Message:
        item = self._in.get()
        if item is _CLOSED:
            self._in.put(_CLOSED)  # keep later recv() calls failing too
            raise TransportClosedError("connection closed")
        self.bytes_received += len(item)
        return decode(item)

    def close(self) -> None:
        with self._state.lock:
            if self._state.closed:
                return
            self._state.closed = True
        self._out.put(_CLOSED)
        self._in.put(_CLOSED)


class InProcessListener:
    def __init__(self, transport: "InProcessTransport"):
        self._transport = transport

    def accept(self) -> InProcessConnection:
        conn = self._transport._pending.get()
        if conn is _CLOSED:
            raise TransportClosedError("listener closed")
        return conn

    def close(self) -> None:
        self._transport._pending.put(_CLOSED)


class InProcessTransport:
    """Queue-backed transport for single-process federation runs."""

    def __init__(self):
        self._pending: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self.endpoints: list = []

    def listen(self) -> InProcessListener:
        return InProcessListener(self)

    def connect(self) -> InProcessConnection:
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        state = _InProcessState()
        worker_end = InProcessConnection(a_to_b, b_to_a, state)
        server_end = InProcessConnection(b_to_a, a_to_b, state)
        with self._lock:
            self.endpoints += [worker_end, server_end]
        self._pending.put(server_end)
        return worker_end

    @property
    def total_wire_bytes(self) -> int:
        """Every frame counted once, at its sender."""
        with self._lock:
            return sum(e.bytes_sent for e in self.endpoints)


class TcpConnection:
    """Socket wrapper speaking length-prefixed frames."""

    def __init__(self, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._closed = False
        self.bytes_sent = 0
        self.bytes_received = 0

    def _recv_exact(self, n: int, mid_frame: bool) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(remaining)
            except OSError as exc:
                raise TransportClosedError(f"connection lost: {exc}") from None
            if not chunk:
                if mid_frame or chunks:
                    raise FramingError("peer closed the connection mid-frame")
                raise TransportClosedError("peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def send(self, msg: Message) -> None:
        frame = encode(msg)
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise TransportClosedError(f"send failed: {exc}") from None
        self.bytes_sent += len(frame)

    def recv(self) -> Message:
        prefix = self._recv_exact(4, mid_frame=False)
        declared = _U32.unpack(prefix)[0]
        payload = self._recv_exact(declared, mid_frame=True)
        self.bytes_received += 4 + declared
        return decode(prefix + payload)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpListener:
    def __init__(self, sock: socket.socket, transport: "TcpTransport | None" = None):
        self._sock = sock
        self._transport = transport
        self.address = sock.getsockname()[:2]

    def accept(self) -> TcpConnection:
        try:
            sock, _ = self._sock.accept()
        except OSError as exc:
            raise TransportClosedError(f"listener closed: {exc}") from None
        conn = TcpConnection(sock)
        if self._transport is not None:
            self._transport._track(conn)
        return conn

    def close(self) -> None:
        self._sock.close()


class TcpTransport:
    """TCP loopback/network transport; port 0 binds an ephemeral port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port = port
        self._lock = threading.Lock()
        self.endpoints: list = []

    def _track(self, conn) -> None:
        with self._lock:
            self.endpoints.append(conn)

    def listen(self) -> TcpListener:
        listener = server_listen(self.host, self.port, transport=self)
        self.port = listener.address[1]
        return listener

    def connect(self) -> TcpConnection:
        conn = worker_connect(self.host, self.port)
        self._track(conn)
        return conn

    @property
    def total_wire_bytes(self) -> int:
        with self._lock:
            return sum(e.bytes_sent for e in self.endpoints)


def server_listen(host: str, port: int, transport: TcpTransport | None = None) -> TcpListener:
    """Bind and listen; returns a listener whose .address has the real port."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
        sock.listen()
    except OSError as exc:
        sock.close()
        raise TransportError(f"cannot listen on {host}:{port}: {exc}") from None
    return TcpListener(sock, transport)


def worker_connect(host: str, port: int, timeout: float | None = 30.0) -> TcpConnection:
    """Dial the federation server."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from None
    sock.settimeout(None)
    return TcpConnection(sock)
