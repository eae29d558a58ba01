"""In-process and TCP transports with a shared delivery trace.

Both keep one inbox per receiving party and guarantee FIFO delivery per
(sender, receiver) pair. A message is appended to ``network.trace`` when the
receiving endpoint takes it off the network.
"""
from __future__ import annotations

import json
import queue
import socket
import threading
import time

from smob.errors import FrameError, TransportError
from smob.fhe.params import Scheme
from smob.privacy import DataCategory, PartyRole
from smob.transport.message import Address, MsgType, TaggedMessage
from smob.transport.wire import (
    FRAME_HEADER_SIZE,
    TXID_BYTES,
    decode_frame,
    encode_frame,
    malformed_record,
    parse_frame_header,
)

DEFAULT_TIMEOUT = 60.0


class Endpoint:
    """A party's single-owner handle on the network."""

    def __init__(self, network: Network, address: Address):
        self.network = network
        self.address = address
        self._stash: list[TaggedMessage] = []

    @property
    def id(self) -> str:
        return self.address.id

    @property
    def role(self) -> PartyRole:
        return self.address.role

    def send(self, msg: TaggedMessage) -> None:
        if msg.sender_id != self.id:
            raise TransportError(f"endpoint {self.id} cannot send as {msg.sender_id}")
        self.network._transmit(self.address, msg.receiver_id, encode_frame(msg))

    def receive(self, sender_id: str | None = None, msg_type: MsgType | None = None,
                timeout: float | None = DEFAULT_TIMEOUT) -> TaggedMessage:
        """Next message, optionally the next one from ``sender_id`` and/or of ``msg_type``.

        Non-matching messages are kept in arrival order for later calls.
        """
        def matches(m: TaggedMessage) -> bool:
            return ((sender_id is None or m.sender_id == sender_id)
                    and (msg_type is None or m.msg_type == msg_type))

        for i, m in enumerate(self._stash):
            if matches(m):
                return self._stash.pop(i)
        while True:
            msg = self.network._pull(self.address, timeout)
            if matches(msg):
                return msg
            self._stash.append(msg)

    def pending(self) -> int:
        return len(self._stash) + self.network._inbox(self.id).qsize()


class Network:
    def __init__(self):
        self.trace: list[TaggedMessage] = []
        self._lock = threading.Lock()
        self._inboxes: dict[str, queue.Queue] = {}
        self._endpoints: dict[str, Endpoint] = {}
        self.sent = 0

    def endpoint(self, role: PartyRole, party_id: str) -> Endpoint:
        with self._lock:
            if party_id in self._endpoints:
                raise TransportError(f"party id {party_id!r} already registered")
            ep = Endpoint(self, Address(PartyRole(role), party_id))
            self._endpoints[party_id] = ep
            self._inboxes[party_id] = queue.Queue()
        self._open(ep)
        return ep

    def _open(self, ep: Endpoint) -> None:
        pass

    def _inbox(self, party_id: str) -> queue.Queue:
        try:
            return self._inboxes[party_id]
        except KeyError:
            raise TransportError(f"unknown receiver {party_id!r}") from None

    def _transmit(self, sender: Address, receiver_id: str, frame: bytes) -> None:
        raise NotImplementedError

    def _count_sent(self) -> None:
        with self._lock:
            self.sent += 1

    def _pull(self, receiver: Address, timeout: float | None) -> TaggedMessage:
        try:
            sender, frame = self._inbox(receiver.id).get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"{receiver.id}: receive timed out") from None
        s_role = sender.role if sender else None
        s_id = sender.id if sender else "?"
        try:
            msg = decode_frame(frame, s_role, s_id, receiver.role, receiver.id)
        except FrameError:
            with self._lock:
                self.trace.append(malformed_record(frame, s_role, s_id, receiver.role,
                                                   receiver.id))
            raise
        with self._lock:
            self.trace.append(msg)
        return msg

    def inject_raw(self, sender: Address, receiver_id: str, frame: bytes) -> None:
        """Place arbitrary bytes on the wire (fault injection)."""
        self._transmit(sender, receiver_id, bytes(frame))

    def drain(self) -> int:
        """Deliver everything still queued; returns how many messages that was."""
        count = 0
        for ep in list(self._endpoints.values()):
            while self._inbox(ep.id).qsize():
                try:
                    ep._stash.append(self._pull(ep.address, 0))
                except FrameError:
                    pass
                count += 1
        return count

    def reset_trace(self) -> None:
        with self._lock:
            self.trace = []

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcNetwork(Network):
    """Queues inside one process; deterministic and the benchmark default."""

    def _transmit(self, sender: Address, receiver_id: str, frame: bytes) -> None:
        self._inbox(receiver_id).put((sender, frame))
        self._count_sent()


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    while size:
        chunk = sock.recv(min(size, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed")
        chunks.append(chunk)
        size -= len(chunk)
    return b"".join(chunks)


def _read_frame(sock: socket.socket) -> tuple[bytes, bool]:
    """One frame off the stream; ``ok`` is false when the header is unusable."""
    head = _recv_exact(sock, FRAME_HEADER_SIZE)
    try:
        header = parse_frame_header(head)
    except FrameError:
        return head, False
    return head + _recv_exact(sock, header.payload_len), True


class TcpNetwork(Network):
    """Loopback TCP: one listener per party, one connection per ordered pair.

    A connection opens with a Control hello frame naming the sender, which
    is consumed by the transport and not traced.
    """

    def __init__(self, host: str = "127.0.0.1", base_port: int = 0):
        super().__init__()
        self.host = host
        self.base_port = base_port
        self._listeners: dict[str, socket.socket] = {}
        self.ports: dict[str, int] = {}
        self._conns: dict[tuple[str, str], tuple[socket.socket, threading.Lock]] = {}
        self._accepted: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._closed = threading.Event()

    def _open(self, ep: Endpoint) -> None:
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        port = self.base_port + len(self._listeners) if self.base_port else 0
        try:
            srv.bind((self.host, port))
        except OSError as exc:
            srv.close()
            raise TransportError(f"cannot listen on {self.host}:{port}: {exc}") from exc
        srv.listen()
        self._listeners[ep.id] = srv
        self.ports[ep.id] = srv.getsockname()[1]
        self._spawn(self._accept_loop, srv, ep.id)

    def _spawn(self, fn, *args) -> None:
        th = threading.Thread(target=fn, args=args, daemon=True)
        th.start()
        self._threads.append(th)

    def _accept_loop(self, srv: socket.socket, receiver_id: str) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = srv.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._accepted.append(conn)
            self._spawn(self._reader, conn, receiver_id)

    def _reader(self, conn: socket.socket, receiver_id: str) -> None:
        inbox = self._inbox(receiver_id)
        sender = None
        try:
            hello, _ = _read_frame(conn)
            info = json.loads(hello[FRAME_HEADER_SIZE:].decode())
            sender = Address(PartyRole[info["role"]], info["id"])
            while not self._closed.is_set():
                frame, ok = _read_frame(conn)
                inbox.put((sender, frame))
                if not ok:
                    return  # the stream cannot be resynchronised
        except (OSError, ConnectionError, ValueError, KeyError):
            return

    def _connection(self, sender: Address, receiver_id: str):
        key = (sender.id, receiver_id)
        with self._lock:
            entry = self._conns.get(key)
        if entry is not None:
            return entry
        if receiver_id not in self.ports:
            raise TransportError(f"unknown receiver {receiver_id!r}")
        try:
            sock = socket.create_connection((self.host, self.ports[receiver_id]), timeout=10)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            hello = TaggedMessage(bytes(TXID_BYTES), sender.role, sender.id,
                                  self._endpoints[receiver_id].role, receiver_id,
                                  MsgType.CONTROL, DataCategory.INSENSITIVE, json.dumps(
                                      {"role": sender.role.name, "id": sender.id}).encode(),
                                  Scheme.BFV)
            sock.sendall(encode_frame(hello))
        except OSError as exc:
            raise TransportError(f"connect {sender.id}->{receiver_id}: {exc}") from exc
        entry = (sock, threading.Lock())
        with self._lock:
            self._conns.setdefault(key, entry)
            return self._conns[key]

    def _transmit(self, sender: Address, receiver_id: str, frame: bytes) -> None:
        if self._closed.is_set():
            raise TransportError("network is closed")
        sock, lock = self._connection(sender, receiver_id)
        try:
            with lock:
                sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send {sender.id}->{receiver_id}: {exc}") from exc
        self._count_sent()

    def drain(self) -> int:
        # frames may still be in flight on the sockets
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            queued = sum(q.qsize() for q in self._inboxes.values())
            if len(self.trace) + queued >= self.sent:
                break
            time.sleep(0.005)
        return super().drain()

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        for sock, _ in list(self._conns.values()):
            _quiet_close(sock)
        for sock in self._accepted + list(self._listeners.values()):
            _quiet_close(sock)
        for th in self._threads:
            th.join(timeout=1.0)


def _quiet_close(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    sock.close()


def make_network(kind: str = "inproc", **kwargs) -> Network:
    if kind == "inproc":
        return InProcNetwork()
    if kind == "tcp":
        return TcpNetwork(**kwargs)
    raise ValueError(f"unknown transport {kind!r}")
