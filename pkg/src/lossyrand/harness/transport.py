"""Byte-stream transport: the verifier drives sessions over a socket and the
prover answers frames.  Only the classical variants (p1, p3) run here."""

from __future__ import annotations

import logging
import socket
import threading

from .. import qsim
from ..protocol import ProtocolError, ProverEndpoint, TransportError
from ..samplers import session_rng
from ..wire import HEADER, FrameError, Instance, Reason, Verdict, decode_payload, encode, parse_header, read_frame

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


def _read_exact(sock: socket.socket):
    def read(n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = sock.recv(n - len(buf))
            except socket.timeout:
                raise ProtocolError(Reason.TIMEOUT, "no data before the per-message timeout") from None
            if not chunk:
                break
            buf.extend(chunk)
        return bytes(buf)
    return read


def recv_message(sock: socket.socket):
    """Read one frame; framing problems become a ``ProtocolError`` carrying
    the frame's reason code."""
    try:
        return read_frame(_read_exact(sock))
    except FrameError as exc:
        raise ProtocolError(exc.reason, str(exc)) from None


class StreamChannel:
    """Verifier-side channel over a connected socket."""

    supports_quantum = False

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self.sock = sock
        self.sock.settimeout(timeout)

    def send(self, msg):
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise ProtocolError(Reason.TRANSPORT, str(exc)) from None
        if isinstance(msg, Verdict):
            return None
        return recv_message(self.sock)

    def take_register(self):
        raise TransportError("no quantum channel over a byte stream")

    def return_register(self, state):
        raise TransportError("no quantum channel over a byte stream")


def serve_prover(sock: socket.socket, adversary: str, params, seed: int,
                 timeout: float = DEFAULT_TIMEOUT, **prover_kw) -> int:
    """Answer verifier frames until the peer closes; returns sessions seen.

    Session i (counted by INSTANCE frames) uses the prover stream
    ``session_rng(seed, i, 1)``, matching the in-process runner.  A frame
    error closes the connection.
    """
    sock.settimeout(timeout)
    read = _read_exact(sock)
    endpoint = None
    sessions = 0
    while True:
        header = read(HEADER.size)
        if not header:
            return sessions
        try:
            tag, length = parse_header(header)
            body = read(length)
            if len(body) != length:
                raise FrameError(Reason.MALFORMED, "truncated frame")
            msg = decode_payload(tag, body)
        except FrameError as exc:
            log.warning("prover closing connection: %s", exc)
            return sessions
        if isinstance(msg, Instance):
            prover = qsim.make_adversary(adversary, params, session_rng(seed, sessions, 1), **prover_kw)
            endpoint = ProverEndpoint(prover)
            sessions += 1
        if endpoint is None:
            log.warning("prover got %s before any instance", type(msg).__name__)
            return sessions
        reply = endpoint.handle(msg)
        if reply is not None:
            sock.sendall(encode(reply))


def socket_pair_prover(adversary: str, params, seed: int, timeout: float = DEFAULT_TIMEOUT, **prover_kw):
    """Start a prover thread on one end of a socket pair; returns
    (verifier socket, thread)."""
    a, b = socket.socketpair()

    def run():
        try:
            serve_prover(b, adversary, params, seed, timeout, **prover_kw)
        except (OSError, ProtocolError) as exc:
            log.warning("prover thread stopped: %s", exc)
        finally:
            b.close()

    t = threading.Thread(target=run, daemon=True)
    t.start()
    return a, t
