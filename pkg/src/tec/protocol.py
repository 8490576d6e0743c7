"""Challenge-response login.

1. client -> LoginRequest(username)
2. host picks identifier token t, seals the 8-byte timestamp T_s under
   derive_seed(identifier[t], epoch_day(T_s)) and keeps a PendingLogin
3. host -> Challenge(t, enc_ts)
4. client recovers T_s (trying today and yesterday), seals the password
   under derive_seed(identifier[r], T_s) and sends Response(r, payload);
   in tokenless mode r is left out and the host tries every identifier
5. host -> Verdict; the pending login is erased whatever the outcome

Identifier values never go on the wire, only their index.

Frames: 1 type byte, 4-byte big-endian body length, body. Variable fields
in a body carry a 2-byte big-endian length prefix; ciphertexts travel in
their TEC1 framing.
"""

import enum
import hmac
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    ChallengeUndecryptable,
    FrameError,
    LoginInProgress,
    NoPendingLogin,
    TecError,
    UnknownUser,
)
from .keystream import KeySpec, TranscendentalBase, derive_seed
from .password_store import Identifier, StoreFile, host_seeds, stored_password
from .stego_codec import Ciphertext, pack_ciphertext, seal, unpack_ciphertext, unseal

DAY_MS = 86_400_000
MAX_BODY = 1 << 20
_FRAME_HEADER = struct.Struct(">BI")


class Reason(enum.IntEnum):
    OK = 0
    BAD_CREDENTIALS = 1
    EXPIRED = 2
    UNKNOWN_USER = 3
    LOGIN_IN_PROGRESS = 4
    NO_PENDING_LOGIN = 5
    MALFORMED = 6


@dataclass(frozen=True)
class LoginRequest:
    username: str


@dataclass(frozen=True)
class Challenge:
    token: int
    enc_ts: Ciphertext


@dataclass(frozen=True)
class Response:
    token: Optional[int]
    enc_payload: Ciphertext


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: Reason = Reason.OK


@dataclass
class PendingLogin:
    username: str
    ts_value_ms: int
    challenge_token: int
    issued_at_ms: int
    expiry_ms: int


@dataclass(frozen=True)
class ProtocolConfig:
    t_a_ms: int = 30_000
    tokenless_mode: bool = False
    use_fib: bool = False
    base: TranscendentalBase = TranscendentalBase.PI

    def __post_init__(self):
        if self.t_a_ms <= 0:
            raise ValueError("t_a_ms must be positive")


@dataclass
class Credentials:
    password: bytes
    identifiers: list


@dataclass
class HostState:
    """Everything the host keeps between messages. All mutation goes through
    the handlers below, which serialize on `lock`."""

    store: StoreFile
    host_secret: int
    config: ProtocolConfig = field(default_factory=ProtocolConfig)
    pending: dict = field(default_factory=dict)
    next_token: dict = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)


def epoch_day(ts_ms: int) -> int:
    return ts_ms // DAY_MS


def user_spec(identifier: Identifier, seed_ts: int, base=TranscendentalBase.PI) -> KeySpec:
    return KeySpec(base, derive_seed(identifier.value, seed_ts))


def host_handle_login_request(state: HostState, msg: LoginRequest, now_ms: int) -> Challenge:
    with state.lock:
        record = state.store.get(msg.username)
        current = state.pending.get(msg.username)
        if current is not None and current.expiry_ms >= now_ms:
            raise LoginInProgress(f"login already pending for {msg.username!r}")
        n = state.next_token.get(msg.username, 0)
        token = n % len(record.identifiers)
        state.next_token[msg.username] = n + 1
        spec = user_spec(record.identifiers[token], epoch_day(now_ms), state.config.base)
        enc_ts = seal(now_ms.to_bytes(8, "big"), spec, state.config.use_fib,
                      host_seeds(state.store, state.host_secret))
        state.pending[msg.username] = PendingLogin(
            msg.username, now_ms, token, now_ms, now_ms + state.config.t_a_ms
        )
        return Challenge(token, enc_ts)


def recover_timestamp(challenge: Challenge, identifier: Identifier, now_ms: int,
                      config: ProtocolConfig = ProtocolConfig()) -> int:
    """Open the challenge timestamp, allowing one day of clock skew."""
    today = epoch_day(now_ms)
    for day in (today, today - 1):
        if day < 0:
            continue
        try:
            raw = unseal(challenge.enc_ts, user_spec(identifier, day, config.base), config.use_fib)
        except TecError:
            continue
        if len(raw) == 8 and epoch_day(int.from_bytes(raw, "big")) == day:
            return int.from_bytes(raw, "big")
    raise ChallengeUndecryptable("challenge timestamp does not open under this identifier")


def user_process_challenge(challenge: Challenge, creds: Credentials, now_ms: int,
                           config: ProtocolConfig = ProtocolConfig(), response_index=None) -> Response:
    if not 0 <= challenge.token < len(creds.identifiers):
        raise ChallengeUndecryptable(f"token {challenge.token} names no identifier")
    ts = recover_timestamp(challenge, creds.identifiers[challenge.token], now_ms, config)
    r = challenge.token if response_index is None else response_index
    if not 0 <= r < len(creds.identifiers):
        raise ValueError(f"response identifier index {r} out of range")
    payload = seal(creds.password, user_spec(creds.identifiers[r], ts, config.base), config.use_fib)
    return Response(None if config.tokenless_mode else r, payload)


def host_handle_response(state: HostState, username: str, msg: Response, now_ms: int) -> Verdict:
    with state.lock:
        pending = state.pending.pop(username, None)
        if pending is None:
            raise NoPendingLogin(f"no pending login for {username!r}")
        if now_ms - pending.issued_at_ms > state.config.t_a_ms:
            return Verdict(False, Reason.EXPIRED)
        record = state.store.get(username)
        if msg.token is not None:
            indices = [msg.token] if 0 <= msg.token < len(record.identifiers) else []
        elif state.config.tokenless_mode:
            indices = range(len(record.identifiers))
        else:
            indices = []
        expected = stored_password(state.store, username, state.host_secret)
        reserved = host_seeds(state.store, state.host_secret)
        for i in indices:
            spec = user_spec(record.identifiers[i], pending.ts_value_ms, state.config.base)
            try:
                candidate = unseal(msg.enc_payload, spec, state.config.use_fib, reserved)
            except TecError:
                continue
            if hmac.compare_digest(candidate, expected):
                return Verdict(True, Reason.OK)
        return Verdict(False, Reason.BAD_CREDENTIALS)


def host_expire_pending(state: HostState, now_ms: int) -> int:
    with state.lock:
        stale = [u for u, p in state.pending.items() if p.expiry_ms < now_ms]
        for u in stale:
            del state.pending[u]
        return len(stale)


# wire format

TYPE_LOGIN_REQUEST = 0x01
TYPE_CHALLENGE = 0x02
TYPE_RESPONSE = 0x03
TYPE_VERDICT = 0x04


def _field(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise FrameError("field longer than 65535 bytes")
    return struct.pack(">H", len(data)) + data


def frame_encode(msg) -> bytes:
    if isinstance(msg, LoginRequest):
        kind, body = TYPE_LOGIN_REQUEST, _field(msg.username.encode("utf-8"))
    elif isinstance(msg, Challenge):
        kind, body = TYPE_CHALLENGE, struct.pack(">H", msg.token) + _field(pack_ciphertext(msg.enc_ts))
    elif isinstance(msg, Response):
        if msg.token is None:
            head = b"\x00"
        else:
            head = b"\x01" + struct.pack(">H", msg.token)
        kind, body = TYPE_RESPONSE, head + _field(pack_ciphertext(msg.enc_payload))
    elif isinstance(msg, Verdict):
        kind, body = TYPE_VERDICT, struct.pack(">BB", int(msg.ok), int(msg.reason))
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    if len(body) > MAX_BODY:
        raise FrameError("frame body exceeds 1 MiB")
    return _FRAME_HEADER.pack(kind, len(body)) + body


class _Body:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FrameError("field overruns frame body")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack(">H", self.take(2))[0]

    def field(self):
        return self.take(self.u16())

    def ciphertext(self):
        try:
            ct, _ = unpack_ciphertext(self.field())
        except ValueError as exc:
            raise FrameError(f"bad embedded ciphertext: {exc}") from exc
        return ct


def _parse_body(kind: int, body: bytes):
    b = _Body(body)
    if kind == TYPE_LOGIN_REQUEST:
        try:
            msg = LoginRequest(b.field().decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FrameError("username is not UTF-8") from exc
    elif kind == TYPE_CHALLENGE:
        msg = Challenge(b.u16(), b.ciphertext())
    elif kind == TYPE_RESPONSE:
        flags = b.u8()
        if flags not in (0, 1):
            raise FrameError(f"bad response flags 0x{flags:02x}")
        token = b.u16() if flags else None
        msg = Response(token, b.ciphertext())
    elif kind == TYPE_VERDICT:
        ok, reason = b.u8(), b.u8()
        try:
            msg = Verdict(bool(ok), Reason(reason))
        except ValueError as exc:
            raise FrameError(f"unknown verdict reason {reason}") from exc
    else:
        raise FrameError(f"unknown frame type 0x{kind:02x}")
    if b.pos != len(body):
        raise FrameError("trailing bytes in frame body")
    return msg


def frame_decode(data: bytes):
    if len(data) < _FRAME_HEADER.size:
        raise FrameError("frame header truncated")
    kind, length = _FRAME_HEADER.unpack_from(data)
    if length > MAX_BODY:
        raise FrameError(f"frame body of {length} bytes exceeds the 1 MiB cap")
    if len(data) != _FRAME_HEADER.size + length:
        raise FrameError("frame length does not match body")
    return _parse_body(kind, bytes(data[_FRAME_HEADER.size:]))


def read_frame(rfile) -> bytes:
    """Read one whole frame from a binary file-like stream; b"" at clean EOF."""
    header = rfile.read(_FRAME_HEADER.size)
    if not header:
        return b""
    if len(header) < _FRAME_HEADER.size:
        raise FrameError("connection closed inside frame header")
    _, length = _FRAME_HEADER.unpack(header)
    if length > MAX_BODY:
        raise FrameError(f"frame body of {length} bytes exceeds the 1 MiB cap")
    body = rfile.read(length)
    if len(body) != length:
        raise FrameError("connection closed inside frame body")
    return header + body


# transport

def wall_clock_ms() -> int:
    return time.time_ns() // 1_000_000


_ERROR_REASONS = {
    UnknownUser: Reason.UNKNOWN_USER,
    LoginInProgress: Reason.LOGIN_IN_PROGRESS,
    NoPendingLogin: Reason.NO_PENDING_LOGIN,
    FrameError: Reason.MALFORMED,
}


def _reason_for(exc) -> Reason:
    for cls, reason in _ERROR_REASONS.items():
        if isinstance(exc, cls):
            return reason
    return Reason.BAD_CREDENTIALS


class _SessionHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server = self.server
        username = None
        while True:
            try:
                raw = read_frame(self.rfile)
                if not raw:
                    break
                msg = frame_decode(raw)
                now = server.clock()
                if isinstance(msg, LoginRequest):
                    reply = host_handle_login_request(server.state, msg, now)
                    username = msg.username
                elif isinstance(msg, Response) and username is not None:
                    reply = host_handle_response(server.state, username, msg, now)
                    username = None
                else:
                    reply = Verdict(False, Reason.MALFORMED)
            except TecError as exc:
                reply = Verdict(False, _reason_for(exc))
            self.wfile.write(frame_encode(reply))
            self.wfile.flush()
            if isinstance(reply, Verdict):
                break
        server.session_done()


class HostServer(socketserver.ThreadingTCPServer):
    """Threaded TCP endpoint; sessions share one HostState."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, state: HostState, clock=wall_clock_ms, max_sessions=None):
        super().__init__(address, _SessionHandler)
        self.state = state
        self.clock = clock
        self.max_sessions = max_sessions
        self._sessions = 0
        self._count_lock = threading.Lock()

    def session_done(self):
        with self._count_lock:
            self._sessions += 1
            done = self.max_sessions is not None and self._sessions >= self.max_sessions
        if done:
            threading.Thread(target=self.shutdown, daemon=True).start()


def login(address, username: str, creds: Credentials, config: ProtocolConfig = ProtocolConfig(),
          clock=wall_clock_ms, response_index=None, timeout: float = 10.0) -> Verdict:
    """Run the client side of one handshake against a HostServer."""
    with socket.create_connection(address, timeout=timeout) as sock:
        rfile = sock.makefile("rb")
        sock.sendall(frame_encode(LoginRequest(username)))
        reply = frame_decode(read_frame(rfile))
        if isinstance(reply, Verdict):
            return reply
        if not isinstance(reply, Challenge):
            raise FrameError(f"expected a challenge, got {type(reply).__name__}")
        response = user_process_challenge(reply, creds, clock(), config, response_index)
        sock.sendall(frame_encode(response))
        verdict = frame_decode(read_frame(rfile))
        if not isinstance(verdict, Verdict):
            raise FrameError(f"expected a verdict, got {type(verdict).__name__}")
        return verdict
