import random
import struct
import threading

import pytest

from tec.errors import ChallengeUndecryptable, FrameError, LoginInProgress, NoPendingLogin, UnknownUser
from tec.keystream import KeySpec, TranscendentalBase, derive_seed
from tec.password_store import Identifier, StoreFile, enroll, host_seeds
from tec.protocol import (
    DAY_MS,
    MAX_BODY,
    Challenge,
    Credentials,
    HostServer,
    HostState,
    LoginRequest,
    PendingLogin,
    ProtocolConfig,
    Reason,
    Response,
    Verdict,
    frame_decode,
    frame_encode,
    host_expire_pending,
    host_handle_login_request,
    host_handle_response,
    login,
    recover_timestamp,
    user_process_challenge,
)
from tec.stego_codec import seal

SECRET = 987654321
T0 = 1_760_000_000_000
PASSWORD = b"Ab3!Ab3!Ab"
IDS = [Identifier("pet", b"rex the dog"), Identifier("city", b"oslo"), Identifier("teacher", b"ms frizzle")]


def make_state(config=ProtocolConfig(), password=PASSWORD, ids=IDS):
    store = StoreFile()
    enroll(store, "alice", password, ids, SECRET, T0 - 10 * DAY_MS, use_fib=config.use_fib)
    return HostState(store, SECRET, config)


def handshake(state, now, creds=None, respond_at=None, response_index=None):
    creds = creds or Credentials(PASSWORD, IDS)
    ch = host_handle_login_request(state, LoginRequest("alice"), now)
    resp = user_process_challenge(ch, creds, now, state.config, response_index)
    return ch, resp, host_handle_response(state, "alice", resp, respond_at if respond_at is not None else now)


def test_correct_password_accepted():
    state = make_state()
    ch, resp, verdict = handshake(state, T0)
    assert verdict == Verdict(True, Reason.OK)
    assert ch.token < len(IDS)
    assert resp.token == ch.token
    assert state.pending == {}


def test_wrong_password_rejected():
    state = make_state()
    _, _, verdict = handshake(state, T0, Credentials(b"Ab3!Ab3!Ac", IDS))
    assert verdict == Verdict(False, Reason.BAD_CREDENTIALS)
    assert state.pending == {}


def test_expiry_boundary():
    state = make_state(ProtocolConfig(t_a_ms=5000))
    assert handshake(state, T0, respond_at=T0 + 5000)[2].ok
    _, _, late = handshake(state, T0 + 10_000, respond_at=T0 + 15_001)
    assert late == Verdict(False, Reason.EXPIRED)
    assert state.pending == {}


def test_replay_rejected():
    state = make_state()
    _, resp, verdict = handshake(state, T0)
    assert verdict.ok
    with pytest.raises(NoPendingLogin):
        host_handle_response(state, "alice", resp, T0 + 1)


def test_response_from_old_session_fails():
    state = make_state()
    _, old, _ = handshake(state, T0)
    host_handle_login_request(state, LoginRequest("alice"), T0 + 60_000)
    assert host_handle_response(state, "alice", old, T0 + 60_001) == Verdict(False, Reason.BAD_CREDENTIALS)


def test_tokenless_mode():
    state = make_state(ProtocolConfig(tokenless_mode=True))
    for i in range(len(IDS)):
        _, resp, verdict = handshake(state, T0 + i * 1000, response_index=(i + 1) % len(IDS))
        assert resp.token is None
        assert verdict.ok


def test_token_without_tokenless_mode_required():
    state = make_state()
    ch = host_handle_login_request(state, LoginRequest("alice"), T0)
    resp = user_process_challenge(ch, Credentials(PASSWORD, IDS), T0)
    stripped = Response(None, resp.enc_payload)
    assert not host_handle_response(state, "alice", stripped, T0).ok


def test_independent_response_identifier():
    state = make_state()
    ch, resp, verdict = handshake(state, T0, response_index=2)
    assert resp.token == 2
    assert verdict.ok


def test_fib_layer_handshake():
    state = make_state(ProtocolConfig(use_fib=True))
    assert handshake(state, T0)[2].ok


def test_round_robin_tokens():
    state = make_state()
    tokens = [handshake(state, T0 + i * 1000)[0].token for i in range(6)]
    assert tokens == [0, 1, 2, 0, 1, 2]


def test_login_request_errors():
    state = make_state()
    with pytest.raises(UnknownUser):
        host_handle_login_request(state, LoginRequest("mallory"), T0)
    host_handle_login_request(state, LoginRequest("alice"), T0)
    with pytest.raises(LoginInProgress):
        host_handle_login_request(state, LoginRequest("alice"), T0 + 1)
    # an expired pending login is replaced
    host_handle_login_request(state, LoginRequest("alice"), T0 + 30_001)
    assert state.pending["alice"].issued_at_ms == T0 + 30_001


def test_challenge_token_out_of_range():
    state = make_state()
    ch = host_handle_login_request(state, LoginRequest("alice"), T0)
    with pytest.raises(ChallengeUndecryptable):
        user_process_challenge(Challenge(7, ch.enc_ts), Credentials(PASSWORD, IDS), T0)


def test_challenge_with_wrong_identifier():
    state = make_state()
    ch = host_handle_login_request(state, LoginRequest("alice"), T0)
    wrong = [Identifier("pet", b"not my dog")] * 3
    with pytest.raises(ChallengeUndecryptable):
        user_process_challenge(ch, Credentials(PASSWORD, wrong), T0)


def test_clock_skew_across_midnight():
    state = make_state()
    midnight = (T0 // DAY_MS + 1) * DAY_MS
    ch = host_handle_login_request(state, LoginRequest("alice"), midnight - 5)
    assert recover_timestamp(ch, IDS[ch.token], midnight + 5) == midnight - 5


def test_expire_pending():
    state = make_state()
    assert host_expire_pending(state, T0) == 0
    state.pending["alice"] = PendingLogin("alice", T0, 0, T0, T0 + 100)
    state.pending["bob"] = PendingLogin("bob", T0, 0, T0, T0 + 1000)
    assert host_expire_pending(state, T0 + 100) == 0
    assert host_expire_pending(state, T0 + 101) == 1
    assert list(state.pending) == ["bob"]


def test_corrupted_payload_rejected():
    rng = random.Random(6)
    for trial in range(30):
        state = make_state()
        ch = host_handle_login_request(state, LoginRequest("alice"), T0 + trial)
        resp = user_process_challenge(ch, Credentials(PASSWORD, IDS), T0 + trial)
        payload = bytearray(resp.enc_payload.payload)
        i = rng.randrange(len(payload))
        payload[i] ^= 1 << rng.randrange(8)
        bad = Response(resp.token, type(resp.enc_payload)(bytes(payload), resp.enc_payload.bit_len))
        assert not host_handle_response(state, "alice", bad, T0 + trial).ok


def test_freshness():
    state = make_state()
    a = handshake(state, T0)[1]
    b = handshake(state, T0 + 3 * 1000)[1]
    assert a.token != b.token or a.enc_payload != b.enc_payload
    state = make_state()
    first = handshake(state, T0)[1]
    for _ in range(2):
        handshake(state, T0)
    same_token = handshake(state, T0 + 1)[1]
    assert first.token == same_token.token
    assert first.enc_payload != same_token.enc_payload


def test_user_key_colliding_with_host_seed_is_refused():
    # an identifier crafted so derive_seed(identifier, T_s) equals alice's host seed
    enroll_ts = T0 - DAY_MS
    store = StoreFile()
    host_id = Identifier("pet", b"rex")
    crafted = Identifier("evil", derive_seed(b"rex", enroll_ts).to_bytes(16, "big"))
    enroll(store, "alice", PASSWORD, [host_id, crafted], T0, enroll_ts)
    state = HostState(store, T0)
    assert derive_seed(crafted.value, T0) in host_seeds(store, T0)
    state.next_token["alice"] = 1
    ch = host_handle_login_request(state, LoginRequest("alice"), T0)
    resp = user_process_challenge(ch, Credentials(PASSWORD, [host_id, crafted]), T0)
    assert resp.token == 1
    assert host_handle_response(state, "alice", resp, T0) == Verdict(False, Reason.BAD_CREDENTIALS)


SAMPLE_CT = seal(b"payload", KeySpec(TranscendentalBase.PI, 5))


@pytest.mark.parametrize("msg", [
    LoginRequest("alice"),
    LoginRequest("zoë"),
    Challenge(3, SAMPLE_CT),
    Response(1, SAMPLE_CT),
    Response(None, SAMPLE_CT),
    Verdict(True, Reason.OK),
    Verdict(False, Reason.EXPIRED),
])
def test_frame_roundtrip(msg):
    assert frame_decode(frame_encode(msg)) == msg


def test_tokenless_frame_has_no_token_field():
    with_token = frame_encode(Response(1, SAMPLE_CT))
    without = frame_encode(Response(None, SAMPLE_CT))
    assert len(with_token) - len(without) == 2
    assert without[5] == 0


def test_frame_layout():
    frame = frame_encode(LoginRequest("bob"))
    assert frame == b"\x01" + struct.pack(">I", 5) + b"\x00\x03bob"


@pytest.mark.parametrize("raw", [
    b"\xff\x00\x00\x00\x00",
    b"\x01\x00\x00\x00",
    b"\x01" + struct.pack(">I", MAX_BODY + 1),
    b"\x01" + struct.pack(">I", 5) + b"\x00\x09bob",
    b"\x01" + struct.pack(">I", 6) + b"\x00\x03bobX",
    b"\x04" + struct.pack(">I", 2) + b"\x00\x63",
    b"\x03" + struct.pack(">I", 1) + b"\x07",
])
def test_frame_errors(raw):
    with pytest.raises(FrameError):
        frame_decode(raw)


def test_identifiers_never_on_the_wire():
    rng = random.Random(12)
    state = make_state()
    frames = []
    for i in range(100):
        now = T0 + i * 1000
        ch = host_handle_login_request(state, LoginRequest("alice"), now)
        resp = user_process_challenge(ch, Credentials(PASSWORD, IDS), now, response_index=rng.randrange(3))
        verdict = host_handle_response(state, "alice", resp, now)
        frames += [frame_encode(m) for m in (LoginRequest("alice"), ch, resp, verdict)]
    blob = b"\n".join(frames)
    for ident in IDS:
        v = ident.value
        for i in range(len(v) - 2):
            assert v[i:i + 3] not in blob


@pytest.fixture
def server():
    state = make_state()
    clock = {"now": T0}
    srv = HostServer(("127.0.0.1", 0), state, clock=lambda: clock["now"])
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv, clock
    srv.shutdown()
    srv.server_close()


def test_loopback_login(server):
    srv, clock = server
    addr = srv.server_address
    assert login(addr, "alice", Credentials(PASSWORD, IDS), clock=lambda: T0).ok
    bad = login(addr, "alice", Credentials(b"Zz9!Zz9!Zz", IDS), clock=lambda: T0)
    assert bad == Verdict(False, Reason.BAD_CREDENTIALS)
    assert login(addr, "mallory", Credentials(PASSWORD, IDS)) == Verdict(False, Reason.UNKNOWN_USER)


def test_loopback_concurrent_users():
    store = StoreFile()
    for i in range(8):
        enroll(store, f"user{i}", PASSWORD, [Identifier("q", f"answer number {i}".encode())], SECRET, T0)
    state = HostState(store, SECRET)
    srv = HostServer(("127.0.0.1", 0), state, clock=lambda: T0, max_sessions=8)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    results = {}

    def client(i):
        creds = Credentials(PASSWORD, [Identifier("q", f"answer number {i}".encode())])
        results[i] = login(srv.server_address, f"user{i}", creds, clock=lambda: T0).ok

    workers = [threading.Thread(target=client, args=(i,)) for i in range(8)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    thread.join(timeout=5)
    srv.server_close()
    assert results == {i: True for i in range(8)}
    assert state.pending == {}
