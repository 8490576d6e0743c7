"""Host-side password file.

Each record keeps the user's identifiers in the clear (the host needs them
to build login challenges) and the password sealed under a host key. The
host key seed is derive_seed(identifier[index], enroll_ts) * 2**64 plus the
low 64 bits of the host secret; the secret itself never enters the file.

File layout (big-endian): b"TECP", version byte, 4-byte record count, then
per record
    username        u16 length + UTF-8
    base            u8 transcendental code
    use_fib         u8
    identifier idx  u16
    enroll ts (ms)  u64
    identifiers     u16 count, each: label (u16 + UTF-8), value (u16 + bytes)
    ciphertext      u16 length + TEC1-framed ciphertext
"""

import hmac
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .cryptanalysis import DEFAULT_POLICY, check_policy
from .errors import (
    DuplicateUser,
    NoIdentifiers,
    PolicyViolation,
    StoreCorrupt,
    TecError,
    UnknownUser,
)
from .keystream import KeySpec, TranscendentalBase, derive_seed
from .stego_codec import Ciphertext, pack_ciphertext, seal, unpack_ciphertext, unseal

MAGIC = b"TECP"
VERSION = 1
HOST_SECRET_ENV = "TEC_HOST_SECRET"
_SECRET_SPAN = 1 << 64


@dataclass(frozen=True)
class Identifier:
    label: str
    value: bytes

    def __post_init__(self):
        if not self.value:
            raise ValueError(f"identifier {self.label!r} has an empty value")


@dataclass
class UserRecord:
    username: str
    identifiers: list
    enroll_identifier_index: int
    enroll_timestamp_ms: int
    ciphertext: Ciphertext
    use_fib: bool = False
    base: TranscendentalBase = TranscendentalBase.PI


@dataclass
class StoreFile:
    version: int = VERSION
    records: list = field(default_factory=list)

    def get(self, username: str) -> UserRecord:
        for rec in self.records:
            if rec.username == username:
                return rec
        raise UnknownUser(f"unknown user {username!r}")

    def __contains__(self, username):
        return any(rec.username == username for rec in self.records)


def host_seed(identifier_value: bytes, timestamp_ms: int, host_secret: int) -> int:
    return derive_seed(identifier_value, timestamp_ms) * _SECRET_SPAN + host_secret % _SECRET_SPAN


def host_spec(record: UserRecord, host_secret: int) -> KeySpec:
    ident = record.identifiers[record.enroll_identifier_index]
    return KeySpec(record.base, host_seed(ident.value, record.enroll_timestamp_ms, host_secret))


def host_seeds(store: StoreFile, host_secret: int) -> frozenset:
    """Seeds the host uses for its own records; user specs must avoid them."""
    return frozenset(host_spec(rec, host_secret).seed_x for rec in store.records)


def enroll(store, username, password, identifiers, host_secret, now_ms,
           use_fib=False, policy=DEFAULT_POLICY, base=TranscendentalBase.PI) -> UserRecord:
    if username in store:
        raise DuplicateUser(f"user {username!r} already enrolled")
    identifiers = list(identifiers)
    if not identifiers:
        raise NoIdentifiers("at least one identifier is required")
    labels = [i.label for i in identifiers]
    if len(set(labels)) != len(labels):
        raise ValueError("identifier labels must be unique")
    violations = check_policy(password, policy)
    if violations:
        raise PolicyViolation(violations)
    spec = KeySpec(base, host_seed(identifiers[0].value, now_ms, host_secret))
    record = UserRecord(username, identifiers, 0, now_ms, seal(password, spec, use_fib), use_fib, base)
    store.records.append(record)
    return record


def stored_password(store, username, host_secret) -> bytes:
    """Unseal a user's stored password with the host key."""
    record = store.get(username)
    try:
        return unseal(record.ciphertext, host_spec(record, host_secret), record.use_fib)
    except TecError as exc:
        raise StoreCorrupt(
            f"ciphertext for {username!r} does not decode under the host key "
            f"(corrupt record or wrong host secret): {exc}"
        ) from exc


def verify_stored(store, username, candidate: bytes, host_secret) -> bool:
    return hmac.compare_digest(stored_password(store, username, host_secret), bytes(candidate))


def host_secret_from_env(environ=None) -> int:
    environ = os.environ if environ is None else environ
    raw = environ.get(HOST_SECRET_ENV)
    if raw is None:
        raise KeyError(f"{HOST_SECRET_ENV} is not set")
    return int(raw, 10)


def _put_bytes(out: bytearray, data: bytes) -> None:
    if len(data) > 0xFFFF:
        raise ValueError("field longer than 65535 bytes")
    out += struct.pack(">H", len(data)) + data


def dumps(store: StoreFile) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack(">BI", store.version, len(store.records))
    for rec in store.records:
        _put_bytes(out, rec.username.encode("utf-8"))
        out += struct.pack(">BBHQH", rec.base.code, int(rec.use_fib), rec.enroll_identifier_index,
                           rec.enroll_timestamp_ms, len(rec.identifiers))
        for ident in rec.identifiers:
            _put_bytes(out, ident.label.encode("utf-8"))
            _put_bytes(out, ident.value)
        _put_bytes(out, pack_ciphertext(rec.ciphertext, rec.use_fib))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise StoreCorrupt("store file truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def field(self) -> bytes:
        (n,) = self.unpack(">H")
        return self.take(n)


def loads(data: bytes) -> StoreFile:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise StoreCorrupt("bad store magic")
    version, count = r.unpack(">BI")
    if version != VERSION:
        raise StoreCorrupt(f"unsupported store version {version}")
    store = StoreFile(version)
    try:
        for _ in range(count):
            username = r.field().decode("utf-8")
            base_code, use_fib, index, ts, n_ids = r.unpack(">BBHQH")
            idents = [Identifier(r.field().decode("utf-8"), r.field()) for _ in range(n_ids)]
            ct, _ = unpack_ciphertext(r.field())
            if not idents or index >= len(idents) or use_fib > 1:
                raise StoreCorrupt(f"inconsistent record for {username!r}")
            store.records.append(UserRecord(username, idents, index, ts, ct, bool(use_fib),
                                            TranscendentalBase.from_code(base_code)))
    except (UnicodeDecodeError, ValueError) as exc:
        raise StoreCorrupt(str(exc)) from exc
    if r.pos != len(data):
        raise StoreCorrupt("trailing bytes after last record")
    names = [rec.username for rec in store.records]
    if len(set(names)) != len(names):
        raise StoreCorrupt("duplicate usernames")
    return store


def save(store: StoreFile, path) -> None:
    """Write atomically: a temp file in the same directory, then rename."""
    path = Path(path)
    data = dumps(store)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path) -> StoreFile:
    return loads(Path(path).read_bytes())
