"""Bit-insertion codec.

Every plaintext byte becomes an (8 + k)-bit block: k filler bits sit at
keystream-chosen slots of the block and the byte's own bits fill the
remaining slots in order, most significant first. k is 2 or 3, also
chosen by the keystream, so ciphertext length varies with the key.

Per byte the keystream supplies 1 bit for k, 8 bits for a rank that picks
the filler slots (rank mod C(8+k, k), unranked lexicographically), then k
filler bits. The 8-bit rank is slightly biased modulo 45 and 165.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache
from math import comb

from .errors import (
    BadCiphertextFormat,
    CiphertextTruncated,
    FillerMismatch,
    MalformedPadding,
    PlanMismatch,
)
from .fib_coding import fib_decode_bytes, fib_encode_bytes
from .keystream import KeySpec, make_stream

MAGIC = b"TEC1"
FLAG_FIB = 0x01
_HEADER = struct.Struct(">4sBQ")
RANK_BITS = 8


@dataclass(frozen=True)
class Insertion:
    k: int
    positions: tuple
    fillers: tuple

    def __post_init__(self):
        width = 8 + self.k
        if self.k not in (2, 3):
            raise ValueError(f"k must be 2 or 3, got {self.k}")
        if len(self.positions) != self.k or len(self.fillers) != self.k:
            raise ValueError("positions and fillers must both hold k entries")
        if list(self.positions) != sorted(set(self.positions)):
            raise ValueError("positions must be strictly increasing")
        if self.positions[0] < 0 or self.positions[-1] >= width:
            raise ValueError(f"positions must lie in [0, {width})")

    @property
    def width(self) -> int:
        return 8 + self.k


@dataclass(frozen=True)
class InsertionPlan:
    per_byte: tuple = ()

    def __len__(self):
        return len(self.per_byte)

    @property
    def total_inserted(self) -> int:
        return sum(ins.k for ins in self.per_byte)

    @property
    def bit_len(self) -> int:
        return sum(ins.width for ins in self.per_byte)


@dataclass(frozen=True)
class Ciphertext:
    """Bit-exact codec output; `payload` is zero-padded to a byte boundary."""

    payload: bytes
    bit_len: int

    @property
    def pad_bits(self) -> int:
        return (8 - self.bit_len % 8) % 8

    @property
    def bits(self) -> str:
        if not self.bit_len:
            return ""
        return format(int.from_bytes(self.payload, "big"), f"0{len(self.payload) * 8}b")[: self.bit_len]

    @classmethod
    def from_bits(cls, bits: str) -> "Ciphertext":
        return cls(_bits_to_bytes(bits), len(bits))


def _bits_to_bytes(bits: str) -> bytes:
    if not bits:
        return b""
    nbytes = (len(bits) + 7) // 8
    return int(bits.ljust(nbytes * 8, "0"), 2).to_bytes(nbytes, "big")


def pack_ciphertext(ct: Ciphertext, use_fib: bool = False) -> bytes:
    """Serialize as: "TEC1", flags byte, 8-byte bit length, payload."""
    return _HEADER.pack(MAGIC, FLAG_FIB if use_fib else 0, ct.bit_len) + ct.payload


def unpack_ciphertext(data: bytes):
    """Parse TEC1 framing; returns (Ciphertext, use_fib)."""
    if len(data) < _HEADER.size:
        raise BadCiphertextFormat("ciphertext header truncated")
    magic, flags, bit_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadCiphertextFormat(f"bad magic {magic!r}")
    if flags & ~FLAG_FIB:
        raise BadCiphertextFormat(f"unknown flag bits 0x{flags:02x}")
    payload = bytes(data[_HEADER.size:])
    if len(payload) != (bit_len + 7) // 8:
        raise BadCiphertextFormat(
            f"payload is {len(payload)} bytes, bit length {bit_len} needs {(bit_len + 7) // 8}"
        )
    return Ciphertext(payload, bit_len), bool(flags & FLAG_FIB)


def unrank_combination(rank: int, n: int, k: int) -> tuple:
    """The `rank`-th k-subset of range(n) in lexicographic order."""
    if not 0 <= rank < comb(n, k):
        raise ValueError(f"rank {rank} out of range for C({n}, {k})")
    out = []
    x = 0
    for i in range(k):
        while True:
            c = comb(n - x - 1, k - i - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def _symbol_table(k: int) -> tuple:
    # indexed by the rank bits followed by the k filler bits
    table = []
    for rank in range(1 << RANK_BITS):
        positions = unrank_combination(rank % comb(8 + k, k), 8 + k, k)
        for fill in range(1 << k):
            table.append(Insertion(k, positions, tuple(int(b) for b in format(fill, f"0{k}b"))))
    return tuple(table)


_SYMBOLS = {2: _symbol_table(2), 3: _symbol_table(3)}


def next_insertion(stream) -> Insertion:
    k = 2 + stream.read_uint(1)
    return _SYMBOLS[k][stream.read_uint(RANK_BITS + k)]


def plan_from_stream(stream, n_bytes: int) -> InsertionPlan:
    return InsertionPlan(tuple(next_insertion(stream) for _ in range(n_bytes)))


def plan_for_bit_len(stream, bit_len: int) -> InsertionPlan:
    """Draw insertions until their blocks cover exactly `bit_len` bits."""
    per_byte = []
    total = 0
    while total < bit_len:
        ins = next_insertion(stream)
        per_byte.append(ins)
        total += ins.width
    if total != bit_len:
        raise CiphertextTruncated(f"bit length {bit_len} does not match the keystream block layout")
    return InsertionPlan(tuple(per_byte))


@lru_cache(maxsize=None)
def data_slots(k: int, positions: tuple) -> tuple:
    return tuple(i for i in range(8 + k) if i not in positions)


def _build_block(byte: int, ins: Insertion) -> str:
    block = [""] * ins.width
    for pos, bit in zip(ins.positions, ins.fillers):
        block[pos] = "1" if bit else "0"
    for slot, bit in zip(data_slots(ins.k, ins.positions), format(byte, "08b")):
        block[slot] = bit
    return "".join(block)


@lru_cache(maxsize=None)
def _block_table(ins: Insertion) -> tuple:
    return tuple(_build_block(b, ins) for b in range(256))


@lru_cache(maxsize=None)
def _inverse_table(ins: Insertion) -> dict:
    # only blocks carrying the key's filler bits appear here
    return {block: b for b, block in enumerate(_block_table(ins))}


def encode_block(byte: int, ins: Insertion) -> str:
    return _block_table(ins)[byte]


def strip_block(block: str, k: int, positions: tuple) -> int:
    return int("".join(block[i] for i in data_slots(k, positions)), 2)


def encode(plaintext: bytes, plan: InsertionPlan) -> Ciphertext:
    if len(plaintext) != len(plan):
        raise PlanMismatch(f"plan covers {len(plan)} bytes, plaintext has {len(plaintext)}")
    return Ciphertext.from_bits("".join(_block_table(ins)[b] for b, ins in zip(plaintext, plan.per_byte)))


def decode(ct: Ciphertext, plan: InsertionPlan) -> bytes:
    if ct.bit_len != plan.bit_len:
        raise CiphertextTruncated(f"ciphertext holds {ct.bit_len} bits, plan expects {plan.bit_len}")
    if len(ct.payload) != (ct.bit_len + 7) // 8:
        raise CiphertextTruncated("payload length disagrees with bit length")
    if ct.pad_bits and ct.payload[-1] & ((1 << ct.pad_bits) - 1):
        raise MalformedPadding("non-zero padding bits")
    bits = ct.bits
    out = bytearray()
    offset = 0
    for i, ins in enumerate(plan.per_byte):
        width = ins.width
        # fillers are known to the key holder, so they double as an integrity check
        byte = _inverse_table(ins).get(bits[offset:offset + width])
        if byte is None:
            raise FillerMismatch(f"filler bits of block {i} do not match the key")
        out.append(byte)
        offset += width
    return bytes(out)


def _fib_pack(plaintext: bytes) -> bytes:
    return _bits_to_bytes(fib_encode_bytes(plaintext))


def seal(plaintext: bytes, spec: KeySpec, use_fib: bool = False, reserved_host_seeds=()) -> Ciphertext:
    data = _fib_pack(plaintext) if use_fib else bytes(plaintext)
    stream = make_stream(spec, reserved_host_seeds)
    return encode(data, plan_from_stream(stream, len(data)))


def unseal(ct: Ciphertext, spec: KeySpec, use_fib: bool = False, reserved_host_seeds=()) -> bytes:
    """Inverse of seal under the same spec and flag."""
    stream = make_stream(spec, reserved_host_seeds)
    data = decode(ct, plan_for_bit_len(stream, ct.bit_len))
    if not use_fib:
        return data
    bits = format(int.from_bytes(data, "big"), f"0{len(data) * 8}b") if data else ""
    return fib_decode_bytes(bits)
