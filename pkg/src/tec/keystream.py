"""Keystreams drawn from the binary expansion of frac(x * T).

T is one of a few fixed transcendental constants, evaluated with
fixed-point big-integer arithmetic, and x is a positive integer seed
usually derived from a user identifier and a timestamp.
"""

import enum
import threading
from dataclasses import dataclass

from .errors import InvalidSeed, InvalidSeedMaterial, PrecisionExhausted, ReservedSeed

DEFAULT_MIN_PRECISION_BITS = 4096
DEFAULT_MAX_PRECISION_BITS = 1 << 22
GUARD_BITS = 64
_TIMESTAMP_SPAN = 1 << 64


class TranscendentalBase(enum.Enum):
    PI = "pi"
    E = "e"
    LN2 = "ln2"

    @property
    def code(self) -> int:
        return _BASE_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "TranscendentalBase":
        for base, c in _BASE_CODES.items():
            if c == code:
                return base
        raise ValueError(f"unknown transcendental base code {code}")


_BASE_CODES = {TranscendentalBase.PI: 0, TranscendentalBase.E: 1, TranscendentalBase.LN2: 2}


def _atan_inv(n: int, one: int) -> int:
    """atan(1/n) scaled by `one`, by the alternating Gregory series."""
    n2 = n * n
    term = one // n
    total = term
    k = 1
    sign = -1
    while term:
        term //= n2
        k += 2
        total += sign * (term // k)
        sign = -sign
    return total


def _atanh_inv(n: int, one: int) -> int:
    n2 = n * n
    term = one // n
    total = term
    k = 1
    while term:
        term //= n2
        k += 2
        total += term // k
    return total


def _pi_scaled(one: int) -> int:
    # Machin: pi/4 = 4 atan(1/5) - atan(1/239)
    return 4 * (4 * _atan_inv(5, one) - _atan_inv(239, one))


def _e_scaled(one: int) -> int:
    total = 0
    term = one
    k = 0
    while term:
        total += term
        k += 1
        term //= k
    return total


def _ln2_scaled(one: int) -> int:
    # ln 2 = 2 atanh(1/3)
    return 2 * _atanh_inv(3, one)


_SERIES = {
    TranscendentalBase.PI: _pi_scaled,
    TranscendentalBase.E: _e_scaled,
    TranscendentalBase.LN2: _ln2_scaled,
}

_constant_cache: dict = {}
_constant_lock = threading.Lock()


def constant_fixed(base: TranscendentalBase, bits: int) -> int:
    """Return T * 2**bits truncated to an integer, accurate to within 2 units.

    Results are cached at the highest precision computed so far; lower
    precisions are served by shifting the cached value.
    """
    with _constant_lock:
        cached = _constant_cache.get(base)
        if cached is not None and cached[0] >= bits:
            have_bits, value = cached
            return value >> (have_bits - bits)
    # series truncation error grows with the term count; the extra bits absorb it
    inner = bits + bits.bit_length() + 16
    value = _SERIES[base](1 << inner) >> (inner - bits)
    with _constant_lock:
        cached = _constant_cache.get(base)
        if cached is None or cached[0] < bits:
            _constant_cache[base] = (bits, value)
    return value


@dataclass(frozen=True)
class KeySpec:
    base: TranscendentalBase
    seed_x: int
    min_precision_bits: int = DEFAULT_MIN_PRECISION_BITS

    def __post_init__(self):
        if not isinstance(self.seed_x, int) or isinstance(self.seed_x, bool):
            raise InvalidSeed("seed must be an integer")
        if self.seed_x < 0:
            raise InvalidSeed("seed must be non-negative")
        if self.min_precision_bits < 1:
            raise ValueError("min_precision_bits must be positive")


def derive_seed(identifier: bytes, timestamp_ms: int) -> int:
    """Combine an identifier and a millisecond timestamp into one seed.

    The identifier bytes, read as a big-endian integer B, occupy the high
    part: x = B * 2**64 + timestamp_ms.
    """
    if not identifier:
        raise InvalidSeedMaterial("identifier must be non-empty")
    if not 0 <= timestamp_ms < _TIMESTAMP_SPAN:
        raise InvalidSeedMaterial(f"timestamp out of range: {timestamp_ms}")
    return int.from_bytes(identifier, "big") * _TIMESTAMP_SPAN + timestamp_ms


class DigitStream:
    """Sequential reader over the fractional binary digits of frac(x * T).

    Only bits backed by GUARD_BITS of margin above the arithmetic error are
    ever issued. When a read runs past the computed digits the expansion is
    recomputed at (at least) twice the precision and the old prefix is
    checked against the new one.
    """

    def __init__(self, spec: KeySpec, max_precision_bits: int = DEFAULT_MAX_PRECISION_BITS):
        self.spec = spec
        self.max_precision_bits = max_precision_bits
        self.cursor = 0
        self._digits = ""
        self._extend(spec.min_precision_bits)

    @property
    def cached_precision(self) -> int:
        return len(self._digits)

    def _extend(self, needed: int) -> None:
        x = self.spec.seed_x
        target = max(needed, self.spec.min_precision_bits, 2 * len(self._digits))
        while True:
            if target > self.max_precision_bits:
                raise PrecisionExhausted(
                    f"{target} keystream bits requested, limit is {self.max_precision_bits}"
                )
            # x * error(T) stays below 2**(x.bit_length() + 1) units
            low = x.bit_length() + 1 + GUARD_BITS
            precision = target + low
            frac = (x * constant_fixed(self.spec.base, precision)) & ((1 << precision) - 1)
            guard = (frac >> (low - GUARD_BITS)) & ((1 << GUARD_BITS) - 1)
            if guard not in (0, (1 << GUARD_BITS) - 1):
                break
            # a carry out of the error region could still reach the issued bits
            target *= 2
        digits = format(frac >> low, f"0{target}b")
        if not digits.startswith(self._digits):
            raise PrecisionExhausted("keystream digits changed under precision extension")
        self._digits = digits

    def next_bitstring(self, count: int) -> str:
        if count < 1:
            raise ValueError(f"bit count must be positive, got {count}")
        end = self.cursor + count
        if end > len(self._digits):
            self._extend(end)
        out = self._digits[self.cursor:end]
        self.cursor = end
        return out

    def next_bits(self, count: int) -> list:
        return [1 if c == "1" else 0 for c in self.next_bitstring(count)]

    def read_uint(self, count: int) -> int:
        """Read `count` bits as an unsigned big-endian integer."""
        return int(self.next_bitstring(count), 2)

    def rewind(self) -> None:
        self.cursor = 0


def make_stream(spec: KeySpec, reserved_host_seeds=(), max_precision_bits: int = DEFAULT_MAX_PRECISION_BITS):
    """Open a stream at bit offset 0 for `spec`.

    Pass the host's own seeds as `reserved_host_seeds` when building a
    stream for a user role; a user spec may never reuse a host seed.
    """
    x = spec.seed_x
    if x < 1:
        raise InvalidSeed("seed must be at least 1")
    if x in reserved_host_seeds:
        raise ReservedSeed("seed is reserved for the host")
    # an integer can never equal the irrational T, -T or 1/T, so those
    # exclusions hold by construction
    assert isinstance(x, int)
    return DigitStream(spec, max_precision_bits=max_precision_bits)
