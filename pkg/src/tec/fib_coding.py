"""Fibonacci (Zeckendorf) universal code for byte values.

Codewords list Zeckendorf digits lowest Fibonacci number first and end
with an extra 1, so every codeword ends in "11" and holds no other "11".
Bytes are shifted by +1 before coding since the code has no zero.
"""

from .errors import FibDecodeError, ValueOutOfRange

MAX_VALUE = 257


def _fib_table(limit):
    fib = [1, 2]
    while fib[-1] <= limit:
        fib.append(fib[-1] + fib[-2])
    return tuple(fib)


# F(2)=1, F(3)=2, ... past MAX_VALUE
FIB = _fib_table(MAX_VALUE)


def fib_encode_value(v: int) -> str:
    if not 1 <= v <= MAX_VALUE:
        raise ValueOutOfRange(f"value {v} outside [1, {MAX_VALUE}]")
    top = max(i for i, f in enumerate(FIB) if f <= v)
    digits = ["0"] * (top + 1)
    rest = v
    for i in range(top, -1, -1):
        if FIB[i] <= rest:
            digits[i] = "1"
            rest -= FIB[i]
    return "".join(digits) + "1"


_CODEWORDS = {v: fib_encode_value(v) for v in range(1, MAX_VALUE + 1)}


def fib_decode_value(codeword: str) -> int:
    """Inverse of fib_encode_value; `codeword` includes its terminating 1."""
    if len(codeword) < 2 or not codeword.endswith("11"):
        raise FibDecodeError(f"not a Fibonacci codeword: {codeword!r}")
    body = codeword[:-1]
    if len(body) > len(FIB):
        raise FibDecodeError("codeword too long")
    return sum(FIB[i] for i, c in enumerate(body) if c == "1")


def fib_encode_bytes(data: bytes) -> str:
    return "".join(_CODEWORDS[b + 1] for b in data)


def fib_decode_bytes(bits: str) -> bytes:
    """Decode a concatenation of codewords; a trailing run of zeros is padding."""
    out = bytearray()
    start = 0
    prev = "0"
    for i, c in enumerate(bits):
        if c not in "01":
            raise FibDecodeError(f"invalid bit character {c!r}")
        if c == "1" and prev == "1":
            value = fib_decode_value(bits[start:i + 1])
            if value > 256:
                raise FibDecodeError(f"decoded value {value} exceeds byte range")
            out.append(value - 1)
            start = i + 1
            prev = "0"
            continue
        prev = c
    if "1" in bits[start:]:
        raise FibDecodeError("trailing partial codeword")
    return bytes(out)
