import itertools
from math import comb

import mpmath
import pytest

from tec.keystream import TranscendentalBase

MP_CONSTANTS = {
    TranscendentalBase.PI: lambda: mpmath.mp.pi,
    TranscendentalBase.E: lambda: mpmath.mp.e,
    TranscendentalBase.LN2: lambda: mpmath.mp.ln2,
}


def oracle_bits(base, x, n):
    """First n binary digits of frac(x * T), straight from mpmath."""
    with mpmath.workprec(n + x.bit_length() + 96):
        v = x * MP_CONSTANTS[base]()
        frac = v - mpmath.floor(v)
        return format(int(mpmath.floor(frac * mpmath.mpf(2) ** n)), f"0{n}b")


def reference_seal_bits(plaintext, bits):
    """Naive re-derivation of the codec from a raw keystream bit string."""
    out = []
    pos = 0
    for byte in plaintext:
        k = 2 + int(bits[pos])
        rank = int(bits[pos + 1:pos + 9], 2)
        fillers = bits[pos + 9:pos + 9 + k]
        pos += 9 + k
        slots = list(itertools.combinations(range(8 + k), k))[rank % comb(8 + k, k)]
        data = iter(format(byte, "08b"))
        fill = iter(fillers)
        out.append("".join(next(fill) if i in slots else next(data) for i in range(8 + k)))
    return "".join(out), pos


@pytest.fixture
def pi_oracle():
    return lambda x, n: oracle_bits(TranscendentalBase.PI, x, n)


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
