"""Attack harness: try-count models, exhaustive candidate enumeration,
false-positive measurement, dictionary attacks and password policy."""

import enum
import itertools
import re
from dataclasses import dataclass, field
from math import comb

from .errors import FibDecodeError, NotDecodable
from .fib_coding import fib_decode_bytes
from .keystream import make_stream
from .stego_codec import Ciphertext, seal, strip_block

MAX_ENUM_BYTES = 3
# number of distinct filler-slot sets when k is unknown: C(10,2) + C(11,3)
POSITION_SETS_PER_BYTE = comb(10, 2) + comb(11, 3)


class TryCountModel(enum.Enum):
    PAPER_MIN = "exponential-min"
    PAPER_MAX = "exponential-max"
    EXACT_POSITIONS = "exact-positions"


def paper_try_count(n_chars: int, model: TryCountModel, plan=None) -> int:
    """Brute-force tries for an n-character message under `model`.

    PAPER_MIN and PAPER_MAX are 4**n and 8**n. EXACT_POSITIONS counts the
    filler-slot sets an attacker must try: the product of C(8+k, k) over a
    known plan, or 210**n when k is unknown per byte.
    """
    if n_chars < 0:
        raise ValueError("n_chars must be non-negative")
    if model is TryCountModel.PAPER_MIN:
        return (2 ** 2) ** n_chars
    if model is TryCountModel.PAPER_MAX:
        return (2 ** 3) ** n_chars
    if plan is None:
        return POSITION_SETS_PER_BYTE ** n_chars
    if len(plan) != n_chars:
        raise ValueError(f"plan covers {len(plan)} bytes, expected {n_chars}")
    total = 1
    for ins in plan.per_byte:
        total *= comb(8 + ins.k, ins.k)
    return total


def multiplicative_try_count(n_chars: int, tries_per_byte: int = 4) -> int:
    """The product reading tries_per_byte * n, printed next to the exponential one."""
    return tries_per_byte * n_chars


@dataclass
class CandidateSet:
    candidates: tuple
    enumerated: int
    undecodable: int = 0

    def __contains__(self, item):
        return item in self.candidates

    def __len__(self):
        return len(self.candidates)


def k_assignments(n_bytes: int, bit_len: int):
    """All (k_1..k_n) with k_i in {2, 3} whose blocks total bit_len bits."""
    return [ks for ks in itertools.product((2, 3), repeat=n_bytes) if sum(8 + k for k in ks) == bit_len]


def infer_n_bytes(bit_len: int) -> int:
    for n in range(MAX_ENUM_BYTES + 1):
        if 10 * n <= bit_len <= 11 * n:
            return n
    raise NotDecodable(f"bit length {bit_len} fits no block layout of at most {MAX_ENUM_BYTES} bytes")


def enumerate_candidates(ct: Ciphertext, n_bytes=None, use_fib: bool = False) -> CandidateSet:
    """Strip every possible filler-slot choice from `ct` and collect the results.

    `enumerated` counts decode attempts before deduplication; candidates come
    back sorted.
    """
    if n_bytes is None:
        n_bytes = infer_n_bytes(ct.bit_len)
    if not 0 <= n_bytes <= MAX_ENUM_BYTES:
        raise ValueError(f"enumeration is limited to {MAX_ENUM_BYTES} bytes")
    assignments = k_assignments(n_bytes, ct.bit_len)
    if not assignments:
        raise NotDecodable(f"no k-assignment of {n_bytes} bytes gives {ct.bit_len} bits")
    bits = ct.bits
    found = set()
    attempts = 0
    undecodable = 0
    for ks in assignments:
        per_block = []
        offset = 0
        for k in ks:
            block = bits[offset:offset + 8 + k]
            per_block.append([strip_block(block, k, pos) for pos in itertools.combinations(range(8 + k), k)])
            offset += 8 + k
        for combo in itertools.product(*per_block):
            attempts += 1
            data = bytes(combo)
            if use_fib:
                try:
                    data = fib_decode_bytes(format(int.from_bytes(data, "big"), f"0{8 * len(data)}b") if data else "")
                except FibDecodeError:
                    undecodable += 1
                    continue
            found.add(data)
    return CandidateSet(tuple(sorted(found)), attempts, undecodable)


def _printable_ascii(candidate: bytes) -> bool:
    return all(0x20 <= b <= 0x7E for b in candidate)


VALIDATORS = ("printable_ascii", "wordlist")


@dataclass
class FalsePositiveReport:
    total: int
    valid: int
    contains_truth: bool

    @property
    def ambiguous(self) -> bool:
        return self.valid > 1


def false_positive_report(cs: CandidateSet, validator: str = "printable_ascii", wordlist=None, truth=None):
    """Count candidates that look like plausible plaintext.

    `contains_truth` is set when `truth` is given and passes the validator
    among the candidates.
    """
    if validator == "printable_ascii":
        accept = _printable_ascii
    elif validator == "wordlist":
        words = set(wordlist or ())
        accept = words.__contains__
    else:
        raise ValueError(f"unknown validator {validator!r}; choose from {VALIDATORS}")
    valid = [c for c in cs.candidates if accept(c)]
    contains = truth is not None and truth in valid
    return FalsePositiveReport(len(cs.candidates), len(valid), contains)


def dictionary_attack(record, wordlist, spec_hypotheses):
    """Seal each word under each hypothesised spec; return bit-exact matches."""
    target = record.ciphertext
    matches = []
    for spec in spec_hypotheses:
        for word in wordlist:
            if not record.use_fib and not 10 * len(word) <= target.bit_len <= 11 * len(word):
                continue
            if seal(word, spec, record.use_fib) == target:
                matches.append((word, spec))
    return matches


def read_wordlist(path) -> list:
    """Newline-delimited raw bytes, one candidate per line; blank lines skipped."""
    with open(path, "rb") as fh:
        return [line.rstrip(b"\r\n") for line in fh if line.rstrip(b"\r\n")]


@dataclass
class PasswordPolicy:
    min_len: int = 8
    max_len: int = 64
    require_upper: bool = True
    require_lower: bool = True
    require_digit: bool = True
    require_special: bool = True
    banned_substrings: list = field(default_factory=list)
    # runs this long look like dates or phone numbers; None disables
    max_digit_run: int = 6

    def __post_init__(self):
        if self.min_len > self.max_len:
            raise ValueError("min_len exceeds max_len")


DEFAULT_POLICY = PasswordPolicy()


def check_policy(password: bytes, policy: PasswordPolicy = DEFAULT_POLICY) -> list:
    """Return the list of rules `password` breaks; empty means compliant.

    All 256 byte values are allowed; anything that is not an ASCII letter
    or digit counts as a special character.
    """
    violations = []
    if len(password) < policy.min_len:
        violations.append(f"too_short(<{policy.min_len})")
    if len(password) > policy.max_len:
        violations.append(f"too_long(>{policy.max_len})")
    if policy.require_upper and not any(0x41 <= b <= 0x5A for b in password):
        violations.append("missing_upper")
    if policy.require_lower and not any(0x61 <= b <= 0x7A for b in password):
        violations.append("missing_lower")
    if policy.require_digit and not any(0x30 <= b <= 0x39 for b in password):
        violations.append("missing_digit")
    if policy.require_special and all(bytes([b]).isalnum() for b in password):
        violations.append("missing_special")
    lowered = password.lower()
    for banned in policy.banned_substrings:
        if banned and banned.lower() in lowered:
            violations.append(f"banned_substring({banned.decode('latin-1')})")
    if policy.max_digit_run and re.search(rb"[0-9]{%d,}" % policy.max_digit_run, password):
        violations.append(f"digit_run(>={policy.max_digit_run})")
    return violations


@dataclass
class DigitDistribution:
    n_bits: int
    zeros: int
    ones: int
    chi_square: float


def digit_distribution(spec, n_bits: int) -> DigitDistribution:
    """0/1 counts over the first n_bits keystream bits and their chi-square
    against the uniform distribution (one degree of freedom). Diagnostic only."""
    if n_bits < 1000:
        raise ValueError("digit_distribution needs at least 1000 bits")
    ones = make_stream(spec).next_bitstring(n_bits).count("1")
    zeros = n_bits - ones
    expected = n_bits / 2
    chi = ((zeros - expected) ** 2 + (ones - expected) ** 2) / expected
    return DigitDistribution(n_bits, zeros, ones, chi)
