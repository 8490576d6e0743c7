"""Command-line entry point.

Exit status: 0 success, 1 domain error (message on stderr), 2 usage error.
"""

import argparse
import csv
import sys
from pathlib import Path

from . import __version__
from .cryptanalysis import (
    PasswordPolicy,
    TryCountModel,
    check_policy,
    dictionary_attack,
    digit_distribution,
    enumerate_candidates,
    false_positive_report,
    multiplicative_try_count,
    paper_try_count,
    read_wordlist,
)
from .errors import TecError
from .keystream import DEFAULT_MIN_PRECISION_BITS, KeySpec, TranscendentalBase, derive_seed, make_stream
from .password_store import (
    HOST_SECRET_ENV,
    Identifier,
    StoreFile,
    enroll,
    host_secret_from_env,
    load,
    save,
    verify_stored,
)
from .protocol import Credentials, HostServer, HostState, ProtocolConfig, login, wall_clock_ms
from .stego_codec import pack_ciphertext, seal, unpack_ciphertext, unseal

BASES = {b.value: b for b in TranscendentalBase}


class UsageError(Exception):
    pass


def _add_key_args(p):
    p.add_argument("--base", choices=sorted(BASES), default="pi", help="transcendental constant (default pi)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--seed", type=int, help="seed x as a decimal integer")
    src.add_argument("--identifier", help="derive the seed from this identifier (UTF-8) and --ts")
    p.add_argument("--ts", type=int, default=0, help="timestamp in ms for --identifier (default 0)")
    p.add_argument("--min-precision", type=int, default=DEFAULT_MIN_PRECISION_BITS,
                   help=f"minimum keystream precision in bits (default {DEFAULT_MIN_PRECISION_BITS})")


def _key_spec(args) -> KeySpec:
    if args.identifier is not None:
        seed = derive_seed(args.identifier.encode("utf-8"), args.ts)
    else:
        seed = args.seed
    return KeySpec(BASES[args.base], seed, args.min_precision)


def _add_password_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--password", help="password as UTF-8 text")
    g.add_argument("--password-hex", help="password as hex (any byte values)")


def _password(args) -> bytes:
    if args.password_hex is not None:
        return bytes.fromhex(args.password_hex)
    return args.password.encode("utf-8")


def _answers(values):
    out = []
    for item in values or ():
        label, sep, value = item.partition("=")
        if not sep or not value:
            raise UsageError(f"--answer expects LABEL=VALUE, got {item!r}")
        out.append(Identifier(label, value.encode("utf-8")))
    return out


def _address(text):
    host, sep, port = text.rpartition(":")
    if not sep:
        raise UsageError(f"address must be HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _host_secret(args) -> int:
    if getattr(args, "host_secret_file", None):
        return int(Path(args.host_secret_file).read_text().strip(), 10)
    try:
        return host_secret_from_env()
    except KeyError:
        raise UsageError(f"host secret missing: set {HOST_SECRET_ENV} or pass --host-secret-file") from None


def _clock(args):
    if args.now_ms is not None:
        return lambda: args.now_ms
    return wall_clock_ms


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_keygen(args):
    stream = make_stream(_key_spec(args))
    bits = stream.next_bitstring(args.bits)
    if args.format == "hex":
        print(format(int(bits, 2), f"0{(args.bits + 3) // 4}x"))
    else:
        print(bits)


def cmd_encode(args):
    data = Path(args.input).read_bytes()
    ct = seal(data, _key_spec(args), args.fib)
    Path(args.output).write_bytes(pack_ciphertext(ct, args.fib))
    print(f"plaintext_bytes\t{len(data)}\nbit_len\t{ct.bit_len}\npad_bits\t{ct.pad_bits}")


def cmd_decode(args):
    ct, use_fib = unpack_ciphertext(Path(args.input).read_bytes())
    Path(args.output).write_bytes(unseal(ct, _key_spec(args), use_fib))


def cmd_enroll(args):
    path = Path(args.store)
    store = load(path) if path.exists() else StoreFile()
    now = args.now_ms if args.now_ms is not None else wall_clock_ms()
    rec = enroll(store, args.username, _password(args), _answers(args.answer), _host_secret(args), now,
                 use_fib=args.fib, base=BASES[args.base])
    save(store, path)
    print(f"enrolled\t{rec.username}\tbit_len\t{rec.ciphertext.bit_len}")


def cmd_verify(args):
    ok = verify_stored(load(args.store), args.username, _password(args), _host_secret(args))
    print("match" if ok else "mismatch")
    return 0 if ok else 1


def _protocol_config(args):
    return ProtocolConfig(t_a_ms=args.t_a_ms, tokenless_mode=args.tokenless, use_fib=args.fib,
                          base=BASES[args.base])


def cmd_serve(args):
    state = HostState(load(args.store), _host_secret(args), _protocol_config(args))
    server = HostServer(_address(args.listen), state, clock=_clock(args), max_sessions=args.max_sessions)
    host, port = server.server_address[:2]
    if args.port_file:
        Path(args.port_file).write_text(f"{port}\n")
    print(f"listening\t{host}:{port}", flush=True)
    with server:
        server.serve_forever()


def cmd_login(args):
    creds = Credentials(_password(args), _answers(args.answer))
    if not creds.identifiers:
        raise UsageError("login needs at least one --answer")
    verdict = login(_address(args.connect), args.username, creds, _protocol_config(args),
                    clock=_clock(args), response_index=args.response_index)
    print(f"verdict\t{'accept' if verdict.ok else 'reject'}\t{verdict.reason.name}")
    return 0 if verdict.ok else 1


def cmd_attack_brute(args):
    ct, use_fib = unpack_ciphertext(Path(args.input).read_bytes())
    cs = enumerate_candidates(ct, args.n_bytes, use_fib)
    words = read_wordlist(args.wordlist) if args.wordlist else None
    if args.validator == "wordlist" and words is None:
        raise UsageError("--validator wordlist needs --wordlist")
    report = false_positive_report(cs, args.validator, words)
    print(f"bit_len\t{ct.bit_len}\nenumerated\t{cs.enumerated}\ndistinct\t{report.total}\n"
          f"valid\t{report.valid}\nambiguous\t{report.ambiguous}")
    if args.show:
        for c in cs.candidates:
            print(f"candidate\t{c.hex()}")
    if args.csv:
        _write_csv(args.csv, ["candidate_hex", "printable"],
                   [(c.hex(), int(all(0x20 <= b <= 0x7E for b in c))) for c in cs.candidates])
    if args.figure:
        from .plotting import plot_candidates
        plot_candidates([(Path(args.input).name, cs.enumerated, report.total, report.valid)], args.figure)


def cmd_attack_dict(args):
    record = load(args.store).get(args.username)
    specs = [KeySpec(BASES[args.base], s) for s in args.seed]
    matches = dictionary_attack(record, read_wordlist(args.wordlist), specs)
    for word, spec in matches:
        print(f"match\t{word.hex()}\t{spec.seed_x}")
    print(f"matches\t{len(matches)}")
    if args.csv:
        _write_csv(args.csv, ["word_hex", "seed"], [(w.hex(), s.seed_x) for w, s in matches])
    return 0


def cmd_trycount(args):
    n = args.n_chars
    lo = paper_try_count(n, TryCountModel.PAPER_MIN)
    hi = paper_try_count(n, TryCountModel.PAPER_MAX)
    exact = paper_try_count(n, TryCountModel.EXACT_POSITIONS)
    rows = [
        ("exponential_min", f"2^{2 * n}", lo),
        ("exponential_max", f"2^{3 * n}", hi),
        ("exact_positions", f"210^{n}", exact),
        ("multiplicative_min", f"(2^2)*{n}", multiplicative_try_count(n, 4)),
        ("multiplicative_max", f"(2^3)*{n}", multiplicative_try_count(n, 8)),
    ]
    print(f"n_chars\t{n}")
    for name, expr, value in rows:
        print(f"{name}\t{expr}\t{value}")
    if args.csv:
        _write_csv(args.csv, ["model", "expression", "tries"], rows)
    if args.figure:
        from .plotting import plot_try_counts
        plot_try_counts(max(n, 1), args.figure, mark=n)


def cmd_policy(args):
    pw = bytes.fromhex(args.password) if args.hex else args.password.encode("utf-8")
    policy = PasswordPolicy(min_len=args.min_len, max_len=args.max_len,
                            banned_substrings=[b.encode("utf-8") for b in args.ban or ()])
    violations = check_policy(pw, policy)
    for v in violations:
        print(f"violation\t{v}")
    print("compliant" if not violations else f"violations\t{len(violations)}")
    return 0 if not violations else 1


def cmd_digits(args):
    spec = _key_spec(args)
    dist = digit_distribution(spec, args.bits)
    print(f"n_bits\t{dist.n_bits}\nzeros\t{dist.zeros}\nones\t{dist.ones}\nchi_square\t{dist.chi_square:.6f}")
    if args.csv:
        _write_csv(args.csv, ["n_bits", "zeros", "ones", "chi_square"],
                   [(dist.n_bits, dist.zeros, dist.ones, f"{dist.chi_square:.6f}")])
    if args.figure:
        from .plotting import plot_digit_balance
        plot_digit_balance(make_stream(spec).next_bitstring(args.bits), args.figure,
                           title=f"{spec.base.value}, x={spec.seed_x}")


def _add_protocol_args(p):
    p.add_argument("--base", choices=sorted(BASES), default="pi")
    p.add_argument("--t-a-ms", type=int, default=30_000, help="login window in ms (default 30000)")
    p.add_argument("--tokenless", action="store_true", help="responses omit the identifier token")
    p.add_argument("--fib", action="store_true", help="apply the Fibonacci coding layer")
    p.add_argument("--now-ms", type=int, help="fixed clock value in ms, for reproducible runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tec",
        description="Bit-insertion codec with transcendental keystreams, password store and login protocol.",
        epilog=f"The host secret is read from ${HOST_SECRET_ENV} (decimal integer) unless --host-secret-file is given.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("keygen", help="print the first keystream bits for a key")
    _add_key_args(p)
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--format", choices=("bits", "hex"), default="bits")
    p.set_defaults(func=cmd_keygen)

    for name, func, helptext in (("encode", cmd_encode, "seal a file into TEC1 format"),
                                 ("decode", cmd_decode, "open a TEC1 file")):
        p = sub.add_parser(name, help=helptext)
        _add_key_args(p)
        p.add_argument("-i", "--input", required=True)
        p.add_argument("-o", "--output", required=True)
        if name == "encode":
            p.add_argument("--fib", action="store_true", help="apply the Fibonacci coding layer first")
        p.set_defaults(func=func)

    p = sub.add_parser("enroll", help="add a user to a TECP password store")
    p.add_argument("--store", required=True)
    p.add_argument("--username", required=True)
    _add_password_args(p)
    p.add_argument("--answer", action="append", required=True, metavar="LABEL=VALUE",
                   help="identifier (security answer); repeatable")
    p.add_argument("--fib", action="store_true")
    p.add_argument("--base", choices=sorted(BASES), default="pi")
    p.add_argument("--now-ms", type=int)
    p.add_argument("--host-secret-file")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="check a password against the store")
    p.add_argument("--store", required=True)
    p.add_argument("--username", required=True)
    _add_password_args(p)
    p.add_argument("--host-secret-file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="run the host login endpoint")
    p.add_argument("--store", required=True)
    p.add_argument("--listen", default="127.0.0.1:7878", metavar="HOST:PORT")
    p.add_argument("--max-sessions", type=int, help="exit after this many sessions")
    p.add_argument("--port-file", help="write the bound port here (useful with port 0)")
    p.add_argument("--host-secret-file")
    _add_protocol_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("login", help="perform a login against a running host")
    p.add_argument("--connect", default="127.0.0.1:7878", metavar="HOST:PORT")
    p.add_argument("--username", required=True)
    _add_password_args(p)
    p.add_argument("--answer", action="append", metavar="LABEL=VALUE", help="identifier; repeatable, in enrollment order")
    p.add_argument("--response-index", type=int, help="identifier index for the response (default: challenge token)")
    _add_protocol_args(p)
    p.set_defaults(func=cmd_login)

    p = sub.add_parser("attack", help="run an attack")
    attack = p.add_subparsers(dest="attack", required=True, metavar="KIND")
    b = attack.add_parser("brute", help="enumerate every filler-slot choice for a short ciphertext",
                          description="CSV columns: candidate_hex, printable (1 if all bytes 0x20-0x7e).")
    b.add_argument("-i", "--input", required=True, help="TEC1 ciphertext of at most 3 bytes")
    b.add_argument("--n-bytes", type=int, help="plaintext length (inferred from bit length if omitted)")
    b.add_argument("--validator", choices=("printable_ascii", "wordlist"), default="printable_ascii")
    b.add_argument("--wordlist")
    b.add_argument("--show", action="store_true", help="list every candidate")
    b.add_argument("--csv")
    b.add_argument("--figure", help="write a bar chart (png/pdf/svg)")
    b.set_defaults(func=cmd_attack_brute)
    d = attack.add_parser("dict", help="seal wordlist entries under hypothesised seeds",
                          description="CSV columns: word_hex, seed.")
    d.add_argument("--store", required=True)
    d.add_argument("--username", required=True)
    d.add_argument("--wordlist", required=True)
    d.add_argument("--seed", type=int, action="append", required=True, help="hypothesised seed; repeatable")
    d.add_argument("--base", choices=sorted(BASES), default="pi")
    d.add_argument("--csv")
    d.set_defaults(func=cmd_attack_dict)

    p = sub.add_parser("trycount", help="brute-force try counts for an n-character message",
                       description="CSV columns: model, expression, tries.")
    p.add_argument("n_chars", type=int)
    p.add_argument("--csv")
    p.add_argument("--figure", help="plot log2(tries) for lengths 0..n")
    p.set_defaults(func=cmd_trycount)

    p = sub.add_parser("policy", help="check a password against the selection policy")
    p.add_argument("password")
    p.add_argument("--hex", action="store_true", help="password argument is hex")
    p.add_argument("--min-len", type=int, default=8)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--ban", action="append", help="banned substring (names, dates); repeatable")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("digits", help="0/1 balance of a keystream prefix",
                       description="CSV columns: n_bits, zeros, ones, chi_square.")
    _add_key_args(p)
    p.add_argument("--bits", type=int, default=10_000)
    p.add_argument("--csv")
    p.add_argument("--figure", help="plot the running fraction of ones")
    p.set_defaults(func=cmd_digits)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        status = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (TecError, OSError, ValueError, KeyError) as exc:
        print(f"tec: error: {exc}", file=sys.stderr)
        return 1
    return status or 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
