"""Line-oriented workload traces.

Grammar (one event per line, whitespace separated, ``#`` starts a comment)::

    W <lpa> seed:<u64>|hex:<bytes> [enc]   host write
    R <lpa>                                host read
    T <lpa>                                trim / unmap
    D <lpa> [PL0..PL3|<technique>|auto]    secure delete
    G <min_free_pages>                     garbage collect
    C <sensitivity> <trust> <alert>        set deletion context
    X                                      dump checkpoint

``seed:`` payloads expand to a full page with :func:`seed_payload`; ``hex:``
payloads shorter than a page are padded with 0xFF.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .engine import PrivacyLevel, Technique
from .errors import ParseError

_TECHNIQUES = {t.value for t in Technique}
_LEVELS = {lvl.name for lvl in PrivacyLevel}


def seed_payload(seed: int, size: int) -> bytes:
    """Deterministic pseudorandom page: blake2b(le64(seed) || le64(i)) blocks, 64 bytes each."""
    out = bytearray()
    i = 0
    while len(out) < size:
        out += hashlib.blake2b(struct.pack("<QQ", seed & 0xFFFFFFFFFFFFFFFF, i), digest_size=64, person=b"apsd-payload").digest()
        i += 1
    return bytes(out[:size])


@dataclass(frozen=True)
class Payload:
    kind: str  # "seed" or "hex"
    value: int | bytes

    def expand(self, size: int) -> bytes:
        if self.kind == "seed":
            return seed_payload(self.value, size)
        if len(self.value) > size:
            raise ValueError(f"hex payload of {len(self.value)} bytes exceeds page size {size}")
        return self.value + b"\xff" * (size - len(self.value))

    def __str__(self) -> str:
        return f"seed:{self.value}" if self.kind == "seed" else f"hex:{self.value.hex()}"


@dataclass(frozen=True)
class TraceEvent:
    verb: str
    line: int
    lpa: int | None = None
    payload: Payload | None = None
    encrypted: bool = False
    target: str | None = None  # level name, technique name, "auto" or None for the default
    min_free: int | None = None
    context: tuple | None = None

    def __str__(self) -> str:
        parts = [self.verb]
        if self.lpa is not None:
            parts.append(str(self.lpa))
        if self.payload is not None:
            parts.append(str(self.payload))
        if self.encrypted:
            parts.append("enc")
        if self.target is not None:
            parts.append(self.target)
        if self.min_free is not None:
            parts.append(str(self.min_free))
        if self.context is not None:
            parts.extend(str(int(v)) for v in self.context)
        return " ".join(parts)


def _uint(token: str, line: int, what: str) -> int:
    try:
        value = int(token, 10)
    except ValueError:
        raise ParseError(line, f"{what} must be a non-negative integer, got {token!r}") from None
    if value < 0:
        raise ParseError(line, f"{what} must be a non-negative integer, got {token!r}")
    return value


def _payload(token: str, line: int) -> Payload:
    kind, sep, rest = token.partition(":")
    if not sep:
        raise ParseError(line, f"payload must be seed:<u64> or hex:<bytes>, got {token!r}")
    if kind == "seed":
        value = _uint(rest, line, "payload seed")
        if value >= 1 << 64:
            raise ParseError(line, "payload seed exceeds 64 bits")
        return Payload("seed", value)
    if kind == "hex":
        try:
            return Payload("hex", bytes.fromhex(rest))
        except ValueError:
            raise ParseError(line, f"bad hex payload {rest!r}") from None
    raise ParseError(line, f"unknown payload kind {kind!r}")


def _flag(token: str, line: int) -> bool:
    low = token.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ParseError(line, f"alert must be 0/1/true/false, got {token!r}")


def _arity(args, lo, hi, line, verb):
    if not lo <= len(args) <= hi:
        raise ParseError(line, f"{verb} takes {lo}..{hi} arguments, got {len(args)}")


def parse_trace(text: str) -> list[TraceEvent]:
    events = []
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        verb, *args = body.split()
        verb = verb.upper()
        if verb == "W":
            _arity(args, 2, 3, number, verb)
            enc = False
            if len(args) == 3:
                if args[2].lower() != "enc":
                    raise ParseError(number, f"unexpected token {args[2]!r}; only 'enc' may follow the payload")
                enc = True
            events.append(TraceEvent("W", number, _uint(args[0], number, "lpa"), _payload(args[1], number), enc))
        elif verb in ("R", "T"):
            _arity(args, 1, 1, number, verb)
            events.append(TraceEvent(verb, number, _uint(args[0], number, "lpa")))
        elif verb == "D":
            _arity(args, 1, 2, number, verb)
            target = None
            if len(args) == 2:
                token = args[1]
                if token.upper() in _LEVELS:
                    target = token.upper()
                elif token.lower() in _TECHNIQUES or token.lower() == "auto":
                    target = token.lower()
                else:
                    raise ParseError(number, f"unknown privacy level or technique {token!r}")
            events.append(TraceEvent("D", number, _uint(args[0], number, "lpa"), target=target))
        elif verb == "G":
            _arity(args, 1, 1, number, verb)
            events.append(TraceEvent("G", number, min_free=_uint(args[0], number, "min_free")))
        elif verb == "C":
            _arity(args, 3, 3, number, verb)
            sens = _uint(args[0], number, "sensitivity")
            trust = _uint(args[1], number, "network_trust")
            if sens > 3 or trust > 2:
                raise ParseError(number, "sensitivity must be 0..3 and trust 0..2")
            events.append(TraceEvent("C", number, context=(sens, trust, _flag(args[2], number))))
        elif verb == "X":
            _arity(args, 0, 0, number, verb)
            events.append(TraceEvent("X", number))
        else:
            raise ParseError(number, f"unknown verb {verb!r}")
    return events


def format_trace(events) -> str:
    return "".join(f"{e}\n" for e in events)
