"""Key events, seals, receipts and their wire forms.

Events serialize to ordered maps whose first field is a fixed-width version
string carrying the serialization kind and the byte size of the whole event.
Attached signatures follow the event after a CRLF CRLF separator, prefixed by a
count code, which makes a stream of messages self-framing.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Union

import cbor2
import msgpack

from . import codec
from .codec import (
    ATTACHED_RECEIPT_COUPLETS,
    ATTACHED_SIGNATURES,
    CountCode,
    IndexedSignature,
    QualifiedMaterial,
)
from .crypto import DEFAULT_DIGEST, digest
from .threshold import SigningThreshold, parse_threshold


class EventError(ValueError):
    pass


class BadVersionString(EventError):
    pass


class SizeMismatch(EventError):
    pass


class MalformedBody(EventError):
    pass


class UnknownKind(EventError):
    pass


class FieldMissing(EventError):
    pass


class MissingSeparator(EventError):
    pass


class CountMismatch(EventError):
    pass


KINDS = ("JSON", "CBOR", "MGPK")
VERSION = (1, 0)
VERSION_LEN = 17
VERSION_RE = re.compile(rb"KERI([0-9a-f])([0-9a-f])([A-Z]{4})([0-9a-f]{6})_")
SEPARATOR = b"\r\n\r\n"

ESTABLISHMENT = frozenset({"icp", "rot", "dip", "drt"})
INCEPTIONS = frozenset({"icp", "dip"})
ROTATIONS = frozenset({"rot", "drt"})
DELEGATED = frozenset({"dip", "drt"})
EVENT_ILKS = ESTABLISHMENT | {"ixn"}
RECEIPT_ILKS = frozenset({"rcpt", "vrct"})

_ICP = ("v", "i", "s", "t", "kt", "k", "n", "wt", "w", "c")
_ROT = ("v", "i", "s", "p", "t", "kt", "k", "n", "wt", "wr", "wa", "a")
FIELDS = {
    "icp": _ICP,
    "rot": _ROT,
    "ixn": ("v", "i", "s", "p", "t", "a"),
    "dip": _ICP + ("da",),
    "drt": _ROT + ("da",),
    "rcpt": ("v", "i", "s", "t", "d"),
    "vrct": ("v", "i", "s", "t", "d", "a"),
}


@dataclass(frozen=True)
class VersionString:
    kind: str = "JSON"
    size: int = 0
    major: int = VERSION[0]
    minor: int = VERSION[1]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown serialization kind {self.kind!r}")

    @property
    def text(self) -> str:
        return f"KERI{self.major:x}{self.minor:x}{self.kind}{self.size:06x}_"

    @classmethod
    def parse(cls, text: str) -> "VersionString":
        m = VERSION_RE.fullmatch(text.encode("ascii", "replace"))
        if not m:
            raise BadVersionString(f"bad version string {text!r}")
        major, minor, kind, size = m.groups()
        if kind.decode() not in KINDS:
            raise BadVersionString(f"unknown kind in version string {text!r}")
        return cls(kind.decode(), int(size, 16), int(major, 16), int(minor, 16))


def sn_text(sn: int) -> str:
    if sn < 0:
        raise EventError("sequence numbers are non-negative")
    return f"{sn:x}"


def parse_sn(text) -> int:
    if not isinstance(text, str) or not re.fullmatch(r"0|[1-9a-f][0-9a-f]*", text):
        raise MalformedBody(f"bad sequence number {text!r}")
    return int(text, 16)


# ----------------------------------------------------------------------- seals


@dataclass(frozen=True)
class DigestSeal:
    digest: str

    def to_sad(self) -> dict:
        return {"d": self.digest}


@dataclass(frozen=True)
class RootSeal:
    root: str

    def to_sad(self) -> dict:
        return {"rd": self.root}


@dataclass(frozen=True)
class EventSeal:
    prefix: str
    sn: int
    digest: str

    def to_sad(self) -> dict:
        return {"i": self.prefix, "s": sn_text(self.sn), "d": self.digest}


@dataclass(frozen=True)
class LocationSeal:
    prefix: str
    sn: int
    ilk: str
    prior: str

    def to_sad(self) -> dict:
        return {"i": self.prefix, "s": sn_text(self.sn), "t": self.ilk, "p": self.prior}


Seal = Union[DigestSeal, RootSeal, EventSeal, LocationSeal]


def seal_from_sad(sad) -> Seal:
    if not isinstance(sad, dict):
        raise MalformedBody(f"seal must be a mapping, got {type(sad).__name__}")
    keys = tuple(sad)
    try:
        if keys == ("d",):
            return DigestSeal(sad["d"])
        if keys == ("rd",):
            return RootSeal(sad["rd"])
        if keys == ("i", "s", "d"):
            return EventSeal(sad["i"], parse_sn(sad["s"]), sad["d"])
        if keys == ("i", "s", "t", "p"):
            return LocationSeal(sad["i"], parse_sn(sad["s"]), sad["t"], sad["p"])
    except TypeError as exc:
        raise MalformedBody(str(exc)) from exc
    raise MalformedBody(f"unrecognized seal labels {keys}")


# ---------------------------------------------------------------------- events


@dataclass(frozen=True)
class KeyEvent:
    ilk: str
    prefix: str
    sn: int
    prior: str | None = None
    sith: SigningThreshold | None = None
    keys: tuple[str, ...] = ()
    next_digest: str = ""
    toad: int = 0
    wits: tuple[str, ...] = ()
    cuts: tuple[str, ...] = ()
    adds: tuple[str, ...] = ()
    config: tuple[str, ...] = ()
    seals: tuple[Seal, ...] = ()
    delegator: LocationSeal | None = None
    kind: str = "JSON"

    def __post_init__(self):
        if self.ilk not in EVENT_ILKS:
            raise EventError(f"unknown event ilk {self.ilk!r}")
        if (self.sn == 0) != (self.ilk in INCEPTIONS):
            raise EventError("sn 0 is reserved for inception events")
        if (self.prior is None) != (self.ilk in INCEPTIONS):
            raise EventError("prior digest is required except at inception")
        if self.ilk in ESTABLISHMENT and (self.sith is None or not self.keys):
            raise FieldMissing("establishment events need a threshold and keys")
        if (self.delegator is not None) != (self.ilk in DELEGATED):
            raise FieldMissing(f"{self.ilk} delegator seal presence is wrong")
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown serialization kind {self.kind!r}")

    @property
    def establishment(self) -> bool:
        return self.ilk in ESTABLISHMENT

    @property
    def est_only(self) -> bool:
        return "EstOnly" in self.config

    @cached_property
    def raw(self) -> bytes:
        return serialize(self)

    def digest(self, code: str = DEFAULT_DIGEST) -> str:
        return digest_event(self, code).qb64

    def to_sad(self, version: str | None = None) -> dict:
        v = version if version is not None else VersionString(self.kind).text
        values = {
            "v": v,
            "i": self.prefix,
            "s": sn_text(self.sn),
            "p": self.prior,
            "t": self.ilk,
            "kt": self.sith.to_sad() if self.sith is not None else None,
            "k": list(self.keys),
            "n": self.next_digest,
            "wt": f"{self.toad:x}",
            "w": list(self.wits),
            "wr": list(self.cuts),
            "wa": list(self.adds),
            "c": [{"trait": t} for t in self.config],
            "a": [s.to_sad() for s in self.seals],
            "da": self.delegator.to_sad() if self.delegator else None,
        }
        return {label: values[label] for label in FIELDS[self.ilk]}


@dataclass(frozen=True)
class Receipt:
    """Witness (rcpt) or validator (vrct) receipt for one event."""

    prefix: str
    sn: int
    digest: str
    couplets: tuple[tuple[str, str], ...] = ()
    validator_seal: EventSeal | None = None
    sigs: tuple[IndexedSignature, ...] = ()
    kind: str = "JSON"

    @property
    def ilk(self) -> str:
        return "vrct" if self.validator_seal is not None else "rcpt"

    @cached_property
    def raw(self) -> bytes:
        return serialize(self)

    def to_sad(self, version: str | None = None) -> dict:
        sad = {
            "v": version if version is not None else VersionString(self.kind).text,
            "i": self.prefix,
            "s": sn_text(self.sn),
            "t": self.ilk,
            "d": self.digest,
        }
        if self.validator_seal is not None:
            sad["a"] = self.validator_seal.to_sad()
        return sad


# --------------------------------------------------------------- serialization


def _dump(sad: dict, kind: str) -> bytes:
    if kind == "JSON":
        return json.dumps(sad, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    if kind == "CBOR":
        return cbor2.dumps(sad)
    if kind == "MGPK":
        return msgpack.packb(sad, use_bin_type=True)
    raise UnknownKind(f"unknown serialization kind {kind!r}")


def _load(raw: bytes, kind: str) -> dict:
    try:
        if kind == "JSON":
            sad = json.loads(raw.decode("utf-8"))
        elif kind == "CBOR":
            sad = cbor2.loads(raw)
        else:
            sad = msgpack.unpackb(raw, raw=False, strict_map_key=True)
    except Exception as exc:  # each backend raises its own family
        raise MalformedBody(f"cannot parse {kind} body: {exc}") from exc
    if not isinstance(sad, dict):
        raise MalformedBody("event body is not a mapping")
    return sad


def serialize(item: Union[KeyEvent, Receipt], kind: str | None = None) -> bytes:
    kind = kind or item.kind
    if kind not in KINDS:
        raise UnknownKind(f"unknown serialization kind {kind!r}")
    blank = VersionString(kind, 0).text
    size = len(_dump(item.to_sad(blank), kind))
    return _dump(item.to_sad(VersionString(kind, size).text), kind)


def sniff(data: bytes) -> VersionString:
    m = VERSION_RE.search(bytes(data[:24]))
    if not m:
        raise BadVersionString("no version string near the start of the stream")
    vs = VersionString.parse(m.group(0).decode("ascii"))
    if vs.size < VERSION_LEN:
        raise SizeMismatch(f"declared size {vs.size} is too small")
    return vs


def _str_list(value, label: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MalformedBody(f"field {label!r} must be a list of text values")
    return tuple(value)


def _hex_int(value, label: str) -> int:
    if not isinstance(value, str) or not re.fullmatch(r"0|[1-9a-f][0-9a-f]*", value):
        raise MalformedBody(f"field {label!r} must be lowercase hex text")
    return int(value, 16)


def _qualified(value, label: str, optional: bool = False) -> str:
    if optional and value == "":
        return value
    if not isinstance(value, str):
        raise MalformedBody(f"field {label!r} must be qualified text")
    try:
        codec.decode(value)
    except codec.CodecError as exc:
        raise MalformedBody(f"field {label!r}: {exc}") from exc
    return value


def from_sad(sad: dict, kind: str) -> Union[KeyEvent, Receipt]:
    ilk = sad.get("t")
    if ilk not in FIELDS:
        raise MalformedBody(f"unknown ilk {ilk!r}")
    if tuple(sad) != FIELDS[ilk]:
        raise MalformedBody(f"{ilk} fields {tuple(sad)} are not in canonical order")
    prefix = _qualified(sad["i"], "i")
    sn = parse_sn(sad["s"])
    try:
        if ilk in RECEIPT_ILKS:
            seal = None
            if ilk == "vrct":
                seal = seal_from_sad(sad["a"])
                if not isinstance(seal, EventSeal):
                    raise MalformedBody("validator receipt needs an event seal")
            return Receipt(prefix, sn, _qualified(sad["d"], "d"), validator_seal=seal, kind=kind)
        args = dict(ilk=ilk, prefix=prefix, sn=sn, kind=kind)
        if "p" in sad:
            args["prior"] = _qualified(sad["p"], "p")
        if "kt" in sad:
            args["sith"] = parse_threshold(sad["kt"])
            args["keys"] = tuple(_qualified(k, "k") for k in _str_list(sad["k"], "k"))
            args["next_digest"] = _qualified(sad["n"], "n", optional=True)
            args["toad"] = _hex_int(sad["wt"], "wt")
        if "w" in sad:
            args["wits"] = _str_list(sad["w"], "w")
        if "wr" in sad:
            args["cuts"] = _str_list(sad["wr"], "wr")
            args["adds"] = _str_list(sad["wa"], "wa")
        if "c" in sad:
            traits = sad["c"]
            if not isinstance(traits, list) or not all(
                isinstance(t, dict) and tuple(t) == ("trait",) and isinstance(t["trait"], str)
                for t in traits
            ):
                raise MalformedBody("config must be a list of trait mappings")
            args["config"] = tuple(t["trait"] for t in traits)
        if "a" in sad:
            if not isinstance(sad["a"], list):
                raise MalformedBody("seals must be a list")
            args["seals"] = tuple(seal_from_sad(s) for s in sad["a"])
        if "da" in sad:
            loc = seal_from_sad(sad["da"])
            if not isinstance(loc, LocationSeal):
                raise MalformedBody("delegator seal must be a location seal")
            args["delegator"] = loc
        return KeyEvent(**args)
    except MalformedBody:
        raise
    except (EventError, ValueError, TypeError, KeyError) as exc:
        raise MalformedBody(str(exc)) from exc


def deserialize(data: bytes) -> Union[KeyEvent, Receipt]:
    """Parse exactly one serialized event or receipt body."""
    data = bytes(data)
    vs = sniff(data)
    if len(data) != vs.size:
        raise SizeMismatch(f"version string declares {vs.size} bytes, got {len(data)}")
    sad = _load(data, vs.kind)
    if sad.get("v") != vs.text:
        raise BadVersionString("version string is not the first field")
    item = from_sad(sad, vs.kind)
    if serialize(item) != data:
        raise MalformedBody("body is not in canonical serialized form")
    item.__dict__["raw"] = data
    return item


def extract_serialize(elements) -> bytes:
    """Depth-first concatenation of the UTF-8 text of every value."""
    out: list[str] = []

    def walk(v):
        if isinstance(v, (list, tuple)):
            for x in v:
                walk(x)
        elif isinstance(v, dict):
            for x in v.values():
                walk(x)
        elif isinstance(v, SigningThreshold):
            walk(v.to_sad())
        elif isinstance(v, QualifiedMaterial):
            out.append(v.qb64)
        elif isinstance(v, bool) or v is None:
            raise EventError(f"cannot extract-serialize {v!r}")
        elif isinstance(v, int):
            out.append(f"{v:x}")
        else:
            out.append(str(v))

    walk(elements)
    return "".join(out).encode("utf-8")


def digest_event(event: Union[KeyEvent, Receipt], code: str = DEFAULT_DIGEST) -> QualifiedMaterial:
    return digest(event.raw, code)


def next_digest(sith, keys: Iterable, code: str = DEFAULT_DIGEST) -> QualifiedMaterial:
    sith = parse_threshold(sith)
    return digest(extract_serialize([sith, [str(k) for k in keys]]), code)


# -------------------------------------------------------------------- builders


def rotate(
    prefix: str,
    sn: int,
    prior: str,
    keys: Iterable[str],
    next_digest: str = "",
    sith=None,
    toad: int = 0,
    cuts: Iterable[str] = (),
    adds: Iterable[str] = (),
    seals: Iterable[Seal] = (),
    delegator: LocationSeal | None = None,
    kind: str = "JSON",
) -> KeyEvent:
    keys = tuple(str(k) for k in keys)
    sith = parse_threshold(sith if sith is not None else max(1, (len(keys) + 1) // 2))
    return KeyEvent(
        ilk="drt" if delegator is not None else "rot",
        prefix=prefix, sn=sn, prior=prior, sith=sith, keys=keys,
        next_digest=next_digest, toad=toad, cuts=tuple(cuts), adds=tuple(adds),
        seals=tuple(seals), delegator=delegator, kind=kind,
    )


def interact(prefix: str, sn: int, prior: str, seals: Iterable[Seal] = (), kind: str = "JSON") -> KeyEvent:
    return KeyEvent(ilk="ixn", prefix=prefix, sn=sn, prior=prior, seals=tuple(seals), kind=kind)


def with_seals(event: KeyEvent, seals: Iterable[Seal]) -> KeyEvent:
    return replace(event, seals=tuple(event.seals) + tuple(seals))


# --------------------------------------------------------------------- framing


@dataclass(frozen=True)
class Message:
    body: Union[KeyEvent, Receipt]
    sigs: tuple[IndexedSignature, ...] = ()
    couplets: tuple[tuple[str, str], ...] = field(default=())


def _count(kind: str, n: int) -> bytes:
    return codec.encode_count(CountCode(kind, n)).encode("ascii")


def _couplet_group(couplets) -> bytes:
    return _count(ATTACHED_RECEIPT_COUPLETS, len(couplets)) + b"".join(
        (str(w) + str(s)).encode("ascii") for w, s in couplets
    )


def frame(event_bytes: bytes, sigs: Iterable[IndexedSignature], couplets=None) -> bytes:
    sigs = list(sigs)
    out = bytes(event_bytes) + SEPARATOR + _count(ATTACHED_SIGNATURES, len(sigs))
    out += b"".join(codec.encode_indexed(s).encode("ascii") for s in sigs)
    if couplets:
        out += _couplet_group(couplets)
    return out


def frame_receipt(receipt: Receipt) -> bytes:
    if receipt.ilk == "vrct":
        return frame(receipt.raw, receipt.sigs)
    return receipt.raw + SEPARATOR + _couplet_group(receipt.couplets)


def _read_count(data: bytes, pos: int, kind: str) -> tuple[int, int]:
    text = data[pos:pos + 4].decode("ascii", "replace")
    try:
        return codec.decode_count(text, kind).count, pos + 4
    except codec.CodecError as exc:
        raise CountMismatch(f"bad count code at byte {pos}: {exc}") from exc


def _peek_text(data: bytes, pos: int, n: int) -> str:
    return data[pos:pos + n].decode("ascii", "replace")


def _read_sigs(data: bytes, pos: int, n: int) -> tuple[list[IndexedSignature], int]:
    sigs = []
    for _ in range(n):
        head = _peek_text(data, pos, 2)
        try:
            scheme = codec._indexed_scheme(head)
            size = scheme.qualified_b64_length
            if pos + size > len(data):
                raise codec.TruncatedError("truncated")
            sigs.append(codec.decode_indexed(_peek_text(data, pos, size)))
        except codec.CodecError as exc:
            raise CountMismatch(f"expected {n} signatures: {exc}") from exc
        pos += size
    return sigs, pos


def _read_material(data: bytes, pos: int) -> tuple[str, int]:
    item, end = codec.extract(_peek_text(data, pos, 160))
    return item.qb64, pos + end


def _read_couplets(data: bytes, pos: int, n: int) -> tuple[list[tuple[str, str]], int]:
    out = []
    for _ in range(n):
        try:
            wit, pos = _read_material(data, pos)
            sig, pos = _read_material(data, pos)
        except codec.CodecError as exc:
            raise CountMismatch(f"expected {n} receipt couplets: {exc}") from exc
        out.append((wit, sig))
    return out, pos


def parse_message(data: bytes, pos: int = 0) -> tuple[Message, int]:
    data = bytes(data)
    vs = sniff(data[pos:])
    end = pos + vs.size
    if end > len(data):
        raise SizeMismatch(f"stream ends before the declared {vs.size} bytes")
    body = deserialize(data[pos:end])
    if data[end:end + 4] != SEPARATOR:
        raise MissingSeparator(f"no CRLF CRLF separator after the body at byte {end}")
    pos = end + 4
    sigs: list[IndexedSignature] = []
    couplets: list[tuple[str, str]] = []
    if isinstance(body, Receipt) and body.ilk == "rcpt":
        n, pos = _read_count(data, pos, ATTACHED_RECEIPT_COUPLETS)
        couplets, pos = _read_couplets(data, pos, n)
        body = replace(body, couplets=tuple(couplets))
    else:
        n, pos = _read_count(data, pos, ATTACHED_SIGNATURES)
        sigs, pos = _read_sigs(data, pos, n)
        if isinstance(body, Receipt):
            body = replace(body, sigs=tuple(sigs))
        elif data[pos:pos + 2] == b"-A":
            n, pos = _read_count(data, pos, ATTACHED_RECEIPT_COUPLETS)
            couplets, pos = _read_couplets(data, pos, n)
    if data[pos:pos + 1] == b"-":
        raise CountMismatch(f"unexpected attachment group at byte {pos}")
    return Message(body, tuple(sigs), tuple(couplets)), pos


def iter_messages(data: bytes) -> Iterator[Message]:
    pos = 0
    while pos < len(data):
        if data[pos:pos + 1] in (b"\n", b"\r"):  # tolerate line breaks between messages
            pos += 1
            continue
        msg, pos = parse_message(data, pos)
        yield msg


def unframe(stream: bytes) -> tuple[KeyEvent, list[IndexedSignature]]:
    msg, end = parse_message(stream)
    if end != len(stream):
        raise CountMismatch(f"{len(stream) - end} trailing bytes after the attachments")
    return msg.body, list(msg.sigs)
