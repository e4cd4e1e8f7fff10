"""Text codec for qualified cryptographic material.

Every item is URL-safe Base64 with its pad characters replaced by a short
derivation code, so the qualified text form is always a multiple of four
characters long and can be parsed left to right from its first character.
"""
from __future__ import annotations

import base64
import re
from dataclasses import dataclass
from typing import Iterator

B64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_"
_B64_INDEX = {c: i for i, c in enumerate(B64_ALPHABET)}
_B64_RE = re.compile(r"^[A-Za-z0-9\-_]*$")


class CodecError(ValueError):
    """Base class for codec failures."""


class UnknownCodeError(CodecError):
    pass


class UnknownSelectorError(CodecError):
    pass


class RawSizeError(CodecError):
    pass


class TruncatedError(CodecError):
    pass


class NonBase64Error(CodecError):
    pass


class LengthMismatchError(CodecError):
    pass


class IndexRangeError(CodecError):
    pass


class UnknownSchemeError(CodecError):
    pass


class CountRangeError(CodecError):
    pass


class UnsupportedDomainError(CodecError):
    pass


SEED = "seed"
PUBLIC_KEY_NT = "public-key-nontransferable"
PUBLIC_KEY = "public-key"
DIGEST = "digest"
SIGNATURE = "signature"
ENCRYPTION_KEY = "encryption-key"


def int_to_b64(value: int, width: int) -> str:
    if value < 0 or value >= 64**width:
        raise ValueError(f"{value} does not fit in {width} Base64 characters")
    out = []
    for _ in range(width):
        value, rem = divmod(value, 64)
        out.append(B64_ALPHABET[rem])
    return "".join(reversed(out))


def b64_to_int(text: str) -> int:
    value = 0
    for ch in text:
        try:
            value = value * 64 + _B64_INDEX[ch]
        except KeyError:
            raise NonBase64Error(f"non-Base64 character {ch!r}") from None
    return value


@dataclass(frozen=True)
class DerivationCode:
    code: str
    raw_size: int
    material_kind: str
    name: str = ""

    @property
    def pad_length(self) -> int:
        return (3 - self.raw_size % 3) % 3

    @property
    def qualified_b64_length(self) -> int:
        return len(self.code) + 4 * ((self.raw_size + 2) // 3) - self.pad_length


def _table(*rows: tuple[str, int, str, str]) -> dict[str, DerivationCode]:
    return {code: DerivationCode(code, size, kind, name) for code, size, kind, name in rows}


CODES: dict[str, DerivationCode] = _table(
    ("A", 32, SEED, "Ed25519 seed"),
    ("B", 32, PUBLIC_KEY_NT, "Ed25519 non-transferable verification key"),
    ("C", 32, ENCRYPTION_KEY, "X25519 public encryption key"),
    ("D", 32, PUBLIC_KEY, "Ed25519 verification key"),
    ("E", 32, DIGEST, "Blake3-256"),
    ("F", 32, DIGEST, "Blake2b-256"),
    ("G", 32, DIGEST, "Blake2s-256"),
    ("H", 32, DIGEST, "SHA3-256"),
    ("I", 32, DIGEST, "SHA2-256"),
    ("J", 32, SEED, "ECDSA secp256k1 seed"),
    ("K", 56, SEED, "Ed448 seed"),
    ("L", 56, ENCRYPTION_KEY, "X448 public encryption key"),
    ("0A", 16, SEED, "random 128-bit seed"),
    ("0B", 64, SIGNATURE, "Ed25519 signature"),
    ("0C", 64, SIGNATURE, "ECDSA secp256k1 signature"),
    ("0D", 64, DIGEST, "Blake3-512"),
    ("0E", 64, DIGEST, "SHA3-512"),
    ("0F", 64, DIGEST, "Blake2b-512"),
    ("0G", 64, DIGEST, "SHA2-512"),
    ("1AAA", 33, PUBLIC_KEY_NT, "ECDSA secp256k1 non-transferable verification key"),
    ("1AAB", 33, PUBLIC_KEY, "ECDSA secp256k1 verification key"),
    ("1AAC", 57, PUBLIC_KEY_NT, "Ed448 non-transferable verification key"),
    ("1AAD", 57, PUBLIC_KEY, "Ed448 verification key"),
    ("1AAE", 114, SIGNATURE, "Ed448 signature"),
)

# selector -> total code length; '2'..'6' are reserved with no rows
_SELECTORS = {"0": 2, "1": 4}
_RESERVED_SELECTORS = set("23456")


@dataclass(frozen=True)
class QualifiedMaterial:
    code: str
    raw: bytes

    def __post_init__(self):
        if self.code not in CODES:
            raise UnknownCodeError(f"unregistered derivation code {self.code!r}")
        expected = CODES[self.code].raw_size
        if len(self.raw) != expected:
            raise RawSizeError(
                f"code {self.code} needs {expected} raw bytes, got {len(self.raw)}"
            )

    @property
    def derivation(self) -> DerivationCode:
        return CODES[self.code]

    @property
    def qb64(self) -> str:
        return encode(self)

    def __str__(self) -> str:
        return self.qb64


def encode(material: QualifiedMaterial) -> str:
    dc = material.derivation
    body = base64.urlsafe_b64encode(material.raw).decode("ascii")
    if dc.pad_length:
        body = body[: -dc.pad_length]
    return dc.code + body


def _code_length(text: str) -> int:
    if not text:
        raise TruncatedError("empty input")
    first = text[0]
    if first in _SELECTORS:
        return _SELECTORS[first]
    if first in _RESERVED_SELECTORS:
        raise UnknownSelectorError(f"selector {first!r} is reserved and has no codes")
    if first == "-":
        raise UnknownSelectorError("count code where material was expected")
    if first in CODES:
        return 1
    raise UnknownSelectorError(f"unregistered selector {first!r}")


def _material_code(text: str) -> DerivationCode:
    n = _code_length(text)
    if len(text) < n:
        raise TruncatedError(f"need {n} code characters, got {len(text)}")
    code = text[:n]
    if code not in CODES:
        if not _B64_RE.match(code):
            raise NonBase64Error(f"non-Base64 character in code {code!r}")
        raise UnknownCodeError(f"unregistered derivation code {code!r}")
    return CODES[code]


def _decode_body(body: str, pad: int, raw_size: int) -> bytes:
    if not _B64_RE.match(body):
        raise NonBase64Error("non-Base64 character in material")
    raw = base64.urlsafe_b64decode(body + "=" * pad)
    if len(raw) != raw_size:
        raise LengthMismatchError(f"decoded {len(raw)} bytes, expected {raw_size}")
    # reject non-canonical trailing bits so text and binary forms stay one-to-one
    check = base64.urlsafe_b64encode(raw).decode("ascii")
    if (check[:-pad] if pad else check) != body:
        raise NonBase64Error("non-canonical Base64 padding bits")
    return raw


def decode(text: str) -> QualifiedMaterial:
    dc = _material_code(text)
    if len(text) < dc.qualified_b64_length:
        raise TruncatedError(
            f"code {dc.code} needs {dc.qualified_b64_length} characters, got {len(text)}"
        )
    if len(text) != dc.qualified_b64_length:
        raise LengthMismatchError(
            f"code {dc.code} needs {dc.qualified_b64_length} characters, got {len(text)}"
        )
    raw = _decode_body(text[len(dc.code):], dc.pad_length, dc.raw_size)
    return QualifiedMaterial(dc.code, raw)


def extract(text: str, offset: int = 0) -> tuple[QualifiedMaterial, int]:
    """Parse one item from a stream; returns the item and the next offset."""
    dc = _material_code(text[offset:offset + 4])
    end = offset + dc.qualified_b64_length
    if end > len(text):
        raise TruncatedError(f"stream ends inside a {dc.code} item")
    return decode(text[offset:end]), end


def iter_materials(text: str) -> Iterator[QualifiedMaterial]:
    offset = 0
    while offset < len(text):
        item, offset = extract(text, offset)
        yield item


# ---------------------------------------------------------------- indexed sigs


@dataclass(frozen=True)
class IndexedScheme:
    code: str
    raw_size: int
    index_width: int
    name: str

    @property
    def max_index(self) -> int:
        return 64**self.index_width - 1

    @property
    def qualified_b64_length(self) -> int:
        pad = (3 - self.raw_size % 3) % 3
        return len(self.code) + self.index_width + 4 * ((self.raw_size + 2) // 3) - pad


SCHEMES: dict[str, IndexedScheme] = {
    "A": IndexedScheme("A", 64, 1, "Ed25519"),
    "B": IndexedScheme("B", 64, 1, "ECDSA secp256k1"),
    "0A": IndexedScheme("0A", 114, 2, "Ed448"),
}


@dataclass(frozen=True)
class IndexedSignature:
    scheme_code: str
    index: int
    raw: bytes

    def __post_init__(self):
        scheme = SCHEMES.get(self.scheme_code)
        if scheme is None:
            raise UnknownSchemeError(f"unregistered signature scheme {self.scheme_code!r}")
        if not 0 <= self.index <= scheme.max_index:
            raise IndexRangeError(f"index {self.index} outside 0..{scheme.max_index}")
        if len(self.raw) != scheme.raw_size:
            raise RawSizeError(f"{scheme.name} signature needs {scheme.raw_size} bytes")

    @property
    def qb64(self) -> str:
        return encode_indexed(self)


def encode_indexed(sig: IndexedSignature) -> str:
    scheme = SCHEMES[sig.scheme_code]
    pad = (3 - scheme.raw_size % 3) % 3
    body = base64.urlsafe_b64encode(sig.raw).decode("ascii")
    if pad:
        body = body[:-pad]
    return scheme.code + int_to_b64(sig.index, scheme.index_width) + body


def _indexed_scheme(text: str) -> IndexedScheme:
    if not text:
        raise TruncatedError("empty input")
    code = text[:2] if text[0] == "0" else text[:1]
    if code not in SCHEMES:
        raise UnknownSchemeError(f"unregistered signature scheme {code!r}")
    return SCHEMES[code]


def decode_indexed(text: str) -> IndexedSignature:
    scheme = _indexed_scheme(text)
    if len(text) < scheme.qualified_b64_length:
        raise TruncatedError(f"{scheme.name} indexed signature is truncated")
    if len(text) != scheme.qualified_b64_length:
        raise LengthMismatchError(
            f"{scheme.name} indexed signature needs {scheme.qualified_b64_length} characters"
        )
    head = len(scheme.code)
    index = b64_to_int(text[head:head + scheme.index_width])
    pad = (3 - scheme.raw_size % 3) % 3
    raw = _decode_body(text[head + scheme.index_width:], pad, scheme.raw_size)
    return IndexedSignature(scheme.code, index, raw)


def extract_indexed(text: str, offset: int = 0) -> tuple[IndexedSignature, int]:
    scheme = _indexed_scheme(text[offset:offset + 2])
    end = offset + scheme.qualified_b64_length
    if end > len(text):
        raise TruncatedError("stream ends inside an indexed signature")
    return decode_indexed(text[offset:end]), end


# ----------------------------------------------------------------- count codes

ATTACHED_SIGNATURES = "attached-signatures"
ATTACHED_RECEIPT_COUPLETS = "attached-receipt-couplets"
MAX_COUNT = 64**2 - 1


@dataclass(frozen=True)
class CountCode:
    kind: str
    count: int
    domain: str = "base64"

    def __post_init__(self):
        if not 0 <= self.count <= MAX_COUNT:
            raise CountRangeError(f"count {self.count} outside 0..{MAX_COUNT}")
        if self.domain not in ("base64", "binary"):
            raise UnsupportedDomainError(f"unknown domain {self.domain!r}")


def encode_count(c: CountCode) -> str:
    head = "-A" if c.domain == "base64" else "-B"
    return head + int_to_b64(c.count, 2)


def decode_count(text: str, kind: str = ATTACHED_SIGNATURES) -> CountCode:
    if len(text) < 4:
        raise TruncatedError("count code needs 4 characters")
    if len(text) != 4:
        raise LengthMismatchError("count code is exactly 4 characters")
    if text[0] != "-":
        raise UnknownSelectorError(f"not a count code: {text!r}")
    if text[1] == "B":
        raise UnsupportedDomainError("binary-domain count code in a text stream")
    if text[1] != "A":
        raise UnknownCodeError(f"unregistered count code {text[:2]!r}")
    return CountCode(kind, b64_to_int(text[2:]))
