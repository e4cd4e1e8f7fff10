"""Self-certifying identifier prefixes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import codec
from .codec import CODES, QualifiedMaterial
from .crypto import (
    DEFAULT_DIGEST,
    NON_TRANSFERABLE_KEYS,
    SIGNING_KEYS,
    Signer,
    UnregisteredDigestError,
    digest,
    is_digest_code,
    scheme_of_key,
    verify,
)
from .events import (
    KeyEvent,
    LocationSeal,
    VersionString,
    extract_serialize,
    serialize,
)
from .threshold import SigningThreshold, parse_threshold

BASIC = "basic"
SELF_ADDRESSING = "self-addressing"
SELF_SIGNING = "self-signing"

SELF_SIGNING_CODES = {"0B", "0C", "1AAE"}


class IdentifierError(ValueError):
    pass


class NotASigningKey(IdentifierError):
    pass


class KeyMismatch(IdentifierError):
    pass


@dataclass(frozen=True)
class Prefix:
    qualified: QualifiedMaterial

    @property
    def code(self) -> str:
        return self.qualified.code

    @property
    def cls(self) -> str:
        return prefix_class(self.code)

    @property
    def transferable(self) -> bool:
        return self.code not in NON_TRANSFERABLE_KEYS

    @property
    def qb64(self) -> str:
        return self.qualified.qb64

    def __str__(self) -> str:
        return self.qb64

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        q = codec.decode(text)
        prefix_class(q.code)
        return cls(q)


def prefix_class(code: str) -> str:
    if code in SIGNING_KEYS:
        return BASIC
    if is_digest_code(code):
        return SELF_ADDRESSING
    if code in SELF_SIGNING_CODES:
        return SELF_SIGNING
    raise IdentifierError(f"code {code!r} cannot head an identifier prefix")


def is_non_transferable_prefix(text: str) -> bool:
    try:
        return codec.decode(text).code in NON_TRANSFERABLE_KEYS
    except codec.CodecError:
        return False


@dataclass(frozen=True)
class InceptionSeed:
    keys: tuple[str, ...]
    sith: SigningThreshold = field(default_factory=lambda: SigningThreshold(count=1))
    next_digest: str = ""
    toad: int = 0
    wits: tuple[str, ...] = ()
    config: tuple[str, ...] = ()
    delegator: LocationSeal | None = None
    kind: str = "JSON"

    def __post_init__(self):
        if not self.keys:
            raise IdentifierError("inception needs at least one public key")
        object.__setattr__(self, "keys", tuple(str(k) for k in self.keys))
        object.__setattr__(self, "sith", parse_threshold(self.sith))
        object.__setattr__(self, "wits", tuple(str(w) for w in self.wits))
        for w in self.wits:
            if not is_non_transferable_prefix(w):
                raise IdentifierError(f"witness {w} is not a non-transferable prefix")

    def to_event(self, prefix: str) -> KeyEvent:
        return KeyEvent(
            ilk="dip" if self.delegator is not None else "icp",
            prefix=prefix, sn=0, sith=self.sith, keys=self.keys,
            next_digest=self.next_digest, toad=self.toad, wits=self.wits,
            config=self.config, delegator=self.delegator, kind=self.kind,
        )

    @classmethod
    def from_event(cls, event: KeyEvent) -> "InceptionSeed":
        return cls(
            keys=event.keys, sith=event.sith, next_digest=event.next_digest,
            toad=event.toad, wits=event.wits, config=event.config,
            delegator=event.delegator, kind=event.kind,
        )


def inception_bytes(seed: InceptionSeed, prefix_length: int) -> bytes:
    """Extracted serialization of the inception data with a '#' placeholder prefix."""
    event = seed.to_event("#" * prefix_length)
    size = len(serialize(event))
    sad = event.to_sad(VersionString(seed.kind, size).text)
    return extract_serialize(list(sad.values()))


def derive_basic(public_key, transferable: bool) -> Prefix:
    key = codec.decode(public_key) if isinstance(public_key, str) else public_key
    if key.code not in SIGNING_KEYS:
        raise NotASigningKey(f"{key.code!r} is not a signing key code")
    code = {
        ("Ed25519", False): "B", ("Ed25519", True): "D",
        ("secp256k1", False): "1AAA", ("secp256k1", True): "1AAB",
        ("Ed448", False): "1AAC", ("Ed448", True): "1AAD",
    }[(scheme_of_key(key.code), transferable)]
    return Prefix(QualifiedMaterial(code, key.raw))


def derive_self_addressing(seed: InceptionSeed, digest_code: str = DEFAULT_DIGEST) -> Prefix:
    if not is_digest_code(digest_code):
        raise UnregisteredDigestError(f"{digest_code!r} is not a registered digest code")
    data = inception_bytes(seed, CODES[digest_code].qualified_b64_length)
    return Prefix(digest(data, digest_code))


def derive_self_signing(seed: InceptionSeed, signer: Signer) -> Prefix:
    if len(seed.keys) != 1:
        raise IdentifierError("self-signing prefixes need a single-key inception")
    if signer.verfer.raw != codec.decode(seed.keys[0]).raw:
        raise KeyMismatch("signer does not hold the inception key")
    length = CODES[signer.sign(b"").code].qualified_b64_length
    return Prefix(signer.sign(inception_bytes(seed, length)))


def verify_prefix(prefix, seed: InceptionSeed) -> bool:
    try:
        if isinstance(prefix, str):
            prefix = Prefix.parse(prefix)
        cls = prefix.cls
        if cls == BASIC:
            if len(seed.keys) != 1 or seed.delegator is not None:
                return False
            key = codec.decode(seed.keys[0])
            if key.raw != prefix.qualified.raw:
                return False
            if scheme_of_key(key.code) != scheme_of_key(prefix.code):
                return False
            return prefix.transferable or seed.next_digest == ""
        if cls == SELF_ADDRESSING:
            return derive_self_addressing(seed, prefix.code) == prefix
        if len(seed.keys) != 1:
            return False
        data = inception_bytes(seed, len(prefix.qb64))
        return verify(codec.decode(seed.keys[0]), prefix.qualified, data)
    except (codec.CodecError, IdentifierError, ValueError):
        return False


def incept(
    keys: Iterable,
    sith=None,
    next_digest: str = "",
    toad: int = 0,
    wits: Iterable[str] = (),
    config: Iterable[str] = (),
    delegator: LocationSeal | None = None,
    code: str = DEFAULT_DIGEST,
    signer: Signer | None = None,
    kind: str = "JSON",
) -> KeyEvent:
    """Build an inception event whose prefix is derived with ``code``.

    ``code`` is a digest code for self-addressing prefixes, ``"basic"`` for a
    basic prefix (transferability follows ``next_digest``), or a signature code
    for a self-signing prefix, which needs ``signer``.
    """
    keys = tuple(str(k) for k in keys)
    if sith is None:
        sith = max(1, (len(keys) + 1) // 2)
    seed = InceptionSeed(
        keys=keys, sith=sith, next_digest=str(next_digest), toad=toad,
        wits=tuple(wits), config=tuple(config), delegator=delegator, kind=kind,
    )
    if code == BASIC:
        prefix = derive_basic(keys[0], transferable=bool(seed.next_digest))
    elif code in SELF_SIGNING_CODES:
        if signer is None:
            raise IdentifierError("self-signing inception needs the signer")
        prefix = derive_self_signing(seed, signer)
    else:
        prefix = derive_self_addressing(seed, code)
    return seed.to_event(prefix.qb64)
