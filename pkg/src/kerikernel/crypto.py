"""Digest and signature primitives keyed by derivation code."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import blake3
from argon2.low_level import Type, hash_secret_raw
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, ed448
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
from nacl.exceptions import BadSignatureError
from nacl.signing import SigningKey, VerifyKey

from .codec import (
    CODES,
    DIGEST,
    IndexedSignature,
    QualifiedMaterial,
    UnknownCodeError,
)

DEFAULT_DIGEST = "E"

_DIGESTERS = {
    "E": lambda data: blake3.blake3(data).digest(32),
    "F": lambda data: hashlib.blake2b(data, digest_size=32).digest(),
    "G": lambda data: hashlib.blake2s(data, digest_size=32).digest(),
    "H": lambda data: hashlib.sha3_256(data).digest(),
    "I": lambda data: hashlib.sha256(data).digest(),
    "0D": lambda data: blake3.blake3(data).digest(64),
    "0E": lambda data: hashlib.sha3_512(data).digest(),
    "0F": lambda data: hashlib.blake2b(data, digest_size=64).digest(),
    "0G": lambda data: hashlib.sha512(data).digest(),
}
DIGEST_CODES = tuple(_DIGESTERS)


class UnregisteredDigestError(UnknownCodeError):
    pass


def digest(data: bytes, code: str = DEFAULT_DIGEST) -> QualifiedMaterial:
    if code not in _DIGESTERS:
        raise UnregisteredDigestError(f"{code!r} is not a registered digest code")
    return QualifiedMaterial(code, _DIGESTERS[code](data))


def is_digest_code(code: str) -> bool:
    return code in CODES and CODES[code].material_kind == DIGEST


# key codes grouped by scheme
ED25519_KEYS = {"B", "D"}
ED448_KEYS = {"1AAC", "1AAD"}
SECP256K1_KEYS = {"1AAA", "1AAB"}
NON_TRANSFERABLE_KEYS = {"B", "1AAA", "1AAC"}
SIGNING_KEYS = ED25519_KEYS | ED448_KEYS | SECP256K1_KEYS

_SCHEME_OF_KEY = {
    **{c: "Ed25519" for c in ED25519_KEYS},
    **{c: "Ed448" for c in ED448_KEYS},
    **{c: "secp256k1" for c in SECP256K1_KEYS},
}
_INDEXED_CODE = {"Ed25519": "A", "secp256k1": "B", "Ed448": "0A"}
_PLAIN_SIG_CODE = {"Ed25519": "0B", "secp256k1": "0C", "Ed448": "1AAE"}
_KEY_CODE = {  # (scheme, transferable) -> code
    ("Ed25519", False): "B", ("Ed25519", True): "D",
    ("secp256k1", False): "1AAA", ("secp256k1", True): "1AAB",
    ("Ed448", False): "1AAC", ("Ed448", True): "1AAD",
}


def scheme_of_key(code: str) -> str:
    try:
        return _SCHEME_OF_KEY[code]
    except KeyError:
        raise UnknownCodeError(f"{code!r} is not a signing key code") from None


def _verify_raw(key: QualifiedMaterial, sig: bytes, data: bytes) -> bool:
    scheme = scheme_of_key(key.code)
    try:
        if scheme == "Ed25519":
            VerifyKey(key.raw).verify(data, sig)
        elif scheme == "Ed448":
            ed448.Ed448PublicKey.from_public_bytes(key.raw).verify(sig, data)
        else:
            pub = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), key.raw)
            der = encode_dss_signature(
                int.from_bytes(sig[:32], "big"), int.from_bytes(sig[32:], "big")
            )
            pub.verify(der, data, ec.ECDSA(hashes.SHA256()))
    except (BadSignatureError, InvalidSignature, ValueError):
        return False
    return True


def verify(key: QualifiedMaterial, signature, data: bytes) -> bool:
    """Check a plain qualified or indexed signature against a qualified key."""
    if isinstance(signature, IndexedSignature):
        if signature.scheme_code != _INDEXED_CODE[scheme_of_key(key.code)]:
            return False
        return _verify_raw(key, signature.raw, data)
    if signature.code != _PLAIN_SIG_CODE[scheme_of_key(key.code)]:
        return False
    return _verify_raw(key, signature.raw, data)


@dataclass(frozen=True, repr=False)
class Signer:
    """A private signing key; the seed never leaves this object's repr."""

    seed: bytes
    scheme: str = "Ed25519"
    transferable: bool = True

    def __repr__(self) -> str:
        return f"Signer({self.verfer.qb64}, {self.scheme})"

    @property
    def verfer(self) -> QualifiedMaterial:
        code = _KEY_CODE[(self.scheme, self.transferable)]
        if self.scheme == "Ed25519":
            raw = bytes(SigningKey(self.seed).verify_key)
        elif self.scheme == "Ed448":
            raw = self._ed448().public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        else:
            raw = self._secp().public_key().public_bytes(
                Encoding.X962, PublicFormat.CompressedPoint
            )
        return QualifiedMaterial(code, raw)

    def _ed448(self):
        return ed448.Ed448PrivateKey.from_private_bytes(self.seed)

    def _secp(self):
        return ec.derive_private_key(int.from_bytes(self.seed, "big"), ec.SECP256K1())

    def sign_raw(self, data: bytes) -> bytes:
        if self.scheme == "Ed25519":
            return SigningKey(self.seed).sign(data).signature
        if self.scheme == "Ed448":
            return self._ed448().sign(data)
        r, s = decode_dss_signature(self._secp().sign(data, ec.ECDSA(hashes.SHA256())))
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    def sign(self, data: bytes) -> QualifiedMaterial:
        return QualifiedMaterial(_PLAIN_SIG_CODE[self.scheme], self.sign_raw(data))

    def sign_indexed(self, data: bytes, index: int) -> IndexedSignature:
        return IndexedSignature(_INDEXED_CODE[self.scheme], index, self.sign_raw(data))


SEED_SIZES = {"Ed25519": 32, "secp256k1": 32, "Ed448": 57}

# Frozen Argon2id parameters used to stretch 128-bit seeds into signing seeds.
ARGON2_TIME_COST = 2
ARGON2_MEMORY_KIB = 8192
ARGON2_PARALLELISM = 1
ARGON2_SALT = b"kerikernel-kdf-1"


def stretch_seed(seed16: bytes, path: str, size: int = 32) -> bytes:
    """Derive a signing seed from a 16-byte seed and a derivation path."""
    if len(seed16) != 16:
        raise ValueError("stretching expects a 16-byte seed")
    return hash_secret_raw(
        secret=seed16 + path.encode("utf-8"),
        salt=ARGON2_SALT,
        time_cost=ARGON2_TIME_COST,
        memory_cost=ARGON2_MEMORY_KIB,
        parallelism=ARGON2_PARALLELISM,
        hash_len=size,
        type=Type.ID,
    )


def counter_seed(label: str, counter: int, size: int = 32) -> bytes:
    """Deterministic seeds for test vectors. Never use for real keys."""
    return blake3.blake3(f"{label}:{counter}".encode("utf-8")).digest(size)
