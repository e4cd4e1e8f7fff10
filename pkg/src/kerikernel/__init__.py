"""Key event receipt infrastructure kernel.

Submodules: ``codec`` (qualified Base64 material), ``identifier`` (prefix
derivation), ``events`` (event model and framing), ``engine`` (key state
validation), ``logs`` (first-seen logs and duplicity evidence), ``agreement``
(witness thresholds), ``netsim`` (network simulation) and ``cli``.
"""
from .codec import QualifiedMaterial, decode, encode
from .controller import Controller, KeyChain
from .crypto import Signer, digest, verify
from .engine import Disposition, KeyState, apply
from .events import KeyEvent, Receipt, deserialize, serialize
from .identifier import incept
from .logs import EventLog
from .threshold import SigningThreshold, parse_threshold

__version__ = "0.1.0"

__all__ = [
    "Controller", "Disposition", "EventLog", "KeyChain", "KeyEvent", "KeyState",
    "QualifiedMaterial", "Receipt", "Signer", "SigningThreshold", "apply", "decode",
    "deserialize", "digest", "encode", "incept", "parse_threshold", "serialize", "verify",
]
