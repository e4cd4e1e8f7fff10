"""Key state verification.

``apply`` is the state transition: given the verified state of one prefix, a
candidate event and its attached signatures, it decides what happens to the
event and, when accepted, what the next state is. It never mutates anything;
callers (see :mod:`kerikernel.logs`) persist the outcome and manage escrows.

Past events are reached through a read-only history view so that alternates
at old locations can be classified as duplicity or as superseding recovery.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence, Union

from . import codec
from .codec import IndexedSignature
from .crypto import DEFAULT_DIGEST, SIGNING_KEYS, digest, is_digest_code, verify
from .events import (
    DELEGATED,
    INCEPTIONS,
    ROTATIONS,
    EventSeal,
    KeyEvent,
    LocationSeal,
    Seal,
    interact,
    next_digest as commit_digest,
    rotate,
)
from .identifier import InceptionSeed, derive_self_addressing, is_non_transferable_prefix, verify_prefix
from .threshold import SigningThreshold, ThresholdError, satisfies

__all__ = ["apply", "satisfies", "verify_rotation", "verify_delegation", "generate_delegation_pair"]


class Disposition(str, Enum):
    ACCEPTED = "accepted-first-seen"
    DUPLICATE = "duplicate-identical"
    DUPLICITOUS = "duplicitous"
    SUPERSEDING = "superseding-recovery"
    ESCROW_OUT_OF_ORDER = "escrowed-out-of-order"
    ESCROW_PARTIAL = "escrowed-partial-sig"
    REJECTED = "rejected"

    def __str__(self) -> str:
        return self.value


BAD_SIGNATURE = "bad-signature"
THRESHOLD_UNMET = "threshold-unmet"
PRE_ROTATION_MISMATCH = "pre-rotation-mismatch"
PRIOR_DIGEST_MISMATCH = "prior-digest-mismatch"
EST_ONLY_VIOLATION = "est-only-violation"
ABANDONED = "abandoned-identifier"
PREFIX_MISMATCH = "prefix-derivation-mismatch"
BAD_KEYS = "invalid-keys"
BAD_THRESHOLD = "invalid-threshold"
BAD_NEXT = "invalid-next-digest"
WITNESS_CUT_NOT_MEMBER = "witness-cut-not-member"
WITNESS_ADD_DUPLICATE = "witness-add-duplicate"
WITNESS_NOT_NON_TRANSFERABLE = "witness-not-non-transferable"
TOAD_INVALID = "toad-invalid"
ILK_MISMATCH = "ilk-mismatch"
DELEGATING_EVENT_NOT_FOUND = "delegating-event-not-found"
SEAL_MISMATCH = "seal-mismatch"
STALE_DELEGATOR_AUTHORITY = "stale-delegator-authority"
DISPUTED_BRANCH = "disputed-branch"
NO_HISTORY = "history-unavailable"
WRONG_PREFIX = "wrong-prefix"


class Rejected(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class PartialSignatures(Rejected):
    """Signatures all verify but do not yet meet the threshold."""

    def __init__(self, indices: set[int]):
        super().__init__(THRESHOLD_UNMET, f"valid signer offsets {sorted(indices)}")
        self.indices = indices


@dataclass(frozen=True)
class KeyState:
    prefix: str
    sn: int
    digest: str
    ilk: str
    last_est: tuple[int, str]
    sith: SigningThreshold
    keys: tuple[str, ...]
    next_digest: str
    toad: int
    wits: tuple[str, ...]
    config: tuple[str, ...] = ()
    delegator: Optional[str] = None
    first_key_index: int = 0

    @property
    def abandoned(self) -> bool:
        return self.next_digest == ""

    @property
    def next_key_index(self) -> int:
        return self.first_key_index + len(self.keys)

    @property
    def est_only(self) -> bool:
        return "EstOnly" in self.config

    def to_dict(self) -> dict:
        return {
            "prefix": self.prefix, "sn": self.sn, "digest": self.digest, "ilk": self.ilk,
            "last_est": [self.last_est[0], self.last_est[1]],
            "sith": self.sith.to_sad(), "keys": list(self.keys),
            "next_digest": self.next_digest, "toad": self.toad, "wits": list(self.wits),
            "config": list(self.config), "delegator": self.delegator,
            "first_key_index": self.first_key_index,
        }

    def serialize(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class Outcome:
    disposition: Disposition
    state: Optional[KeyState] = None
    reason: Optional[str] = None
    superseded_sn: Optional[int] = None

    @property
    def accepted(self) -> bool:
        return self.disposition in (Disposition.ACCEPTED, Disposition.SUPERSEDING)


class History(Protocol):
    """Read-only view over stored logs, implemented by the event-log store."""

    def event_at(self, prefix: str, sn: int) -> Optional[KeyEvent]: ...

    def state_at(self, prefix: str, sn: int) -> Optional[KeyState]: ...

    def is_disputed(self, prefix: str, digest: str) -> bool: ...

    def find_event(
        self, prefix: str, sn: int, ilk: str, prior: Optional[str]
    ) -> Optional[tuple[KeyEvent, KeyState]]: ...


# ---------------------------------------------------------------- primitives


def dedupe(sigs: Iterable[IndexedSignature]) -> list[IndexedSignature]:
    seen: dict[int, IndexedSignature] = {}
    for s in sigs:
        seen.setdefault(s.index, s)
    return [seen[i] for i in sorted(seen)]


def digest_like(raw: bytes, reference: str) -> str:
    """Digest ``raw`` with the same code as the qualified ``reference``."""
    code = codec.decode(reference).code if reference else DEFAULT_DIGEST
    return digest(raw, code).qb64


def check_signatures(raw: bytes, sigs: Sequence[IndexedSignature], keys, sith: SigningThreshold) -> set[int]:
    """Verify every signature; raise unless all verify and the threshold holds."""
    indices = set()
    for s in sigs:
        if not 0 <= s.index < len(keys):
            raise Rejected(BAD_SIGNATURE, f"signer offset {s.index} out of range")
        if not verify(codec.decode(keys[s.index]), s, raw):
            raise Rejected(BAD_SIGNATURE, f"signature at offset {s.index} does not verify")
        indices.add(s.index)
    if not sith.satisfies(indices, len(keys)):
        if indices:
            raise PartialSignatures(indices)
        raise Rejected(THRESHOLD_UNMET, "no signatures")
    return indices


def _check_establishment_fields(event: KeyEvent) -> None:
    try:
        for k in event.keys:
            if codec.decode(k).code not in SIGNING_KEYS:
                raise Rejected(BAD_KEYS, f"{k} is not a signing key")
        event.sith.check_keys(len(event.keys))
        if event.next_digest and not is_digest_code(codec.decode(event.next_digest).code):
            raise Rejected(BAD_NEXT, "next commitment is not a digest")
    except ThresholdError as exc:
        raise Rejected(BAD_THRESHOLD, str(exc)) from exc
    except codec.CodecError as exc:
        raise Rejected(BAD_KEYS, str(exc)) from exc


def _check_witnesses(wits: Sequence[str], toad: int) -> None:
    if len(set(wits)) != len(wits):
        raise Rejected(WITNESS_ADD_DUPLICATE, "duplicate witness")
    for w in wits:
        if not is_non_transferable_prefix(w):
            raise Rejected(WITNESS_NOT_NON_TRANSFERABLE, w)
    if not 0 <= toad <= len(wits) or (wits and toad < 1):
        raise Rejected(TOAD_INVALID, f"toad {toad} with {len(wits)} witnesses")


def rotate_witnesses(old: Sequence[str], cuts: Sequence[str], adds: Sequence[str]) -> tuple[str, ...]:
    """New witness list: old minus cuts, then adds appended, with set checks."""
    oldset = set(old)
    if len(set(cuts)) != len(cuts) or not set(cuts) <= oldset:
        raise Rejected(WITNESS_CUT_NOT_MEMBER, "cuts must be distinct current witnesses")
    if len(set(adds)) != len(adds) or set(adds) & oldset:
        raise Rejected(WITNESS_ADD_DUPLICATE, "adds must be distinct new witnesses")
    return tuple(w for w in old if w not in set(cuts)) + tuple(adds)


def _prior_matches(state: KeyState, prior: Optional[str], history: Optional[History]) -> bool:
    if prior is None:
        return False
    if prior == state.digest:
        return True
    if codec.decode(prior).code == codec.decode(state.digest).code or history is None:
        return False
    prev = history.event_at(state.prefix, state.sn)
    return prev is not None and digest_like(prev.raw, prior) == prior


# --------------------------------------------------------------- validation


def verify_inception(event: KeyEvent, sigs: Sequence[IndexedSignature]) -> KeyState:
    if event.ilk not in INCEPTIONS:
        raise Rejected(ILK_MISMATCH, "only icp or dip may start a log")
    _check_establishment_fields(event)
    if not verify_prefix(event.prefix, InceptionSeed.from_event(event)):
        raise Rejected(PREFIX_MISMATCH, event.prefix)
    _check_witnesses(event.wits, event.toad)
    check_signatures(event.raw, sigs, event.keys, event.sith)
    return KeyState(
        prefix=event.prefix, sn=0, digest=event.digest(), ilk=event.ilk,
        last_est=(0, event.digest()), sith=event.sith, keys=event.keys,
        next_digest=event.next_digest, toad=event.toad, wits=event.wits,
        config=event.config,
        delegator=event.delegator.prefix if event.delegator else None,
        first_key_index=0,
    )


def verify_rotation(
    state: KeyState,
    event: KeyEvent,
    sigs: Sequence[IndexedSignature] = (),
    history: Optional[History] = None,
) -> KeyState:
    """Check a rotation against ``state``; return the resulting state or raise Rejected."""
    if event.ilk not in ROTATIONS:
        raise Rejected(ILK_MISMATCH, "not a rotation")
    if state.abandoned:
        raise Rejected(ABANDONED, "identifier has no committed next keys")
    if event.sn != state.sn + 1 or not _prior_matches(state, event.prior, history):
        raise Rejected(PRIOR_DIGEST_MISMATCH, f"at sn {event.sn}")
    _check_establishment_fields(event)
    try:
        committed = commit_digest(event.sith, event.keys, codec.decode(state.next_digest).code)
    except (codec.CodecError, ThresholdError) as exc:
        raise Rejected(PRE_ROTATION_MISMATCH, str(exc)) from exc
    if committed.qb64 != state.next_digest:
        raise Rejected(PRE_ROTATION_MISMATCH, "keys and threshold do not match the commitment")
    check_signatures(event.raw, sigs, event.keys, event.sith)
    wits = rotate_witnesses(state.wits, event.cuts, event.adds)
    _check_witnesses(wits, event.toad)
    dig = event.digest()
    return replace(
        state, sn=event.sn, digest=dig, ilk=event.ilk, last_est=(event.sn, dig),
        sith=event.sith, keys=event.keys, next_digest=event.next_digest,
        toad=event.toad, wits=wits,
        first_key_index=state.first_key_index + len(state.keys),
    )


def verify_interaction(
    state: KeyState,
    event: KeyEvent,
    sigs: Sequence[IndexedSignature],
    history: Optional[History] = None,
) -> KeyState:
    if state.abandoned:
        raise Rejected(ABANDONED, "identifier has no committed next keys")
    if state.est_only:
        raise Rejected(EST_ONLY_VIOLATION, "log accepts establishment events only")
    if event.sn != state.sn + 1 or not _prior_matches(state, event.prior, history):
        raise Rejected(PRIOR_DIGEST_MISMATCH, f"at sn {event.sn}")
    check_signatures(event.raw, sigs, state.keys, state.sith)
    return replace(state, sn=event.sn, digest=event.digest(), ilk=event.ilk)


def _anchor_est_sn(found: tuple[KeyEvent, KeyState]) -> int:
    return found[1].last_est[0]


def verify_delegation(
    event: KeyEvent,
    view: History,
    superseded: Optional[KeyEvent] = None,
) -> tuple[KeyEvent, KeyState]:
    """Locate the delegating event and check its seal; returns it with its state."""
    loc = event.delegator
    if event.ilk not in DELEGATED or loc is None:
        raise Rejected(ILK_MISMATCH, "not a delegated event")
    found = view.find_event(loc.prefix, loc.sn, loc.ilk, loc.prior)
    if found is None:
        raise Rejected(DELEGATING_EVENT_NOT_FOUND, f"{loc.prefix} sn {loc.sn}")
    delegating = found[0]
    seals = [
        s for s in delegating.seals
        if isinstance(s, EventSeal) and s.prefix == event.prefix and s.sn == event.sn
    ]
    if not seals:
        raise Rejected(SEAL_MISMATCH, "delegating event has no seal for this event")
    if not any(digest_like(event.raw, s.digest) == s.digest for s in seals):
        raise Rejected(SEAL_MISMATCH, "sealed digest differs from the delegated event")
    if superseded is not None:
        old = superseded.delegator
        old_found = view.find_event(old.prefix, old.sn, old.ilk, old.prior) if old else None
        if old_found is not None and _anchor_est_sn(found) <= _anchor_est_sn(old_found):
            raise Rejected(
                STALE_DELEGATOR_AUTHORITY,
                "delegator keys were not rotated after the superseded delegation",
            )
    return found


def _verify_next(
    state: KeyState,
    event: KeyEvent,
    sigs: Sequence[IndexedSignature],
    history: Optional[History],
    superseded: Optional[KeyEvent] = None,
) -> KeyState:
    """Validate ``event`` as the successor of ``state``."""
    if event.prefix != state.prefix:
        raise Rejected(WRONG_PREFIX, event.prefix)
    if event.ilk in INCEPTIONS:
        raise Rejected(ILK_MISMATCH, "inception after sn 0")
    if event.ilk == "ixn":
        return verify_interaction(state, event, sigs, history)
    if (event.ilk == "drt") != (state.delegator is not None):
        raise Rejected(ILK_MISMATCH, f"{event.ilk} in a {'delegated' if state.delegator else 'direct'} log")
    new_state = verify_rotation(state, event, sigs, history)
    if event.ilk == "drt":
        if history is None:
            raise Rejected(NO_HISTORY, "delegation needs the delegator's log")
        if event.delegator.prefix != state.delegator:
            raise Rejected(SEAL_MISMATCH, "delegator changed")
        verify_delegation(event, history, superseded)
    return new_state


def _verify_genesis(event: KeyEvent, sigs, history: Optional[History]) -> KeyState:
    state = verify_inception(event, sigs)
    if event.ilk == "dip":
        if history is None:
            raise Rejected(NO_HISTORY, "delegation needs the delegator's log")
        verify_delegation(event, history)
    return state


# --------------------------------------------------------------------- apply


def _reject(exc: Rejected) -> Outcome:
    return Outcome(Disposition.REJECTED, reason=exc.reason)


def _escrowable(event: KeyEvent, sigs: Sequence[IndexedSignature]) -> None:
    """Out-of-order admission: check whatever can be checked without the gap."""
    if not sigs:
        raise Rejected(THRESHOLD_UNMET, "no signatures")
    if event.establishment:
        _check_establishment_fields(event)
        try:
            check_signatures(event.raw, sigs, event.keys, event.sith)
        except PartialSignatures:
            pass


def apply(
    state: Optional[KeyState],
    event: KeyEvent,
    sigs: Iterable[IndexedSignature],
    history: Optional[History] = None,
) -> Outcome:
    sigs = dedupe(sigs)
    if state is None:
        if event.sn != 0:
            try:
                _escrowable(event, sigs)
            except Rejected as exc:
                return _reject(exc)
            return Outcome(Disposition.ESCROW_OUT_OF_ORDER, reason="unknown-prefix")
        try:
            return Outcome(Disposition.ACCEPTED, _verify_genesis(event, sigs, history))
        except PartialSignatures as exc:
            return Outcome(Disposition.ESCROW_PARTIAL, reason=exc.reason)
        except Rejected as exc:
            if exc.reason == DELEGATING_EVENT_NOT_FOUND:
                return Outcome(Disposition.ESCROW_OUT_OF_ORDER, reason=exc.reason)
            return _reject(exc)

    if event.prefix != state.prefix:
        return Outcome(Disposition.REJECTED, reason=WRONG_PREFIX)
    if event.sn <= state.sn:
        return _apply_past(state, event, sigs, history)
    if history is not None and event.prior and history.is_disputed(state.prefix, event.prior):
        return Outcome(Disposition.REJECTED, reason=DISPUTED_BRANCH)
    if event.sn > state.sn + 1:
        if state.abandoned:
            return Outcome(Disposition.REJECTED, reason=ABANDONED)
        try:
            _escrowable(event, sigs)
        except Rejected as exc:
            return _reject(exc)
        return Outcome(Disposition.ESCROW_OUT_OF_ORDER, reason="missing-prior-events")
    try:
        return Outcome(Disposition.ACCEPTED, _verify_next(state, event, sigs, history))
    except PartialSignatures as exc:
        return Outcome(Disposition.ESCROW_PARTIAL, reason=exc.reason)
    except Rejected as exc:
        if exc.reason == DELEGATING_EVENT_NOT_FOUND:
            return Outcome(Disposition.ESCROW_OUT_OF_ORDER, reason=exc.reason)
        return _reject(exc)


def _apply_past(state: KeyState, event: KeyEvent, sigs, history: Optional[History]) -> Outcome:
    sn = event.sn
    existing = history.event_at(state.prefix, sn) if history is not None else None
    if existing is None:
        if sn == state.sn and event.digest() == state.digest:
            return Outcome(Disposition.DUPLICATE, state)
        return Outcome(Disposition.REJECTED, reason=NO_HISTORY)
    if existing.raw == event.raw:
        return Outcome(Disposition.DUPLICATE, state)
    if history.is_disputed(state.prefix, event.digest()):
        return Outcome(Disposition.REJECTED, reason=DISPUTED_BRANCH)
    try:
        if sn == 0:
            _verify_genesis(event, sigs, history)
            return Outcome(Disposition.DUPLICITOUS, state)
        prev = history.state_at(state.prefix, sn - 1)
        if prev is None:
            return Outcome(Disposition.REJECTED, reason=NO_HISTORY)
        if event.prior and history.is_disputed(state.prefix, event.prior):
            return Outcome(Disposition.REJECTED, reason=DISPUTED_BRANCH)
        if _can_supersede(state, event, existing, history):
            superseded = existing if existing.ilk in ROTATIONS else None
            new_state = _verify_next(prev, event, sigs, history, superseded)
            return Outcome(Disposition.SUPERSEDING, new_state, superseded_sn=sn)
        _verify_next(prev, event, sigs, history)
        return Outcome(Disposition.DUPLICITOUS, state)
    except Rejected as exc:
        return _reject(exc)


def _can_supersede(state: KeyState, event: KeyEvent, existing: KeyEvent, history: History) -> bool:
    if event.ilk not in ROTATIONS:
        return False
    if existing.ilk == "ixn":
        tail = (history.event_at(state.prefix, j) for j in range(event.sn, state.sn + 1))
        return all(e is not None and e.ilk == "ixn" for e in tail)
    # rotation over rotation only inside delegated logs
    return existing.ilk == "drt" and event.ilk == "drt"


def key_indices(sizes: Sequence[int]) -> list[int]:
    """Starting key index r_l for each establishment event, plus the next one."""
    out = [0]
    for size in sizes:
        out.append(out[-1] + size)
    return out


# ------------------------------------------------------------------- escrows


class EscrowCaches:
    """Bounded FIFO escrows for out-of-order and partially signed events."""

    def __init__(self, limit: int = 1024):
        self.limit = limit
        self.out_of_order: OrderedDict[tuple[str, int, str], tuple[KeyEvent, tuple]] = OrderedDict()
        self.partial_sig: OrderedDict[str, tuple[KeyEvent, dict[int, IndexedSignature]]] = OrderedDict()

    def _trim(self, cache: OrderedDict) -> None:
        while len(cache) > self.limit:
            cache.popitem(last=False)

    def hold_out_of_order(self, event: KeyEvent, sigs) -> None:
        key = (event.prefix, event.sn, event.digest())
        if key in self.out_of_order:
            prior_sigs = {s.index: s for s in self.out_of_order[key][1]}
            for s in sigs:
                prior_sigs.setdefault(s.index, s)
            sigs = prior_sigs.values()
        self.out_of_order[key] = (event, tuple(dedupe(sigs)))
        self._trim(self.out_of_order)

    def hold_partial(self, event: KeyEvent, sigs) -> list[IndexedSignature]:
        """Merge ``sigs`` into the entry for this exact event; return the union."""
        key = event.digest()
        held = self.partial_sig.get(key)
        merged = dict(held[1]) if held is not None and held[0].raw == event.raw else {}
        for s in sigs:
            merged.setdefault(s.index, s)
        self.partial_sig[key] = (event, merged)
        self._trim(self.partial_sig)
        return [merged[i] for i in sorted(merged)]

    def partial_for(self, event: KeyEvent) -> list[IndexedSignature]:
        held = self.partial_sig.get(event.digest())
        if held is None or held[0].raw != event.raw:
            return []
        return [held[1][i] for i in sorted(held[1])]

    def drop_partial(self, event: KeyEvent) -> None:
        self.partial_sig.pop(event.digest(), None)

    def drop_out_of_order(self, event: KeyEvent) -> None:
        self.out_of_order.pop((event.prefix, event.sn, event.digest()), None)

    def waiting(self) -> list[tuple[KeyEvent, tuple]]:
        """Out-of-order entries sorted by (prefix, sn), FIFO within ties."""
        return sorted(self.out_of_order.values(), key=lambda item: (item[0].prefix, item[0].sn))


# -------------------------------------------------------- delegation builder


@dataclass(frozen=True)
class DelegatedRotation:
    """What a delegate wants in its next rotation, before anchoring."""

    state: KeyState
    keys: tuple[str, ...]
    next_digest: str = ""
    sith: object = None
    toad: Optional[int] = None
    cuts: tuple[str, ...] = ()
    adds: tuple[str, ...] = ()
    seals: tuple[Seal, ...] = ()


@dataclass(frozen=True)
class DelegatorRotation:
    """The delegator's own rotation parameters when it delegates by rotating."""

    keys: tuple[str, ...]
    next_digest: str
    sith: object = None
    toad: Optional[int] = None
    cuts: tuple[str, ...] = ()
    adds: tuple[str, ...] = ()


def generate_delegation_pair(
    delegator_state: KeyState,
    delegates: Union[InceptionSeed, DelegatedRotation, Sequence[Union[InceptionSeed, DelegatedRotation]]],
    kind: str = "interaction",
    rotation: Optional[DelegatorRotation] = None,
    digest_code: str = DEFAULT_DIGEST,
):
    """Build a delegating event and the delegated event(s) it anchors.

    Returns ``(delegating, delegated)``; ``delegated`` is a list when a list
    of delegates was given. Signing is left to the caller.
    """
    single = isinstance(delegates, (InceptionSeed, DelegatedRotation))
    items = [delegates] if single else list(delegates)
    if kind not in ("interaction", "rotation"):
        raise ValueError("kind is 'interaction' or 'rotation'")
    if kind == "rotation" and rotation is None:
        raise ValueError("delegating by rotation needs the delegator's rotation parameters")
    if kind == "rotation" and delegator_state.delegator:
        raise ValueError("a delegated delegator must rotate through its own delegator")
    ilk = "ixn" if kind == "interaction" else "rot"
    sn = delegator_state.sn + 1
    loc = LocationSeal(delegator_state.prefix, sn, ilk, delegator_state.digest)

    delegated: list[KeyEvent] = []
    seals: list[Seal] = []
    for item in items:
        if isinstance(item, InceptionSeed):
            seed = replace(item, delegator=loc)
            ev = seed.to_event(derive_self_addressing(seed, digest_code).qb64)
        else:
            st = item.state
            ev = rotate(
                st.prefix, st.sn + 1, st.digest, item.keys, item.next_digest,
                sith=item.sith,
                toad=st.toad if item.toad is None else item.toad,
                cuts=item.cuts, adds=item.adds, seals=item.seals, delegator=loc,
            )
        delegated.append(ev)
        seals.append(EventSeal(ev.prefix, ev.sn, ev.digest(digest_code)))

    if kind == "interaction":
        delegating = interact(delegator_state.prefix, sn, delegator_state.digest, seals)
    else:
        delegating = rotate(
            delegator_state.prefix, sn, delegator_state.digest, rotation.keys,
            rotation.next_digest, sith=rotation.sith,
            toad=delegator_state.toad if rotation.toad is None else rotation.toad,
            cuts=rotation.cuts, adds=rotation.adds, seals=seals,
        )
    return delegating, (delegated[0] if single else delegated)
