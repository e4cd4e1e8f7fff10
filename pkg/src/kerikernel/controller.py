"""Controller-side event creation.

A controller draws signing keys from a numbered key chain: the keys of the
l-th establishment event occupy indices r_l .. r_l + L_l - 1 and the committed
next keys follow immediately, so r_{l+1} = r_l + L_l.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

from .codec import IndexedSignature
from .crypto import DEFAULT_DIGEST, Signer, counter_seed
from .engine import (
    DelegatedRotation,
    DelegatorRotation,
    Disposition,
    generate_delegation_pair,
)
from .events import KeyEvent, Seal, interact, next_digest, rotate
from .identifier import InceptionSeed, incept
from .logs import EventLog
from .threshold import parse_threshold


class ControllerError(RuntimeError):
    pass


class KeyChain:
    """Signers addressed by key index, derived on demand and cached."""

    def __init__(self, derive: Callable[[int], Signer]):
        self._derive = derive
        self._cache: dict[int, Signer] = {}

    def __getitem__(self, index: int) -> Signer:
        if index not in self._cache:
            self._cache[index] = self._derive(index)
        return self._cache[index]

    @classmethod
    def deterministic(cls, label: str, scheme: str = "Ed25519") -> "KeyChain":
        from .crypto import SEED_SIZES

        size = SEED_SIZES[scheme]
        return cls(lambda j: Signer(counter_seed(label, j, size), scheme))


def _default_sith(n: int):
    return max(1, (n + 1) // 2)


class Controller:
    def __init__(
        self,
        chain: Optional[KeyChain] = None,
        label: str = "controller",
        log: Optional[EventLog] = None,
        digest_code: str = DEFAULT_DIGEST,
        kind: str = "JSON",
    ):
        self.chain = chain or KeyChain.deterministic(label)
        self.log = log if log is not None else EventLog()
        self.digest_code = digest_code
        self.kind = kind
        self.prefix: Optional[str] = None
        self.sizes: list[int] = []  # L_l for each establishment event so far
        self.next_count = 0
        self.next_sith = None
        self.events: list[tuple[KeyEvent, tuple[IndexedSignature, ...]]] = []

    # ------------------------------------------------------------- indices

    @property
    def first_index(self) -> int:
        return sum(self.sizes[:-1])

    @property
    def current_signers(self) -> list[Signer]:
        r = self.first_index
        return [self.chain[r + j] for j in range(self.sizes[-1])]

    def _next_signers(self, count: int) -> list[Signer]:
        r = sum(self.sizes)
        return [self.chain[r + j] for j in range(count)]

    def _commit(self, count: int, sith) -> str:
        if count == 0:
            return ""
        sith = parse_threshold(sith if sith is not None else _default_sith(count))
        keys = [s.verfer.qb64 for s in self._next_signers(count)]
        return next_digest(sith, keys, self.digest_code).qb64

    @property
    def state(self):
        return self.log.state(self.prefix) if self.prefix else None

    # --------------------------------------------------------------- signing

    def sign(self, event: KeyEvent, signers: Optional[Sequence[Signer]] = None,
             indices: Optional[Iterable[int]] = None) -> tuple[IndexedSignature, ...]:
        signers = signers if signers is not None else self.current_signers
        picks = range(len(signers)) if indices is None else indices
        return tuple(signers[i].sign_indexed(event.raw, i) for i in picks)

    def _record(self, event: KeyEvent, sigs, accept: bool = True):
        self.events.append((event, sigs))
        if accept:
            disp = self.log.append_first_seen(event, sigs)
            if disp not in (Disposition.ACCEPTED, Disposition.SUPERSEDING):
                reason = self.log.last.reason if self.log.last else ""
                raise ControllerError(f"own {event.ilk} at sn {event.sn} was {disp} ({reason})")
        return event, sigs

    # ---------------------------------------------------------------- events

    def inception_seed(self, keys: int = 1, next_count: int = 1, sith=None, next_sith=None,
                       toad: int = 0, wits: Iterable[str] = (), config: Iterable[str] = ()) -> InceptionSeed:
        self.sizes = [keys]
        self.next_count, self.next_sith = next_count, next_sith
        signers = self.current_signers
        return InceptionSeed(
            keys=tuple(s.verfer.qb64 for s in signers),
            sith=sith if sith is not None else _default_sith(keys),
            next_digest=self._commit(next_count, next_sith),
            toad=toad, wits=tuple(wits), config=tuple(config), kind=self.kind,
        )

    def incept(self, keys: int = 1, next_count: int = 1, sith=None, next_sith=None,
               toad: int = 0, wits: Iterable[str] = (), config: Iterable[str] = (),
               code: Optional[str] = None, accept: bool = True):
        seed = self.inception_seed(keys, next_count, sith, next_sith, toad, wits, config)
        code = code or self.digest_code
        signer = self.current_signers[0] if code in ("0B", "0C", "1AAE") else None
        event = incept(
            seed.keys, seed.sith, seed.next_digest, seed.toad, seed.wits, seed.config,
            code=code, signer=signer, kind=self.kind,
        )
        self.prefix = event.prefix
        return self._record(event, self.sign(event), accept)

    def rotate(self, next_count: int = 1, next_sith=None, toad: Optional[int] = None,
               cuts: Iterable[str] = (), adds: Iterable[str] = (), seals: Iterable[Seal] = (),
               accept: bool = True, sn: Optional[int] = None):
        """Rotate to the committed next keys; ``next_count=0`` abandons the identifier.

        ``sn`` places the rotation at an earlier location, which is how a
        controller recovers by superseding interaction events.
        """
        state = self.state
        if state is None:
            raise ControllerError("rotate before inception")
        if state.abandoned:
            raise ControllerError("abandoned-identifier")
        base = state if sn is None else self.log.store.state_at(self.prefix, sn - 1)
        sith = self.next_sith if self.next_sith is not None else _default_sith(self.next_count)
        self.sizes.append(self.next_count)
        keys = [s.verfer.qb64 for s in self.current_signers]
        commitment = self._commit(next_count, next_sith)
        self.next_count, self.next_sith = next_count, next_sith
        event = rotate(
            self.prefix, base.sn + 1, base.digest, keys, commitment, sith=sith,
            toad=base.toad if toad is None else toad, cuts=cuts, adds=adds, seals=seals,
            kind=self.kind,
        )
        return self._record(event, self.sign(event), accept)

    def interact(self, seals: Iterable[Seal] = (), accept: bool = True):
        state = self.state
        if state is None:
            raise ControllerError("interact before inception")
        if state.abandoned:
            raise ControllerError("abandoned-identifier")
        event = interact(self.prefix, state.sn + 1, state.digest, seals, kind=self.kind)
        return self._record(event, self.sign(event), accept)


def delegate_inception(delegator: Controller, delegate: Controller, kind: str = "interaction",
                       keys: int = 1, next_count: int = 1, toad: int = 0,
                       wits: Iterable[str] = (), delegator_next: int = 1):
    """Create a delegating event and the delegated inception it anchors.

    Both controllers must share one event log so the delegation can be checked.
    """
    seed = delegate.inception_seed(keys, next_count, toad=toad, wits=wits)
    return _delegate(delegator, delegate, seed, kind, delegator_next)


def delegate_rotation(delegator: Controller, delegate: Controller, kind: str = "interaction",
                      next_count: int = 1, delegator_next: int = 1):
    state = delegate.state
    sith = delegate.next_sith if delegate.next_sith is not None else _default_sith(delegate.next_count)
    delegate.sizes.append(delegate.next_count)
    keys = tuple(s.verfer.qb64 for s in delegate.current_signers)
    commitment = delegate._commit(next_count, None)
    delegate.next_count, delegate.next_sith = next_count, None
    spec = DelegatedRotation(state, keys, commitment, sith=sith)
    return _delegate(delegator, delegate, spec, kind, delegator_next)


def _delegate(delegator: Controller, delegate: Controller, spec, kind: str, delegator_next: int):
    state = delegator.state
    rotation = None
    if kind == "rotation":
        sith = delegator.next_sith if delegator.next_sith is not None else _default_sith(delegator.next_count)
        delegator.sizes.append(delegator.next_count)
        keys = tuple(s.verfer.qb64 for s in delegator.current_signers)
        commitment = delegator._commit(delegator_next, None)
        delegator.next_count, delegator.next_sith = delegator_next, None
        rotation = DelegatorRotation(keys, commitment, sith=sith)
    delegating, delegated = generate_delegation_pair(
        state, spec, kind, rotation, delegator.digest_code
    )
    if delegated.ilk == "dip":
        delegate.prefix = delegated.prefix
    d_sigs = delegator.sign(delegating)
    delegator._record(delegating, d_sigs)
    sigs = delegate.sign(delegated)
    delegate._record(delegated, sigs)
    return (delegating, d_sigs), (delegated, sigs)
