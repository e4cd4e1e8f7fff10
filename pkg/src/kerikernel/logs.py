"""Append-only key event receipt logs and duplicity records.

``KERLStore`` keeps first-seen events per prefix along with their receipts and
the state reached after each one. ``DELStore`` keeps proofs of duplicity.
``EventLog`` is the processor that runs events through the state engine,
handles escrows and writes outcomes to both stores.

Everything the stores learn is also written to an append-only journal. With a
root directory the journal and every event are written to disk before an
operation returns; reopening the directory replays and re-verifies the journal.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import codec
from .codec import IndexedSignature
from .crypto import verify
from .engine import (
    Disposition,
    EscrowCaches,
    KeyState,
    Outcome,
    apply,
    check_signatures,
    Rejected,
)
from .events import (
    EventError,
    KeyEvent,
    Receipt,
    deserialize,
    frame,
    frame_receipt,
    iter_messages,
    parse_message,
)


class LogError(Exception):
    pass


class StorageFailure(LogError):
    pass


class CorruptLog(LogError):
    pass


class UnknownEvent(LogError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class Record:
    event: KeyEvent
    raw: bytes
    sigs: tuple[IndexedSignature, ...]
    state: KeyState
    first_seen: str
    couplets: dict[str, str] = field(default_factory=dict)
    vrcts: dict[str, Receipt] = field(default_factory=dict)
    accountable: Optional[bool] = None

    @property
    def sn(self) -> int:
        return self.event.sn

    @property
    def digest(self) -> str:
        return self.state.digest


@dataclass(frozen=True)
class Branch:
    """Events forked off the trunk by a superseding rotation."""

    sn: int
    superseding_digest: str
    records: tuple[Record, ...]


class KERLStore:
    def __init__(self, root: Optional[os.PathLike] = None):
        self.root = Path(root) if root is not None else None
        self.trunk: dict[str, list[Record]] = {}
        self.branches: dict[str, list[Branch]] = {}
        self.journal: list[bytes] = []
        self._disputed: dict[str, dict[str, Record]] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    # -------------------------------------------------------- history view

    def event_at(self, prefix: str, sn: int) -> Optional[KeyEvent]:
        recs = self.trunk.get(prefix, [])
        return recs[sn].event if 0 <= sn < len(recs) else None

    def state_at(self, prefix: str, sn: int) -> Optional[KeyState]:
        recs = self.trunk.get(prefix, [])
        return recs[sn].state if 0 <= sn < len(recs) else None

    def is_disputed(self, prefix: str, digest: str) -> bool:
        return digest in self._disputed.get(prefix, {})

    def find_event(self, prefix, sn, ilk, prior):
        candidates = []
        recs = self.trunk.get(prefix, [])
        if 0 <= sn < len(recs):
            candidates.append(recs[sn])
        candidates += [r for r in self._disputed.get(prefix, {}).values() if r.sn == sn]
        for r in candidates:
            if r.event.ilk == ilk and r.event.prior == prior:
                return r.event, r.state
        return None

    # -------------------------------------------------------------- queries

    def prefixes(self) -> list[str]:
        return list(self.trunk)

    def records(self, prefix: str) -> list[Record]:
        return list(self.trunk.get(prefix, []))

    def state(self, prefix: str) -> Optional[KeyState]:
        recs = self.trunk.get(prefix)
        return recs[-1].state if recs else None

    def record(self, prefix: str, sn: int, digest: Optional[str] = None) -> Optional[Record]:
        recs = self.trunk.get(prefix, [])
        if 0 <= sn < len(recs) and (digest is None or recs[sn].digest == digest):
            return recs[sn]
        if digest is not None:
            rec = self._disputed.get(prefix, {}).get(digest)
            if rec is not None and rec.sn == sn:
                return rec
        return None

    def disputed(self, prefix: str) -> list[Record]:
        return [r for b in self.branches.get(prefix, []) for r in b.records]

    def journal_digest(self, upto: Optional[int] = None) -> str:
        h = hashlib.sha256()
        for entry in self.journal[:upto]:
            h.update(len(entry).to_bytes(8, "big") + entry)
        return h.hexdigest()

    # ------------------------------------------------------------ mutation

    def _write(self, entry: bytes, files: Iterable[tuple[str, bytes]] = ()) -> None:
        if self.root is not None:
            try:
                for rel, data in files:
                    path = self.root / rel
                    path.parent.mkdir(parents=True, exist_ok=True)
                    if not path.exists():
                        with open(path, "wb") as fh:
                            fh.write(data)
                            fh.flush()
                            os.fsync(fh.fileno())
                with open(self.root / "journal.log", "ab") as fh:
                    fh.write(entry + b"\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
        self.journal.append(entry)

    @staticmethod
    def event_path(prefix: str, sn: int, digest: str) -> str:
        return f"{prefix}/{sn:032x}.{digest}"

    def append(self, rec: Record) -> None:
        rel = self.event_path(rec.event.prefix, rec.sn, rec.digest)
        entry = f"evt {rec.event.prefix} {rec.sn:032x} {rec.digest} {rec.first_seen} {rel}".encode()
        self._write(entry, [(rel, frame(rec.raw, rec.sigs))])
        self.trunk.setdefault(rec.event.prefix, []).append(rec)

    def supersede(self, prefix: str, sn: int, rec: Record, toad_at: Callable[[Record], int]) -> Branch:
        recs = self.trunk[prefix]
        moved = recs[sn:]
        for r in moved:
            # without witnesses a validator receipt is what makes an event stick
            toad = toad_at(r)
            r.accountable = len(r.couplets) >= toad if toad > 0 else bool(r.vrcts)
        branch = Branch(sn, rec.digest, tuple(moved))
        flags = "".join("1" if r.accountable else "0" for r in moved)
        self._write(f"sup {prefix} {sn:032x} {rec.digest} {flags}".encode())
        del recs[sn:]
        self.branches.setdefault(prefix, []).append(branch)
        for r in moved:
            self._disputed.setdefault(prefix, {})[r.digest] = r
        self.append(rec)
        return branch

    def add_couplet(self, rec: Record, witness: str, sig: str) -> bool:
        if witness in rec.couplets:
            return False
        self._write(f"rct {rec.event.prefix} {rec.sn:032x} {rec.digest} {witness} {sig}".encode())
        rec.couplets[witness] = sig
        return True

    def add_vrct(self, rec: Record, receipt: Receipt) -> bool:
        validator = receipt.validator_seal.prefix
        if validator in rec.vrcts:
            return False
        rel = f"{rec.event.prefix}/vrct/{rec.sn:032x}.{validator}"
        self._write(
            f"vrc {rec.event.prefix} {rec.sn:032x} {rec.digest} {validator} {rel}".encode(),
            [(rel, frame_receipt(receipt))],
        )
        rec.vrcts[validator] = receipt
        return True


@dataclass(frozen=True)
class DuplicityProof:
    prefix: str
    sn: int
    first: bytes
    first_sigs: tuple[IndexedSignature, ...]
    second: bytes
    second_sigs: tuple[IndexedSignature, ...]
    prior_state: Optional[KeyState]

    def verify(self) -> bool:
        """Both versions verify under the control in force, yet conflict."""
        if self.first == self.second:
            return False
        try:
            a, b = deserialize(self.first), deserialize(self.second)
            if (a.prefix, a.sn) != (b.prefix, b.sn) or (a.prefix, a.sn) != (self.prefix, self.sn):
                return False
            for ev, sigs in ((a, self.first_sigs), (b, self.second_sigs)):
                keys, sith = _signing_authority(ev, self.prior_state)
                check_signatures(ev.raw, sigs, keys, sith)
        except (EventError, Rejected, codec.CodecError):
            return False
        return True


@dataclass(frozen=True)
class WitnessDuplicity:
    witness: str
    prefix: str
    sn: int
    receipted_digest: str
    stored_digest: str
    signature: str


def _signing_authority(event: KeyEvent, prior: Optional[KeyState]):
    if event.establishment or prior is None:
        return event.keys, event.sith
    return prior.keys, prior.sith


class DELStore:
    def __init__(self, root: Optional[os.PathLike] = None):
        self.root = Path(root) if root is not None else None
        self.proofs: dict[tuple[str, int], list[DuplicityProof]] = {}
        self.witness: dict[str, list[WitnessDuplicity]] = {}

    def _persist(self, name: str, data: bytes) -> None:
        if self.root is None:
            return
        try:
            path = self.root / "del" / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "ab") as fh:
                fh.write(data + b"\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc

    def add(self, proof: DuplicityProof) -> None:
        key = (proof.prefix, proof.sn)
        existing = self.proofs.setdefault(key, [])
        if any(p.second == proof.second for p in existing):
            return
        self._persist(f"{proof.prefix}.{proof.sn:032x}", frame(proof.second, proof.second_sigs))
        existing.append(proof)

    def add_witness(self, entry: WitnessDuplicity) -> None:
        entries = self.witness.setdefault(entry.witness, [])
        if entry in entries:
            return
        self._persist(
            f"witness.{entry.witness}",
            f"{entry.prefix} {entry.sn:x} {entry.receipted_digest} {entry.stored_digest} {entry.signature}".encode(),
        )
        entries.append(entry)

    def __len__(self) -> int:
        return sum(len(v) for v in self.proofs.values()) + sum(len(v) for v in self.witness.values())

    def all_proofs(self) -> list[DuplicityProof]:
        return [p for v in self.proofs.values() for p in v]


class EventLog:
    """First-seen event processor over a KERL store, a DEL store and escrows."""

    def __init__(
        self,
        store: Optional[KERLStore] = None,
        dels: Optional[DELStore] = None,
        escrow_limit: int = 1024,
        clock: Callable[[], str] = utc_now,
        escrow_receipts: bool = True,
    ):
        self.store = store if store is not None else KERLStore()
        self.dels = dels if dels is not None else DELStore(self.store.root)
        self.escrows = EscrowCaches(escrow_limit)
        self.clock = clock
        self.escrow_receipts = escrow_receipts
        self.receipt_escrow: list[Receipt] = []
        self.last: Optional[Outcome] = None
        self.on_supersede: list[Callable[[str, Branch], None]] = []

    # ------------------------------------------------------------- events

    def state(self, prefix: str) -> Optional[KeyState]:
        return self.store.state(prefix)

    def append_first_seen(self, event: KeyEvent, sigs: Iterable[IndexedSignature] = ()) -> Disposition:
        sigs = tuple(sigs)
        outcome = self._process(event, sigs)
        if outcome.disposition == Disposition.ESCROW_PARTIAL:
            merged = self.escrows.hold_partial(event, sigs)
            if len(merged) > len(sigs):
                retry = self._process(event, merged)
                if retry.accepted:
                    self.escrows.drop_partial(event)
                    outcome = retry
        elif outcome.disposition == Disposition.ESCROW_OUT_OF_ORDER:
            self.escrows.hold_out_of_order(event, sigs)
        self.last = outcome
        if outcome.accepted:
            self._drain()
        return outcome.disposition

    def _process(self, event: KeyEvent, sigs) -> Outcome:
        state = self.store.state(event.prefix)
        outcome = apply(state, event, sigs, self.store)
        if outcome.disposition == Disposition.ACCEPTED:
            self.store.append(Record(event, event.raw, tuple(sigs), outcome.state, self.clock()))
        elif outcome.disposition == Disposition.SUPERSEDING:
            rec = Record(event, event.raw, tuple(sigs), outcome.state, self.clock())
            prior = self.store.state_at(event.prefix, event.sn - 1)
            branch = self.store.supersede(event.prefix, event.sn, rec, lambda r: prior.toad)
            for hook in self.on_supersede:
                hook(event.prefix, branch)
        elif outcome.disposition == Disposition.DUPLICITOUS:
            first = self.store.record(event.prefix, event.sn)
            prior = self.store.state_at(event.prefix, event.sn - 1) if event.sn else None
            self.dels.add(DuplicityProof(
                event.prefix, event.sn, first.raw, first.sigs, event.raw, tuple(sigs), prior,
            ))
        return outcome

    def _drain(self) -> None:
        progress = True
        while progress:
            progress = False
            for event, sigs in self.escrows.waiting():
                outcome = self._process(event, sigs)
                if outcome.disposition == Disposition.ESCROW_OUT_OF_ORDER:
                    continue
                self.escrows.drop_out_of_order(event)
                if outcome.accepted:
                    progress = True
                    break
        self._drain_receipts()

    # ----------------------------------------------------------- receipts

    def _witnesses_for(self, rec: Record) -> set[str]:
        wits = set(rec.state.wits)
        if rec.sn > 0:
            prev = self.store.state_at(rec.event.prefix, rec.sn - 1)
            if prev is not None and rec.event.establishment:
                wits |= set(prev.wits)
        return wits

    def ingest_receipt(self, receipt: Receipt) -> int:
        if receipt.ilk == "vrct":
            return int(self.ingest_validator_receipt(receipt))
        rec = self.store.record(receipt.prefix, receipt.sn, receipt.digest)
        if rec is None:
            stored = self.store.record(receipt.prefix, receipt.sn)
            if stored is not None:
                for wit, sig in receipt.couplets:
                    self.dels.add_witness(WitnessDuplicity(
                        wit, receipt.prefix, receipt.sn, receipt.digest, stored.digest, sig,
                    ))
                return len(stored.couplets)
            if not self.escrow_receipts:
                raise UnknownEvent(f"no event {receipt.prefix} sn {receipt.sn}")
            self.receipt_escrow.append(receipt)
            del self.receipt_escrow[:-self.escrows.limit]
            return 0
        allowed = self._witnesses_for(rec)
        for wit, sig in receipt.couplets:
            if wit not in allowed or wit in rec.couplets:
                continue
            try:
                key, signature = codec.decode(wit), codec.decode(sig)
                ok = verify(key, signature, rec.raw)
            except (codec.CodecError, ValueError):
                ok = False
            if ok:
                self.store.add_couplet(rec, wit, sig)
        return len(rec.couplets)

    def ingest_validator_receipt(self, receipt: Receipt) -> bool:
        rec = self.store.record(receipt.prefix, receipt.sn, receipt.digest)
        if rec is None:
            if not self.escrow_receipts:
                raise UnknownEvent(f"no event {receipt.prefix} sn {receipt.sn}")
            self.receipt_escrow.append(receipt)
            return False
        seal = receipt.validator_seal
        vrec = self.store.record(seal.prefix, seal.sn, seal.digest)
        if vrec is None or not vrec.event.establishment:
            if self.escrow_receipts:
                self.receipt_escrow.append(receipt)
            return False
        try:
            check_signatures(rec.raw, receipt.sigs, vrec.event.keys, vrec.event.sith)
        except Rejected:
            return False
        return self.store.add_vrct(rec, receipt)

    def _drain_receipts(self) -> None:
        pending, self.receipt_escrow = self.receipt_escrow, []
        for r in pending:
            self.ingest_receipt(r)

    # --------------------------------------------------------- replay/export

    def replay_verify(self, prefix: str) -> KeyState:
        fresh = EventLog(clock=self.clock)
        self._replay_into(fresh, prefix, set())
        live = self.store.state(prefix)
        replayed = fresh.store.state(prefix)
        if replayed != live:
            raise CorruptLog(f"replayed state of {prefix} differs from the live state")
        return replayed

    def _replay_into(self, fresh: "EventLog", prefix: str, seen: set[str]) -> None:
        if prefix in seen:
            return
        seen.add(prefix)
        recs = self.store.records(prefix)
        if not recs:
            raise CorruptLog(f"no log for {prefix}")
        delegator = recs[0].state.delegator
        if delegator:
            self._replay_into(fresh, delegator, seen)
        for rec in recs:
            try:
                event = deserialize(rec.raw)
            except EventError as exc:
                raise CorruptLog(f"{prefix} sn {rec.sn}: {exc}") from exc
            disp = fresh.append_first_seen(event, rec.sigs)
            if disp != Disposition.ACCEPTED:
                reason = fresh.last.reason if fresh.last else ""
                raise CorruptLog(f"{prefix} sn {rec.sn} replays as {disp} ({reason})")

    def export(self, prefix: str) -> bytes:
        out = []
        for rec in self.store.records(prefix):
            out.append(frame(rec.raw, rec.sigs, list(rec.couplets.items())))
            out.extend(frame_receipt(v) for v in rec.vrcts.values())
        return b"".join(out)

    def import_stream(self, stream: bytes, strict: bool = False) -> list[Disposition]:
        results: list[Disposition] = []
        try:
            for msg in iter_messages(stream):
                body = msg.body
                if isinstance(body, Receipt):
                    self.ingest_receipt(body)
                    continue
                results.append(self.append_first_seen(body, msg.sigs))
                if msg.couplets:
                    self.ingest_receipt(Receipt(body.prefix, body.sn, body.digest(), msg.couplets))
        except (EventError, codec.CodecError):
            if strict:
                raise
            results.append(Disposition.REJECTED)
        return results

    # ---------------------------------------------------------- persistence

    @classmethod
    def open(cls, root: os.PathLike, **kwargs) -> "EventLog":
        """Open a directory store, replaying and re-verifying its journal."""
        root = Path(root)
        clock = kwargs.pop("clock", utc_now)
        journal, dels = root / "journal.log", root / "del"
        lines: list[bytes] = []
        if journal.exists():
            lines = journal.read_bytes().splitlines()
            journal.rename(root / "journal.log.replay")
        if dels.exists():
            dels.rename(root / "del.replay")
        timestamps: list[str] = []
        log = cls(KERLStore(root), DELStore(root), clock=lambda: timestamps.pop(0), **kwargs)
        for line in lines:
            kind, prefix, sn_hex, dig, *rest = line.decode().split(" ")
            sn = int(sn_hex, 16)
            if kind == "evt":
                ts, rel = rest
                msg, _ = parse_message((root / rel).read_bytes())
                timestamps.append(ts)
                disp = log.append_first_seen(msg.body, msg.sigs)
                if not log.last.accepted:
                    raise CorruptLog(f"journal event {prefix} sn {sn} replays as {disp}")
            elif kind == "rct":
                witness, sig = rest
                log.ingest_receipt(Receipt(prefix, sn, dig, ((witness, sig),)))
            elif kind == "vrc":
                msg, _ = parse_message((root / rest[1]).read_bytes())
                log.ingest_validator_receipt(msg.body)
        log.clock = clock
        old_dels = root / "del.replay"
        if old_dels.exists():
            for path in sorted(old_dels.iterdir()):
                data = path.read_bytes()
                if path.name.startswith("witness."):
                    for row in data.splitlines():
                        p, s, rd, sd, sig = row.decode().split(" ")
                        log.dels.add_witness(
                            WitnessDuplicity(path.name[8:], p, int(s, 16), rd, sd, sig)
                        )
                else:
                    for msg in iter_messages(data):
                        log.append_first_seen(msg.body, msg.sigs)
            for path in old_dels.iterdir():
                path.unlink()
            old_dels.rmdir()
        (root / "journal.log.replay").unlink(missing_ok=True)
        return log
