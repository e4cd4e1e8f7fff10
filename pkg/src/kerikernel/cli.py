"""Command-line driver: keystore, event creation, verification, simulation.

Exit codes: 0 ok, 1 parse or usage problem, 2 verification failure,
3 duplicity detected, 4 scenario assertion failed.
"""
from __future__ import annotations

import json
import os
import secrets
import sys
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import blake3
import click

from . import codec
from .controller import Controller, ControllerError, KeyChain, delegate_inception, delegate_rotation
from .crypto import Signer, counter_seed, digest, stretch_seed
from .engine import Disposition
from .events import DigestSeal, EventError, Receipt, frame, iter_messages
from .logs import CorruptLog, DELStore, EventLog, LogError
from . import netsim

EXIT_OK, EXIT_PARSE, EXIT_VERIFY, EXIT_DUPLICITY, EXIT_ASSERT = 0, 1, 2, 3, 4


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class AliasRecord:
    alias: str
    mode: str
    seed: str  # qualified: 0A for argon2id root seeds, A for raw and test seeds
    prefix: Optional[str] = None
    sizes: list[int] = field(default_factory=list)
    next_count: int = 0
    kind: str = "JSON"
    delegator: Optional[str] = None

    def chain(self) -> KeyChain:
        raw = codec.decode(self.seed).raw
        if self.mode == "argon2id":
            return KeyChain(lambda j: Signer(stretch_seed(raw, f"{self.alias}/{j}", 32)))
        if self.mode == "raw":
            return KeyChain(lambda j: Signer(blake3.blake3(f"{self.alias}/{j}".encode(), key=raw).digest()))
        if self.mode == "test":
            return KeyChain(lambda j: Signer(counter_seed(self.seed, j)))
        raise CliFailure(f"unknown keystore mode {self.mode!r}", EXIT_PARSE)

    def __repr__(self) -> str:
        return f"AliasRecord({self.alias}, {self.mode}, prefix={self.prefix})"


class Keystore:
    """A directory of alias records plus one append-only KEL file per alias."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, alias: str) -> Path:
        return self.root / f"{alias}.json"

    def kel_path(self, alias: str) -> Path:
        return self.root / f"{alias}.kel"

    def aliases(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*.json"))

    def load(self, alias: str) -> AliasRecord:
        try:
            data = json.loads(self._path(alias).read_text())
        except FileNotFoundError:
            raise CliFailure(f"alias-missing: {alias}", EXIT_PARSE) from None
        except (OSError, ValueError) as exc:
            raise CliFailure(f"io-failure: {exc}", EXIT_PARSE) from None
        return AliasRecord(**data)

    def create(self, alias: str, mode: str, seed: Optional[bytes] = None) -> AliasRecord:
        if self._path(alias).exists():
            raise CliFailure(f"alias {alias} already exists", EXIT_PARSE)
        if seed is not None:
            if len(seed) == 16:
                return AliasRecord(alias, "argon2id", codec.QualifiedMaterial("0A", seed).qb64)
            if len(seed) == 32:
                return AliasRecord(alias, "raw", codec.QualifiedMaterial("A", seed).qb64)
            raise CliFailure(f"seed file must hold 16 or 32 bytes, not {len(seed)}", EXIT_PARSE)
        if mode == "argon2id":
            seed = codec.QualifiedMaterial("0A", secrets.token_bytes(16)).qb64
        else:
            seed = codec.QualifiedMaterial("A", secrets.token_bytes(32)).qb64
        return AliasRecord(alias, mode, seed)

    def save(self, rec: AliasRecord) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            path = self._path(rec.alias)
            tmp = path.with_suffix(".tmp")
            fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
            with os.fdopen(fd, "w") as fh:
                json.dump(rec.__dict__, fh, indent=1)
            os.replace(tmp, path)
        except OSError as exc:
            raise CliFailure(f"io-failure: {exc}", EXIT_PARSE) from None

    def append_kel(self, alias: str, framed: bytes) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            with open(self.kel_path(alias), "ab") as fh:
                fh.write(framed)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise CliFailure(f"io-failure: {exc}", EXIT_PARSE) from None

    def log(self) -> EventLog:
        """Every KEL in the keystore, delegators before their delegates."""
        log = EventLog()
        recs = [self.load(a) for a in self.aliases()]
        for rec in sorted(recs, key=lambda r: r.delegator is not None):
            path = self.kel_path(rec.alias)
            if path.exists():
                log.import_stream(path.read_bytes())
        return log

    def controller(self, rec: AliasRecord, log: EventLog) -> Controller:
        ctl = Controller(chain=rec.chain(), log=log, kind=rec.kind)
        ctl.prefix, ctl.sizes, ctl.next_count = rec.prefix, list(rec.sizes), rec.next_count
        if rec.prefix is not None:
            state = log.state(rec.prefix)
            if state is None:
                raise CliFailure(f"KEL for {rec.alias} is missing or invalid", EXIT_VERIFY)
            if state.abandoned:
                raise CliFailure("abandoned-identifier", EXIT_VERIFY)
        return ctl


def _sync(rec: AliasRecord, ctl: Controller) -> None:
    rec.prefix, rec.sizes, rec.next_count = ctl.prefix, list(ctl.sizes), ctl.next_count


def _next_count(value: str) -> int:
    if value.lower() == "none":
        return 0
    try:
        count = int(value)
    except ValueError:
        raise CliFailure(f"--next expects a count or 'none', got {value!r}", EXIT_PARSE) from None
    if count < 1:
        raise CliFailure("--next must be at least 1 (use 'none' to abandon)", EXIT_PARSE)
    return count


def _emit(event, sigs) -> bytes:
    framed = frame(event.raw, sigs)
    click.echo(framed.decode("utf-8", "replace"), nl=False)
    click.echo()
    return framed


def _run(fn):
    """Map failures to exit codes without tracebacks."""
    try:
        fn()
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except ControllerError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VERIFY)


@click.group()
@click.option("--keystore", "home", type=click.Path(file_okay=False, path_type=Path),
              envvar="KERIKERNEL_HOME", default=Path(".kerikernel"), show_default=True,
              help="Keystore directory holding alias records and KEL files.")
@click.pass_context
def main(ctx: click.Context, home: Path) -> None:
    """Key event log toolkit."""
    ctx.obj = Keystore(home)


@main.command("incept")
@click.option("--alias", required=True)
@click.option("--keys", default=1, show_default=True, type=click.IntRange(1))
@click.option("--next", "next_", default="1", show_default=True, help="Next key count or 'none'.")
@click.option("--toad", default=0, show_default=True, type=click.IntRange(0))
@click.option("--wit", "wits", multiple=True, help="Witness prefix (repeatable).")
@click.option("--kind", default="JSON", type=click.Choice(["JSON", "CBOR", "MGPK"]))
@click.option("--mode", default="argon2id", type=click.Choice(["argon2id", "test"]),
              help="Seed handling; 'test' skips key stretching.")
@click.option("--seed-file", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              help="Raw seed: 16 bytes are stretched with Argon2id, 32 bytes are used as is.")
@click.pass_obj
def incept_cmd(store: Keystore, alias, keys, next_, toad, wits, kind, mode, seed_file):
    """Create an alias and its inception event."""
    def go():
        rec = store.create(alias, mode, seed_file.read_bytes() if seed_file else None)
        rec.kind = kind
        ctl = store.controller(rec, store.log())
        event, sigs = ctl.incept(keys=keys, next_count=_next_count(next_), toad=toad, wits=wits)
        _sync(rec, ctl)
        store.append_kel(alias, _emit(event, sigs))
        store.save(rec)
    _run(go)


@main.command("rotate")
@click.option("--alias", required=True)
@click.option("--next", "next_", default="1", show_default=True, help="Next key count or 'none'.")
@click.option("--toad", type=click.IntRange(0), default=None)
@click.option("--cut", "cuts", multiple=True)
@click.option("--add", "adds", multiple=True)
@click.pass_obj
def rotate_cmd(store: Keystore, alias, next_, toad, cuts, adds):
    """Rotate to the pre-committed keys and commit a fresh next set."""
    def go():
        rec = store.load(alias)
        if rec.delegator:
            raise CliFailure("delegated identifiers rotate with 'delegate'", EXIT_PARSE)
        ctl = store.controller(rec, store.log())
        event, sigs = ctl.rotate(next_count=_next_count(next_), toad=toad, cuts=cuts, adds=adds)
        _sync(rec, ctl)
        store.append_kel(alias, _emit(event, sigs))
        store.save(rec)
    _run(go)


@main.command("interact")
@click.option("--alias", required=True)
@click.option("--anchor", "anchors", multiple=True, help="Text whose digest is sealed in the event.")
@click.pass_obj
def interact_cmd(store: Keystore, alias, anchors):
    """Append an interaction event anchoring digests of the given texts."""
    def go():
        rec = store.load(alias)
        ctl = store.controller(rec, store.log())
        seals = [DigestSeal(digest(a.encode()).qb64) for a in anchors]
        event, sigs = ctl.interact(seals=seals)
        store.append_kel(alias, _emit(event, sigs))
    _run(go)


@main.command("delegate")
@click.option("--delegator", required=True)
@click.option("--alias", required=True, help="Delegate alias; created on first use.")
@click.option("--via", default="interaction", type=click.Choice(["interaction", "rotation"]),
              help="Delegator event that carries the anchoring seal.")
@click.option("--mode", default="argon2id", type=click.Choice(["argon2id", "test"]))
@click.pass_obj
def delegate_cmd(store: Keystore, delegator, alias, via, mode):
    """Delegated inception (new alias) or delegated rotation (existing alias)."""
    def go():
        log = store.log()
        drec = store.load(delegator)
        dctl = store.controller(drec, log)
        existing = alias in store.aliases()
        rec = store.load(alias) if existing else store.create(alias, mode)
        if existing and rec.delegator != delegator:
            raise CliFailure(f"{alias} is not delegated by {delegator}", EXIT_PARSE)
        rec.delegator = delegator
        ctl = store.controller(rec, log)
        if existing:
            anchor, delegated = delegate_rotation(dctl, ctl, via)
        else:
            anchor, delegated = delegate_inception(dctl, ctl, via)
        store.append_kel(delegator, _emit(*anchor))
        store.append_kel(alias, _emit(*delegated))
        _sync(drec, dctl)
        _sync(rec, ctl)
        store.save(drec)
        store.save(rec)
    _run(go)


@main.command("verify")
@click.argument("files", nargs=-1, required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--evidence", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory for duplicity evidence (a temporary one by default).")
def verify_cmd(files, evidence):
    """Verify one or more KEL files processed together."""
    root = evidence or Path(tempfile.mkdtemp(prefix="kerikernel-evidence-"))
    log = EventLog(dels=DELStore(root))
    dispositions = []
    try:
        for path in files:
            data = path.read_bytes()
            for msg in iter_messages(data):
                body = msg.body
                if isinstance(body, Receipt):
                    log.ingest_receipt(body)
                    continue
                disp = log.append_first_seen(body, msg.sigs)
                reason = log.last.reason if log.last else None
                dispositions.append((path.name, body, disp, reason))
    except OSError as exc:
        click.echo(f"error: io-failure: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    except (EventError, codec.CodecError, LogError) as exc:
        click.echo(f"error: parse: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    for name, ev, disp, reason in dispositions:
        line = f"{name} {ev.prefix[:12]} sn={ev.sn} {ev.ilk} {disp}"
        click.echo(line + (f" ({reason})" if reason else ""))
    code = EXIT_OK
    for prefix in log.store.prefixes():
        try:
            state = log.replay_verify(prefix)
        except CorruptLog as exc:
            click.echo(f"error: {exc}", err=True)
            code = EXIT_VERIFY
            continue
        est = [f"{r.sn}:{r.event.ilk}" for r in log.store.records(prefix) if r.event.establishment]
        click.echo(f"establishment {prefix} {' '.join(est)}")
        click.echo(f"state {state.serialize().decode()}")
    unresolved = log.escrows.out_of_order or log.escrows.partial_sig
    if unresolved or any(d == Disposition.REJECTED for _, _, d, _ in dispositions):
        code = EXIT_VERIFY
    if any(d == Disposition.DUPLICITOUS for _, _, d, _ in dispositions):
        for proof in log.dels.all_proofs():
            click.echo(f"duplicity {proof.prefix} sn={proof.sn} evidence {root / 'del' / f'{proof.prefix}.{proof.sn:032x}'}")
        code = EXIT_DUPLICITY
    sys.exit(code)


def bundled_scenarios() -> dict[str, str]:
    base = resources.files("kerikernel") / "scenarios"
    return {p.name.removesuffix(".scn"): p.read_text() for p in base.iterdir() if p.name.endswith(".scn")}


@main.command("simulate")
@click.argument("scenario")
@click.option("--transcript", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the full transcript here instead of stdout.")
def simulate_cmd(scenario, transcript):
    """Run a scenario file, or a bundled scenario by name."""
    bundled = bundled_scenarios()
    try:
        text = bundled[scenario] if scenario in bundled else Path(scenario).read_text()
    except OSError as exc:
        click.echo(f"error: io-failure: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    try:
        tr = netsim.run_scenario(netsim.parse_scenario(text))
    except netsim.ScriptInvalid as exc:
        click.echo(f"error: script-invalid: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    if transcript:
        transcript.write_text(tr.text)
    else:
        click.echo(tr.text, nl=False)
    exchanges = {k: v for k, v in tr.metrics.items() if k.startswith("exchanges.")}
    if exchanges:
        click.echo(f"exchanges per event: {json.dumps(exchanges, sort_keys=True)}")
    failed = [a for a, ok, _ in tr.results if not ok]
    for a, ok, actual in tr.results:
        click.echo(f"{'PASS' if ok else 'FAIL'} {a} (actual {actual})")
    sys.exit(EXIT_ASSERT if failed else EXIT_OK)


if __name__ == "__main__":  # pragma: no cover
    main()
