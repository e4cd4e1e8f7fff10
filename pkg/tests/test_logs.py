import pytest
from hypothesis import given, settings, strategies as st

from kerikernel.controller import Controller, KeyChain
from kerikernel.crypto import Signer, counter_seed, digest
from kerikernel.engine import Disposition
from kerikernel.events import DigestSeal, Receipt, frame, interact
from kerikernel.identifier import derive_basic
from kerikernel.logs import CorruptLog, EventLog

WITNESS_SIGNERS = [Signer(counter_seed("lw", j), transferable=False) for j in range(4)]
WITS = [derive_basic(s.verfer, False).qb64 for s in WITNESS_SIGNERS]


def couplet(j, event):
    return WITS[j], WITNESS_SIGNERS[j].sign(event.raw).qb64


def build(n_ixn=3, toad=0, wits=(), label="lg", root=None):
    log = EventLog.open(root) if root else EventLog()
    c = Controller(KeyChain.deterministic(label), log=log)
    c.incept(toad=toad, wits=wits)
    for _ in range(n_ixn):
        c.interact()
    return c


def test_first_seen_storage_and_del():
    c = build()
    first = c.log.store.record(c.prefix, 0)
    assert first is not None and first.event.ilk == "icp"
    trunk = [r.digest for r in c.log.store.records(c.prefix)]
    alt = interact(c.prefix, 3, c.log.store.state_at(c.prefix, 2).digest, [DigestSeal(digest(b"alt").qb64)])
    assert c.log.append_first_seen(alt, c.sign(alt)) == Disposition.DUPLICITOUS
    assert [r.digest for r in c.log.store.records(c.prefix)] == trunk
    (proof,) = c.log.dels.all_proofs()
    assert proof.first == c.log.store.record(c.prefix, 3).raw and proof.second == alt.raw
    assert proof.verify()
    assert c.log.append_first_seen(*c.events[3]) == Disposition.DUPLICATE


def test_receipt_couplets():
    c = build(n_ixn=1, toad=2, wits=WITS[:3])
    ev = c.events[1][0]
    assert c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(0, ev),))) == 1
    assert c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(0, ev),))) == 1
    assert c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(1, ev),))) == 2
    # not a designated witness
    assert c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(3, ev),))) == 2
    # receipt for a different version goes to the DEL
    other = interact(c.prefix, 1, ev.prior, [DigestSeal(digest(b"o").qb64)])
    c.log.ingest_receipt(Receipt(c.prefix, 1, other.digest(), (couplet(2, other),)))
    assert len(c.log.dels.witness[WITS[2]]) == 1


def test_replay_and_tamper():
    c = build()
    assert c.log.replay_verify(c.prefix) == c.state
    rec = c.log.store.record(c.prefix, 2)
    raw = bytearray(rec.raw)
    raw[raw.index(b'"p":"') + 8] ^= 1
    rec.raw = bytes(raw)
    with pytest.raises(CorruptLog):
        c.log.replay_verify(c.prefix)


@settings(max_examples=40)
@given(st.data())
def test_tamper_evidence_any_byte(data):
    c = build(n_ixn=2, label="tamper")
    recs = c.log.store.records(c.prefix)
    rec = data.draw(st.sampled_from(recs))
    pos = data.draw(st.integers(0, len(rec.raw) - 1))
    original = rec.raw
    flipped = bytearray(original)
    flipped[pos] ^= data.draw(st.integers(1, 255))
    rec.raw = bytes(flipped)
    try:
        with pytest.raises(CorruptLog):
            c.log.replay_verify(c.prefix)
    finally:
        rec.raw = original


def test_recovery_fork_replay():
    c = build(n_ixn=3)
    sup, sigs = c.rotate(sn=2, accept=False)
    assert c.log.append_first_seen(sup, sigs) == Disposition.SUPERSEDING
    assert [r.event.ilk for r in c.log.store.records(c.prefix)] == ["icp", "ixn", "rot"]
    assert c.log.replay_verify(c.prefix).sn == 2


def test_append_only_journal():
    c = build(n_ixn=1, toad=1, wits=WITS[:2])
    mark = len(c.log.store.journal)
    before = c.log.store.journal_digest(mark)
    ev = c.events[1][0]
    c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(0, ev),)))
    c.interact()
    alt = interact(c.prefix, 2, ev.digest(), [DigestSeal(digest(b"z").qb64)])
    c.log.append_first_seen(alt, c.sign(alt))
    assert c.log.store.journal_digest(mark) == before


def test_export_import_round_trip():
    c = build(n_ixn=2, toad=2, wits=WITS[:3])
    for ev, _ in c.events:
        c.log.ingest_receipt(Receipt(c.prefix, ev.sn, ev.digest(), (couplet(0, ev), couplet(1, ev))))
    stream = c.log.export(c.prefix)
    fresh = EventLog()
    assert fresh.import_stream(stream) == [Disposition.ACCEPTED] * 3
    a, b = c.log.store.records(c.prefix), fresh.store.records(c.prefix)
    assert [r.raw for r in a] == [r.raw for r in b]
    assert [r.couplets for r in a] == [r.couplets for r in b]
    assert fresh.export(c.prefix) == stream


def test_import_tampered_stream_keeps_prior_events():
    c = build(n_ixn=2)
    stream = b"".join(frame(ev.raw, sigs) for ev, sigs in c.events[:2])
    ev, sigs = c.events[2]
    bad = bytearray(ev.raw)
    bad[bad.index(b'"a":[') - 3] ^= 1
    fresh = EventLog()
    results = fresh.import_stream(stream + frame(bytes(bad), sigs))
    assert results[:2] == [Disposition.ACCEPTED] * 2 and results[2] == Disposition.REJECTED
    assert fresh.state(c.prefix).sn == 1


def test_divergent_import_creates_del():
    c = build(n_ixn=2)
    other = EventLog()
    other.append_first_seen(*c.events[0])
    base = c.log.store.state_at(c.prefix, 0)
    alt = interact(c.prefix, 1, base.digest, [DigestSeal(digest(b"fork").qb64)])
    other.append_first_seen(alt, c.sign(alt))
    results = other.import_stream(c.log.export(c.prefix))
    assert Disposition.DUPLICITOUS in results
    (proof,) = other.dels.all_proofs()
    assert proof.sn == 1 and proof.verify()


def test_persistent_store_reopens(tmp_path):
    c = build(n_ixn=2, toad=1, wits=WITS[:1], root=tmp_path)
    ev = c.events[1][0]
    c.log.ingest_receipt(Receipt(c.prefix, 1, ev.digest(), (couplet(0, ev),)))
    alt = interact(c.prefix, 2, ev.digest(), [DigestSeal(digest(b"p").qb64)])
    c.log.append_first_seen(alt, c.sign(alt))
    reopened = EventLog.open(tmp_path)
    assert reopened.state(c.prefix) == c.state
    assert reopened.store.record(c.prefix, 1).couplets == c.log.store.record(c.prefix, 1).couplets
    assert len(reopened.dels) == len(c.log.dels) == 1
    assert reopened.store.record(c.prefix, 0).first_seen == c.log.store.record(c.prefix, 0).first_seen


def test_tampered_event_file_detected_on_open(tmp_path):
    c = build(n_ixn=1, root=tmp_path)
    rel = c.log.store.event_path(c.prefix, 1, c.events[1][0].digest())
    path = tmp_path / rel
    data = bytearray(path.read_bytes())
    data[30] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(Exception):
        EventLog.open(tmp_path)
