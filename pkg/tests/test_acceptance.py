"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line with its runtime. Under pytest the lines
are repeated in the terminal summary; ``python3 tests/test_acceptance.py``
runs the suite directly and prints them.
"""
import base64
import random
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from itertools import combinations
from pathlib import Path

from click.testing import CliRunner

from kerikernel import agreement, codec, engine
from kerikernel.cli import Keystore, main
from kerikernel.codec import CountCode, IndexedSignature, QualifiedMaterial
from kerikernel.controller import Controller, KeyChain
from kerikernel.engine import Disposition, apply
from kerikernel.events import next_digest, rotate
from kerikernel.logs import EventLog
from kerikernel.netsim import Scenario, honest_signature_safety, run_attack, run_round_robin
from kerikernel.threshold import satisfies

RESULTS: list[str] = []


@contextmanager
def criterion(name: str, limit: float | None = None):
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if limit is not None:
            assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        RESULTS.append(f"FAIL {name} ({elapsed:.2f}s): {exc}")
        print(RESULTS[-1])
        raise
    RESULTS.append(f"PASS {name} ({elapsed:.2f}s)")
    print(RESULTS[-1])


# immune tally sets per (F, N), read off the published table
IMMUNITY = {
    1: {4: {3}, 5: {4}, 6: {4, 5}, 7: {5, 6}, 8: {5, 6, 7}, 9: {6, 7, 8}},
    2: {7: {5}, 8: {6}, 9: {6, 7}, 10: {7, 8}, 11: {7, 8, 9}, 12: {8, 9, 10}},
    3: {10: {7}, 11: {8}, 12: {8, 9}, 13: {9, 10}, 14: {9, 10, 11}, 15: {10, 11, 12}},
}


def test_immunity_table():
    with criterion("immunity table F=1..3", limit=1.0):
        for F, rows in IMMUNITY.items():
            table = agreement.immunity_table(F)
            assert [r.N for r in table] == sorted(rows)
            for row in table:
                expected = rows[row.N]
                assert row.three_f_plus_one == 3 * F + 1
                assert row.lower == min(expected), (F, row.N)
                assert row.upper == row.N - F == max(expected), (F, row.N)
                assert set(row.tallies) == expected, (F, row.N)
                assert set(agreement.classify(row.N, F).immune_range) == expected


def test_immune_oracle_equivalence():
    with criterion("brute-force immune oracle, N<=12 F<=3", limit=10.0):
        checked = 0
        for N in range(1, 13):
            for F in range(0, 4):
                c = agreement.classify(N, F)
                for M in range(1, N + 1):
                    brute = agreement.immune_split_check(N, F, M)
                    # the enumeration tests safety only, so it matches the lower bound
                    assert brute == (M >= -(-(N + F + 1) // 2)), (N, F, M)
                    if M <= N - F:
                        assert brute == (M in c.immune_range), (N, F, M)
                    checked += 1
        assert checked == 4 * sum(range(1, 13))


def test_round_robin_bound():
    with criterion("round-robin 2N exchange bound, N=3..7", limit=5.0):
        for N in range(3, 8):
            F = (N - 1) // 3
            sc = Scenario(seed=N, N=N, F=F, M=N - F)
            sc.add("EVENT", "icp").add("EVENT", "ixn").add("EVENT", "rot").add("EVENT", "ixn")
            tr = run_round_robin(sc)
            prefix = tr.sim.controller.prefix
            for sn in range(4):
                assert tr.metrics[f"exchanges.{sn}"] <= 2 * N, (N, sn, tr.metrics[f"exchanges.{sn}"])
                for w in tr.sim.witnesses:
                    assert len(w.log.store.record(prefix, sn).couplets) == N, (N, sn, w.name)
            assert tr.metrics["bound_violations"] == 0


def test_recovery_labels():
    with criterion("recovery walkthrough labels", limit=1.0):
        v = run_attack("signing-compromise-recovery")
        m = v.metrics
        for w in ("w0", "w1", "w2", "w3"):
            # trunk: icp, ixn 1-3, rot 4, ixn 5-6, superseding rot 7
            assert m[f"{w}.trunk"] == "icp,ixn,ixn,ixn,rot,ixn,ixn,rot"
            assert m[f"{w}.disputed"] == "7:ixn,8:ixn,9:ixn"
            assert m[f"{w}.accountable"] == "7,8"
        assert v.verdict == "recovered"
        assert honest_signature_safety(v.transcript.sim)


# raw size, pad, code length, text length
CODE_TABLE = {
    **{c: (32, 1, 1, 44) for c in "ABCDEFGHIJ"},
    "K": (56, 1, 1, 76), "L": (56, 1, 1, 76),
    "0A": (16, 2, 2, 24),
    **{f"0{c}": (64, 2, 2, 88) for c in "BCDEFG"},
    "1AAA": (33, 0, 4, 48), "1AAB": (33, 0, 4, 48),
    "1AAC": (57, 0, 4, 80), "1AAD": (57, 0, 4, 80),
    "1AAE": (114, 0, 4, 156),
}
INDEXED_LENGTHS = {"A": 88, "B": 88, "0A": 156}


def _b64_body(raw: bytes, pad: int) -> str:
    body = base64.urlsafe_b64encode(raw).decode()
    return body[:-pad] if pad else body


def test_codec_round_trip():
    cases = 10_000
    with criterion(f"codec round trip, {cases} cases per code"):
        rnd = random.Random(14)
        assert set(codec.CODES) == set(CODE_TABLE)
        for code, (size, pad, code_len, length) in CODE_TABLE.items():
            dc = codec.CODES[code]
            assert (dc.raw_size, dc.pad_length, len(code), dc.qualified_b64_length) == (size, pad, code_len, length)
            for _ in range(cases):
                raw = rnd.randbytes(size)
                text = codec.encode(QualifiedMaterial(code, raw))
                assert len(text) == length
                assert text == code + _b64_body(raw, pad)
                assert codec.decode(text) == QualifiedMaterial(code, raw)
        for code, length in INDEXED_LENGTHS.items():
            scheme = codec.SCHEMES[code]
            assert scheme.qualified_b64_length == length
            for _ in range(cases):
                sig = IndexedSignature(code, rnd.randrange(scheme.max_index + 1), rnd.randbytes(scheme.raw_size))
                text = codec.encode_indexed(sig)
                assert len(text) == length and codec.decode_indexed(text) == sig
        for n in range(64**2):
            text = codec.encode_count(CountCode(codec.ATTACHED_SIGNATURES, n))
            assert len(text) == 4 and codec.decode_count(text).count == n


def test_pre_rotation_fuzz():
    mutations = 1_000
    with criterion(f"pre-rotation fuzz, {mutations} mutants"):
        rnd = random.Random(97)
        c = Controller(KeyChain.deterministic("acceptance-fuzz"))
        c.incept(keys=2, next_count=3, next_sith=2)
        state = c.state
        keys = [c.chain[2 + j].verfer.qb64 for j in range(3)]
        pool = {s.verfer.qb64: s for s in (c.chain[j] for j in [*range(2, 5), *range(100, 140)])}
        outsiders = [k for k in pool if k not in keys]
        commitment = next_digest(1, [c.chain[50].verfer.qb64]).qb64

        def attempt(keys, sith, prior):
            ev = rotate(c.prefix, 1, prior, keys, commitment, sith=sith)
            sigs = tuple(pool[k].sign_indexed(ev.raw, i) for i, k in enumerate(keys))
            return apply(state, ev, sigs, c.log.store)

        control = attempt(keys, 2, state.digest)
        assert control.disposition == Disposition.ACCEPTED, control.reason

        counts = dict.fromkeys(("keys", "sith", "digest"), 0)
        for _ in range(mutations):
            kind = rnd.choice(list(counts))
            counts[kind] += 1
            mk, sith, prior = list(keys), 2, state.digest
            if kind == "keys":
                how = rnd.choice(["swap", "reorder", "drop", "extra"])
                if how == "swap":
                    mk[rnd.randrange(3)] = rnd.choice(outsiders)
                elif how == "reorder":
                    while mk == keys:
                        rnd.shuffle(mk)
                elif how == "drop":
                    del mk[rnd.randrange(3)]
                    sith = 1
                else:
                    mk.append(rnd.choice(outsiders))
            elif kind == "sith":
                sith = rnd.choice([1, 3, [Fraction(1, 2)] * 3, [1, 1, 1]])
            else:
                raw = bytearray(codec.decode(prior).raw)
                raw[rnd.randrange(len(raw))] ^= 1 << rnd.randrange(8)
                prior = codec.encode(QualifiedMaterial(prior[0], bytes(raw)))
            out = attempt(mk, sith, prior)
            assert out.disposition == Disposition.REJECTED, (kind, mk, sith)
            expected = engine.PRIOR_DIGEST_MISMATCH if kind == "digest" else engine.PRE_ROTATION_MISMATCH
            assert out.reason == expected, (kind, out.reason)
        assert all(counts.values())


def _subsets(n):
    for k in range(n + 1):
        yield from combinations(range(n), k)


def _weighted_oracle(clauses, subset):
    chosen, start = set(subset), 0
    for clause in clauses:
        total = Fraction(0)
        for j, w in enumerate(clause):
            if start + j in chosen:
                total += Fraction(w)
        if total < 1:
            return False
        start += len(clause)
    return True


WEIGHTED = {
    "three halves": [["1/2", "1/2", "1/2"]],
    "two tiers": [["1/2", "1/2", "1/4", "1/4", "1/4", "1/4"]],
    "three clauses": [["1/2", "1/2", "1/4", "1/4", "1/4", "1/4"], ["1/2"] * 4, ["1"] * 4],
}


def test_weighted_thresholds():
    with criterion("weighted thresholds, exhaustive subsets"):
        for label, clauses in WEIGHTED.items():
            threshold = clauses if len(clauses) > 1 else clauses[0]
            n = sum(map(len, clauses))
            hits = total = 0
            for subset in _subsets(n):
                want = _weighted_oracle(clauses, subset)
                assert satisfies(threshold, subset) == want, (label, subset)
                hits += want
                total += 1
            assert total == 2**n and 0 < hits < total, label


def test_key_index_law():
    with criterion("key-index partial sums, 100 sequences"):
        assert engine.key_indices([1, 3, 3, 4]) == [0, 1, 4, 7, 11]
        rnd = random.Random(719)
        sequences = [[1, 3, 3, 4]] + [[rnd.randint(1, 4) for _ in range(rnd.randint(2, 6))] for _ in range(100)]
        for seq in sequences:
            c = Controller(KeyChain.deterministic(f"law{len(seq)}"))
            c.incept(keys=seq[0], next_count=seq[1])
            for size in seq[2:] + [1]:
                c.rotate(next_count=size)
            expected = engine.key_indices(seq)
            est = [r.state for r in c.log.store.records(c.prefix) if r.event.establishment]
            assert [s.first_key_index for s in est] == expected[:len(seq)], seq
            assert est[-1].next_key_index == expected[len(seq)]
            assert [s.keys for s in est] == [
                tuple(c.chain[j].verfer.qb64 for j in range(expected[i], expected[i + 1]))
                for i in range(len(seq))
            ]


def _round_trip(log: EventLog, prefixes: list[str]):
    """Export in the given order (delegators first) and import into a fresh log."""
    streams = {p: log.export(p) for p in prefixes}
    fresh = EventLog()
    for p in prefixes:
        assert all(d == Disposition.ACCEPTED for d in fresh.import_stream(streams[p], strict=True)), p
    for p in prefixes:
        assert fresh.export(p) == streams[p]
        before, after = log.store.records(p), fresh.store.records(p)
        assert [r.event.ilk for r in before] == [r.event.ilk for r in after]
        assert [len(r.couplets) for r in before] == [len(r.couplets) for r in after]
    return [log.store.records(p) for p in prefixes]


def test_cli_end_to_end(tmp_path):
    with criterion("CLI end to end and export/import"):
        home = tmp_path / "ks"
        runner = CliRunner()
        steps = [
            ["incept", "--alias", "a", "--keys", "1", "--next", "1", "--toad", "0"],
            ["rotate", "--alias", "a"],
            ["rotate", "--alias", "a"],
            ["interact", "--alias", "a", "--anchor", "hello"],
            ["delegate", "--delegator", "a", "--alias", "d"],
            ["delegate", "--delegator", "a", "--alias", "d", "--via", "rotation"],
        ]
        for args in steps:
            res = runner.invoke(main, ["--keystore", str(home), *args])
            assert res.exit_code == 0, (args, res.output)
        res = runner.invoke(main, ["verify", str(home / "a.kel"), str(home / "d.kel")])
        assert res.exit_code == 0, res.output

        store = Keystore(home)
        log = store.log()
        _round_trip(log, [store.load("a").prefix, store.load("d").prefix])

        # a witnessed log carries couplets through the round trip as well
        sc = Scenario(seed=5, N=4, F=1, M=3)
        sc.add("EVENT", "icp").add("EVENT", "ixn").add("EVENT", "rot")
        tr = run_round_robin(sc)
        (records,) = _round_trip(tr.sim.witnesses[0].log, [tr.sim.controller.prefix])
        assert [len(r.couplets) for r in records] == [4, 4, 4]


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            try:
                fn(Path(tempfile.mkdtemp())) if name == "test_cli_end_to_end" else fn()
            except BaseException:
                failed += 1
    print(f"{len(RESULTS) - failed}/{len(RESULTS)} criteria passed")
    sys.exit(1 if failed else 0)
