from itertools import product

import pytest

from kerikernel import agreement
from kerikernel.engine import Disposition
from kerikernel.netsim import (
    Scenario, ScriptInvalid, attack_scenario, honest_signature_safety, parse_scenario,
    run_attack, run_direct, run_round_robin, run_scenario,
)


def direct(*script, seed=3):
    sc = Scenario(seed=seed, mode="direct")
    for verb, *args in script:
        sc.add(verb, *args)
    return sc


def test_direct_mode_doubly_receipted():
    tr = run_direct(direct(("EVENT", "icp"), ("DELIVER", "val"), ("EVENT", "rot"), ("DELIVER", "val"),
                           ("EVENT", "rot"), ("DELIVER", "val")))
    ctl, val = tr.sim.controller, tr.sim.nodes["val"]
    mine, theirs = ctl.log.store.records(ctl.prefix), val.log.store.records(ctl.prefix)
    assert len(mine) == len(theirs) == 3
    assert all(len(r.vrcts) == 1 for r in mine + theirs)
    assert ctl.log.export(ctl.prefix) == val.log.export(ctl.prefix)


def test_redelivery_is_duplicate_without_new_receipt():
    tr = run_direct(direct(("EVENT", "icp"), ("DELIVER", "val"), ("EVENT", "rot"), ("DELIVER", "val"),
                           ("DELIVER", "val", "1")))
    assert tr.lines[-1].endswith("duplicate-identical sn=1")
    rec = tr.sim.nodes["val"].log.store.record(tr.sim.controller.prefix, 1)
    assert len(rec.vrcts) == 1


def test_dead_attack_detected():
    v = run_attack("dead")
    assert v.verdict == "protected"
    assert v.metrics["val.del"] == 1
    assert run_attack("dead", late_validator=True).verdict == "captured"


def test_live_attack():
    v = run_attack("live")
    assert v.verdict == "protected" and v.metrics["inject.2.rejected"] == 1
    assert run_attack("live", hidden_keys=True).verdict == "captured"


@pytest.mark.parametrize("N", range(3, 8))
def test_round_robin_bound(N):
    sc = Scenario(seed=N, N=N, F=(N - 1) // 3, M=N - (N - 1) // 3)
    sc.add("EVENT", "icp").add("EVENT", "ixn")
    tr = run_round_robin(sc)
    ctl = tr.sim.controller
    for sn in (0, 1):
        assert tr.metrics[f"exchanges.{sn}"] <= 2 * N
        assert tr.metrics[f"agreement.{sn}"] == N
        for w in tr.sim.witnesses:
            rec = w.log.store.record(ctl.prefix, sn)
            assert len(rec.couplets) == N
    assert tr.metrics["bound_violations"] == 0


def test_unresponsive_witnesses():
    sc = Scenario(seed=1, N=4, F=1, M=3, nodes={"w3": ("witness", "unresponsive", "none")})
    sc.add("EVENT", "icp")
    tr = run_round_robin(sc)
    assert tr.metrics["agreement.0"] == 3 and tr.metrics["sufficient.0"] == 1
    sc = Scenario(seed=1, N=4, F=1, M=3, nodes={f"w{j}": ("witness", "unresponsive", "none") for j in (2, 3)})
    sc.add("EVENT", "icp").add("EVENT", "ixn")
    tr = run_round_robin(sc)
    assert tr.metrics["sufficient.1"] == 0
    assert set(tr.metrics["plateau.1"].split(",")) == {"2"}


def test_recovery_labels():
    v = run_attack("signing-compromise-recovery")
    m = v.metrics
    for w in ("w0", "w1", "w2", "w3"):
        assert m[f"{w}.trunk"] == "icp,ixn,ixn,ixn,rot,ixn,ixn,rot"
        assert m[f"{w}.disputed"] == "7:ixn,8:ixn,9:ixn"
        assert m[f"{w}.accountable"] == "7,8"
    assert m["inject.10.rejected"] == 4
    assert v.verdict == "recovered"
    assert honest_signature_safety(v.transcript.sim)


def test_recovery_liveness_with_a_faulty_witness():
    sc = attack_scenario("signing-compromise-recovery", N=5, F=1, M=4)
    sc.nodes["w4"] = ("witness", "unresponsive", "none")
    v = run_attack(("signing-compromise-recovery", sc))
    assert v.verdict == "recovered"


def test_duplicitous_controller_examples():
    v = run_attack("duplicitous-controller", N=4, F=1, M=3)
    assert (v.metrics["split.A"], v.metrics["split.B"]) == (2, 2)
    assert v.metrics["split.sufficient"] == 0
    v = run_attack("duplicitous-controller", N=4, F=1, M=2)
    assert v.metrics["split.sufficient"] == 2 and v.metrics["split.disjoint"] == 1


def splits(names):
    for mask in product((0, 1), repeat=len(names)):
        yield ([n for n, b in zip(names, mask) if not b], [n for n, b in zip(names, mask) if b])


@pytest.mark.parametrize("N", range(1, 8))
def test_immune_guarantee_exhaustive(N):
    F = (N - 1) // 3
    lower = agreement.immune_lower_bound(N, F)
    honest = [f"w{j}" for j in range(F, N)]
    for M in {lower, max(1, lower - 1)}:
        if M > N:
            continue
        immune = agreement.immune_split_check(N, F, M)
        for a, b in splits(honest):
            v = run_attack("duplicitous-controller", N=N, F=F, M=M, dishonest=F, split=(a, b))
            if immune:
                assert v.metrics["split.sufficient"] <= 1, (N, F, M, a, b)
            assert honest_signature_safety(v.transcript.sim)


def test_gossip_and_die_off():
    sc = attack_scenario("signing-compromise-recovery")
    sc.mode = "gossip"
    tr = run_scenario(sc)
    ctl = tr.sim.controller
    w = tr.sim.nodes["w0"]
    nine = [r for r in w.log.store.disputed(ctl.prefix) if r.sn == 9][0]
    seven = [r for r in w.log.store.disputed(ctl.prefix) if r.sn == 7][0]
    assert not nine.accountable and seven.accountable
    assert w.gossip_receipt(ctl.prefix, 9, nine.digest) is None
    assert w.pull(ctl.prefix, 9, nine.digest) is not None
    assert w.gossip_receipt(ctl.prefix, 7, seven.digest) is not None
    assert tr.metrics["agreement.1"] == 4


def test_transcripts_are_deterministic():
    a = run_attack("signing-compromise-recovery", seed=9).transcript.text
    b = run_attack("signing-compromise-recovery", seed=9).transcript.text
    assert a == b
    sc1, sc2 = (attack_scenario("signing-compromise-recovery", seed=9) for _ in range(2))
    sc1.mode = sc2.mode = "gossip"
    assert run_scenario(sc1).text == run_scenario(sc2).text


def test_scenario_parser():
    sc = parse_scenario("""
        SEED 4   # comment
        MODE round-robin
        PARAMS N=4 F=1 M=3
        NODE w1 witness dishonest
        EVENT icp
        ASSERT agreement.0 >= 3
    """)
    assert (sc.seed, sc.N, sc.F, sc.M) == (4, 4, 1, 3)
    assert sc.nodes["w1"] == ("witness", "dishonest", "none")
    tr = run_scenario(sc)
    assert tr.passed
    for bad in ("BOGUS 1", "PARAMS Q=1", "NODE x wizard", "ASSERT a ~ 1", "MODE warp"):
        with pytest.raises(ScriptInvalid):
            parse_scenario(bad)


def test_failed_assertion_reported():
    tr = run_scenario(parse_scenario("PARAMS N=3 M=2\nEVENT icp\nASSERT agreement.0 == 2\n"))
    assert not tr.passed and tr.lines[-1].startswith("0") and "FAIL" in tr.lines[-1]


def test_watcher_pulls_and_judges():
    sc = Scenario(seed=2, N=4, F=1, M=3, nodes={"j": ("judge", "honest", "none")})
    sc.add("EVENT", "icp").add("EVENT", "ixn").add("DELIVER", "j")
    tr = run_scenario(sc)
    assert tr.metrics["j.sn"] == 1 and tr.metrics["j.sufficient.1"] == 1


def test_rejected_injection_disposition():
    tr = run_attack("live").transcript
    assert any(str(Disposition.REJECTED) in line and "pre-rotation-mismatch" in line for line in tr.lines)
