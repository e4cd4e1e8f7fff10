import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from kerikernel.cli import main


@pytest.fixture
def cli(tmp_path):
    runner = CliRunner()
    outputs = []

    def run(*args, home=None):
        res = runner.invoke(main, ["--keystore", str(home or tmp_path / "ks"), *args])
        outputs.append(res.output)
        return res

    run.outputs = outputs
    run.home = tmp_path / "ks"
    return run


def seeds(home: Path) -> list[str]:
    return [json.loads(p.read_text())["seed"] for p in home.glob("*.json")]


def test_incept_rotate_verify(cli):
    assert cli("incept", "--alias", "a", "--keys", "1", "--next", "1", "--toad", "0").exit_code == 0
    assert cli("rotate", "--alias", "a").exit_code == 0
    assert cli("rotate", "--alias", "a").exit_code == 0
    res = cli("verify", str(cli.home / "a.kel"))
    assert res.exit_code == 0, res.output
    est = [l for l in res.output.splitlines() if l.startswith("establishment")][0]
    assert est.split()[2:] == ["0:icp", "1:rot", "2:rot"]
    state = json.loads([l for l in res.output.splitlines() if l.startswith("state ")][0][6:])
    assert state["sn"] == 2 and state["first_key_index"] == 2


def test_flipped_signature_byte_fails_verification(cli, tmp_path):
    cli("incept", "--alias", "a", "--mode", "test")
    cli("rotate", "--alias", "a")
    data = bytearray((cli.home / "a.kel").read_bytes())
    sig_at = data.index(b"-AAB") + 6  # inside the first indexed signature
    data[sig_at] = ord("A") if data[sig_at] != ord("A") else ord("B")
    bad = tmp_path / "bad.kel"
    bad.write_bytes(bytes(data))
    assert cli("verify", str(bad)).exit_code == 2


def test_divergent_logs_report_duplicity(cli, tmp_path):
    cli("incept", "--alias", "a", "--mode", "test")
    other = tmp_path / "other"
    other.mkdir()
    (other / "a.json").write_bytes((cli.home / "a.json").read_bytes())
    (other / "a.kel").write_bytes((cli.home / "a.kel").read_bytes())
    cli("interact", "--alias", "a", "--anchor", "one")
    cli("interact", "--alias", "a", "--anchor", "two", home=other)
    res = cli("verify", str(cli.home / "a.kel"), str(other / "a.kel"), "--evidence", str(tmp_path / "ev"))
    assert res.exit_code == 3
    line = [l for l in res.output.splitlines() if l.startswith("duplicity")][0]
    assert "sn=1" in line and Path(line.split("evidence ")[1]).exists()


def test_abandoned_identifier(cli):
    cli("incept", "--alias", "a", "--mode", "test")
    assert cli("rotate", "--alias", "a", "--next", "none").exit_code == 0
    for cmd in (["rotate", "--alias", "a"], ["interact", "--alias", "a"]):
        res = cli(*cmd)
        assert res.exit_code == 2 and "abandoned-identifier" in res.output


def test_missing_alias_and_bad_args(cli):
    res = cli("rotate", "--alias", "ghost")
    assert res.exit_code == 1 and "alias-missing" in res.output
    cli("incept", "--alias", "a", "--mode", "test")
    assert cli("incept", "--alias", "a", "--mode", "test").exit_code == 1
    assert cli("rotate", "--alias", "a", "--next", "zero").exit_code == 1


def test_verify_garbage_is_parse_error(cli, tmp_path):
    junk = tmp_path / "junk.kel"
    junk.write_text("not an event")
    assert cli("verify", str(junk)).exit_code == 1


def test_delegation_round_trip(cli):
    cli("incept", "--alias", "boss", "--mode", "test")
    assert cli("delegate", "--delegator", "boss", "--alias", "dep", "--mode", "test").exit_code == 0
    assert cli("delegate", "--delegator", "boss", "--alias", "dep", "--via", "rotation").exit_code == 0
    res = cli("verify", str(cli.home / "boss.kel"), str(cli.home / "dep.kel"))
    assert res.exit_code == 0, res.output
    assert " dip " in res.output and " drt " in res.output


def test_keystore_secrets_never_printed(cli):
    cli("incept", "--alias", "a", "--keys", "2")
    cli("rotate", "--alias", "a")
    cli("interact", "--alias", "a", "--anchor", "x")
    cli("incept", "--alias", "t", "--mode", "test")
    cli("delegate", "--delegator", "a", "--alias", "d")
    cli("verify", *map(str, cli.home.glob("*.kel")))
    secrets = seeds(cli.home)
    assert len(secrets) == 3
    for text in cli.outputs + [p.read_text() for p in cli.home.glob("*.kel")]:
        for s in secrets:
            assert s not in text
    mode = (cli.home / "a.json").stat().st_mode & 0o777
    assert mode == 0o600


@pytest.mark.parametrize("name,code", [("round_robin_n4", 0), ("recovery", 0), ("insufficient_m3", 4)])
def test_bundled_scenarios(cli, name, code):
    res = cli("simulate", name)
    assert res.exit_code == code, res.output
    if name == "round_robin_n4":
        counts = json.loads(res.output.split("exchanges per event: ")[1].splitlines()[0])
        assert max(counts.values()) <= 8


def test_simulate_file_and_transcript(cli, tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text("PARAMS N=3 F=0 M=2\nEVENT icp\nASSERT agreement.0 == 3\n")
    out = tmp_path / "t.txt"
    res = cli("simulate", str(scn), "--transcript", str(out))
    assert res.exit_code == 0 and out.read_text()
    scn.write_text("WARP 9\n")
    assert cli("simulate", str(scn)).exit_code == 1


@pytest.mark.parametrize("size,mode", [(16, "argon2id"), (32, "raw")])
def test_seed_file(cli, tmp_path, size, mode):
    seed = tmp_path / "seed.bin"
    seed.write_bytes(bytes(range(size)))
    assert cli("incept", "--alias", "a", "--seed-file", str(seed)).exit_code == 0
    assert json.loads((cli.home / "a.json").read_text())["mode"] == mode
    assert cli("rotate", "--alias", "a").exit_code == 0
    assert cli("verify", str(cli.home / "a.kel")).exit_code == 0
    # same seed, same keys: a second keystore reproduces the prefix
    other = tmp_path / "other"
    cli("incept", "--alias", "a", "--seed-file", str(seed), home=other)
    assert (json.loads((other / "a.json").read_text())["prefix"]
            == json.loads((cli.home / "a.json").read_text())["prefix"])


def test_seed_file_wrong_size(cli, tmp_path):
    seed = tmp_path / "seed.bin"
    seed.write_bytes(b"x" * 20)
    assert cli("incept", "--alias", "a", "--seed-file", str(seed)).exit_code == 1
