"""Deterministic simulation of controllers, witnesses and validators.

Messages are delivered synchronously through the simulator, which writes one
transcript line per message. Randomness (gossip peer choice) comes from a
seeded generator and timestamps from a counter, so identical scenarios give
byte-identical transcripts.

Scenarios are scripts of actions. They can be built in code or parsed from a
plain text file with one action per line::

    SEED 7
    MODE round-robin            # direct | round-robin | gossip
    PARAMS N=4 F=1 M=3
    NODE w3 witness unresponsive
    EVENT icp
    EVENT ixn
    ASSERT agreement.1 >= 3

Verbs: SEED, MODE, PARAMS, NODE, EVENT, DELIVER, DROP, COMPROMISE, INJECT,
SPLIT and ASSERT. See ``parse_scenario`` for the arguments each takes.
"""
from __future__ import annotations

import operator
import random
import shlex
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

from . import agreement
from .controller import Controller, KeyChain
from .crypto import Signer, counter_seed, digest
from .engine import Disposition
from .events import DigestSeal, EventSeal, KeyEvent, Receipt, interact, next_digest, rotate
from .identifier import derive_basic
from .logs import EventLog

ROLES = ("controller", "witness", "watcher", "juror", "judge", "validator")
FAULTS = ("honest", "unresponsive", "dishonest")
POLICIES = ("none", "round-robin-relay", "gossip")
MODES = ("direct", "round-robin", "gossip")
ATTACKS = ("dead", "live", "signing-compromise-recovery", "duplicitous-controller")

_ACCEPTED = (Disposition.ACCEPTED, Disposition.SUPERSEDING)


class ScriptInvalid(ValueError):
    pass


class DeterministicClock:
    def __init__(self, start: datetime = datetime(2020, 1, 1, tzinfo=timezone.utc)):
        self.start = start
        self.ticks = 0

    def __call__(self) -> str:
        self.ticks += 1
        return (self.start + timedelta(microseconds=self.ticks)).isoformat(timespec="microseconds")


# ----------------------------------------------------------------------- nodes


class Node:
    def __init__(self, name: str, role: str, fault: str = "honest", policy: str = "none",
                 signer: Optional[Signer] = None, clock=None):
        if role not in ROLES:
            raise ScriptInvalid(f"unknown role {role!r}")
        if fault not in FAULTS:
            raise ScriptInvalid(f"unknown fault mode {fault!r}")
        if policy not in POLICIES:
            raise ScriptInvalid(f"unknown dissemination policy {policy!r}")
        self.name, self.role, self.fault, self.policy = name, role, fault, policy
        self.log = EventLog(clock=clock)
        self.signer = signer
        self.prefix = derive_basic(signer.verfer, transferable=False).qb64 if signer else None
        self.dropped = False
        self.signed: dict[tuple[str, int], list[tuple[str, str]]] = {}
        self.identity: Optional[Controller] = None  # transferable identity for validators

    @property
    def responsive(self) -> bool:
        return self.fault != "unresponsive" and not self.dropped

    def __repr__(self) -> str:
        return f"Node({self.name}, {self.role}, {self.fault})"

    # witness behaviour

    def _sign(self, event: KeyEvent) -> tuple[str, str]:
        sig = self.signer.sign(event.raw).qb64
        self.signed.setdefault((event.prefix, event.sn), []).append((event.digest(), event.ilk))
        return self.prefix, sig

    def on_event(self, event: KeyEvent, sigs) -> tuple[Disposition, Optional[tuple[str, str]]]:
        disp = self.log.append_first_seen(event, sigs)
        signed = [d for d, _ in self.signed.get((event.prefix, event.sn), [])]
        if disp in _ACCEPTED or (disp == Disposition.DUPLICATE and event.digest() in signed):
            couplet = self._sign(event) if event.digest() not in signed else self._own(event)
            self.log.ingest_receipt(Receipt(event.prefix, event.sn, event.digest(), (couplet,)))
            return disp, couplet
        if self.fault == "dishonest" and disp == Disposition.DUPLICITOUS:
            return disp, self._sign(event)
        return disp, None

    def _own(self, event: KeyEvent) -> tuple[str, str]:
        rec = self.log.store.record(event.prefix, event.sn, event.digest())
        if rec is not None and self.prefix in rec.couplets:
            return self.prefix, rec.couplets[self.prefix]
        return self.prefix, self.signer.sign(event.raw).qb64

    def on_receipts(self, receipt: Receipt) -> int:
        return self.log.ingest_receipt(receipt)

    def holds(self, prefix: str, sn: int, dig: str) -> set[str]:
        rec = self.log.store.record(prefix, sn, dig)
        return set(rec.couplets) if rec else set()

    def gossip_receipt(self, prefix: str, sn: int, dig: str) -> Optional[Receipt]:
        """Receipts this node pushes on its own initiative.

        Disputed events that were not accountable when superseded are no
        longer spread, though ``pull`` still answers for them.
        """
        rec = self.log.store.record(prefix, sn, dig)
        if rec is None or not rec.couplets:
            return None
        if self.log.store.is_disputed(prefix, dig) and not rec.accountable:
            return None
        return Receipt(prefix, sn, dig, tuple(rec.couplets.items()))

    def pull(self, prefix: str, sn: int, dig: str) -> Optional[Receipt]:
        rec = self.log.store.record(prefix, sn, dig)
        if rec is None:
            return None
        return Receipt(prefix, sn, dig, tuple(rec.couplets.items()))

    # validator behaviour

    def validator_receipt(self, event: KeyEvent) -> Receipt:
        ident = self.identity
        st = ident.state
        return Receipt(
            event.prefix, event.sn, event.digest(),
            validator_seal=EventSeal(ident.prefix, st.last_est[0], st.last_est[1]),
            sigs=ident.sign(event),
        )


# ------------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Action:
    verb: str
    args: tuple = ()
    line: int = 0


@dataclass(frozen=True)
class Assertion:
    metric: str
    op: str
    value: str
    line: int = 0

    def __str__(self) -> str:
        return f"{self.metric} {self.op} {self.value}"


_OPS = {"==": operator.eq, "!=": operator.ne, "<=": operator.le,
        ">=": operator.ge, "<": operator.lt, ">": operator.gt}


@dataclass
class Scenario:
    seed: int = 0
    mode: str = "round-robin"
    N: int = 0
    F: int = 0
    M: int = 0
    script: list[Action] = field(default_factory=list)
    nodes: dict[str, tuple[str, str, str]] = field(default_factory=dict)
    asserts: list[Assertion] = field(default_factory=list)

    def add(self, verb: str, *args) -> "Scenario":
        self.script.append(Action(verb, tuple(str(a) for a in args)))
        return self


@dataclass
class Transcript:
    lines: list[str]
    metrics: dict[str, object]
    results: list[tuple[Assertion, bool, object]]
    sim: "Simulation"

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    @property
    def passes(self) -> int:
        return max((v for k, v in self.metrics.items() if k.startswith("passes.")), default=0)


@dataclass(frozen=True)
class Verdict:
    kind: str
    verdict: str
    transcript: Transcript

    @property
    def metrics(self) -> dict:
        return self.transcript.metrics


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            verb, *args = shlex.split(line)
        except ValueError as exc:
            raise ScriptInvalid(f"line {lineno}: {exc}") from None
        verb = verb.upper()
        try:
            if verb == "SEED":
                sc.seed = int(args[0])
            elif verb == "MODE":
                if args[0] not in MODES:
                    raise ScriptInvalid(f"line {lineno}: unknown mode {args[0]!r}")
                sc.mode = args[0]
            elif verb == "PARAMS":
                for item in args:
                    key, value = item.split("=")
                    if key not in ("N", "F", "M"):
                        raise ScriptInvalid(f"line {lineno}: unknown parameter {key!r}")
                    setattr(sc, key, int(value))
            elif verb == "NODE":
                name, role, *rest = args
                fault = rest[0] if rest else "honest"
                policy = rest[1] if len(rest) > 1 else "none"
                if role not in ROLES or fault not in FAULTS or policy not in POLICIES:
                    raise ScriptInvalid(f"line {lineno}: bad node declaration")
                sc.nodes[name] = (role, fault, policy)
            elif verb == "ASSERT":
                metric, op, value = args
                if op not in _OPS:
                    raise ScriptInvalid(f"line {lineno}: unknown operator {op!r}")
                sc.asserts.append(Assertion(metric, op, value, lineno))
            elif verb in ("EVENT", "DELIVER", "DROP", "COMPROMISE", "INJECT", "SPLIT"):
                if not args:
                    raise ScriptInvalid(f"line {lineno}: {verb} needs arguments")
                sc.script.append(Action(verb, tuple(args), lineno))
            else:
                raise ScriptInvalid(f"line {lineno}: unknown action {verb!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ScriptInvalid):
                raise
            raise ScriptInvalid(f"line {lineno}: malformed {verb}") from None
    return sc


def _options(args) -> tuple[list[str], dict[str, str]]:
    plain, opts = [], {}
    for a in args:
        if "=" in a:
            k, v = a.split("=", 1)
            opts[k] = v
        else:
            plain.append(a)
    return plain, opts


# ------------------------------------------------------------------ simulator


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.rng = random.Random(scenario.seed)
        self.clock = DeterministicClock()
        self.lines: list[str] = []
        self.metrics: dict[str, object] = {}
        self.step = 0
        self.nodes: dict[str, Node] = {}
        tag = f"sim{scenario.seed}"
        self.controller = Controller(
            chain=KeyChain.deterministic(f"{tag}:ctl"), log=EventLog(clock=self.clock)
        )
        self.attacker_chain = KeyChain.deterministic(f"{tag}:attacker")
        self.compromised: set[int] = set()
        self.delivered: dict[str, set[int]] = {}
        self.forged: list[tuple[KeyEvent, tuple]] = []
        indirect = scenario.mode != "direct"
        if indirect:
            for i in range(scenario.N):
                name = f"w{i}"
                role, fault, policy = scenario.nodes.get(name, ("witness", "honest", "none"))
                self._add_node(name, role, fault, policy)
        for name, (role, fault, policy) in scenario.nodes.items():
            if name not in self.nodes:
                self._add_node(name, role, fault, policy)
        if not indirect and not self.validators:
            self._add_node("val", "validator", "honest", "none")
        if scenario.mode == "gossip":
            for w in self.witnesses:
                w.policy = "gossip"
        elif indirect:
            for w in self.witnesses:
                if w.policy == "none":
                    w.policy = "round-robin-relay"

    def _add_node(self, name: str, role: str, fault: str, policy: str) -> Node:
        signer = Signer(counter_seed(f"sim{self.sc.seed}:{name}", 0), transferable=False)
        node = Node(name, role, fault, policy, signer, self.clock)
        if role == "validator":
            node.identity = Controller(
                chain=KeyChain.deterministic(f"sim{self.sc.seed}:{name}:id"), log=node.log
            )
        self.nodes[name] = node
        return node

    @property
    def witnesses(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.role == "witness"]

    @property
    def validators(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.role == "validator"]

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise ScriptInvalid(f"unknown node {name!r}") from None

    def say(self, src: str, dst: str, kind: str, detail: str = "") -> None:
        self.lines.append(f"{self.step:05d} {src} -> {dst} {kind} {detail}".rstrip())
        self.step += 1

    def bump(self, key: str, by: int = 1) -> None:
        self.metrics[key] = int(self.metrics.get(key, 0)) + by

    # ------------------------------------------------------ dissemination

    def round_robin(self, source: str, event: KeyEvent, sigs, targets: list[Node], tag: str):
        collected: dict[str, str] = {}
        holders = {w.name: set() for w in targets}
        acked: set[str] = set()
        exchanges = passes = 0
        sizes = []
        dig = event.digest()
        while True:
            passes += 1
            progress = False
            for w in targets:
                if w.name in acked and holders[w.name] >= set(collected):
                    continue
                send = {p: s for p, s in collected.items() if p not in holders[w.name]}
                exchanges += 1
                self.say(source, w.name, "event+receipts" if w.name not in acked else "receipts",
                         f"{event.ilk} sn={event.sn} receipts={len(send)}")
                if not w.responsive:
                    self.say(w.name, source, "timeout")
                    continue
                if w.name not in acked:
                    disp, couplet = w.on_event(event, sigs)
                    if couplet is None:
                        self.say(w.name, source, "refused", str(disp))
                        acked.add(w.name)  # answered, but will never receipt this version
                        holders[w.name] = set(collected) | {None}
                        continue
                    collected[couplet[0]] = couplet[1]
                    holders[w.name].add(couplet[0])
                    acked.add(w.name)
                    progress = True
                    self.say(w.name, source, "receipt", f"{disp} sn={event.sn}")
                if send:
                    w.on_receipts(Receipt(event.prefix, event.sn, dig, tuple(send.items())))
                    holders[w.name] |= set(send)
                    progress = True
            sizes.append(len(collected))
            done = all(
                w.name in acked and (None in holders[w.name] or holders[w.name] >= set(collected))
                for w in targets
            )
            if done or not progress:
                break
        self.metrics[f"{tag}exchanges.{event.sn}"] = exchanges
        self.metrics[f"{tag}passes.{event.sn}"] = passes
        self.metrics[f"{tag}plateau.{event.sn}"] = ",".join(map(str, sizes))
        honest = all(w.fault == "honest" and w.responsive for w in targets)
        if honest and exchanges > 2 * len(targets):
            self.bump("bound_violations")
            self.say("sim", "-", "VIOLATION", f"{exchanges} exchanges for {len(targets)} witnesses")
        return collected

    def gossip(self, source: str, event: KeyEvent, sigs, targets: list[Node], tag: str):
        collected: dict[str, str] = {}
        messages = 0
        dig = event.digest()
        for w in targets:
            messages += 1
            self.say(source, w.name, "event", f"{event.ilk} sn={event.sn}")
            if not w.responsive:
                continue
            disp, couplet = w.on_event(event, sigs)
            if couplet is not None:
                collected[couplet[0]] = couplet[1]
                self.say(w.name, source, "receipt", f"{disp} sn={event.sn}")
        live = [w for w in targets if w.responsive and w.prefix in collected]
        want = set(collected)
        rounds = 0
        while live and any(w.holds(event.prefix, event.sn, dig) < want for w in live) and rounds < 64:
            rounds += 1
            for w in live:
                receipt = w.gossip_receipt(event.prefix, event.sn, dig)
                peers = [p for p in live if p is not w]
                if receipt is None or not peers:
                    continue
                peer = self.rng.choice(peers)
                messages += 1
                self.say(w.name, peer.name, "gossip", f"sn={event.sn} receipts={len(receipt.couplets)}")
                peer.on_receipts(receipt)
        self.metrics[f"{tag}gossip_messages.{event.sn}"] = messages
        self.metrics[f"{tag}gossip_rounds.{event.sn}"] = rounds
        return collected

    def disseminate(self, source: str, event: KeyEvent, sigs, targets=None, tag: str = ""):
        targets = self.witnesses if targets is None else targets
        if self.sc.mode == "gossip":
            collected = self.gossip(source, event, sigs, targets, tag)
        else:
            collected = self.round_robin(source, event, sigs, targets, tag)
        size = len(collected)
        self.metrics[f"{tag}agreement.{event.sn}"] = size
        if self.sc.M:
            self.metrics[f"{tag}sufficient.{event.sn}"] = int(size >= self.sc.M)
        return collected

    # ------------------------------------------------------------ actions

    def run(self) -> Transcript:
        for action in self.sc.script:
            handler = getattr(self, f"do_{action.verb.lower()}", None)
            if handler is None:
                raise ScriptInvalid(f"unknown action {action.verb}")
            try:
                handler(*action.args)
            except TypeError as exc:
                raise ScriptInvalid(f"line {action.line}: {action.verb}: {exc}") from None
        self._final_metrics()
        results = []
        for a in self.sc.asserts:
            actual = self.metrics.get(a.metric)
            results.append((a, _compare(actual, a.op, a.value), actual))
            self.say("assert", "-", "PASS" if results[-1][1] else "FAIL", f"{a} (actual {actual})")
        return Transcript(self.lines, self.metrics, results, self)

    def do_event(self, ilk: str, *args) -> None:
        plain, opts = _options(args)
        ctl = self.controller
        indirect = self.sc.mode != "direct"
        if ilk == "icp":
            wits = [w.prefix for w in self.witnesses] if indirect else []
            toad = int(opts.get("toad", self.sc.M if wits else 0))
            event, sigs = ctl.incept(keys=int(opts.get("keys", 1)), next_count=int(opts.get("next", 1)),
                                     toad=toad, wits=wits)
        elif ilk == "rot":
            cuts = [self.node(n).prefix for n in opts["cuts"].split(",")] if "cuts" in opts else []
            adds = [self.node(n).prefix for n in opts["adds"].split(",")] if "adds" in opts else []
            toad = int(opts["toad"]) if "toad" in opts else None
            event, sigs = ctl.rotate(next_count=int(opts.get("next", 1)), toad=toad, cuts=cuts, adds=adds)
            for name in opts.get("adds", "").split(","):
                if name:
                    self.node(name).role = "witness"
        elif ilk == "ixn":
            event, sigs = ctl.interact()
        else:
            raise ScriptInvalid(f"controller cannot create {ilk!r}")
        self.say("ctl", "-", "create", f"{event.ilk} sn={event.sn}")
        if indirect:
            st = ctl.state
            targets = [w for w in self.nodes.values() if w.prefix in set(st.wits) | set(event.cuts)]
            collected = self.disseminate("ctl", event, sigs, targets)
            ctl.log.ingest_receipt(Receipt(event.prefix, event.sn, event.digest(), tuple(collected.items())))

    def _ensure_pairing(self, v: Node) -> None:
        if v.identity.prefix is not None:
            return
        event, sigs = v.identity.incept()
        self.say(v.name, "ctl", "event", "icp sn=0 (validator identity)")
        self.controller.log.append_first_seen(event, sigs)

    def do_deliver(self, target: str, *args) -> None:
        node = self.node(target)
        if node.role == "validator":
            self._ensure_pairing(node)
            sent = self.delivered.setdefault(target, set())
            for event, sigs in self.controller.events:
                if args and event.sn != int(args[0]):
                    continue
                if not args and event.sn in sent:
                    continue
                sent.add(event.sn)
                self._deliver_direct(node, event, sigs)
        elif node.role in ("watcher", "juror", "judge"):
            self._watch(node)
        else:
            raise ScriptInvalid(f"cannot DELIVER to a {node.role}")

    def _deliver_direct(self, v: Node, event: KeyEvent, sigs, source: str = "ctl") -> Disposition:
        self.say(source, v.name, "event", f"{event.ilk} sn={event.sn}")
        if not v.responsive:
            self.say(v.name, source, "timeout")
            return Disposition.REJECTED
        disp = v.log.append_first_seen(event, sigs)
        if disp in _ACCEPTED:
            receipt = v.validator_receipt(event)
            v.log.ingest_validator_receipt(receipt)
            self.say(v.name, source, "vrct", f"{disp} sn={event.sn}")
            if source == "ctl":
                self.controller.log.ingest_validator_receipt(receipt)
        else:
            reason = v.log.last.reason if v.log.last else None
            self.say(v.name, source, "disposition", f"{disp} sn={event.sn}" + (f" {reason}" if reason else ""))
        return disp

    def _watch(self, node: Node) -> None:
        prefix = self.controller.prefix
        for w in self.witnesses:
            if not w.responsive or prefix not in w.log.store.trunk:
                continue
            self.say(node.name, w.name, "pull", f"kerl {prefix[:8]}")
            node.log.import_stream(w.log.export(prefix))
        if node.role == "judge":
            st = node.log.state(prefix)
            for rec in node.log.store.records(prefix):
                params = agreement.AgreementParams(max(1, len(rec.state.wits)), self.sc.F, max(1, rec.state.toad))
                j = agreement.judge(
                    agreement.AgreementRecord(prefix, rec.sn, rec.digest, frozenset(rec.couplets)),
                    params, witnesses=rec.state.wits,
                )
                self.metrics[f"{node.name}.sufficient.{rec.sn}"] = int(j.sufficient)
            self.metrics[f"{node.name}.sn"] = st.sn if st else -1

    def do_drop(self, target: str) -> None:
        self.node(target).dropped = True
        self.say("sim", target, "drop")

    def do_compromise(self, which: str, *args) -> None:
        ctl = self.controller
        st = ctl.state
        if st is None:
            raise ScriptInvalid("nothing to compromise before inception")
        if which == "current":
            idx = range(st.first_key_index, st.next_key_index)
        elif which == "next":
            idx = range(st.next_key_index, st.next_key_index + ctl.next_count)
        elif which == "est":
            rec = ctl.log.store.records(ctl.prefix)[int(args[0])]
            if not rec.event.establishment:
                raise ScriptInvalid(f"event {args[0]} is not an establishment event")
            idx = range(rec.state.first_key_index, rec.state.next_key_index)
        else:
            raise ScriptInvalid(f"unknown compromise target {which!r}")
        self.compromised |= set(idx)
        self.say("atk", "-", "compromise", f"{which} keys {sorted(idx)}")

    def _attack_signers(self, indices) -> tuple[list[Signer], bool]:
        indices = list(indices)
        if set(indices) <= self.compromised:
            return [self.controller.chain[i] for i in indices], True
        # without the real keys the attacker can only sign with keys of its own
        return [self.attacker_chain[i] for i in indices], False

    def _public_state(self, view: Node, sn: int):
        """State the attacker builds on: its own earlier forgery, else the trunk."""
        prefix = self.controller.prefix
        store = view.log.store
        for event, _ in reversed(self.forged):
            if event.sn == sn - 1:
                rec = store.record(prefix, event.sn, event.digest())
                if rec is not None:
                    return rec.state, store.event_at(prefix, sn)
        return store.state_at(prefix, sn - 1), store.event_at(prefix, sn)

    def do_inject(self, ilk: str, sn: str, targets: str, *args) -> None:
        _, opts = _options(args)
        sn = int(sn)
        nodes = self._targets(targets)
        view = nodes[0]
        base, original = self._public_state(view, sn)
        if base is None:
            base = view.log.store.state(self.controller.prefix)
            if base is None or base.sn != sn - 1:
                raise ScriptInvalid(f"no public state to build a forged event at sn {sn}")
        prefix = self.controller.prefix
        if ilk == "ixn":
            signers, _ = self._attack_signers(range(base.first_key_index, base.next_key_index))
            event = interact(prefix, sn, base.digest, [DigestSeal(digest(f"forged:{sn}".encode()).qb64)])
        elif ilk == "rot":
            count = len(original.keys) if original is not None and original.establishment else self.controller.next_count
            signers, _ = self._attack_signers(range(base.next_key_index, base.next_key_index + count))
            own = self.attacker_chain[10_000 + sn]
            event = rotate(
                prefix, sn, base.digest, [s.verfer.qb64 for s in signers],
                next_digest(1, [own.verfer.qb64]).qb64, sith=max(1, (count + 1) // 2),
                toad=base.toad,
            )
        else:
            raise ScriptInvalid(f"cannot forge {ilk!r}")
        sigs = tuple(s.sign_indexed(event.raw, i) for i, s in enumerate(signers))
        self.forged.append((event, sigs))
        self.say("atk", "-", "forge", f"{ilk} sn={sn}")
        if all(n.role == "validator" for n in nodes):
            for n in nodes:
                self._tally(sn, self._deliver_direct(n, event, sigs, source="atk"))
            return
        mode = opts.get("receipts", "all")
        if mode == "all":
            self.disseminate("atk", event, sigs, nodes, tag="attack.")
            for n in nodes:
                if n.responsive and n.log.last is not None:
                    self._tally(sn, n.log.last.disposition)
        else:
            for n in nodes:
                self.say("atk", n.name, "event", f"{ilk} sn={sn}")
                if not n.responsive:
                    continue
                disp, couplet = n.on_event(event, sigs)
                self.say(n.name, "atk", "receipt" if couplet else "refused", f"{disp} sn={sn}")
                self._tally(sn, disp)

    def _tally(self, sn: int, disp: Disposition) -> None:
        key = "accepted" if disp in _ACCEPTED else "rejected"
        self.bump(f"inject.{sn}.{key}")

    def _targets(self, spec: str) -> list[Node]:
        if spec == "all":
            return self.witnesses or self.validators
        return [self.node(n) for n in spec.split(",")]

    def do_split(self, ilk: str, *args) -> None:
        """Duplicitous controller: two versions of one event to two witness groups."""
        _, opts = _options(args)
        if ilk != "ixn":
            raise ScriptInvalid("SPLIT supports ixn")
        ctl = self.controller
        st = ctl.state
        groups = {}
        for label in ("A", "B"):
            groups[label] = [self.node(n) for n in opts.get(label, "").split(",") if n]
        dishonest = [w for w in self.witnesses if w.fault == "dishonest"]
        event_a, sigs_a = ctl.interact(seals=[DigestSeal(digest(b"version A").qb64)])
        event_b = interact(ctl.prefix, st.sn + 1, st.digest, [DigestSeal(digest(b"version B").qb64)])
        sigs_b = ctl.sign(event_b)
        sizes = {}
        for label, (ev, sg) in (("A", (event_a, sigs_a)), ("B", (event_b, sigs_b))):
            members = groups[label] + [w for w in dishonest if w not in groups[label]]
            self.say("ctl", "-", "create", f"{ilk} sn={ev.sn} version {label}")
            collected = self.disseminate("ctl", ev, sg, members, tag=f"split{label}.")
            sizes[label] = set(collected)
            self.metrics[f"split.{label}"] = len(collected)
        sufficient = [lab for lab in sizes if len(sizes[lab]) >= self.sc.M]
        self.metrics["split.sufficient"] = len(sufficient)
        self.metrics["split.disjoint"] = int(not (sizes["A"] & sizes["B"]))

    # ------------------------------------------------------------- summary

    def _final_metrics(self) -> None:
        prefix = self.controller.prefix
        if prefix is None:
            return
        for node in list(self.nodes.values()):
            store = node.log.store
            recs = store.records(prefix)
            if recs:
                self.metrics[f"{node.name}.sn"] = recs[-1].sn
                self.metrics[f"{node.name}.trunk"] = ",".join(r.event.ilk for r in recs)
                disputed = store.disputed(prefix)
                self.metrics[f"{node.name}.disputed"] = ",".join(f"{r.sn}:{r.event.ilk}" for r in disputed)
                self.metrics[f"{node.name}.accountable"] = ",".join(str(r.sn) for r in disputed if r.accountable)
            self.metrics[f"{node.name}.del"] = len(node.log.dels)
        self.metrics["duplicity"] = sum(len(n.log.dels) for n in self.nodes.values())
        self.metrics["ctl.sn"] = self.controller.state.sn
        ex = [v for k, v in self.metrics.items() if k.startswith("exchanges.")]
        if ex:
            self.metrics["exchanges.max"] = max(ex)
        self.metrics.setdefault("bound_violations", 0)


def _compare(actual, op: str, expected: str) -> bool:
    if actual is None:
        return False
    try:
        return _OPS[op](int(actual), int(expected))
    except (TypeError, ValueError):
        return _OPS[op](str(actual), expected)


# ------------------------------------------------------------ entry points


def run_scenario(scenario: Scenario) -> Transcript:
    return Simulation(scenario).run()


def run_direct(scenario: Scenario) -> Transcript:
    if scenario.mode != "direct":
        raise ScriptInvalid("run_direct needs a direct-mode scenario")
    return run_scenario(scenario)


def run_round_robin(scenario: Scenario) -> Transcript:
    if scenario.mode == "direct":
        raise ScriptInvalid("round-robin dissemination needs witnesses")
    if scenario.N < 1:
        raise ScriptInvalid("round-robin dissemination needs N >= 1")
    return run_scenario(scenario)


def _witness_names(n: int) -> list[str]:
    return [f"w{i}" for i in range(n)]


def attack_scenario(kind: str, *, seed: int = 0, N: int = 4, F: int = 1, M: int = 3,
                    late_validator: bool = False, hidden_keys: bool = False,
                    split: Optional[tuple[list[str], list[str]]] = None,
                    dishonest: int = 0) -> Scenario:
    if kind not in ATTACKS:
        raise ScriptInvalid(f"unknown attack {kind!r}")
    if kind in ("dead", "live"):
        sc = Scenario(seed=seed, mode="direct")
        sc.nodes["val"] = ("validator", "honest", "none")
        if kind == "dead":
            sc.add("EVENT", "icp").add("DELIVER", "val")
            sc.add("EVENT", "rot").add("DELIVER", "val")
            sc.add("EVENT", "rot").add("DELIVER", "val")
            sc.add("COMPROMISE", "est", "1")
            sc.add("INJECT", "rot", "1", "val")
            if late_validator:
                sc.nodes["late"] = ("validator", "honest", "none")
                sc.add("DELIVER", "late", "0").add("INJECT", "rot", "1", "late").add("DELIVER", "late")
        else:
            sc.add("EVENT", "icp").add("DELIVER", "val")
            sc.add("EVENT", "rot").add("DELIVER", "val")
            sc.add("COMPROMISE", "next" if hidden_keys else "current")
            sc.add("INJECT", "rot", "2", "val")
            sc.add("EVENT", "rot").add("DELIVER", "val")
        return sc
    sc = Scenario(seed=seed, mode="round-robin", N=N, F=F, M=M)
    if kind == "signing-compromise-recovery":
        for ilk in ("icp", "ixn", "ixn", "ixn", "rot", "ixn", "ixn"):
            sc.add("EVENT", ilk)
        sc.add("COMPROMISE", "current")
        sc.add("INJECT", "ixn", "7", "all", "receipts=all")
        sc.add("INJECT", "ixn", "8", "all", "receipts=all")
        sc.add("INJECT", "ixn", "9", "all", "receipts=none")
        sc.add("EVENT", "rot")
        sc.add("INJECT", "ixn", "10", "all", "receipts=none")
        return sc
    names = _witness_names(N)
    for name in names[:dishonest]:
        sc.nodes[name] = ("witness", "dishonest", "none")
    honest = names[dishonest:]
    if split is None:
        half = len(honest) // 2
        split = (honest[:half], honest[half:])
    sc.add("EVENT", "icp")
    sc.add("SPLIT", "ixn", "A=" + ",".join(split[0]), "B=" + ",".join(split[1]))
    return sc


def _direct_verdict(tr: Transcript, kind: str) -> str:
    sim = tr.sim
    ctl = sim.controller
    original = {e.sn: e.digest() for e, _ in ctl.events}
    verdicts = []
    for v in sim.validators:
        recs = v.log.store.records(ctl.prefix)
        on_trunk = all(original.get(r.sn) == r.digest for r in recs)
        verdicts.append("protected" if on_trunk else "captured")
    return "protected" if all(x == "protected" for x in verdicts) else "captured"


def run_attack(scenario, **kwargs) -> Verdict:
    """Run an attack by name (with keyword options) or a prepared scenario.

    ``scenario`` may be an attack kind string, in which case the script is
    built by :func:`attack_scenario`, or a tuple ``(kind, Scenario)``.
    """
    if isinstance(scenario, str):
        kind, sc = scenario, attack_scenario(scenario, **kwargs)
    else:
        kind, sc = scenario
    tr = run_scenario(sc)
    m = tr.metrics
    if kind in ("dead", "live"):
        verdict = _direct_verdict(tr, kind)
    elif kind == "signing-compromise-recovery":
        ctl_digests = [r.digest for r in tr.sim.controller.log.store.records(tr.sim.controller.prefix)]
        converged = all(
            [r.digest for r in w.log.store.records(tr.sim.controller.prefix)] == ctl_digests
            for w in tr.sim.witnesses if w.responsive and w.fault == "honest"
        )
        verdict = "recovered" if converged else "diverged"
    else:
        count = int(m.get("split.sufficient", 0))
        verdict = {0: "no-sufficient-agreement", 1: "single-sufficient-agreement"}.get(
            count, "conflicting-sufficient-agreements"
        )
    m["verdict"] = verdict
    return Verdict(kind, verdict, tr)


def honest_signature_safety(sim: Simulation) -> bool:
    """No honest witness signed two versions of one location, except by recovery."""
    for w in sim.witnesses:
        if w.fault != "honest":
            continue
        for (prefix, sn), versions in w.signed.items():
            digests = {d for d, _ in versions}
            if len(digests) <= 1:
                continue
            ilks = [ilk for _, ilk in versions]
            if len(digests) > 2 or ilks[0] != "ixn" or ilks[-1] not in ("rot", "drt"):
                return False
    return True
