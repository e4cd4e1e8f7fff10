"""Incept, rotate twice, interact, then replay the log in a fresh validator."""
from kerikernel import Controller, EventLog, KeyChain

ctl = Controller(KeyChain.deterministic("demo"))
ctl.incept(keys=2, next_count=3, sith=1)
ctl.rotate(next_count=2, next_sith=["1/2", "1/2"])
ctl.rotate(next_count=1)
ctl.interact()

stream = ctl.log.export(ctl.prefix)
validator = EventLog()
print("dispositions:", [str(d) for d in validator.import_stream(stream)])
state = validator.state(ctl.prefix)
print("prefix      :", state.prefix)
print("sn          :", state.sn)
print("keys        :", list(state.keys))
print("key index   :", state.first_key_index)
print("threshold   :", state.sith)

# a single flipped byte breaks the chain
tampered = bytearray(stream)
tampered[stream.index(b'"s"') + 6] ^= 1
print("tampered    :", [str(d) for d in EventLog().import_stream(bytes(tampered))])
