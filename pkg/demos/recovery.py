"""Signing-key compromise followed by a superseding rotation, witnessed by four nodes."""
from kerikernel.netsim import honest_signature_safety, run_attack

verdict = run_attack("signing-compromise-recovery")
print(verdict.transcript.text)
m = verdict.metrics
print("trunk      ", m["w0.trunk"])
print("disputed   ", m["w0.disputed"])
print("accountable", m["w0.accountable"])
print("verdict    ", verdict.verdict)
print("honest witnesses signed one version per location:", honest_signature_safety(verdict.transcript.sim))
