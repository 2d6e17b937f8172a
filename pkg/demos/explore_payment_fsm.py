"""
Exploring the payment state machine
===================================

Enumerate every reachable configuration of two peers and the link between
them, then watch the state space grow with the HTLC limit and buffer size.
"""

from lnverify import ModelConfig, explore
from lnverify.export import fsm_plain

print(fsm_plain())

# the default model: ten HTLC slots, one message in flight per direction
report = explore(ModelConfig())
print(report.states_visited, "states,", report.transitions_fired, "transitions,",
      len(report.deadlocks), "deadlocks")

# more slots and longer queues both enlarge the space
for k in (1, 2, 4, 8):
    row = [explore(ModelConfig(max_htlcs=k, buffer_capacity=c)).states_visited for c in (1, 2)]
    print(f"max_htlcs={k:<2d} capacity 1: {row[0]:>7d}   capacity 2: {row[1]:>8d}")
