"""
HTLC congestion
===============

One peer keeps adding HTLCs until the channel's slot limit is reached. The
checker finds the shortest such run; the scripted replay shows the funds
stay locked until someone closes on-chain.
"""

from lnverify import ModelConfig, check
from lnverify.scenarios import run_scenario

for k in (2, 10):
    verdict = check("p4", ModelConfig(max_htlcs=k))
    final = verdict.counterexample.final
    print(f"max_htlcs={k}: violated after {len(verdict.counterexample)} events,",
          "A", final.peer_a, "B", final.peer_b)

run = run_scenario("congestion")
for note in run.notes:
    print(note)
print("after an abort close:", {r.value: v for r, v in run.payout.balances.items()})
