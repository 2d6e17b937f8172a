"""
The payout race
===============

A commitment that is received but never revoked against leaves one peer
with two spendable channel states. Here we find that run, list the
commitments each side holds, and settle it both ways.
"""

from lnverify import check, derive_commitments
from lnverify.settlement import ChannelParams, resolve_outcome

trace = check("p3").counterexample
print(trace.describe())

for c in derive_commitments(trace):
    print(f"{c.label:6s} held by {c.holder.value}  revoked={c.revoked}  outputs={[o.amount for o in c.outputs]}")

# Alice publishes first: Bob's newer commitment can no longer confirm
early = resolve_outcome(trace, "outcome1")
print("outcome1", {r.value: v for r, v in early.balances.items()}, early.rejected)

# Bob publishes the commitment he claims never to have received
late = resolve_outcome(trace, "outcome2")
for step in late.timeline:
    print(f"  h={step.height:<5d} {step.description}")
print("outcome2", {r.value: v for r, v in late.balances.items()}, "after", late.total_blocks, "blocks")

# a shorter delay shortens the wait accordingly
quick = resolve_outcome(trace, "outcome2", ChannelParams(csv_delay=144))
print("with csv_delay=144:", quick.total_blocks, "blocks")
