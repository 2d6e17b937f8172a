"""
Liveness: cycles that never settle
==================================

Nested depth-first search looks for a reachable cycle that avoids the
settled states. The real model has none; a deliberately broken copy with
a stuttering failure state does.
"""

from dataclasses import dataclass

from lnverify import ProtocolModel, check
from lnverify.explorer import Event
from lnverify.export import trace_plain
from lnverify.protocol import FsmState

for pid in ("p5", "nonprogress", "deadlock"):
    v = check(pid)
    print(f"{pid:12s} holds={v.holds} states={v.states}")


@dataclass(frozen=True)
class Stutter:
    def __str__(self):
        return "stutter"


class Broken(ProtocolModel):
    def successors(self, g):
        out = super().successors(g)
        out += [(Event(p.role, Stutter()), g) for p in g.peers if p.state is FsmState.FAIL_CHANNEL]
        return out


lasso = check("nonprogress", model=Broken()).counterexample
print(trace_plain(lasso))
