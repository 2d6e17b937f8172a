from dataclasses import dataclass

import pytest

from lnverify.explorer import Event, ProtocolModel
from lnverify.protocol import FsmState


@dataclass(frozen=True)
class Stutter:
    def __str__(self):
        return "stutter"


class StutteringFailModel(ProtocolModel):
    """Broken on purpose: FAIL_CHANNEL loops on itself and is no longer an end state."""

    def is_valid_end(self, g):
        return all(p.state is FsmState.FUNDED for p in g.peers)

    def successors(self, g):
        out = super().successors(g)
        for role in ("A", "B"):
            p = g.peer_a if role == "A" else g.peer_b
            if p.state is FsmState.FAIL_CHANNEL:
                out.append((Event(p.role, Stutter()), g))
        return out


@pytest.fixture
def broken_model():
    return StutteringFailModel()
