"""The five channel-operation properties plus built-in deadlock/livelock checks.

Event claims (P1-P3) are small hand-compiled automata over each peer's
observable alphabet: ``!m`` when the peer enqueues ``m`` and ``?m`` when it
dequeues ``m``. They are instantiated once per peer and stepped in lock step
with the model. P4 is a state invariant; P5 and the non-progress check are
cycle conditions handed to the nested DFS.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

from .config import ModelConfig
from .explorer import (
    Event,
    GlobalState,
    LassoTrace,
    ProtocolModel,
    Trace,
    explore,
    find_acceptance_cycle,
    find_safety_violation,
)
from .protocol import DEFAULT_MAX_HTLCS, FsmState, MessageType, Role


class PropertyId(str, enum.Enum):
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"
    P4 = "p4"
    P5 = "p5"
    DEADLOCK = "deadlock"
    NONPROGRESS = "nonprogress"


class CheckerKind(str, enum.Enum):
    NEVER_CLAIM = "never_claim"
    MUST_MATCH_TRACE = "must_match_trace"
    STATE_INVARIANT = "state_invariant"
    BUCHI_NEGATION = "buchi_negation"
    BUILTIN = "builtin"


class ObservableEvent(NamedTuple):
    actor: Role
    direction: str  # "!" send, "?" receive
    kind: MessageType

    def __str__(self) -> str:
        return f"{self.actor.value}{self.direction}{self.kind.name}"


class StateSnapshot(NamedTuple):
    """The acting peer's FSM state right after its action."""

    actor: Role
    state: FsmState


class ClaimResult(NamedTuple):
    verdict: str  # "advance" | "violation" | "discard"
    next: Optional[str] = None


def advance(q: str) -> ClaimResult:
    return ClaimResult("advance", q)


VIOLATION = ClaimResult("violation")
DISCARD = ClaimResult("discard")

Observation = Union[ObservableEvent, StateSnapshot]


# -- claim automata -----------------------------------------------------------------


def _p1_delta(q: str, e: Observation) -> ClaimResult:
    # Forbidden fragment: !REV immediately followed by ?COMM.
    if isinstance(e, StateSnapshot):
        return advance(q)
    if q == "idle":
        if e.direction == "!" and e.kind is MessageType.REV:
            return advance("revoked")
        return advance("idle")
    if e.direction == "?" and e.kind is MessageType.COMM:
        return VIOLATION
    return DISCARD


def _p2_delta(q: str, e: Observation) -> ClaimResult:
    # After ?COMM, no FULF in either direction until the peer has sent REV.
    if isinstance(e, StateSnapshot):
        return advance(q)
    if q == "idle":
        if e.direction == "?" and e.kind is MessageType.COMM:
            return advance("owes_rev")
        return advance("idle")
    if e.kind is MessageType.FULF:
        return VIOLATION
    if e.direction == "!" and e.kind is MessageType.REV:
        return advance("idle")
    return advance("owes_rev")


def _p3_delta(q: str, e: Observation) -> ClaimResult:
    # After ?COMM the next send must be REV; receives are absorbed. Failing
    # the channel while the REV is owed means it is never sent.
    if isinstance(e, StateSnapshot):
        if q == "owes_rev" and e.state is FsmState.FAIL_CHANNEL:
            return VIOLATION
        return advance(q)
    if q == "idle":
        if e.direction == "?" and e.kind is MessageType.COMM:
            return advance("owes_rev")
        return advance("idle")
    if e.direction == "?":
        return advance("owes_rev")
    if e.kind is MessageType.REV:
        return advance("idle")
    return VIOLATION


@dataclass(frozen=True)
class ClaimAutomaton:
    states: tuple[str, ...]
    initial: str
    delta: Callable[[str, Observation], ClaimResult]


_AUTOMATA = {
    PropertyId.P1: ClaimAutomaton(("idle", "revoked"), "idle", _p1_delta),
    PropertyId.P2: ClaimAutomaton(("idle", "owes_rev"), "idle", _p2_delta),
    PropertyId.P3: ClaimAutomaton(("idle", "owes_rev"), "idle", _p3_delta),
}

_KINDS = {
    PropertyId.P1: CheckerKind.NEVER_CLAIM,
    PropertyId.P2: CheckerKind.NEVER_CLAIM,
    PropertyId.P3: CheckerKind.MUST_MATCH_TRACE,
    PropertyId.P4: CheckerKind.STATE_INVARIANT,
    PropertyId.P5: CheckerKind.BUCHI_NEGATION,
    PropertyId.DEADLOCK: CheckerKind.BUILTIN,
    PropertyId.NONPROGRESS: CheckerKind.BUILTIN,
}

DESCRIPTIONS = {
    PropertyId.P1: "recourse continuity: no REV immediately followed by a received COMM",
    PropertyId.P2: "weak determinacy: no FULF between a received COMM and the REV answering it",
    PropertyId.P3: "strict determinacy: the next message after a received COMM is REV",
    PropertyId.P4: "HTLC congestion: always local + remote < max_accepted_htlcs",
    PropertyId.P5: "payment liveness: always eventually FUNDED or FAIL_CHANNEL",
    PropertyId.DEADLOCK: "no terminal state outside the end states",
    PropertyId.NONPROGRESS: "no cycle that avoids FUNDED at both peers",
}


@dataclass(frozen=True)
class PropertyChecker:
    id: PropertyId
    kind: CheckerKind
    automaton: Optional[ClaimAutomaton] = None
    max_htlcs: int = DEFAULT_MAX_HTLCS

    @property
    def is_state_invariant(self) -> bool:
        return self.kind is CheckerKind.STATE_INVARIANT

    @property
    def is_safety(self) -> bool:
        return self.kind in (CheckerKind.NEVER_CLAIM, CheckerKind.MUST_MATCH_TRACE, CheckerKind.STATE_INVARIANT)

    @property
    def description(self) -> str:
        return DESCRIPTIONS[self.id]

    # event claims

    def initial_claim(self) -> tuple[str, str]:
        q = self.automaton.initial
        return (q, q)

    def step_peer(self, q: str, e: Observation) -> ClaimResult:
        """One peer's claim step. A never-claim whose partial match dies
        restarts from the initial state, since the forbidden fragment may
        begin at any later point of the run."""
        res = claim_step(self, q, e)
        if res.verdict == "discard" and self.kind is CheckerKind.NEVER_CLAIM:
            res = claim_step(self, self.automaton.initial, e)
        return res

    def step_event(self, claim: tuple[str, str], event: Event, post: GlobalState):
        """Advance the acting peer's claim over one model event.

        Returns ``("advance", new_claim)`` or ``("violation", claim_with_marker)``.
        """
        idx = 0 if event.actor is Role.A else 1
        q = claim[idx]
        observed: list[Observation] = [
            ObservableEvent(event.actor, d, m.kind) for d, m in event.observations()
        ]
        observed.append(StateSnapshot(event.actor, post.peer(event.actor).state))
        for e in observed:
            res = self.step_peer(q, e)
            if res.verdict == "violation":
                return "violation", _set(claim, idx, "VIOLATION")
            if res.verdict == "discard":
                # must-match claims treat an unmatched event as a violation
                return "violation", _set(claim, idx, "VIOLATION")
            q = res.next
        return "advance", _set(claim, idx, q)

    # state invariant

    def violated(self, g: GlobalState) -> bool:
        return any(p.local_htlcs + p.remote_htlcs >= self.max_htlcs for p in g.peers)

    # cycle conditions

    def cycle_predicates(self) -> list[Callable[[GlobalState], bool]]:
        if self.id is PropertyId.P5:
            settled = (FsmState.FUNDED, FsmState.FAIL_CHANNEL)
            return [
                lambda g: g.peer_a.state not in settled,
                lambda g: g.peer_b.state not in settled,
            ]
        if self.id is PropertyId.NONPROGRESS:
            return [lambda g: g.peer_a.state is not FsmState.FUNDED and g.peer_b.state is not FsmState.FUNDED]
        raise TypeError(f"{self.id.value} is not a cycle property")


def _set(pair: tuple, idx: int, value) -> tuple:
    return (value, pair[1]) if idx == 0 else (pair[0], value)


def build(pid: Union[PropertyId, str], max_htlcs: int = DEFAULT_MAX_HTLCS) -> PropertyChecker:
    pid = PropertyId(pid.lower() if isinstance(pid, str) else pid)
    return PropertyChecker(pid, _KINDS[pid], _AUTOMATA.get(pid), max_htlcs)


def claim_step(checker: PropertyChecker, claim_state: str, event: Observation) -> ClaimResult:
    """Pure transition of one peer's claim automaton."""
    if checker.automaton is None:
        raise TypeError(f"{checker.id.value} has no claim automaton")
    if claim_state not in checker.automaton.states:
        raise ValueError(f"unknown claim state {claim_state!r}")
    return checker.automaton.delta(claim_state, event)


def run_claim(checker: PropertyChecker, events) -> ClaimResult:
    """Run one peer's claim over a sequence of observations.

    ``events`` may hold ObservableEvent / StateSnapshot values or short
    strings like ``"!REV"`` and ``"?COMM"``.
    """
    q = checker.automaton.initial
    for e in events:
        if isinstance(e, str):
            e = ObservableEvent(Role.A, e[0], MessageType[e[1:]])
        res = checker.step_peer(q, e)
        if res.verdict != "advance":
            return res
        q = res.next
    return advance(q)


# -- running checks -------------------------------------------------------------------


@dataclass
class Verdict:
    property: PropertyId
    holds: bool
    states: int
    elapsed: float
    counterexample: Optional[Union[Trace, LassoTrace]] = None
    deadlocks: list[Trace] = field(default_factory=list)


def check(pid: Union[PropertyId, str], config: Optional[ModelConfig] = None,
          model: Optional[ProtocolModel] = None) -> Verdict:
    """Run one property against the model and package the outcome."""
    model = model or ProtocolModel(config)
    config = model.config
    checker = build(pid, config.max_htlcs)
    t0 = time.perf_counter()
    stats: dict = {}
    if checker.id is PropertyId.DEADLOCK:
        report = explore(model=model)
        cex = report.deadlocks[0] if report.deadlocks else None
        return Verdict(checker.id, not report.deadlocks, report.states_visited,
                       time.perf_counter() - t0, cex, report.deadlocks)
    if checker.is_safety:
        cex = find_safety_violation(config, checker, model=model, stats=stats)
    else:
        cex = find_acceptance_cycle(config, checker, model=model, stats=stats)
    return Verdict(checker.id, cex is None, stats.get("states", 0), time.perf_counter() - t0, cex)
