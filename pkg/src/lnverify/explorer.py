"""Explicit-state exploration of the two-peer system.

Breadth-first search gives the reachable state set, deadlocks and shortest
safety counterexamples; nested depth-first search finds accepting cycles for
liveness claims. Exploration is sequential and deterministic: successor order
is fixed, so identical configurations give identical reports and traces.
"""
from __future__ import annotations

import hashlib
import resource
import struct
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, NamedTuple, Optional, Sequence

from .config import ModelConfig
from .network import DuplexLink
from .protocol import (
    Action,
    Deliver,
    Message,
    PeerMachine,
    Role,
    _apply,
    _enabled,
    initial_peer,
)


class StateSpaceBudgetExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"state cap of {cap} states exceeded")
        self.cap = cap


class ReplayError(ValueError):
    """An event sequence does not replay from the initial state."""


class GlobalState(NamedTuple):
    peer_a: PeerMachine
    peer_b: PeerMachine
    link: DuplexLink
    claim_state: Optional[Hashable] = None

    def peer(self, role: Role) -> PeerMachine:
        return self.peer_a if role is Role.A else self.peer_b

    @property
    def peers(self) -> tuple[PeerMachine, PeerMachine]:
        return self.peer_a, self.peer_b

    def without_claim(self) -> "GlobalState":
        return self._replace(claim_state=None) if self.claim_state is not None else self


class Event(NamedTuple):
    actor: Role
    action: Action
    emitted: Optional[Message] = None

    def __str__(self) -> str:
        text = f"{self.actor.value}: {self.action}"
        if self.emitted is not None:
            text += f" -> !{self.emitted}"
        return text

    def observations(self) -> list[tuple[str, Message]]:
        """The actor's ``?m`` / ``!m`` boundary events, in order."""
        obs = []
        if isinstance(self.action, Deliver):
            obs.append(("?", self.action.message))
        if self.emitted is not None:
            obs.append(("!", self.emitted))
        return obs


class ProtocolModel:
    """The composed system: two peers plus a duplex link."""

    def __init__(self, config: Optional[ModelConfig] = None):
        self.config = config or ModelConfig()

    def initial(self) -> GlobalState:
        return GlobalState(
            initial_peer(Role.A), initial_peer(Role.B), DuplexLink.empty(self.config.buffer_capacity)
        )

    def is_valid_end(self, g: GlobalState) -> bool:
        return g.peer_a.is_end_state and g.peer_b.is_end_state

    def peer_moves(self, peer: PeerMachine, head: Optional[Message], room: bool):
        max_htlcs = self.config.max_htlcs
        for action in _enabled(peer, head, room, max_htlcs):
            new_peer, emitted = _apply(peer, action, max_htlcs)
            yield action, new_peer, emitted

    def successors(self, g: GlobalState) -> list[tuple[Event, GlobalState]]:
        out = []
        link = g.link
        for role in (Role.A, Role.B):
            peer = g.peer(role)
            inbound = link.inbound(role)
            outbound = link.outbound(role)
            room = len(outbound.queue) < outbound.capacity
            for action, new_peer, emitted in self.peer_moves(peer, inbound.head, room):
                new_in = inbound
                if isinstance(action, Deliver):
                    new_in = inbound._replace(queue=inbound.queue[1:])
                new_out = outbound
                if emitted is not None:
                    new_out = outbound._replace(queue=outbound.queue + (emitted,))
                if role is Role.A:
                    nxt = GlobalState(new_peer, g.peer_b, DuplexLink(new_out, new_in))
                else:
                    nxt = GlobalState(g.peer_a, new_peer, DuplexLink(new_in, new_out))
                out.append((Event(role, action, emitted), nxt))
        return out


def successors(g: GlobalState, config: Optional[ModelConfig] = None) -> list[tuple[Event, GlobalState]]:
    return ProtocolModel(config).successors(g.without_claim())


# -- canonical encoding ---------------------------------------------------------


def canonical_encoding(g: GlobalState) -> bytes:
    """Deterministic, injective byte encoding of a global state."""
    ints: list[int] = []
    for p in g.peers:
        ints += [0 if p.role is Role.A else 1, int(p.state), p.local_htlcs, p.remote_htlcs, int(p.acked)]
    for buf in g.link:
        ints += [buf.capacity, len(buf.queue)]
        for m in buf.queue:
            ints += [int(m.kind), int(m.validity), m.htlc_id]
    body = struct.pack(f">{len(ints)}H", *ints)
    if g.claim_state is not None:
        body += b"|" + repr(g.claim_state).encode()
    return body


def canonical_hash(g: GlobalState) -> str:
    return hashlib.blake2b(canonical_encoding(g), digest_size=16).hexdigest()


# -- traces -------------------------------------------------------------------


@dataclass
class Trace:
    """A finite path: ``states[i] --events[i]--> states[i+1]``."""

    states: list[GlobalState]
    events: list[Event] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.states) != len(self.events) + 1:
            raise ValueError("a trace needs exactly one more state than events")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def final(self) -> GlobalState:
        return self.states[-1]

    def steps(self) -> Iterator[tuple[GlobalState, Event, GlobalState]]:
        for i, ev in enumerate(self.events):
            yield self.states[i], ev, self.states[i + 1]

    def message_events(self) -> list[tuple[Role, str, Message]]:
        return [(ev.actor, d, m) for ev in self.events for d, m in ev.observations()]

    def describe(self) -> str:
        lines = []
        for i, (_, ev, post) in enumerate(self.steps(), 1):
            lines.append(f"{i:3d}  {ev}    A={post.peer_a}  B={post.peer_b}")
        return "\n".join(lines)


@dataclass
class LassoTrace:
    stem: Trace
    cycle: Trace

    def __post_init__(self) -> None:
        if len(self.cycle) == 0:
            raise ValueError("a lasso cycle must be non-empty")
        if self.cycle.states[0] != self.cycle.states[-1]:
            raise ValueError("a lasso cycle must be closed")
        if self.stem.final != self.cycle.states[0]:
            raise ValueError("the stem must end where the cycle starts")


def replay(events: Sequence[Event], model: Optional[ProtocolModel] = None, start: Optional[GlobalState] = None) -> Trace:
    """Re-fire ``events`` through ``successors``; raises ReplayError on mismatch."""
    model = model or ProtocolModel()
    g = start if start is not None else model.initial()
    states = [g]
    for i, ev in enumerate(events):
        for cand, nxt in model.successors(g):
            if cand == ev:
                g = nxt
                break
        else:
            raise ReplayError(f"event {i} ({ev}) is not enabled in {g}")
        states.append(g)
    return Trace(states, list(events))


def find_event(model: ProtocolModel, g: GlobalState, target: GlobalState) -> Event:
    for ev, nxt in model.successors(g):
        if nxt == target:
            return ev
    raise ReplayError("no event links the two states")


def _path_to(parents: dict, node, strip: Callable[[GlobalState], GlobalState], model: ProtocolModel,
             step_fn=None) -> Trace:
    chain = [node]
    while parents[chain[-1]] is not None:
        chain.append(parents[chain[-1]])
    chain.reverse()
    events = []
    for a, b in zip(chain, chain[1:]):
        if step_fn is None:
            events.append(find_event(model, strip(a), strip(b)))
        else:
            events.append(step_fn(a, b))
    return Trace(list(chain), events)


# -- exhaustive exploration -------------------------------------------------------


@dataclass
class ExplorationReport:
    states_visited: int
    transitions_fired: int
    deadlocks: list[Trace]
    peak_frontier: int
    elapsed: float
    max_depth: int = 0
    peak_memory_kb: int = 0
    config: ModelConfig = field(default_factory=ModelConfig)

    @property
    def deadlock_free(self) -> bool:
        return not self.deadlocks


def peak_memory_kb() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss


def reachable_states(model: ProtocolModel, state_cap: Optional[int] = None) -> dict[GlobalState, Optional[GlobalState]]:
    """BFS parent map over every reachable state (values are BFS parents)."""
    init = model.initial()
    parents: dict[GlobalState, Optional[GlobalState]] = {init: None}
    frontier = deque([init])
    while frontier:
        g = frontier.popleft()
        for _, nxt in model.successors(g):
            if nxt not in parents:
                parents[nxt] = g
                if state_cap is not None and len(parents) > state_cap:
                    raise StateSpaceBudgetExceeded(state_cap)
                frontier.append(nxt)
    return parents


def explore(config: Optional[ModelConfig] = None, model: Optional[ProtocolModel] = None) -> ExplorationReport:
    """Visit every reachable state once and record deadlocks.

    A deadlock is a state without successors in which some peer is not at a
    valid end state.
    """
    model = model or ProtocolModel(config)
    config = model.config
    t0 = time.perf_counter()
    init = model.initial()
    parents: dict[GlobalState, Optional[GlobalState]] = {init: None}
    depth = {init: 0}
    frontier = deque([init])
    fired = peak = max_depth = 0
    stuck: list[GlobalState] = []
    while frontier:
        peak = max(peak, len(frontier))
        g = frontier.popleft()
        succ = model.successors(g)
        fired += len(succ)
        if not succ and not model.is_valid_end(g):
            stuck.append(g)
        d = depth.pop(g) + 1
        for _, nxt in succ:
            if nxt not in parents:
                parents[nxt] = g
                depth[nxt] = d
                max_depth = max(max_depth, d)
                if config.state_cap is not None and len(parents) > config.state_cap:
                    raise StateSpaceBudgetExceeded(config.state_cap)
                frontier.append(nxt)
    deadlocks = [_path_to(parents, g, lambda s: s, model) for g in stuck]
    return ExplorationReport(
        states_visited=len(parents),
        transitions_fired=fired,
        deadlocks=deadlocks,
        peak_frontier=peak,
        elapsed=time.perf_counter() - t0,
        max_depth=max_depth,
        peak_memory_kb=peak_memory_kb(),
        config=config,
    )


# -- safety: BFS over the model/claim product ---------------------------------------


def find_safety_violation(
    config: Optional[ModelConfig],
    checker,
    model: Optional[ProtocolModel] = None,
    stats: Optional[dict] = None,
) -> Optional[Trace]:
    """Shortest trace (in events) reaching a claim violation, or None.

    ``checker`` is a state-invariant or event-claim PropertyChecker from
    ``lnverify.properties``. Event claims run in lock step with the model;
    the claim state is carried in ``GlobalState.claim_state``. If ``stats``
    is given, the number of (product) states stored is written to
    ``stats["states"]``.
    """
    stats = stats if stats is not None else {}
    model = model or ProtocolModel(config)
    cap = model.config.state_cap
    init = model.initial()
    if checker.is_state_invariant:
        stats["states"] = 1
        if checker.violated(init):
            return Trace([init])
        parents: dict = {init: None}
        frontier = deque([init])
        try:
            while frontier:
                g = frontier.popleft()
                for _, nxt in model.successors(g):
                    if nxt in parents:
                        continue
                    parents[nxt] = g
                    if checker.violated(nxt):
                        return _path_to(parents, nxt, lambda s: s, model)
                    if cap is not None and len(parents) > cap:
                        raise StateSpaceBudgetExceeded(cap)
                    frontier.append(nxt)
            return None
        finally:
            stats["states"] = len(parents)

    start = init._replace(claim_state=checker.initial_claim())
    parents = {start: None}
    via: dict = {}
    frontier = deque([start])
    try:
        while frontier:
            node = frontier.popleft()
            g = node.without_claim()
            for ev, nxt in model.successors(g):
                verdict, claim = checker.step_event(node.claim_state, ev, nxt)
                if verdict == "violation":
                    tail = nxt._replace(claim_state=claim)
                    trace = _path_to(parents, node, GlobalState.without_claim, model, lambda a, b: via[b])
                    return Trace(trace.states + [tail], trace.events + [ev])
                succ = nxt._replace(claim_state=claim)
                if succ in parents:
                    continue
                parents[succ] = node
                via[succ] = ev
                if cap is not None and len(parents) > cap:
                    raise StateSpaceBudgetExceeded(cap)
                frontier.append(succ)
        return None
    finally:
        stats["states"] = len(parents)


# -- liveness: nested DFS -----------------------------------------------------------


def nested_dfs(
    init: Hashable,
    successors_of: Callable[[Hashable], Iterable[tuple[object, Hashable]]],
    accepting: Callable[[Hashable], bool],
    stats: Optional[dict] = None,
) -> Optional[tuple[list, list, list, list]]:
    """Courcoubetis-Vardi-Wolper-Yannakakis nested depth-first search.

    Returns ``(stem_nodes, stem_labels, cycle_nodes, cycle_labels)`` for the
    first accepting cycle found, else None. Iterative, so depth is unbounded.
    """
    outer_seen = {init}
    inner_seen: set = set()
    stack = [(init, iter(successors_of(init)), None)]
    try:
        return _outer_dfs(stack, outer_seen, inner_seen, successors_of, accepting)
    finally:
        if stats is not None:
            stats["states"] = stats.get("states", 0) + len(outer_seen)


def _outer_dfs(stack, outer_seen, inner_seen, successors_of, accepting):
    while stack:
        node, it, _ = stack[-1]
        for label, nxt in it:
            if nxt not in outer_seen:
                outer_seen.add(nxt)
                stack.append((nxt, iter(successors_of(nxt)), label))
                break
        else:
            if accepting(node):
                found = _inner_dfs(node, successors_of, inner_seen)
                if found is not None:
                    stem_nodes = [f[0] for f in stack]
                    stem_labels = [f[2] for f in stack[1:]]
                    return stem_nodes, stem_labels, found[0], found[1]
            stack.pop()
    return None


def _inner_dfs(seed, successors_of, seen: set):
    seen.add(seed)
    stack = [(seed, iter(successors_of(seed)), None)]
    while stack:
        node, it, _ = stack[-1]
        for label, nxt in it:
            if nxt == seed:
                nodes = [f[0] for f in stack] + [seed]
                labels = [f[2] for f in stack[1:]] + [label]
                return nodes, labels
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(successors_of(nxt)), label))
                break
        else:
            stack.pop()
    return None


def find_acceptance_cycle(
    config: Optional[ModelConfig],
    claim,
    model: Optional[ProtocolModel] = None,
    stats: Optional[dict] = None,
) -> Optional[LassoTrace]:
    """Lasso through a cycle whose every state satisfies one of the claim's
    ``cycle_predicates`` (the states a violating infinite run stays inside).

    Each predicate is checked in product with a two-state guesser: copy 0
    explores freely, copy 1 may only continue through predicate states and is
    accepting. A reachable copy-1 cycle is the violation.
    """
    stats = stats if stats is not None else {}
    stats["states"] = 0
    model = model or ProtocolModel(config)
    for pred in claim.cycle_predicates():
        found = _buchi_search(model, pred, stats)
        if found is not None:
            return found
    return None


def _buchi_search(model: ProtocolModel, pred: Callable[[GlobalState], bool], stats: dict) -> Optional[LassoTrace]:
    def succ(node):
        g, committed = node
        for ev, nxt in model.successors(g):
            inside = pred(nxt)
            if not committed:
                yield ev, (nxt, False)
            if inside:
                yield ev, (nxt, True)

    found = nested_dfs((model.initial(), False), succ, lambda n: n[1], stats)
    if found is None:
        return None
    stem_nodes, stem_labels, cyc_nodes, cyc_labels = found
    stem = Trace([n[0] for n in stem_nodes], list(stem_labels))
    cycle = Trace([n[0] for n in cyc_nodes], list(cyc_labels))
    return LassoTrace(stem, cycle)
