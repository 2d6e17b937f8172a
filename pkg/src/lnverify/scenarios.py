"""Scripted protocol runs and the attack replays built on them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .config import ModelConfig
from .explorer import Event, GlobalState, ProtocolModel, ReplayError, Trace, find_safety_violation
from .properties import build
from .protocol import (
    Deliver,
    InitiateAdd,
    InitiateCommit,
    InitiateError,
    InitiateFulfill,
    Outcome,
    Role,
    Timeout,
    Validity,
)
from .settlement import ChannelParams, PayoutSummary, Scenario, resolve_outcome

A, B = Role.A, Role.B

# step vocabulary for scripts: (actor, verb)
_VERBS = ("add", "commit", "fulfill", "deliver", "reject", "reject-silent", "timeout", "timeout-notify", "error")


def _action(g: GlobalState, role: Role, verb: str):
    head = g.link.inbound(role).head
    if verb == "add":
        return InitiateAdd(Validity.VALID)
    if verb == "commit":
        return InitiateCommit(Validity.VALID)
    if verb == "fulfill":
        return InitiateFulfill(Validity.VALID)
    if verb in ("deliver", "reject", "reject-silent"):
        if head is None:
            raise ReplayError(f"{role.value} has nothing to receive")
        outcome = {"deliver": Outcome.ACCEPT, "reject": Outcome.FAIL_NOTIFY,
                   "reject-silent": Outcome.FAIL_SILENT}[verb]
        return Deliver(head, outcome)
    if verb == "timeout":
        return Timeout(notify=False)
    if verb == "timeout-notify":
        return Timeout(notify=True)
    if verb == "error":
        return InitiateError(notify=True)
    raise ValueError(f"unknown script verb {verb!r}; expected one of {_VERBS}")


def run_script(steps: Iterable[tuple[Role, str]], model: Optional[ProtocolModel] = None) -> Trace:
    """Drive the model through ``(actor, verb)`` steps, checking each is enabled."""
    model = model or ProtocolModel()
    g = model.initial()
    states, events = [g], []
    for i, (role, verb) in enumerate(steps):
        action = _action(g, role, verb)
        for ev, nxt in model.successors(g):
            if ev.actor is role and ev.action == action:
                break
        else:
            raise ReplayError(f"step {i}: {role.value} {verb} is not enabled in {g}")
        events.append(ev)
        states.append(nxt)
        g = nxt
    return Trace(states, events)


HANDSHAKE = [
    (A, "add"), (B, "deliver"),
    (A, "commit"), (B, "deliver"), (A, "deliver"),
    (B, "commit"), (A, "deliver"), (B, "deliver"),
]
HONEST_COMPLETE = HANDSHAKE + [
    (B, "fulfill"), (A, "deliver"),
    (B, "commit"), (A, "deliver"), (B, "deliver"),
]
HONEST_ABORT = HANDSHAKE + [(B, "timeout"), (A, "timeout")]
PAYOUT_RACE = [(A, "add"), (B, "deliver"), (A, "commit"), (B, "reject")]


def honest_trace(model: Optional[ProtocolModel] = None) -> Trace:
    """One HTLC from A to B, fulfilled, both peers back in FUNDED."""
    return run_script(HONEST_COMPLETE, model)


def abort_trace(model: Optional[ProtocolModel] = None) -> Trace:
    """Both commitment rounds done, then neither side sends the fulfillment."""
    return run_script(HONEST_ABORT, model)


def congestion_trace(model: Optional[ProtocolModel] = None) -> Trace:
    """A keeps adding HTLCs until the channel's slot limit is reached."""
    model = model or ProtocolModel()
    return run_script([(A, "add"), (B, "deliver")] * model.config.max_htlcs, model)


def payout_race_trace(config: Optional[ModelConfig] = None) -> Trace:
    """The breadth-first shortest strict-determinacy violation."""
    config = config or ModelConfig()
    trace = find_safety_violation(config, build("p3", config.max_htlcs))
    if trace is None:  # pragma: no cover - the model is known to violate it
        raise RuntimeError("no strict-determinacy violation found")
    return trace


@dataclass
class ScenarioRun:
    name: str
    trace: Trace
    payout: PayoutSummary
    notes: list[str]


SCENARIOS = ("congestion", "payout-race-outcome1", "payout-race-outcome2", "honest", "honest-abort")


def run_scenario(name: str, config: Optional[ModelConfig] = None) -> ScenarioRun:
    config = config or ModelConfig()
    model = ProtocolModel(config)
    params = ChannelParams.from_config(config)
    notes: list[str] = []
    if name == "congestion":
        trace = congestion_trace(model)
        final = trace.final
        open_a = final.peer_a.open_htlcs
        can_add = any(isinstance(ev.action, InitiateAdd) for ev, _ in model.successors(final) if ev.actor is A)
        notes.append(f"A holds {open_a} open HTLCs of {config.max_htlcs} allowed; further adds enabled: {can_add}")
        notes.append("the slots stay occupied until the channel is closed on-chain")
        payout = resolve_outcome(trace, Scenario.HONEST_ABORT, params)
    elif name in ("payout-race-outcome1", "payout-race-outcome2"):
        trace = payout_race_trace(config)
        payout = resolve_outcome(trace, Scenario(name.rsplit("-", 1)[1]), params)
    elif name == "honest":
        trace = honest_trace(model)
        payout = resolve_outcome(trace, Scenario.HONEST_COMPLETE, params)
    elif name == "honest-abort":
        trace = abort_trace(model)
        payout = resolve_outcome(trace, Scenario.HONEST_ABORT, params)
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return ScenarioRun(name, trace, payout, notes)
