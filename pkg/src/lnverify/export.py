"""Serialisers for the FSM, traces and reports.

Every writer is byte-stable: same input, same output. Trace records carry a
fixed field order and enough detail about each action to rebuild the event
list, so a written trace can be read back and replayed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, is_dataclass
from typing import Any, Iterable, Optional, Union

from .explorer import ExplorationReport, LassoTrace, ProtocolModel, ReplayError, Trace
from .protocol import (
    END_STATES,
    PROGRESS_STATES,
    TRANSITIONS,
    Deliver,
    FsmState,
    InitiateAdd,
    InitiateCommit,
    InitiateError,
    InitiateFulfill,
    Message,
    MessageType,
    Outcome,
    Role,
    Timeout,
    Validity,
    action_label,
)

TRACE_FIELDS = ("step", "actor", "action", "message", "post_a", "post_b", "buf_a_to_b", "buf_b_to_a", "claim")


# -- FSM ------------------------------------------------------------------------


def fsm_dot() -> str:
    lines = ["digraph payment_fsm {", "  rankdir=LR;"]
    for s in FsmState:
        shape = "doublecircle" if s in END_STATES else "circle"
        extra = ', style=bold' if s in PROGRESS_STATES else ""
        lines.append(f'  {s.name} [shape={shape}{extra}];')
    for src, trigger, dst in TRANSITIONS:
        lines.append(f'  {src.name} -> {dst.name} [label="{trigger}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def fsm_plain() -> str:
    rows = [f"{src.name} --{trigger}--> {dst.name}" for src, trigger, dst in TRANSITIONS]
    head = f"{len(FsmState)} states, {len(TRANSITIONS)} transitions"
    return "\n".join([head, *rows]) + "\n"


def fsm_jsonl() -> str:
    recs = [{"state": s.name, "end": s in END_STATES, "progress": s in PROGRESS_STATES} for s in FsmState]
    recs += [{"source": a.name, "trigger": t, "target": b.name} for a, t, b in TRANSITIONS]
    return "".join(json.dumps(r) + "\n" for r in recs)


# -- actions and messages ---------------------------------------------------------


def message_to_dict(m: Optional[Message]) -> Optional[dict]:
    if m is None:
        return None
    return {"kind": m.kind.name, "validity": m.validity.name, "htlc_id": m.htlc_id}


def message_from_dict(d: Optional[dict]) -> Optional[Message]:
    if d is None:
        return None
    return Message(MessageType[d["kind"]], Validity[d["validity"]], int(d["htlc_id"]))


def action_to_dict(action) -> dict:
    out: dict[str, Any] = {"type": action_label(action)}
    if isinstance(action, Deliver):
        out["message"] = message_to_dict(action.message)
        out["outcome"] = action.outcome.value
        out["reply_validity"] = action.reply_validity.name
    elif isinstance(action, (Timeout, InitiateError)):
        out["notify"] = action.notify
    else:
        out["validity"] = action.validity.name
    return out


_INITIATORS = {c.__name__: c for c in (InitiateAdd, InitiateCommit, InitiateFulfill)}


def action_from_dict(d: dict):
    kind = d["type"]
    if kind == "Deliver":
        return Deliver(message_from_dict(d["message"]), Outcome(d["outcome"]), Validity[d["reply_validity"]])
    if kind == "Timeout":
        return Timeout(bool(d["notify"]))
    if kind == "InitiateError":
        return InitiateError(bool(d["notify"]))
    if kind in _INITIATORS:
        return _INITIATORS[kind](Validity[d["validity"]])
    raise ValueError(f"unknown action type {kind!r}")


# -- traces -----------------------------------------------------------------------


def _peer(p) -> dict:
    return {"state": p.state.name, "local_htlcs": p.local_htlcs, "remote_htlcs": p.remote_htlcs,
            "timer": p.armed_timer}


def _claim(c) -> Any:
    if c is None:
        return None
    return list(c) if isinstance(c, tuple) else c


def trace_records(trace: Trace, start_step: int = 1, phase: Optional[str] = None) -> list[dict]:
    recs = []
    for i, (_, ev, post) in enumerate(trace.steps(), start_step):
        rec = {
            "step": i,
            "actor": ev.actor.value,
            "action": action_to_dict(ev.action),
            "message": {
                "received": message_to_dict(getattr(ev.action, "message", None)),
                "sent": message_to_dict(ev.emitted),
            },
            "post_a": _peer(post.peer_a),
            "post_b": _peer(post.peer_b),
            "buf_a_to_b": [str(m) for m in post.link.a_to_b.queue],
            "buf_b_to_a": [str(m) for m in post.link.b_to_a.queue],
            "claim": _claim(post.claim_state),
        }
        if phase is not None:
            rec["phase"] = phase
        recs.append(rec)
    return recs


def trace_jsonl(trace: Union[Trace, LassoTrace]) -> str:
    if isinstance(trace, LassoTrace):
        recs = trace_records(trace.stem, phase="stem")
        recs += trace_records(trace.cycle, len(trace.stem) + 1, phase="cycle")
    else:
        recs = trace_records(trace)
    return "".join(json.dumps(r) + "\n" for r in recs)


def trace_plain(trace: Union[Trace, LassoTrace]) -> str:
    if isinstance(trace, LassoTrace):
        return ("stem:\n" + (trace.stem.describe() or "  (empty)") + "\ncycle:\n" + trace.cycle.describe() + "\n")
    return trace.describe() + "\n"


def steps_from_jsonl(text: str) -> list[tuple[Role, object]]:
    """``(actor, action)`` pairs from ``trace_jsonl`` output, stem and cycle alike."""
    events = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        action = action_from_dict(rec["action"])
        events.append((Role(rec["actor"]), action))
    return events


def load_trace(text: str, model: Optional[ProtocolModel] = None) -> Trace:
    """Parse a jsonl trace and replay it; raises ReplayError if it does not fit."""
    model = model or ProtocolModel()
    g = model.initial()
    states, events = [g], []
    for i, (actor, action) in enumerate(steps_from_jsonl(text)):
        for ev, nxt in model.successors(g):
            if ev.actor is actor and ev.action == action:
                break
        else:
            raise ReplayError(f"record {i + 1}: {actor.value} {action} is not enabled")
        events.append(ev)
        states.append(nxt)
        g = nxt
    return Trace(states, events)


# -- reports ----------------------------------------------------------------------


def exploration_dict(report: ExplorationReport, deterministic: bool = False) -> dict:
    return {
        "states_visited": report.states_visited,
        "transitions_fired": report.transitions_fired,
        "deadlocks": len(report.deadlocks),
        "peak_frontier": report.peak_frontier,
        "max_depth": report.max_depth,
        "elapsed_s": 0.0 if deterministic else round(report.elapsed, 3),
        "peak_memory_kb": 0 if deterministic else report.peak_memory_kb,
        "config": asdict(report.config),
    }


def report_plain(d: dict) -> str:
    lines = []
    for k, v in d.items():
        if isinstance(v, dict):
            v = ", ".join(f"{a}={b}" for a, b in v.items())
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def report_jsonl(d: Union[dict, Iterable[dict]]) -> str:
    rows = [d] if isinstance(d, dict) else list(d)
    return "".join(json.dumps(_plain(r), sort_keys=False) + "\n" for r in rows)


def _plain(x):
    if is_dataclass(x):
        return _plain(asdict(x))
    if isinstance(x, dict):
        return {str(getattr(k, "value", k)): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return getattr(x, "value", x)
