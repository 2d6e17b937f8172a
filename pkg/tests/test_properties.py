import pytest
from hypothesis import given, settings, strategies as st

from lnverify.config import ModelConfig
from lnverify.explorer import GlobalState, ProtocolModel
from lnverify.network import DuplexLink
from lnverify.properties import (
    CheckerKind,
    ObservableEvent,
    PropertyId,
    StateSnapshot,
    build,
    check,
    claim_step,
    run_claim,
)
from lnverify.protocol import Deliver, FsmState, MessageType, PeerMachine, Role

M = MessageType


def obs(text, actor=Role.A):
    return ObservableEvent(actor, text[0], M[text[1:]])


def test_kinds():
    assert build("p1").kind is CheckerKind.NEVER_CLAIM
    assert build("P3").kind is CheckerKind.MUST_MATCH_TRACE
    assert build(PropertyId.P4).is_state_invariant
    assert build("p5").kind is CheckerKind.BUCHI_NEGATION
    assert build("deadlock").kind is build("nonprogress").kind is CheckerKind.BUILTIN


def test_p1_rev_then_comm_violates():
    assert run_claim(build("p1"), ["!REV", "?COMM"]).verdict == "violation"


def test_p1_fragment_must_be_consecutive():
    assert run_claim(build("p1"), ["!REV", "?ADD", "?COMM"]).verdict == "advance"
    # the discarded partial match restarts, so a later fragment is still caught
    assert run_claim(build("p1"), ["!REV", "!REV", "?COMM"]).verdict == "violation"


def test_p1_self_loop_on_receive():
    assert claim_step(build("p1"), "idle", obs("?ADD")) == ("advance", "idle")


def test_p1_discard_after_other_event():
    assert claim_step(build("p1"), "revoked", obs("!COMM")).verdict == "discard"


def test_p2_fulfill_before_rev():
    p2 = build("p2")
    assert claim_step(p2, "owes_rev", obs("!FULF")).verdict == "violation"
    assert claim_step(p2, "owes_rev", obs("?FULF")).verdict == "violation"
    assert claim_step(p2, "owes_rev", obs("!REV")) == ("advance", "idle")
    assert run_claim(p2, ["?COMM", "!REV", "!FULF"]).verdict == "advance"


def test_p3_mandated_response():
    assert run_claim(build("p3"), ["?COMM", "!REV"]).verdict == "advance"
    assert run_claim(build("p3"), ["?COMM", "?ADD", "!REV"]).verdict == "advance"
    assert run_claim(build("p3"), ["?COMM", "!ERR"]).verdict == "violation"


def test_p3_silent_failure_while_owing():
    p3 = build("p3")
    assert claim_step(p3, "owes_rev", StateSnapshot(Role.B, FsmState.FAIL_CHANNEL)).verdict == "violation"
    assert claim_step(p3, "idle", StateSnapshot(Role.B, FsmState.FAIL_CHANNEL)).verdict == "advance"


def test_p4_boundary():
    p4 = build("p4", 10)
    g = GlobalState(PeerMachine(Role.A, FsmState.MORE_HTLCS_WAIT, 5, 5), PeerMachine(Role.B), DuplexLink.empty())
    assert p4.violated(g)
    assert not p4.violated(g._replace(peer_a=PeerMachine(Role.A, FsmState.MORE_HTLCS_WAIT, 5, 4)))


def test_claim_step_validates_state():
    with pytest.raises(ValueError):
        claim_step(build("p2"), "nowhere", obs("?ADD"))
    with pytest.raises(TypeError):
        claim_step(build("p4"), "idle", obs("?ADD"))
    with pytest.raises(TypeError):
        build("p1").cycle_predicates()


@pytest.mark.parametrize("pid,holds", [
    ("p1", True), ("p2", True), ("p3", False), ("p4", False), ("p5", True),
    ("deadlock", True), ("nonprogress", True),
])
def test_default_verdicts(pid, holds):
    assert check(pid).holds is holds


@pytest.mark.parametrize("max_htlcs", [2, 10])
def test_p4_counterexample_hits_the_bound(max_htlcs):
    v = check("p4", ModelConfig(max_htlcs=max_htlcs))
    final = v.counterexample.final
    assert max(p.local_htlcs + p.remote_htlcs for p in final.peers) == max_htlcs


def test_p3_counterexample_shape():
    trace = check("p3").counterexample
    msgs = [(r, d, m.kind) for r, d, m in trace.message_events()]
    assert msgs[:4] == [(Role.A, "!", M.ADD), (Role.B, "?", M.ADD), (Role.A, "!", M.COMM), (Role.B, "?", M.COMM)]
    assert trace.final.peer_b.state is FsmState.FAIL_CHANNEL
    assert not any(m.kind is M.REV for _, _, m in trace.message_events())
    assert trace.final.claim_state[1] == "VIOLATION"


def test_broken_model_nonprogress(broken_model):
    v = check("nonprogress", model=broken_model)
    assert not v.holds and len(v.counterexample.cycle) >= 1


# Running one product claim over both peers is the same as running a
# separate claim over each peer's own projection.
@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["p1", "p2", "p3"]), st.lists(st.integers(0, 10**6), min_size=1, max_size=40))
def test_per_peer_instantiation(pid, choices):
    checker = build(pid)
    model = ProtocolModel()
    g = model.initial()
    claim = checker.initial_claim()
    projections = {Role.A: [], Role.B: []}
    product_violation = False
    for c in choices:
        succ = model.successors(g)
        if not succ:
            break
        ev, nxt = succ[c % len(succ)]
        verdict, claim = checker.step_event(claim, ev, nxt)
        proj = projections[ev.actor]
        if isinstance(ev.action, Deliver):
            proj.append(ObservableEvent(ev.actor, "?", ev.action.message.kind))
        if ev.emitted is not None:
            proj.append(ObservableEvent(ev.actor, "!", ev.emitted.kind))
        proj.append(StateSnapshot(ev.actor, nxt.peer(ev.actor).state))
        if verdict == "violation":
            product_violation = True
            break
        g = nxt
    separate = any(run_claim(checker, p).verdict != "advance" for p in projections.values())
    assert product_violation == separate
