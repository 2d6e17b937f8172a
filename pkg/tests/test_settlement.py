import pytest
from hypothesis import given, settings, strategies as st

from lnverify.config import ModelConfig
from lnverify.explorer import ProtocolModel, Trace
from lnverify.protocol import Role
from lnverify.scenarios import abort_trace, congestion_trace, honest_trace, payout_race_trace, run_scenario, SCENARIOS
from lnverify.settlement import (
    FUNDING_REF,
    ChannelParams,
    ConditionUnsatisfied,
    DoubleSpend,
    Htlc,
    Immature,
    Ledger,
    MalformedTrace,
    Output,
    OutRef,
    ScenarioInapplicable,
    Simple,
    ToSelfDelayed,
    Tx,
    TxInput,
    UnknownOutput,
    broadcast,
    channel_history,
    confirm,
    derive_commitments,
    mine_blocks,
    penalty_tx,
    resolve_outcome,
    sig,
)

A, B = Role.A, Role.B
FUND = 1_000_000


@pytest.fixture(scope="module")
def race():
    return payout_race_trace()


def labels(commitments):
    return {c.label: (c.holder, c.revoked) for c in commitments}


def test_race_commitments(race):
    cs = derive_commitments(race)
    assert labels(cs) == {"C2_A": (B, False), "C2_B": (A, False), "C1'_A": (B, False)}
    fresh = next(c for c in cs if c.label == "C1'_A")
    assert len(fresh.htlc_outputs) == 1
    # B ends up with two spendable commitments, A with one
    assert sum(c.holder is B for c in cs) == 2 and sum(c.holder is A for c in cs) == 1


def test_empty_trace_commitments():
    g = ProtocolModel().initial()
    assert labels(derive_commitments(Trace([g]))) == {"C2_A": (B, False), "C2_B": (A, False)}


def test_completed_payment_leaves_one_live_commitment_each():
    hist = channel_history(honest_trace(), ChannelParams())
    live = hist.live()
    assert sorted(c.holder.value for c in live) == ["A", "B"]
    assert hist.final_views[A] == hist.final_views[B]
    assert hist.final_views[A].balances == (590_000, 410_000) and not hist.final_views[A].pending


def test_malformed_trace(race):
    with pytest.raises(MalformedTrace):
        derive_commitments(list(reversed(race.events)))


def test_race_window_and_mutual_exclusion(race):
    hist = channel_history(race)
    ledger = mine_blocks(Ledger.with_funding(FUND), 1)
    stale, fresh = hist.get("C2_B").tx(), hist.get("C1'_A").tx()
    # each is individually legal at the same height
    confirm(ledger, stale)
    confirm(ledger, fresh)
    with pytest.raises(DoubleSpend):
        confirm(confirm(ledger, stale), fresh)
    with pytest.raises(DoubleSpend):
        confirm(confirm(ledger, fresh), stale)


def test_unknown_output_and_immature():
    ledger = Ledger.with_funding(FUND)
    bogus = Tx("x", (TxInput(OutRef("nope", 0), frozenset({sig(A)})),), (Output(1, Simple(A)),))
    with pytest.raises(UnknownOutput):
        confirm(ledger, bogus)
    with pytest.raises(Immature):
        confirm(ledger, Tx("later", (), (), maturity=5))


def test_funding_needs_both_signatures():
    tx = Tx("steal", (TxInput(FUNDING_REF, frozenset({sig(A)})),), (Output(FUND, Simple(A)),))
    with pytest.raises(ConditionUnsatisfied):
        confirm(Ledger.with_funding(FUND), tx)


def test_value_is_conserved_per_tx():
    tx = Tx("inflate", (TxInput(FUNDING_REF, frozenset({sig(A), sig(B)})),), (Output(FUND + 1, Simple(A)),))
    with pytest.raises(ConditionUnsatisfied):
        confirm(Ledger.with_funding(FUND), tx)


def test_mine_blocks():
    assert mine_blocks(Ledger(), 1081).height == 1081
    assert mine_blocks(Ledger(height=7), 0).height == 7
    with pytest.raises(ValueError):
        mine_blocks(Ledger(), -1)


def _delayed_ledger(csv):
    out = Output(FUND, ToSelfDelayed(A, csv, "rev:X"))
    fund = Tx("close", (TxInput(FUNDING_REF, frozenset({sig(A), sig(B)})),), (out,))
    return broadcast(Ledger.with_funding(FUND), fund)


@pytest.mark.parametrize("csv", [144, 1081])
def test_to_self_delay(csv):
    ledger = _delayed_ledger(csv)
    sweep = Tx("sweep", (TxInput(OutRef("close", 0), frozenset({sig(A)})),), (Output(FUND, Simple(A)),))
    with pytest.raises(ConditionUnsatisfied):
        confirm(mine_blocks(ledger, csv - 1), sweep)
    assert confirm(mine_blocks(ledger, csv), sweep).balance(A) == FUND


def test_revocation_path_is_immediate_for_counterparty():
    ledger = _delayed_ledger(1081)
    grab = Tx("grab", (TxInput(OutRef("close", 0), frozenset({sig(B), "rev:X"})),), (Output(FUND, Simple(B)),))
    assert confirm(ledger, grab).balance(B) == FUND


def test_htlc_paths():
    cond = Htlc(A, B, "pre:A0", cltv_expiry=40, holder=A, holder_csv=10)
    assert cond.unmet(frozenset({sig(B), "pre:A0"}), 0, 0) is None  # receiver, not holder
    assert "preimage" in cond.unmet(frozenset({sig(B)}), 0, 0)
    assert "cltv" in cond.unmet(frozenset({sig(A)}), 50, 39)
    assert "csv" in cond.unmet(frozenset({sig(A)}), 5, 40)
    assert cond.unmet(frozenset({sig(A)}), 10, 40) is None


def test_penalty_takes_everything():
    hist = channel_history(honest_trace())
    revoked = [c for c in hist.commitments if c.revoked and c.holder is A]
    assert revoked
    for c in revoked:
        ledger = broadcast(Ledger.with_funding(FUND), c.tx())
        ledger = confirm(ledger, penalty_tx(c, ledger, hist.tokens))
        assert ledger.balance(B) == FUND and ledger.balance(A) == 0


def test_penalty_needs_the_secret(race):
    hist = channel_history(race)
    c = hist.get("C2_B")
    ledger = broadcast(Ledger.with_funding(FUND), c.tx())
    with pytest.raises(ConditionUnsatisfied):
        penalty_tx(c, ledger, hist.tokens)


def test_outcome1(race):
    p = resolve_outcome(race, "outcome1")
    assert p.balances == {A: 600_000, B: 400_000}
    assert p.rejected == [("C1'_A", "DoubleSpend")]
    assert p.commitments_confirmed == ["C2_B"]


def cashout_blocks_oracle(csv):
    # close included, closure maturity, success tx included, its maturity, final sweep included
    return sum([1, csv, 1, csv, 1])


@pytest.mark.parametrize("csv", [144, 1081])
def test_outcome2(race, csv):
    p = resolve_outcome(race, "outcome2", ChannelParams(csv_delay=csv))
    assert p.balances == {A: 590_000, B: 410_000}
    assert p.rejected == [("C2_B", "DoubleSpend")]
    assert p.total_blocks == cashout_blocks_oracle(csv) == 2 * csv + 3
    mined = [s for s in p.timeline if s.description.startswith("mine")]
    assert [int(s.description.split()[1]) for s in mined] == [1, csv, 1, csv, 1]


def test_outcome2_regression_total(race):
    assert resolve_outcome(race, "outcome2").total_blocks == 2165


def test_outcome2_sweep_not_early(race):
    hist = channel_history(race)
    p = resolve_outcome(race, "outcome2")
    final = p.ledger.confirmed[-1]
    before = p.ledger.confirmed[:-1]
    # rebuild the ledger one block short of the sweep
    ledger = Ledger.with_funding(FUND)
    ledger = mine_blocks(ledger, 1)
    ledger = confirm(ledger, hist.get("C1'_A").tx())
    ledger = mine_blocks(ledger, 1082)
    ledger = confirm(ledger, before[-1])
    ledger = mine_blocks(ledger, 1080)
    with pytest.raises(ConditionUnsatisfied):
        confirm(ledger, final)
    assert confirm(mine_blocks(ledger, 1), final).balance(B) == 410_000


def test_honest_outcomes():
    done = resolve_outcome(honest_trace(), "honest_complete")
    assert done.balances == {A: 590_000, B: 410_000}
    aborted = resolve_outcome(abort_trace(), "honest_abort")
    assert aborted.balances == {A: 600_000, B: 400_000}


def test_inapplicable_scenarios(race):
    with pytest.raises(ScenarioInapplicable):
        resolve_outcome(honest_trace(), "outcome1")
    with pytest.raises(ScenarioInapplicable):
        resolve_outcome(race, "honest_complete")


@pytest.mark.parametrize("name", SCENARIOS)
def test_conservation_and_exclusion(name):
    p = run_scenario(name).payout
    assert p.ledger.total_value == FUND
    assert sum(p.balances.values()) == FUND
    assert len(p.commitments_confirmed) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(144, 3000), st.integers(1, 200), st.integers(1, 10))
def test_conservation_over_parameters(csv, cltv, max_htlcs):
    cfg = ModelConfig(max_htlcs=max_htlcs, csv_delay=csv, cltv_expiry=cltv)
    params = ChannelParams.from_config(cfg)
    traces = [(payout_race_trace(cfg), "outcome1"), (payout_race_trace(cfg), "outcome2"),
              (honest_trace(), "honest_complete"), (abort_trace(), "honest_abort"),
              (congestion_trace(ProtocolModel(cfg)), "honest_abort")]
    for trace, scenario in traces:
        p = resolve_outcome(trace, scenario, params)
        assert p.ledger.total_value == sum(p.balances.values()) == params.funding
        assert len(p.commitments_confirmed) == 1
