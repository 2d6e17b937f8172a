"""Abstract UTXO ledger and the commitment bookkeeping that turns a protocol
trace into on-chain outcomes.

Cryptography is replaced by opaque string tokens: ``sig:A`` is A's signature,
``pre:A0`` the preimage of HTLC 0 offered by A, ``rev:C2_A`` the revocation
secret of commitment ``C2_A``. A spending argument satisfies a condition when
the right tokens are present, so possession is the whole security model.

Commitment naming follows the signer: ``C2_A`` is the pre-payment commitment
signed by A and therefore held by B; the k-th new commitment A signs during
the run is ``C{k}'_A``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Optional, Sequence, Union

from .config import ModelConfig
from .explorer import Event, ProtocolModel, ReplayError, Trace, replay
from .protocol import Deliver, FsmState, InitiateAdd, InitiateFulfill, MessageType, Outcome, Role, Validity


class SettlementError(Exception):
    pass


class DoubleSpend(SettlementError):
    pass


class Immature(SettlementError):
    pass


class ConditionUnsatisfied(SettlementError):
    pass


class UnknownOutput(SettlementError):
    pass


class MalformedTrace(SettlementError):
    pass


class ScenarioInapplicable(SettlementError):
    pass


# -- conditions ---------------------------------------------------------------------


def sig(role: Role) -> str:
    return f"sig:{Role(role).value}"


def preimage(offerer: Role, htlc_id: int) -> str:
    return f"pre:{Role(offerer).value}{htlc_id}"


def revocation(label: str) -> str:
    return f"rev:{label}"


@dataclass(frozen=True)
class TwoOfTwo:
    """The funding output: both signatures."""

    def unmet(self, args: frozenset, age: int, height: int) -> Optional[str]:
        missing = {sig(Role.A), sig(Role.B)} - args
        return f"missing {sorted(missing)}" if missing else None


@dataclass(frozen=True)
class ToSelfDelayed:
    owner: Role
    csv_delay: int
    revocation_token: Optional[str] = None

    def __post_init__(self):
        if self.csv_delay < 1:
            raise ValueError("csv_delay must be positive")

    def unmet(self, args, age, height):
        if self.revocation_token and {self.revocation_token, sig(self.owner.other)} <= args:
            return None
        if sig(self.owner) not in args:
            return f"needs {sig(self.owner)} or the revocation secret"
        if age < self.csv_delay:
            return f"csv delay not elapsed ({age} < {self.csv_delay})"
        return None


@dataclass(frozen=True)
class Htlc:
    """An HTLC output on a commitment held by ``holder``.

    The receiver claims with the preimage, the offerer after the absolute
    ``cltv_expiry``; whichever of them is the holder must also wait
    ``holder_csv`` blocks after the commitment confirms. The non-holder takes
    everything at once with the revocation secret.
    """

    offerer: Role
    receiver: Role
    preimage_token: str
    cltv_expiry: int
    holder: Role
    holder_csv: int
    revocation_token: Optional[str] = None

    def unmet(self, args, age, height):
        if self.revocation_token and {self.revocation_token, sig(self.holder.other)} <= args:
            return None
        reasons = []
        for who, ok in (
            (self.receiver, self.preimage_token in args),
            (self.offerer, height >= self.cltv_expiry),
        ):
            if sig(who) not in args:
                continue
            if not ok:
                reasons.append("missing preimage" if who is self.receiver else f"cltv {self.cltv_expiry} not reached")
            elif who is self.holder and age < self.holder_csv:
                reasons.append(f"csv delay not elapsed ({age} < {self.holder_csv})")
            else:
                return None
        return "; ".join(reasons) or "no spending path matches"


@dataclass(frozen=True)
class Simple:
    owner: Role

    def unmet(self, args, age, height):
        return None if sig(self.owner) in args else f"needs {sig(self.owner)}"


SpendCondition = Union[TwoOfTwo, ToSelfDelayed, Htlc, Simple]


# -- transactions and ledger ----------------------------------------------------------


class OutRef(NamedTuple):
    txid: str
    index: int

    def __str__(self) -> str:
        return f"{self.txid}:{self.index}"


@dataclass(frozen=True)
class Output:
    amount: int
    condition: SpendCondition

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("output amount must be positive")


@dataclass(frozen=True)
class TxInput:
    ref: OutRef
    args: frozenset = frozenset()


@dataclass(frozen=True)
class Tx:
    txid: str
    inputs: tuple[TxInput, ...]
    outputs: tuple[Output, ...]
    maturity: int = 0

    def out(self, index: int) -> OutRef:
        return OutRef(self.txid, index)


class Utxo(NamedTuple):
    output: Output
    height: int  # confirmation height, for relative delays


FUNDING_TXID = "funding"
FUNDING_REF = OutRef(FUNDING_TXID, 0)


@dataclass(frozen=True)
class Ledger:
    height: int = 0
    utxos: Mapping[OutRef, Utxo] = field(default_factory=dict)
    spent: frozenset = frozenset()
    confirmed: tuple[Tx, ...] = ()

    @classmethod
    def with_funding(cls, amount: int) -> "Ledger":
        fund = Tx(FUNDING_TXID, (), (Output(amount, TwoOfTwo()),))
        return cls(0, {FUNDING_REF: Utxo(fund.outputs[0], 0)}, frozenset(), (fund,))

    @property
    def total_value(self) -> int:
        return sum(u.output.amount for u in self.utxos.values())

    def balance(self, role: Role) -> int:
        """Value whose only remaining claimant is ``role``."""
        return sum(u.output.amount for u in self.utxos.values() if _owner(u.output.condition) is role)

    def is_confirmed(self, txid: str) -> bool:
        return any(tx.txid == txid for tx in self.confirmed)


def _owner(cond: SpendCondition) -> Optional[Role]:
    if isinstance(cond, (Simple, ToSelfDelayed)):
        return cond.owner
    return None


def mine_blocks(ledger: Ledger, n: int) -> Ledger:
    if n < 0:
        raise ValueError("cannot mine a negative number of blocks")
    return replace(ledger, height=ledger.height + n)


def confirm(ledger: Ledger, tx: Tx) -> Ledger:
    """Include ``tx`` in a block at the ledger's current height."""
    if ledger.height < tx.maturity:
        raise Immature(f"{tx.txid} matures at {tx.maturity}, height is {ledger.height}")
    if ledger.is_confirmed(tx.txid):
        raise DoubleSpend(f"{tx.txid} is already confirmed")
    value_in = 0
    seen = set()
    for txin in tx.inputs:
        if txin.ref in ledger.spent or txin.ref in seen:
            raise DoubleSpend(f"{tx.txid} spends {txin.ref}, which is already spent")
        seen.add(txin.ref)
        utxo = ledger.utxos.get(txin.ref)
        if utxo is None:
            raise UnknownOutput(f"{tx.txid} spends unknown output {txin.ref}")
        why = utxo.output.condition.unmet(frozenset(txin.args), ledger.height - utxo.height, ledger.height)
        if why:
            raise ConditionUnsatisfied(f"{tx.txid} input {txin.ref}: {why}")
        value_in += utxo.output.amount
    value_out = sum(o.amount for o in tx.outputs)
    if tx.inputs and value_out != value_in:
        raise ConditionUnsatisfied(f"{tx.txid} moves {value_in} in but {value_out} out")
    utxos = {r: u for r, u in ledger.utxos.items() if r not in seen}
    for i, o in enumerate(tx.outputs):
        utxos[tx.out(i)] = Utxo(o, ledger.height)
    return Ledger(ledger.height, utxos, ledger.spent | seen, ledger.confirmed + (tx,))


def broadcast(ledger: Ledger, tx: Tx) -> Ledger:
    """Submit ``tx`` and mine the block that includes it."""
    return confirm(mine_blocks(ledger, 1), tx)


# -- commitments --------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelParams:
    funding: int = 1_000_000
    balance_a: int = 600_000
    htlc_amount: int = 10_000
    csv_delay: int = 1081
    cltv_expiry: int = 40

    @classmethod
    def from_config(cls, config: ModelConfig, **kw) -> "ChannelParams":
        return cls(csv_delay=config.csv_delay, cltv_expiry=config.cltv_expiry, **kw)

    @property
    def opening(self) -> dict[Role, int]:
        return {Role.A: self.balance_a, Role.B: self.funding - self.balance_a}


class HtlcKey(NamedTuple):
    offerer: Role
    htlc_id: int


@dataclass(frozen=True)
class ChannelView:
    """One party's idea of the channel: settled balances plus pending HTLCs."""

    balances: tuple[int, int]
    pending: tuple[HtlcKey, ...] = ()

    def settle(self, key: HtlcKey, amount: int) -> "ChannelView":
        if key not in self.pending:
            return self
        a, b = self.balances
        delta = amount if key.offerer is Role.A else -amount
        return ChannelView((a - delta, b + delta), tuple(k for k in self.pending if k != key))

    def add(self, key: HtlcKey) -> "ChannelView":
        return self if key in self.pending else replace(self, pending=self.pending + (key,))


@dataclass(frozen=True)
class Commitment:
    label: str
    holder: Role
    signer: Role
    view: ChannelView
    outputs: tuple[Output, ...]
    revoked: bool = False
    spends: OutRef = FUNDING_REF

    def tx(self) -> Tx:
        # the holder owns its signature and received the signer's
        return Tx(self.label, (TxInput(self.spends, frozenset({sig(Role.A), sig(Role.B)})),), self.outputs)

    @property
    def htlc_outputs(self) -> list[int]:
        return [i for i, o in enumerate(self.outputs) if isinstance(o.condition, Htlc)]


def build_commitment(label: str, signer: Role, view: ChannelView, params: ChannelParams,
                     revoked: bool = False) -> Commitment:
    holder = signer.other
    rev = revocation(label)
    bal = dict(zip((Role.A, Role.B), view.balances))
    for key in view.pending:
        bal[key.offerer] -= params.htlc_amount
    outs = []
    if bal[holder] > 0:
        outs.append(Output(bal[holder], ToSelfDelayed(holder, params.csv_delay, rev)))
    if bal[holder.other] > 0:
        outs.append(Output(bal[holder.other], Simple(holder.other)))
    for key in view.pending:
        outs.append(Output(params.htlc_amount, Htlc(
            key.offerer, key.offerer.other, preimage(*key), params.cltv_expiry, holder, params.csv_delay, rev,
        )))
    return Commitment(label, holder, signer, view, tuple(outs), revoked)


@dataclass
class ChannelHistory:
    """Commitments and tokens obtained by walking a trace."""

    commitments: list[Commitment]
    tokens: dict[Role, set[str]]
    final_views: dict[Role, ChannelView]

    def get(self, label: str) -> Commitment:
        for c in self.commitments:
            if c.label == label:
                return c
        raise KeyError(label)

    def live(self, holder: Optional[Role] = None) -> list[Commitment]:
        return [c for c in self.commitments if not c.revoked and (holder is None or c.holder is holder)]

    def latest(self, holder: Role) -> Commitment:
        live = self.live(holder)
        if not live:
            raise ScenarioInapplicable(f"{holder.value} holds no unrevoked commitment")
        return live[-1]


def channel_history(trace: Union[Trace, Sequence[Event]], params: Optional[ChannelParams] = None,
                    model: Optional[ProtocolModel] = None) -> ChannelHistory:
    params = params or ChannelParams()
    events = trace.events if isinstance(trace, Trace) else list(trace)
    try:
        replay(events, model or ProtocolModel())
    except ReplayError as exc:
        raise MalformedTrace(str(exc)) from exc

    opening = ChannelView((params.opening[Role.A], params.opening[Role.B]))
    views = {Role.A: opening, Role.B: opening}
    commitments = [
        build_commitment("C2_A", Role.A, opening, params),
        build_commitment("C2_B", Role.B, opening, params),
    ]
    tokens = {r: {sig(r)} for r in Role}
    in_flight: dict[Role, list] = {Role.A: [], Role.B: []}  # COMM snapshots per sender
    signed = {Role.A: 0, Role.B: 0}

    for ev in events:
        me, them = ev.actor, ev.actor.other
        act = ev.action
        if isinstance(act, Deliver):
            m = act.message
            if m.kind is MessageType.COMM:
                valid, snapshot = in_flight[them].pop(0)
                if valid:
                    signed[them] += 1
                    commitments.append(build_commitment(f"C{signed[them]}'_{them.value}", them, snapshot, params))
            elif act.outcome is Outcome.ACCEPT and m.validity is Validity.VALID:
                if m.kind is MessageType.ADD:
                    views[me] = views[me].add(HtlcKey(them, m.htlc_id))
                    tokens[me].add(preimage(them, m.htlc_id))  # the payee knows its preimage
                elif m.kind is MessageType.FULF:
                    tokens[me].add(preimage(me, m.htlc_id))
                    views[me] = views[me].settle(HtlcKey(me, m.htlc_id), params.htlc_amount)
        out = ev.emitted
        if out is None:
            continue
        if out.kind is MessageType.COMM:
            in_flight[me].append((out.validity is Validity.VALID, views[me]))
        elif out.validity is not Validity.VALID:
            continue
        elif out.kind is MessageType.ADD and isinstance(act, InitiateAdd):
            views[me] = views[me].add(HtlcKey(me, out.htlc_id))
        elif out.kind is MessageType.FULF and isinstance(act, InitiateFulfill):
            views[me] = views[me].settle(HtlcKey(them, out.htlc_id), params.htlc_amount)
        elif out.kind is MessageType.REV:
            live = [c for c in commitments if c.holder is me and not c.revoked]
            for c in live[:-1]:
                commitments[commitments.index(c)] = replace(c, revoked=True)
                tokens[them].add(revocation(c.label))
    return ChannelHistory(commitments, tokens, views)


def derive_commitments(trace: Union[Trace, Sequence[Event]], params: Optional[ChannelParams] = None) -> tuple[Commitment, ...]:
    """Every commitment a party came to hold along ``trace``, in creation order."""
    return tuple(channel_history(trace, params).commitments)


# -- settlement scripts -----------------------------------------------------------------


class Scenario(str, enum.Enum):
    OUTCOME1 = "outcome1"
    OUTCOME2 = "outcome2"
    HONEST_COMPLETE = "honest_complete"
    HONEST_ABORT = "honest_abort"


class TimelineStep(NamedTuple):
    step: int
    description: str
    height: int


@dataclass
class PayoutSummary:
    scenario: Scenario
    balances: dict[Role, int]
    confirmed_commitment: str
    rejected: list[tuple[str, str]]
    timeline: list[TimelineStep]
    ledger: Ledger
    funding: int

    @property
    def total_blocks(self) -> int:
        return self.ledger.height

    @property
    def commitments_confirmed(self) -> list[str]:
        return [tx.txid for tx in self.ledger.confirmed
                if any(i.ref == FUNDING_REF for i in tx.inputs)]

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "balances": {r.value: v for r, v in self.balances.items()},
            "confirmed_commitment": self.confirmed_commitment,
            "rejected": [list(r) for r in self.rejected],
            "timeline": [s._asdict() for s in self.timeline],
            "total_blocks": self.total_blocks,
        }


class _Script:
    """Imperative helper that drives a ledger and writes a numbered timeline."""

    def __init__(self, params: ChannelParams):
        self.params = params
        self.ledger = Ledger.with_funding(params.funding)
        self.timeline: list[TimelineStep] = []
        self.rejected: list[tuple[str, str]] = []

    def note(self, text: str) -> None:
        self.timeline.append(TimelineStep(len(self.timeline) + 1, text, self.ledger.height))

    def mine(self, n: int, why: str) -> None:
        self.ledger = mine_blocks(self.ledger, n)
        self.note(f"mine {n} block{'s' if n != 1 else ''} ({why})")

    def include(self, tx: Tx, what: str) -> None:
        self.ledger = confirm(self.ledger, tx)
        self.note(f"{what} confirmed")

    def attempt(self, tx: Tx, who: Role) -> None:
        try:
            self.ledger = confirm(self.ledger, tx)
        except SettlementError as exc:
            self.rejected.append((tx.txid, type(exc).__name__))
            self.note(f"{who.value} tries to publish {tx.txid}: rejected ({type(exc).__name__})")
        else:  # pragma: no cover - scenarios only attempt conflicting closes
            self.note(f"{who.value} publishes {tx.txid}")

    def wait_until_spendable(self, tx: Tx, why: str) -> None:
        """Mine the fewest blocks after which ``tx`` confirms."""
        need = 0
        for txin in tx.inputs:
            utxo = self.ledger.utxos[txin.ref]
            age = self.ledger.height - utxo.height
            need = max(need, _blocks_needed(utxo.output.condition, txin.args, age, self.ledger.height))
        if need > 0:
            self.mine(need, why)


def _blocks_needed(cond: SpendCondition, args: frozenset, age: int, height: int) -> int:
    if isinstance(cond, ToSelfDelayed):
        return cond.csv_delay - age if sig(cond.owner) in args else 0
    if isinstance(cond, Htlc):
        by_receiver = cond.preimage_token in args and sig(cond.receiver) in args
        spender = cond.receiver if by_receiver else cond.offerer
        need = 0 if by_receiver else cond.cltv_expiry - height
        if spender is cond.holder:
            need = max(need, cond.holder_csv - age)
        return need
    return 0


def _sweep_to(owner: Role, refs: Sequence[OutRef], ledger: Ledger, txid: str, args: frozenset) -> Tx:
    amount = sum(ledger.utxos[r].output.amount for r in refs)
    return Tx(txid, tuple(TxInput(r, args) for r in refs), (Output(amount, Simple(owner)),))


def _force_close(s: _Script, c: Commitment, tokens: dict[Role, set[str]], use_preimages: bool = True) -> None:
    """Publish ``c`` and walk every output to a plain wallet output.

    The holder's delayed output waits ``csv_delay``; each HTLC goes to its
    receiver when the receiver has the preimage and ``use_preimages`` is set,
    otherwise back to the offerer after expiry. Holder-side HTLC claims pass through a second
    delayed stage.
    """
    holder = c.holder
    s.note(f"{holder.value} submits force close {c.label}")
    s.mine(1, f"{c.label} included")
    s.include(c.tx(), c.label)
    later: list[OutRef] = []
    for i, out in enumerate(c.outputs):
        ref = OutRef(c.label, i)
        cond = out.condition
        if isinstance(cond, ToSelfDelayed):
            later.append(ref)
        elif isinstance(cond, Htlc):
            winner = cond.receiver if use_preimages and cond.preimage_token in tokens[cond.receiver] else cond.offerer
            args = frozenset(tokens[winner])
            if winner is cond.offerer:
                args -= {cond.preimage_token}
            if winner is holder:
                stage = Tx(f"htlc-{'success' if winner is cond.receiver else 'timeout'}-{c.label}-{i}", (TxInput(ref, args),),
                           (Output(out.amount, ToSelfDelayed(holder, s.params.csv_delay)),))
                s.wait_until_spendable(stage, "commitment output maturity")
                s.note(f"{holder.value} submits {stage.txid}")
                s.mine(1, f"{stage.txid} included")
                s.include(stage, stage.txid)
                later.append(stage.out(0))
            else:
                claim = _sweep_to(winner, [ref], s.ledger, f"htlc-claim-{c.label}-{i}", args)
                s.wait_until_spendable(claim, "htlc expiry")
                s.include(claim, claim.txid)
    if later:
        sweep = _sweep_to(holder, later, s.ledger, f"sweep-{c.label}", frozenset(tokens[holder]))
        s.wait_until_spendable(sweep, "second stage maturity")
        s.note(f"{holder.value} submits {sweep.txid}")
        s.mine(1, f"{sweep.txid} included")
        s.include(sweep, sweep.txid)


def penalty_tx(c: Commitment, ledger: Ledger, tokens: Mapping[Role, set[str]]) -> Tx:
    """The counterparty's claim on every output of a confirmed revoked commitment."""
    claimant = c.holder.other
    if revocation(c.label) not in tokens[claimant]:
        raise ConditionUnsatisfied(f"{claimant.value} lacks the revocation secret of {c.label}")
    refs = [OutRef(c.label, i) for i in range(len(c.outputs)) if OutRef(c.label, i) in ledger.utxos]
    return _sweep_to(claimant, refs, ledger, f"penalty-{c.label}", frozenset(tokens[claimant]))


def _summary(s: _Script, scenario: Scenario, closed: str) -> PayoutSummary:
    return PayoutSummary(
        scenario,
        {r: s.ledger.balance(r) for r in Role},
        closed,
        s.rejected,
        s.timeline,
        s.ledger,
        s.params.funding,
    )


def resolve_outcome(trace: Union[Trace, Sequence[Event]], scenario: Union[Scenario, str],
                    params: Optional[ChannelParams] = None) -> PayoutSummary:
    """Settle the channel on-chain after ``trace`` the way ``scenario`` prescribes."""
    scenario = Scenario(scenario)
    params = params or ChannelParams()
    hist = channel_history(trace, params)
    s = _Script(params)
    events = trace.events if isinstance(trace, Trace) else list(trace)
    final = replay(events).final

    if scenario in (Scenario.OUTCOME1, Scenario.OUTCOME2):
        try:
            stale, fresh = hist.get("C2_B"), hist.get("C1'_A")
        except KeyError as exc:
            raise ScenarioInapplicable(f"trace lacks commitment {exc}") from None
        if stale.revoked or fresh.revoked or fresh.holder is not Role.B:
            raise ScenarioInapplicable("the race needs C2_B and C1'_A both unrevoked")
        if scenario is Scenario.OUTCOME1:
            # A closes on the pre-payment state before B can publish
            _force_close(s, stale, hist.tokens)
            s.attempt(fresh.tx(), Role.B)
            return _summary(s, scenario, stale.label)
        _force_close(s, fresh, hist.tokens)
        s.attempt(stale.tx(), Role.A)
        return _summary(s, scenario, fresh.label)

    if scenario is Scenario.HONEST_COMPLETE:
        if not (final.peer_a.state is final.peer_b.state is FsmState.FUNDED) or not any(
            c.label != "C2_A" and c.label != "C2_B" for c in hist.commitments
        ):
            raise ScenarioInapplicable("the payment did not complete")
        c = hist.latest(Role.A)
        _force_close(s, c, hist.tokens)
        return _summary(s, scenario, c.label)

    # honest abort: A closes with its newest unrevoked commitment and every
    # pending HTLC returns to its offerer
    c = hist.latest(Role.A)
    _force_close(s, c, hist.tokens, use_preimages=False)
    return _summary(s, scenario, c.label)
