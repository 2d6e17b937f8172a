"""Peer-local state machine for the channel-operation payment flow.

A payment batch runs in two rounds. In the first round one or more HTLCs are
added, then each side sends a commitment and revokes the previous one. After
every HTLC is fulfilled, a second commitment/revocation pair settles the new
balance and both peers return to ``FUNDED``.

Every action is atomic: consume or decide, update state, emit at most one
message. All nondeterminism (message validity, whether to notify on failure,
when to time out) is spelled out as distinct actions by ``enabled_actions``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Union

DEFAULT_MAX_HTLCS = 10
PROTOCOL_MAX_HTLCS = 483


class IllegalAction(Exception):
    """Raised when ``apply`` is given an action the FSM does not enable."""


class Role(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Role":
        return Role.B if self is Role.A else Role.A


class FsmState(enum.IntEnum):
    FUNDED = 0
    MORE_HTLCS_WAIT = 1
    WAIT_REVOCATION = 2
    WAIT_COMMITMENT_SIG = 3
    WAIT_FULFILLMENT = 4
    WAIT_REVOCATION_2 = 5
    WAIT_COMMITMENT_SIG_2 = 6
    FAIL_CHANNEL = 7


END_STATES = frozenset({FsmState.FUNDED, FsmState.FAIL_CHANNEL})
PROGRESS_STATES = frozenset({FsmState.FUNDED})
WAIT_STATES = frozenset(set(FsmState) - END_STATES)


def is_end_state(s: FsmState) -> bool:
    return s in END_STATES


def is_progress_state(s: FsmState) -> bool:
    return s in PROGRESS_STATES


class MessageType(enum.IntEnum):
    ADD = 0
    COMM = 1
    REV = 2
    FULF = 3
    ERR = 4
    FAIL = 5
    FAILM = 6


ERROR_KINDS = frozenset({MessageType.ERR, MessageType.FAIL, MessageType.FAILM})


class Validity(enum.IntEnum):
    VALID = 0
    INVALID_SEMANTIC = 1
    INVALID_MALFORMED = 2


# Three-way choice only for ADD (malformed triggers FAILM); two-way otherwise.
ADD_VALIDITIES = (Validity.VALID, Validity.INVALID_SEMANTIC, Validity.INVALID_MALFORMED)
VALIDITIES = (Validity.VALID, Validity.INVALID_SEMANTIC)


class Message(NamedTuple):
    kind: MessageType
    validity: Validity = Validity.VALID
    htlc_id: int = 0

    def __str__(self) -> str:
        text = self.kind.name
        if self.kind in (MessageType.ADD, MessageType.FULF):
            text += f"#{self.htlc_id}"
        if self.validity is not Validity.VALID:
            text += f"({self.validity.name.lower()})"
        return text


class PeerMachine(NamedTuple):
    """One peer's protocol state.

    ``acked`` is bookkeeping for the first round: the peer has already
    acknowledged (revoked against) the counterparty's commitment, so it owes
    its own commitment rather than waiting for one.
    """

    role: Role
    state: FsmState = FsmState.FUNDED
    local_htlcs: int = 0
    remote_htlcs: int = 0
    acked: bool = False

    @property
    def armed_timer(self) -> Optional[str]:
        if self.state in WAIT_STATES:
            return f"{self.state.name}_T"
        return None

    @property
    def open_htlcs(self) -> int:
        return self.local_htlcs + self.remote_htlcs

    @property
    def is_end_state(self) -> bool:
        return is_end_state(self.state)

    def __str__(self) -> str:
        flag = "*" if self.acked else ""
        return f"{self.state.name}{flag}(l={self.local_htlcs},r={self.remote_htlcs})"


def initial_peer(role: Union[Role, str]) -> PeerMachine:
    return PeerMachine(role=Role(role))


# -- actions -----------------------------------------------------------------


class Outcome(str, enum.Enum):
    """How a peer reacts to a delivered message."""

    ACCEPT = "accept"
    FAIL_NOTIFY = "fail_notify"
    FAIL_SILENT = "fail_silent"


@dataclass(frozen=True)
class Deliver:
    message: Message
    outcome: Outcome = Outcome.ACCEPT
    reply_validity: Validity = Validity.VALID

    def __str__(self) -> str:
        text = f"?{self.message}"
        if self.outcome is not Outcome.ACCEPT:
            text += f" [{self.outcome.value}]"
        return text


@dataclass(frozen=True)
class Timeout:
    notify: bool = False

    def __str__(self) -> str:
        return "timeout" + (" [notify]" if self.notify else "")


@dataclass(frozen=True)
class InitiateError:
    notify: bool = True

    def __str__(self) -> str:
        return "error" + (" [notify]" if self.notify else " [silent]")


@dataclass(frozen=True)
class InitiateAdd:
    validity: Validity = Validity.VALID

    def __str__(self) -> str:
        return "initiate_add" + _validity_suffix(self.validity)


@dataclass(frozen=True)
class InitiateCommit:
    validity: Validity = Validity.VALID

    def __str__(self) -> str:
        return "initiate_commit" + _validity_suffix(self.validity)


@dataclass(frozen=True)
class InitiateFulfill:
    validity: Validity = Validity.VALID

    def __str__(self) -> str:
        return "initiate_fulfill" + _validity_suffix(self.validity)


Action = Union[Deliver, Timeout, InitiateError, InitiateAdd, InitiateCommit, InitiateFulfill]


def _validity_suffix(v: Validity) -> str:
    return "" if v is Validity.VALID else f"({v.name.lower()})"


# -- static transition table ---------------------------------------------------

S = FsmState
FAIL = "fail"

# (source, trigger, target). The trigger is the message kind whose send or
# receipt drives the edge; "fail" covers timeouts, errors and rejected input.
TRANSITIONS: tuple[tuple[FsmState, str, FsmState], ...] = (
    (S.FUNDED, "ADD", S.MORE_HTLCS_WAIT),
    (S.MORE_HTLCS_WAIT, "ADD", S.MORE_HTLCS_WAIT),
    (S.MORE_HTLCS_WAIT, "COMM", S.WAIT_REVOCATION),
    (S.MORE_HTLCS_WAIT, "COMM", S.MORE_HTLCS_WAIT),
    (S.WAIT_REVOCATION, "REV", S.WAIT_COMMITMENT_SIG),
    (S.WAIT_REVOCATION, "REV", S.WAIT_FULFILLMENT),
    (S.WAIT_COMMITMENT_SIG, "COMM", S.WAIT_FULFILLMENT),
    (S.WAIT_FULFILLMENT, "FULF", S.WAIT_FULFILLMENT),
    (S.WAIT_FULFILLMENT, "FULF", S.WAIT_COMMITMENT_SIG_2),
    (S.WAIT_FULFILLMENT, "COMM", S.WAIT_REVOCATION_2),
    (S.WAIT_REVOCATION_2, "REV", S.FUNDED),
    (S.WAIT_COMMITMENT_SIG_2, "COMM", S.FUNDED),
) + tuple((s, FAIL, S.FAIL_CHANNEL) for s in FsmState if s is not S.FAIL_CHANNEL)


def transition_class(before: PeerMachine, action: Action, after: PeerMachine) -> tuple[FsmState, str, FsmState]:
    """Map a concrete step onto its row of ``TRANSITIONS``."""
    if after.state is S.FAIL_CHANNEL:
        trigger = FAIL
    elif isinstance(action, Deliver):
        trigger = action.message.kind.name
    elif isinstance(action, InitiateAdd):
        trigger = "ADD"
    elif isinstance(action, InitiateCommit):
        trigger = "COMM"
    elif isinstance(action, InitiateFulfill):
        trigger = "FULF"
    else:
        raise ValueError(f"{action} cannot move a peer outside FAIL_CHANNEL")
    return (before.state, trigger, after.state)


# -- enabledness and effects ---------------------------------------------------


def _expected(peer: PeerMachine, m: Message, max_htlcs: int) -> bool:
    """Whether a valid message of this kind is part of the honest flow here."""
    st, kind = peer.state, m.kind
    if kind is MessageType.ADD:
        return (
            st in (S.FUNDED, S.MORE_HTLCS_WAIT)
            and not peer.acked
            and peer.open_htlcs < max_htlcs
        )
    if kind is MessageType.COMM:
        return (
            (st is S.MORE_HTLCS_WAIT and not peer.acked)
            or st is S.WAIT_COMMITMENT_SIG
            or st is S.WAIT_COMMITMENT_SIG_2
        )
    if kind is MessageType.REV:
        return st in (S.WAIT_REVOCATION, S.WAIT_REVOCATION_2)
    if kind is MessageType.FULF:
        return st is S.WAIT_FULFILLMENT and peer.local_htlcs > 0 and m.htlc_id == peer.local_htlcs - 1
    return False


def _accept_replies(kind: MessageType) -> bool:
    return kind is MessageType.COMM


def enabled_actions(
    peer: PeerMachine,
    inbox_head: Optional[Message],
    outbox_has_room: bool,
    max_htlcs: int = DEFAULT_MAX_HTLCS,
) -> list[Action]:
    """Every action the FSM defines for ``peer`` in the given context.

    The list order is deterministic; the explorer relies on it for
    reproducible counterexamples.
    """
    return list(_enabled(peer, inbox_head, outbox_has_room, max_htlcs))


@lru_cache(maxsize=None)
def _enabled(
    peer: PeerMachine,
    inbox_head: Optional[Message],
    room: bool,
    max_htlcs: int,
) -> tuple[Action, ...]:
    st = peer.state
    if st is S.FAIL_CHANNEL:
        return ()
    waiting = st in WAIT_STATES
    out: list[Action] = []

    if inbox_head is not None:
        m = inbox_head
        acceptable = m.validity is Validity.VALID and _expected(peer, m, max_htlcs)
        if acceptable:
            if _accept_replies(m.kind):
                if room:
                    out.extend(Deliver(m, Outcome.ACCEPT, v) for v in VALIDITIES)
            else:
                out.append(Deliver(m))
        # Rejection is forced for bad input and optional (MAY fail) for good
        # input while a payment is in flight. Error messages are never answered.
        if not acceptable or waiting:
            if room and m.kind not in ERROR_KINDS:
                out.append(Deliver(m, Outcome.FAIL_NOTIFY))
            out.append(Deliver(m, Outcome.FAIL_SILENT))

    if room:
        if st in (S.FUNDED, S.MORE_HTLCS_WAIT) and not peer.acked and peer.open_htlcs < max_htlcs:
            out.extend(InitiateAdd(v) for v in ADD_VALIDITIES)
        if st is S.MORE_HTLCS_WAIT or (st is S.WAIT_FULFILLMENT and peer.open_htlcs == 0):
            out.extend(InitiateCommit(v) for v in VALIDITIES)
        if st is S.WAIT_FULFILLMENT and peer.remote_htlcs > 0:
            out.extend(InitiateFulfill(v) for v in VALIDITIES)

    if waiting:
        if room:
            out.append(Timeout(notify=True))
        out.append(Timeout(notify=False))
        if room:
            out.append(InitiateError(notify=True))
        out.append(InitiateError(notify=False))
    return tuple(out)


def _fail(peer: PeerMachine, notice: Optional[Message]) -> tuple[PeerMachine, Optional[Message]]:
    return peer._replace(state=S.FAIL_CHANNEL, acked=False), notice


_ERR = Message(MessageType.ERR)


def apply(
    peer: PeerMachine,
    action: Action,
    max_htlcs: int = DEFAULT_MAX_HTLCS,
) -> tuple[PeerMachine, Optional[Message]]:
    """Fire ``action`` on ``peer``; returns the successor and the emitted message."""
    inbox = action.message if isinstance(action, Deliver) else None
    if action not in _enabled(peer, inbox, True, max_htlcs):
        raise IllegalAction(f"{action} is not enabled for {peer}")
    return _apply(peer, action, max_htlcs)


@lru_cache(maxsize=None)
def _apply(peer: PeerMachine, action: Action, max_htlcs: int) -> tuple[PeerMachine, Optional[Message]]:
    st = peer.state

    if isinstance(action, (Timeout, InitiateError)):
        return _fail(peer, _ERR if action.notify else None)

    if isinstance(action, InitiateAdd):
        msg = Message(MessageType.ADD, action.validity, peer.local_htlcs)
        return peer._replace(state=S.MORE_HTLCS_WAIT, local_htlcs=peer.local_htlcs + 1), msg

    if isinstance(action, InitiateCommit):
        msg = Message(MessageType.COMM, action.validity)
        target = S.WAIT_REVOCATION if st is S.MORE_HTLCS_WAIT else S.WAIT_REVOCATION_2
        return peer._replace(state=target), msg

    if isinstance(action, InitiateFulfill):
        remaining = peer.remote_htlcs - 1
        msg = Message(MessageType.FULF, action.validity, remaining)
        return peer._replace(remote_htlcs=remaining), msg

    m = action.message
    if action.outcome is Outcome.FAIL_SILENT:
        return _fail(peer, None)
    if action.outcome is Outcome.FAIL_NOTIFY:
        notice = _ERR
        if m.kind is MessageType.ADD and m.validity is not Validity.VALID:
            kind = MessageType.FAILM if m.validity is Validity.INVALID_MALFORMED else MessageType.FAIL
            notice = Message(kind, htlc_id=m.htlc_id)
        elif m.kind is MessageType.ADD and peer.open_htlcs >= max_htlcs:
            notice = Message(MessageType.FAIL, htlc_id=m.htlc_id)
        return _fail(peer, notice)

    kind = m.kind
    if kind is MessageType.ADD:
        return peer._replace(state=S.MORE_HTLCS_WAIT, remote_htlcs=peer.remote_htlcs + 1), None
    if kind is MessageType.COMM:
        rev = Message(MessageType.REV, action.reply_validity)
        if st is S.MORE_HTLCS_WAIT:
            return peer._replace(acked=True), rev
        if st is S.WAIT_COMMITMENT_SIG:
            return peer._replace(state=S.WAIT_FULFILLMENT), rev
        return peer._replace(state=S.FUNDED), rev
    if kind is MessageType.REV:
        if st is S.WAIT_REVOCATION_2:
            return peer._replace(state=S.FUNDED), None
        if peer.acked:
            return peer._replace(state=S.WAIT_FULFILLMENT, acked=False), None
        return peer._replace(state=S.WAIT_COMMITMENT_SIG), None
    if kind is MessageType.FULF:
        remaining = peer.local_htlcs - 1
        if remaining == 0 and peer.remote_htlcs == 0:
            return peer._replace(state=S.WAIT_COMMITMENT_SIG_2, local_htlcs=0), None
        return peer._replace(local_htlcs=remaining), None
    raise IllegalAction(f"no accepting transition for {m} in {st.name}")  # pragma: no cover


def action_label(action: Action) -> str:
    """Short class name used in trace records, e.g. ``Deliver``."""
    return type(action).__name__
