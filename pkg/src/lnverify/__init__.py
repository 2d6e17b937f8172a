"""Explicit-state model checking of the Lightning channel payment protocol.

Submodules::

    protocol     peer FSM, messages, actions, transition function
    network      bounded FIFO duplex link
    explorer     BFS exploration, safety search, nested-DFS cycle search
    properties   the five claims plus deadlock and non-progress checks
    settlement   abstract UTXO ledger and commitment outcomes
    scenarios    scripted runs and attack replays
    export       DOT / jsonl / plain writers
    cli          ``lnverify`` command
"""
from .config import ModelConfig, load_config
from .explorer import (
    ExplorationReport,
    GlobalState,
    LassoTrace,
    ProtocolModel,
    StateSpaceBudgetExceeded,
    Trace,
    canonical_hash,
    explore,
    find_acceptance_cycle,
    find_safety_violation,
    successors,
)
from .network import BufferEmpty, BufferFull, DuplexLink, LinkBuffer, receive, send
from .properties import PropertyId, Verdict, build, check, claim_step
from .protocol import (
    FsmState,
    IllegalAction,
    Message,
    MessageType,
    PeerMachine,
    Role,
    Validity,
    apply,
    enabled_actions,
    initial_peer,
    is_end_state,
    is_progress_state,
)
from .settlement import Ledger, confirm, derive_commitments, mine_blocks, resolve_outcome

__version__ = "0.1.0"
