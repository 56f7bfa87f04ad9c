"""
Deterministic simulated blockchains.

A ``Chain`` owns one endpoint, one library registry and the OApps deployed
on it. State changes only happen inside ``submit_tx``: a transaction either
applies completely or is rolled back to the snapshot taken before it ran.
``Network`` groups chains by endpoint id and keeps the journal the harness
turns into a trace.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import errors
from .codec import Path
from .conf import sim_settings
from .endpoint import Endpoint
from .msglib import LibKey, LibraryRegistry

logger = logging.getLogger(__name__)

APPLIED = 'Applied'
REVERTED = 'Reverted'
OUT_OF_BUDGET = 'OutOfBudget'


def _setting(name):
    return lambda: getattr(sim_settings, name)


@dataclass(frozen=True)
class ChainConfig:
    eid: int
    iteration_budget: int = field(default_factory=_setting('ITERATION_BUDGET'))
    max_payload: int = field(default_factory=_setting('MAX_PAYLOAD'))
    block_time_ticks: int = field(default_factory=_setting('BLOCK_TIME_TICKS'))
    fee_per_dvn: int = field(default_factory=_setting('FEE_PER_DVN'))
    executor_fee: int = field(default_factory=_setting('EXECUTOR_FEE'))

    def __post_init__(self):
        if not 0 < self.eid < 2**32:
            raise errors.InvalidValue('Endpoint id must be a non-zero uint32.', eid=self.eid)
        if self.iteration_budget < 1:
            raise errors.InvalidValue('Iteration budget must be at least 1.', budget=self.iteration_budget)
        if self.block_time_ticks < 1:
            raise errors.InvalidValue('Block time must be at least one tick.')


def format_value(value) -> str:
    if isinstance(value, bytes):
        return value.hex() if value else '-'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (frozenset, set)):
        return ','.join(sorted(str(v) for v in value)) or '-'
    if isinstance(value, (list, tuple)) and not isinstance(value, LibKey):
        return ','.join(str(v) for v in value) or '-'
    if value is None:
        return '-'
    return str(value)


def format_fields(fields: dict) -> str:
    return ' '.join(f'{k}={format_value(v)}' for k, v in fields.items())


@dataclass(frozen=True)
class LedgerEvent:
    height: int
    seq: int
    name: str
    fields: dict
    tick: int = 0

    def line(self, eid: int) -> str:
        text = f'{self.height} {self.seq} CHAIN={eid} {self.name}'
        return f'{text} {format_fields(self.fields)}' if self.fields else text


@dataclass
class ChainState:
    endpoint: Endpoint
    registry: LibraryRegistry
    apps: dict = field(default_factory=dict)
    balances: dict = field(default_factory=dict)
    worker_balances: dict = field(default_factory=dict)


@dataclass
class Transaction:
    caller: Any
    action: Callable
    label: str = ''


@dataclass
class TxReceipt:
    status: str
    result: Any = None
    reason: str = ''
    detail: str = ''
    budget_used: int = 0
    height: int = 0
    events: tuple = ()

    @property
    def applied(self) -> bool:
        return self.status == APPLIED


class TxContext:
    """What an operation sees while it runs inside a transaction."""

    def __init__(self, state: ChainState, caller, height: int = 0, budget: Optional[int] = None,
                 config: Optional[ChainConfig] = None, sink: Optional[Callable] = None):
        self.state = state
        self.caller = caller
        self.height = height
        self.budget = budget
        self.used = 0
        self._sink = sink
        self.max_payload = config.max_payload if config else sim_settings.MAX_PAYLOAD
        self.fee_per_dvn = config.fee_per_dvn if config else sim_settings.FEE_PER_DVN
        self.executor_fee = config.executor_fee if config else sim_settings.EXECUTOR_FEE

    @property
    def endpoint(self) -> Endpoint:
        return self.state.endpoint

    def charge(self, units: int = 1):
        self.used += units
        if self.budget is not None and self.used > self.budget:
            raise errors.OutOfBudget(used=self.used, budget=self.budget)

    def emit(self, name: str, **fields):
        if self._sink is not None:
            self._sink(name, fields)


class Chain:
    def __init__(self, config: ChainConfig, admin: bytes, endpoint_class=Endpoint):
        self.config = config
        self.height = 0
        self.tick = 0
        self.state = ChainState(endpoint=endpoint_class(config.eid), registry=LibraryRegistry(admin))
        self.events = []
        self._seq = 0
        self._observer = None

    @property
    def eid(self) -> int:
        return self.config.eid

    @property
    def endpoint(self) -> Endpoint:
        return self.state.endpoint

    @property
    def registry(self) -> LibraryRegistry:
        return self.state.registry

    @property
    def apps(self) -> dict:
        return self.state.apps

    def observe(self, callback: Optional[Callable]):
        self._observer = callback

    def submit_tx(self, tx: Transaction) -> TxReceipt:
        snapshot = copy.deepcopy(self.state)
        pending = []

        def sink(name, fields):
            pending.append((name, fields))

        ctx = TxContext(self.state, tx.caller, height=self.height, budget=self.config.iteration_budget,
                        config=self.config, sink=sink)
        try:
            result = tx.action(ctx)
        except errors.OutOfBudget as exc:
            self.state = snapshot
            logger.debug('chain %s: %s out of budget (%s)', self.eid, tx.label, exc)
            return TxReceipt(OUT_OF_BUDGET, reason=exc.code, detail=str(exc), budget_used=ctx.used,
                             height=self.height)
        except errors.ProtocolError as exc:
            self.state = snapshot
            logger.debug('chain %s: %s reverted with %s', self.eid, tx.label, exc.code)
            return TxReceipt(REVERTED, reason=exc.code, detail=str(exc), budget_used=ctx.used,
                             height=self.height)

        committed = []
        for name, fields in pending:
            event = LedgerEvent(self.height, self._seq, name, fields, tick=self.tick)
            self._seq += 1
            self.events.append(event)
            committed.append(event)
            if self._observer is not None:
                self._observer(self, event)
        return TxReceipt(APPLIED, result=result, budget_used=ctx.used, height=self.height,
                         events=tuple(committed))

    def call(self, caller, action: Callable, label: str = '') -> TxReceipt:
        return self.submit_tx(Transaction(caller, action, label))

    def advance(self, blocks: int = 1) -> int:
        if blocks < 1:
            raise errors.InvalidAdvance(blocks=blocks)
        self.height += blocks
        self._seq = 0
        return self.height

    def read_events(self, from_height: int, to_height: int) -> list:
        if from_height > to_height or to_height > self.height:
            raise errors.RangeAhead(start=from_height, end=to_height, head=self.height)
        return [e for e in self.events if from_height <= e.height <= to_height]

    def fork(self) -> 'Chain':
        """Detached deep copy; nothing done on the fork reaches this chain."""
        forked = Chain.__new__(Chain)
        forked.config = self.config
        forked.height = self.height
        forked.tick = self.tick
        forked.state = copy.deepcopy(self.state)
        forked.events = list(self.events)
        forked._seq = self._seq
        forked._observer = None
        return forked

    def deploy(self, app, balance: Optional[int] = None):
        self.state.apps[app.address] = app
        self.state.balances.setdefault(
            app.address, sim_settings.DEFAULT_OAPP_BALANCE if balance is None else balance)
        return app

    def lazy_inbound_nonce(self, path: Path) -> int:
        return self.endpoint.lazy_inbound_nonce(path)


@dataclass(frozen=True)
class JournalEntry:
    line: str
    kind: str
    subject: str
    name: str


class Network:
    """The set of simulated chains plus the shared trace journal."""

    def __init__(self, admin: bytes, endpoint_class=Endpoint):
        self.admin = admin
        self.endpoint_class = endpoint_class
        self.chains = {}
        self.tick = 0
        self.journal = []
        # offchain Pre-Crime verdicts keyed by (path, nonce); advisory only
        self.advisories = {}

    def add_chain(self, config: ChainConfig) -> Chain:
        if config.eid in self.chains:
            raise errors.InvalidValue('Duplicate endpoint id.', eid=config.eid)
        chain = Chain(config, self.admin, self.endpoint_class)
        chain.observe(self._record_event)
        self.chains[config.eid] = chain
        return chain

    def chain(self, eid: int) -> Chain:
        try:
            return self.chains[eid]
        except KeyError:
            raise errors.UnknownChain(eid=eid) from None

    def submit_tx(self, eid: int, tx: Transaction) -> TxReceipt:
        chain = self.chain(eid)
        chain.tick = self.tick
        return chain.submit_tx(tx)

    def advance(self, eid: int, blocks: int = 1) -> int:
        return self.chain(eid).advance(blocks)

    def read_events(self, eid: int, from_height: int, to_height: int) -> list:
        return self.chain(eid).read_events(from_height, to_height)

    def fork_state(self, eid: int) -> Chain:
        return self.chain(eid).fork()

    def _record_event(self, chain: Chain, event: LedgerEvent):
        self.journal.append(JournalEntry(event.line(chain.eid), 'chain', str(chain.eid), event.name))

    def log(self, worker: str, action: str, **fields):
        text = f'{self.tick} WORKER={worker} {action}'
        if fields:
            text = f'{text} {format_fields(fields)}'
        self.journal.append(JournalEntry(text, 'worker', worker, action))
        logger.debug(text)

    def note(self, subject: str, action: str, **fields):
        """Journal a harness-level line (scenario commands, assertions)."""
        text = f'{self.tick} {subject} {action}'
        if fields:
            text = f'{text} {format_fields(fields)}'
        self.journal.append(JournalEntry(text, 'harness', subject, action))

    def trace(self) -> str:
        return ''.join(entry.line + '\n' for entry in self.journal)
