"""
Offchain workers: DVNs, executors and the Pre-Crime worker.

Workers are polling actors. Each tick the runner calls ``step(tick)`` on every
worker in registration order; a worker reads ``PacketSent`` and
``ComposeSent`` events from completed blocks, decides what to do and submits
ordinary transactions. Workers never touch chain state directly, and nothing
they do is trusted by the endpoint.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Optional

from . import errors
from .codec import NativeDropOptions, Packet, Path, WorkerOptions, decode_packet, parse_options
from .endpoint import ComposeState
from .msglib import CommitOutcome, LibKey, UltraLightNode, WhitelistLib
from .simchain import Network, Transaction, TxContext

logger = logging.getLogger(__name__)

HONEST = 'honest'
SILENT = 'silent'
EQUIVOCATE = 'equivocate'
CRASHED = 'crashed'

USER_MODE = 'user'
CONFIGURED_MODE = 'configured'

ALLOW = 'allow'
HALT = 'halt'


@dataclass(frozen=True)
class Behavior:
    kind: str = HONEST
    start: int = 0
    end: int = 0

    def __post_init__(self):
        if self.kind not in (HONEST, SILENT, EQUIVOCATE, CRASHED):
            raise errors.InvalidValue('Unknown worker behavior.', behavior=self.kind)
        if self.kind == SILENT and self.start > self.end:
            raise errors.InvalidValue('Silent window ends before it starts.', start=self.start, end=self.end)

    @classmethod
    def parse(cls, text: str) -> 'Behavior':
        """``honest``, ``crashed``, ``equivocate`` or ``silent(<from>,<to>)``."""
        text = text.strip().lower()
        if text.startswith(SILENT):
            window = text[len(SILENT):].strip('()')
            if not window:
                return cls(SILENT, 0, 2**63)
            start, _, end = window.partition(',')
            try:
                return cls(SILENT, int(start), int(end))
            except ValueError as exc:
                raise errors.InvalidValue('Silent window must be silent(<from>,<to>).', value=text) from exc
        return cls(text)

    def acts_at(self, tick: int) -> bool:
        if self.kind == CRASHED:
            return False
        if self.kind == SILENT:
            return not self.start <= tick <= self.end
        return True

    def __str__(self) -> str:
        if self.kind == SILENT:
            return f'silent({self.start},{self.end})'
        return self.kind


def wrong_hash(payload_hash: bytes) -> bytes:
    """The hash an equivocating DVN signs: the honest one with its last byte flipped."""
    return payload_hash[:-1] + bytes([payload_hash[-1] ^ 0xFF])


@dataclass(frozen=True)
class DvnSpec:
    id: str
    watched_chains: frozenset
    latency_ticks: int = 1
    jitter_ticks: int = 0
    behavior: Behavior = Behavior()

    def __post_init__(self):
        if self.latency_ticks < 1:
            raise errors.InvalidValue('DVN latency must be at least one tick.', dvn=self.id)
        if self.jitter_ticks < 0:
            raise errors.InvalidValue('DVN jitter cannot be negative.', dvn=self.id)


@dataclass(frozen=True)
class ExecutorSpec:
    id: str
    behavior: Behavior = Behavior()
    gas_policy: str = 'always-pay'
    mode: str = CONFIGURED_MODE

    def __post_init__(self):
        if self.behavior.kind == EQUIVOCATE:
            raise errors.InvalidValue('Executors cannot equivocate.', executor=self.id)
        if self.mode not in (CONFIGURED_MODE, USER_MODE):
            raise errors.InvalidValue('Executor mode is configured or user.', executor=self.id)

    @property
    def user_mode(self) -> bool:
        return self.mode == USER_MODE


@dataclass(frozen=True)
class PrecrimeSpec:
    id: str
    worker_id: int
    behavior: Behavior = Behavior()


@dataclass(frozen=True)
class FaultEntry:
    tick: int
    worker: str
    behavior: Behavior


@dataclass(frozen=True)
class FaultSchedule:
    entries: tuple = ()

    def __post_init__(self):
        ticks = [e.tick for e in self.entries]
        if ticks != sorted(ticks):
            raise errors.InvalidValue('Fault ticks must be non-decreasing.')

    def due(self, tick: int):
        return [e for e in self.entries if e.tick == tick]


@dataclass(frozen=True)
class Verdict:
    decision: str
    nonce: int
    violated: tuple = ()
    suspect: Optional[int] = None
    reason: str = ''

    @property
    def halted(self) -> bool:
        return self.decision == HALT


@dataclass
class SentPacket:
    """A ``PacketSent`` event as a worker sees it."""
    packet: Packet
    lib: LibKey
    dvns: tuple
    executor: str
    options: bytes
    sent_tick: int
    due_tick: int = 0

    @classmethod
    def from_event(cls, event) -> 'SentPacket':
        fields = event.fields
        return cls(packet=decode_packet(fields['packet']), lib=fields['lib'], dvns=tuple(fields['dvns']),
                   executor=fields['executor'], options=fields['options'], sent_tick=event.tick)

    @property
    def path(self) -> Path:
        return self.packet.path

    @property
    def nonce(self) -> int:
        return self.packet.nonce

    @property
    def sort_key(self):
        return (self.path.dst_eid, self.path, self.nonce)

    def parsed_options(self):
        try:
            return parse_options(self.options)
        except errors.CodecError:
            return None


@dataclass
class SentCompose:
    eid: int
    sender: bytes
    to: bytes
    guid: bytes
    index: int
    message: bytes


def consumed(network: Network, path: Path, nonce: int) -> bool:
    """Delivered, cleared, skipped or burnt on the destination."""
    endpoint = network.chain(path.dst_eid).endpoint
    return nonce <= endpoint.lazy_inbound_nonce(path) and endpoint.verified_hash(path, nonce) is None


def read_context(network: Network, eid: int, caller) -> TxContext:
    chain = network.chain(eid)
    return TxContext(chain.state, caller, height=chain.height, config=chain.config)


def receive_library(network: Network, sent: SentPacket):
    """The destination library a worker verifies ``sent`` on, or None."""
    path = sent.path
    chain = network.chain(path.dst_eid)
    stack = chain.endpoint.resolve_stack(path.receiver, path.src_eid, chain.height)
    preferred = (stack.receive_library, stack.prev_receive_library) if stack else ()
    return chain.registry.receive_library_for(sent.lib.lib_id, sent.packet.header.version, preferred)


class Worker:
    role = 'worker'

    def __init__(self, spec, network: Network):
        self.spec = spec
        self.network = network
        self.behavior = spec.behavior
        self._read_through = {}

    @property
    def id(self) -> str:
        return self.spec.id

    def set_behavior(self, behavior: Behavior):
        self.behavior = behavior

    def poll(self, eids=None):
        """Yield ``(eid, event)`` from blocks completed since the last poll."""
        chains = self.network.chains
        for eid in sorted(chains if eids is None else eids):
            if eid not in chains:
                continue
            head = chains[eid].height - 1
            start = self._read_through.get(eid, -1) + 1
            if head < start:
                continue
            self._read_through[eid] = head
            for event in self.network.read_events(eid, start, head):
                yield eid, event

    def submit(self, eid: int, action, label: str):
        return self.network.submit_tx(eid, Transaction(self.id, action, label))

    def log(self, action: str, **fields):
        self.network.log(self.id, action, **fields)

    def step(self, tick: int):
        raise NotImplementedError


class Dvn(Worker):
    role = 'dvn'

    def __init__(self, spec: DvnSpec, network: Network, seed: int = 0):
        super().__init__(spec, network)
        self._rng = random.Random(f'{seed}:{spec.id}')
        self._backlog = []

    def _assigned(self, sent: SentPacket) -> bool:
        if self.id in sent.dvns:
            return True
        path = sent.path
        chain = self.network.chain(path.dst_eid)
        stack = chain.endpoint.resolve_stack(path.receiver, path.src_eid, chain.height)
        return stack is not None and self.id in stack.dvns

    def step(self, tick: int):
        for _, event in self.poll(self.spec.watched_chains):
            if event.name != 'PacketSent':
                continue
            sent = SentPacket.from_event(event)
            if sent.path.dst_eid not in self.network.chains:
                continue
            jitter = self._rng.randint(0, self.spec.jitter_ticks) if self.spec.jitter_ticks else 0
            sent.due_tick = sent.sent_tick + self.spec.latency_ticks + jitter
            self._backlog.append(sent)

        if not self.behavior.acts_at(tick):
            return

        pending = []
        for sent in self._backlog:
            if consumed(self.network, sent.path, sent.nonce):
                continue
            if tick < sent.due_tick or not self._assigned(sent):
                pending.append(sent)
                continue
            self.attest(sent)
        self._backlog = pending

    def attest(self, sent: SentPacket):
        library = receive_library(self.network, sent)
        header = sent.packet.header
        if not isinstance(library, UltraLightNode):
            self.log('ATTEST', nonce=sent.nonce, path=sent.path, result='NoUlnLibrary')
            return
        digest = sent.packet.payload_hash
        if self.behavior.kind == EQUIVOCATE:
            digest = wrong_hash(digest)
        key = library.key

        def action(ctx):
            return ctx.state.registry.library(key).verify(ctx, self.id, header, digest)

        receipt = self.submit(sent.path.dst_eid, action, f'verify {sent.nonce}')
        self.log('ATTEST', nonce=sent.nonce, path=sent.path, lib=key, hash=digest,
                 result=receipt.reason or receipt.status)


class Executor(Worker):
    role = 'executor'

    def __init__(self, spec: ExecutorSpec, network: Network, precrime_ids=frozenset()):
        super().__init__(spec, network)
        self.precrime_ids = frozenset(precrime_ids)
        self._packets = []
        self._composes = []

    def _collect(self):
        for eid, event in self.poll():
            if event.name == 'PacketSent':
                sent = SentPacket.from_event(event)
                if sent.path.dst_eid in self.network.chains:
                    self._packets.append(sent)
            elif event.name == 'ComposeSent':
                f = event.fields
                self._composes.append(SentCompose(eid, f['sender'], f['to'], f['guid'], f['index'], f['message']))
        self._packets.sort(key=lambda s: s.sort_key)

    def _assigned(self, sent: SentPacket) -> bool:
        if self.spec.user_mode or sent.executor == self.id:
            return True
        path = sent.path
        chain = self.network.chain(path.dst_eid)
        stack = chain.endpoint.resolve_stack(path.receiver, path.src_eid, chain.height)
        return stack is not None and stack.executor == self.id

    def _advice(self, sent: SentPacket) -> Optional[str]:
        """``None`` to proceed, otherwise why the packet is held back."""
        if self.spec.user_mode:
            return None
        options = sent.parsed_options()
        if not isinstance(options, WorkerOptions):
            return None
        if not any(options.for_worker(wid) for wid in self.precrime_ids):
            return None
        verdict = self.network.advisories.get((sent.path, sent.nonce))
        if verdict is None:
            return 'awaiting-precrime'
        return 'halted' if verdict.halted else None

    def step(self, tick: int):
        self._collect()
        if not self.behavior.acts_at(tick):
            return

        pending = []
        for sent in self._packets:
            if consumed(self.network, sent.path, sent.nonce):
                continue
            pending.append(sent)
            if not self._assigned(sent) or self._advice(sent) is not None:
                continue
            self.commit(sent)
            self.deliver(sent)
        self._packets = [s for s in pending if not consumed(self.network, s.path, s.nonce)]

        remaining = []
        for compose in self._composes:
            endpoint = self.network.chain(compose.eid).endpoint
            state = endpoint.compose_state(compose.sender, compose.to, compose.guid, compose.index)
            if state is ComposeState.EXECUTED:
                continue
            if not self.compose(compose):
                remaining.append(compose)
        self._composes = remaining

    def commit(self, sent: SentPacket) -> bool:
        path = sent.path
        digest = sent.packet.payload_hash
        endpoint = self.network.chain(path.dst_eid).endpoint
        if endpoint.verified_hash(path, sent.nonce) == digest:
            return True
        library = receive_library(self.network, sent)
        header = sent.packet.header
        if isinstance(library, UltraLightNode):
            try:
                ready = library.is_committable(read_context(self.network, path.dst_eid, self.id), header, digest)
            except errors.ProtocolError:
                ready = False
            if not ready:
                return False
            key = library.key

            def action(ctx):
                return ctx.state.registry.library(key).commit_if_ready(ctx, header, digest)
        elif isinstance(library, WhitelistLib) and self.id in library.record.allowlist:
            key = library.key

            def action(ctx):
                return ctx.state.registry.library(key).whitelist_verify(ctx, self.id, header, digest)
        else:
            return False

        receipt = self.submit(path.dst_eid, action, f'commit {sent.nonce}')
        committed = receipt.applied and receipt.result is CommitOutcome.COMMITTED
        self.log('COMMIT', nonce=sent.nonce, path=path, lib=key,
                 result='Committed' if committed else receipt.reason or 'NotReady')
        return committed

    def deliver(self, sent: SentPacket):
        path = sent.path
        endpoint = self.network.chain(path.dst_eid).endpoint
        if endpoint.verified_hash(path, sent.nonce) != sent.packet.payload_hash:
            return None
        options = sent.parsed_options()
        gas = getattr(options, 'execution_gas', 0)
        drop = options if isinstance(options, NativeDropOptions) else None
        packet = sent.packet

        def action(ctx):
            if drop is not None and drop.native_drop:
                ctx.state.balances[drop.receiver] = ctx.state.balances.get(drop.receiver, 0) + drop.native_drop
            return ctx.endpoint.lz_receive(ctx, path, packet.nonce, packet.guid, packet.message)

        receipt = self.submit(path.dst_eid, action, f'deliver {sent.nonce}')
        fields = {'nonce': sent.nonce, 'path': path, 'gas': gas}
        if drop is not None:
            fields['drop'] = drop.native_drop
        self.log('DELIVER', **fields, result='Delivered' if receipt.applied else receipt.reason)
        return receipt

    def compose(self, compose: SentCompose) -> bool:
        def action(ctx):
            return ctx.endpoint.lz_compose(ctx, compose.sender, compose.to, compose.guid, compose.index,
                                           compose.message)

        receipt = self.submit(compose.eid, action, f'compose {compose.index}')
        self.log('COMPOSE', chain=compose.eid, to=compose.to, guid=compose.guid, index=compose.index,
                 result='Delivered' if receipt.applied else receipt.reason)
        return receipt.applied


class Precrime(Worker):
    """Simulates guarded deliveries on forks and publishes allow/halt advice."""

    role = 'precrime'

    def __init__(self, spec: PrecrimeSpec, network: Network):
        super().__init__(spec, network)
        self._pending = []

    def _guards(self, sent: SentPacket) -> bool:
        options = sent.parsed_options()
        return isinstance(options, WorkerOptions) and bool(options.for_worker(self.spec.worker_id))

    def step(self, tick: int):
        for _, event in self.poll():
            if event.name == 'PacketSent':
                sent = SentPacket.from_event(event)
                if sent.path.dst_eid in self.network.chains and self._guards(sent):
                    self._pending.append(sent)
        self._pending.sort(key=lambda s: s.sort_key)
        if not self.behavior.acts_at(tick):
            return

        remaining = []
        for sent in self._pending:
            key = (sent.path, sent.nonce)
            if key in self.network.advisories or consumed(self.network, sent.path, sent.nonce):
                continue
            verdict = self.evaluate(sent)
            if verdict is None:
                remaining.append(sent)
                continue
            self.network.advisories[key] = verdict
            if verdict.halted:
                logger.info('Pre-Crime halted nonce %s on %s', sent.nonce, sent.path)
                self.log('HALT', nonce=sent.nonce, path=sent.path, violated=verdict.violated,
                         suspect=verdict.suspect, reason=verdict.reason)
            else:
                self.log('ALLOW', nonce=sent.nonce, path=sent.path)
        self._pending = remaining

    def evaluate(self, sent: SentPacket) -> Optional[Verdict]:
        """Fork, commit and deliver on the fork, then ask every peer. None means retry later."""
        path = sent.path
        dst = self.network.fork_state(path.dst_eid)
        receiver = dst.apps.get(path.receiver)
        if receiver is None:
            return Verdict(ALLOW, sent.nonce, reason='no-receiver')

        library = receive_library(self.network, sent)
        header = sent.packet.header
        digest = sent.packet.payload_hash
        if dst.endpoint.verified_hash(path, sent.nonce) != digest:
            if not isinstance(library, UltraLightNode):
                return None
            key = library.key
            receipt = dst.call(self.id, lambda ctx: ctx.state.registry.library(key).commit_if_ready(ctx, header, digest))
            if not receipt.applied or receipt.result is not CommitOutcome.COMMITTED:
                return None

        packet = sent.packet
        receipt = dst.call(self.id, lambda ctx: ctx.endpoint.lz_receive(ctx, path, packet.nonce, packet.guid,
                                                                         packet.message))
        if receipt.reason in ('Censorship', 'OutOfBudget'):
            return None
        if not receipt.applied:
            return Verdict(HALT, sent.nonce, violated=(receiver.name,), suspect=path.src_eid,
                           reason=f'simulation-reverted:{receipt.reason}')

        apps = [dst.apps[path.receiver]]
        for eid, address in sorted(receiver.peers.items()):
            if eid not in self.network.chains:
                continue
            peer = self.network.fork_state(eid).apps.get(address)
            if peer is not None:
                apps.append(peer)
        snapshots = [app.precrime_snapshot() for app in apps]
        violated = tuple(sorted(app.name for app in apps if not app.check_invariant(snapshots)))
        if violated:
            return Verdict(HALT, sent.nonce, violated=violated, suspect=path.src_eid, reason='invariant')
        return Verdict(ALLOW, sent.nonce)


def apply_fault(schedule: FaultSchedule, workers: dict, tick: int, network: Optional[Network] = None):
    """Apply the schedule entries due at ``tick``; returns them."""
    applied = []
    for entry in schedule.due(tick):
        worker = workers.get(entry.worker)
        if worker is None:
            raise errors.UnknownWorker(worker=entry.worker)
        previous = worker.behavior
        worker.set_behavior(entry.behavior)
        logger.info('tick %s: %s %s -> %s', tick, entry.worker, previous, entry.behavior)
        if network is not None:
            network.log(entry.worker, 'FAULT', was=previous, now=entry.behavior)
        applied.append(entry)
    return applied


@dataclass
class WorkerSet:
    """Workers in registration order."""
    workers: dict = field(default_factory=dict)

    def add(self, worker: Worker) -> Worker:
        if worker.id in self.workers:
            raise errors.InvalidValue('Duplicate worker id.', worker=worker.id)
        self.workers[worker.id] = worker
        return worker

    def step(self, tick: int):
        for worker in self.workers.values():
            worker.step(tick)

    def __contains__(self, worker_id) -> bool:
        return worker_id in self.workers

    def __getitem__(self, worker_id) -> Worker:
        return self.workers[worker_id]
