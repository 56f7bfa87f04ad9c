"""
The per-chain Endpoint: lossless channels, Security Stack registry and the
compose queue.

Channels are keyed by ``Path``. A channel delivers out of order inside its
verified prefix: nonce ``n`` is deliverable once every nonce between the lazy
inbound nonce and ``n`` holds a verified payload hash. Delivering, clearing
and burning delete the stored hash; that deletion is what makes delivery
exactly-once.

Every mutating operation takes a transaction context (``ctx``) that supplies
the caller, the block height, the iteration budget and the event sink.
"""

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from . import errors
from .codec import Packet, PacketHeader, Path, encode_packet, make_header, payload_hash
from .msglib import MAX_DVNS, LibKey, UlnConfigView

logger = logging.getLogger(__name__)

NIL = b'\xff' * 32


@dataclass
class ChannelState:
    outbound_nonce: int = 0
    lazy_inbound_nonce: int = 0
    verified: dict = field(default_factory=dict)

    def snapshot(self):
        return (self.outbound_nonce, self.lazy_inbound_nonce, tuple(sorted(self.verified.items())))


@dataclass(frozen=True)
class SecurityStack:
    send_library: LibKey
    receive_library: LibKey
    prev_receive_library: Optional[LibKey] = None
    grace_period_end: Optional[int] = None
    required_dvns: frozenset = frozenset()
    optional_dvns: frozenset = frozenset()
    optional_threshold: int = 0
    executor: str = ''
    is_default_opt_in: bool = False

    def validate(self):
        if self.required_dvns & self.optional_dvns:
            raise errors.InvalidStack('A DVN cannot be both required and optional.',
                                      dvns=','.join(sorted(self.required_dvns & self.optional_dvns)))
        if not 0 <= self.optional_threshold <= len(self.optional_dvns):
            raise errors.InvalidStack('Optional threshold exceeds the optional DVN count.',
                                      threshold=self.optional_threshold)
        total = len(self.required_dvns) + len(self.optional_dvns)
        if total > MAX_DVNS:
            raise errors.InvalidStack('Too many DVNs.', total=total)
        if total == 0 or len(self.required_dvns) + self.optional_threshold == 0:
            raise errors.InvalidStack('The quorum needs at least one DVN signature.')
        if not self.executor:
            raise errors.InvalidStack('An executor is required.')

    def uln_config(self) -> UlnConfigView:
        return UlnConfigView(self.required_dvns, self.optional_dvns, self.optional_threshold)

    def accepts_receive_library(self, key: LibKey, height: int) -> bool:
        if key == self.receive_library:
            return True
        return (key == self.prev_receive_library and self.grace_period_end is not None
                and height <= self.grace_period_end)

    @property
    def dvns(self) -> frozenset:
        return self.required_dvns | self.optional_dvns


class ComposeKey(NamedTuple):
    sender: bytes
    to: bytes
    guid: bytes
    index: int


class ComposeState(enum.Enum):
    STORED = 'Stored'
    EXECUTED = 'Executed'


@dataclass
class ComposeEntry:
    hash: bytes
    state: ComposeState = ComposeState.STORED


class Outcome(enum.Enum):
    DELIVERED = 'Delivered'
    REVERTED = 'Reverted'


@dataclass(frozen=True)
class DeliveryReceipt:
    guid: bytes
    nonce: int
    outcome: Outcome
    reason: str = ''
    compose_index: Optional[int] = None

    @property
    def delivered(self) -> bool:
        return self.outcome is Outcome.DELIVERED


class Endpoint:
    def __init__(self, eid: int):
        self.eid = eid
        self.channels = {}
        self.compose_queue = {}
        self._stacks = {}
        self._defaults = {}
        self._opted_in = set()
        self._call_stack = []

    # Channel state

    def channel(self, path: Path) -> ChannelState:
        ch = self.channels.get(path)
        if ch is None:
            ch = self.channels[path] = ChannelState()
        return ch

    def lazy_inbound_nonce(self, path: Path) -> int:
        ch = self.channels.get(path)
        return ch.lazy_inbound_nonce if ch else 0

    def verified_hash(self, path: Path, nonce: int) -> Optional[bytes]:
        ch = self.channels.get(path)
        return ch.verified.get(nonce) if ch else None

    def get_inbound_nonce(self, path: Path, iteration_budget: Optional[int] = None) -> int:
        """Largest nonce whose predecessors since the lazy inbound nonce are all verified.

        Walks at most ``iteration_budget`` nonces and returns the last one
        reached when the budget runs out. NIL entries count as gaps.
        """
        ch = self.channels.get(path)
        if ch is None:
            return 0
        nonce = ch.lazy_inbound_nonce
        steps = 0
        while iteration_budget is None or steps < iteration_budget:
            entry = ch.verified.get(nonce + 1)
            if entry is None or entry == NIL:
                break
            nonce += 1
            steps += 1
        return nonce

    def _walk_inbound(self, ctx, ch: ChannelState) -> int:
        nonce = ch.lazy_inbound_nonce
        while True:
            entry = ch.verified.get(nonce + 1)
            if entry is None or entry == NIL:
                return nonce
            ctx.charge()
            nonce += 1

    def _deliverable_hash(self, ctx, ch: ChannelState, nonce: int) -> bytes:
        lazy = ch.lazy_inbound_nonce
        if nonce <= lazy:
            entry = ch.verified.get(nonce)
            if entry is None:
                raise errors.AlreadyDelivered(nonce=nonce, lazy=lazy)
            if entry == NIL:
                raise errors.Nilified(nonce=nonce)
            return entry
        for n in range(lazy + 1, nonce):
            ctx.charge()
            entry = ch.verified.get(n)
            if entry is None or entry == NIL:
                raise errors.Censorship(nonce=nonce, missing=n)
        ctx.charge()
        entry = ch.verified.get(nonce)
        if entry is None:
            raise errors.Censorship(nonce=nonce, missing=nonce)
        if entry == NIL:
            raise errors.Nilified(nonce=nonce)
        return entry

    # Security Stack

    def resolve_stack(self, oapp: bytes, remote_eid: int, height: int) -> Optional[SecurityStack]:
        stack = self._effective(self._stacks.get((oapp, remote_eid), ()), height)
        if stack is None and (oapp, remote_eid) in self._opted_in:
            stack = self._effective(self._defaults.get(remote_eid, ()), height)
        return stack

    @staticmethod
    def _effective(history, height):
        for effective_height, stack in reversed(history):
            if effective_height <= height:
                return stack
        return None

    def _latest(self, oapp: bytes, remote_eid: int, height: int) -> Optional[SecurityStack]:
        history = self._stacks.get((oapp, remote_eid))
        if history:
            return history[-1][1]
        return self.resolve_stack(oapp, remote_eid, height)

    @staticmethod
    def _check_libraries(ctx, stack: SecurityStack):
        for key in (stack.send_library, stack.receive_library, stack.prev_receive_library):
            if key is not None and key not in ctx.state.registry:
                raise errors.UnknownLibrary(lib=str(key))

    def _install(self, ctx, oapp, remote_eid, stack, effective_height):
        self._stacks.setdefault((oapp, remote_eid), []).append((effective_height, stack))
        ctx.emit('StackConfigured', oapp=oapp, remote=remote_eid, send=stack.send_library,
                 recv=stack.receive_library, prev=stack.prev_receive_library,
                 graceEnd=stack.grace_period_end, required=stack.required_dvns,
                 optional=stack.optional_dvns, threshold=stack.optional_threshold,
                 executor=stack.executor, effective=effective_height)

    def set_security_stack(self, ctx, owner: bytes, remote_eid: int, stack: SecurityStack):
        """Replace the OApp's stack from the next block on. Channel state is untouched."""
        if ctx.caller != owner:
            raise errors.NotOwner()
        stack.validate()
        self._check_libraries(ctx, stack)
        self._install(ctx, owner, remote_eid, stack, ctx.height + 1)

    def set_default_stack(self, ctx, remote_eid: int, stack: SecurityStack):
        if ctx.caller != ctx.state.registry.admin:
            raise errors.NotAdmin()
        stack.validate()
        self._check_libraries(ctx, stack)
        stack = replace(stack, is_default_opt_in=True)
        self._defaults.setdefault(remote_eid, []).append((ctx.height + 1, stack))
        ctx.emit('DefaultStackConfigured', remote=remote_eid, send=stack.send_library,
                 recv=stack.receive_library, effective=ctx.height + 1)

    def opt_in_defaults(self, ctx, oapp: bytes, remote_eid: int):
        if ctx.caller != oapp:
            raise errors.NotOwner()
        self._opted_in.add((oapp, remote_eid))
        ctx.emit('DefaultsOptedIn', oapp=oapp, remote=remote_eid)

    def set_receive_library_with_grace(self, ctx, owner: bytes, remote_eid: int, new_lib: LibKey,
                                       grace_period_blocks: int):
        """Move to ``new_lib`` from the next block; the old library stays valid through ``height + grace``."""
        if ctx.caller != owner:
            raise errors.NotOwner()
        if new_lib not in ctx.state.registry:
            raise errors.UnknownLibrary(lib=str(new_lib))
        if grace_period_blocks < 0:
            raise errors.InvalidStack('Grace period cannot be negative.')
        current = self._latest(owner, remote_eid, ctx.height)
        if current is None:
            raise errors.NoReceiveStack()
        stack = replace(current, receive_library=new_lib, prev_receive_library=current.receive_library,
                        grace_period_end=ctx.height + grace_period_blocks, is_default_opt_in=False)
        self._install(ctx, owner, remote_eid, stack, ctx.height + 1)

    def set_send_library(self, ctx, owner: bytes, remote_eid: int, new_lib: LibKey):
        if ctx.caller != owner:
            raise errors.NotOwner()
        if new_lib not in ctx.state.registry:
            raise errors.UnknownLibrary(lib=str(new_lib))
        current = self._latest(owner, remote_eid, ctx.height)
        if current is None:
            raise errors.NoSendLibrary()
        self._install(ctx, owner, remote_eid, replace(current, send_library=new_lib, is_default_opt_in=False),
                      ctx.height)

    # Sending and verification

    def send(self, ctx, path: Path, message: bytes, options: bytes = b'') -> PacketHeader:
        if ctx.caller != path.sender:
            raise errors.NotSender()
        if path.src_eid != self.eid:
            raise errors.NotSender('Path does not start on this endpoint.', src=path.src_eid)
        if len(message) > ctx.max_payload:
            raise errors.PayloadTooLarge(size=len(message), limit=ctx.max_payload)
        stack = self.resolve_stack(path.sender, path.dst_eid, ctx.height)
        if stack is None:
            raise errors.NoSendLibrary(remote=path.dst_eid)
        library = ctx.state.registry.library(stack.send_library)

        ch = self.channel(path)
        ch.outbound_nonce += 1
        header = make_header(library.record.major, ch.outbound_nonce, path)
        packet = Packet(header, bytes(message))
        job = library.send(ctx, packet, options, stack)
        ctx.emit('PacketSent', nonce=header.nonce, guid=header.guid, lib=stack.send_library,
                 dvns=job.dvns, executor=job.executor, fee=job.fee,
                 packet=encode_packet(packet), options=options)
        return header

    def commit_verification(self, ctx, lib_key: LibKey, header: PacketHeader, payload_hash_: bytes):
        """Store a verified payload hash. Called by message libraries only."""
        path = header.path
        stack = self.resolve_stack(path.receiver, path.src_eid, ctx.height)
        if stack is None:
            raise errors.NoReceiveStack(nonce=header.nonce)
        if not stack.accepts_receive_library(lib_key, ctx.height):
            raise errors.NotReceiveLibrary(lib=str(lib_key), height=ctx.height)
        ch = self.channel(path)
        if header.nonce <= ch.lazy_inbound_nonce:
            raise errors.StalePacket(nonce=header.nonce, lazy=ch.lazy_inbound_nonce)
        ch.verified[header.nonce] = payload_hash_
        ctx.emit('PayloadVerified', path=path, nonce=header.nonce, hash=payload_hash_, lib=lib_key)

    # Delivery

    def _invoke(self, app_address: bytes, call):
        self._call_stack.append(app_address)
        try:
            return call()
        finally:
            self._call_stack.pop()

    def lz_receive(self, ctx, path: Path, nonce: int, guid: bytes, message: bytes,
                   extra_data: bytes = b'') -> DeliveryReceipt:
        ch = self.channel(path)
        stored = self._deliverable_hash(ctx, ch, nonce)
        if stored != payload_hash(guid, message):
            raise errors.HashMismatch(nonce=nonce)

        previous_lazy = ch.lazy_inbound_nonce
        del ch.verified[nonce]
        ch.lazy_inbound_nonce = max(previous_lazy, nonce)
        app = ctx.state.apps.get(path.receiver)
        if app is not None:
            try:
                self._invoke(path.receiver, lambda: app.lz_receive(ctx, path, nonce, guid, message, extra_data))
            except Exception:
                ch.verified[nonce] = stored
                ch.lazy_inbound_nonce = previous_lazy
                raise
        ctx.emit('PacketDelivered', path=path, nonce=nonce, guid=guid)
        return DeliveryReceipt(guid=guid, nonce=nonce, outcome=Outcome.DELIVERED)

    def skip(self, ctx, path: Path, nonce: int):
        if ctx.caller != path.receiver:
            raise errors.NotReceiver()
        ch = self.channel(path)
        expected = self._walk_inbound(ctx, ch) + 1
        if nonce != expected:
            raise errors.WrongNonce(nonce=nonce, expected=expected)
        ch.verified.pop(nonce, None)
        ch.lazy_inbound_nonce = nonce
        ctx.emit('PacketSkipped', path=path, nonce=nonce)

    def clear(self, ctx, path: Path, nonce: int, guid: bytes, message: bytes):
        """Consume a deliverable packet without running the receiver."""
        if ctx.caller != path.receiver:
            raise errors.NotReceiver()
        ch = self.channel(path)
        stored = self._deliverable_hash(ctx, ch, nonce)
        if stored != payload_hash(guid, message):
            raise errors.HashMismatch(nonce=nonce)
        del ch.verified[nonce]
        ch.lazy_inbound_nonce = max(ch.lazy_inbound_nonce, nonce)
        ctx.emit('PacketCleared', path=path, nonce=nonce, guid=guid)

    def nilify(self, ctx, path: Path, nonce: int, expected_hash: bytes):
        if ctx.caller != path.receiver:
            raise errors.NotReceiver()
        ch = self.channel(path)
        if nonce <= ch.lazy_inbound_nonce:
            raise errors.StalePacket(nonce=nonce, lazy=ch.lazy_inbound_nonce)
        entry = ch.verified.get(nonce)
        if entry is None or entry == NIL:
            raise errors.NoEntry(nonce=nonce)
        if entry != expected_hash:
            raise errors.HashMismatch(nonce=nonce)
        ch.verified[nonce] = NIL
        ctx.emit('PacketNilified', path=path, nonce=nonce, hash=expected_hash)

    def burn(self, ctx, path: Path, nonce: int, expected_hash: bytes):
        if ctx.caller != path.receiver:
            raise errors.NotReceiver()
        ch = self.channel(path)
        if nonce > ch.lazy_inbound_nonce:
            raise errors.NonceAhead(nonce=nonce, lazy=ch.lazy_inbound_nonce)
        entry = ch.verified.get(nonce)
        if entry is None:
            raise errors.NoEntry(nonce=nonce)
        if entry != expected_hash:
            raise errors.HashMismatch(nonce=nonce)
        del ch.verified[nonce]
        ctx.emit('PacketBurnt', path=path, nonce=nonce, hash=expected_hash)

    # Composition

    def send_compose(self, ctx, sender: bytes, to: bytes, guid: bytes, index: int, message: bytes):
        if not self._call_stack or self._call_stack[-1] != sender:
            raise errors.NotInDelivery()
        if not 0 <= index < 2**16:
            raise errors.InvalidValue('Compose index out of range.', index=index)
        key = ComposeKey(sender, to, guid, index)
        if key in self.compose_queue:
            raise errors.DuplicateCompose(index=index)
        self.compose_queue[key] = ComposeEntry(hash=payload_hash(guid, message))
        ctx.emit('ComposeSent', sender=sender, to=to, guid=guid, index=index, message=message)

    def lz_compose(self, ctx, sender: bytes, to: bytes, guid: bytes, index: int, message: bytes,
                   extra_data: bytes = b'') -> DeliveryReceipt:
        entry = self.compose_queue.get(ComposeKey(sender, to, guid, index))
        if entry is None:
            raise errors.NoSuchCompose(index=index)
        if entry.state is ComposeState.EXECUTED:
            raise errors.AlreadyExecuted(index=index)
        if entry.hash != payload_hash(guid, message):
            raise errors.HashMismatch(index=index)
        app = ctx.state.apps.get(to)
        if app is None:
            raise errors.AppAbort('No contract at the compose target.')
        self._invoke(to, lambda: app.lz_compose(ctx, sender, guid, index, message, extra_data))
        entry.state = ComposeState.EXECUTED
        ctx.emit('ComposeDelivered', sender=sender, to=to, guid=guid, index=index)
        return DeliveryReceipt(guid=guid, nonce=0, outcome=Outcome.DELIVERED, compose_index=index)

    def compose_state(self, sender: bytes, to: bytes, guid: bytes, index: int) -> Optional[ComposeState]:
        entry = self.compose_queue.get(ComposeKey(sender, to, guid, index))
        return entry.state if entry else None


def reverted(guid: bytes, nonce: int, reason: str, compose_index=None) -> DeliveryReceipt:
    return DeliveryReceipt(guid=guid, nonce=nonce, outcome=Outcome.REVERTED, reason=reason,
                           compose_index=compose_index)
