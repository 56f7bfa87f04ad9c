"""
MessageLib registry and the verification libraries.

The registry is append-only: records are never modified or removed once
registered. Each record is instantiated as a library object that owns its
own verification state (for the Ultra Light Node, the attestation store).
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

from . import errors
from .codec import Packet, PacketHeader, header_hash, parse_options

logger = logging.getLogger(__name__)

MAX_DVNS = 254


class LibKey(NamedTuple):
    lib_id: int
    major: int
    minor: int

    def __str__(self) -> str:
        return f'{self.lib_id}@{self.major}.{self.minor}'

    @classmethod
    def parse(cls, text: str) -> 'LibKey':
        """Parse ``<libId>@<major>.<minor>``."""
        lib_id, _, version = text.partition('@')
        major, _, minor = version.partition('.')
        try:
            return cls(int(lib_id), int(major), int(minor))
        except ValueError as exc:
            raise errors.InvalidValue('Library reference must be <libId>@<major>.<minor>.', value=text) from exc


class LibraryKind(enum.Enum):
    ULN = 'uln'
    WHITELIST = 'whitelist'
    CUSTOM = 'custom'


class CommitOutcome(enum.Enum):
    COMMITTED = 'committed'
    NOT_READY = 'notReady'


@dataclass(frozen=True)
class MessageLibRecord:
    lib_id: int
    major: int
    minor: int
    kind: LibraryKind = LibraryKind.ULN
    behavior: str = ''
    allowlist: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0 < self.lib_id < 2**32:
            raise errors.InvalidValue('libId out of range.', value=self.lib_id)
        # the major version doubles as the packet version byte
        if not 0 < self.major < 2**8 or not 0 <= self.minor < 2**16:
            raise errors.InvalidValue('Library version out of range.', version=f'{self.major}.{self.minor}')

    @property
    def key(self) -> LibKey:
        return LibKey(self.lib_id, self.major, self.minor)

    @property
    def frozen(self) -> bool:
        return True


class UlnConfigView(NamedTuple):
    required: frozenset
    optional: frozenset
    threshold: int


@dataclass(frozen=True)
class EmittedJob:
    dvns: tuple
    executor: str
    fee: int


def committable(attesters, cfg: UlnConfigView) -> bool:
    """All required DVNs plus at least ``threshold`` optional DVNs attested."""
    attesters = set(attesters)
    return cfg.required <= attesters and len(attesters & cfg.optional) >= cfg.threshold


class MessageLib:
    """Base library: send-side fee accounting and packet emission."""

    def __init__(self, record: MessageLibRecord):
        self.record = record

    @property
    def key(self) -> LibKey:
        return self.record.key

    def send(self, ctx, packet: Packet, options: bytes, stack) -> EmittedJob:
        self.check_version(packet.header)
        parse_options(options)

        dvns = tuple(sorted(stack.required_dvns | stack.optional_dvns))
        fee = ctx.fee_per_dvn * len(dvns) + ctx.executor_fee
        sender = packet.header.path.sender
        balance = ctx.state.balances.get(sender, 0)
        if balance < fee:
            raise errors.InsufficientBalance(balance=balance, fee=fee)

        ctx.state.balances[sender] = balance - fee
        for dvn in dvns:
            ctx.state.worker_balances[dvn] = ctx.state.worker_balances.get(dvn, 0) + ctx.fee_per_dvn
        ctx.state.worker_balances[stack.executor] = ctx.state.worker_balances.get(stack.executor, 0) + ctx.executor_fee
        return EmittedJob(dvns=dvns, executor=stack.executor, fee=fee)

    def check_version(self, header: PacketHeader):
        if header.version != self.record.major:
            raise errors.VersionMismatch(version=header.version, major=self.record.major)

    def commit(self, ctx, header: PacketHeader, payload_hash: bytes):
        ctx.state.endpoint.commit_verification(ctx, self.key, header, payload_hash)
        return CommitOutcome.COMMITTED


class UltraLightNode(MessageLib):
    """Two-tier quorum: every required DVN and ``threshold`` optional DVNs."""

    def __init__(self, record):
        super().__init__(record)
        self.attestations = {}

    def attesters(self, header: PacketHeader, payload_hash: bytes) -> frozenset:
        return frozenset(self.attestations.get((header_hash(header), payload_hash), ()))

    def verify(self, ctx, dvn: str, header: PacketHeader, payload_hash: bytes):
        key = (header_hash(header), payload_hash)
        signers = self.attestations.setdefault(key, set())
        if dvn in signers:
            raise errors.DuplicateAttestation(dvn=dvn, nonce=header.nonce)
        signers.add(dvn)
        ctx.emit('PayloadAttested', lib=self.key, dvn=dvn, nonce=header.nonce,
                 headerHash=key[0], payloadHash=payload_hash)

    def config_for(self, ctx, header: PacketHeader):
        path = header.path
        stack = ctx.state.endpoint.resolve_stack(path.receiver, path.src_eid, ctx.height)
        if stack is None:
            raise errors.NoReceiveStack(nonce=header.nonce)
        return stack.uln_config()

    def is_committable(self, ctx, header: PacketHeader, payload_hash: bytes) -> bool:
        return committable(self.attesters(header, payload_hash), self.config_for(ctx, header))

    def commit_if_ready(self, ctx, header: PacketHeader, payload_hash: bytes) -> CommitOutcome:
        self.check_version(header)
        if not self.is_committable(ctx, header, payload_hash):
            return CommitOutcome.NOT_READY
        return self.commit(ctx, header, payload_hash)


class WhitelistLib(MessageLib):
    """Placeholder verification: any allowlisted worker commits directly."""

    def whitelist_verify(self, ctx, caller: str, header: PacketHeader, payload_hash: bytes) -> CommitOutcome:
        if caller not in self.record.allowlist:
            raise errors.NotWhitelisted(caller=caller)
        self.check_version(header)
        return self.commit(ctx, header, payload_hash)


LIBRARY_CLASSES = {
    LibraryKind.ULN: UltraLightNode,
    LibraryKind.WHITELIST: WhitelistLib,
    LibraryKind.CUSTOM: MessageLib,
}


class LibraryRegistry:
    def __init__(self, admin: bytes):
        self.admin = admin
        self._records = []
        self._instances = {}

    @property
    def records(self) -> tuple:
        return tuple(self._records)

    def register(self, caller, record: MessageLibRecord) -> MessageLib:
        if caller != self.admin:
            raise errors.NotAdmin()
        if record.key in self._instances:
            raise errors.DuplicateVersion(lib=str(record.key))
        self._records.append(record)
        instance = LIBRARY_CLASSES[record.kind](record)
        self._instances[record.key] = instance
        logger.debug('Registered library %s (%s)', record.key, record.kind.value)
        return instance

    def __contains__(self, key) -> bool:
        return key in self._instances

    def library(self, key: LibKey) -> MessageLib:
        try:
            return self._instances[key]
        except KeyError:
            raise errors.UnknownLibrary(lib=str(LibKey(*key))) from None

    def receive_library_for(self, lib_id: int, version: int, preferred=()):
        """Pick the library a worker should verify a packet on.

        ``preferred`` keys (the receiver's current and previous receive
        libraries) win when they match; otherwise the highest minor of the
        matching major is used.
        """
        for key in preferred:
            if key is not None and key in self._instances and key.lib_id == lib_id and key.major == version:
                return self._instances[key]
        matches = [k for k in self._instances if k.lib_id == lib_id and k.major == version]
        if not matches:
            return None
        return self._instances[max(matches)]
