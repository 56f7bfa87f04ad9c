"""
Example omnichain applications.

``TokenBridge`` locks tokens on the source chain and mints them on the
destination; its Pre-Crime invariant is that total minted supply never
exceeds total locked liquidity across all peers. ``SwapPool`` is a compose
target that swaps bridged tokens at a fixed ratio.
"""

import logging
import struct
from dataclasses import dataclass, field

from . import errors
from .codec import Path

logger = logging.getLogger(__name__)

OP_MINT = 0x01
BRIDGE_PAYLOAD_FORMAT = '>B16sB'
BRIDGE_PAYLOAD_SIZE = struct.calcsize(BRIDGE_PAYLOAD_FORMAT)
COMPOSE_INDEX = 0


def encode_bridge_payload(amount: int, compose: bool = False) -> bytes:
    return struct.pack(BRIDGE_PAYLOAD_FORMAT, OP_MINT, amount.to_bytes(16, 'big'), 1 if compose else 0)


def decode_bridge_payload(message: bytes):
    if len(message) != BRIDGE_PAYLOAD_SIZE:
        raise errors.MalformedPayload(length=len(message))
    op, amount, compose = struct.unpack(BRIDGE_PAYLOAD_FORMAT, message)
    if op != OP_MINT or compose not in (0, 1):
        raise errors.MalformedPayload(op=op, compose=compose)
    return int.from_bytes(amount, 'big'), bool(compose)


def bridge_invariant(snapshots) -> bool:
    """Σminted ≤ Σlocked over peer snapshots of ``{'locked': .., 'minted': ..}``."""
    snapshots = list(snapshots)
    return sum(s['minted'] for s in snapshots) <= sum(s['locked'] for s in snapshots)


@dataclass
class OApp:
    name: str
    eid: int
    address: bytes
    peers: dict = field(default_factory=dict)
    received: int = 0

    kind = 'plain'

    def set_peer(self, eid: int, address: bytes):
        self.peers[eid] = address

    def path_to(self, dst_eid: int) -> Path:
        try:
            return Path(self.eid, self.address, dst_eid, self.peers[dst_eid])
        except KeyError:
            raise errors.UnknownPeer(eid=dst_eid) from None

    def path_from(self, src_eid: int) -> Path:
        try:
            return Path(src_eid, self.peers[src_eid], self.eid, self.address)
        except KeyError:
            raise errors.UnknownPeer(eid=src_eid) from None

    def send(self, ctx, dst_eid: int, message: bytes, options: bytes = b''):
        return ctx.endpoint.send(ctx, self.path_to(dst_eid), message, options)

    def lz_receive(self, ctx, origin: Path, nonce: int, guid: bytes, message: bytes, extra_data: bytes):
        if self.peers.get(origin.src_eid) != origin.sender:
            raise errors.UnknownPeer(eid=origin.src_eid)
        self.received += 1

    def lz_compose(self, ctx, sender: bytes, guid: bytes, index: int, message: bytes, extra_data: bytes):
        raise errors.AppAbort('This OApp does not accept compose calls.')

    def balances(self) -> dict:
        return {'received': self.received}

    def precrime_snapshot(self) -> dict:
        return self.balances()

    def check_invariant(self, snapshots) -> bool:
        return True


@dataclass
class TokenBridge(OApp):
    locked: int = 0
    minted: int = 0
    available: int = 0
    compose_target: bytes = b''

    kind = 'bridge'

    def bridge_send(self, ctx, dst_eid: int, amount: int, compose: bool = False, options: bytes = b''):
        if not 0 <= amount < 2**128:
            raise errors.InvalidValue('Amount out of range.', amount=amount)
        if self.available < amount:
            raise errors.InsufficientFunds(available=self.available, amount=amount)
        self.available -= amount
        self.locked += amount
        return self.send(ctx, dst_eid, encode_bridge_payload(amount, compose), options)

    def lz_receive(self, ctx, origin, nonce, guid, message, extra_data):
        if self.peers.get(origin.src_eid) != origin.sender:
            raise errors.UnknownPeer(eid=origin.src_eid)
        amount, compose = decode_bridge_payload(message)
        self.minted += amount
        if compose:
            if not self.compose_target:
                raise errors.AppAbort('Compose requested without a compose target.')
            ctx.endpoint.send_compose(ctx, self.address, self.compose_target, guid, COMPOSE_INDEX,
                                      amount.to_bytes(16, 'big'))

    def balances(self) -> dict:
        return {'locked': self.locked, 'minted': self.minted, 'available': self.available}

    def precrime_snapshot(self) -> dict:
        return {'locked': self.locked, 'minted': self.minted}

    def check_invariant(self, snapshots) -> bool:
        return bridge_invariant(snapshots)


@dataclass
class SwapPool(OApp):
    reserve_in: int = 0
    reserve_out: int = 0
    ratio_num: int = 1
    ratio_den: int = 1
    swapped_out: int = 0

    kind = 'swap'

    def __post_init__(self):
        if self.ratio_num < 1 or self.ratio_den < 1:
            raise errors.InvalidValue('Swap ratio must be positive.')

    def quote(self, amount: int) -> int:
        return amount * self.ratio_num // self.ratio_den

    def lz_compose(self, ctx, sender, guid, index, message, extra_data):
        if len(message) != 16:
            raise errors.MalformedPayload(length=len(message))
        amount = int.from_bytes(message, 'big')
        out = self.quote(amount)
        if out > self.reserve_out:
            raise errors.InsufficientReserves(needed=out, reserve=self.reserve_out)
        self.reserve_in += amount
        self.reserve_out -= out
        self.swapped_out += out

    def top_up(self, amount: int):
        if amount < 0:
            raise errors.InvalidValue('Top-up cannot be negative.', amount=amount)
        self.reserve_out += amount

    def balances(self) -> dict:
        return {'reserve_in': self.reserve_in, 'reserve_out': self.reserve_out, 'swapped_out': self.swapped_out}


APP_KINDS = {cls.kind: cls for cls in (OApp, TokenBridge, SwapPool)}
