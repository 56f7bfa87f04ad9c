"""
Packet lifecycle as observed from outside the chains.

Sent -> (Committable) -> Verified -> Received, with the defensive branches
Nilified, Cleared and Skipped. Burnt entries read as Cleared: both remove a
hash without executing the receiver.
"""

import enum
from typing import Optional

from .codec import Path, decode_packet
from .endpoint import NIL
from .msglib import UltraLightNode, committable
from .simchain import Network


class PacketState(enum.Enum):
    UNSENT = 'Unsent'
    SENT = 'Sent'
    COMMITTABLE = 'Committable'
    VERIFIED = 'Verified'
    NILIFIED = 'Nilified'
    RECEIVED = 'Received'
    CLEARED = 'Cleared'
    SKIPPED = 'Skipped'

    @classmethod
    def parse(cls, text: str) -> 'PacketState':
        for state in cls:
            if state.value.lower() == text.lower():
                return state
        raise ValueError(f'Unknown packet state: {text}')


CONSUMING_EVENTS = {
    'PacketDelivered': PacketState.RECEIVED,
    'PacketCleared': PacketState.CLEARED,
    'PacketBurnt': PacketState.CLEARED,
    'PacketSkipped': PacketState.SKIPPED,
}


def sent_event(network: Network, path: Path, nonce: int):
    for event in network.chain(path.src_eid).events:
        if event.name == 'PacketSent' and event.fields['nonce'] == nonce:
            packet = decode_packet(event.fields['packet'])
            if packet.path == path:
                return event, packet
    return None, None


def _consumed_as(network: Network, path: Path, nonce: int) -> Optional[PacketState]:
    state = None
    for event in network.chain(path.dst_eid).events:
        kind = CONSUMING_EVENTS.get(event.name)
        if kind is not None and event.fields.get('path') == path and event.fields.get('nonce') == nonce:
            state = kind
    return state


def packet_state(network: Network, path: Path, nonce: int) -> PacketState:
    src = network.chain(path.src_eid).endpoint
    channel = src.channels.get(path)
    if channel is None or nonce > channel.outbound_nonce:
        return PacketState.UNSENT

    dst = network.chain(path.dst_eid)
    entry = dst.endpoint.verified_hash(path, nonce)
    if entry == NIL:
        return PacketState.NILIFIED
    if entry is not None:
        return PacketState.VERIFIED
    if nonce <= dst.endpoint.lazy_inbound_nonce(path):
        return _consumed_as(network, path, nonce) or PacketState.SKIPPED

    event, packet = sent_event(network, path, nonce)
    if packet is None:
        return PacketState.SENT
    stack = dst.endpoint.resolve_stack(path.receiver, path.src_eid, dst.height)
    if stack is None:
        return PacketState.SENT
    preferred = (stack.receive_library, stack.prev_receive_library)
    library = dst.registry.receive_library_for(event.fields['lib'].lib_id, packet.header.version, preferred)
    if isinstance(library, UltraLightNode):
        if committable(library.attesters(packet.header, packet.payload_hash), stack.uln_config()):
            return PacketState.COMMITTABLE
    return PacketState.SENT
