"""
Wire formats: packets, GUIDs, payload hashes and Message Options.

Packet layout (big-endian):

    version   uint8      1
    nonce     uint64     8
    srcEid    uint32     4
    sender    bytes32   32
    dstEid    uint32     4
    receiver  bytes32   32     -- 81-byte routing header ends here
    guid      bytes32   32
    message   ...

The body ``guid || message`` is the preimage of the payload hash that DVNs
attest and the endpoint stores.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Union

from . import errors

ADDRESS_SIZE = 32
HASH_SIZE = 32

HEADER_FORMAT = '>BQI32sI32s'
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
assert HEADER_SIZE == 81, f'Header size mismatch: expected 81, got {HEADER_SIZE}'

GUID_FORMAT = '>QI32sI32s'
PACKET_MIN_SIZE = HEADER_SIZE + HASH_SIZE

UINT8_MAX = 2**8 - 1
UINT16_MAX = 2**16 - 1
UINT32_MAX = 2**32 - 1
UINT64_MAX = 2**64 - 1
UINT128_MAX = 2**128 - 1

OPTIONS_TYPE_1 = 0x01
OPTIONS_TYPE_2 = 0x02
OPTIONS_TYPE_3 = 0x03
WORKER_ENTRY_FORMAT = '>BBH'
WORKER_ENTRY_SIZE = struct.calcsize(WORKER_ENTRY_FORMAT)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def address(value: Union[int, str, bytes]) -> bytes:
    """Left-pad an identity to a 32-byte address.

    Accepts an int, a hex string (with or without ``0x``) or raw bytes.
    """
    if isinstance(value, int):
        if value < 0 or value >= 2 ** (8 * ADDRESS_SIZE):
            raise errors.InvalidValue('Address out of range.', value=value)
        return value.to_bytes(ADDRESS_SIZE, 'big')
    if isinstance(value, str):
        text = value[2:] if value.startswith(('0x', '0X')) else value
        if len(text) % 2:
            text = '0' + text
        try:
            value = bytes.fromhex(text)
        except ValueError as exc:
            raise errors.InvalidValue('Address is not hex.', value=text) from exc
    if len(value) > ADDRESS_SIZE:
        raise errors.InvalidValue('Address longer than 32 bytes.', length=len(value))
    return bytes(ADDRESS_SIZE - len(value)) + bytes(value)


def _check_uint(name, value, maximum, minimum=0):
    if not isinstance(value, int) or isinstance(value, bool) or not minimum <= value <= maximum:
        raise errors.InvalidValue(f'{name} out of range.', value=value)


def _check_bytes(name, value, size):
    if not isinstance(value, bytes) or len(value) != size:
        raise errors.InvalidValue(f'{name} must be {size} bytes.')


@dataclass(frozen=True, order=True)
class Path:
    src_eid: int
    sender: bytes
    dst_eid: int
    receiver: bytes

    def __post_init__(self):
        _check_uint('srcEid', self.src_eid, UINT32_MAX, minimum=1)
        _check_uint('dstEid', self.dst_eid, UINT32_MAX, minimum=1)
        _check_bytes('sender', self.sender, ADDRESS_SIZE)
        _check_bytes('receiver', self.receiver, ADDRESS_SIZE)
        if self.src_eid == self.dst_eid:
            raise errors.InvalidValue('Cross-chain path needs distinct endpoints.', eid=self.src_eid)

    def __str__(self) -> str:
        return f'{self.src_eid}:{self.sender.hex()}->{self.dst_eid}:{self.receiver.hex()}'


@dataclass(frozen=True)
class PacketHeader:
    version: int
    nonce: int
    path: Path
    guid: bytes

    def __post_init__(self):
        _check_uint('version', self.version, UINT8_MAX)
        _check_uint('nonce', self.nonce, UINT64_MAX, minimum=1)
        _check_bytes('guid', self.guid, HASH_SIZE)


@dataclass(frozen=True)
class Packet:
    header: PacketHeader
    message: bytes = b''

    @property
    def guid(self) -> bytes:
        return self.header.guid

    @property
    def nonce(self) -> int:
        return self.header.nonce

    @property
    def path(self) -> Path:
        return self.header.path

    @property
    def payload_hash(self) -> bytes:
        return payload_hash(self.header.guid, self.message)


def compute_guid(nonce: int, path: Path) -> bytes:
    _check_uint('nonce', nonce, UINT64_MAX, minimum=1)
    preimage = struct.pack(GUID_FORMAT, nonce, path.src_eid, path.sender, path.dst_eid, path.receiver)
    return sha256(preimage)


def payload_hash(guid: bytes, message: bytes) -> bytes:
    return sha256(guid + message)


def make_header(version: int, nonce: int, path: Path) -> PacketHeader:
    return PacketHeader(version=version, nonce=nonce, path=path, guid=compute_guid(nonce, path))


def encode_header(header: PacketHeader) -> bytes:
    p = header.path
    return struct.pack(HEADER_FORMAT, header.version, header.nonce, p.src_eid, p.sender, p.dst_eid, p.receiver)


def header_hash(header: PacketHeader) -> bytes:
    return sha256(encode_header(header))


def encode_packet(packet: Packet) -> bytes:
    return encode_header(packet.header) + packet.header.guid + packet.message


def decode_packet(data: bytes) -> Packet:
    if len(data) < PACKET_MIN_SIZE:
        raise errors.TooShort(length=len(data), minimum=PACKET_MIN_SIZE)
    version, nonce, src_eid, sender, dst_eid, receiver = struct.unpack_from(HEADER_FORMAT, data)
    path = Path(src_eid, sender, dst_eid, receiver)
    guid = bytes(data[HEADER_SIZE:PACKET_MIN_SIZE])
    if nonce < 1 or guid != compute_guid(nonce, path):
        raise errors.GuidMismatch(nonce=nonce)
    header = PacketHeader(version=version, nonce=nonce, path=path, guid=guid)
    return Packet(header=header, message=bytes(data[PACKET_MIN_SIZE:]))


# Message Options

@dataclass(frozen=True)
class ExecutorGasOptions:
    """Type 1: execution gas for a single executor."""
    execution_gas: int

    def __post_init__(self):
        _check_uint('executionGas', self.execution_gas, UINT128_MAX)


@dataclass(frozen=True)
class NativeDropOptions:
    """Type 2: execution gas plus a native token drop to ``receiver``."""
    execution_gas: int
    native_drop: int
    receiver: bytes

    def __post_init__(self):
        _check_uint('executionGas', self.execution_gas, UINT128_MAX)
        _check_uint('nativeDropAmount', self.native_drop, UINT128_MAX)
        _check_bytes('receiver', self.receiver, ADDRESS_SIZE)


@dataclass(frozen=True)
class WorkerOption:
    worker_id: int
    op_type: int
    command: bytes = b''

    def __post_init__(self):
        _check_uint('workerId', self.worker_id, UINT8_MAX)
        _check_uint('opType', self.op_type, UINT8_MAX)
        if len(self.command) > UINT16_MAX:
            raise errors.InvalidValue('Worker command longer than 65535 bytes.', length=len(self.command))


@dataclass(frozen=True)
class WorkerOptions:
    """Type 3: arguments for an arbitrary set of workers."""
    entries: tuple = field(default_factory=tuple)

    def for_worker(self, worker_id: int):
        return [e for e in self.entries if e.worker_id == worker_id]


MessageOptions = Union[ExecutorGasOptions, NativeDropOptions, WorkerOptions]


def encode_options(options: MessageOptions) -> bytes:
    if isinstance(options, ExecutorGasOptions):
        return bytes([OPTIONS_TYPE_1]) + options.execution_gas.to_bytes(16, 'big')
    if isinstance(options, NativeDropOptions):
        return (bytes([OPTIONS_TYPE_2]) + options.execution_gas.to_bytes(16, 'big')
                + options.native_drop.to_bytes(16, 'big') + options.receiver)
    if isinstance(options, WorkerOptions):
        out = bytearray([OPTIONS_TYPE_3])
        for entry in options.entries:
            out += struct.pack(WORKER_ENTRY_FORMAT, entry.worker_id, entry.op_type, len(entry.command))
            out += entry.command
        return bytes(out)
    raise errors.UnknownOptionType(kind=type(options).__name__)


def _fixed(data: bytes, size: int) -> bytes:
    if len(data) < size:
        raise errors.Truncated(expected=size, got=len(data))
    if len(data) > size:
        raise errors.LengthMismatch('Trailing bytes after options.', expected=size, got=len(data))
    return data


def decode_options(data: bytes) -> MessageOptions:
    if not data:
        raise errors.Truncated('Empty options.')
    kind, body = data[0], bytes(data[1:])
    if kind == OPTIONS_TYPE_1:
        body = _fixed(body, 16)
        return ExecutorGasOptions(int.from_bytes(body, 'big'))
    if kind == OPTIONS_TYPE_2:
        body = _fixed(body, 64)
        return NativeDropOptions(
            execution_gas=int.from_bytes(body[:16], 'big'),
            native_drop=int.from_bytes(body[16:32], 'big'),
            receiver=body[32:],
        )
    if kind == OPTIONS_TYPE_3:
        entries = []
        offset = 0
        while offset < len(body):
            if len(body) - offset < WORKER_ENTRY_SIZE:
                raise errors.Truncated('Worker entry header cut short.', offset=offset)
            worker_id, op_type, length = struct.unpack_from(WORKER_ENTRY_FORMAT, body, offset)
            offset += WORKER_ENTRY_SIZE
            command = body[offset:offset + length]
            if len(command) != length:
                raise errors.LengthMismatch(declared=length, got=len(command))
            offset += length
            entries.append(WorkerOption(worker_id, op_type, command))
        return WorkerOptions(tuple(entries))
    raise errors.UnknownOptionType(kind=kind)


def parse_options(data: bytes):
    """Decode ``data`` when present; empty options mean no worker arguments."""
    return decode_options(data) if data else None
