"""
Exception hierarchy for the simulated protocol.

Every failure raised by the codec, the endpoint, message libraries, the
simulated chains and the example OApps derives from ``ProtocolError``. The
``code`` of an error is its class name; it is what transaction receipts and
trace lines report.
"""


class ProtocolError(Exception):
    default_detail = 'Protocol error.'

    def __init__(self, detail=None, **context):
        self.detail = detail or self.default_detail
        self.context = context
        super().__init__(self.detail)

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extra = ' '.join(f'{k}={v}' for k, v in self.context.items())
        return f'{self.detail} ({extra})'


# Codec

class CodecError(ProtocolError):
    default_detail = 'Malformed encoding.'


class TooShort(CodecError):
    default_detail = 'Input shorter than the fixed packet layout.'


class GuidMismatch(CodecError):
    default_detail = 'Packet guid does not match its nonce and path.'


class UnknownOptionType(CodecError):
    default_detail = 'Unknown message options type.'


class Truncated(CodecError):
    default_detail = 'Options encoding ends early.'


class LengthMismatch(CodecError):
    default_detail = 'Declared length does not match the encoded bytes.'


class InvalidValue(CodecError):
    default_detail = 'Value out of range for its field.'


# Channel (endpoint)

class ChannelError(ProtocolError):
    default_detail = 'Channel operation rejected.'


class NotSender(ChannelError):
    default_detail = 'Caller is not the path sender.'


class PayloadTooLarge(ChannelError):
    default_detail = 'Payload exceeds the chain maximum.'


class NoSendLibrary(ChannelError):
    default_detail = 'No send library configured for this path.'


class NoReceiveStack(ChannelError):
    default_detail = 'Receiver has no Security Stack for this path.'


class NotReceiveLibrary(ChannelError):
    default_detail = 'Library is not authorized to commit for this receiver.'


class StalePacket(ChannelError):
    default_detail = 'Nonce is at or below the lazy inbound nonce.'


class Censorship(ChannelError):
    default_detail = 'A preceding nonce is not verified.'


class HashMismatch(ChannelError):
    default_detail = 'Payload hash does not match the committed hash.'


class AlreadyDelivered(ChannelError):
    default_detail = 'Nonce already delivered, cleared or skipped.'


class Nilified(ChannelError):
    default_detail = 'Nonce has been nilified.'


class NotReceiver(ChannelError):
    default_detail = 'Caller is not the path receiver.'


class WrongNonce(ChannelError):
    default_detail = 'Only the inbound nonce + 1 can be skipped.'


class NoEntry(ChannelError):
    default_detail = 'No verified entry at this nonce.'


class NonceAhead(ChannelError):
    default_detail = 'Nonce is above the lazy inbound nonce.'


class DuplicateCompose(ChannelError):
    default_detail = 'Compose message already stored under this key.'


class NoSuchCompose(ChannelError):
    default_detail = 'No compose message stored under this key.'


class AlreadyExecuted(ChannelError):
    default_detail = 'Compose message already executed.'


class NotInDelivery(ChannelError):
    default_detail = 'sendCompose is only callable from a delivery or compose callback.'


# Configuration

class ConfigError(ProtocolError):
    default_detail = 'Configuration rejected.'


class NotOwner(ConfigError):
    default_detail = 'Caller does not own this OApp configuration.'


class NotAdmin(ConfigError):
    default_detail = 'Caller is not the registry admin.'


class InvalidStack(ConfigError):
    default_detail = 'Security Stack violates its invariants.'


class UnknownLibrary(ConfigError):
    default_detail = 'Library version is not registered.'


class UnknownWorker(ConfigError):
    default_detail = 'No worker with this id.'


# Message libraries

class LibraryError(ProtocolError):
    default_detail = 'Message library rejected the call.'


class DuplicateVersion(LibraryError):
    default_detail = 'Library version already registered.'


class InsufficientBalance(LibraryError):
    default_detail = 'Sender cannot pay the worker fees.'


class DuplicateAttestation(LibraryError):
    default_detail = 'DVN already attested this payload hash.'


class NotWhitelisted(LibraryError):
    default_detail = 'Caller is not on the library allowlist.'


class VersionMismatch(LibraryError):
    default_detail = 'Packet version does not match the library major version.'


class NotUln(LibraryError):
    default_detail = 'Library does not accept DVN attestations.'


# Chains

class ChainError(ProtocolError):
    default_detail = 'Chain rejected the request.'


class UnknownChain(ChainError):
    default_detail = 'No chain with this endpoint id.'


class OutOfBudget(ChainError):
    default_detail = 'Transaction exceeded the iteration budget.'


class RangeAhead(ChainError):
    default_detail = 'Requested range is beyond the chain head.'


class InvalidAdvance(ChainError):
    default_detail = 'Chains advance by at least one block.'


# OApp callbacks

class AppAbort(ProtocolError):
    default_detail = 'OApp callback aborted.'


class MalformedPayload(AppAbort):
    default_detail = 'Payload does not decode.'


class UnknownPeer(AppAbort):
    default_detail = 'Message origin is not a registered peer.'


class InsufficientFunds(AppAbort):
    default_detail = 'Not enough tokens to lock.'


class InsufficientReserves(AppAbort):
    default_detail = 'Pool reserves cannot cover the swap.'
