"""Builders shared by the protocol tests."""

from protocol.codec import Path, address, make_header, payload_hash
from protocol.conf import sim_settings
from protocol.endpoint import Endpoint, SecurityStack
from protocol.msglib import LibKey, LibraryKind, LibraryRegistry, MessageLibRecord
from protocol.simchain import ChainConfig, ChainState, Network, TxContext

SENDER = address(0x51)
RECEIVER = address(0x52)
PATH = Path(1, SENDER, 2, RECEIVER)
ULN = LibKey(1, 1, 0)
ULN_V2 = LibKey(1, 2, 0)
WHITELIST = LibKey(2, 1, 0)


def admin() -> bytes:
    return bytes.fromhex(sim_settings.REGISTRY_ADMIN)


def make_stack(required=('D1',), optional=(), threshold=0, executor='E', lib=ULN, **extra) -> SecurityStack:
    return SecurityStack(send_library=lib, receive_library=lib, required_dvns=frozenset(required),
                         optional_dvns=frozenset(optional), optional_threshold=threshold, executor=executor, **extra)


def chain_state(eid, endpoint_class=Endpoint, libraries=(ULN,)) -> ChainState:
    state = ChainState(endpoint=endpoint_class(eid), registry=LibraryRegistry(admin()))
    for key in libraries:
        kind = LibraryKind.WHITELIST if key == WHITELIST else LibraryKind.ULN
        state.registry.register(admin(), MessageLibRecord(*key, kind=kind, allowlist=frozenset({'W'})))
    return state


class Context(TxContext):
    """A transaction context that keeps the events it emits."""

    def __init__(self, state, caller, height=1, budget=None, config=None):
        self.events = []
        super().__init__(state, caller, height=height, budget=budget, config=config,
                         sink=lambda name, fields: self.events.append((name, fields)))

    @property
    def names(self):
        return [name for name, _ in self.events]


def configured(eid, oapp, remote, stack=None, **kwargs) -> ChainState:
    """Chain state where ``oapp`` has ``stack`` towards ``remote`` from height 1."""
    state = chain_state(eid, **kwargs)
    state.endpoint.set_security_stack(Context(state, oapp, height=0), oapp, remote, stack or make_stack())
    state.balances[oapp] = 1_000_000
    return state


def receiving_state(stack=None, **kwargs) -> ChainState:
    return configured(2, RECEIVER, 1, stack, **kwargs)


def header(nonce, path=PATH, version=1):
    return make_header(version, nonce, path)


def digest(nonce, message=b'', path=PATH) -> bytes:
    return payload_hash(header(nonce, path).guid, message)


def commit(state, nonce, message=b'', height=1, lib=ULN, value=None, path=PATH):
    """Commit ``nonce`` as the receive library would; ``value`` overrides the honest hash."""
    ctx = Context(state, 'lib', height=height)
    state.endpoint.commit_verification(ctx, lib, header(nonce, path), value or digest(nonce, message, path))
    return ctx


def deliver(state, nonce, message=b'', budget=None, caller='anyone', path=PATH):
    ctx = Context(state, caller, budget=budget)
    return state.endpoint.lz_receive(ctx, path, nonce, header(nonce, path).guid, message)


def chain_config(eid=2, **kwargs) -> ChainConfig:
    return ChainConfig(eid=eid, **kwargs)


def network(**config) -> Network:
    """Chains 1 and 2 with no OApps configured yet."""
    net = Network(admin())
    net.add_chain(ChainConfig(eid=1, **config))
    net.add_chain(ChainConfig(eid=2, **config))
    return net


def configure(net, stack=None):
    """Register the ULN and give SENDER and RECEIVER ``stack`` towards each other, then advance."""
    for eid, oapp, remote in ((1, SENDER, 2), (2, RECEIVER, 1)):
        chain = net.chain(eid)
        chain.call(admin(), lambda ctx: ctx.state.registry.register(ctx.caller, MessageLibRecord(*ULN)))
        chain.call(oapp, lambda ctx, o=oapp, r=remote: ctx.endpoint.set_security_stack(ctx, o, r,
                                                                                     stack or make_stack()))
        chain.state.balances[oapp] = 1_000_000
        chain.advance()
