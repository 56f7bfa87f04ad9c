"""
Deterministic scenario runner.

Setup transactions run at height 0 on every chain, then every chain advances
one block so that Security Stacks configured at setup are in effect from the
first tick. Each tick then:

1. applies due faults and the timeline commands for the tick, in file order;
2. advances every chain whose block time divides the tick;
3. steps the workers in registration order.

Assertions are timeline commands, so ``at 5 assert ...`` sees the state left
by tick 4. The global bridge invariant is sampled at the end of every tick.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional

from protocol import errors
from protocol.codec import Path
from protocol.conf import sim_settings
from protocol.lifecycle import packet_state, sent_event
from protocol.msglib import CommitOutcome, UltraLightNode, WhitelistLib
from protocol.oapps import APP_KINDS, COMPOSE_INDEX, TokenBridge, bridge_invariant
from protocol.simchain import Network, Transaction
from protocol.workers import (
    Dvn, DvnSpec, Executor, ExecutorSpec, Precrime, PrecrimeSpec, WorkerSet, apply_fault,
)

from .errors import ScenarioError
from .fuzz import endpoint_class
from .scenario import Scenario, parse_scenario

logger = logging.getLogger(__name__)

APPLIED = 'Applied'


@dataclass
class AssertionResult:
    line: int
    tick: int
    predicate: str
    passed: bool
    detail: str = ''


@dataclass
class RunResult:
    trace: str
    seed: int
    ticks: int
    assertions: list = field(default_factory=list)
    journal: list = field(default_factory=list)
    invariant_violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.trace.encode()).hexdigest()

    @property
    def failures(self) -> list:
        return [a for a in self.assertions if not a.passed]


class ScenarioRunner:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.admin = bytes.fromhex(sim_settings.REGISTRY_ADMIN)
        self.network = Network(self.admin, endpoint_class(scenario.mutant))
        self.workers = WorkerSet()
        self.assertions = []
        self.last_outcome = None
        self.invariant_violations = []

    # Setup

    def _setup_tx(self, eid, caller, action, label, line):
        receipt = self.network.submit_tx(eid, Transaction(caller, action, label))
        if not receipt.applied:
            raise ScenarioError(f'{label} failed: {receipt.reason}', line)
        return receipt

    def setup(self):
        scenario = self.scenario
        for config in scenario.chains.values():
            self.network.add_chain(config)

        for decl in scenario.libraries:
            for eid in decl.chains or scenario.chains:
                self._setup_tx(eid, self.admin,
                               lambda ctx, record=decl.record: ctx.state.registry.register(ctx.caller, record),
                               f'register {decl.record.key}', decl.line)

        for decl in scenario.oapps.values():
            app = APP_KINDS[decl.kind](name=decl.name, eid=decl.eid, address=decl.address, **decl.attrs)
            if decl.compose:
                app.compose_target = scenario.oapps[decl.compose].address
            self.network.chain(decl.eid).deploy(app, decl.balance)

        for a, b in scenario.peers:
            first, second = scenario.oapps[a], scenario.oapps[b]
            self.app(first).set_peer(second.eid, second.address)
            self.app(second).set_peer(first.eid, first.address)

        precrime_ids = {spec.worker_id for spec in scenario.workers if isinstance(spec, PrecrimeSpec)}
        for spec in scenario.workers:
            if isinstance(spec, DvnSpec):
                self.workers.add(Dvn(spec, self.network, seed=self.seed))
            elif isinstance(spec, ExecutorSpec):
                self.workers.add(Executor(spec, self.network, precrime_ids))
            else:
                self.workers.add(Precrime(spec, self.network))

        for decl in scenario.defaults:
            self._setup_tx(decl.eid, self.admin,
                           lambda ctx, d=decl: ctx.endpoint.set_default_stack(ctx, d.remote, d.stack),
                           f'default stack {decl.eid}->{decl.remote}', decl.line)
        for decl in scenario.stacks:
            owner = scenario.oapps[decl.owner]
            self._setup_tx(owner.eid, owner.address,
                           lambda ctx, d=decl: ctx.endpoint.set_security_stack(ctx, ctx.caller, d.remote, d.stack),
                           f'stack {decl.owner}', decl.line)
        for name, remote in scenario.optins:
            owner = scenario.oapps[name]
            self._setup_tx(owner.eid, owner.address,
                           lambda ctx, r=remote: ctx.endpoint.opt_in_defaults(ctx, ctx.caller, r),
                           f'optin {name}', owner.line)

        for eid in sorted(self.network.chains):
            self.network.advance(eid)

    def app(self, decl):
        """The live OApp object; re-read after every transaction."""
        return self.network.chain(decl.eid).apps[decl.address]

    # Main loop

    def run(self) -> RunResult:
        logger.info('Running scenario with seed %s for %s ticks', self.seed, self.scenario.end_tick)
        self.setup()
        faults = self.scenario.faults
        timeline = list(self.scenario.timeline)
        cursor = 0
        end = self.scenario.end_tick

        for tick in range(1, end + 1):
            self.network.tick = tick
            apply_fault(faults, self.workers.workers, tick, self.network)
            while cursor < len(timeline) and timeline[cursor].tick == tick:
                self.dispatch(timeline[cursor])
                cursor += 1
            for _, chain in sorted(self.network.chains.items()):
                if tick % chain.config.block_time_ticks == 0:
                    chain.advance()
            self.workers.step(tick)
            self.sample_invariant(tick)

        result = RunResult(trace=self.network.trace(), seed=self.seed, ticks=end, assertions=self.assertions,
                           journal=list(self.network.journal), invariant_violations=self.invariant_violations)
        logger.info('Scenario finished: %s/%s assertions passed, trace %s',
                    len(self.assertions) - len(result.failures), len(self.assertions), result.digest[:12])
        return result

    def invariant_ok(self) -> bool:
        bridges = [app for chain in self.network.chains.values() for app in chain.apps.values()
                   if isinstance(app, TokenBridge)]
        return not bridges or bridge_invariant(app.precrime_snapshot() for app in bridges)

    def sample_invariant(self, tick):
        if not self.invariant_ok():
            self.invariant_violations.append(tick)

    # Timeline

    def dispatch(self, event):
        if event.command == 'assert':
            self.evaluate(event)
            return
        if event.command == 'fault':
            return
        handler = getattr(self, f'do_{event.command}')
        try:
            outcome = handler(event)
        except errors.ProtocolError as exc:
            outcome = exc.code
        self.last_outcome = outcome
        self.network.note('SCENARIO', event.command, line=event.line, result=outcome)

    def _submit(self, eid, caller, action, label) -> str:
        receipt = self.network.submit_tx(eid, Transaction(caller, action, label))
        if not receipt.applied:
            return receipt.reason
        if receipt.result is CommitOutcome.NOT_READY:
            return 'NotReady'
        return APPLIED

    def _owner(self, event):
        # assertions carry the predicate first
        name = event.args[1] if event.command == 'assert' else event.args[0]
        return self.scenario.oapps[name]

    def _path(self, event) -> Path:
        return self.app(self._owner(event)).path_from(event.kwargs['from'])

    def do_send(self, event):
        decl, kw = self._owner(event), event.kwargs
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.state.apps[decl.address].send(
            ctx, kw['dst'], kw['payload'], kw['options']), 'send')

    def do_bridge(self, event):
        decl, kw = self._owner(event), event.kwargs
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.state.apps[decl.address].bridge_send(
            ctx, kw['dst'], kw['amount'], kw['compose'], kw['options']), 'bridge')

    def do_advance(self, event):
        self.network.advance(event.kwargs['eid'], event.kwargs['blocks'])
        return APPLIED

    def do_recvlib(self, event):
        decl, kw = self._owner(event), event.kwargs
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.set_receive_library_with_grace(
            ctx, ctx.caller, kw['remote'], kw['lib'], kw['grace']), 'recvlib')

    def do_sendlib(self, event):
        decl, kw = self._owner(event), event.kwargs
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.set_send_library(
            ctx, ctx.caller, kw['remote'], kw['lib']), 'sendlib')

    def do_stack(self, event):
        decl, kw = self._owner(event), event.kwargs
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.set_security_stack(
            ctx, ctx.caller, kw['remote'], kw['stack']), 'stack')

    def do_topup(self, event):
        decl, amount = self._owner(event), event.kwargs['amount']
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.state.apps[decl.address].top_up(amount),
                            'topup')

    def do_skip(self, event):
        decl, path, nonce = self._owner(event), self._path(event), event.kwargs['nonce']
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.skip(ctx, path, nonce), 'skip')

    def _packet(self, path, nonce):
        _, packet = sent_event(self.network, path, nonce)
        if packet is None:
            raise errors.NoEntry('Packet was never sent.', nonce=nonce)
        return packet

    def do_clear(self, event):
        decl, path, nonce = self._owner(event), self._path(event), event.kwargs['nonce']
        packet = self._packet(path, nonce)
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.clear(
            ctx, path, nonce, packet.guid, packet.message), 'clear')

    def _hash_for(self, event, path, nonce):
        if 'hash' in event.kwargs:
            return event.kwargs['hash']
        current = self.network.chain(path.dst_eid).endpoint.verified_hash(path, nonce)
        if current is not None:
            return current
        return self._packet(path, nonce).payload_hash

    def do_nilify(self, event):
        decl, path, nonce = self._owner(event), self._path(event), event.kwargs['nonce']
        digest = self._hash_for(event, path, nonce)
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.nilify(ctx, path, nonce, digest),
                            'nilify')

    def do_burn(self, event):
        decl, path, nonce = self._owner(event), self._path(event), event.kwargs['nonce']
        digest = self._hash_for(event, path, nonce)
        return self._submit(decl.eid, decl.address, lambda ctx: ctx.endpoint.burn(ctx, path, nonce, digest),
                            'burn')

    def do_deliver(self, event):
        path, nonce = self._path(event), event.kwargs['nonce']
        packet = self._packet(path, nonce)
        caller = event.kwargs.get('as', 'user')
        return self._submit(path.dst_eid, caller, lambda ctx: ctx.endpoint.lz_receive(
            ctx, path, nonce, packet.guid, packet.message), 'deliver')

    def do_commit(self, event):
        path, nonce = self._path(event), event.kwargs['nonce']
        sent, packet = sent_event(self.network, path, nonce)
        if packet is None:
            raise errors.NoEntry('Packet was never sent.', nonce=nonce)
        digest = event.kwargs.get('hash', packet.payload_hash)
        caller = event.kwargs.get('as', 'user')
        chain = self.network.chain(path.dst_eid)
        stack = chain.endpoint.resolve_stack(path.receiver, path.src_eid, chain.height)
        preferred = (stack.receive_library, stack.prev_receive_library) if stack else ()
        library = chain.registry.receive_library_for(sent.fields['lib'].lib_id, packet.header.version, preferred)
        if library is None:
            raise errors.UnknownLibrary(lib=str(sent.fields['lib']))
        key, header = library.key, packet.header
        if isinstance(library, UltraLightNode):
            return self._submit(path.dst_eid, caller, lambda ctx: ctx.state.registry.library(key).commit_if_ready(
                ctx, header, digest), 'commit')
        if isinstance(library, WhitelistLib):
            return self._submit(path.dst_eid, caller, lambda ctx: ctx.state.registry.library(key).whitelist_verify(
                ctx, ctx.caller, header, digest), 'commit')
        raise errors.NotUln(lib=str(key))

    # Assertions

    def evaluate(self, event):
        predicate = event.args[0]
        try:
            passed, detail = getattr(self, f'check_{predicate.replace("-", "_")}')(event)
        except errors.ProtocolError as exc:
            passed, detail = False, exc.code
        result = AssertionResult(event.line, event.tick, event.text, passed, detail)
        self.assertions.append(result)
        self.network.note('ASSERT', predicate, line=event.line, result='pass' if passed else 'fail')
        if not passed:
            logger.info('Assertion on line %s failed: %s', event.line, detail)

    @staticmethod
    def _compare(actual, expected):
        return actual == expected, f'expected {expected}, got {actual}'

    def check_state(self, event):
        state = packet_state(self.network, self._path(event), event.kwargs['nonce'])
        return self._compare(state.value, event.kwargs['is'].value)

    def check_compose(self, event):
        decl = self._owner(event)
        _, packet = sent_event(self.network, self._path(event), event.kwargs['nonce'])
        if packet is None:
            return False, 'packet was never sent'
        target = self.scenario.oapps[decl.compose]
        state = self.network.chain(decl.eid).endpoint.compose_state(decl.address, target.address, packet.guid,
                                                                    COMPOSE_INDEX)
        return self._compare(state.value if state else 'Absent', event.kwargs['is'])

    def check_delivered_count(self, event):
        decl = self._owner(event)
        source = event.kwargs.get('from')
        count = sum(
            1 for e in self.network.chain(decl.eid).events
            if e.name == 'PacketDelivered' and e.fields['path'].receiver == decl.address
            and (source is None or e.fields['path'].src_eid == source)
        )
        return self._compare(count, event.kwargs['is'])

    def check_balance(self, event):
        decl, name = self._owner(event), event.args[2]
        if name == 'native':
            actual = self.network.chain(decl.eid).state.balances.get(decl.address, 0)
        else:
            balances = self.app(decl).balances()
            if name not in balances:
                return False, f'{decl.name} has no balance {name!r}'
            actual = balances[name]
        return self._compare(actual, event.kwargs['is'])

    def check_trace_contains(self, event):
        text = event.kwargs['text']
        return text in self.network.trace(), f'trace does not contain {text!r}'

    def check_invariant_holds(self, event):
        now = self.invariant_ok()
        if 'always' in event.args:
            return now and not self.invariant_violations, f'violated at ticks {self.invariant_violations}'
        return now, f'violated at tick {event.tick}'

    def check_lazy(self, event):
        path = self._path(event)
        return self._compare(self.network.chain(path.dst_eid).endpoint.lazy_inbound_nonce(path), event.kwargs['is'])

    def check_inbound(self, event):
        path = self._path(event)
        return self._compare(self.network.chain(path.dst_eid).endpoint.get_inbound_nonce(path), event.kwargs['is'])

    def check_outcome(self, event):
        return self._compare(self.last_outcome, event.kwargs['is'])


def run_scenario(scenario, seed: Optional[int] = None) -> RunResult:
    if isinstance(scenario, str):
        scenario = parse_scenario(scenario)
    return ScenarioRunner(scenario, seed).run()

