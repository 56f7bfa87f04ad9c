"""
Channel fuzzer.

Each iteration sends a handful of packets on one path, then applies a random
interleaving of commit, deliver, skip, clear, nilify and burn to the
destination endpoint. Every operation is replayed against ``ChannelModel``,
a reference model that recomputes each check from the raw entries, and the
two must agree on the outcome of every operation and on the final delivered
set. Losslessness and exactly-once are checked on the real endpoint as the
run goes.

Delivery order is checked against ``in_order_oracle``, a receiver that only
ever takes the next nonce. Each iteration also runs a random schedule of
honest commits, skips and out-of-order delivery attempts on a fresh endpoint,
drains it, and requires the same delivered set and lazy nonce as the in-order
receiver given the same committed and skipped nonces.
``ChannelFuzzer.check_interleavings`` runs that comparison over every commit
order.

The first disagreement is reported as a scenario file that reproduces it
through the runner.
"""

import itertools
import logging
import random
from dataclasses import dataclass
from typing import Optional

from protocol import errors
from protocol.codec import Path, address, make_header, payload_hash
from protocol.conf import sim_settings
from protocol.endpoint import NIL, Endpoint, SecurityStack
from protocol.msglib import LibKey, LibraryKind, LibraryRegistry, MessageLibRecord
from protocol.simchain import ChainState, TxContext

logger = logging.getLogger(__name__)

SRC_EID = 1
DST_EID = 2
SENDER = address(0x51)
RECEIVER = address(0x52)
VERIFIER = 'W'
PLACEHOLDER_DVN = 'V'
LIB = LibKey(1, 1, 0)
OK = 'Applied'
OPS = ('commit', 'commit', 'commit', 'deliver', 'deliver', 'skip', 'clear', 'nilify', 'burn')


class SkipUncheckedEndpoint(Endpoint):
    """Skips any nonce, ignoring the verified prefix."""

    def skip(self, ctx, path, nonce):
        if ctx.caller != path.receiver:
            raise errors.NotReceiver()
        ch = self.channel(path)
        ch.verified.pop(nonce, None)
        ch.lazy_inbound_nonce = max(ch.lazy_inbound_nonce, nonce)
        ctx.emit('PacketSkipped', path=path, nonce=nonce)


class DeliverUngatedEndpoint(Endpoint):
    """Delivers any verified nonce without walking its predecessors."""

    def _deliverable_hash(self, ctx, ch, nonce):
        entry = ch.verified.get(nonce)
        if entry is None:
            if nonce <= ch.lazy_inbound_nonce:
                raise errors.AlreadyDelivered(nonce=nonce)
            raise errors.Censorship(nonce=nonce)
        if entry == NIL:
            raise errors.Nilified(nonce=nonce)
        return entry


MUTANTS = {
    'skip-unchecked': SkipUncheckedEndpoint,
    'deliver-ungated': DeliverUngatedEndpoint,
}


def endpoint_class(mutant: Optional[str]):
    if mutant is None:
        return Endpoint
    try:
        return MUTANTS[mutant]
    except KeyError:
        raise ValueError(f'Unknown mutant: {mutant}') from None


def in_order_oracle(verified, skipped=frozenset()) -> tuple:
    """What a receiver that only ever takes the next nonce ends up with.

    Walks 1, 2, ... delivering ``verified`` nonces and passing over
    ``skipped`` ones, and stops at the first nonce in neither. Returns the
    delivered nonces and the last nonce consumed.
    """
    delivered = []
    nonce = 0
    while nonce + 1 in verified or nonce + 1 in skipped:
        nonce += 1
        if nonce in verified:
            delivered.append(nonce)
    return delivered, nonce


class ChannelModel:
    """Reference channel: every check recomputed from scratch."""

    def __init__(self):
        self.lazy = 0
        self.entries = {}
        self.delivered = []

    def _inbound(self) -> int:
        nonce = self.lazy
        while self.entries.get(nonce + 1) not in (None, NIL):
            nonce += 1
        return nonce

    def _check_deliverable(self, nonce, digest):
        if nonce <= self.lazy:
            entry = self.entries.get(nonce)
            if entry is None:
                return 'AlreadyDelivered'
            if entry == NIL:
                return 'Nilified'
        else:
            if any(self.entries.get(m) in (None, NIL) for m in range(self.lazy + 1, nonce)):
                return 'Censorship'
            entry = self.entries.get(nonce)
            if entry is None:
                return 'Censorship'
            if entry == NIL:
                return 'Nilified'
        return None if entry == digest else 'HashMismatch'

    def apply(self, op, nonce, digest) -> str:
        if op == 'commit':
            if nonce <= self.lazy:
                return 'StalePacket'
            self.entries[nonce] = digest
            return OK
        if op in ('deliver', 'clear'):
            failure = self._check_deliverable(nonce, digest)
            if failure:
                return failure
            del self.entries[nonce]
            self.lazy = max(self.lazy, nonce)
            if op == 'deliver':
                self.delivered.append(nonce)
            return OK
        if op == 'skip':
            if nonce != self._inbound() + 1:
                return 'WrongNonce'
            self.entries.pop(nonce, None)
            self.lazy = nonce
            return OK
        if op == 'nilify':
            if nonce <= self.lazy:
                return 'StalePacket'
            entry = self.entries.get(nonce)
            if entry in (None, NIL):
                return 'NoEntry'
            if entry != digest:
                return 'HashMismatch'
            self.entries[nonce] = NIL
            return OK
        if op == 'burn':
            if nonce > self.lazy:
                return 'NonceAhead'
            entry = self.entries.get(nonce)
            if entry is None:
                return 'NoEntry'
            if entry != digest:
                return 'HashMismatch'
            del self.entries[nonce]
            return OK
        raise ValueError(op)


@dataclass
class FuzzOp:
    op: str
    nonce: int
    hash: bytes = b''
    expected: str = ''
    actual: str = ''


@dataclass
class Counterexample:
    iteration: int
    seed: str
    reason: str
    scenario: str


@dataclass
class FuzzReport:
    iterations: int
    seed: int
    max_nonces: int
    mutant: Optional[str] = None
    operations: int = 0
    counterexample: Optional[Counterexample] = None

    @property
    def passed(self) -> bool:
        return self.counterexample is None

    def to_dict(self) -> dict:
        data = {
            'iterations': self.iterations,
            'seed': self.seed,
            'max_nonces': self.max_nonces,
            'mutant': self.mutant,
            'operations': self.operations,
            'passed': self.passed,
            'counterexample': None,
        }
        if self.counterexample is not None:
            data['counterexample'] = {
                'iteration': self.counterexample.iteration,
                'seed': self.counterexample.seed,
                'reason': self.counterexample.reason,
                'scenario': self.counterexample.scenario,
            }
        return data


def _state(eid, endpoint_cls) -> ChainState:
    admin = bytes.fromhex(sim_settings.REGISTRY_ADMIN)
    state = ChainState(endpoint=endpoint_cls(eid), registry=LibraryRegistry(admin))
    state.registry.register(admin, MessageLibRecord(*LIB, kind=LibraryKind.WHITELIST,
                                                    allowlist=frozenset({VERIFIER})))
    return state


def _stack() -> SecurityStack:
    return SecurityStack(send_library=LIB, receive_library=LIB, required_dvns=frozenset({PLACEHOLDER_DVN}),
                         executor=VERIFIER)


class ChannelFuzzer:
    def __init__(self, iterations=None, seed: int = 0, max_nonces=None, max_ops=None, mutant=None):
        self.iterations = sim_settings.FUZZ_ITERATIONS if iterations is None else iterations
        self.seed = seed
        self.max_nonces = max_nonces or sim_settings.FUZZ_MAX_NONCES
        self.max_ops = max_ops or sim_settings.FUZZ_MAX_OPS
        self.mutant = mutant
        self.endpoint_cls = endpoint_class(mutant)
        self.path = Path(SRC_EID, SENDER, DST_EID, RECEIVER)

    def run(self) -> FuzzReport:
        report = FuzzReport(self.iterations, self.seed, self.max_nonces, self.mutant)
        for i in range(self.iterations):
            found = self.iteration(i, report)
            if found is not None:
                report.counterexample = found
                logger.info('Counterexample at iteration %s: %s', i, found.reason)
                break
        return report

    def _send(self, rng, count):
        """Send ``count`` packets on a fresh source endpoint; nonces must come back gapless."""
        src = _state(SRC_EID, Endpoint)
        src.endpoint.set_security_stack(TxContext(src, SENDER, height=0), SENDER, DST_EID, _stack())
        ctx = TxContext(src, SENDER, height=1)
        src.balances[SENDER] = 10**9
        packets = []
        for expected in range(1, count + 1):
            message = rng.randbytes(rng.randint(0, 4))
            header = src.endpoint.send(ctx, self.path, message)
            if header.nonce != expected:
                raise AssertionError(f'send nonce {header.nonce}, expected {expected}')
            packets.append((header, message))
        return packets

    def iteration(self, index: int, report: FuzzReport) -> Optional[Counterexample]:
        run_seed = f'{self.seed}:{index}'
        rng = random.Random(run_seed)
        count = rng.randint(1, self.max_nonces)
        packets = self._send(rng, count)
        digests = {h.nonce: payload_hash(h.guid, m) for h, m in packets}

        dst = self._destination()
        model = ChannelModel()
        ops = []
        delivered = []

        for _ in range(rng.randint(1, self.max_ops)):
            op = rng.choice(OPS)
            nonce = rng.randint(1, count)
            digest = self._pick_hash(rng, op, nonce, digests, dst)
            step = FuzzOp(op, nonce, digest)
            ops.append(step)
            lossless = self._lossless(dst, nonce) if op == 'deliver' else True
            step.expected = model.apply(op, nonce, digest)
            step.actual = self._apply(dst, packets, step)
            report.operations += 1
            if step.actual == OK and op == 'deliver':
                if nonce in delivered:
                    return self._counterexample(index, run_seed, f'nonce {nonce} delivered twice', packets, ops, model)
                if not lossless:
                    return self._counterexample(index, run_seed, f'nonce {nonce} delivered past a gap',
                                                packets, ops, model)
                delivered.append(nonce)
            if step.actual != step.expected:
                reason = f'{op} nonce={nonce}: endpoint {step.actual}, model {step.expected}'
                return self._counterexample(index, run_seed, reason, packets, ops, model)

        if sorted(delivered) != sorted(model.delivered):
            return self._counterexample(index, run_seed, 'delivered sets differ', packets, ops, model)

        ops = []
        failure = self.check_order(rng, packets, digests, ops)
        report.operations += len(ops)
        if failure is not None:
            reason, expected, lazy = failure
            return self._counterexample(index, run_seed, reason, packets, ops, lazy=lazy, delivered=len(expected))
        return None

    def _destination(self) -> ChainState:
        dst = _state(DST_EID, self.endpoint_cls)
        dst.endpoint.set_security_stack(TxContext(dst, RECEIVER, height=0), RECEIVER, SRC_EID, _stack())
        return dst

    def _record(self, dst, packets, ops, op, nonce, digest=b'') -> str:
        """Apply one operation whose outcome is taken as given; ordering is judged at the end."""
        step = FuzzOp(op, nonce, digest)
        step.actual = step.expected = self._apply(dst, packets, step)
        ops.append(step)
        return step.actual

    def _drain(self, dst, packets, ops, verified, skipped):
        """Retry pending skips, then deliveries highest nonce first, until nothing moves."""
        done = {(s.op, s.nonce) for s in ops if s.actual == OK}
        while True:
            pending = [('skip', n) for n in sorted(skipped) if ('skip', n) not in done]
            pending += [('deliver', n) for n in sorted(verified, reverse=True) if ('deliver', n) not in done]
            moved = False
            for op, nonce in pending:
                if self._record(dst, packets, ops, op, nonce) == OK:
                    done.add((op, nonce))
                    moved = True
            if not moved:
                return

    def _compare_in_order(self, dst, ops, verified, skipped) -> Optional[tuple]:
        expected, lazy = in_order_oracle(verified, skipped)
        delivered = sorted(s.nonce for s in ops if s.op == 'deliver' and s.actual == OK)
        actual_lazy = dst.endpoint.lazy_inbound_nonce(self.path)
        if delivered == expected and actual_lazy == lazy:
            return None
        reason = (f'delivered {delivered} up to lazy {actual_lazy}; '
                  f'in-order receiver delivers {expected} up to lazy {lazy}')
        return reason, expected, lazy

    def check_order(self, rng, packets, digests, ops) -> Optional[tuple]:
        """Random honest commits, skips and delivery attempts on a fresh endpoint, drained."""
        nonces = range(1, len(packets) + 1)
        verified = {n for n in nonces if rng.random() < 0.75}
        skipped = {n for n in nonces if n not in verified and rng.random() < 0.5}
        schedule = [('commit', n) for n in sorted(verified)] + [('skip', n) for n in sorted(skipped)]
        schedule += [('deliver', rng.choice(nonces)) for _ in nonces]
        rng.shuffle(schedule)

        dst = self._destination()
        for op, nonce in schedule:
            self._record(dst, packets, ops, op, nonce, digests[nonce] if op == 'commit' else b'')
        self._drain(dst, packets, ops, verified, skipped)
        return self._compare_in_order(dst, ops, verified, skipped)

    def check_interleavings(self, nonces: int) -> Optional[str]:
        """Every commit order over ``nonces`` packets, draining after each commit.

        After each step the delivered set and lazy nonce must equal the
        in-order receiver's for the nonces committed so far.
        """
        packets = [(make_header(LIB.major, n, self.path), b'') for n in range(1, nonces + 1)]
        digests = {h.nonce: payload_hash(h.guid, m) for h, m in packets}
        for order in itertools.permutations(range(1, nonces + 1)):
            dst = self._destination()
            ops = []
            for step, nonce in enumerate(order, 1):
                self._record(dst, packets, ops, 'commit', nonce, digests[nonce])
                committed = set(order[:step])
                self._drain(dst, packets, ops, committed, ())
                failure = self._compare_in_order(dst, ops, committed, ())
                if failure is not None:
                    return f'commit order {order}: {failure[0]}'
        return None

    def _pick_hash(self, rng, op, nonce, digests, dst):
        honest = digests[nonce]
        if op == 'commit':
            return honest if rng.random() < 0.8 else bytes(31) + bytes([rng.randint(1, 255)])
        if op in ('nilify', 'burn'):
            current = dst.endpoint.verified_hash(self.path, nonce)
            return current if current is not None and rng.random() < 0.7 else honest
        return honest

    def _lossless(self, dst, nonce) -> bool:
        endpoint = dst.endpoint
        lazy = endpoint.lazy_inbound_nonce(self.path)
        for m in range(1, nonce):
            entry = endpoint.verified_hash(self.path, m)
            if entry is None and m > lazy:
                return False
            if entry == NIL:
                return False
        return True

    def _apply(self, dst, packets, step: FuzzOp) -> str:
        header, message = packets[step.nonce - 1]
        caller = VERIFIER if step.op in ('commit', 'deliver') else RECEIVER
        ctx = TxContext(dst, caller, height=1, budget=10**6)
        endpoint = dst.endpoint
        try:
            if step.op == 'commit':
                dst.registry.library(LIB).whitelist_verify(ctx, VERIFIER, header, step.hash)
            elif step.op == 'deliver':
                endpoint.lz_receive(ctx, self.path, step.nonce, header.guid, message)
            elif step.op == 'clear':
                endpoint.clear(ctx, self.path, step.nonce, header.guid, message)
            elif step.op == 'skip':
                endpoint.skip(ctx, self.path, step.nonce)
            elif step.op == 'nilify':
                endpoint.nilify(ctx, self.path, step.nonce, step.hash)
            elif step.op == 'burn':
                endpoint.burn(ctx, self.path, step.nonce, step.hash)
        except errors.ProtocolError as exc:
            return exc.code
        return OK

    def _counterexample(self, index, run_seed, reason, packets, ops, model=None, lazy=0,
                        delivered=0) -> Counterexample:
        if model is not None:
            lazy, delivered = model.lazy, len(model.delivered)
        return Counterexample(index, run_seed, reason, counterexample_scenario(
            seed=self.seed, iteration=index, reason=reason, mutant=self.mutant,
            messages=[m for _, m in packets], ops=ops, lazy=lazy, delivered=delivered, path=self.path))


def counterexample_scenario(seed, iteration, reason, mutant, messages, ops, lazy, delivered, path) -> str:
    """Replayable scenario; the closing assertions hold the reference lazy nonce and delivered count."""
    lines = [
        f'# channel fuzzer counterexample: seed={seed} iteration={iteration}',
        f'# {reason}',
        f'seed {seed}',
        'ticks 3',
    ]
    if mutant:
        lines.append(f'endpoint mutant={mutant}')
    lines += [
        f'chain {path.src_eid} budget=1000000',
        f'chain {path.dst_eid} budget=1000000',
        f'library {LIB.lib_id} {LIB.major}.{LIB.minor} kind=whitelist allow={VERIFIER}',
        f'dvn {PLACEHOLDER_DVN} watch={path.src_eid} behavior=crashed',
        f'executor {VERIFIER} behavior=crashed',
        f'oapp sender kind=plain chain={path.src_eid} addr={path.sender.hex()} balance=1000000000',
        f'oapp receiver kind=plain chain={path.dst_eid} addr={path.receiver.hex()}',
        'peer sender receiver',
        f'stack sender remote={path.dst_eid} send={LIB} recv={LIB} required={PLACEHOLDER_DVN} executor={VERIFIER}',
        f'stack receiver remote={path.src_eid} send={LIB} recv={LIB} required={PLACEHOLDER_DVN} executor={VERIFIER}',
    ]
    for message in messages:
        lines.append(f'at 1 send sender dst={path.dst_eid} payload={message.hex() or "-"}')
    for step in ops:
        where = f'receiver from={path.src_eid} nonce={step.nonce}'
        if step.op == 'commit':
            lines.append(f'at 2 commit {where} hash={step.hash.hex()} as={VERIFIER}')
        elif step.op in ('nilify', 'burn'):
            value = 'nil' if step.hash == NIL else step.hash.hex()
            lines.append(f'at 2 {step.op} {where} hash={value}')
        else:
            lines.append(f'at 2 {step.op} {where}')
        lines.append(f'at 2 assert outcome is={step.expected}')
        if step.actual != step.expected:
            break
    lines.append(f'at 3 assert lazy receiver from={path.src_eid} is={lazy}')
    lines.append(f'at 3 assert delivered-count receiver from={path.src_eid} is={delivered}')
    return '\n'.join(lines) + '\n'


def fuzz_channel(iterations=None, seed: int = 0, max_nonces=None, max_ops=None, mutant=None) -> FuzzReport:
    return ChannelFuzzer(iterations, seed, max_nonces, max_ops, mutant).run()
