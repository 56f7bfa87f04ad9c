from django.test import SimpleTestCase

from protocol import errors
from protocol.codec import NativeDropOptions, address, WorkerOption, WorkerOptions, encode_options
from protocol.msglib import MessageLibRecord
from protocol.oapps import TokenBridge, encode_bridge_payload
from protocol.simchain import ChainConfig, Network, Transaction
from protocol.workers import (
    CRASHED, EQUIVOCATE, HONEST, SILENT, Behavior, Dvn, DvnSpec, Executor, ExecutorSpec, FaultEntry, FaultSchedule,
    Precrime, PrecrimeSpec, WorkerSet, apply_fault, wrong_hash,
)

from .support import PATH, RECEIVER, SENDER, ULN, admin, digest, header, make_stack


class Sim:
    """Two chains, one path, and the runner's tick order."""

    def __init__(self, stack=None, chains=(1, 2)):
        self.net = Network(admin())
        self.workers = WorkerSet()
        self.stack = stack or make_stack()
        for eid in chains:
            chain = self.net.add_chain(ChainConfig(eid=eid))
            chain.call(admin(), lambda ctx: ctx.state.registry.register(ctx.caller, MessageLibRecord(*ULN)))
        for eid, oapp, remote in ((1, SENDER, 2), (2, RECEIVER, 1)):
            chain = self.net.chain(eid)
            chain.call(oapp, lambda ctx, o=oapp, r=remote: ctx.endpoint.set_security_stack(ctx, o, r, self.stack))
            chain.state.balances[oapp] = 1_000_000
        for eid in chains:
            self.net.advance(eid)

    def add(self, worker):
        return self.workers.add(worker)

    def send(self, message=b'', options=b''):
        return self.net.submit_tx(1, Transaction(SENDER, lambda ctx: ctx.endpoint.send(ctx, PATH, message, options)))

    def tick(self, tick, schedule=FaultSchedule()):
        self.net.tick = tick
        apply_fault(schedule, self.workers.workers, tick, self.net)
        for eid in sorted(self.net.chains):
            self.net.advance(eid)
        self.workers.step(tick)

    def run(self, start, end, schedule=FaultSchedule()):
        for tick in range(start, end + 1):
            self.tick(tick, schedule)

    @property
    def receiver(self):
        return self.net.chain(2).endpoint

    def lines(self, worker, action):
        return [e.line for e in self.net.journal if e.subject == worker and e.name == action]


class BehaviorTests(SimpleTestCase):
    def test_parse(self):
        self.assertEqual(Behavior.parse('silent(5,20)'), Behavior(SILENT, 5, 20))
        self.assertEqual(Behavior.parse('Equivocate'), Behavior(EQUIVOCATE))
        self.assertEqual(str(Behavior.parse('silent(5,20)')), 'silent(5,20)')

    def test_unknown(self):
        with self.assertRaises(errors.InvalidValue):
            Behavior.parse('sleepy')

    def test_silent_window(self):
        behavior = Behavior(SILENT, 5, 20)
        self.assertEqual([behavior.acts_at(t) for t in (4, 5, 20, 21)], [True, False, False, True])

    def test_crashed_never_acts(self):
        self.assertFalse(Behavior(CRASHED).acts_at(1))

    def test_wrong_hash_differs(self):
        self.assertNotEqual(wrong_hash(digest(1)), digest(1))
        self.assertEqual(wrong_hash(wrong_hash(digest(1))), digest(1))

    def test_executor_cannot_equivocate(self):
        with self.assertRaises(errors.InvalidValue):
            ExecutorSpec('E', behavior=Behavior(EQUIVOCATE))

    def test_dvn_latency(self):
        with self.assertRaises(errors.InvalidValue):
            DvnSpec('D1', frozenset({1}), latency_ticks=0)


class FaultScheduleTests(SimpleTestCase):
    def test_empty_schedule(self):
        sim = Sim()
        dvn = sim.add(Dvn(DvnSpec('D1', frozenset({1})), sim.net))
        self.assertEqual(apply_fault(FaultSchedule(), sim.workers.workers, 1, sim.net), [])
        self.assertEqual(dvn.behavior.kind, HONEST)

    def test_unknown_worker(self):
        schedule = FaultSchedule((FaultEntry(1, 'D9', Behavior(CRASHED)),))
        with self.assertRaises(errors.UnknownWorker):
            apply_fault(schedule, {}, 1)

    def test_ticks_non_decreasing(self):
        with self.assertRaises(errors.InvalidValue):
            FaultSchedule((FaultEntry(2, 'D1', Behavior()), FaultEntry(1, 'D1', Behavior())))

    def test_fault_is_journaled(self):
        sim = Sim()
        sim.add(Dvn(DvnSpec('D1', frozenset({1})), sim.net))
        sim.tick(3, FaultSchedule((FaultEntry(3, 'D1', Behavior(CRASHED)),)))
        self.assertEqual(sim.lines('D1', 'FAULT'), ['3 WORKER=D1 FAULT was=honest now=crashed'])


class DvnTests(SimpleTestCase):
    def test_attests_after_latency(self):
        sim = Sim()
        sim.add(Dvn(DvnSpec('D1', frozenset({1}), latency_ticks=2), sim.net))
        sim.net.tick = 1
        sim.send(b'hi')
        sim.run(1, 5)
        attests = sim.lines('D1', 'ATTEST')
        self.assertEqual(len(attests), 1)
        self.assertTrue(attests[0].startswith('3 WORKER=D1 ATTEST nonce=1'))

    def test_equivocating_dvn_signs_wrong_hash(self):
        sim = Sim()
        dvn = sim.add(Dvn(DvnSpec('D1', frozenset({1}), behavior=Behavior(EQUIVOCATE)), sim.net))
        sim.net.tick = 1
        sim.send()
        sim.run(1, 3)
        uln = sim.net.chain(2).registry.library(ULN)
        self.assertEqual(uln.attesters(header(1), digest(1)), frozenset())
        self.assertEqual(uln.attesters(header(1), wrong_hash(digest(1))), frozenset({dvn.id}))

    def test_silent_then_catches_up(self):
        sim = Sim()
        sim.add(Dvn(DvnSpec('D1', frozenset({1}), behavior=Behavior(SILENT, 1, 4)), sim.net))
        sim.net.tick = 1
        sim.send()
        sim.run(1, 6)
        self.assertTrue(sim.lines('D1', 'ATTEST')[0].startswith('5 '))

    def test_ignores_unassigned_packets(self):
        sim = Sim()
        sim.add(Dvn(DvnSpec('D7', frozenset({1})), sim.net))
        sim.net.tick = 1
        sim.send()
        sim.run(1, 3)
        self.assertEqual(sim.lines('D7', 'ATTEST'), [])

    def test_jitter_is_seeded(self):
        due = []
        for _ in range(2):
            sim = Sim()
            dvn = sim.add(Dvn(DvnSpec('D1', frozenset({1}), latency_ticks=1, jitter_ticks=5), sim.net, seed=42))
            sim.net.tick = 1
            sim.send()
            sim.tick(1)
            due.append(dvn._backlog[0].due_tick)
        self.assertEqual(due[0], due[1])
        self.assertTrue(2 <= due[0] <= 7)


class ExecutorTests(SimpleTestCase):
    def setUp(self):
        self.sim = Sim()
        self.sim.add(Dvn(DvnSpec('D1', frozenset({1})), self.sim.net))

    def test_commits_and_delivers(self):
        self.sim.add(Executor(ExecutorSpec('E'), self.sim.net))
        self.sim.net.tick = 1
        self.sim.send(b'hi')
        self.sim.run(1, 3)
        self.assertEqual(self.sim.receiver.lazy_inbound_nonce(PATH), 1)
        self.assertIn('result=Delivered', self.sim.lines('E', 'DELIVER')[0])

    def test_native_drop(self):
        self.sim.add(Executor(ExecutorSpec('E'), self.sim.net))
        self.sim.net.tick = 1
        self.sim.send(options=encode_options(NativeDropOptions(200_000, 7, RECEIVER)))
        self.sim.run(1, 3)
        self.assertEqual(self.sim.net.chain(2).state.balances[RECEIVER], 1_000_007)
        self.assertIn('gas=200000 drop=7', self.sim.lines('E', 'DELIVER')[0])

    def test_crashed_executor_leaves_packet_committable(self):
        self.sim.add(Executor(ExecutorSpec('E', behavior=Behavior(CRASHED)), self.sim.net))
        self.sim.net.tick = 1
        self.sim.send()
        self.sim.run(1, 4)
        self.assertIsNone(self.sim.receiver.verified_hash(PATH, 1))

    def test_other_executor_ignores_assigned_work(self):
        self.sim.add(Executor(ExecutorSpec('X'), self.sim.net))
        self.sim.net.tick = 1
        self.sim.send()
        self.sim.run(1, 4)
        self.assertEqual(self.sim.lines('X', 'DELIVER'), [])

    def test_user_mode_delivers_anything(self):
        self.sim.add(Executor(ExecutorSpec('E', behavior=Behavior(SILENT, 0, 20)), self.sim.net))
        self.sim.add(Executor(ExecutorSpec('U', mode='user'), self.sim.net))
        self.sim.net.tick = 1
        self.sim.send()
        self.sim.run(1, 3)
        self.assertEqual(self.sim.receiver.lazy_inbound_nonce(PATH), 1)
        self.assertEqual(len(self.sim.lines('U', 'DELIVER')), 1)

    def test_waits_for_precrime(self):
        self.sim.add(Executor(ExecutorSpec('E'), self.sim.net, precrime_ids={1}))
        options = encode_options(WorkerOptions((WorkerOption(1, 1),)))
        self.sim.net.tick = 1
        self.sim.send(options=options)
        self.sim.run(1, 4)
        self.assertIsNone(self.sim.receiver.verified_hash(PATH, 1))
        self.assertEqual(self.sim.receiver.lazy_inbound_nonce(PATH), 0)


class PrecrimeTests(SimpleTestCase):
    """Three bridges with 10 locked and 10 minted each."""

    options = encode_options(WorkerOptions((WorkerOption(1, 1),)))

    def setUp(self):
        self.sim = Sim(chains=(1, 2, 3))
        self.addresses = addresses = {1: SENDER, 2: RECEIVER, 3: address(0x53)}
        for eid, addr in addresses.items():
            bridge = TokenBridge(name=f'bridge{eid}', eid=eid, address=addr, locked=10, minted=10, available=100)
            for other, peer in addresses.items():
                if other != eid:
                    bridge.set_peer(other, peer)
            self.sim.net.chain(eid).deploy(bridge)
        self.sim.add(Dvn(DvnSpec('D1', frozenset({1})), self.sim.net))
        self.sim.add(Executor(ExecutorSpec('E'), self.sim.net, precrime_ids={1}))
        self.sim.add(Precrime(PrecrimeSpec('P', worker_id=1), self.sim.net))

    def bridge(self, eid):
        return self.sim.net.chain(eid).apps[self.addresses[eid]]

    def test_unbacked_mint_halts(self):
        self.sim.net.tick = 1
        self.sim.send(encode_bridge_payload(10), self.options)
        self.sim.run(1, 4)
        verdict = self.sim.net.advisories[(PATH, 1)]
        self.assertTrue(verdict.halted)
        self.assertEqual(verdict.violated, ('bridge1', 'bridge2', 'bridge3'))
        self.assertEqual(verdict.suspect, 1)
        self.assertEqual(self.bridge(2).minted, 10)
        self.assertIsNone(self.sim.receiver.verified_hash(PATH, 1))

    def test_backed_transfer_allowed(self):
        self.sim.net.tick = 1
        self.sim.net.submit_tx(1, Transaction(SENDER, lambda ctx: ctx.state.apps[SENDER].bridge_send(
            ctx, 2, 5, False, self.options)))
        self.sim.run(1, 4)
        self.assertFalse(self.sim.net.advisories[(PATH, 1)].halted)
        self.assertEqual(self.bridge(2).minted, 15)
        self.assertEqual(self.bridge(1).locked, 15)

    def test_skip_restores_liveness(self):
        self.sim.net.tick = 1
        self.sim.send(encode_bridge_payload(10), self.options)
        self.sim.run(1, 3)
        self.sim.net.submit_tx(2, Transaction(RECEIVER, lambda ctx: ctx.endpoint.skip(ctx, PATH, 1)))
        self.sim.net.tick = 4
        self.sim.net.submit_tx(1, Transaction(SENDER, lambda ctx: ctx.state.apps[SENDER].bridge_send(
            ctx, 2, 5, False, self.options)))
        self.sim.run(4, 7)
        self.assertEqual(self.sim.receiver.lazy_inbound_nonce(PATH), 2)
        self.assertEqual(self.bridge(2).minted, 15)
