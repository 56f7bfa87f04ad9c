import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from protocol.endpoint import NIL
from protocol.lifecycle import PacketState
from protocol.msglib import LibKey
from protocol.workers import CRASHED, SILENT, DvnSpec, ExecutorSpec

from harness.errors import ScenarioError, ScenarioSyntaxError, UnknownReference
from harness.scenario import load_scenario, parse_scenario

from .support import PREAMBLE, scenario_files, with_preamble


class ParseTests(SimpleTestCase):
    def test_fixtures_parse(self):
        for path in scenario_files():
            with self.subTest(scenario=path.name):
                self.assertTrue(load_scenario(path).timeline)

    def test_setup(self):
        scenario = parse_scenario('seed 7\nticks 12\n' + PREAMBLE)
        self.assertEqual(scenario.seed, 7)
        self.assertEqual(scenario.end_tick, 12)
        self.assertEqual(sorted(scenario.chains), [1, 2])
        self.assertEqual(scenario.libraries[0].record.key, LibKey(1, 1, 0))
        self.assertIsInstance(scenario.worker_ids['D1'], DvnSpec)
        self.assertIsInstance(scenario.worker_ids['E'], ExecutorSpec)
        self.assertEqual(scenario.paths, {('sender', 'receiver'), ('receiver', 'sender')})
        self.assertEqual(scenario.stacks[1].stack.required_dvns, frozenset({'D1'}))

    @override_settings(OMNISIM={'MAX_TICKS': 25})
    def test_default_end_tick(self):
        self.assertEqual(parse_scenario(with_preamble('at 3 send sender dst=2\n')).end_tick, 23)
        self.assertEqual(parse_scenario(with_preamble('at 9 send sender dst=2\n')).end_tick, 25)

    def test_comments_and_blank_lines(self):
        scenario = parse_scenario(with_preamble('# note\n\nat 1 send sender dst=2 payload=6869  # hi\n'))
        self.assertEqual(scenario.timeline[0].kwargs['payload'], b'hi')

    def test_timeline_values(self):
        scenario = parse_scenario(with_preamble(
            'at 1 send sender dst=2 payload=- options=0x0100000000000000000000000000030d40\n'
            'at 2 fault D1 silent(3,5)\n'
            'at 4 nilify receiver from=1 nonce=1 hash=nil\n'
            'at 5 assert state receiver from=1 nonce=1 is=committable\n'
        ))
        send, fault, nilify, check = scenario.timeline
        self.assertEqual(send.kwargs['payload'], b'')
        self.assertEqual(len(send.kwargs['options']), 17)
        self.assertEqual(fault.kwargs['behavior'].kind, SILENT)
        self.assertEqual(scenario.faults.due(2)[0].worker, 'D1')
        self.assertEqual(nilify.kwargs['hash'], NIL)
        self.assertIs(check.kwargs['is'], PacketState.COMMITTABLE)
        self.assertEqual(check.line, 15)

    def test_trace_contains_keeps_spaces(self):
        scenario = parse_scenario(with_preamble('at 2 assert trace-contains WORKER=E DELIVER nonce=1\n'))
        self.assertEqual(scenario.timeline[0].kwargs['text'], 'WORKER=E DELIVER nonce=1')

    def test_crashed_worker(self):
        scenario = parse_scenario(PREAMBLE.replace('executor E', 'executor E behavior=crashed'))
        self.assertEqual(scenario.worker_ids['E'].behavior.kind, CRASHED)


class ParseErrorTests(SimpleTestCase):
    def assertRejected(self, text, error=ScenarioSyntaxError, line=None):
        with self.assertRaises(error) as ctx:
            parse_scenario(text)
        if line is not None:
            self.assertEqual(ctx.exception.line, line)
        return ctx.exception

    def test_unknown_command(self):
        exc = self.assertRejected('chain 1\nwarp 9\n', line=2)
        self.assertEqual(str(exc), "line 2: unknown command 'warp'")

    def test_duplicate_chain(self):
        self.assertRejected('chain 1\nchain 1\n', line=2)

    def test_unknown_worker_in_fault(self):
        exc = self.assertRejected(with_preamble('at 2 fault D9 crashed\n'), UnknownReference, line=12)
        self.assertEqual(exc.ref, 'D9')

    def test_unknown_chain(self):
        self.assertRejected('chain 1\ndvn D1 watch=3\n', UnknownReference, line=2)

    def test_unknown_library(self):
        text = PREAMBLE.replace('recv=1@1.0 required=D1 executor=E\nstack receiver',
                                'recv=2@1.0 required=D1 executor=E\nstack receiver')
        self.assertRejected(text, UnknownReference, line=9)

    def test_ticks_must_not_decrease(self):
        self.assertRejected(with_preamble('at 3 send sender dst=2\nat 2 send sender dst=2\n'), line=13)

    def test_unknown_predicate(self):
        self.assertRejected(with_preamble('at 3 assert eventually receiver\n'))

    def test_unknown_state(self):
        self.assertRejected(with_preamble('at 3 assert state receiver from=1 nonce=1 is=Lost\n'))

    def test_bad_quorum(self):
        self.assertRejected(PREAMBLE.replace('required=D1 executor=E\nstack receiver',
                                             'required=D1 threshold=1 executor=E\nstack receiver'), line=9)

    def test_bridge_needs_bridge_oapp(self):
        self.assertRejected(with_preamble('at 1 bridge sender dst=2 amount=5\n'))

    def test_hash_length(self):
        self.assertRejected(with_preamble('at 1 nilify receiver from=1 nonce=1 hash=00\n'))

    def test_send_to_own_chain(self):
        self.assertRejected(with_preamble('at 1 send sender dst=1\n'))

    def test_peers_on_same_chain(self):
        self.assertRejected('chain 1\noapp a chain=1 addr=0x1\noapp b chain=1 addr=0x2\npeer a b\n', line=4)

    def test_unknown_mutant(self):
        self.assertRejected('endpoint mutant=free-for-all\n', line=1)

    def test_all_errors_are_scenario_errors(self):
        self.assertRejected('chain x\n', ScenarioError, line=1)

    def test_seed_range(self):
        self.assertEqual(parse_scenario('seed 18446744073709551615\n').seed, 2**64 - 1)
        exc = self.assertRejected('seed 18446744073709551616\n', line=1)
        self.assertEqual(str(exc), 'line 1: seed must be at most 18446744073709551615')

    def test_compose_needs_compose_target(self):
        exc = self.assertRejected(with_preamble('at 1 assert compose receiver from=1 nonce=1 is=Stored\n'), line=12)
        self.assertEqual(str(exc), 'line 12: receiver has no compose target')


class LoadTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_invalid_utf8(self):
        path = Path(self.tmp.name) / 'broken.lz'
        path.write_bytes(b'chain 1\n\xff\xfe bad\n')
        with self.assertRaises(ScenarioSyntaxError) as ctx:
            load_scenario(path)
        self.assertEqual(str(ctx.exception), 'line 2: invalid UTF-8 at byte 8')
