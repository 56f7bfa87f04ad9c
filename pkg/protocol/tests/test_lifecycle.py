from django.test import SimpleTestCase

from protocol.codec import decode_packet
from protocol.lifecycle import PacketState, packet_state, sent_event
from protocol.simchain import Transaction

from .support import PATH, RECEIVER, SENDER, ULN, configure, digest, header, network


class PacketStateTests(SimpleTestCase):
    def setUp(self):
        self.net = network()
        configure(self.net)
        self.dst = self.net.chain(2)

    def state(self, nonce=1):
        return packet_state(self.net, PATH, nonce)

    def send(self, message=b''):
        return self.net.submit_tx(1, Transaction(SENDER, lambda ctx: ctx.endpoint.send(ctx, PATH, message)))

    def attest(self, nonce=1, dvn='D1'):
        self.dst.call(dvn, lambda ctx: ctx.state.registry.library(ULN).verify(ctx, dvn, header(nonce), digest(nonce)))

    def commit(self, nonce=1):
        self.dst.call('lib', lambda ctx: ctx.endpoint.commit_verification(ctx, ULN, header(nonce), digest(nonce)))

    def receiver_call(self, action):
        receipt = self.dst.call(RECEIVER, action)
        self.assertTrue(receipt.applied, receipt.reason)

    def test_happy_path(self):
        self.assertIs(self.state(), PacketState.UNSENT)
        self.send()
        self.assertIs(self.state(), PacketState.SENT)
        self.attest()
        self.assertIs(self.state(), PacketState.COMMITTABLE)
        self.commit()
        self.assertIs(self.state(), PacketState.VERIFIED)
        self.dst.call('E', lambda ctx: ctx.endpoint.lz_receive(ctx, PATH, 1, header(1).guid, b''))
        self.assertIs(self.state(), PacketState.RECEIVED)
        self.assertIs(self.state(2), PacketState.UNSENT)

    def test_attestation_from_unconfigured_dvn_is_not_enough(self):
        self.send()
        self.attest(dvn='D9')
        self.assertIs(self.state(), PacketState.SENT)

    def test_nilified(self):
        self.send()
        self.commit()
        self.receiver_call(lambda ctx: ctx.endpoint.nilify(ctx, PATH, 1, digest(1)))
        self.assertIs(self.state(), PacketState.NILIFIED)

    def test_cleared(self):
        self.send()
        self.commit()
        self.receiver_call(lambda ctx: ctx.endpoint.clear(ctx, PATH, 1, header(1).guid, b''))
        self.assertIs(self.state(), PacketState.CLEARED)

    def test_skipped(self):
        self.send()
        self.receiver_call(lambda ctx: ctx.endpoint.skip(ctx, PATH, 1))
        self.assertIs(self.state(), PacketState.SKIPPED)

    def test_burnt_reads_as_cleared(self):
        self.send()
        self.send()
        self.commit(1)
        self.commit(2)
        self.dst.call('E', lambda ctx: ctx.endpoint.lz_receive(ctx, PATH, 2, header(2).guid, b''))
        self.assertIs(self.state(1), PacketState.VERIFIED)
        self.receiver_call(lambda ctx: ctx.endpoint.burn(ctx, PATH, 1, digest(1)))
        self.assertIs(self.state(1), PacketState.CLEARED)
        self.assertIs(self.state(2), PacketState.RECEIVED)

    def test_sent_event(self):
        self.send(b'hi')
        event, packet = sent_event(self.net, PATH, 1)
        self.assertEqual(event.name, 'PacketSent')
        self.assertEqual(packet, decode_packet(event.fields['packet']))
        self.assertEqual(packet.message, b'hi')
        self.assertEqual(sent_event(self.net, PATH, 2), (None, None))


class ParseTests(SimpleTestCase):
    def test_case_insensitive(self):
        self.assertIs(PacketState.parse('committable'), PacketState.COMMITTABLE)
        self.assertIs(PacketState.parse('Received'), PacketState.RECEIVED)

    def test_unknown(self):
        with self.assertRaises(ValueError):
            PacketState.parse('Lost')
