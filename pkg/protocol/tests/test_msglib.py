from itertools import chain, combinations

from django.test import SimpleTestCase
from hypothesis import given, strategies as st

from protocol import errors
from protocol.msglib import (
    CommitOutcome, LibKey, LibraryKind, LibraryRegistry, MessageLibRecord, UlnConfigView, UltraLightNode,
    committable,
)

from .support import (
    PATH, RECEIVER, ULN, WHITELIST, Context, admin, digest, header, make_stack, receiving_state,
)


def subsets(items):
    items = sorted(items)
    return chain.from_iterable(combinations(items, n) for n in range(len(items) + 1))


def brute_force(attesters, required, optional, threshold):
    """Enumerate every optional subset of size >= threshold and look for one the attesters cover."""
    if not set(required) <= set(attesters):
        return False
    return any(len(s) >= threshold and set(s) <= set(attesters) for s in subsets(optional))


class RegistryTests(SimpleTestCase):
    def setUp(self):
        self.registry = LibraryRegistry(admin())

    def test_append_only_versions(self):
        for key in (LibKey(1, 1, 0), LibKey(1, 1, 1), LibKey(1, 2, 0)):
            self.registry.register(admin(), MessageLibRecord(*key))
        self.assertEqual(len(self.registry.records), 3)

    def test_duplicate_version(self):
        self.registry.register(admin(), MessageLibRecord(1, 1, 0))
        with self.assertRaises(errors.DuplicateVersion):
            self.registry.register(admin(), MessageLibRecord(1, 1, 0, kind=LibraryKind.WHITELIST))

    def test_admin_only(self):
        with self.assertRaises(errors.NotAdmin):
            self.registry.register(b'\x01' * 32, MessageLibRecord(1, 1, 0))

    def test_unknown(self):
        with self.assertRaises(errors.UnknownLibrary):
            self.registry.library(LibKey(9, 1, 0))

    def test_receive_library_prefers_configured(self):
        for key in (LibKey(1, 1, 0), LibKey(1, 1, 2)):
            self.registry.register(admin(), MessageLibRecord(*key))
        self.assertEqual(self.registry.receive_library_for(1, 1).key, LibKey(1, 1, 2))
        self.assertEqual(self.registry.receive_library_for(1, 1, (LibKey(1, 1, 0),)).key, LibKey(1, 1, 0))
        self.assertIsNone(self.registry.receive_library_for(1, 3))

    def test_parse_key(self):
        self.assertEqual(LibKey.parse('1@2.3'), LibKey(1, 2, 3))
        self.assertEqual(str(LibKey(1, 2, 3)), '1@2.3')
        with self.assertRaises(errors.InvalidValue):
            LibKey.parse('one')


class QuorumTests(SimpleTestCase):
    def test_required_and_threshold(self):
        cfg = UlnConfigView(frozenset({'A'}), frozenset({'B', 'C', 'D'}), 1)
        self.assertTrue(committable({'A', 'B'}, cfg))
        self.assertFalse(committable({'B'}, cfg))
        self.assertFalse(committable({'A'}, cfg))

    def test_threshold_only(self):
        cfg = UlnConfigView(frozenset(), frozenset({'B', 'C', 'D'}), 2)
        self.assertTrue(committable({'C', 'D'}, cfg))

    def test_exhaustive_small_configs(self):
        dvns = ('R1', 'R2', 'O1', 'O2', 'O3', 'O4')
        for required in subsets(dvns[:2]):
            for optional in subsets(dvns[2:]):
                for threshold in range(len(optional) + 1):
                    cfg = UlnConfigView(frozenset(required), frozenset(optional), threshold)
                    for attesters in subsets(required + optional):
                        self.assertEqual(committable(attesters, cfg),
                                         brute_force(attesters, required, optional, threshold),
                                         (required, optional, threshold, attesters))

    @given(st.sets(st.sampled_from('ABCDEFGH')), st.sets(st.sampled_from('ABCDEFGH')),
           st.sets(st.sampled_from('ABCDEFGH')), st.integers(0, 8))
    def test_extra_attesters_never_hurt(self, required, optional, attesters, threshold):
        cfg = UlnConfigView(frozenset(required), frozenset(optional - required), threshold)
        if committable(attesters, cfg):
            self.assertTrue(committable(attesters | {'Z'}, cfg))


class UltraLightNodeTests(SimpleTestCase):
    def setUp(self):
        self.state = receiving_state(make_stack(required=('A',), optional=('B', 'C'), threshold=1))
        self.uln = self.state.registry.library(ULN)

    def attest(self, dvn, nonce=1, value=None):
        self.uln.verify(Context(self.state, dvn), dvn, header(nonce), value or digest(nonce))

    def commit(self, nonce=1):
        return self.uln.commit_if_ready(Context(self.state, 'E'), header(nonce), digest(nonce))

    def test_attestation_store(self):
        self.attest('A')
        self.attest('B')
        self.assertEqual(self.uln.attesters(header(1), digest(1)), frozenset({'A', 'B'}))

    def test_equivocation_is_visible(self):
        self.attest('A')
        self.attest('A', value=b'\x01' * 32)
        self.assertEqual(len(self.uln.attestations), 2)

    def test_duplicate_attestation(self):
        self.attest('A')
        with self.assertRaises(errors.DuplicateAttestation):
            self.attest('A')
        self.assertEqual(self.uln.attesters(header(1), digest(1)), frozenset({'A'}))

    def test_commit_when_ready(self):
        self.attest('A')
        self.attest('C')
        self.assertIs(self.commit(), CommitOutcome.COMMITTED)
        self.assertEqual(self.state.endpoint.verified_hash(PATH, 1), digest(1))

    def test_not_ready(self):
        self.attest('B')
        self.attest('C')
        self.assertIs(self.commit(), CommitOutcome.NOT_READY)
        self.assertIsNone(self.state.endpoint.verified_hash(PATH, 1))

    def test_commit_delivered_nonce(self):
        self.attest('A')
        self.attest('B')
        self.commit()
        self.state.endpoint.lz_receive(Context(self.state, 'E'), PATH, 1, header(1).guid, b'')
        with self.assertRaises(errors.StalePacket):
            self.commit()

    def test_version_mismatch(self):
        with self.assertRaises(errors.VersionMismatch):
            self.uln.commit_if_ready(Context(self.state, 'E'), header(1, version=2), digest(1))

    def test_quorum_follows_stack(self):
        self.attest('A')
        self.state.endpoint.set_security_stack(Context(self.state, RECEIVER, height=1), RECEIVER, 1,
                                               make_stack(required=('A',)))
        self.assertIs(self.uln.commit_if_ready(Context(self.state, 'E', height=2), header(1), digest(1)),
                      CommitOutcome.COMMITTED)


class WhitelistTests(SimpleTestCase):
    def setUp(self):
        self.state = receiving_state(make_stack(lib=WHITELIST), libraries=(ULN, WHITELIST))
        self.lib = self.state.registry.library(WHITELIST)

    def test_allowlisted(self):
        outcome = self.lib.whitelist_verify(Context(self.state, 'W'), 'W', header(1), digest(1))
        self.assertIs(outcome, CommitOutcome.COMMITTED)

    def test_other_caller(self):
        with self.assertRaises(errors.NotWhitelisted):
            self.lib.whitelist_verify(Context(self.state, 'X'), 'X', header(1), digest(1))


class LibraryInstancesTests(SimpleTestCase):
    def test_each_record_owns_its_store(self):
        registry = LibraryRegistry(admin())
        first = registry.register(admin(), MessageLibRecord(1, 1, 0))
        second = registry.register(admin(), MessageLibRecord(1, 1, 1))
        self.assertIsInstance(first, UltraLightNode)
        self.assertIsNot(first.attestations, second.attestations)
