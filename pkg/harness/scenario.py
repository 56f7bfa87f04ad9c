"""
Scenario files: a line-oriented description of chains, libraries, workers,
OApps and Security Stacks, followed by a timeline of ``at <tick>`` commands.

Setup commands:

    seed <n>                      (0 .. 2**64 - 1)
    ticks <n>
    chain <eid> [budget=<n>] [maxpayload=<n>] [blocktime=<n>]
    library <libId> <major>.<minor> kind=<uln|whitelist|custom> [allow=<ids>] [chain=<eids>]
    dvn <id> watch=<eids> [latency=<n>[+<jitter>]] [behavior=<b>]
    executor <id> [mode=<configured|user>] [behavior=<b>]
    precrime <id> worker=<n>
    oapp <name> kind=<plain|bridge|swap> chain=<eid> addr=<hex> [balance=<n>] ...
    peer <oapp> <oapp>
    stack <oapp> remote=<eid> send=<lib> recv=<lib> required=<ids> optional=<ids> threshold=<n> executor=<id>
    default chain=<eid> remote=<eid> send=<lib> recv=<lib> ...
    optin <oapp> remote=<eid>
    endpoint mutant=<name>

Timeline commands are ``at <tick> <command> ...``; see ``TIMELINE_COMMANDS``. Assertions
name one of ``PREDICATES``; ``compose`` checks the stored compose of a bridge.
Parsing is all or nothing: the first problem raises with its line number.
"""

import shlex
from dataclasses import dataclass, field
from typing import Optional

from protocol import errors
from protocol.codec import address
from protocol.conf import sim_settings
from protocol.endpoint import NIL, SecurityStack
from protocol.lifecycle import PacketState
from protocol.msglib import LibKey, LibraryKind, MessageLibRecord
from protocol.oapps import APP_KINDS
from protocol.simchain import ChainConfig
from protocol.workers import Behavior, DvnSpec, ExecutorSpec, FaultEntry, FaultSchedule, PrecrimeSpec

from .errors import ScenarioSyntaxError, UnknownReference

TIMELINE_COMMANDS = (
    'send', 'bridge', 'advance', 'fault', 'recvlib', 'sendlib', 'stack', 'skip', 'clear',
    'nilify', 'burn', 'deliver', 'commit', 'topup', 'assert',
)
PATH_COMMANDS = ('skip', 'clear', 'nilify', 'burn', 'deliver', 'commit')
PREDICATES = (
    'state', 'compose', 'delivered-count', 'balance', 'trace-contains', 'invariant-holds', 'lazy', 'inbound',
    'outcome',
)
COMPOSE_STATES = ('Stored', 'Executed', 'Absent')
MAX_SEED = 2**64 - 1
MUTANTS = ('skip-unchecked', 'deliver-ungated')


@dataclass
class LibraryDecl:
    line: int
    record: MessageLibRecord
    chains: tuple = ()


@dataclass
class OAppDecl:
    line: int
    name: str
    kind: str
    eid: int
    address: bytes
    balance: Optional[int] = None
    attrs: dict = field(default_factory=dict)
    compose: str = ''


@dataclass
class StackDecl:
    line: int
    owner: str
    remote: int
    stack: SecurityStack


@dataclass
class DefaultDecl:
    line: int
    eid: int
    remote: int
    stack: SecurityStack


@dataclass
class ScenarioEvent:
    tick: int
    line: int
    command: str
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)
    text: str = ''


@dataclass
class Scenario:
    seed: int = 0
    ticks: Optional[int] = None
    chains: dict = field(default_factory=dict)
    libraries: list = field(default_factory=list)
    workers: list = field(default_factory=list)
    oapps: dict = field(default_factory=dict)
    peers: list = field(default_factory=list)
    stacks: list = field(default_factory=list)
    defaults: list = field(default_factory=list)
    optins: list = field(default_factory=list)
    mutant: Optional[str] = None
    timeline: list = field(default_factory=list)
    source: str = ''

    @property
    def worker_ids(self) -> dict:
        return {spec.id: spec for spec in self.workers}

    @property
    def faults(self) -> FaultSchedule:
        return FaultSchedule(tuple(
            FaultEntry(event.tick, event.kwargs['worker'], event.kwargs['behavior'])
            for event in self.timeline if event.command == 'fault'
        ))

    @property
    def paths(self) -> set:
        return {(a, b) for a, b in self.peers} | {(b, a) for a, b in self.peers}

    @property
    def end_tick(self) -> int:
        if self.ticks is not None:
            return self.ticks
        last = self.timeline[-1].tick if self.timeline else 0
        return min(last + 20, sim_settings.MAX_TICKS)


def _split(line: int, tokens):
    args, kwargs = [], {}
    for token in tokens:
        key, sep, value = token.partition('=')
        if sep and key:
            if key in kwargs:
                raise ScenarioSyntaxError(f'duplicate argument {key!r}', line)
            kwargs[key] = value
        else:
            args.append(token)
    return args, kwargs


def _int(line, value, name, minimum=0, maximum=None):
    try:
        number = int(value, 16) if isinstance(value, str) and value.startswith('0x') else int(value)
    except (TypeError, ValueError):
        raise ScenarioSyntaxError(f'{name} must be an integer, got {value!r}', line) from None
    if number < minimum:
        raise ScenarioSyntaxError(f'{name} must be at least {minimum}', line)
    if maximum is not None and number > maximum:
        raise ScenarioSyntaxError(f'{name} must be at most {maximum}', line)
    return number


def _hex(line, value, name) -> bytes:
    text = value[2:] if value.startswith('0x') else value
    if text in ('', '-'):
        return b''
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ScenarioSyntaxError(f'{name} is not hex', line) from None


def _ids(value) -> frozenset:
    if value in (None, '', '-'):
        return frozenset()
    return frozenset(v for v in value.split(',') if v)


def _eids(line, value) -> tuple:
    return tuple(_int(line, v, 'eid', minimum=1) for v in value.split(',') if v)


def _lib(line, value) -> LibKey:
    try:
        return LibKey.parse(value)
    except errors.ProtocolError:
        raise ScenarioSyntaxError(f'bad library reference {value!r}', line) from None


def _behavior(line, value) -> Behavior:
    try:
        return Behavior.parse(value)
    except errors.ProtocolError as exc:
        raise ScenarioSyntaxError(exc.detail, line) from None


class ScenarioParser:
    def __init__(self, text: str):
        self.text = text
        self.scenario = Scenario(source=text)
        self._libraries = set()

    def parse(self) -> Scenario:
        last_tick = 0
        for number, raw in enumerate(self.text.splitlines(), start=1):
            try:
                tokens = shlex.split(raw, comments=True)
            except ValueError as exc:
                raise ScenarioSyntaxError(str(exc), number) from None
            if not tokens:
                continue
            head, rest = tokens[0], tokens[1:]
            if head == 'at':
                if len(rest) < 2:
                    raise ScenarioSyntaxError('expected at <tick> <command>', number)
                tick = _int(number, rest[0], 'tick', minimum=1)
                if tick < last_tick:
                    raise ScenarioSyntaxError('timeline ticks must be non-decreasing', number)
                last_tick = tick
                self.timeline(number, tick, rest[1], rest[2:], raw.strip())
                continue
            handler = getattr(self, f'setup_{head}', None)
            if handler is None:
                raise ScenarioSyntaxError(f'unknown command {head!r}', number)
            args, kwargs = _split(number, rest)
            handler(number, args, kwargs)
        return self.scenario

    # References

    def _chain(self, line, eid) -> int:
        eid = _int(line, eid, 'eid', minimum=1)
        if eid not in self.scenario.chains:
            raise UnknownReference(eid, line, kind='chain')
        return eid

    def _oapp(self, line, name) -> OAppDecl:
        try:
            return self.scenario.oapps[name]
        except KeyError:
            raise UnknownReference(name, line, kind='oapp') from None

    def _worker(self, line, worker_id, kinds=None):
        spec = self.scenario.worker_ids.get(worker_id)
        if spec is None or (kinds and not isinstance(spec, kinds)):
            raise UnknownReference(worker_id, line, kind='worker')
        return spec

    def _known_lib(self, line, key):
        if key is not None and key not in self._libraries:
            raise UnknownReference(str(key), line, kind='library')
        return key

    def _require(self, line, kwargs, *names):
        for name in names:
            if name not in kwargs:
                raise ScenarioSyntaxError(f'missing {name}=', line)

    # Setup

    def setup_seed(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected seed <n>', line)
        self.scenario.seed = _int(line, args[0], 'seed', maximum=MAX_SEED)

    def setup_ticks(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected ticks <n>', line)
        self.scenario.ticks = _int(line, args[0], 'ticks', minimum=1)

    def setup_chain(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected chain <eid>', line)
        eid = _int(line, args[0], 'eid', minimum=1)
        if eid in self.scenario.chains:
            raise ScenarioSyntaxError(f'duplicate chain {eid}', line)
        options = {}
        for key, name in (('budget', 'iteration_budget'), ('maxpayload', 'max_payload'),
                          ('blocktime', 'block_time_ticks')):
            if key in kwargs:
                options[name] = _int(line, kwargs[key], key, minimum=1)
        try:
            self.scenario.chains[eid] = ChainConfig(eid=eid, **options)
        except errors.ProtocolError as exc:
            raise ScenarioSyntaxError(exc.detail, line) from None

    def setup_library(self, line, args, kwargs):
        if len(args) != 2:
            raise ScenarioSyntaxError('expected library <libId> <major>.<minor>', line)
        key = _lib(line, f'{args[0]}@{args[1]}')
        try:
            kind = LibraryKind(kwargs.get('kind', 'uln'))
            record = MessageLibRecord(*key, kind=kind, behavior=kwargs.get('behavior', ''),
                                      allowlist=_ids(kwargs.get('allow')))
        except (ValueError, errors.ProtocolError):
            raise ScenarioSyntaxError('bad library declaration', line) from None
        chains = tuple(self._chain(line, e) for e in _eids(line, kwargs.get('chain', '')))
        if key in self._libraries and not chains:
            raise ScenarioSyntaxError(f'duplicate library {key}', line)
        self._libraries.add(key)
        self.scenario.libraries.append(LibraryDecl(line, record, chains))

    def _add_worker(self, line, spec):
        if spec.id in self.scenario.worker_ids:
            raise ScenarioSyntaxError(f'duplicate worker {spec.id!r}', line)
        self.scenario.workers.append(spec)

    def setup_dvn(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected dvn <id>', line)
        self._require(line, kwargs, 'watch')
        watched = frozenset(self._chain(line, e) for e in _eids(line, kwargs['watch']))
        latency, _, jitter = kwargs.get('latency', '1').partition('+')
        spec = DvnSpec(id=args[0], watched_chains=watched,
                       latency_ticks=_int(line, latency, 'latency', minimum=1),
                       jitter_ticks=_int(line, jitter or '0', 'jitter'),
                       behavior=_behavior(line, kwargs.get('behavior', 'honest')))
        self._add_worker(line, spec)

    def setup_executor(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected executor <id>', line)
        try:
            spec = ExecutorSpec(id=args[0], behavior=_behavior(line, kwargs.get('behavior', 'honest')),
                                mode=kwargs.get('mode', 'configured'))
        except errors.ProtocolError as exc:
            raise ScenarioSyntaxError(exc.detail, line) from None
        self._add_worker(line, spec)

    def setup_precrime(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected precrime <id>', line)
        self._require(line, kwargs, 'worker')
        worker_id = _int(line, kwargs['worker'], 'worker')
        if worker_id > 255:
            raise ScenarioSyntaxError('worker must fit in one byte', line)
        self._add_worker(line, PrecrimeSpec(id=args[0], worker_id=worker_id))

    def setup_oapp(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected oapp <name>', line)
        name = args[0]
        if name in self.scenario.oapps:
            raise ScenarioSyntaxError(f'duplicate oapp {name!r}', line)
        self._require(line, kwargs, 'chain', 'addr')
        kind = kwargs.get('kind', 'plain')
        if kind not in APP_KINDS:
            raise ScenarioSyntaxError(f'unknown oapp kind {kind!r}', line)
        eid = self._chain(line, kwargs['chain'])
        try:
            addr = address(kwargs['addr'])
        except errors.ProtocolError:
            raise ScenarioSyntaxError('bad address', line) from None
        if any(o.eid == eid and o.address == addr for o in self.scenario.oapps.values()):
            raise ScenarioSyntaxError('address already used on this chain', line)

        attrs = {}
        for key, attr in (('locked', 'locked'), ('minted', 'minted'), ('funds', 'available'),
                          ('reserves', 'reserve_out')):
            if key in kwargs:
                attrs[attr] = _int(line, kwargs[key], key)
        if 'ratio' in kwargs:
            amount_in, _, amount_out = kwargs['ratio'].partition(':')
            attrs['ratio_den'] = _int(line, amount_in, 'ratio', minimum=1)
            attrs['ratio_num'] = _int(line, amount_out, 'ratio', minimum=1)
        compose = kwargs.get('compose', '')
        if compose:
            target = self._oapp(line, compose)
            if target.eid != eid:
                raise ScenarioSyntaxError('compose target must live on the same chain', line)
        balance = _int(line, kwargs['balance'], 'balance') if 'balance' in kwargs else None
        self.scenario.oapps[name] = OAppDecl(line, name, kind, eid, addr, balance, attrs, compose)

    def setup_peer(self, line, args, kwargs):
        if len(args) != 2:
            raise ScenarioSyntaxError('expected peer <oapp> <oapp>', line)
        a, b = (self._oapp(line, name) for name in args)
        if a.eid == b.eid:
            raise ScenarioSyntaxError('peers must live on different chains', line)
        self.scenario.peers.append((a.name, b.name))

    def stack_from(self, line, kwargs) -> SecurityStack:
        self._require(line, kwargs, 'send', 'recv', 'executor')
        required = _ids(kwargs.get('required'))
        optional = _ids(kwargs.get('optional'))
        for dvn in sorted(required | optional):
            self._worker(line, dvn, DvnSpec)
        self._worker(line, kwargs['executor'], ExecutorSpec)
        prev = self._known_lib(line, _lib(line, kwargs['prev'])) if 'prev' in kwargs else None
        stack = SecurityStack(
            send_library=self._known_lib(line, _lib(line, kwargs['send'])),
            receive_library=self._known_lib(line, _lib(line, kwargs['recv'])),
            prev_receive_library=prev,
            grace_period_end=_int(line, kwargs['grace'], 'grace') if prev and 'grace' in kwargs else None,
            required_dvns=required,
            optional_dvns=optional,
            optional_threshold=_int(line, kwargs.get('threshold', '0'), 'threshold'),
            executor=kwargs['executor'],
        )
        try:
            stack.validate()
        except errors.InvalidStack as exc:
            raise ScenarioSyntaxError(str(exc), line) from None
        return stack

    def _remote(self, line, oapp: OAppDecl, kwargs) -> int:
        self._require(line, kwargs, 'remote')
        remote = self._chain(line, kwargs['remote'])
        if remote == oapp.eid:
            raise ScenarioSyntaxError('remote must differ from the oapp chain', line)
        return remote

    def setup_stack(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected stack <oapp>', line)
        oapp = self._oapp(line, args[0])
        remote = self._remote(line, oapp, kwargs)
        self.scenario.stacks.append(StackDecl(line, oapp.name, remote, self.stack_from(line, kwargs)))

    def setup_default(self, line, args, kwargs):
        self._require(line, kwargs, 'chain', 'remote')
        eid = self._chain(line, kwargs['chain'])
        remote = self._chain(line, kwargs['remote'])
        self.scenario.defaults.append(DefaultDecl(line, eid, remote, self.stack_from(line, kwargs)))

    def setup_optin(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected optin <oapp>', line)
        oapp = self._oapp(line, args[0])
        self.scenario.optins.append((oapp.name, self._remote(line, oapp, kwargs)))

    def setup_endpoint(self, line, args, kwargs):
        mutant = kwargs.get('mutant')
        if mutant not in MUTANTS:
            raise ScenarioSyntaxError(f'unknown endpoint mutant {mutant!r}', line)
        self.scenario.mutant = mutant

    # Timeline

    def timeline(self, line, tick, command, tokens, text):
        if command not in TIMELINE_COMMANDS:
            raise ScenarioSyntaxError(f'unknown timeline command {command!r}', line)
        if command == 'assert' and tokens and tokens[0] == 'trace-contains':
            args, kwargs = [tokens[0]], {'text': ' '.join(tokens[1:])}
        else:
            args, kwargs = _split(line, tokens)
        check = getattr(self, f'check_{command.replace("-", "_")}', None)
        if command in PATH_COMMANDS:
            self.check_path_command(line, command, args, kwargs)
        elif check is not None:
            check(line, args, kwargs)
        self.scenario.timeline.append(ScenarioEvent(tick, line, command, tuple(args), kwargs, text))

    def check_send(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected send <oapp>', line)
        oapp = self._oapp(line, args[0])
        self._require(line, kwargs, 'dst')
        kwargs['dst'] = self._chain(line, kwargs['dst'])
        if kwargs['dst'] == oapp.eid:
            raise ScenarioSyntaxError('dst must differ from the oapp chain', line)
        kwargs['payload'] = _hex(line, kwargs.get('payload', ''), 'payload')
        kwargs['options'] = _hex(line, kwargs.get('options', ''), 'options')

    def check_bridge(self, line, args, kwargs):
        self.check_send(line, args, kwargs)
        if self.scenario.oapps[args[0]].kind != 'bridge':
            raise ScenarioSyntaxError('bridge needs a bridge oapp', line)
        self._require(line, kwargs, 'amount')
        kwargs['amount'] = _int(line, kwargs['amount'], 'amount')
        kwargs['compose'] = kwargs.get('compose', '0') not in ('0', 'false', 'no')

    def check_advance(self, line, args, kwargs):
        if len(args) not in (1, 2):
            raise ScenarioSyntaxError('expected advance <eid> [<blocks>]', line)
        kwargs['eid'] = self._chain(line, args[0])
        kwargs['blocks'] = _int(line, args[1], 'blocks', minimum=1) if len(args) == 2 else 1

    def check_fault(self, line, args, kwargs):
        worker = args[0] if args else kwargs.get('worker') or kwargs.get('dvn') or kwargs.get('executor')
        behavior = args[1] if len(args) > 1 else kwargs.get('behavior')
        if worker is None or behavior is None:
            raise ScenarioSyntaxError('expected fault <worker> <behavior>', line)
        self._worker(line, worker)
        kwargs.clear()
        kwargs.update(worker=worker, behavior=_behavior(line, behavior))

    def check_recvlib(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected recvlib <oapp>', line)
        kwargs['remote'] = self._remote(line, self._oapp(line, args[0]), kwargs)
        self._require(line, kwargs, 'lib')
        kwargs['lib'] = self._known_lib(line, _lib(line, kwargs['lib']))
        kwargs['grace'] = _int(line, kwargs.get('grace', '0'), 'grace')

    def check_sendlib(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected sendlib <oapp>', line)
        kwargs['remote'] = self._remote(line, self._oapp(line, args[0]), kwargs)
        self._require(line, kwargs, 'lib')
        kwargs['lib'] = self._known_lib(line, _lib(line, kwargs['lib']))

    def check_stack(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected stack <oapp>', line)
        oapp = self._oapp(line, args[0])
        remote = self._remote(line, oapp, kwargs)
        stack = self.stack_from(line, kwargs)
        kwargs.clear()
        kwargs.update(remote=remote, stack=stack)

    def check_path_command(self, line, command, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError(f'expected {command} <oapp> from=<eid> nonce=<n>', line)
        oapp = self._oapp(line, args[0])
        self._require(line, kwargs, 'from', 'nonce')
        kwargs['from'] = self._chain(line, kwargs['from'])
        if kwargs['from'] == oapp.eid:
            raise ScenarioSyntaxError('from must differ from the oapp chain', line)
        kwargs['nonce'] = _int(line, kwargs['nonce'], 'nonce', minimum=1)
        if 'hash' in kwargs:
            kwargs['hash'] = NIL if kwargs['hash'] == 'nil' else _hex(line, kwargs['hash'], 'hash')
            if len(kwargs['hash']) != 32:
                raise ScenarioSyntaxError('hash must be 32 bytes', line)

    def check_topup(self, line, args, kwargs):
        if len(args) != 1:
            raise ScenarioSyntaxError('expected topup <oapp> amount=<n>', line)
        if self._oapp(line, args[0]).kind != 'swap':
            raise ScenarioSyntaxError('topup needs a swap oapp', line)
        self._require(line, kwargs, 'amount')
        kwargs['amount'] = _int(line, kwargs['amount'], 'amount')

    def check_assert(self, line, args, kwargs):
        if not args or args[0] not in PREDICATES:
            raise ScenarioSyntaxError(f'unknown predicate {args[0] if args else ""!r}', line)
        predicate = args[0]
        if predicate in ('state', 'compose', 'delivered-count', 'balance', 'lazy', 'inbound'):
            if len(args) < 2:
                raise ScenarioSyntaxError(f'{predicate} needs an oapp', line)
            oapp = self._oapp(line, args[1])
            if 'from' in kwargs:
                kwargs['from'] = self._chain(line, kwargs['from'])
            elif predicate in ('state', 'compose', 'lazy', 'inbound'):
                raise ScenarioSyntaxError('missing from=', line)
            if predicate in ('state', 'compose'):
                self._require(line, kwargs, 'nonce', 'is')
                kwargs['nonce'] = _int(line, kwargs['nonce'], 'nonce', minimum=1)
            if predicate == 'state':
                try:
                    kwargs['is'] = PacketState.parse(kwargs['is'])
                except ValueError as exc:
                    raise ScenarioSyntaxError(str(exc), line) from None
            elif predicate == 'compose':
                if not oapp.compose:
                    raise ScenarioSyntaxError(f'{oapp.name} has no compose target', line)
                if kwargs['is'] not in COMPOSE_STATES:
                    raise ScenarioSyntaxError(f'unknown compose state {kwargs["is"]!r}', line)
            elif predicate == 'balance':
                if len(args) != 3:
                    raise ScenarioSyntaxError('expected balance <oapp> <field> is=<n>', line)
                self._require(line, kwargs, 'is')
                kwargs['is'] = _int(line, kwargs['is'], 'is')
            else:
                self._require(line, kwargs, 'is')
                kwargs['is'] = _int(line, kwargs['is'], 'is')
        elif predicate == 'trace-contains' and not kwargs['text']:
            raise ScenarioSyntaxError('trace-contains needs text', line)
        elif predicate == 'outcome':
            self._require(line, kwargs, 'is')


def parse_scenario(text: str) -> Scenario:
    return ScenarioParser(text).parse()


def load_scenario(path) -> Scenario:
    with open(path, 'rb') as fh:
        raw = fh.read()
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as exc:
        raise ScenarioSyntaxError(f'invalid UTF-8 at byte {exc.start}', raw.count(b'\n', 0, exc.start) + 1) from None
    return parse_scenario(text)
