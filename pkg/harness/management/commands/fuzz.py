import json

from django.core.management.base import BaseCommand, CommandError

from protocol.conf import sim_settings
from harness.fuzz import MUTANTS, fuzz_channel
from harness.scenario import MAX_SEED


class Command(BaseCommand):
    help = 'Fuzz the endpoint channel against its reference model. Exits 1 when a counterexample is found.'

    def add_arguments(self, parser):
        parser.add_argument('--iters', type=int, default=sim_settings.FUZZ_ITERATIONS)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--max-nonces', type=int, default=sim_settings.FUZZ_MAX_NONCES)
        parser.add_argument('--mutant', choices=sorted(MUTANTS), help='Fuzz a deliberately broken endpoint.')
        parser.add_argument('--out', metavar='FILE', help='Write the counterexample scenario to this file.')

    def handle(self, *args, **options):
        if not 0 <= options['seed'] <= MAX_SEED:
            raise CommandError(f'--seed must be between 0 and {MAX_SEED}', returncode=2)
        report = fuzz_channel(iterations=options['iters'], seed=options['seed'],
                              max_nonces=options['max_nonces'], mutant=options['mutant'])
        self.stdout.write(json.dumps(report.to_dict(), indent=2))
        if report.passed:
            return

        found = report.counterexample
        if options['out']:
            with open(options['out'], 'w', encoding='utf-8') as fh:
                fh.write(found.scenario)
        raise CommandError(f'counterexample at iteration {found.iteration}: {found.reason}', returncode=1)
