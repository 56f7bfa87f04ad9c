from django.core.management.base import BaseCommand, CommandError

from harness.errors import ScenarioError
from harness.models import ScenarioRun
from harness.runner import run_scenario
from harness.scenario import MAX_SEED, load_scenario


class Command(BaseCommand):
    help = 'Run a scenario file and print its trace. Exits 1 on a failed assertion, 2 on a scenario error.'

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='Path to a .lz scenario file.')
        parser.add_argument('--trace', metavar='OUT', help='Write the trace to this file instead of stdout.')
        parser.add_argument('--seed', type=int, help='Override the scenario seed.')
        parser.add_argument('--save', action='store_true', help='Persist the run to the database.')

    def handle(self, *args, **options):
        path = options['scenario']
        if options['seed'] is not None and not 0 <= options['seed'] <= MAX_SEED:
            raise CommandError(f'--seed must be between 0 and {MAX_SEED}', returncode=2)
        try:
            scenario = load_scenario(path)
            result = run_scenario(scenario, seed=options['seed'])
        except OSError as e:
            raise CommandError(f'{path}: {e.strerror}', returncode=2)
        except ScenarioError as e:
            if options['save']:
                with open(path, encoding='utf-8', errors='replace') as fh:
                    ScenarioRun.record_error(path, fh.read(), e, seed=options['seed'] or 0)
            raise CommandError(f'{path}: {e}', returncode=2)

        if options['trace']:
            with open(options['trace'], 'w', encoding='utf-8') as fh:
                fh.write(result.trace)
        else:
            self.stdout.write(result.trace, ending='')

        if options['save']:
            with open(path, encoding='utf-8') as fh:
                run = ScenarioRun.record(path, fh.read(), result)
            self.stderr.write(f'saved run {run.pk}')

        for failure in result.failures:
            self.stderr.write(self.style.ERROR(f'line {failure.line}: {failure.predicate}: {failure.detail}'))
        summary = f'{len(result.assertions) - len(result.failures)}/{len(result.assertions)} assertions passed'
        if result.failures:
            raise CommandError(summary, returncode=1)
        self.stderr.write(self.style.SUCCESS(summary))
