from django.core.management.base import BaseCommand

from protocol.vectors import golden_vectors


class Command(BaseCommand):
    help = 'Print the codec golden vectors as hex, one per line.'

    def handle(self, *args, **options):
        for name, value in golden_vectors().items():
            self.stdout.write(f'{name} {value}')
