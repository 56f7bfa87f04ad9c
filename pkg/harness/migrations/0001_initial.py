import django.db.models.deletion
from django.conf import settings
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
        migrations.swappable_dependency(settings.AUTH_USER_MODEL),
    ]

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('source', models.TextField()),
                ('seed', models.CharField(default='0', max_length=20)),
                ('status', models.CharField(choices=[('passed', 'Passed'), ('failed', 'Failed'), ('error', 'Error')], max_length=16)),
                ('ticks', models.PositiveIntegerField(default=0)),
                ('trace', models.TextField(blank=True, default='')),
                ('trace_digest', models.CharField(blank=True, default='', max_length=64)),
                ('assertion_count', models.PositiveIntegerField(default=0)),
                ('failure_count', models.PositiveIntegerField(default=0)),
                ('error', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('owner', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='scenario_runs', to=settings.AUTH_USER_MODEL)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
                'indexes': [models.Index(fields=['status'], name='harness_sce_status_5c1f0e_idx')],
            },
        ),
        migrations.CreateModel(
            name='AssertionOutcome',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('line', models.PositiveIntegerField()),
                ('tick', models.PositiveIntegerField()),
                ('predicate', models.TextField()),
                ('passed', models.BooleanField()),
                ('detail', models.TextField(blank=True, default='')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='assertions', to='harness.scenariorun')),
            ],
            options={
                'ordering': ['line', 'id'],
            },
        ),
        migrations.CreateModel(
            name='TraceLine',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('position', models.PositiveIntegerField()),
                ('kind', models.CharField(choices=[('chain', 'Chain event'), ('worker', 'Worker action'), ('harness', 'Harness')], max_length=16)),
                ('subject', models.CharField(max_length=64)),
                ('name', models.CharField(max_length=64)),
                ('text', models.TextField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='trace_lines', to='harness.scenariorun')),
            ],
            options={
                'ordering': ['position'],
                'indexes': [models.Index(fields=['run', 'kind'], name='harness_tra_run_id_8d2a41_idx')],
                'constraints': [models.UniqueConstraint(fields=('run', 'position'), name='harness_traceline_unique_position')],
            },
        ),
    ]
