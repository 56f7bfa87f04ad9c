from django.conf import settings
from django.db import models, transaction


class ScenarioRun(models.Model):
    STATUS_PASSED = 'passed'
    STATUS_FAILED = 'failed'
    STATUS_ERROR = 'error'
    STATUS_CHOICES = [(STATUS_PASSED, 'Passed'), (STATUS_FAILED, 'Failed'), (STATUS_ERROR, 'Error')]

    owner = models.ForeignKey(settings.AUTH_USER_MODEL, on_delete=models.CASCADE, null=True, blank=True,
                              related_name='scenario_runs')
    name = models.CharField(max_length=255)
    source = models.TextField()
    # uint64 in decimal; integer columns stop at 2**63 - 1
    seed = models.CharField(max_length=20, default='0')
    status = models.CharField(max_length=16, choices=STATUS_CHOICES)
    ticks = models.PositiveIntegerField(default=0)
    trace = models.TextField(blank=True, default='')
    trace_digest = models.CharField(max_length=64, blank=True, default='')
    assertion_count = models.PositiveIntegerField(default=0)
    failure_count = models.PositiveIntegerField(default=0)
    error = models.TextField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self) -> str:
        return f"{self.name} ({self.status})"

    class Meta:
        indexes = [
            models.Index(fields=['status'], name='harness_sce_status_5c1f0e_idx'),
        ]
        ordering = ['-created_at', '-id']

    @classmethod
    def record(cls, name, source, result, owner=None):
        """Persist a finished run with its assertion outcomes and trace lines."""
        with transaction.atomic():
            run = cls.objects.create(
                owner=owner,
                name=name,
                source=source,
                seed=str(result.seed),
                status=cls.STATUS_PASSED if result.passed else cls.STATUS_FAILED,
                ticks=result.ticks,
                trace=result.trace,
                trace_digest=result.digest,
                assertion_count=len(result.assertions),
                failure_count=len(result.failures),
            )
            AssertionOutcome.objects.bulk_create([
                AssertionOutcome(run=run, line=a.line, tick=a.tick, predicate=a.predicate, passed=a.passed,
                                 detail=a.detail)
                for a in result.assertions
            ])
            TraceLine.objects.bulk_create([
                TraceLine(run=run, position=i, kind=entry.kind, subject=entry.subject, name=entry.name,
                          text=entry.line)
                for i, entry in enumerate(result.journal)
            ])
        return run

    @classmethod
    def record_error(cls, name, source, error, seed=0, owner=None):
        return cls.objects.create(owner=owner, name=name, source=source, seed=str(seed), status=cls.STATUS_ERROR,
                                  error=str(error))


class AssertionOutcome(models.Model):
    run = models.ForeignKey('ScenarioRun', on_delete=models.CASCADE, related_name='assertions')
    line = models.PositiveIntegerField()
    tick = models.PositiveIntegerField()
    predicate = models.TextField()
    passed = models.BooleanField()
    detail = models.TextField(blank=True, default='')

    def __str__(self) -> str:
        return f"line {self.line}: {'pass' if self.passed else 'fail'}"

    class Meta:
        ordering = ['line', 'id']


class TraceLine(models.Model):
    KIND_CHOICES = [('chain', 'Chain event'), ('worker', 'Worker action'), ('harness', 'Harness')]

    run = models.ForeignKey('ScenarioRun', on_delete=models.CASCADE, related_name='trace_lines')
    position = models.PositiveIntegerField()
    kind = models.CharField(max_length=16, choices=KIND_CHOICES)
    subject = models.CharField(max_length=64)
    name = models.CharField(max_length=64)
    text = models.TextField()

    def __str__(self) -> str:
        return self.text

    class Meta:
        indexes = [
            models.Index(fields=['run', 'kind'], name='harness_tra_run_id_8d2a41_idx'),
        ]
        ordering = ['position']
        constraints = [
            models.UniqueConstraint(fields=['run', 'position'], name='harness_traceline_unique_position'),
        ]
