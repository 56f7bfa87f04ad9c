from rest_framework import serializers

from protocol.conf import sim_settings
from harness.fuzz import MUTANTS
from harness.models import AssertionOutcome, ScenarioRun, TraceLine
from harness.scenario import MAX_SEED


class ScenarioRunSerializer(serializers.ModelSerializer):
    seed = serializers.IntegerField(read_only=True)

    class Meta:
        model = ScenarioRun
        fields = ['id', 'name', 'seed', 'status', 'ticks', 'trace_digest', 'assertion_count', 'failure_count',
                  'error', 'created_at']


class ScenarioRunDetailSerializer(serializers.ModelSerializer):
    seed = serializers.IntegerField(read_only=True)

    class Meta:
        model = ScenarioRun
        fields = ['id', 'owner', 'name', 'source', 'seed', 'status', 'ticks', 'trace', 'trace_digest',
                  'assertion_count', 'failure_count', 'error', 'created_at']


class CreateScenarioRunSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=255)
    source = serializers.CharField(trim_whitespace=False)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, required=False, allow_null=True)


class AssertionOutcomeSerializer(serializers.ModelSerializer):
    class Meta:
        model = AssertionOutcome
        fields = ['id', 'line', 'tick', 'predicate', 'passed', 'detail']


class TraceLineSerializer(serializers.ModelSerializer):
    class Meta:
        model = TraceLine
        fields = ['position', 'kind', 'subject', 'name', 'text']


class FuzzRequestSerializer(serializers.Serializer):
    iterations = serializers.IntegerField(min_value=0, max_value=100_000, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)
    max_nonces = serializers.IntegerField(min_value=1, max_value=16, required=False)
    mutant = serializers.ChoiceField(choices=sorted(MUTANTS), required=False, allow_null=True)

    def validate(self, attrs):
        attrs.setdefault('iterations', sim_settings.FUZZ_ITERATIONS)
        attrs.setdefault('max_nonces', sim_settings.FUZZ_MAX_NONCES)
        return attrs
