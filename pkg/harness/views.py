import logging

from django.shortcuts import get_object_or_404
from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import status
from rest_framework.decorators import api_view, permission_classes
from rest_framework.filters import SearchFilter
from rest_framework.mixins import CreateModelMixin, DestroyModelMixin
from rest_framework.permissions import AllowAny, IsAuthenticated
from rest_framework.response import Response
from rest_framework.viewsets import ReadOnlyModelViewSet

from protocol.vectors import golden_vectors
from harness.errors import ScenarioError
from harness.filters import StableOrderingFilter
from harness.fuzz import fuzz_channel
from harness.models import AssertionOutcome, ScenarioRun, TraceLine
from harness.pagination import DefaultPagination
from harness.runner import run_scenario
from harness.scenario import parse_scenario
from harness.serializers import (
    AssertionOutcomeSerializer, CreateScenarioRunSerializer, FuzzRequestSerializer, ScenarioRunDetailSerializer,
    ScenarioRunSerializer, TraceLineSerializer,
)

logger = logging.getLogger(__name__)


class ScenarioRunViewSet(CreateModelMixin, DestroyModelMixin, ReadOnlyModelViewSet):
    permission_classes = [IsAuthenticated]
    pagination_class = DefaultPagination
    filter_backends = [DjangoFilterBackend, SearchFilter, StableOrderingFilter]
    filterset_fields = ['status', 'seed']
    ordering_fields = ['created_at', 'name', 'failure_count', 'ticks']
    search_fields = ['name']

    def get_queryset(self):
        return ScenarioRun.objects.filter(owner_id=self.request.user.id)

    def get_serializer_class(self):
        if self.action == 'create':
            return CreateScenarioRunSerializer
        if self.action == 'retrieve':
            return ScenarioRunDetailSerializer
        return ScenarioRunSerializer

    def create(self, request, *args, **kwargs):
        serializer = CreateScenarioRunSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            scenario = parse_scenario(data['source'])
            result = run_scenario(scenario, seed=data.get('seed'))
        except ScenarioError as e:
            logger.info('scenario %r rejected: %s', data['name'], e)
            return Response({'detail': e.reason, 'line': e.line}, status=status.HTTP_400_BAD_REQUEST)

        run = ScenarioRun.record(data['name'], data['source'], result, owner=request.user)
        logger.info('scenario %r finished %s digest=%s', run.name, run.status, run.trace_digest)
        return Response(ScenarioRunDetailSerializer(run).data, status=status.HTTP_201_CREATED)


class RunChildViewSet(ReadOnlyModelViewSet):
    permission_classes = [IsAuthenticated]
    pagination_class = DefaultPagination

    def run(self):
        return get_object_or_404(ScenarioRun, pk=self.kwargs['run_pk'], owner_id=self.request.user.id)


class TraceLineViewSet(RunChildViewSet):
    serializer_class = TraceLineSerializer
    filter_backends = [DjangoFilterBackend, SearchFilter]
    filterset_fields = ['kind', 'subject', 'name']
    search_fields = ['text']
    lookup_field = 'position'

    def get_queryset(self):
        return TraceLine.objects.filter(run=self.run())


class AssertionOutcomeViewSet(RunChildViewSet):
    serializer_class = AssertionOutcomeSerializer
    filter_backends = [DjangoFilterBackend]
    filterset_fields = ['passed']

    def get_queryset(self):
        return AssertionOutcome.objects.filter(run=self.run())


@api_view(['POST'])
@permission_classes([IsAuthenticated])
def fuzz(request):
    serializer = FuzzRequestSerializer(data=request.data)
    serializer.is_valid(raise_exception=True)
    report = fuzz_channel(**serializer.validated_data)
    return Response(report.to_dict())


@api_view(['GET'])
@permission_classes([AllowAny])
def vectors(request):
    return Response(golden_vectors())
