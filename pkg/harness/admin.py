from django.contrib import admin
from . import models


class AssertionOutcomeInline(admin.TabularInline):
    model = models.AssertionOutcome
    extra = 0
    readonly_fields = ['line', 'tick', 'predicate', 'passed', 'detail']
    can_delete = False


@admin.register(models.ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'owner', 'status', 'seed', 'ticks', 'failure_count', 'created_at']
    list_filter = ['status']
    search_fields = ['name']
    readonly_fields = ['trace_digest', 'created_at']
    inlines = [AssertionOutcomeInline]


@admin.register(models.TraceLine)
class TraceLineAdmin(admin.ModelAdmin):
    list_display = ['run', 'position', 'kind', 'name']
    list_filter = ['kind']
    search_fields = ['text']
    autocomplete_fields = ['run']
