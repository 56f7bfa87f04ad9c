from django.urls import include, path
from . import views
from rest_framework_nested import routers

router = routers.DefaultRouter()
router.register('runs', views.ScenarioRunViewSet, basename='runs')

runs_router = routers.NestedDefaultRouter(router, 'runs', lookup='run')
runs_router.register('trace', views.TraceLineViewSet, basename='run-trace')
runs_router.register('assertions', views.AssertionOutcomeViewSet, basename='run-assertions')

urlpatterns = [
    path('fuzz/', views.fuzz, name='fuzz'),
    path('vectors/', views.vectors, name='vectors'),

    # API
    path(r'', include(router.urls)),
    path(r'', include(runs_router.urls)),
]
