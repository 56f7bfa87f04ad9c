"""
Simulator settings, read from the ``OMNISIM`` dict in the Django settings.

    OMNISIM = {
        'ITERATION_BUDGET': 1000,
        'FEE_PER_DVN': 10,
    }

Access is by attribute, e.g. ``sim_settings.ITERATION_BUDGET``; missing keys
fall back to ``DEFAULTS``.
"""

from django.conf import settings
from django.core.signals import setting_changed

DEFAULTS = {
    'ITERATION_BUDGET': 1000,
    'MAX_PAYLOAD': 64 * 1024,
    'BLOCK_TIME_TICKS': 1,
    'FEE_PER_DVN': 10,
    'EXECUTOR_FEE': 5,
    'DEFAULT_OAPP_BALANCE': 1_000_000,
    'REGISTRY_ADMIN': '00' * 31 + 'ad',
    'FUZZ_ITERATIONS': 10_000,
    'FUZZ_MAX_NONCES': 8,
    'FUZZ_MAX_OPS': 16,
    'MAX_TICKS': 10_000,
}


class SimSettings:
    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS
        self._cached = set()

    @property
    def user_settings(self):
        if not hasattr(self, '_user_settings'):
            self._user_settings = getattr(settings, 'OMNISIM', {})
        return self._user_settings

    def __getattr__(self, attr):
        if attr not in self.defaults:
            raise AttributeError(f"Invalid OMNISIM setting: '{attr}'")
        val = self.user_settings.get(attr, self.defaults[attr])
        self._cached.add(attr)
        setattr(self, attr, val)
        return val

    def reload(self):
        for attr in self._cached:
            delattr(self, attr)
        self._cached.clear()
        if hasattr(self, '_user_settings'):
            delattr(self, '_user_settings')


sim_settings = SimSettings(DEFAULTS)


def reload_sim_settings(*args, **kwargs):
    if kwargs['setting'] == 'OMNISIM':
        sim_settings.reload()


setting_changed.connect(reload_sim_settings)
