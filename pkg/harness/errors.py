class ScenarioError(Exception):
    """A scenario that cannot be loaded. ``line`` is 1-based."""

    def __init__(self, reason, line=None):
        self.reason = reason
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.reason
        return f'line {self.line}: {self.reason}'


class ScenarioSyntaxError(ScenarioError):
    pass


class UnknownReference(ScenarioError):
    def __init__(self, ref, line=None, kind='id'):
        self.ref = ref
        super().__init__(f'unknown {kind} {ref!r}', line)
