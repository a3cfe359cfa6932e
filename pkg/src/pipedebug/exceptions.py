class DebugError(Exception):
    """Base class for every error raised by pipedebug."""


class ConfigError(DebugError, ValueError):
    pass


class BudgetExhausted(DebugError):
    pass


class BackendFailure(DebugError):
    """The pipeline could not be run at all (distinct from a ``fail`` evaluation)."""


class ReplayMiss(BackendFailure):
    pass


class InconsistentHistory(DebugError):
    """The same instance was observed with two different outcomes."""


class NoFailingInstance(DebugError):
    pass


class NoSucceedingInstance(DebugError):
    pass


class UniverseTooLarge(DebugError):
    pass
