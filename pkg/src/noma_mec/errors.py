class NomaError(Exception):
    pass


class ConfigError(NomaError, ValueError):
    pass


class DomainError(NomaError, ValueError):
    pass


class InfeasibleRateError(NomaError):
    pass


class NoComputingResourceError(NomaError):
    pass


class InfeasibleComputingError(NomaError):
    """Phase-1 computing allocation ran out of computing RBs."""

    def __init__(self, message, user=None):
        super().__init__(message)
        self.user = user


class InfeasibleDeadlineError(NomaError):
    def __init__(self, message, user=None):
        super().__init__(message)
        self.user = user


class ClusterInfeasibleError(NomaError):
    """No strictly feasible power vector exists for a cluster.

    ``certificate`` maps constraint names to their values at the best
    point found by the feasibility phase (positive means violated).
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class NonConvergenceError(NomaError):
    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}


class InstanceTooLargeError(NomaError, ValueError):
    pass


class ConsistencyError(NomaError):
    """A solver result contradicts a property that must hold by construction."""


class InfeasibleInstanceError(NomaError):
    """No enumerated configuration of a tiny instance is feasible.

    ``certificate`` counts how the per-cluster subproblems failed.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}
