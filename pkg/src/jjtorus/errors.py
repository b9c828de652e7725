"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class IntegrationError(RuntimeError):
    """The adaptive integrator gave up before reaching the target time."""

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class ConvergenceError(RuntimeError):
    """Newton or continuation failed; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NotFoundError(LookupError):
    """A search (sign change, constriction, crossing) found nothing."""


class PoleError(ArithmeticError):
    """The requested value sits on a pole; ``location`` is the pole."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class OnDivisorError(ArithmeticError):
    """w = a/(2 s chi) is 0/0 because chi = a = 0."""


class UnclassifiableSingularity(RuntimeError):
    """A leaf singularity matched neither local model of the dichotomy."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump
