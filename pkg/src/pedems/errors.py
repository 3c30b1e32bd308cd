"""Exception types raised across the package."""


class PedemsError(Exception):
    """Base class for all errors raised by pedems."""


class ValidationError(PedemsError, ValueError):
    pass


class DuplicateId(ValidationError):
    pass


class UnknownSegment(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownRoute(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyRoute(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class NegativeEnergy(ValidationError):
    pass


class NoSamples(PedemsError):
    pass


class NoMatchingRoute(PedemsError):
    """No stored route passes through the queried segment."""


class EmptyHistory(PedemsError):
    pass


class UnknownState(PedemsError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CyclicModel(PedemsError):
    pass


class NegativeBudget(ValidationError):
    pass


class NegativeCap(ValidationError):
    pass


class InsufficientBudgetForGreenZone(PedemsError):
    """The energy needed to drive every green segment electrically exceeds the budget."""

    def __init__(self, required: float, budget: float):
        super().__init__(
            f"green zone needs {required:.6g} kWh but only {budget:.6g} kWh is available"
        )
        self.required = required
        self.budget = budget


class SolverError(PedemsError):
    pass
