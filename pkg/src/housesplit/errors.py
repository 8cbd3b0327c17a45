"""Exception hierarchy.

The CLI maps each family to an exit code: ``InputError`` to 3,
``SchemaError`` to 4 and ``NumericalError`` to 5.
"""


class HousesplitError(Exception):
    """Base class for all package errors."""


class InputError(HousesplitError):
    """Malformed, missing or inconsistent input data."""


class MalformedRowError(InputError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class DuplicatePairError(InputError):
    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"({a}, {m})" for a, m in self.pairs[:10])
        more = "" if len(self.pairs) <= 10 else f" and {len(self.pairs) - 10} more"
        super().__init__(f"duplicate (account, movie) pairs: {shown}{more}")


class EmptyDatasetError(InputError):
    pass


class RatingScaleError(InputError):
    pass


class DatasetMismatchError(InputError):
    """Movie indices or dimensions do not agree with the features."""


class EmptyAccountError(InputError):
    pass


class HouseholdSpecError(InputError):
    pass


class SchemaError(HousesplitError):
    """Artifact file with a missing or unsupported ``schema_version``."""


class NumericalError(HousesplitError):
    pass


class SingularFitError(NumericalError):
    """Normal equations are singular; a positive ridge penalty is needed."""


class EmptyClassError(NumericalError):
    """A user label has no movies assigned (callers re-seed)."""

    def __init__(self, labels):
        self.labels = list(labels)
        super().__init__(f"empty user classes: {self.labels}")


class DegenerateAccountError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class FitError(NumericalError):
    """A distribution fit is infeasible for the given sample."""
