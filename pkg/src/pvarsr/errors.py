"""Exception and warning types shared across the package."""


class PvArsrError(Exception):
    """Base class for all package errors."""


class SchemaMismatch(PvArsrError):
    """A state/input vector does not match the model schema."""


class SingularState(PvArsrError):
    """A rational term was evaluated with a non-positive denominator."""


class DomainError(PvArsrError):
    """An input value lies outside its admissible range."""


class NonFinite(PvArsrError):
    """A simulation left the finite range.

    Carries the time stamp of the offending step in ``time``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


# Name used by the adaptive-regulation layer; same condition.
DivergedSimulation = NonFinite


class TooShort(PvArsrError):
    """Not enough samples for the requested operation."""


class GridMismatch(PvArsrError):
    """Two trajectories do not share length, schema or time grid."""


class MissingTerm(PvArsrError):
    """A coefficient required for controller synthesis was thresholded away."""


class MissingGain(PvArsrError):
    """A controller gain required by the schema was not supplied."""


class RankDeficientWarning(UserWarning):
    """Least-squares problem was numerically rank deficient."""


class DegenerateColumnWarning(UserWarning):
    """A candidate-library column is identically zero on the data."""
