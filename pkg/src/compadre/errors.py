"""Exception and warning types raised across the package."""


class CompadreError(Exception):
    """Base class for all package errors."""


class InputError(CompadreError, ValueError):
    """Malformed or out-of-contract input data."""


class ConstantCovariate(InputError):
    pass


class TooFewDistinctValues(InputError):
    pass


class OutOfRange(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NonPSDInput(InputError):
    pass


class NumericalError(CompadreError, ArithmeticError):
    """A numerical routine could not produce a valid answer."""


class RankDeficient(NumericalError):
    pass


class NonPDPrecision(NumericalError):
    pass


class SolverFailure(NumericalError):
    """Wraps a solver error with the (iteration, step, response) it came from."""

    def __init__(self, message, iteration=None, step=None, response=None):
        super().__init__(message)
        self.iteration = iteration
        self.step = step
        self.response = response

    def __str__(self):
        where = []
        if self.iteration is not None:
            where.append(f"iteration={self.iteration}")
        if self.step is not None:
            where.append(f"step={self.step}")
        if self.response is not None:
            where.append(f"response={self.response}")
        base = super().__str__()
        return f"{base} [{', '.join(where)}]" if where else base


class NoConvergence(UserWarning):
    """An iterative solver hit its sweep limit; the best iterate is returned."""


class SingularLimit(UserWarning):
    """Unpenalized precision estimate needed a ridge jitter."""


class SingularDesign(UserWarning):
    """Collinear design columns were dropped from a least-squares refit."""
