"""Error types and the tagged infinite value shared by the rate functions."""


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-PSD covariance, no convergence, ...)."""


class _Infinite:
    """Singleton returned by rate functions where the rate is +inf.

    Kept distinct from ``float('inf')`` so callers branch explicitly.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __float__(self):
        return float("inf")

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def is_infinite(x) -> bool:
    return x is INFINITE


def as_float(x) -> float:
    """Map a rate value (float or INFINITE) to a float."""
    return float("inf") if x is INFINITE else float(x)
