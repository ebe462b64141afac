"""Configurable-precision scalar arithmetic.

Every quantity in this package is an arbitrary-precision float owned by a
:class:`PrecisionContext`.  A context fixes the number of decimal significant
digits once, at creation time, and all scalars created through it (and all
arithmetic between them) round to that precision.  Each context wraps a
private mpmath context, so two PrecisionContexts never share mutable state
and may be used freely from concurrent tasks.

Canard experiments are extremely precision-sensitive: orbits approach the
invariant sets exponentially fast, and at too few digits two nearby numbers
collapse onto each other, gluing the simulated orbit to the invariant set.
Simulations default to 50 digits; bisection and sweep experiments default to
5000 digits.  Both defaults are overridable everywhere.
"""

from __future__ import annotations

from fractions import Fraction

from mpmath.ctx_mp import MPContext

MIN_DIGITS = 16
SIMULATE_DIGITS = 50
ANALYSIS_DIGITS = 5000


class InvalidPrecision(ValueError):
    """Requested decimal digit count is below the supported minimum."""


class PrecisionContext:
    """Carries the working decimal-digit count for all scalar arithmetic.

    Treat instances as immutable: ``digits`` is fixed at creation.  Scalars
    are mpmath floats bound to this context's private mpmath state, so
    arithmetic between them is deterministic and correctly rounded to
    ``digits`` decimal digits.  Rounding mode is round-to-nearest.
    """

    __slots__ = ("digits", "_mp")

    def __init__(self, digits: int):
        if not isinstance(digits, int) or isinstance(digits, bool) or digits < MIN_DIGITS:
            raise InvalidPrecision(
                f"precision must be an integer >= {MIN_DIGITS} decimal digits, got {digits!r}"
            )
        self.digits = digits
        self._mp = MPContext()
        self._mp.dps = digits

    def __repr__(self):
        return f"PrecisionContext(digits={self.digits})"

    # -- scalar construction -------------------------------------------------

    def mpf(self, value):
        """Create a scalar from a string, int, Fraction, or another scalar.

        Decimal strings are parsed directly at this context's precision
        (one rounding, no float round-trip).  Fractions are converted as one
        exactly-rounded division.
        """
        if isinstance(value, Fraction):
            return self._mp.mpf(value.numerator) / value.denominator
        return self._mp.mpf(value)

    def tol(self, offset: int = 10):
        """Tolerance scalar 10**(-digits + offset), the package-wide residual bar."""
        return self._mp.mpf(10) ** (offset - self.digits)

    # -- elementary functions -------------------------------------------------

    def sqrt(self, x):
        return self._mp.sqrt(x)

    def ln(self, x):
        return self._mp.log(x)

    def exp(self, x):
        return self._mp.exp(x)

    def floor(self, x):
        return self._mp.floor(x)

    # -- utilities -----------------------------------------------------------

    def polyroots(self, coeffs, **kwargs):
        """Roots of a polynomial given by descending coefficients."""
        return self._mp.polyroots(coeffs, **kwargs)

    def nstr(self, x, n: int):
        """Decimal string of x with n significant digits."""
        return self._mp.nstr(x, n)

    def isfinite(self, x) -> bool:
        return self._mp.isfinite(x)


def make_context(digits: int = SIMULATE_DIGITS) -> PrecisionContext:
    """Create a precision context with the given decimal digit count.

    Raises InvalidPrecision for digit counts below 16.
    """
    return PrecisionContext(digits)


def approx_eq(a, b, tol) -> bool:
    """True iff |a - b| <= tol.  Requires tol > 0."""
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol!r}")
    return abs(a - b) <= tol
