"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes (input problems -> 2, numerical problems -> 3),
so new error types should subclass one of the two branches below.
"""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for everything raised deliberately by this package."""


# ---------------------------------------------------------------------------
# input-side problems (malformed specs, bad expressions, wrong shapes)


class InputError(FinslerError):
    """The caller handed us something structurally wrong."""


class SpecError(InputError):
    """Metric-spec JSON failed validation (schema, symmetry, dimensions)."""


class ExprSyntaxError(InputError):
    """Expression source failed to parse.

    ``column`` is 1-based, pointing at the offending character.
    """

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


# ---------------------------------------------------------------------------
# numerical-side problems (domain exits, singularities, non-convergence)


class NumericalError(FinslerError):
    """Evaluation was structurally fine but numerically impossible."""


class DomainError(NumericalError):
    """A jet elementary function was evaluated outside its domain
    (log/sqrt of a non-positive constant term, division by a jet whose
    constant term vanishes, abs at its kink)."""


class OutsideDomainError(DomainError):
    """(x, y) left the admissible cone of the metric: the homogeneous form
    under the m-th root is non-positive, or L(x,y) <= 0."""


class DegenerateMetricError(NumericalError):
    """det g fell under the degeneracy threshold 1e-12 * (max|g_ij|)^n."""


class InsufficientOrderError(NumericalError):
    """A partial derivative of higher total degree than the jet's valid
    truncation order was requested.  Never silently returns 0."""


class LegendreInverseError(NumericalError):
    """Newton failed to invert the Legendre map.

    Carries the last residual norm and the iteration count so callers can
    report why (typically p outside the dual cone).
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class NumericalInstabilityError(NumericalError):
    """Two supposedly-equivalent computation routes disagreed beyond the
    documented cross-check tolerance."""


class SamplingError(NumericalError):
    """Rejection sampling of the admissible cone exhausted its retry budget."""
