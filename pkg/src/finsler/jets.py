"""Truncated multivariate Taylor jets (dense forward-mode AD).

A jet stores every Taylor coefficient of a smooth function up to a fixed
total degree (``order``) around a base point in ``num_vars`` variables.
Arithmetic on jets is arithmetic on truncated power series, so after
assembling the jet of a composite function its mixed partial derivatives
at the base point fall out of ``extract_partial`` exactly (no step sizes,
no cancellation).

The intended regime is desk scale: a handful of variables, order <= 6,
dense coefficient vectors.  Coefficient layout, multiplication tables and
differentiation maps are precomputed once per (num_vars, order) pair and
shared by every jet in that space.

A jet also carries ``valid_order``: the truncation degree up to which its
coefficients are trustworthy.  Taking a derivative-as-a-jet loses one
degree; arithmetic propagates the minimum.  Asking for a partial beyond
``valid_order`` raises ``InsufficientOrderError`` rather than returning a
silently wrong number.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from .errors import DomainError, InputError, InsufficientOrderError

__all__ = ["JetSpace", "Jet", "space", "jet_variable", "jet_constant", "extract_partial"]


@functools.lru_cache(maxsize=None)
def space(num_vars: int, order: int) -> "JetSpace":
    """Shared, cached coefficient space for jets in `num_vars` variables."""
    return JetSpace(num_vars, order)


def _monomials(num_vars: int, order: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= order, graded order."""
    monos = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(num_vars), degree):
            alpha = [0] * num_vars
            for v in combo:
                alpha[v] += 1
            monos.append(tuple(alpha))
    return monos


class JetSpace:
    """Precomputed tables for one (num_vars, order) coefficient layout."""

    def __init__(self, num_vars: int, order: int):
        if num_vars < 1:
            raise InputError(f"need at least one variable, got {num_vars}")
        if order < 1:
            raise InputError(f"jet order must be >= 1, got {order}")
        self.num_vars = num_vars
        self.order = order
        self.monomials = _monomials(num_vars, order)
        self.size = len(self.monomials)
        self.index = {alpha: i for i, alpha in enumerate(self.monomials)}
        self.degrees = np.array([sum(a) for a in self.monomials], dtype=np.int32)
        # alpha! per monomial, for coefficient <-> derivative conversion
        self.factorials = np.array(
            [math.prod(math.factorial(e) for e in alpha) for alpha in self.monomials]
        )

        # Multiplication table: all (i, j) with deg_i + deg_j <= order and the
        # position k of monomial_i * monomial_j.  Grouping by degree keeps the
        # enumeration linear in the table size.
        by_degree: dict[int, list[int]] = {}
        for i, alpha in enumerate(self.monomials):
            by_degree.setdefault(sum(alpha), []).append(i)
        I, J, K = [], [], []
        for da, group_a in by_degree.items():
            for db, group_b in by_degree.items():
                if da + db > order:
                    continue
                for i in group_a:
                    ai = self.monomials[i]
                    for j in group_b:
                        bj = self.monomials[j]
                        K.append(self.index[tuple(x + y for x, y in zip(ai, bj))])
                        I.append(i)
                        J.append(j)
        self._mul_i = np.array(I, dtype=np.intp)
        self._mul_j = np.array(J, dtype=np.intp)
        self._mul_k = np.array(K, dtype=np.intp)

        # Differentiation maps: for each variable v, shifting alpha -> alpha - e_v
        # with weight alpha_v turns coefficients of f into coefficients of df/dx_v.
        self._diff = []
        for v in range(num_vars):
            src, dst, fac = [], [], []
            for i, alpha in enumerate(self.monomials):
                if alpha[v] > 0:
                    shifted = list(alpha)
                    shifted[v] -= 1
                    src.append(i)
                    dst.append(self.index[tuple(shifted)])
                    fac.append(alpha[v])
            self._diff.append(
                (np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp), np.array(fac, dtype=float))
            )

    # -- constructors -------------------------------------------------------

    def constant(self, value: float) -> "Jet":
        coeffs = np.zeros(self.size)
        coeffs[0] = value
        return Jet(self, coeffs, self.order)

    def variable(self, var_index: int, value: float) -> "Jet":
        if not 0 <= var_index < self.num_vars:
            raise InputError(
                f"variable index {var_index} out of range for {self.num_vars} variables"
            )
        coeffs = np.zeros(self.size)
        coeffs[0] = value
        unit = tuple(1 if v == var_index else 0 for v in range(self.num_vars))
        coeffs[self.index[unit]] = 1.0
        return Jet(self, coeffs, self.order)

    def _mul_coeffs(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.bincount(
            self._mul_k, weights=a[self._mul_i] * b[self._mul_j], minlength=self.size
        )

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"


class Jet:
    """One truncated Taylor expansion; immutable by convention."""

    __slots__ = ("space", "coeffs", "valid_order")

    def __init__(self, space: JetSpace, coeffs: np.ndarray, valid_order: int):
        self.space = space
        self.coeffs = coeffs
        self.valid_order = valid_order

    # -- basic queries -------------------------------------------------------

    @property
    def value(self) -> float:
        """Constant term (the function value at the base point)."""
        return float(self.coeffs[0])

    def coefficient(self, alpha: tuple[int, ...]) -> float:
        """Raw Taylor coefficient of the monomial with exponents ``alpha``."""
        self._check_alpha(alpha)
        return float(self.coeffs[self.space.index[alpha]])

    def partial(self, alpha: tuple[int, ...]) -> float:
        """Mixed partial derivative d^alpha f at the base point."""
        self._check_alpha(alpha)
        i = self.space.index[alpha]
        return float(self.coeffs[i] * self.space.factorials[i])

    def _check_alpha(self, alpha: tuple[int, ...]) -> None:
        if len(alpha) != self.space.num_vars or any(e < 0 for e in alpha):
            raise InputError(f"bad multi-index {alpha} for {self.space.num_vars} variables")
        if sum(alpha) > self.valid_order:
            raise InsufficientOrderError(
                f"degree-{sum(alpha)} partial requested from a jet valid to order "
                f"{self.valid_order}"
            )

    def derivative(self, var_index: int) -> "Jet":
        """The jet of df/dx_v (valid to one degree less)."""
        if not 0 <= var_index < self.space.num_vars:
            raise InputError(f"variable index {var_index} out of range")
        if self.valid_order < 1:
            raise InsufficientOrderError("cannot differentiate a jet valid to order 0")
        src, dst, fac = self.space._diff[var_index]
        coeffs = np.zeros(self.space.size)
        coeffs[dst] = self.coeffs[src] * fac
        return Jet(self.space, coeffs, self.valid_order - 1)

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other) -> "Jet | None":
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise InputError("jets from different spaces cannot be combined")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return None  # handled as a scalar
        return NotImplemented  # type: ignore[return-value]

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            coeffs = self.coeffs.copy()
            coeffs[0] += float(other)
            return Jet(self.space, coeffs, self.valid_order)
        return Jet(self.space, self.coeffs + o.coeffs, min(self.valid_order, o.valid_order))

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeffs, self.valid_order)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            coeffs = self.coeffs.copy()
            coeffs[0] -= float(other)
            return Jet(self.space, coeffs, self.valid_order)
        return Jet(self.space, self.coeffs - o.coeffs, min(self.valid_order, o.valid_order))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return Jet(self.space, self.coeffs * float(other), self.valid_order)
        return Jet(
            self.space,
            self.space._mul_coeffs(self.coeffs, o.coeffs),
            min(self.valid_order, o.valid_order),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return Jet(self.space, self.coeffs / float(other), self.valid_order)
        return self * o._reciprocal()

    def __rtruediv__(self, other):
        return self._reciprocal() * float(other)

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)) or (
            isinstance(exponent, float) and exponent.is_integer()
        ):
            return self._int_pow(int(exponent))
        return self.pow_real(float(exponent))

    def _int_pow(self, k: int) -> "Jet":
        if k < 0:
            return self._reciprocal()._int_pow(-k)
        result = self.space.constant(1.0)
        result = Jet(self.space, result.coeffs, self.valid_order)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- elementary functions --------------------------------------------------

    def _compose(self, series: np.ndarray) -> "Jet":
        """Horner evaluation of an outer 1-D Taylor series at this jet.

        ``series[k]`` must be the k-th Taylor coefficient of the outer
        function around ``self.value``; the shifted jet (self - value) has no
        constant term, so truncation at the space order is exact.
        """
        shifted = self - self.value
        acc = self.space.constant(float(series[-1]))
        for c in series[-2::-1]:
            acc = acc * shifted + float(c)
        return Jet(self.space, acc.coeffs, self.valid_order)

    def _reciprocal(self) -> "Jet":
        u0 = self.value
        if u0 == 0.0:
            raise DomainError("division by a jet with zero constant term (singular point)")
        k = np.arange(self.space.order + 1)
        series = (-1.0) ** k / u0 ** (k + 1)
        return self._compose(series)

    def exp(self) -> "Jet":
        u0 = self.value
        series = np.array(
            [math.exp(u0) / math.factorial(k) for k in range(self.space.order + 1)]
        )
        return self._compose(series)

    def log(self) -> "Jet":
        u0 = self.value
        if u0 <= 0.0:
            raise DomainError(f"log of non-positive constant term {u0}")
        series = np.empty(self.space.order + 1)
        series[0] = math.log(u0)
        for k in range(1, self.space.order + 1):
            series[k] = (-1.0) ** (k + 1) / (k * u0**k)
        return self._compose(series)

    def sqrt(self) -> "Jet":
        return self.pow_real(0.5)

    def pow_real(self, r: float) -> "Jet":
        u0 = self.value
        if u0 <= 0.0:
            raise DomainError(f"fractional power of non-positive constant term {u0}")
        series = np.empty(self.space.order + 1)
        binom = 1.0
        for k in range(self.space.order + 1):
            series[k] = binom * u0 ** (r - k)
            binom *= (r - k) / (k + 1)
        return self._compose(series)

    def sin(self) -> "Jet":
        u0 = self.value
        cycle = (math.sin(u0), math.cos(u0), -math.sin(u0), -math.cos(u0))
        series = np.array(
            [cycle[k % 4] / math.factorial(k) for k in range(self.space.order + 1)]
        )
        return self._compose(series)

    def cos(self) -> "Jet":
        u0 = self.value
        cycle = (math.cos(u0), -math.sin(u0), -math.cos(u0), math.sin(u0))
        series = np.array(
            [cycle[k % 4] / math.factorial(k) for k in range(self.space.order + 1)]
        )
        return self._compose(series)

    def atan(self) -> "Jet":
        u0 = self.value
        # Taylor of 1/(1 + u^2) at u0 via the quadratic-denominator recurrence,
        # then integrate term by term.
        d0, d1, d2 = 1.0 + u0 * u0, 2.0 * u0, 1.0
        s = np.empty(self.space.order + 1)
        s[0] = 1.0 / d0
        for k in range(1, self.space.order + 1):
            acc = d1 * s[k - 1]
            if k >= 2:
                acc += d2 * s[k - 2]
            s[k] = -acc / d0
        series = np.empty(self.space.order + 1)
        series[0] = math.atan(u0)
        for k in range(1, self.space.order + 1):
            series[k] = s[k - 1] / k
        return self._compose(series)

    def abs_guard(self) -> "Jet":
        """|u| on a branch safely away from the kink at 0."""
        u0 = self.value
        if abs(u0) < 1e-12:
            raise DomainError("abs evaluated within 1e-12 of its kink at 0")
        return self if u0 > 0 else -self

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"Jet(value={self.value!r}, num_vars={self.space.num_vars}, "
            f"order={self.space.order}, valid={self.valid_order})"
        )


# ---------------------------------------------------------------------------
# Functional entry points


def jet_variable(var_index: int, value: float, num_vars: int, order: int) -> Jet:
    """Jet of the coordinate function x_{var_index} at a point."""
    return space(num_vars, order).variable(var_index, value)


def jet_constant(value: float, num_vars: int, order: int) -> Jet:
    return space(num_vars, order).constant(value)


def extract_partial(j: Jet, alpha: tuple[int, ...]) -> float:
    """Mixed partial d^alpha f at the jet's base point (coeff times alpha!)."""
    return j.partial(tuple(alpha))
