"""Pointwise Finsler tensor calculus from metric jets.

Everything here is derived from a single object: the truncated Taylor jet
of L^2 at one point (x, y) of the slit tangent bundle, over the 2n
variables (x^0..x^{n-1}, y^0..y^{n-1}).  The fundamental tensor is half
the y-Hessian of that jet; Christoffel symbols differentiate it in x;
spray, nonlinear connection, and curvature keep differentiating.  Since
jets compose exactly, no finite-difference step sizes enter the primary
path — finite differences appear only as an independent cross-check on
the curvature tensors, which sit six derivatives deep.

The jet order bookkeeping (with K the order of the L^2 jet):

    g needs K >= 2        gamma, G need K >= 3     N needs K >= 4
    Chern-Rund H: K >= 4  R^m_jk needs K >= 5      R^m_ijk needs K >= 6

``PointCalculus`` computes all of these lazily from a given L^2 jet, so
each operation requests only the order it actually needs.  The same class
drives the change-of-coordinates audit, where the L^2 jet is built from
composite slots instead of coordinate variables.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateMetricError,
    InputError,
    NumericalInstabilityError,
    OutsideDomainError,
    SamplingError,
)
from .expr import Expr, eval_expr, parse_expr
from .jets import Jet, space
from .linalg import invert_with_det
from .metrics import (
    MetricSpec,
    coeff_tensor,
    eval_L,
    l2_jet,
    l2_of_slots,
    sample_direction,
    sample_point,
)
from .report import AuditReport, check, fan_out

__all__ = [
    "TensorState",
    "ConnectionTriple",
    "PointCalculus",
    "fundamental_tensor",
    "mth_root_tensors",
    "unit_and_angular",
    "cartan_tensor",
    "spray",
    "nonlinear_connection",
    "connection_triple",
    "curvature",
    "covariant_derivative",
    "indicatrix",
    "coordinate_transform_audit",
    "tensor_state",
    "tensor_state_to_json",
    "identity_suite",
]

DEGENERACY_FACTOR = 1e-12  # |det g| below this times (max|g|)^n is singular
CROSS_CHECK_RTOL = 1e-6  # the two spray formulas must agree this well
FD_CURVATURE_RTOL = 1e-2  # jet vs FD curvature disagreement -> instability


def _scale(*arrays) -> float:
    top = 1.0
    for a in arrays:
        a = np.asarray(a)
        if a.size:
            top = max(top, float(np.max(np.abs(a))))
    return top


def _point(spec: MetricSpec, p):
    x, y = p
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (spec.dim,) or y.shape != (spec.dim,):
        raise InputError(
            f"point must be two length-{spec.dim} vectors, got {x.shape} and {y.shape}"
        )
    if float(np.max(np.abs(y))) == 0.0:
        raise OutsideDomainError("y = 0 is excluded from the admissible cone")
    return x, y


class PointCalculus:
    """Lazy tensor pipeline around one L^2 jet at one point."""

    def __init__(self, dim: int, l2: Jet, x, y):
        if l2.space.num_vars != 2 * dim:
            raise InputError("L^2 jet must live over 2*dim variables")
        self.n = dim
        self.l2 = l2
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if not math.isfinite(l2.value) or l2.value <= 0.0:
            raise OutsideDomainError(f"L^2 = {l2.value} is not positive at this point")

    @classmethod
    def at_point(cls, spec: MetricSpec, x, y, order: int) -> "PointCalculus":
        return cls(spec.dim, l2_jet(spec, x, y, order), x, y)

    # -- derivative helpers ---------------------------------------------------

    def dx(self, jet: Jet, i: int) -> Jet:
        return jet.derivative(i)

    def dy(self, jet: Jet, i: int) -> Jet:
        return jet.derivative(self.n + i)

    def delta_x(self, jet: Jet, i: int) -> Jet:
        """Horizontal derivative delta/delta x^i = d/dx^i - N^k_i d/dy^k."""
        out = self.dx(jet, i)
        for k in range(self.n):
            out = out - self.N_jets[k][i] * self.dy(jet, k)
        return out

    # -- scalars and the metric ------------------------------------------------

    @cached_property
    def L(self) -> float:
        return math.sqrt(self.l2.value)

    @property
    def F(self) -> float:
        return 0.5 * self.l2.value

    @cached_property
    def y_jets(self) -> list:
        sp = self.l2.space
        return [sp.variable(self.n + i, float(self.y[i])) for i in range(self.n)]

    @cached_property
    def g_jets(self) -> list:
        n = self.n
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            di = self.dy(self.l2, i)
            for j in range(i, n):
                rows[i][j] = rows[j][i] = self.dy(di, j) * 0.5
        return rows

    @cached_property
    def g0(self) -> np.ndarray:
        g = np.array([[self.g_jets[i][j].value for j in range(self.n)] for i in range(self.n)])
        if not np.all(np.isfinite(g)):
            raise NumericalInstabilityError("fundamental tensor has non-finite entries")
        return g

    @cached_property
    def _inverse_pair(self):
        inv, det = invert_with_det(self.g_jets)
        top = float(np.max(np.abs(self.g0)))
        if abs(det) < DEGENERACY_FACTOR * max(top, 1e-300) ** self.n:
            raise DegenerateMetricError(
                f"det g = {det:.3e} is below the degeneracy threshold at this point"
            )
        return inv, float(det)

    @property
    def g_inv_jets(self) -> list:
        return self._inverse_pair[0]

    @property
    def det_g(self) -> float:
        return self._inverse_pair[1]

    @cached_property
    def g_inv0(self) -> np.ndarray:
        return np.array(
            [[self.g_inv_jets[i][j].value for j in range(self.n)] for i in range(self.n)]
        )

    # -- unit vectors and the angular metric -----------------------------------

    @cached_property
    def y_low(self) -> np.ndarray:
        return self.g0 @ self.y

    @cached_property
    def l_low(self) -> np.ndarray:
        return self.y_low / self.L

    @cached_property
    def l_up(self) -> np.ndarray:
        return self.y / self.L

    @cached_property
    def h0(self) -> np.ndarray:
        return self.g0 - np.outer(self.l_low, self.l_low)

    # -- Cartan torsion ---------------------------------------------------------

    @cached_property
    def C_jets(self) -> dict:
        out = {}
        for i in range(self.n):
            di = self.dy(self.l2, i)
            for j in range(i, self.n):
                dij = self.dy(di, j)
                for k in range(j, self.n):
                    out[(i, j, k)] = self.dy(dij, k) * 0.25
        return out

    @cached_property
    def C0(self) -> np.ndarray:
        n = self.n
        C = np.empty((n, n, n))
        for (i, j, k), jet in self.C_jets.items():
            v = jet.value
            for perm in set(itertools.permutations((i, j, k))):
                C[perm] = v
        return C

    @cached_property
    def C_mixed0(self) -> np.ndarray:
        return np.einsum("il,ljk->ijk", self.g_inv0, self.C0)

    @cached_property
    def C4_0(self) -> np.ndarray:
        n = self.n
        C4 = np.empty((n, n, n, n))
        for (i, j, k) in itertools.combinations_with_replacement(range(n), 3):
            jet = self.C_jets[(i, j, k)]
            for m in range(k, n):
                v = self.dy(jet, m).value
                for perm in set(itertools.permutations((i, j, k, m))):
                    C4[perm] = v
        return C4

    # -- Christoffel symbols, spray, connection ---------------------------------

    @cached_property
    def gamma_low_jets(self) -> list:
        n = self.n
        dg = [[[self.dx(self.g_jets[i][j], k) for k in range(n)] for j in range(n)] for i in range(n)]
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    jet = (dg[i][j][k] + dg[i][k][j] - dg[j][k][i]) * 0.5
                    out[i][j][k] = out[i][k][j] = jet
        return out

    @cached_property
    def gamma_low0(self) -> np.ndarray:
        n = self.n
        return np.array(
            [[[self.gamma_low_jets[i][j][k].value for k in range(n)] for j in range(n)] for i in range(n)]
        )

    @cached_property
    def gamma_up_jets(self) -> list:
        n = self.n
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for h in range(n):
            for j in range(n):
                for k in range(j, n):
                    acc = self.g_inv_jets[h][0] * self.gamma_low_jets[0][j][k]
                    for i in range(1, n):
                        acc = acc + self.g_inv_jets[h][i] * self.gamma_low_jets[i][j][k]
                    out[h][j][k] = out[h][k][j] = acc
        return out

    @cached_property
    def gamma_up0(self) -> np.ndarray:
        n = self.n
        return np.array(
            [[[self.gamma_up_jets[h][j][k].value for k in range(n)] for j in range(n)] for h in range(n)]
        )

    @cached_property
    def G_jets(self) -> list:
        n = self.n
        out = []
        for i in range(n):
            acc = None
            for j in range(n):
                inner = None
                for k in range(n):
                    term = self.gamma_up_jets[i][j][k] * self.y_jets[k]
                    inner = term if inner is None else inner + term
                term = inner * self.y_jets[j]
                acc = term if acc is None else acc + term
            out.append(acc * 0.5)
        return out

    @cached_property
    def G0(self) -> np.ndarray:
        return np.array([jet.value for jet in self.G_jets])

    @cached_property
    def N_jets(self) -> list:
        return [[self.dy(self.G_jets[i], j) for j in range(self.n)] for i in range(self.n)]

    @cached_property
    def N0(self) -> np.ndarray:
        n = self.n
        return np.array([[self.N_jets[i][j].value for j in range(n)] for i in range(n)])

    @cached_property
    def chern_rund0(self) -> np.ndarray:
        """H^i_jk of the Chern-Rund connection (delta-derivative Christoffels)."""
        n = self.n
        dg = [
            [[self.delta_x(self.g_jets[i][j], k).value for k in range(n)] for j in range(n)]
            for i in range(n)
        ]
        low = np.empty((n, n, n))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    low[i, j, k] = 0.5 * (dg[i][k][j] + dg[i][j][k] - dg[j][k][i])
        return np.einsum("ir,rjk->ijk", self.g_inv0, low)

    # -- curvature ---------------------------------------------------------------

    @cached_property
    def R2_jets(self) -> dict:
        """delta_j N^m_k - delta_k N^m_j for j < k (antisymmetric closure)."""
        out = {}
        for m in range(self.n):
            for j in range(self.n):
                for k in range(j + 1, self.n):
                    out[(m, j, k)] = self.delta_x(self.N_jets[m][k], j) - self.delta_x(
                        self.N_jets[m][j], k
                    )
        return out

    @cached_property
    def R2_0(self) -> np.ndarray:
        n = self.n
        R = np.zeros((n, n, n))
        for (m, j, k), jet in self.R2_jets.items():
            v = jet.value
            R[m, j, k] = v
            R[m, k, j] = -v
        return R

    @cached_property
    def R3_0(self) -> np.ndarray:
        n = self.n
        R = np.zeros((n, n, n, n))
        for (m, j, k), jet in self.R2_jets.items():
            for i in range(n):
                v = self.dy(jet, i).value
                R[m, i, j, k] = v
                R[m, i, k, j] = -v
        return R


# ---------------------------------------------------------------------------
# Public data types


@dataclass(frozen=True)
class TensorState:
    L: float
    F: float
    g: np.ndarray
    g_inv: np.ndarray
    y_low: np.ndarray
    l_low: np.ndarray
    l_up: np.ndarray
    h: np.ndarray
    C: np.ndarray
    C_mixed: np.ndarray
    C4: np.ndarray
    gamma_low: np.ndarray
    gamma_up: np.ndarray
    G: np.ndarray
    N: np.ndarray
    chern_rund: np.ndarray
    R2: np.ndarray
    R3: np.ndarray


@dataclass(frozen=True)
class ConnectionTriple:
    N: np.ndarray
    H: np.ndarray
    C: np.ndarray
    kind: str


# ---------------------------------------------------------------------------
# Operations


def fundamental_tensor(spec: MetricSpec, p) -> np.ndarray:
    """g_ij = half the y-Hessian of L^2 at the point."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 2)
    pc.det_g  # trips the degeneracy check
    return pc.g0


def mth_root_tensors(spec: MetricSpec, p):
    """(a_i, a_ij): the m-th root contractions a_{i...k} y.../L^{m-1}, .../L^{m-2}."""
    if spec.kind != "mth_root":
        raise InputError("mth_root_tensors requires an mth_root metric")
    x, y = _point(spec, p)
    L = eval_L(spec, (x, y))
    a = coeff_tensor(spec, x)
    t = a
    for _ in range(spec.m - 2):
        t = t @ y  # contracts the trailing axis; the table is symmetric
    a_ij = t / L ** (spec.m - 2)
    a_i = (t @ y) / L ** (spec.m - 1)

    # Consistency with the general pipeline: l_i = a_i, h_ij = (m-1)(a_ij - a_i a_j)
    pc = PointCalculus.at_point(spec, x, y, 2)
    h_claim = (spec.m - 1) * (a_ij - np.outer(a_i, a_i))
    tol = 1e-8 * _scale(pc.l_low, pc.h0)
    err = max(
        float(np.max(np.abs(a_i - pc.l_low))),
        float(np.max(np.abs(h_claim - pc.h0))),
    )
    if err > tol:
        raise NumericalInstabilityError(
            f"m-th root tensor identities violated by {err:.3e} (tolerance {tol:.3e})"
        )
    return a_i, a_ij


def unit_and_angular(spec: MetricSpec, p):
    """(y_low, l_low, l_up, h) with the rank-(n-1) angular metric h."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 2)
    pc.det_g
    h = pc.h0
    tol = 1e-8 * _scale(h, pc.g_inv0)
    kernel_err = float(np.max(np.abs(h @ y)))
    trace_err = abs(float(np.einsum("ij,ij->", pc.g_inv0, h)) - (spec.dim - 1))
    if kernel_err > tol or trace_err > tol:
        raise NumericalInstabilityError(
            f"angular-metric identities violated: |h y| = {kernel_err:.3e}, "
            f"|tr - (n-1)| = {trace_err:.3e}"
        )
    return pc.y_low, pc.l_low, pc.l_up, h


def cartan_tensor(spec: MetricSpec, p):
    """(C, C_mixed, C4): Cartan torsion, its raised form, its y-derivative."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 4)
    C, C4 = pc.C0, pc.C4_0
    scale = _scale(C, C4)
    tol = 1e-6 * scale
    contraction = np.einsum("i,ijk->jk", y, C)
    c4_rule = np.einsum("i,ijkm->jkm", y, C4) + C
    if float(np.max(np.abs(contraction))) > tol or float(np.max(np.abs(c4_rule))) > tol:
        raise NumericalInstabilityError("Cartan torsion contraction identities violated")
    return C, pc.C_mixed0, C4


def spray(spec: MetricSpec, p):
    """(gamma_up, G), cross-checked against the direct Euler-Lagrange form."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 3)
    G = pc.G0

    # Independent form: 2 G_j = y^i d_j(dot) d_i F - d_j F, then raise with g^-1.
    F_jet = pc.l2 * 0.5
    two_G_low = np.empty(spec.dim)
    for j in range(spec.dim):
        dotted = pc.dy(F_jet, j)
        total = -pc.dx(F_jet, j).value
        for i in range(spec.dim):
            total += pc.dx(dotted, i).value * y[i]
        two_G_low[j] = total
    G_other = 0.5 * (pc.g_inv0 @ two_G_low)
    err = float(np.max(np.abs(G - G_other)))
    if err > CROSS_CHECK_RTOL * _scale(G):
        raise NumericalInstabilityError(
            f"spray forms disagree by {err:.3e} (scale {_scale(G):.3e})"
        )
    return pc.gamma_up0, G


def nonlinear_connection(spec: MetricSpec, p) -> np.ndarray:
    """N^i_j = dG^i/dy^j."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 4)
    N = pc.N0
    euler = N @ y - 2.0 * pc.G0
    if float(np.max(np.abs(euler))) > 1e-8 * _scale(pc.G0):
        raise NumericalInstabilityError("N y != 2G: homogeneity of the spray broke down")
    return N


def connection_triple(spec: MetricSpec, p, kind: str) -> ConnectionTriple:
    if kind not in ("chern_rund", "cartan"):
        raise InputError(f"connection kind must be chern_rund or cartan, got {kind!r}")
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 4)
    C = pc.C_mixed0 if kind == "cartan" else np.zeros((spec.dim,) * 3)
    return ConnectionTriple(N=pc.N0, H=pc.chern_rund0, C=C, kind=kind)


def _fd_curvature_R2(spec: MetricSpec, x, y, h: float) -> np.ndarray:
    """R^m_jk by central differences of N (independent of the jet path)."""
    n = spec.dim

    def N_at(xx, yy):
        return PointCalculus.at_point(spec, xx, yy, 4).N0

    N_base = N_at(x, y)
    dN_dx = []
    dN_dy = []
    for a in range(n):
        ex = np.zeros(n)
        ex[a] = h
        dN_dx.append((N_at(x + ex, y) - N_at(x - ex, y)) / (2 * h))
        dN_dy.append((N_at(x, y + ex) - N_at(x, y - ex)) / (2 * h))
    R = np.zeros((n, n, n))
    for m in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                v = dN_dx[j][m, k] - dN_dx[k][m, j]
                for s in range(n):
                    v -= N_base[s, j] * dN_dy[s][m, k] - N_base[s, k] * dN_dy[s][m, j]
                R[m, j, k] = v
                R[m, k, j] = -v
    return R


def curvature(spec: MetricSpec, p, *, cross_check: bool = True):
    """(R2, R3): curvature from the jet pipeline, FD-verified at runtime."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 6)
    R2, R3 = pc.R2_0, pc.R3_0
    if cross_check:
        h = 1e-5 * (1.0 + max(float(np.max(np.abs(x))), float(np.max(np.abs(y)))))
        R2_fd = _fd_curvature_R2(spec, x, y, h)
        err2 = float(np.max(np.abs(R2 - R2_fd)))
        if err2 > FD_CURVATURE_RTOL * _scale(R2):
            raise NumericalInstabilityError(
                f"curvature cross-check failed: jet vs FD differ by {err2:.3e}"
            )
        R3_fd = np.zeros_like(R3)
        for i in range(spec.dim):
            ey = np.zeros(spec.dim)
            ey[i] = h
            plus = PointCalculus.at_point(spec, x, y + ey, 5).R2_0
            minus = PointCalculus.at_point(spec, x, y - ey, 5).R2_0
            R3_fd[:, i, :, :] = (plus - minus) / (2 * h)
        err3 = float(np.max(np.abs(R3 - R3_fd)))
        if err3 > FD_CURVATURE_RTOL * _scale(R3):
            raise NumericalInstabilityError(
                f"curvature derivative cross-check failed: jet vs FD differ by {err3:.3e}"
            )
    return R2, R3


def covariant_derivative(spec: MetricSpec, p, field) -> np.ndarray:
    """D_y(X)^j = y^k dX^j/dx^k + N^j_i X^i for a vector field X(x)."""
    x, y = _point(spec, p)
    n = spec.dim
    exprs = []
    for component in field:
        e = parse_expr(component, n) if isinstance(component, str) else component
        if not isinstance(e, Expr):
            raise InputError("field components must be expression strings or Expr")
        if e.uses_y:
            raise InputError("vector fields live on the base manifold: x only")
        exprs.append(e)
    if len(exprs) != n:
        raise InputError(f"vector field needs {n} components, got {len(exprs)}")

    sp = space(n, 1)
    x_jets = [sp.variable(i, float(x[i])) for i in range(n)]
    values = np.empty(n)
    jacobian = np.empty((n, n))
    for j, e in enumerate(exprs):
        jet = eval_expr(e, x_jets)
        if isinstance(jet, Jet):
            values[j] = jet.value
            for k in range(n):
                alpha = tuple(1 if v == k else 0 for v in range(n))
                jacobian[j, k] = jet.partial(alpha)
        else:  # constant component
            values[j] = float(jet)
            jacobian[j, :] = 0.0
    N = PointCalculus.at_point(spec, x, y, 4).N0
    return jacobian @ y + N @ values


def indicatrix(spec: MetricSpec, x, samples: int, seed: int = 0):
    """Sample the unit level set {L(x, .) = 1}; returns [(y, residual)].

    Each residual is |g_ij(x, y0) y0^i y0^j - 1|, which vanishes on the
    indicatrix because g y y = L^2.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise InputError(f"x must have length {spec.dim}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        u = sample_direction(spec, x, rng)
        L = eval_L(spec, (x, u))
        y0 = np.asarray(u) / L
        pc = PointCalculus.at_point(spec, x, y0, 2)
        residual = abs(float(y0 @ pc.g0 @ y0) - 1.0)
        out.append((tuple(float(v) for v in y0), residual))
    return out


def tensor_state(spec: MetricSpec, p, *, cross_check: bool = True) -> TensorState:
    """The full tensor snapshot at one point (curvature included)."""
    x, y = _point(spec, p)
    pc = PointCalculus.at_point(spec, x, y, 6)
    pc.det_g

    identity_err = float(np.max(np.abs(pc.g0 @ pc.g_inv0 - np.eye(spec.dim))))
    if identity_err > 1e-10 * _scale(pc.g0, pc.g_inv0):
        raise NumericalInstabilityError(
            f"g g^-1 deviates from identity by {identity_err:.3e}"
        )

    R2, R3 = pc.R2_0, pc.R3_0
    if cross_check:
        curvature(spec, (x, y))  # same values; runs the FD comparison

    state = TensorState(
        L=pc.L,
        F=pc.F,
        g=pc.g0,
        g_inv=pc.g_inv0,
        y_low=pc.y_low,
        l_low=pc.l_low,
        l_up=pc.l_up,
        h=pc.h0,
        C=pc.C0,
        C_mixed=pc.C_mixed0,
        C4=pc.C4_0,
        gamma_low=pc.gamma_low0,
        gamma_up=pc.gamma_up0,
        G=pc.G0,
        N=pc.N0,
        chern_rund=pc.chern_rund0,
        R2=R2,
        R3=R3,
    )
    for name in TensorState.__dataclass_fields__:
        if not np.all(np.isfinite(np.asarray(getattr(state, name)))):
            raise NumericalInstabilityError(f"non-finite entries in {name}")
    return state


def tensor_state_to_json(state: TensorState) -> str:
    payload = {}
    for name in TensorState.__dataclass_fields__:
        value = getattr(state, name)
        payload[name] = value.tolist() if isinstance(value, np.ndarray) else float(value)
    return json.dumps(payload, indent=2)


# ---------------------------------------------------------------------------
# Change-of-coordinates audit


def _forward_data(forward: list, x0: np.ndarray):
    """Values, Jacobian, and second derivatives of the forward map at x0."""
    n = len(x0)
    sp = space(n, 2)
    x_jets = [sp.variable(i, float(x0[i])) for i in range(n)]
    values = np.empty(n)
    jac = np.empty((n, n))
    second = np.empty((n, n, n))
    for h, e in enumerate(forward):
        jet = eval_expr(e, x_jets)
        if not isinstance(jet, Jet):
            jet = sp.constant(float(jet))
        values[h] = jet.value
        for i in range(n):
            alpha = [0] * n
            alpha[i] = 1
            jac[h, i] = jet.partial(tuple(alpha))
            for j in range(i, n):
                beta = [0] * n
                beta[i] += 1
                beta[j] += 1
                second[h, i, j] = second[h, j, i] = jet.partial(tuple(beta))
    return values, jac, second


def coordinate_transform_audit(spec: MetricSpec, forward, inverse, p) -> AuditReport:
    """Verify the transformation rules for G, N, H, and C under a diffeo.

    ``forward`` maps the metric's coordinates x to new coordinates, and
    ``inverse`` maps back; both are given as n expression strings (or Expr)
    in x0..x{n-1}.  The metric is pushed into the new coordinates by
    composite-jet evaluation and the two tensor pipelines are compared
    through the classical transformation rules.
    """
    n = spec.dim
    x0, y0 = _point(spec, p)

    def _parse_all(components, what):
        out = []
        for c in components:
            e = parse_expr(c, n) if isinstance(c, str) else c
            if not isinstance(e, Expr) or e.uses_y:
                raise InputError(f"{what} must be n expressions of x only")
            out.append(e)
        if len(out) != n:
            raise InputError(f"{what} needs {n} components, got {len(out)}")
        return out

    fwd = _parse_all(forward, "forward map")
    inv = _parse_all(inverse, "inverse map")

    xt0, X, X2 = _forward_data(fwd, x0)
    if abs(np.linalg.det(X)) < 1e-12 * max(1.0, float(np.max(np.abs(X)))) ** n:
        raise InputError("diffeo Jacobian is singular at the audit point")

    # mutual-inverse precondition
    back = np.array([float(eval_expr(e, list(xt0))) for e in inv])
    if float(np.max(np.abs(back - x0))) > 1e-8 * (1.0 + float(np.max(np.abs(x0)))):
        raise InputError("forward and inverse maps are not mutually inverse at the point")

    yt0 = X @ y0

    # straight-side tensors
    pc = PointCalculus.at_point(spec, x0, y0, 4)
    G, N, H = pc.G0, pc.N0, pc.chern_rund0
    C_mixed = pc.C_mixed0

    # tilde-side tensors from composite slots
    sp = space(2 * n, 5)
    xt_jets = [sp.variable(i, float(xt0[i])) for i in range(n)]
    x_slots = []
    for e in inv:
        jet = eval_expr(e, xt_jets)
        x_slots.append(jet if isinstance(jet, Jet) else sp.constant(float(jet)))
    y_slots = []
    for i in range(n):
        acc = None
        for h in range(n):
            term = x_slots[i].derivative(h) * sp.variable(n + h, float(yt0[h]))
            acc = term if acc is None else acc + term
        y_slots.append(acc)
    l2_tilde = l2_of_slots(spec, x_slots + y_slots)
    pc_t = PointCalculus(n, l2_tilde, xt0, yt0)
    Gt, Nt, Ht = pc_t.G0, pc_t.N0, pc_t.chern_rund0
    Ct_mixed = pc_t.C_mixed0

    X_inv = np.linalg.inv(X)

    # G-rule: Gt^r = X^r_i G^i - 1/2 X^r_is y^i y^s
    g_rule = Gt - (X @ G - 0.5 * np.einsum("ris,i,s->r", X2, y0, y0))
    # N-rule: Nt^h_j X^j_i = X^h_j N^j_i - X^h_ij y^j
    n_rule = Nt @ X - (X @ N - np.einsum("hij,j->hi", X2, y0))
    # H-rule: X^l_i H^i_jk = X^l_jk + X^r_j X^s_k Ht^l_rs
    h_rule = np.einsum("li,ijk->ljk", X, H) - (
        X2 + np.einsum("lrs,rj,sk->ljk", Ht, X, X)
    )
    # C-rule: C^i_jk = (X^-1)^i_p X^q_j X^r_k Ct^p_qr
    c_rule = C_mixed - np.einsum("ip,pqr,qj,rk->ijk", X_inv, Ct_mixed, X, X)

    rows = []
    for name, residual_tensor, involved in (
        ("spray-transform", g_rule, (G, Gt)),
        ("nonlinear-connection-transform", n_rule, (N, Nt)),
        ("connection-transform", h_rule, (H, Ht, X2)),
        ("torsion-transform", c_rule, (C_mixed, Ct_mixed)),
    ):
        tol = 1e-4 * _scale(*involved)
        rows.append(
            check(name, float(np.max(np.abs(residual_tensor))), tol, x=x0, y=y0)
        )
    return AuditReport.from_checks(rows)


def _identity_rows(spec: MetricSpec, k: int, x, y) -> list:
    """The seven per-point identity checks, from one fibre-only jet.

    Everything tested here lives in y-derivatives of L^2 at fixed x, so
    the jet is built over the n fibre variables only (x enters as plain
    floats), which keeps a 100-point suite cheap even at dim 4.
    """
    n = spec.dim
    sp = space(n, 4)
    slots = [float(v) for v in x] + [sp.variable(i, float(y[i])) for i in range(n)]
    jet = l2_of_slots(spec, slots)
    l2v = jet.value
    L = math.sqrt(l2v)
    y = np.asarray(y, dtype=float)

    first = [jet.derivative(i) for i in range(n)]
    g_jets = [[0.5 * first[i].derivative(j) for j in range(n)] for i in range(n)]
    g0 = np.array([[g_jets[i][j].value for j in range(n)] for i in range(n)])

    rows = []
    y_dl = sum(y[i] * first[i].value for i in range(n)) / (2.0 * L)
    rows.append(
        check(f"sample-{k:03d}-euler-relation", abs(y_dl - L), 1e-8 * (1.0 + L), x=x, y=y)
    )
    rows.append(
        check(
            f"sample-{k:03d}-metric-contraction",
            abs(float(y @ g0 @ y) - l2v),
            1e-8 * l2v,
            x=x,
            y=y,
        )
    )

    l_low = (g0 @ y) / L
    h0 = g0 - np.outer(l_low, l_low)
    rows.append(
        check(
            f"sample-{k:03d}-angular-kernel",
            float(np.max(np.abs(h0 @ y))),
            1e-8 * _scale(h0),
            x=x,
            y=y,
        )
    )

    g_inv_jets, _det = invert_with_det(g_jets)
    g_inv0 = np.array(
        [[g_inv_jets[i][j].value for j in range(n)] for i in range(n)]
    )
    rows.append(
        check(
            f"sample-{k:03d}-angular-trace",
            abs(float(np.sum(g_inv0 * h0)) - (n - 1)),
            1e-6,
            x=x,
            y=y,
        )
    )

    C0 = np.empty((n, n, n))
    for i in range(n):
        for j in range(i, n):
            for m in range(j, n):
                v = 0.5 * g_jets[i][j].derivative(m).value
                for p in itertools.permutations((i, j, m)):
                    C0[p] = v
    rows.append(
        check(
            f"sample-{k:03d}-cartan-kernel",
            float(np.max(np.abs(np.einsum("ijk,i->jk", C0, y)))),
            1e-8 * _scale(C0),
            x=x,
            y=y,
        )
    )

    C4 = np.empty((n, n, n, n))
    for i in range(n):
        for j in range(i, n):
            d_ij = g_jets[i][j]
            for m in range(j, n):
                d_ijm = d_ij.derivative(m)
                for q in range(m, n):
                    v = 0.5 * d_ijm.derivative(q).value
                    for p in itertools.permutations((i, j, m, q)):
                        C4[p] = v
    rows.append(
        check(
            f"sample-{k:03d}-cartan-contraction",
            float(np.max(np.abs(np.einsum("ijkm,i->jkm", C4, y) + C0))),
            1e-6 * _scale(C0, C4),
            x=x,
            y=y,
        )
    )

    C_up = np.einsum("ka,ib,abn->kin", g_inv0, g_inv0, C0)
    d_g_inv = np.array(
        [
            [[g_inv_jets[a][b].derivative(m).value for m in range(n)] for b in range(n)]
            for a in range(n)
        ]
    )
    rows.append(
        check(
            f"sample-{k:03d}-inverse-metric-derivative",
            float(np.max(np.abs(0.5 * d_g_inv + C_up))),
            1e-6 * _scale(C_up),
            x=x,
            y=y,
        )
    )
    return rows


def identity_suite(
    spec: MetricSpec, samples: int = 100, seed: int = 0, threads: int = 1
) -> AuditReport:
    """Pointwise identity audit at seeded random admissible points.

    Per point: Euler relation, g y y = L^2, the angular-metric kernel
    and trace, both Cartan contractions, and the inverse-metric
    derivative against the raised Cartan tensor.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    points = [(k, *sample_point(spec, rng)) for k in range(samples)]
    rows = fan_out(lambda item: _identity_rows(spec, *item), points, threads)
    return AuditReport.from_checks(rows, seed=seed)
