"""Legendre transform, Hamiltonian flow, and the Hilbert-form check.

The fiberwise Legendre transform of a Finsler Lagrangian is algebraic in
one direction (p_i = g_ij y^j) and a small Newton solve in the other.
The Jacobian of r(y) = g(x,y) y - p is exactly g itself — the Cartan
terms cancel against the contraction identity y^i C_ijk = 0 — so each
Newton step is one metric evaluation and one linear solve.

The Hamiltonian H(x,p) = F(x, y(p)) is differentiated through the
implicit function theorem rather than through the Newton iteration:
dH/dp_i = y^i and dH/dx^i = -dF/dx^i at fixed y, which is what the
Hamilton-flow right-hand side uses directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    InputError,
    LegendreInverseError,
    OutsideDomainError,
)
from .expr import Expr, eval_expr, parse_expr
from .jets import space
from .metrics import MetricSpec, _metric_matrix, eval_L, l2_jet
from .report import AuditReport, check

__all__ = [
    "HamiltonPath",
    "legendre_point",
    "legendre_inverse",
    "hamiltonian",
    "hamilton_flow",
    "poisson_bracket",
    "legendre_1d",
    "hilbert_spray_check",
    "hamilton_to_csv",
    "legendre_1d_to_csv",
]

NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 20
NEWTON_RTOL = 1e-12


@dataclass(frozen=True)
class HamiltonPath:
    ts: np.ndarray
    xs: np.ndarray
    ps: np.ndarray
    H_values: np.ndarray
    truncated: bool  # legendre inverse failed mid-flow; path stops early


def legendre_point(spec: MetricSpec, x, y) -> np.ndarray:
    """p_i = g_ij(x,y) y^j (the lowered velocity)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = _metric_matrix(spec, x, y)
    if not np.all(np.isfinite(g)):
        raise OutsideDomainError("fundamental tensor is not finite at this point")
    return g @ y


def _newton_seed(spec: MetricSpec, x, p) -> np.ndarray:
    """Admissible starting point for the Legendre Newton solve.

    First choice is the identification seed y0 = g(x, p)^{-1} p, which
    needs p itself to sit in the admissible cone.  On metrics with a
    narrow cone (the S4 quartic, for instance) the lowered covector often
    leaves it, so the seed falls back to |p| and then to the ones vector,
    using each candidate either through the refined solve or directly.
    """
    candidates = (p, np.abs(p), np.ones_like(p))
    for cand in candidates:
        try:
            g_cand = _metric_matrix(spec, x, cand)
            y0 = np.linalg.solve(g_cand, p)
            eval_L(spec, (x, y0))
            return y0
        except (DomainError, np.linalg.LinAlgError):
            pass
        try:
            eval_L(spec, (x, cand))
            return np.asarray(cand, dtype=float).copy()
        except DomainError:
            continue
    raise LegendreInverseError(
        "no admissible seed for the Legendre Newton solve",
        residual=math.inf,
        iterations=0,
    )


def legendre_inverse(spec: MetricSpec, x, p, y_init=None) -> np.ndarray:
    """Solve g(x,y) y = p for y by damped Newton iteration.

    The seed identifies p with a tangent vector (y0 = g(x,p)^{-1} p, with
    fallbacks when p is outside the cone).  50 non-converging iterations
    or a stalled line search raise ``LegendreInverseError`` carrying the
    last residual — the usual cause is p outside the dual cone.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    p_norm = np.linalg.norm(p)
    if p_norm == 0.0:
        raise InputError("p = 0 has no Legendre preimage on the slit bundle")
    tol = NEWTON_RTOL * p_norm

    def residual_at(y):
        g = _metric_matrix(spec, x, y)
        if not np.all(np.isfinite(g)):
            raise OutsideDomainError("non-finite metric during Newton solve")
        return g, g @ y - p

    if y_init is not None:
        y = np.asarray(y_init, dtype=float).copy()
    else:
        y = _newton_seed(spec, x, p)

    try:
        g, r = residual_at(y)
    except DomainError as err:
        raise LegendreInverseError(
            f"Legendre seed inadmissible: {err}", residual=math.inf, iterations=0
        ) from None
    r_norm = np.linalg.norm(r)
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        if r_norm <= tol:
            return y
        try:
            delta = np.linalg.solve(g, -r)
        except np.linalg.LinAlgError:
            raise LegendreInverseError(
                "singular Jacobian in Legendre Newton solve",
                residual=float(r_norm),
                iterations=iteration,
            ) from None
        step_scale = 1.0
        for _ in range(NEWTON_MAX_HALVINGS):
            y_try = y + step_scale * delta
            try:
                g_try, r_try = residual_at(y_try)
            except DomainError:
                step_scale *= 0.5
                continue
            if np.linalg.norm(r_try) < r_norm:
                y, g, r = y_try, g_try, r_try
                r_norm = np.linalg.norm(r)
                break
            step_scale *= 0.5
        else:
            raise LegendreInverseError(
                "Legendre Newton line search stalled",
                residual=float(r_norm),
                iterations=iteration,
            )
    if r_norm <= tol:
        return y
    raise LegendreInverseError(
        f"Legendre Newton did not converge in {NEWTON_MAX_ITER} iterations",
        residual=float(r_norm),
        iterations=NEWTON_MAX_ITER,
    )


def hamiltonian(spec: MetricSpec, x, p) -> float:
    """H(x,p) = F(x, y(p)) = L^2(x, y(p))/2."""
    y = legendre_inverse(spec, x, p)
    L = eval_L(spec, (np.asarray(x, float), y))
    return 0.5 * L * L


def _dF_dx(spec: MetricSpec, x, y) -> np.ndarray:
    """dF/dx^i at fixed y, from an order-1 jet of L^2."""
    n = spec.dim
    jet = l2_jet(spec, x, y, 1)
    out = np.empty(n)
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[i] = 1
        out[i] = 0.5 * jet.partial(tuple(alpha))
    return out


def hamilton_flow(spec: MetricSpec, x0, p0, T: float, step: float) -> HamiltonPath:
    """RK4 on Hamilton's equations x-dot = dH/dp, p-dot = -dH/dx.

    Through the Legendre transform these are x-dot = y(x,p) and
    p-dot = +dF/dx at fixed y.  Newton solves are warm-started along the
    flow.  A failed solve truncates the path and sets ``truncated``.
    """
    if step <= 0.0 or T <= 0.0:
        raise InputError("T and step must be positive")
    x = np.asarray(x0, dtype=float).copy()
    p = np.asarray(p0, dtype=float).copy()
    if x.shape != (spec.dim,) or p.shape != (spec.dim,):
        raise InputError(f"x0 and p0 must have length {spec.dim}")

    warm = {"y": None}

    def rhs(xx, pp):
        y = legendre_inverse(spec, xx, pp, y_init=warm["y"])
        warm["y"] = y
        return y, _dF_dx(spec, xx, y)

    def H_at(xx, pp):
        y = legendre_inverse(spec, xx, pp, y_init=warm["y"])
        L = eval_L(spec, (xx, y))
        return 0.5 * L * L

    ts = [0.0]
    xs = [x.copy()]
    ps = [p.copy()]
    H_vals = [H_at(x, p)]
    truncated = False
    t = 0.0
    while t < T - 1e-12:
        h = min(step, T - t)
        try:
            k1x, k1p = rhs(x, p)
            k2x, k2p = rhs(x + 0.5 * h * k1x, p + 0.5 * h * k1p)
            k3x, k3p = rhs(x + 0.5 * h * k2x, p + 0.5 * h * k2p)
            k4x, k4p = rhs(x + h * k3x, p + h * k3p)
            x_new = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            p_new = p + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
            H_new = H_at(x_new, p_new)
        except (LegendreInverseError, DomainError):
            truncated = True
            break
        x, p = x_new, p_new
        t += h
        ts.append(t)
        xs.append(x.copy())
        ps.append(p.copy())
        H_vals.append(H_new)
    return HamiltonPath(
        ts=np.array(ts),
        xs=np.array(xs),
        ps=np.array(ps),
        H_values=np.array(H_vals),
        truncated=truncated,
    )


def poisson_bracket(phi, ham, point) -> float:
    """{phi, H} = sum_i (dphi/dx^i dH/dp_i - dphi/dp_i dH/dx^i).

    Both expressions are over phase variables x0..x{n-1}, p0..p{n-1}
    (p is accepted as an alias for the fiber slots); ``point`` is (x, p).
    """
    x, p = point
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = len(x)
    if len(p) != n:
        raise InputError("x and p must have the same length")

    def as_expr(e):
        if isinstance(e, str):
            return parse_expr(e, n, p_alias=True)
        if isinstance(e, Expr):
            return e
        raise InputError("poisson_bracket arguments must be expressions")

    phi_e, ham_e = as_expr(phi), as_expr(ham)
    sp = space(2 * n, 1)
    slots = [sp.variable(i, float(x[i])) for i in range(n)] + [
        sp.variable(n + i, float(p[i])) for i in range(n)
    ]

    def gradient(e):
        # expressions that ignore the fiber slots still get full-length slots
        full = slots if e.uses_y else slots[:n]
        jet = eval_expr(e, full)
        grad = np.zeros(2 * n)
        if not hasattr(jet, "partial"):
            return grad
        num_vars = jet.space.num_vars
        for a in range(num_vars):
            alpha = [0] * num_vars
            alpha[a] = 1
            grad[a] = jet.partial(tuple(alpha))
        return grad

    grad_phi = gradient(phi_e)
    grad_ham = gradient(ham_e)
    return float(
        np.dot(grad_phi[:n], grad_ham[n:]) - np.dot(grad_phi[n:], grad_ham[:n])
    )


def legendre_1d(f, xi_samples) -> list:
    """1-D Legendre table [(xi, p, H, involution_residual), ...].

    For strictly convex f:  p = f'(xi), H(p) = -f(xi) + p xi.  The
    involution residual re-derives xi from p alone — a finite-difference
    slope of the table refined by a Newton solve of f'(xi) = p — and
    measures |-H + p xi_hat - f(xi_hat)|, which vanishes when the
    transform inverts cleanly.
    """
    if isinstance(f, str):
        f = parse_expr(f, 1)
    if not isinstance(f, Expr) or f.uses_y:
        raise InputError("f must be an expression in x0 alone")
    xi = [float(v) for v in xi_samples]
    if len(xi) < 2:
        raise InputError("legendre_1d needs at least two samples")

    sp = space(1, 2)

    def jet_at(v):
        j = eval_expr(f, [sp.variable(0, v)])
        if not hasattr(j, "partial"):
            raise InputError("f is constant; its Legendre transform is degenerate")
        return j.value, j.partial((1,)), j.partial((2,))

    rows = []
    for k, v in enumerate(xi):
        f_val, f1, f2 = jet_at(v)
        if f2 <= 0.0:
            raise InputError(f"f is not strictly convex at sample {k} (xi = {v})")
        rows.append([v, f1, -f_val + f1 * v])

    out = []
    for k, (v, p, H) in enumerate(rows):
        lo = max(0, k - 1)
        hi = min(len(rows) - 1, k + 1)
        dp = rows[hi][1] - rows[lo][1]
        if dp != 0.0:
            xi_hat = (rows[hi][2] - rows[lo][2]) / dp  # dH/dp is xi
        else:
            xi_hat = v
        for _ in range(NEWTON_MAX_ITER):
            f_val, f1, f2 = jet_at(xi_hat)
            if abs(f1 - p) <= 1e-14 * (1.0 + abs(p)):
                break
            xi_hat -= (f1 - p) / f2
        f_at_hat, _, _ = jet_at(xi_hat)
        residual = abs(-H + p * xi_hat - f_at_hat)
        out.append((v, p, H, residual))
    return out


def hilbert_spray_check(spec: MetricSpec, p, probes: int = 20) -> AuditReport:
    """Contract d(eta) with the spray and compare against dF.

    eta = -g_ij y^i dx^j has components eta_j = -(1/2) dL^2/dy^j and no
    dy components, so Omega = d(eta) is the antisymmetrized Jacobian of
    (eta, 0) over the 2n coordinates.  The identity checked on random
    probes V is  Omega(S, V) = dF(V)  with S = (y, -2G), plus
    nondegeneracy of Omega.
    """
    from .geodesics import spray_rhs  # local import to avoid a cycle

    if probes < 1:
        raise InputError("probes must be >= 1")
    x, y = p
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = spec.dim
    jet = l2_jet(spec, x, y, 2)
    if jet.value <= 0.0:
        raise OutsideDomainError("L^2 must be positive")

    def partial2(a, b):
        alpha = [0] * (2 * n)
        alpha[a] += 1
        alpha[b] += 1
        return jet.partial(tuple(alpha))

    # eta over the 2n coordinates: (eta_x, 0) with eta_j = -(1/2) dL^2/dy^j
    d_eta = np.zeros((2 * n, 2 * n))
    for a in range(2 * n):
        for j in range(n):
            d_eta[a, j] += -0.5 * partial2(a, n + j)
    omega = d_eta - d_eta.T

    grad_F = np.empty(2 * n)
    for a in range(2 * n):
        alpha = [0] * (2 * n)
        alpha[a] = 1
        grad_F[a] = 0.5 * jet.partial(tuple(alpha))

    dx, dy = spray_rhs(spec, x, y)
    spray_vec = np.concatenate([dx, dy])

    lhs_covector = omega.T @ spray_vec  # V -> omega(S, V)
    scale = max(1.0, float(np.max(np.abs(lhs_covector))), float(np.max(np.abs(grad_F))))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(probes):
        V = rng.uniform(-1.0, 1.0, size=2 * n)
        worst = max(worst, abs(float(lhs_covector @ V - grad_F @ V)))
    rows = [
        check("hilbert-spray-contraction", worst, 1e-6 * scale, x=x, y=y),
    ]
    det_scale = max(1.0, float(np.max(np.abs(omega))))
    det = abs(float(np.linalg.det(omega)))
    margin = (1e-8 * det_scale) / det if det > 0 else math.inf
    rows.append(check("hilbert-form-nondegenerate", margin, 1.0, x=x, y=y))
    return AuditReport.from_checks(rows)


def hamilton_to_csv(path: HamiltonPath) -> str:
    """CSV export: t,x0..,p0..,H with 17 significant digits."""
    n = path.xs.shape[1]
    columns = ["t"] + [f"x{i}" for i in range(n)] + [f"p{i}" for i in range(n)] + ["H"]
    lines = [",".join(columns)]
    for k in range(len(path.ts)):
        row = [path.ts[k], *path.xs[k], *path.ps[k], path.H_values[k]]
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


def legendre_1d_to_csv(rows) -> str:
    lines = ["xi,p,H,involution_residual"]
    for row in rows:
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"
