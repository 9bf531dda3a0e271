"""Geodesic integration in normalized arc length.

The geodesic system is integrated as the first-order flow

    dx/dtau = y,        dy/dtau = -2 G(x, y),

with classic fixed-step RK4.  The initial velocity is rescaled so that
L(x0, y0) = 1, making tau arc length; the conserved quantities logged at
every sample (L itself, the energy F = L^2/2, and the Clairaut invariant
on surfaces of revolution) then double as integration-accuracy monitors.

The spray G is evaluated from an order-2 jet of L^2 through

    2 G_j = y^i d^2F/dy^j dx^i - dF/dx^j,     G^i = g^{ij} G_j,

which needs only second derivatives — much cheaper per RK4 stage than the
full Christoffel route, and equal to it (the tensor engine cross-checks
the two forms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, OutsideDomainError
from .metrics import MetricSpec, _profile_pair, eval_L, l2_jet
from .report import AuditReport, check
from .tensors import spray

__all__ = [
    "GeodesicPath",
    "spray_rhs",
    "integrate_geodesic",
    "conservation_report",
    "el_residual",
    "clairaut_invariant",
    "path_to_csv",
]

EXIT_LOCALIZATION = 1e-8  # domain exits are bisected to this width in tau
DRIFT_TOLERANCE = 1e-6  # default conservation-report tolerance


@dataclass(frozen=True)
class GeodesicPath:
    taus: np.ndarray  # strictly increasing, starts at 0
    xs: np.ndarray  # (len(taus), n)
    ys: np.ndarray  # (len(taus), n); y_k = dx/dtau at tau_k
    logs: list  # per-sample dict {L_value, energy, clairaut?}
    exited_domain: bool


def spray_rhs(spec: MetricSpec, x: np.ndarray, y: np.ndarray):
    """(dx/dtau, dy/dtau) at one point, from an order-2 jet of L^2."""
    n = spec.dim
    jet = l2_jet(spec, x, y, 2)
    if not math.isfinite(jet.value) or jet.value <= 0.0:
        raise OutsideDomainError(f"L^2 = {jet.value} is not positive")

    def e2(a: int, b: int) -> tuple:
        alpha = [0] * (2 * n)
        alpha[a] += 1
        alpha[b] += 1
        return tuple(alpha)

    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = 0.5 * jet.partial(e2(n + i, n + j))
    two_G_low = np.empty(n)
    for j in range(n):
        alpha = [0] * (2 * n)
        alpha[j] = 1
        dl2_dxj = jet.partial(tuple(alpha))
        acc = -0.5 * dl2_dxj
        for i in range(n):
            acc += 0.5 * jet.partial(e2(i, n + j)) * y[i]
        two_G_low[j] = acc
    try:
        minus_dy = np.linalg.solve(g, two_G_low)
    except np.linalg.LinAlgError:
        raise OutsideDomainError("fundamental tensor is singular along the path")
    if not np.all(np.isfinite(minus_dy)):
        raise OutsideDomainError("spray evaluation overflowed along the path")
    return np.array(y, dtype=float), -minus_dy


def _try_step(spec: MetricSpec, x, y, h: float):
    """One RK4 step; raises DomainError when any stage or the endpoint leaves."""
    k1x, k1y = spray_rhs(spec, x, y)
    k2x, k2y = spray_rhs(spec, x + 0.5 * h * k1x, y + 0.5 * h * k1y)
    k3x, k3y = spray_rhs(spec, x + 0.5 * h * k2x, y + 0.5 * h * k2y)
    k4x, k4y = spray_rhs(spec, x + h * k3x, y + h * k3y)
    x_new = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    y_new = y + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
    eval_L(spec, (x_new, y_new))  # endpoint must stay admissible
    return x_new, y_new


def _sample_log(spec: MetricSpec, x, y) -> dict:
    L = eval_L(spec, (x, y))
    entry = {"L_value": L, "energy": 0.5 * L * L}
    if spec.kind == "surface_of_revolution":
        entry["clairaut"] = clairaut_invariant(spec, x, y)
    return entry


def integrate_geodesic(
    spec: MetricSpec,
    x0,
    y0,
    tau_max: float,
    step: float,
    renormalize: bool = True,
) -> GeodesicPath:
    """RK4 geodesic from (x0, y0) up to arc length tau_max.

    y0 is rescaled to L(x0, y0) = 1 unless ``renormalize`` is turned off
    (raw parametrization is only needed for homogeneity checks).  If the
    path leaves the admissible cone, the last step is bisected down to
    1e-8 in tau and the truncated path is returned with
    ``exited_domain=True``.
    """
    if step <= 0.0:
        raise InputError(f"step must be positive, got {step}")
    if tau_max <= 0.0:
        raise InputError(f"tau_max must be positive, got {tau_max}")
    x = np.asarray(x0, dtype=float).copy()
    y = np.asarray(y0, dtype=float).copy()
    if x.shape != (spec.dim,) or y.shape != (spec.dim,):
        raise InputError(f"x0 and y0 must have length {spec.dim}")
    L0 = eval_L(spec, (x, y))
    if renormalize:
        y = y / L0

    taus = [0.0]
    xs = [x.copy()]
    ys = [y.copy()]
    logs = [_sample_log(spec, x, y)]
    exited = False
    tau = 0.0
    while tau < tau_max - 1e-12:
        h = min(step, tau_max - tau)
        try:
            x_new, y_new = _try_step(spec, x, y, h)
        except DomainError:
            # bisect the step to localize the boundary crossing
            lo, hi = 0.0, h
            best = None
            while hi - lo > EXIT_LOCALIZATION:
                mid = 0.5 * (lo + hi)
                try:
                    candidate = _try_step(spec, x, y, mid)
                except DomainError:
                    hi = mid
                else:
                    lo, best = mid, candidate
            if best is not None:
                x, y = best
                tau += lo
                taus.append(tau)
                xs.append(x.copy())
                ys.append(y.copy())
                logs.append(_sample_log(spec, x, y))
            exited = True
            break
        x, y = x_new, y_new
        tau += h
        taus.append(tau)
        xs.append(x.copy())
        ys.append(y.copy())
        logs.append(_sample_log(spec, x, y))
    return GeodesicPath(
        taus=np.array(taus),
        xs=np.array(xs),
        ys=np.array(ys),
        logs=logs,
        exited_domain=exited,
    )


def conservation_report(
    spec: MetricSpec, path: GeodesicPath, tolerance: float = DRIFT_TOLERANCE
) -> AuditReport:
    """Max relative drift of L, energy, and (revolution only) r cos(alpha).

    Values are recomputed from the stored samples, so tampering with the
    path is caught even though the integrator logged clean values.
    """
    if len(path.taus) == 0:
        raise InputError("conservation_report needs a non-empty path")
    L_vals = np.array([eval_L(spec, (x, y)) for x, y in zip(path.xs, path.ys)])
    E_vals = 0.5 * L_vals**2
    rows = []

    def drift(values: np.ndarray) -> float:
        v0 = values[0]
        denom = abs(v0) if abs(v0) > 1e-9 else 1.0
        return float(np.max(np.abs(values - v0))) / denom

    x0 = tuple(path.xs[0])
    y0 = tuple(path.ys[0])
    rows.append(check("arc-length-drift", drift(L_vals), tolerance, x=x0, y=y0))
    rows.append(check("energy-drift", drift(E_vals), tolerance, x=x0, y=y0))
    if spec.kind == "surface_of_revolution":
        c_vals = np.array(
            [clairaut_invariant(spec, x, y) for x, y in zip(path.xs, path.ys)]
        )
        rows.append(check("clairaut-drift", drift(c_vals), tolerance, x=x0, y=y0))
    return AuditReport.from_checks(rows)


def clairaut_invariant(spec: MetricSpec, x, y) -> float:
    """r(z) cos(alpha) = r^2 theta-dot / L on a surface of revolution."""
    if spec.kind != "surface_of_revolution":
        raise InputError("clairaut_invariant requires a surface_of_revolution metric")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L = eval_L(spec, (x, y))
    r, _ = _profile_pair(spec.profile, float(x[0]))
    return float(r * r * y[1] / L)


# five-point central stencils (O(h^4) accurate)
def _stencil_d1(w: np.ndarray, h: float) -> np.ndarray:
    return (-w[4:] + 8 * w[3:-1] - 8 * w[1:-3] + w[:-4]) / (12 * h)


def _stencil_d2(w: np.ndarray, h: float) -> np.ndarray:
    return (-w[4:] + 16 * w[3:-1] - 30 * w[2:-2] + 16 * w[1:-3] - w[:-4]) / (
        12 * h * h
    )


def el_residual(spec: MetricSpec, ts, xs, form: str = "F") -> float:
    """Max Euler-Lagrange residual of a sampled curve, by finite differences.

    ``form="F"``: residual of  x-ddot^i + gamma^i_mn x-dot^m x-dot^n,
    valid for arc-length (affine) parametrization.
    ``form="L"``: adds the parametrization term - x-dot^i d(ln L)/dt and is
    invariant under monotone reparametrization.

    The samples must be uniformly spaced.  Derivatives use five-point
    stencils, so the F form needs >= 5 samples and the L form >= 9 (the
    log-speed derivative consumes another two samples on each side).
    """
    if form not in ("F", "L"):
        raise InputError(f"form must be 'F' or 'L', got {form!r}")
    ts = np.asarray(ts, dtype=float)
    xs = np.asarray(xs, dtype=float)
    if ts.ndim != 1 or xs.ndim != 2 or xs.shape[0] != ts.shape[0]:
        raise InputError("curve must be (ts, xs) with one coordinate row per sample")
    min_samples = 5 if form == "F" else 9
    if len(ts) < min_samples:
        raise InputError(f"form {form!r} needs at least {min_samples} samples")
    hs = np.diff(ts)
    h = hs[0]
    if h <= 0 or np.max(np.abs(hs - h)) > 1e-8 * abs(h):
        raise InputError("samples must be uniformly spaced in t")

    vel = np.stack([_stencil_d1(xs[:, i], h) for i in range(xs.shape[1])], axis=1)
    acc = np.stack([_stencil_d2(xs[:, i], h) for i in range(xs.shape[1])], axis=1)
    inner_x = xs[2:-2]

    residual = np.empty_like(vel)
    for k in range(vel.shape[0]):
        gamma_up, _ = spray(spec, (inner_x[k], vel[k]))
        residual[k] = acc[k] + np.einsum("imn,m,n->i", gamma_up, vel[k], vel[k])

    if form == "L":
        log_L = np.log(
            [eval_L(spec, (inner_x[k], vel[k])) for k in range(vel.shape[0])]
        )
        dlogL = _stencil_d1(log_L, h)
        # interior of the interior: drop two more samples on each side
        residual = residual[2:-2] - vel[2:-2] * dlogL[:, None]
    return float(np.max(np.abs(residual)))


def path_to_csv(spec: MetricSpec, path: GeodesicPath) -> str:
    """CSV export: tau,x0..,y0..,L,E[,clairaut], 17 significant digits."""
    n = spec.dim
    columns = (
        ["tau"]
        + [f"x{i}" for i in range(n)]
        + [f"y{i}" for i in range(n)]
        + ["L", "E"]
    )
    with_clairaut = spec.kind == "surface_of_revolution"
    if with_clairaut:
        columns.append("clairaut")
    lines = [",".join(columns)]
    for k in range(len(path.taus)):
        row = [path.taus[k], *path.xs[k], *path.ys[k]]
        row += [path.logs[k]["L_value"], path.logs[k]["energy"]]
        if with_clairaut:
            row.append(path.logs[k]["clairaut"])
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"
