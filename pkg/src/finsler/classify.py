"""Structure tests: homogeneity, regularity, Berwald, Minkowski, conformal.

Every audit here is sampling-based and deterministic for a fixed
(spec, samples, seed), so reports can be compared byte for byte.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, SamplingError
from .metrics import (
    MetricSpec,
    _metric_matrix,
    coeff_tensor,
    eval_L,
    l2_jet,
    sample_direction,
    sample_point,
)
from .report import AuditReport, check, fan_out
from .tensors import PointCalculus, _scale

__all__ = [
    "homogeneity_audit",
    "regularity",
    "berwald_test",
    "locally_minkowski_test",
    "conformal_check",
]

HOMOGENEITY_RTOL = 1e-8
REGULARITY_FLOOR = 1e-10
BERWALD_DEFAULT_TOL = 1e-6
MINKOWSKI_RTOL = 1e-8
CONFORMAL_SPREAD_TOL = 1e-8


def _dl2_dy_contraction(spec, x, y):
    """(L, y . dL/dy) from one order-1 jet of L^2."""
    n = spec.dim
    jet = l2_jet(spec, x, y, 1)
    L = float(np.sqrt(jet.value))
    y_dl = 0.0
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[n + i] = 1
        y_dl += y[i] * jet.partial(tuple(alpha))
    return L, y_dl / (2.0 * L)


def homogeneity_audit(
    spec: MetricSpec, samples: int = 20, seed: int = 0, threads: int = 1
) -> AuditReport:
    """Positive 1-homogeneity of L and the induced degrees of g, G, N.

    Per sampled point: L(lambda y) = lambda L at lambda in {1/2, 2}, the
    Euler relation y.dL/dy = L, and degree 0 / 2 / 1 scaling of the
    fundamental tensor, spray, and nonlinear connection at lambda = 2.
    Samples are drawn up front, so the report does not depend on
    ``threads``.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    points = [(k, *sample_point(spec, rng)) for k in range(samples)]

    def rows_for(item):
        k, x, y = item
        x = np.asarray(x)
        y = np.asarray(y)
        checks = []
        L = eval_L(spec, (x, y))

        res_scaling = 0.0
        for lam in (0.5, 2.0):
            L_lam = eval_L(spec, (x, lam * y))
            res_scaling = max(res_scaling, abs(L_lam - lam * L) / (1.0 + lam * L))
        checks.append(
            check(f"sample-{k:02d}-L-scaling", res_scaling, HOMOGENEITY_RTOL, x=x, y=y)
        )

        _, y_dl = _dl2_dy_contraction(spec, x, y)
        checks.append(
            check(
                f"sample-{k:02d}-euler-relation",
                abs(y_dl - L) / (1.0 + L),
                HOMOGENEITY_RTOL,
                x=x,
                y=y,
            )
        )

        g1 = _metric_matrix(spec, x, y)
        g2 = _metric_matrix(spec, x, 2.0 * y)
        checks.append(
            check(
                f"sample-{k:02d}-g-degree-0",
                float(np.max(np.abs(g2 - g1))) / _scale(g1),
                HOMOGENEITY_RTOL,
                x=x,
                y=y,
            )
        )

        pc1 = PointCalculus.at_point(spec, x, y, order=4)
        pc2 = PointCalculus.at_point(spec, x, 2.0 * y, order=4)
        checks.append(
            check(
                f"sample-{k:02d}-G-degree-2",
                float(np.max(np.abs(pc2.G0 - 4.0 * pc1.G0))) / _scale(4.0 * pc1.G0),
                HOMOGENEITY_RTOL,
                x=x,
                y=y,
            )
        )
        checks.append(
            check(
                f"sample-{k:02d}-N-degree-1",
                float(np.max(np.abs(pc2.N0 - 2.0 * pc1.N0))) / _scale(2.0 * pc1.N0),
                HOMOGENEITY_RTOL,
                x=x,
                y=y,
            )
        )
        return checks

    return AuditReport.from_checks(fan_out(rows_for, points, threads), seed=seed)


def regularity(spec: MetricSpec, x, y) -> tuple:
    """(det a_ij(x, y), regular?) for an m-th root metric.

    a_ij is the (m-2)-fold y-contraction of the coefficient tensor over
    L^(m-2); the metric is regular at (x, y) when |det a_ij| clears
    1e-10 * scale.  A vanishing determinant is reported, not raised —
    only leaving the conical domain (L^m <= 0) is an error.
    """
    if spec.kind != "mth_root":
        raise InputError("regularity analysis applies to mth_root metrics only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L = eval_L(spec, (x, y))
    t = coeff_tensor(spec, x)
    for _ in range(spec.m - 2):
        t = t @ y
    a_ij = t / L ** (spec.m - 2)
    det_a = float(np.linalg.det(a_ij))
    regular = abs(det_a) > REGULARITY_FLOOR * _scale(a_ij)
    return det_a, bool(regular)


def _second_y_derivatives_of_spray(pc: PointCalculus) -> np.ndarray:
    """G^i_jk = d^2 G^i / dy^j dy^k from an order-5 calculus."""
    n = pc.n
    out = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            dj = pc.dy(pc.G_jets[i], j)
            for k in range(j, n):
                out[i, j, k] = out[i, k, j] = pc.dy(dj, k).value
    return out


def berwald_test(
    spec: MetricSpec,
    samples: int = 4,
    seed: int = 0,
    tol: float = BERWALD_DEFAULT_TOL,
    threads: int = 1,
) -> AuditReport:
    """Does the Berwald connection G^i_jk depend on y?

    At each sampled x the second fibre derivatives of the spray are
    evaluated on a deterministic set of 2n+3 admissible directions; for
    a Berwald metric they agree to rounding, and they always contract
    back to the spray (G^i_jk y^j y^k = 2 G^i).
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = spec.dim
    items = []
    for k in range(samples):
        x, y0 = sample_point(spec, rng)
        x = np.asarray(x)
        ys = [np.asarray(y0)]
        while len(ys) < 2 * n + 3:
            ys.append(sample_direction(spec, x, rng))
        items.append((k, x, ys))

    def rows_for(item):
        k, x, ys = item
        tables = []
        contraction = 0.0
        spray_scale = 1.0
        for y in ys:
            pc = PointCalculus.at_point(spec, x, y, order=5)
            table = _second_y_derivatives_of_spray(pc)
            tables.append(table)
            contraction = max(
                contraction,
                float(np.max(np.abs(np.einsum("ijk,j,k->i", table, y, y) - 2.0 * pc.G0))),
            )
            spray_scale = max(spray_scale, _scale(2.0 * pc.G0))

        deviation = max(
            float(np.max(np.abs(t - tables[0]))) for t in tables[1:]
        )
        gscale = _scale(*tables)
        return [
            check(
                f"sample-{k:02d}-berwald-y-independence",
                deviation,
                tol * gscale,
                x=x,
                y=ys[0],
            ),
            check(
                f"sample-{k:02d}-spray-reconstruction",
                contraction,
                1e-8 * spray_scale,
                x=x,
                y=ys[0],
            ),
        ]

    return AuditReport.from_checks(fan_out(rows_for, items, threads), seed=seed)


def locally_minkowski_test(
    spec: MetricSpec, samples: int = 20, seed: int = 0, threads: int = 1
) -> AuditReport:
    """Is L independent of x in the chart the metric is written in?

    This certifies max_i |dL/dx^i| <= 1e-8 * scale at sampled points.
    It is a chart-level certificate only: a metric that is locally
    Minkowski in some other coordinates will fail here, and the row
    names say "in-chart" to keep that visible.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = spec.dim
    points = [(k, *sample_point(spec, rng)) for k in range(samples)]

    def rows_for(item):
        k, x, y = item
        jet = l2_jet(spec, x, y, 1)
        L = float(np.sqrt(jet.value))
        worst = 0.0
        for i in range(n):
            alpha = [0] * (2 * n)
            alpha[i] = 1
            worst = max(worst, abs(jet.partial(tuple(alpha))) / (2.0 * L))
        return [
            check(
                f"sample-{k:02d}-dL-dx-in-chart",
                worst,
                MINKOWSKI_RTOL * max(1.0, L),
                x=x,
                y=y,
            )
        ]

    return AuditReport.from_checks(fan_out(rows_for, points, threads), seed=seed)


def conformal_check(
    spec_a: MetricSpec, spec_b: MetricSpec, samples: int = 12, seed: int = 0
) -> tuple:
    """(is_conformal, [(x, c(x)), ...]) testing L_b = exp(c(x)) L_a.

    At each sampled x the log-ratio log(L_b / L_a) is evaluated on
    several admissible directions; conformality means the spread over
    directions vanishes, and the mean is the estimate of c(x).
    """
    if spec_a.dim != spec_b.dim:
        raise InputError(
            f"conformal_check needs equal dimensions, got {spec_a.dim} and {spec_b.dim}"
        )
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    estimates = []
    is_conformal = True
    for _ in range(samples):
        ratios = None
        x = None
        for _attempt in range(40):
            x, y = sample_point(spec_a, rng)
            x = np.asarray(x)
            ys = [np.asarray(y)]
            while len(ys) < 6:
                ys.append(sample_direction(spec_a, x, rng))
            collected = []
            for yy in ys:
                try:
                    lb = eval_L(spec_b, (x, yy))
                except Exception:
                    continue
                la = eval_L(spec_a, (x, yy))
                collected.append(np.log(lb / la))
            if len(collected) >= 4:
                ratios = np.array(collected)
                break
        if ratios is None:
            raise SamplingError(
                "could not find a base point admissible for both metrics"
            )
        spread = float(np.max(ratios) - np.min(ratios))
        if spread > CONFORMAL_SPREAD_TOL:
            is_conformal = False
        estimates.append((tuple(float(v) for v in x), float(np.mean(ratios))))
    return is_conformal, estimates
