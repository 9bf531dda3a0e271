"""Geodesic integrator tests: closed-form paths, conservation, EL residuals."""

import math

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from finsler.errors import InputError, OutsideDomainError
from finsler.geodesics import (
    GeodesicPath,
    clairaut_invariant,
    conservation_report,
    el_residual,
    integrate_geodesic,
    path_to_csv,
    spray_rhs,
)
from finsler.metrics import builtin, eval_L, parse_metric_spec

SPHERE = builtin("riemannian_sphere")
CYLINDER = builtin("cylinder")
EUCLID2 = builtin("euclidean", 2)

# 45-degree launch from the equator (arc-length normalized at z=0)
Y45 = np.array([math.sqrt(0.5), math.sqrt(0.5)])


@pytest.fixture(scope="module")
def sphere_45_path():
    return integrate_geodesic(SPHERE, (0.0, 0.0), Y45, 2.0, 1e-3)


def test_euclidean_straight_line():
    path = integrate_geodesic(EUCLID2, (0.0, 0.0), (1.0, 0.0), 1.0, 1e-3)
    assert not path.exited_domain
    np.testing.assert_allclose(path.xs[-1], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(path.ys, np.tile([1.0, 0.0], (len(path.taus), 1)), atol=1e-14)
    assert path.taus[0] == 0.0
    assert np.all(np.diff(path.taus) > 0)
    for entry in path.logs[:: len(path.logs) // 7]:
        assert entry["L_value"] == pytest.approx(1.0, abs=1e-13)
        assert entry["energy"] == pytest.approx(0.5, abs=1e-13)


@pytest.mark.parametrize("name", ["cubic_l1", "quartic_s4"])
def test_constant_coefficient_metrics_give_straight_lines(name):
    spec = builtin(name)
    x0 = np.zeros(spec.dim)
    y0 = np.array([2.0, 0.3, 0.2, 0.1][: spec.dim]) + 0.5
    L0 = eval_L(spec, (x0, y0))
    path = integrate_geodesic(spec, x0, y0, 1.5, 1e-3)
    expected = x0 + 1.5 * y0 / L0  # y0 is renormalized to L = 1
    np.testing.assert_allclose(path.xs[-1], expected, atol=1e-10)


def test_sphere_equator_is_periodic():
    path = integrate_geodesic(SPHERE, (0.0, 0.0), (0.0, 1.0), 2 * math.pi, 5e-3)
    assert not path.exited_domain
    assert np.max(np.abs(path.xs[:, 0])) < 1e-9  # stays on the equator
    assert path.xs[-1][1] == pytest.approx(2 * math.pi, abs=1e-6)


def test_initial_velocity_renormalization():
    a = integrate_geodesic(SPHERE, (0.0, 0.0), (0.0, 1.0), 1.0, 1e-2)
    b = integrate_geodesic(SPHERE, (0.0, 0.0), (0.0, 3.7), 1.0, 1e-2)
    np.testing.assert_allclose(a.xs, b.xs, atol=1e-14)


def test_geodesic_homogeneity_raw_parametrization():
    # y0 -> lambda y0 with tau_max/lambda reaches the same endpoint
    lam = 2.0
    a = integrate_geodesic(
        SPHERE, (0.1, 0.2), Y45, 1.0, 1e-3, renormalize=False
    )
    b = integrate_geodesic(
        SPHERE, (0.1, 0.2), lam * Y45, 1.0 / lam, 1e-3 / lam, renormalize=False
    )
    np.testing.assert_allclose(a.xs[-1], b.xs[-1], atol=1e-8)


def test_spray_rhs_matches_tensor_engine():
    from finsler.tensors import spray

    for spec, p in [
        (SPHERE, ((0.2, 0.4), (0.6, 0.5))),
        (builtin("cubic_l2"), ((0.0, 0.0, 0.0), (1.2, 0.8, 1.0))),
    ]:
        dx, dy = spray_rhs(spec, np.array(p[0]), np.array(p[1]))
        _, G = spray(spec, p)
        np.testing.assert_allclose(dx, p[1], atol=0)
        np.testing.assert_allclose(dy, -2 * G, rtol=1e-9, atol=1e-12)


def test_conservation_report_clean_path(sphere_45_path):
    rep = conservation_report(SPHERE, sphere_45_path)
    assert rep.verdict
    names = [row.name for row in rep.checks]
    assert names == ["arc-length-drift", "energy-drift", "clairaut-drift"]
    for row in rep.checks:
        assert row.residual < 1e-10


def test_conservation_report_flags_corruption(sphere_45_path):
    ys = sphere_45_path.ys.copy()
    ys[len(ys) // 2] *= 1.01
    bad = GeodesicPath(
        sphere_45_path.taus, sphere_45_path.xs, ys, sphere_45_path.logs, False
    )
    rep = conservation_report(SPHERE, bad)
    assert not rep.verdict
    assert rep.checks[0].residual >= 5e-3


def test_arc_length_drift_is_fourth_order():
    drifts = []
    for step in (0.02, 0.01):
        path = integrate_geodesic(SPHERE, (0.0, 0.0), Y45, 2.0, step)
        L_vals = np.array([entry["L_value"] for entry in path.logs])
        drifts.append(np.max(np.abs(L_vals - 1.0)))
    assert drifts[1] <= 1e-13 or drifts[0] / drifts[1] >= 12.0


def test_el_residual_fourth_order_on_geodesic():
    residuals = []
    for step in (8e-3, 4e-3):
        path = integrate_geodesic(SPHERE, (0.1, 0.2), Y45, 1.0, step)
        residuals.append(el_residual(SPHERE, path.taus, path.xs, form="F"))
    assert residuals[1] <= 1e-12 or residuals[0] / residuals[1] >= 10.0
    assert residuals[1] < 1e-8


def test_el_residual_parameter_covariance():
    # resampled under t -> t^2 the L form stays small, the F form does not
    path = integrate_geodesic(SPHERE, (0.1, 0.2), Y45, 1.0, 2e-3)
    spline = CubicSpline(path.taus, path.xs)
    ts = np.linspace(0.3, 0.95, 400)
    xs_re = spline(ts**2)
    assert el_residual(SPHERE, ts, xs_re, form="L") < 1e-5
    assert el_residual(SPHERE, ts, xs_re, form="F") > 1e-1


def test_el_residual_straight_line_any_parametrization():
    ts = np.linspace(0.0, 1.0, 101)
    s = ts + ts**3  # monotone reparametrization
    xs = np.stack([0.2 + 0.7 * s, -0.1 + 0.3 * s], axis=1)
    assert el_residual(EUCLID2, ts, xs, form="L") < 1e-6


def test_el_residual_input_validation():
    ts = np.linspace(0, 1, 4)
    xs = np.zeros((4, 2))
    with pytest.raises(InputError):
        el_residual(EUCLID2, ts, xs, form="F")  # too few samples
    with pytest.raises(InputError):
        el_residual(EUCLID2, np.linspace(0, 1, 8), np.ones((8, 2)), form="L")
    ragged = np.array([0.0, 0.1, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    with pytest.raises(InputError):
        el_residual(EUCLID2, ragged, np.ones((9, 2)), form="F")
    with pytest.raises(InputError):
        el_residual(EUCLID2, np.linspace(0, 1, 9), np.ones((9, 2)), form="X")


def test_path_length_is_parameter_independent():
    # integral of L dt over a reparametrized resampling recovers arc length
    path = integrate_geodesic(SPHERE, (0.1, 0.2), Y45, 1.0, 2e-3)
    spline = CubicSpline(path.taus, path.xs)
    d_spline = spline.derivative()
    ts = np.linspace(0.2, 1.0, 801)  # tau = t^2, avoiding the y=0 corner at t=0
    L_vals = []
    for t in ts:
        tau = t * t
        x = spline(tau)
        y = d_spline(tau) * 2 * t  # chain rule velocity in the t parameter
        L_vals.append(eval_L(SPHERE, (x, y)))
    length = np.trapezoid(L_vals, ts)
    expected = 1.0 - 0.2**2
    assert length == pytest.approx(expected, rel=1e-4)


def test_domain_exit_is_truncated_and_flagged():
    spec = parse_metric_spec(
        '{"kind": "custom", "dim": 2, "L": "sqrt((1 - x0)*(y0^2 + y1^2))"}'
    )
    path = integrate_geodesic(spec, (0.0, 0.0), (1.0, 0.0), 3.0, 1e-2)
    assert path.exited_domain
    assert path.taus[-1] < 3.0
    assert np.all(np.diff(path.taus) > 0)
    # last sample still admissible, and close to the x0 = 1 boundary
    assert eval_L(spec, (path.xs[-1], path.ys[-1])) > 0
    assert path.xs[-1][0] < 1.0
    assert 1.0 - path.xs[-1][0] < 1e-4


def test_integrator_input_validation():
    with pytest.raises(InputError):
        integrate_geodesic(EUCLID2, (0, 0), (1, 0), 1.0, 0.0)
    with pytest.raises(InputError):
        integrate_geodesic(EUCLID2, (0, 0), (1, 0), -1.0, 1e-2)
    with pytest.raises(InputError):
        integrate_geodesic(EUCLID2, (0, 0, 0), (1, 0, 0), 1.0, 1e-2)
    with pytest.raises(OutsideDomainError):
        integrate_geodesic(EUCLID2, (0, 0), (0, 0), 1.0, 1e-2)


# ---------------------------------------------------------------------------
# Clairaut invariant


def test_clairaut_frozen_values():
    assert clairaut_invariant(CYLINDER, (0.0, 0.0), (0.0, 1.0)) == pytest.approx(1.0)
    assert clairaut_invariant(SPHERE, (0.0, 0.0), (0.0, 1.0)) == pytest.approx(1.0)
    # cylinder, equal z/theta speed: cos(alpha) = 1/sqrt(2)
    assert clairaut_invariant(CYLINDER, (0.0, 0.0), (1.0, 1.0)) == pytest.approx(
        1 / math.sqrt(2), rel=1e-12
    )


def test_clairaut_matches_inner_product_definition():
    # cos(alpha) = <v, e_theta>_g / (|v|_g |e_theta|_g) on the surface
    rng = np.random.default_rng(7)
    from finsler.tensors import fundamental_tensor

    for _ in range(10):
        x = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-2.0, 2.0)])
        y = rng.uniform(-1.5, 1.5, size=2)
        if abs(y[0]) + abs(y[1]) < 0.2:
            continue
        g = fundamental_tensor(SPHERE, (x, y))
        e_theta = np.array([0.0, 1.0])
        cos_alpha = (y @ g @ e_theta) / math.sqrt((y @ g @ y) * (e_theta @ g @ e_theta))
        r = math.sqrt(g[1, 1])  # g_theta_theta = r^2
        assert clairaut_invariant(SPHERE, x, y) == pytest.approx(
            r * cos_alpha, rel=1e-10
        )


def test_clairaut_requires_revolution_metric():
    with pytest.raises(InputError):
        clairaut_invariant(EUCLID2, (0.0, 0.0), (1.0, 0.0))


# ---------------------------------------------------------------------------
# CSV export


def test_csv_header_and_determinism(sphere_45_path):
    text = path_to_csv(SPHERE, sphere_45_path)
    lines = text.splitlines()
    assert lines[0] == "tau,x0,x1,y0,y1,L,E,clairaut"
    assert len(lines) == len(sphere_45_path.taus) + 1
    assert text == path_to_csv(SPHERE, sphere_45_path)  # byte-identical
    # %.17g round-trips doubles exactly
    row = lines[1 + len(lines) // 2].split(",")
    k = len(lines) // 2
    assert float(row[0]) == sphere_45_path.taus[k]
    assert float(row[1]) == sphere_45_path.xs[k][0]
    assert float(row[3]) == sphere_45_path.ys[k][0]


def test_csv_header_without_clairaut():
    spec = builtin("euclidean", 3)
    path = integrate_geodesic(spec, (0, 0, 0), (1, 1, 0), 0.1, 1e-2)
    lines = path_to_csv(spec, path).splitlines()
    assert lines[0] == "tau,x0,x1,x2,y0,y1,y2,L,E"
