"""Acceptance suite: one test per shipped guarantee, at the stated tolerances.

Each criterion prints a single PASS/FAIL line (visible under -s / -rA)
and asserts.  The whole file is budgeted to run in well under a minute
on one core; the geodesic conservation runs dominate.
"""

import itertools

import numpy as np
import pytest
from click.testing import CliRunner

from finsler.classify import berwald_test, conformal_check, locally_minkowski_test
from finsler.cli import main as cli_main
from finsler.geodesics import integrate_geodesic
from finsler.hamiltonian import (
    hamilton_flow,
    hilbert_spray_check,
    legendre_1d,
    legendre_inverse,
    legendre_point,
)
from finsler.metrics import (
    builtin,
    eval_L,
    l2_jet,
    l2_of_slots,
    parse_metric_spec,
    sample_point,
)
from finsler.noether import charge_drift, el_integrate, expr_charge, family, metric_charge
from finsler.tensors import identity_suite, tensor_state
from finsler.errors import OutsideDomainError

SEED = 20240817

METRICS = {
    "euclidean3": builtin("euclidean", "3"),
    "cubic_l1": builtin("cubic_l1"),
    "cubic_l2": builtin("cubic_l2"),
    "quartic_s4": builtin("quartic_s4"),
    "sphere": builtin("riemannian_sphere"),
    "cylinder": builtin("cylinder"),
}

FLAT_NAMES = ["euclidean3", "cubic_l1", "cubic_l2", "quartic_s4", "cylinder"]


def _line(num, name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"[acceptance {num:02d}] {name}: {tag}{suffix}")
    assert ok, f"criterion {num} ({name}) failed {suffix}"


# 1 ------------------------------------------------------------------------


def test_criterion_01_identity_suite():
    worst = 0.0
    ok = True
    for name, spec in METRICS.items():
        report = identity_suite(spec, samples=100, seed=SEED)
        ok = ok and report.verdict
        worst = max(worst, max(c.residual / c.tolerance for c in report.checks))
    _line(1, "identity suite, 6 metrics x 100 points", ok, f"worst residual/tol {worst:.2e}")


# 2 ------------------------------------------------------------------------


def _fd_partial_table(spec, x, y):
    """Central-difference partials of L^2 up to order 3, with shared evals.

    Step sizes are split by derivative order (truncation dominates the
    low orders, subtractive cancellation the third), and both are small
    because m-th-root metrics put a branch point on the cone boundary;
    callers must also keep samples away from that boundary or no
    double-precision stencil is accurate.
    """
    base = np.array([*x, *y], dtype=float)
    m = len(base)
    steps = {1: 3e-5, 2: 3e-5, 3: 3e-4}

    def build(order, h):
        cache = {}

        def value(shift):
            if shift not in cache:
                pt = base + h * np.array(shift)
                cache[shift] = float(l2_of_slots(spec, list(pt)))
            return cache[shift]

        def fd(alpha, shift):
            for a in range(m):
                if alpha[a] > 0:
                    down = list(alpha)
                    down[a] -= 1
                    up_shift = list(shift)
                    up_shift[a] += 1
                    lo_shift = list(shift)
                    lo_shift[a] -= 1
                    return (
                        fd(tuple(down), tuple(up_shift)) - fd(tuple(down), tuple(lo_shift))
                    ) / (2 * h[a])
            return value(shift)

        rows = {}
        zero = (0,) * m
        for combo in itertools.combinations_with_replacement(range(m), order):
            alpha = [0] * m
            for a in combo:
                alpha[a] += 1
            rows[tuple(alpha)] = fd(tuple(alpha), zero)
        return rows

    table = {}
    for order, scale in steps.items():
        table.update(build(order, scale * (1.0 + np.abs(base))))
    return table


def test_criterion_02_jets_match_finite_differences():
    rng = np.random.default_rng(SEED)
    worst2 = worst3 = 0.0
    for name, spec in METRICS.items():
        done = 0
        while done < 50:
            x, y = sample_point(spec, rng)
            # keep a comfortable distance from the cone boundary: the FD
            # oracle (unlike the jets) is ill-conditioned near the branch point
            if eval_L(spec, (x, y)) < 0.3 * max(1.0, float(np.max(np.abs(y)))):
                continue
            try:
                table = _fd_partial_table(spec, x, y)
            except OutsideDomainError:
                continue  # FD stencil crossed the cone boundary; redraw
            jet = l2_jet(spec, x, y, 3)
            for alpha, fd_value in table.items():
                jet_value = jet.partial(alpha)
                rel = abs(jet_value - fd_value) / max(1.0, abs(jet_value), abs(fd_value))
                if sum(alpha) <= 2:
                    worst2 = max(worst2, rel)
                else:
                    worst3 = max(worst3, rel)
            done += 1
    ok = worst2 <= 1e-4 and worst3 <= 1e-2
    _line(2, "jet/FD agreement to order 3", ok, f"order<=2 {worst2:.2e}, order 3 {worst3:.2e}")


# 3 ------------------------------------------------------------------------


def test_criterion_03_cubic_closed_form_determinants():
    worst = 0.0
    spec1 = METRICS["cubic_l1"]
    for y0 in np.linspace(0.2, 2.0, 10):
        for y1 in np.linspace(0.2, 2.0, 10):
            L = eval_L(spec1, ((0.0, 0.0), (y0, y1)))
            a = np.diag([y0, y1]) / L  # contraction of the coefficient tensor
            expected = y0 * y1 / L**2
            worst = max(worst, abs(np.linalg.det(a) - expected) / abs(expected))

    spec2 = METRICS["cubic_l2"]
    y0 = 2.0
    for y1 in np.linspace(0.2, 1.0, 10):
        for y2 in np.linspace(0.2, 1.0, 10):
            y = np.array([y0, y1, y2])
            L = eval_L(spec2, ((0.0, 0.0, 0.0), y))
            # A_ij = a_ijk y^k for L^3 = y0^3+y1^3+y2^3 - 3 y0 y1 y2
            A = np.array(
                [
                    [y[0], -y[2] / 2, -y[1] / 2],
                    [-y[2] / 2, y[1], -y[0] / 2],
                    [-y[1] / 2, -y[0] / 2, y[2]],
                ]
            )
            expected = L**3 / 4.0
            worst = max(worst, abs(-np.linalg.det(A) - expected) / abs(expected))
    ok = worst <= 1e-10
    _line(3, "cubic determinant closed forms on 10x10 grids", ok, f"worst rel {worst:.2e}")


# 4 ------------------------------------------------------------------------

CONSERVATION_ICS = {
    "sphere": ((0.1, 0.2), (0.4, 1.0)),
    "cylinder": ((0.0, 0.0), (0.7, 1.0)),
    "cubic_l1": ((0.0, 0.0), (1.0, 1.0)),
    "quartic_s4": ((0.0,) * 4, (2.0, 0.3, 0.2, 0.1)),
}


def _drifts(spec, x0, y0, step, tau_max=1.0):
    path = integrate_geodesic(spec, x0, y0, tau_max=tau_max, step=step)
    Ls = np.array([log["L_value"] for log in path.logs])
    Es = np.array([log["energy"] for log in path.logs])
    return float(np.max(np.abs(Ls - 1.0))), float(np.max(np.abs(Es - 0.5)))


def test_criterion_04_conservation_scaling_and_clairaut():
    detail = []
    ok = True
    for name, (x0, y0) in CONSERVATION_ICS.items():
        spec = METRICS[name]
        dL_h, dE_h = _drifts(spec, x0, y0, step=0.02)
        dL_2, dE_2 = _drifts(spec, x0, y0, step=0.01)
        for coarse, fine, label in ((dL_h, dL_2, "L"), ((dE_h), dE_2, "E")):
            # exactly-conserved flat flows sit at rounding level for any step
            scales = fine <= 1e-13 or coarse / fine >= 12.0
            ok = ok and scales
            if not scales:
                detail.append(f"{name}/{label} ratio {coarse / fine:.1f}")

    for name in ("sphere", "cylinder"):
        x0, y0 = CONSERVATION_ICS[name]
        path = integrate_geodesic(METRICS[name], x0, y0, tau_max=10.0, step=1e-3)
        cs = np.array([log["clairaut"] for log in path.logs])
        drift = float(np.max(np.abs(cs - cs[0])))
        ok = ok and drift <= 1e-6
        detail.append(f"{name} clairaut {drift:.1e}")
    _line(4, "RK4 conservation scaling + Clairaut over tau=10", ok, "; ".join(detail))


# 5 ------------------------------------------------------------------------


def test_criterion_05_minkowski_geodesics_are_straight():
    worst = 0.0
    for name in ("cubic_l1", "quartic_s4"):
        spec = METRICS[name]
        x0 = np.zeros(spec.dim)
        y_raw = np.array([2.0, 0.3, 0.2, 0.1][: spec.dim]) + 0.5
        y0 = y_raw / eval_L(spec, (x0, y_raw))
        path = integrate_geodesic(spec, x0, y0, tau_max=1.0, step=1e-2)
        expected = x0 + path.taus[-1] * y0
        worst = max(worst, float(np.max(np.abs(path.xs[-1] - expected))))
    ok = worst <= 1e-10
    _line(5, "flat-metric geodesics stay straight", ok, f"worst endpoint error {worst:.2e}")


# 6 ------------------------------------------------------------------------


def test_criterion_06_legendre_round_trip_and_1d_table():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for name, spec in METRICS.items():
        for _ in range(100):
            x, y = sample_point(spec, rng)
            p = legendre_point(spec, x, y)
            y_back = legendre_inverse(spec, x, p)
            worst = max(
                worst,
                float(np.max(np.abs(y_back - np.asarray(y)))) / max(1.0, float(np.max(np.abs(y)))),
            )
    round_trip_ok = worst <= 1e-8

    rows = legendre_1d("x0^3/3", [0.5, 1.0, 1.5, 2.0])
    xi, p, H, residual = rows[-1]
    h_ok = p == pytest.approx(4.0, abs=1e-12) and abs(H - 16.0 / 3.0) <= 1e-12
    involution_ok = max(r[3] for r in rows) <= 1e-8
    ok = round_trip_ok and h_ok and involution_ok
    _line(
        6,
        "Legendre round trip + 1-D table",
        ok,
        f"worst trip {worst:.2e}, H(4)-16/3 {abs(H - 16.0 / 3.0):.1e}",
    )


# 7 ------------------------------------------------------------------------


def test_criterion_07_hamilton_matches_geodesic_endpoints():
    worst = 0.0
    cases = {
        "euclidean3": ((0.0, 0.0, 0.0), (0.6, 0.7, 0.2)),
        "sphere": ((0.1, 0.2), (0.4, 1.0)),
    }
    for name, (x0, y_raw) in cases.items():
        spec = METRICS[name]
        x0 = np.asarray(x0)
        y_raw = np.asarray(y_raw)
        y0 = y_raw / eval_L(spec, (x0, y_raw))  # matched unit-speed data
        p0 = legendre_point(spec, x0, y0)
        geo = integrate_geodesic(spec, x0, y0, tau_max=1.0, step=1e-3)
        ham = hamilton_flow(spec, x0, p0, T=1.0, step=1e-3)
        worst = max(worst, float(np.max(np.abs(geo.xs[-1] - ham.xs[-1]))))
    ok = worst <= 1e-5
    _line(7, "Hamilton flow endpoint = geodesic endpoint", ok, f"worst distance {worst:.2e}")


# 8 ------------------------------------------------------------------------


def test_criterion_08_hilbert_form_drives_the_spray():
    rng = np.random.default_rng(SEED)
    ok = True
    worst = 0.0
    for name, spec in METRICS.items():
        point = sample_point(spec, rng)
        report = hilbert_spray_check(spec, point, probes=20)
        ok = ok and report.verdict
        contraction = [c for c in report.checks if c.name == "hilbert-spray-contraction"]
        worst = max(worst, contraction[0].residual / contraction[0].tolerance)
    _line(8, "Hilbert two-form feeds back the spray", ok, f"worst residual/tol {worst:.2e}")


# 9 ------------------------------------------------------------------------


def test_criterion_09_noether_charges():
    sphere = METRICS["sphere"]
    path = integrate_geodesic(sphere, (0.1, 0.2), (0.4, 1.0), tau_max=2.0, step=2e-3)
    time_drift = charge_drift(metric_charge(sphere, family("1", ["0", "0"], 2)), path)
    theta_drift = charge_drift(metric_charge(sphere, family("0", ["0", "1"], 2)), path)

    free = el_integrate("y0^2 + y1^2", 0.0, [1.0, 0.2], [-0.3, 0.7], T=3.0, step=1e-2)
    rot_drift = charge_drift(
        expr_charge("y0^2 + y1^2", family("0", ["-x1", "x0"], 2)), free
    )

    wavy = parse_metric_spec(
        '{"dim": 2, "kind": "riemannian", "g": {"00": "1", "11": "1 + x1^2/2"}}'
    )
    broken_path = integrate_geodesic(wavy, (0.0, 0.2), (0.3, 1.0), tau_max=2.0, step=2e-3)
    broken = charge_drift(metric_charge(wavy, family("0", ["0", "1"], 2)), broken_path)

    ok = (
        time_drift <= 1e-6
        and theta_drift <= 1e-6
        and rot_drift <= 1e-10
        and broken >= 1e-3
    )
    _line(
        9,
        "Noether charge drifts",
        ok,
        f"time {time_drift:.1e}, theta {theta_drift:.1e}, "
        f"rotation {rot_drift:.1e}, control {broken:.1e}",
    )


# 10 -----------------------------------------------------------------------


def test_criterion_10_classification():
    riemann_ok = berwald_test(METRICS["sphere"], samples=2, seed=SEED).verdict
    cubic_ok = True
    for name in ("cubic_l1", "cubic_l2"):
        cubic_ok = cubic_ok and locally_minkowski_test(METRICS[name], samples=3, seed=SEED).verdict
        cubic_ok = cubic_ok and berwald_test(METRICS[name], samples=2, seed=SEED).verdict

    broken = builtin("cubic_normal_form", "exp(x0)", "1", "1", "1")
    broken_report = berwald_test(broken, samples=2, seed=SEED)
    broken_fails = not broken_report.verdict and any(
        c.residual >= 1e-3 for c in broken_report.failures()
    )

    planted = parse_metric_spec(
        '{"dim": 2, "kind": "custom", "L": "exp(x0) * sqrt(y0^2 + y1^2)"}'
    )
    conformal, estimates = conformal_check(
        builtin("euclidean", "2"), planted, samples=5, seed=SEED
    )
    recovery = max(abs(c - x[0]) for x, c in estimates)
    plant_ok = conformal and recovery <= 1e-9

    ok = riemann_ok and cubic_ok and broken_fails and plant_ok
    _line(
        10,
        "Berwald / Minkowski / conformal classification",
        ok,
        f"planted-c error {recovery:.1e}",
    )


# 11 -----------------------------------------------------------------------


def test_criterion_11_curvature():
    rng = np.random.default_rng(SEED)
    flat_worst = 0.0
    for name in FLAT_NAMES:
        spec = METRICS[name]
        state = tensor_state(spec, sample_point(spec, rng))
        flat_worst = max(
            flat_worst, float(np.max(np.abs(state.R2))), float(np.max(np.abs(state.R3)))
        )
    flat_ok = flat_worst <= 1e-8

    sphere = METRICS["sphere"]
    z = 0.25
    state = tensor_state(sphere, ((z, 0.3), (0.4, 1.1)))
    R3 = np.asarray(state.R3)
    oracle = np.zeros_like(R3)
    # closed form for the unit sphere in (z, theta): K = 1
    oracle[0, 1, 0, 1] = 1.0 - z * z
    oracle[0, 1, 1, 0] = -(1.0 - z * z)
    oracle[1, 0, 1, 0] = 1.0 / (1.0 - z * z)
    oracle[1, 0, 0, 1] = -1.0 / (1.0 - z * z)
    sphere_err = float(np.max(np.abs(R3 - oracle)))
    contraction_err = float(
        np.max(np.abs(np.einsum("a,majk->mjk", np.array([0.4, 1.1]), R3) - state.R2))
    )
    sphere_ok = sphere_err <= 1e-3 and contraction_err <= 1e-3

    R2 = np.asarray(state.R2)
    antisym_ok = np.array_equal(R2, -R2.transpose(0, 2, 1))

    ok = flat_ok and sphere_ok and antisym_ok
    _line(
        11,
        "curvature: flat zeros, sphere oracle, exact antisymmetry",
        ok,
        f"flat {flat_worst:.1e}, sphere {sphere_err:.1e}",
    )


# 12 -----------------------------------------------------------------------


def test_criterion_12_cli_audit_is_byte_deterministic():
    runner = CliRunner()
    argv = ["audit", "-m", "builtin:cubic_l1", "--samples", "6", "--seed", "7"]
    first = runner.invoke(cli_main, argv)
    second = runner.invoke(cli_main, argv)
    ok = first.exit_code == 0 and first.output == second.output and len(first.output) > 0
    _line(12, "finsler audit byte-determinism", ok, f"{len(first.output)} bytes")
