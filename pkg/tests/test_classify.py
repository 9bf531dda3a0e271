import json

import numpy as np
import pytest

from finsler.classify import (
    berwald_test,
    conformal_check,
    homogeneity_audit,
    locally_minkowski_test,
    regularity,
)
from finsler.errors import InputError, OutsideDomainError
from finsler.metrics import builtin, parse_metric_spec

ZOO = [
    builtin("euclidean", "2"),
    builtin("cubic_l1"),
    builtin("cubic_l2"),
    builtin("quartic_s4"),
    builtin("riemannian_sphere"),
    builtin("cylinder"),
]

BERWALD_NF = builtin("cubic_normal_form", "exp(x0)", "1", "1", "exp(x0/3)")
NON_BERWALD_NF = builtin("cubic_normal_form", "exp(x0)", "1", "1", "1")


def custom(dim, L):
    return parse_metric_spec(json.dumps({"dim": dim, "kind": "custom", "L": L}))


# ------------------------------------------------------------ homogeneity


@pytest.mark.parametrize("spec", ZOO, ids=lambda s: s.kind + str(s.dim))
def test_homogeneity_audit_passes_on_builtins(spec):
    report = homogeneity_audit(spec, samples=3, seed=11)
    assert report.verdict, [c for c in report.checks if not c.passed]
    names = {c.name.split("-", 2)[2] for c in report.checks}
    assert names == {
        "L-scaling",
        "euler-relation",
        "g-degree-0",
        "G-degree-2",
        "N-degree-1",
    }


def test_homogeneity_audit_rejects_degree_two_lagrangian():
    report = homogeneity_audit(custom(2, "y0^2 + y1^2"), samples=3, seed=0)
    assert not report.verdict
    failing = {c.name.split("-", 2)[2] for c in report.failures()}
    assert "L-scaling" in failing
    assert "euler-relation" in failing


def test_homogeneity_audit_rejects_additive_constant():
    report = homogeneity_audit(custom(2, "sqrt(y0^2 + y1^2) + 1/10"), samples=3, seed=0)
    assert not report.verdict


def test_homogeneity_audit_is_deterministic():
    a = homogeneity_audit(ZOO[1], samples=4, seed=5).to_json()
    b = homogeneity_audit(ZOO[1], samples=4, seed=5).to_json()
    assert a == b
    assert homogeneity_audit(ZOO[1], samples=4, seed=6).to_json() != a


def test_homogeneity_audit_validates_samples():
    with pytest.raises(InputError):
        homogeneity_audit(ZOO[0], samples=0, seed=0)


# ------------------------------------------------------------- regularity


def test_regularity_cubic_interior_point():
    det_a, regular = regularity(builtin("cubic_l1"), [0.0, 0.0], [1.0, 1.0])
    assert det_a == pytest.approx(2.0 ** (-2.0 / 3.0), rel=1e-12)
    assert regular


def test_regularity_boundary_ray_is_reported_not_raised():
    det_a, regular = regularity(builtin("cubic_l1"), [0.0, 0.0], [1.0, 0.0])
    assert det_a == 0.0
    assert not regular


def test_regularity_outside_cone_raises():
    with pytest.raises(OutsideDomainError):
        regularity(builtin("cubic_l2"), [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


def test_regularity_quartic_interior():
    det_a, regular = regularity(
        builtin("quartic_s4"), [0.0] * 4, [2.0, 0.3, 0.2, 0.1]
    )
    assert regular
    assert det_a != 0.0


def test_regularity_requires_mth_root():
    with pytest.raises(InputError):
        regularity(builtin("euclidean", "2"), [0.0, 0.0], [1.0, 0.0])


# ---------------------------------------------------------------- berwald


@pytest.mark.parametrize(
    "spec",
    [ZOO[0], ZOO[1], ZOO[2], ZOO[4], ZOO[5]],
    ids=["euclidean", "cubic_l1", "cubic_l2", "sphere", "cylinder"],
)
def test_berwald_passes_on_quadratic_and_flat_metrics(spec):
    report = berwald_test(spec, samples=2, seed=3)
    assert report.verdict, [c for c in report.failures()]


def test_berwald_passes_on_normal_form_family():
    report = berwald_test(BERWALD_NF, samples=2, seed=3)
    assert report.verdict, [c for c in report.failures()]


def test_berwald_fails_on_broken_normal_form():
    report = berwald_test(NON_BERWALD_NF, samples=2, seed=3)
    assert not report.verdict
    worst = max(c.residual for c in report.failures())
    assert worst >= 1e-3


def test_berwald_spray_reconstruction_rows_always_pass():
    report = berwald_test(NON_BERWALD_NF, samples=2, seed=3)
    for c in report.checks:
        if "spray-reconstruction" in c.name:
            assert c.passed


def test_berwald_deterministic_and_tol_is_honoured():
    a = berwald_test(ZOO[1], samples=2, seed=9).to_json()
    b = berwald_test(ZOO[1], samples=2, seed=9).to_json()
    assert a == b
    # an absurdly loose tolerance flips the verdict on the negative control
    loose = berwald_test(NON_BERWALD_NF, samples=1, seed=9, tol=1e6)
    assert loose.verdict


# ----------------------------------------------------- locally Minkowski


@pytest.mark.parametrize(
    "spec, expected",
    [
        (ZOO[0], True),
        (ZOO[1], True),
        (ZOO[2], True),
        (ZOO[3], True),
        (ZOO[5], True),
        (ZOO[4], False),
        (BERWALD_NF, False),
    ],
    ids=["euclidean", "cubic_l1", "cubic_l2", "quartic", "cylinder", "sphere", "nf"],
)
def test_locally_minkowski_chart_certificate(spec, expected):
    report = locally_minkowski_test(spec, samples=4, seed=2)
    assert report.verdict is expected
    assert all("in-chart" in c.name for c in report.checks)


def test_minkowski_pass_implies_berwald_pass():
    for spec in ZOO:
        if locally_minkowski_test(spec, samples=2, seed=1).verdict:
            assert berwald_test(spec, samples=1, seed=1).verdict


# --------------------------------------------------------------- conformal


def test_conformal_recovers_planted_factor():
    flat = builtin("euclidean", "2")
    scaled = custom(2, "exp(x0) * sqrt(y0^2 + y1^2)")
    ok, estimates = conformal_check(flat, scaled, samples=6, seed=4)
    assert ok
    for x, c in estimates:
        assert c == pytest.approx(x[0], abs=1e-9)


def test_conformal_identity_gives_zero_factor():
    spec = builtin("cubic_l1")
    ok, estimates = conformal_check(spec, spec, samples=4, seed=4)
    assert ok
    assert all(abs(c) < 1e-12 for _, c in estimates)


def test_conformal_rejects_unrelated_metrics():
    ok, _ = conformal_check(builtin("cubic_l1"), builtin("euclidean", "2"), samples=4, seed=4)
    assert not ok


def test_conformal_dimension_mismatch():
    with pytest.raises(InputError):
        conformal_check(builtin("euclidean", "2"), builtin("euclidean", "3"))


def test_conformal_riemannian_plant():
    base = parse_metric_spec(
        json.dumps({"dim": 2, "kind": "riemannian", "g": {"00": "1", "11": "1"}})
    )
    scaled = parse_metric_spec(
        json.dumps(
            {
                "dim": 2,
                "kind": "riemannian",
                "g": {"00": "exp(2*x1)", "11": "exp(2*x1)"},
            }
        )
    )
    ok, estimates = conformal_check(base, scaled, samples=5, seed=8)
    assert ok
    for x, c in estimates:
        assert c == pytest.approx(x[1], abs=1e-9)
