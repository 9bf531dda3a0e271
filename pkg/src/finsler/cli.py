"""Command-line front end: JSON/CSV access to every operation.

Exit codes: 0 success, 1 audit verdict false, 2 bad input (flags,
vectors, metric files, expressions), 3 numerical failure (degenerate
metric, point outside the admissible cone, non-convergence).

Metrics are given with ``-m``: either a path to a metric-spec JSON
file or ``builtin:NAME`` / ``builtin:NAME(args)`` for the built-in
zoo.  Identical argv (and files) give byte-identical output; the CSV
writers use 17 significant digits and JSON floats use the shortest
round-trip form.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys

import click
import numpy as np

from .classify import (
    berwald_test,
    conformal_check,
    homogeneity_audit,
    locally_minkowski_test,
    regularity,
)
from .errors import InputError, NumericalError
from .geodesics import integrate_geodesic, path_to_csv
from .hamiltonian import (
    hamilton_flow,
    hamilton_to_csv,
    legendre_1d,
    legendre_1d_to_csv,
)
from .metrics import MetricSpec, builtin, parse_metric_spec
from .noether import charge_drift, family, metric_charge
from .report import AuditReport
from .tensors import identity_suite, indicatrix, tensor_state, tensor_state_to_json

CSV_FLOAT = "%.17g"


def _load_metric(source: str) -> MetricSpec:
    if source.startswith("builtin:"):
        return builtin(source[len("builtin:") :])
    try:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise InputError(f"cannot read metric file {source!r}: {err.strerror}") from None
    return parse_metric_spec(text)


def _vector(text: str, dim: int, flag: str) -> np.ndarray:
    parts = text.split(",")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise InputError(f"{flag} must be comma-separated numbers, got {text!r}") from None
    if len(values) != dim:
        raise InputError(f"{flag} needs {dim} components for this metric, got {len(values)}")
    return np.array(values)


def _emit(content: str, out_path):
    if out_path is None:
        sys.stdout.write(content)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _guard(fn):
    """Map library errors to documented exit codes, without tracebacks."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(2)
        except NumericalError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(3)

    return wrapper


def _report_payload(report: AuditReport) -> dict:
    return json.loads(report.to_json())


def _prefixed(report: AuditReport, prefix: str) -> list:
    return [dataclasses.replace(c, name=f"{prefix}-{c.name}") for c in report.checks]


metric_option = click.option(
    "-m", "--metric", "metric_source", required=True, help="Metric file or builtin:NAME."
)
out_option = click.option(
    "--out", "out_path", type=click.Path(dir_okay=False, writable=True), default=None,
    help="Write to a file instead of stdout.",
)
seed_option = click.option("--seed", default=0, show_default=True, help="Sampling seed.")
threads_option = click.option(
    "--threads", default=1, show_default=True,
    help="Worker threads for per-sample checks; output is identical for any value.",
)


@click.group()
def main():
    """Numerical Finsler geometry: tensors, flows, audits."""


@main.command(name="tensors")
@metric_option
@click.option("--x", "x_text", required=True, help="Base point, comma-separated.")
@click.option("--y", "y_text", required=True, help="Direction, comma-separated.")
@out_option
@_guard
def tensors_cmd(metric_source, x_text, y_text, out_path):
    """Full tensor state (metric, Cartan, spray, connections, curvature) as JSON."""
    spec = _load_metric(metric_source)
    x = _vector(x_text, spec.dim, "--x")
    y = _vector(y_text, spec.dim, "--y")
    state = tensor_state(spec, (x, y))
    _emit(tensor_state_to_json(state) + "\n", out_path)


@main.command(name="trace")
@metric_option
@click.option("--x", "x_text", required=True, help="Initial point.")
@click.option("--y", "y_text", required=True, help="Initial direction (renormalised to L=1).")
@click.option("--tau-max", default=1.0, show_default=True, help="Parameter length to integrate.")
@click.option("--step", default=1e-3, show_default=True, help="RK4 step.")
@out_option
@_guard
def trace_cmd(metric_source, x_text, y_text, tau_max, step, out_path):
    """Integrate a geodesic and print it as CSV."""
    spec = _load_metric(metric_source)
    x = _vector(x_text, spec.dim, "--x")
    y = _vector(y_text, spec.dim, "--y")
    path = integrate_geodesic(spec, x, y, tau_max=tau_max, step=step)
    _emit(path_to_csv(spec, path), out_path)


@main.command(name="hamilton")
@metric_option
@click.option("--x", "x_text", required=True, help="Initial point.")
@click.option("--p", "p_text", required=True, help="Initial covector.")
@click.option("--t-max", default=1.0, show_default=True, help="Time to integrate.")
@click.option("--step", default=1e-3, show_default=True, help="RK4 step.")
@out_option
@_guard
def hamilton_cmd(metric_source, x_text, p_text, t_max, step, out_path):
    """Integrate the phase-space flow of H = F(x, y(x,p)) and print CSV."""
    spec = _load_metric(metric_source)
    x = _vector(x_text, spec.dim, "--x")
    p = _vector(p_text, spec.dim, "--p")
    path = hamilton_flow(spec, x, p, T=t_max, step=step)
    _emit(hamilton_to_csv(path), out_path)


@main.command(name="legendre1d")
@click.option("-f", "--function", "f_text", required=True,
              help="Convex integrand f(x0), e.g. 'x0^3/3'.")
@click.option("--xi", "xi_text", required=True, help="Sample slopes, comma-separated.")
@out_option
@_guard
def legendre1d_cmd(f_text, xi_text, out_path):
    """Pointwise Legendre transform table with involution residuals, as CSV."""
    try:
        xi = [float(p) for p in xi_text.split(",")]
    except ValueError:
        raise InputError(f"--xi must be comma-separated numbers, got {xi_text!r}") from None
    rows = legendre_1d(f_text, xi)
    _emit(legendre_1d_to_csv(rows), out_path)


@main.command(name="audit")
@metric_option
@click.option("--samples", default=20, show_default=True, help="Random points per suite.")
@seed_option
@threads_option
@out_option
@_guard
def audit_cmd(metric_source, samples, seed, threads, out_path):
    """Homogeneity audit plus the pointwise identity suite, as one JSON report.

    Exits 1 when the combined verdict is false.
    """
    spec = _load_metric(metric_source)
    identities = identity_suite(spec, samples=samples, seed=seed, threads=threads)
    degrees = homogeneity_audit(spec, samples=samples, seed=seed, threads=threads)
    merged = AuditReport.from_checks(
        _prefixed(identities, "identity") + _prefixed(degrees, "homogeneity"),
        seed=seed,
    )
    _emit(merged.to_json() + "\n", out_path)
    if not merged.verdict:
        sys.exit(1)


@main.command(name="classify")
@metric_option
@click.option("--samples", default=6, show_default=True, help="Base points per test.")
@seed_option
@threads_option
@click.option("--conformal-with", "other_source", default=None,
              help="Second metric to test for conformality with -m.")
@click.option("--x", "x_text", default=None, help="Point for the regularity check (mth_root).")
@click.option("--y", "y_text", default=None, help="Direction for the regularity check.")
@out_option
@_guard
def classify_cmd(metric_source, samples, seed, threads, other_source, x_text, y_text, out_path):
    """Berwald / locally-Minkowski / regularity / conformal classification JSON."""
    spec = _load_metric(metric_source)
    payload = {
        "berwald": _report_payload(
            berwald_test(spec, samples=samples, seed=seed, threads=threads)
        ),
        "locally_minkowski": _report_payload(
            locally_minkowski_test(spec, samples=samples, seed=seed, threads=threads)
        ),
        "regularity": None,
        "conformal": None,
    }
    if x_text is not None or y_text is not None:
        if x_text is None or y_text is None:
            raise InputError("the regularity check needs both --x and --y")
        x = _vector(x_text, spec.dim, "--x")
        y = _vector(y_text, spec.dim, "--y")
        det_a, regular = regularity(spec, x, y)
        payload["regularity"] = {"det_a": det_a, "regular": regular}
    if other_source is not None:
        other = _load_metric(other_source)
        ok, estimates = conformal_check(spec, other, samples=samples, seed=seed)
        payload["conformal"] = {
            "is_conformal": ok,
            "estimates": [{"x": list(x), "c": c} for x, c in estimates],
        }
    _emit(_json_text(payload), out_path)


@main.command(name="noether")
@metric_option
@click.option("--x", "x_text", required=True, help="Initial point.")
@click.option("--y", "y_text", required=True, help="Initial direction.")
@click.option("--phi", default="0", show_default=True,
              help="Time-shift generator, an expression in (t, x, y).")
@click.option("--psi", "psi_texts", multiple=True,
              help="Coordinate-shift generator; repeat once per coordinate.")
@click.option("--tau-max", default=1.0, show_default=True)
@click.option("--step", default=1e-3, show_default=True)
@out_option
@_guard
def noether_cmd(metric_source, x_text, y_text, phi, psi_texts, tau_max, step, out_path):
    """Drift of the Noether charge of (phi, psi) along a geodesic, as JSON."""
    spec = _load_metric(metric_source)
    x = _vector(x_text, spec.dim, "--x")
    y = _vector(y_text, spec.dim, "--y")
    if not psi_texts:
        psi_texts = ("0",) * spec.dim
    fam = family(phi, list(psi_texts), spec.dim)
    path = integrate_geodesic(spec, x, y, tau_max=tau_max, step=step)
    evaluator = metric_charge(spec, fam)
    payload = {
        "charge_initial": evaluator(path.taus[0], path.xs[0], path.ys[0]),
        "charge_drift": charge_drift(evaluator, path),
        "samples": len(path.taus),
    }
    _emit(_json_text(payload), out_path)


@main.command(name="indicatrix")
@metric_option
@click.option("--x", "x_text", required=True, help="Base point.")
@click.option("--samples", default=100, show_default=True, help="Directions to sample.")
@seed_option
@out_option
@_guard
def indicatrix_cmd(metric_source, x_text, samples, seed, out_path):
    """Sample the unit indicatrix {L = 1} at a point, as CSV."""
    spec = _load_metric(metric_source)
    x = _vector(x_text, spec.dim, "--x")
    points = indicatrix(spec, x, samples, seed=seed)
    header = ",".join(f"y{i}" for i in range(spec.dim)) + ",residual"
    lines = [header]
    for y, residual in points:
        lines.append(",".join(CSV_FLOAT % v for v in (*y, residual)))
    _emit("\n".join(lines) + "\n", out_path)


if __name__ == "__main__":
    main()
