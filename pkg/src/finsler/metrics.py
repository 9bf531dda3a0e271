"""Finsler metric specifications: parsing, builtins, evaluation, sampling.

A metric is specified by its fundamental function L(x, y), positively
1-homogeneous in y, given in one of four forms:

* ``riemannian`` — L = sqrt(g_ij(x) y^i y^j), entries as expressions of x;
* ``mth_root`` — L = (a_{i1..im}(x) y^{i1} ... y^{im})^{1/m}, the symmetric
  coefficient table stored once per sorted index string;
* ``surface_of_revolution`` — coordinates (z, theta), profile radius r(z),
  L = sqrt((1 + r'(z)^2) zdot^2 + r(z)^2 thetadot^2);
* ``custom`` — an arbitrary expression for L over x and y.

Everything evaluates over a uniform "slot vector" [x0..x{n-1}, y0..y{n-1}]
whose entries may be floats or jets (or any mix), so the same code path
serves plain evaluation, derivative extraction, and change-of-coordinates
audits where the slots are themselves composite jets.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InputError, OutsideDomainError, SamplingError, SpecError
from .expr import Expr, eval_expr, parse_expr
from .jets import Jet, space

__all__ = [
    "MetricSpec",
    "EvalPoint",
    "parse_metric_spec",
    "builtin",
    "builtin_names",
    "eval_L",
    "l2_of_slots",
    "l2_jet",
    "coeff_tensor",
    "sample_point",
    "spec_to_json",
]

KINDS = ("riemannian", "mth_root", "surface_of_revolution", "custom")

_TOP_KEYS = {"kind", "dim", "m", "coeffs", "g", "profile", "L", "domain_note"}


class EvalPoint(NamedTuple):
    x: tuple
    y: tuple


class MetricSpec:
    """Validated, immutable description of one Finsler metric."""

    __slots__ = ("kind", "dim", "m", "coeffs", "g", "profile", "L_expr", "domain_note")

    def __init__(
        self,
        kind: str,
        dim: int,
        *,
        m: int | None = None,
        coeffs: dict[str, Expr] | None = None,
        g: dict[str, Expr] | None = None,
        profile: Expr | None = None,
        L_expr: Expr | None = None,
        domain_note: str = "",
    ):
        self.kind = kind
        self.dim = dim
        self.m = m
        self.coeffs = coeffs
        self.g = g
        self.profile = profile
        self.L_expr = L_expr
        self.domain_note = domain_note

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"MetricSpec(kind={self.kind!r}, dim={self.dim})"


# ---------------------------------------------------------------------------
# Parsing and validation


def _parse_x_expr(source: str, dim: int, what: str) -> Expr:
    e = parse_expr(source, dim)
    if e.uses_y:
        raise SpecError(f"{what} must be a function of x only, got {source!r}")
    return e


def parse_metric_spec(json_text: str) -> MetricSpec:
    """Parse and fully validate a metric-spec JSON document."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as err:
        raise SpecError(f"metric spec is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise SpecError("metric spec must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise SpecError(f"unknown metric-spec keys: {sorted(unknown)}")

    kind = raw.get("kind")
    if kind not in KINDS:
        raise SpecError(f"kind must be one of {KINDS}, got {kind!r}")
    dim = raw.get("dim")
    if not isinstance(dim, int) or not 2 <= dim <= 9:
        raise SpecError(f"dim must be an integer in [2, 9], got {dim!r}")
    note = raw.get("domain_note", "")
    if not isinstance(note, str):
        raise SpecError("domain_note must be a string")

    def forbid(*keys):
        for k in keys:
            if k in raw:
                raise SpecError(f"key {k!r} is not allowed for kind {kind!r}")

    if kind == "mth_root":
        forbid("g", "profile", "L")
        m = raw.get("m")
        if not isinstance(m, int) or m < 2:
            raise SpecError(f"mth_root needs integer m >= 2, got {m!r}")
        table = raw.get("coeffs")
        if not isinstance(table, dict) or not table:
            raise SpecError("mth_root needs a non-empty 'coeffs' table")
        coeffs: dict[str, Expr] = {}
        sources: dict[str, str] = {}
        for key, src in table.items():
            if not isinstance(key, str) or len(key) != m or not key.isdigit():
                raise SpecError(f"coefficient key {key!r} must be {m} digits")
            if any(int(d) >= dim for d in key):
                raise SpecError(f"coefficient key {key!r} has an index >= dim {dim}")
            if not isinstance(src, str):
                raise SpecError(f"coefficient {key!r} must be an expression string")
            canon = "".join(sorted(key))
            e = _parse_x_expr(src, dim, f"coefficient {key!r}")
            if canon in coeffs:
                if coeffs[canon] != e:
                    raise SpecError(
                        f"symmetry conflict: keys {sources[canon]!r} and {key!r} "
                        f"disagree for the same symmetric entry"
                    )
                continue
            coeffs[canon] = e
            sources[canon] = key
        return MetricSpec("mth_root", dim, m=m, coeffs=coeffs, domain_note=note)

    if kind == "riemannian":
        forbid("m", "coeffs", "profile", "L")
        table = raw.get("g")
        if not isinstance(table, dict) or not table:
            raise SpecError("riemannian needs a non-empty 'g' table")
        entries: dict[str, Expr] = {}
        sources = {}
        for key, src in table.items():
            if not isinstance(key, str) or len(key) != 2 or not key.isdigit():
                raise SpecError(f"metric entry key {key!r} must be two digits")
            if any(int(d) >= dim for d in key):
                raise SpecError(f"metric entry key {key!r} has an index >= dim {dim}")
            if not isinstance(src, str):
                raise SpecError(f"metric entry {key!r} must be an expression string")
            canon = "".join(sorted(key))
            e = _parse_x_expr(src, dim, f"metric entry {key!r}")
            if canon in entries:
                if entries[canon] != e:
                    raise SpecError(
                        f"asymmetric metric table: {sources[canon]!r} and {key!r} disagree"
                    )
                continue
            entries[canon] = e
            sources[canon] = key
        return MetricSpec("riemannian", dim, g=entries, domain_note=note)

    if kind == "surface_of_revolution":
        forbid("m", "coeffs", "g", "L")
        if dim != 2:
            raise SpecError("surface_of_revolution is two-dimensional (z, theta)")
        src = raw.get("profile")
        if not isinstance(src, str):
            raise SpecError("surface_of_revolution needs a 'profile' expression string")
        profile = _parse_x_expr(src, 1, "profile")
        return MetricSpec("surface_of_revolution", dim, profile=profile, domain_note=note)

    # custom
    forbid("m", "coeffs", "g", "profile")
    src = raw.get("L")
    if not isinstance(src, str):
        raise SpecError("custom metric needs an 'L' expression string")
    return MetricSpec("custom", dim, L_expr=parse_expr(src, dim), domain_note=note)


def spec_to_json(spec: MetricSpec) -> str:
    """Canonical JSON form (sorted keys, canonical expression strings)."""
    out: dict = {"kind": spec.kind, "dim": spec.dim}
    if spec.kind == "mth_root":
        out["m"] = spec.m
        out["coeffs"] = {k: e.canonical() for k, e in sorted(spec.coeffs.items())}
    elif spec.kind == "riemannian":
        out["g"] = {k: e.canonical() for k, e in sorted(spec.g.items())}
    elif spec.kind == "surface_of_revolution":
        out["profile"] = spec.profile.canonical()
    else:
        out["L"] = spec.L_expr.canonical()
    if spec.domain_note:
        out["domain_note"] = spec.domain_note
    return json.dumps(out, sort_keys=True, separators=(", ", ": "))


# ---------------------------------------------------------------------------
# Builtin metrics


def _mth_root_spec(dim, m, table, note):
    coeffs = {"".join(sorted(k)): parse_expr(v, dim) for k, v in table.items()}
    return MetricSpec("mth_root", dim, m=m, coeffs=coeffs, domain_note=note)


def _builtin_euclidean(n_text="2"):
    n = int(n_text)
    if not 2 <= n <= 9:
        raise InputError(f"euclidean dimension must be in [2, 9], got {n}")
    g = {f"{i}{j}": parse_expr("1" if i == j else "0", n) for i in range(n) for j in range(i, n)}
    return MetricSpec("riemannian", n, g=g, domain_note="all y != 0")


def _builtin_cubic_l1():
    return _mth_root_spec(
        2, 3, {"000": "1", "111": "1"}, "cone where y0^3 + y1^3 > 0"
    )


def _builtin_cubic_l2():
    return _mth_root_spec(
        3,
        3,
        {"000": "1", "111": "1", "222": "1", "012": "-1/2"},
        "cone where y0^3 + y1^3 + y2^3 - 3 y0 y1 y2 > 0",
    )


def _builtin_cubic_normal_form(c1="1", c2="1", c3="1", b="0"):
    dim = 3
    table = {"000": c1, "111": c2, "222": c3, "012": b}
    coeffs = {k: _parse_x_expr(v, dim, f"normal-form coefficient {k}") for k, v in table.items()}
    return MetricSpec(
        "mth_root", dim, m=3, coeffs=coeffs, domain_note="cone where the cubic form is positive"
    )


def _builtin_quartic_s4():
    table = {"0000": "1", "1111": "1", "2222": "1", "3333": "1", "0123": "1/3"}
    for i in range(4):
        for j in range(i + 1, 4):
            key = "".join(sorted(f"{i}{i}{j}{j}"))
            table[key] = "-1/3"
    return _mth_root_spec(
        4, 4, table, "cone around (1,0,0,0) where all four linear factors are positive"
    )


def _builtin_revolution(profile="1"):
    return MetricSpec(
        "surface_of_revolution",
        2,
        profile=_parse_x_expr(profile, 1, "profile"),
        domain_note="z where the profile is positive and smooth, any (zdot, thetadot) != 0",
    )


def _builtin_sphere():
    return _builtin_revolution("sqrt(1 - x0^2)")


def _builtin_cylinder():
    return _builtin_revolution("1")


_BUILTINS = {
    "euclidean": _builtin_euclidean,
    "cubic_l1": _builtin_cubic_l1,
    "cubic_l2": _builtin_cubic_l2,
    "cubic_normal_form": _builtin_cubic_normal_form,
    "quartic_s4": _builtin_quartic_s4,
    "revolution": _builtin_revolution,
    "riemannian_sphere": _builtin_sphere,
    "cylinder": _builtin_cylinder,
}


def builtin_names() -> tuple:
    return tuple(sorted(_BUILTINS))


def _split_args(text: str) -> list[str]:
    args, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            args.append(text[start:i].strip())
            start = i + 1
    tail = text[start:].strip()
    if tail or args:
        args.append(tail)
    return args


def builtin(name: str, *args: str) -> MetricSpec:
    """Look up a builtin metric, e.g. builtin("euclidean", "3").

    The name may also carry its arguments inline: ``"euclidean(3)"`` or
    ``"revolution(sqrt(1 - x0^2))"``.
    """
    text = name.strip()
    if "(" in text:
        if not text.endswith(")"):
            raise InputError(f"malformed builtin reference {name!r}")
        head, _, inner = text.partition("(")
        if args:
            raise InputError("pass arguments either inline or separately, not both")
        return builtin(head.strip(), *_split_args(inner[:-1]))
    key = text.lower()
    factory = _BUILTINS.get(key)
    if factory is None:
        raise InputError(f"unknown builtin metric {name!r}; known: {', '.join(builtin_names())}")
    try:
        return factory(*args)
    except TypeError:
        raise InputError(f"wrong number of arguments for builtin {key!r}") from None


# ---------------------------------------------------------------------------
# Evaluation over slot vectors (floats and/or jets)


def _power(value, exponent: float):
    """value ** exponent for a jet or float, guarding positivity."""
    if isinstance(value, Jet):
        try:
            return value.pow_real(exponent)
        except DomainError as err:
            raise OutsideDomainError(str(err)) from None
    v = float(value)
    if v <= 0.0:
        raise OutsideDomainError(f"radicand {v} is not positive")
    return v**exponent


def _sqrt(value):
    return _power(value, 0.5)


def _multiplicity(key: str, m: int) -> int:
    counts = Counter(key)
    result = math.factorial(m)
    for c in counts.values():
        result //= math.factorial(c)
    return result


def _profile_pair(profile: Expr, z):
    """(r(z), r'(z)) for a float or jet argument z.

    The profile is a one-variable expression; its Taylor series around the
    base value of z is computed in a scratch one-variable jet space and then
    composed onto z itself, which keeps this valid when z is a composite jet
    (coordinate-change audits) and cheap when z is a float.
    """
    if isinstance(z, Jet):
        order = z.space.order
        z0 = z.value
        scratch = space(1, order + 1).variable(0, z0)
        r_jet = eval_expr(profile, [scratch])
        if not isinstance(r_jet, Jet):  # constant profile
            return z.space.constant(float(r_jet)), z.space.constant(0.0)
        series = np.array([r_jet.coefficient((k,)) for k in range(order + 1)])
        dseries = np.array(
            [(k + 1) * r_jet.coefficient((k + 1,)) for k in range(order + 1)]
        )
        r = z._compose(series)
        dr = z._compose(dseries)
        return Jet(z.space, r.coeffs, z.valid_order), Jet(z.space, dr.coeffs, z.valid_order)
    scratch = space(1, 1).variable(0, float(z))
    r_jet = eval_expr(profile, [scratch])
    if not isinstance(r_jet, Jet):
        return float(r_jet), 0.0
    return r_jet.value, r_jet.partial((1,))


def l2_of_slots(spec: MetricSpec, slots):
    """The jet (or float) of L^2 on a slot vector [x..., y...]."""
    n = spec.dim
    if len(slots) != 2 * n:
        raise InputError(f"need {2 * n} slots for dim {n}, got {len(slots)}")
    xs, ys = slots[:n], slots[n:]

    if spec.kind == "mth_root":
        radicand = None
        for key, e in spec.coeffs.items():
            term = eval_expr(e, xs) * _multiplicity(key, spec.m)
            for d in key:
                term = term * ys[int(d)]
            radicand = term if radicand is None else radicand + term
        if spec.m == 2:
            return radicand
        return _power(radicand, 2.0 / spec.m)

    if spec.kind == "riemannian":
        total = None
        for key, e in spec.g.items():
            i, j = int(key[0]), int(key[1])
            term = eval_expr(e, xs) * ys[i] * ys[j]
            if i != j:
                term = term * 2.0
            total = term if total is None else total + term
        return total

    if spec.kind == "surface_of_revolution":
        z, zdot, thetadot = xs[0], ys[0], ys[1]
        r, dr = _profile_pair(spec.profile, z)
        return (1.0 + dr * dr) * zdot * zdot + (r * r) * thetadot * thetadot

    # custom: the expression gives L itself, which must be positive here
    L = eval_expr(spec.L_expr, list(xs) + list(ys))
    L0 = L.value if isinstance(L, Jet) else float(L)
    if L0 <= 0.0:
        raise OutsideDomainError(f"custom L = {L0} is not positive at this point")
    return L * L


def l2_jet(spec: MetricSpec, x, y, order: int) -> Jet:
    """Jet of L^2 at (x, y) over the 2n coordinate variables (x first)."""
    n = spec.dim
    if len(x) != n or len(y) != n:
        raise InputError(f"point dimension mismatch: expected {n}, got {len(x)}/{len(y)}")
    sp = space(2 * n, order)
    slots = [sp.variable(i, float(x[i])) for i in range(n)]
    slots += [sp.variable(n + i, float(y[i])) for i in range(n)]
    value = l2_of_slots(spec, slots)
    if not isinstance(value, Jet):  # constant expression metric
        value = sp.constant(float(value))
    return value


def eval_L(spec: MetricSpec, point) -> float:
    """L(x, y) as a float; raises OutsideDomainError off the admissible cone."""
    x, y = point
    n = spec.dim
    if len(x) != n or len(y) != n:
        raise InputError(f"point dimension mismatch: expected {n}, got {len(x)}/{len(y)}")
    if max(abs(float(v)) for v in y) == 0.0:
        raise OutsideDomainError("y = 0 is excluded from the admissible cone")
    slots = [float(v) for v in x] + [float(v) for v in y]
    try:
        l2 = l2_of_slots(spec, slots)
    except DomainError as err:
        if isinstance(err, OutsideDomainError):
            raise
        raise OutsideDomainError(str(err)) from None
    l2 = float(l2)
    if not math.isfinite(l2) or l2 <= 0.0:
        raise OutsideDomainError(f"L^2 = {l2} is not positive at this point")
    return math.sqrt(l2)


def coeff_tensor(spec: MetricSpec, x) -> np.ndarray:
    """Fully expanded symmetric coefficient tensor a(x), shape (dim,)*m."""
    if spec.kind != "mth_root":
        raise InputError("coeff_tensor is only defined for mth_root metrics")
    n, m = spec.dim, spec.m
    xs = [float(v) for v in x]
    out = np.zeros((n,) * m)
    for key, e in spec.coeffs.items():
        value = float(eval_expr(e, xs))
        seen = set()
        for perm in itertools.permutations(key):
            if perm in seen:
                continue
            seen.add(perm)
            out[tuple(int(d) for d in perm)] = value
    return out


# ---------------------------------------------------------------------------
# Admissible-point sampling


def _metric_matrix(spec: MetricSpec, x, y) -> np.ndarray:
    """g_ij = half the y-Hessian of L^2, by order-2 jets (sampler internal)."""
    n = spec.dim
    j = l2_jet(spec, x, y, 2)
    g = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            alpha = [0] * (2 * n)
            alpha[n + a] += 1
            alpha[n + b] += 1
            g[a, b] = g[b, a] = 0.5 * j.partial(tuple(alpha))
    return g


def _x_box(spec: MetricSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "surface_of_revolution":
        return np.array([rng.uniform(-0.7, 0.7), rng.uniform(-math.pi, math.pi)])
    return rng.uniform(-0.8, 0.8, size=spec.dim)


def _y_box(spec: MetricSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "mth_root":
        return rng.uniform(0.1, 2.0, size=spec.dim)
    y = rng.uniform(-2.0, 2.0, size=spec.dim)
    while max(abs(y)) < 0.1:
        y = rng.uniform(-2.0, 2.0, size=spec.dim)
    return y


def sample_point(spec: MetricSpec, rng: np.random.Generator, max_tries: int = 100) -> EvalPoint:
    """Draw one admissible (x, y), rejecting near-degenerate configurations.

    A draw is kept when L is comfortably positive (margin 0.05 max|y|) and
    the fundamental tensor at the point is numerically sane (finite, not
    near-singular).  Rejection keeps audit statistics clear of the cone
    boundary, where every tolerance would otherwise be dominated by a few
    ill-conditioned samples.
    """
    for _ in range(max_tries):
        x = _x_box(spec, rng)
        y = _y_box(spec, rng)
        try:
            L = eval_L(spec, (x, y))
        except OutsideDomainError:
            continue
        if L < 0.05 * max(abs(y)):
            continue
        try:
            g = _metric_matrix(spec, x, y)
        except DomainError:
            continue
        if not np.all(np.isfinite(g)):
            continue
        scale = max(np.max(np.abs(g)), 1e-300)
        if abs(np.linalg.det(g)) < 1e-10 * scale**spec.dim:
            continue
        if np.linalg.cond(g) > 1e8:
            continue
        return EvalPoint(tuple(float(v) for v in x), tuple(float(v) for v in y))
    raise SamplingError(
        f"no admissible sample for kind {spec.kind!r} after {max_tries} tries"
    )


def sample_direction(
    spec: MetricSpec, x, rng: np.random.Generator, max_tries: int = 100
) -> np.ndarray:
    """Draw one admissible direction y at a fixed base point x."""
    x = np.asarray(x, dtype=float)
    for _ in range(max_tries):
        y = _y_box(spec, rng)
        try:
            L = eval_L(spec, (x, y))
        except OutsideDomainError:
            continue
        if L < 0.05 * max(abs(y)):
            continue
        try:
            g = _metric_matrix(spec, x, y)
        except DomainError:
            continue
        if not np.all(np.isfinite(g)):
            continue
        scale = max(np.max(np.abs(g)), 1e-300)
        if abs(np.linalg.det(g)) < 1e-10 * scale**spec.dim:
            continue
        return y
    raise SamplingError(
        f"no admissible direction at x for kind {spec.kind!r} after {max_tries} tries"
    )
