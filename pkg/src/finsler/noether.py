"""Noether first integrals and the 2-D Weierstrass invariant.

For a one-parameter family of transformations with generators
(phi, psi_1..psi_n) leaving the action of a Lagrangian F(t, x, xdot)
invariant, the conserved charge is

    Q = sum_i F_{xdot_i} psi_i + (F - sum_i xdot_i F_{xdot_i}) phi.

Invariance itself is the caller's hypothesis (checking it symbolically is
symmetry discovery, not an audit) — the functions here evaluate Q and
measure its drift along numerically integrated trajectories, which is
the testable consequence.

Charges work against two kinds of Lagrangians: arbitrary expressions
F(t, x, xdot), integrated by the general Euler-Lagrange solver below,
and metric energies F = L^2/2 evaluated through metric jets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, InputError
from .expr import Expr, eval_expr, parse_expr
from .jets import space
from .metrics import MetricSpec, l2_jet

__all__ = [
    "TransformationFamily",
    "family",
    "noether_charge",
    "metric_charge",
    "expr_charge",
    "charge_drift",
    "el_integrate",
    "weierstrass",
]


@dataclass(frozen=True)
class TransformationFamily:
    phi: Expr  # d(t*)/d(eps) at eps = 0
    psis: tuple  # n generators d(x*^i)/d(eps) at eps = 0


def family(phi, psis, dim: int) -> TransformationFamily:
    """Parse generator expressions over (t, x0.., y0..) into a family."""

    def as_expr(e):
        if isinstance(e, str):
            return parse_expr(e, dim, allow_t=True)
        if isinstance(e, Expr):
            return e
        raise InputError("generators must be expression strings or Expr")

    psis = tuple(as_expr(e) for e in psis)
    if len(psis) != dim:
        raise InputError(f"family needs {dim} psi generators, got {len(psis)}")
    return TransformationFamily(phi=as_expr(phi), psis=psis)


def _state_slots(sp, t, x, v):
    n = len(x)
    x_jets = [sp.variable(i, float(x[i])) for i in range(n)]
    v_jets = [sp.variable(n + i, float(v[i])) for i in range(n)]
    t_jet = sp.variable(2 * n, float(t))
    return x_jets, v_jets, t_jet


def _eval_generator(e: Expr, x_jets, v_jets, t_jet) -> float:
    slots = list(x_jets)
    if e.uses_y:
        slots += v_jets
    if e.uses_t:
        slots.append(t_jet)
    out = eval_expr(e, slots)
    return out.value if hasattr(out, "value") else float(out)


def noether_charge(F, fam: TransformationFamily, state) -> float:
    """Q = sum F_{v_i} psi_i + (F - sum v_i F_{v_i}) phi at (t, x, v)."""
    t, x, v = state
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(x)
    if isinstance(F, str):
        F = parse_expr(F, n, allow_t=True)
    if not isinstance(F, Expr):
        raise InputError("F must be an expression over (t, x, xdot)")
    sp = space(2 * n + 1, 1)
    x_jets, v_jets, t_jet = _state_slots(sp, t, x, v)

    F_jet = eval_expr(F, list(x_jets) + (v_jets if F.uses_y else []) + ([t_jet] if F.uses_t else []))
    if hasattr(F_jet, "partial"):
        F_val = F_jet.value
        F_v = np.zeros(n)
        if F.uses_y:
            for i in range(n):
                alpha = [0] * (2 * n + 1)
                alpha[n + i] = 1
                F_v[i] = F_jet.partial(tuple(alpha))
    else:
        F_val = float(F_jet)
        F_v = np.zeros(n)

    phi_val = _eval_generator(fam.phi, x_jets, v_jets, t_jet)
    psi_vals = np.array([_eval_generator(e, x_jets, v_jets, t_jet) for e in fam.psis])
    return float(F_v @ psi_vals + (F_val - v @ F_v) * phi_val)


def expr_charge(F, fam: TransformationFamily):
    """Charge evaluator (t, x, v) -> Q for an expression Lagrangian."""

    def evaluator(t, x, v):
        return noether_charge(F, fam, (t, x, v))

    return evaluator


def metric_charge(spec: MetricSpec, fam: TransformationFamily):
    """Charge evaluator for the metric energy F = L^2/2.

    Time translation (phi=1, psi=0) gives -F, the energy first integral;
    a coordinate translation (phi=0, psi=e_k) gives the impulsion
    dF/dy^k — on a surface of revolution with psi = e_theta this is the
    Clairaut momentum r^2 theta-dot.
    """
    n = spec.dim

    def evaluator(t, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        jet = l2_jet(spec, x, v, 1)
        F_val = 0.5 * jet.value
        F_v = np.empty(n)
        for i in range(n):
            alpha = [0] * (2 * n)
            alpha[n + i] = 1
            F_v[i] = 0.5 * jet.partial(tuple(alpha))
        sp = space(2 * n + 1, 1)
        x_jets, v_jets, t_jet = _state_slots(sp, t, x, v)
        phi_val = _eval_generator(fam.phi, x_jets, v_jets, t_jet)
        psi_vals = np.array(
            [_eval_generator(e, x_jets, v_jets, t_jet) for e in fam.psis]
        )
        return float(F_v @ psi_vals + (F_val - v @ F_v) * phi_val)

    return evaluator


def charge_drift(evaluator, path) -> float:
    """max_k |Q_k - Q_0| / (1 + |Q_0|) along a path.

    ``path`` is a GeodesicPath (tau, x, y), a HamiltonPath (t, x, p), or
    a plain (ts, xs, vs) triple; the evaluator is called as Q(t, x, v).
    """
    if hasattr(path, "taus"):
        ts, xs, vs = path.taus, path.xs, path.ys
    elif hasattr(path, "ps"):
        ts, xs, vs = path.ts, path.xs, path.ps
    else:
        ts, xs, vs = path
    ts = np.asarray(ts, dtype=float)
    if len(ts) == 0:
        raise InputError("charge_drift needs a non-empty path")
    Q = np.array([evaluator(ts[k], xs[k], vs[k]) for k in range(len(ts))])
    return float(np.max(np.abs(Q - Q[0])) / (1.0 + abs(Q[0])))


def el_integrate(F, t0: float, x0, v0, T: float, step: float):
    """RK4 for the Euler-Lagrange system of a general Lagrangian F(t,x,v).

    The second-order system is reduced through the expanded form
    F_vv . a = F_x - F_tv - F_xv . v, solved at every stage; a Hessian
    with |det| below the degeneracy threshold raises.
    Returns (ts, xs, vs) arrays.
    """
    if step <= 0.0 or T <= 0.0:
        raise InputError("T and step must be positive")
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    n = len(x)
    if isinstance(F, str):
        F = parse_expr(F, n, allow_t=True)
    if not isinstance(F, Expr) or not F.uses_y:
        raise InputError("F must be an expression depending on the velocities")

    sp = space(2 * n + 1, 2)

    def acceleration(t, xx, vv):
        x_jets = [sp.variable(i, float(xx[i])) for i in range(n)]
        v_jets = [sp.variable(n + i, float(vv[i])) for i in range(n)]
        slots = x_jets + v_jets
        if F.uses_t:
            slots.append(sp.variable(2 * n, float(t)))
        jet = eval_expr(F, slots)

        def d2(a, b):
            alpha = [0] * (2 * n + 1)
            alpha[a] += 1
            alpha[b] += 1
            return jet.partial(tuple(alpha))

        def d1(a):
            alpha = [0] * (2 * n + 1)
            alpha[a] = 1
            return jet.partial(tuple(alpha))

        M = np.array([[d2(n + i, n + j) for j in range(n)] for i in range(n)])
        rhs = np.array(
            [
                d1(i)
                - (d2(n + i, 2 * n) if F.uses_t else 0.0)
                - sum(d2(n + i, j) * vv[j] for j in range(n))
                for i in range(n)
            ]
        )
        scale = max(1.0, float(np.max(np.abs(M))))
        if abs(np.linalg.det(M)) < 1e-12 * scale**n:
            raise DegenerateMetricError(
                "velocity Hessian of F is degenerate along the trajectory"
            )
        return np.linalg.solve(M, rhs)

    ts = [t0]
    xs = [x.copy()]
    vs = [v.copy()]
    t = t0
    while t < t0 + T - 1e-12:
        h = min(step, t0 + T - t)
        k1x, k1v = v, acceleration(t, x, v)
        k2x, k2v = v + 0.5 * h * k1v, acceleration(t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acceleration(t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acceleration(t + h, x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        t += h
        ts.append(t)
        xs.append(x.copy())
        vs.append(v.copy())
    return np.array(ts), np.array(xs), np.array(vs)


def weierstrass(f, state) -> tuple:
    """(W, consistency_residual) for a parametric-plane Lagrangian f(x,y,p,q).

    W = f_pp / q^2, which for a 1-homogeneous f equals f_qq / p^2 and
    -f_pq / (p q).  The residual is the worst relative violation of that
    three-way chain together with the (-3)-homogeneity W(2p,2q) = W/8.
    Variables map to slots as x->x0, y->x1, p->y0, q->y1.
    """
    if isinstance(f, str):
        f = parse_expr(f, 2)
    if not isinstance(f, Expr):
        raise InputError("f must be an expression in (x0, x1, y0, y1)")
    if not f.uses_y:
        raise InputError("f must depend on the direction slots (p, q) = (y0, y1)")
    x, y, p, q = (float(v) for v in state)
    if p == 0.0 or q == 0.0:
        raise InputError("Weierstrass invariant needs p != 0 and q != 0")

    sp = space(4, 2)

    def jet_at(pp, qq):
        slots = [
            sp.variable(0, x),
            sp.variable(1, y),
            sp.variable(2, pp),
            sp.variable(3, qq),
        ]
        j = eval_expr(f, slots)
        if not hasattr(j, "partial"):
            raise InputError("f is constant; the Weierstrass invariant is undefined")
        return j

    jet = jet_at(p, q)
    f_val = jet.value
    f_p = jet.partial((0, 0, 1, 0))
    f_q = jet.partial((0, 0, 0, 1))
    # 1-homogeneity audit in (p, q): Euler relation and direct scaling
    euler = abs(p * f_p + q * f_q - f_val)
    scaled = jet_at(2 * p, 2 * q).value
    scaling = abs(scaled - 2 * f_val)
    if max(euler, scaling) > 1e-9 * (1.0 + abs(f_val)):
        raise InputError(
            "f is not 1-homogeneous in (p, q); the Weierstrass identities need it"
        )

    f_pp = jet.partial((0, 0, 2, 0))
    f_qq = jet.partial((0, 0, 0, 2))
    f_pq = jet.partial((0, 0, 1, 1))
    W = f_pp / (q * q)
    scale = max(1.0, abs(W))
    residual = max(
        abs(W - f_qq / (p * p)),
        abs(W + f_pq / (p * q)),
    )
    jet2 = jet_at(2 * p, 2 * q)
    W2 = jet2.partial((0, 0, 2, 0)) / (4 * q * q)
    residual = max(residual, abs(W2 - W / 8.0))
    return W, residual / scale
