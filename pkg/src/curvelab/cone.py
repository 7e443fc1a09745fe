"""Implicit roots along the slow-decay cones and the associated u-quantities.

For ``xi`` in the admissible region (last coordinate positive and dominant)
the pairing ``s -> <gamma^(n)(s), xi>`` is positive on [-1, 1], so
``s -> <gamma^(n-1)(s), xi>`` is strictly increasing and has at most one
root.  All root finders below bracket by bisection on that monotone function
and polish with a safeguarded Newton step.  Every function is batched: ``xi``
may be a single vector or an ``(m, n)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .curves import Curve, frenet_frames


class LocalisationError(ValueError):
    pass


class RootMissingError(ValueError):
    pass


class OutOfWindowError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


DEFAULT_WINDOW = 0.3
MAX_ITER = 60


def _as_batch(xi) -> tuple[np.ndarray, bool]:
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    return np.atleast_2d(xi), single


def pairing(curve: Curve, s, xi: np.ndarray, order: int) -> np.ndarray:
    """Row-wise ``<gamma^(order)(s_i), xi_i>``."""
    return np.sum(curve.deriv(s, order) * xi, axis=1)


def check_admissible(xi: np.ndarray, window: float = DEFAULT_WINDOW) -> None:
    """Raise unless ``xi_n > 0`` and ``|xi_j| <= window * xi_n`` for ``j < n``."""
    last = xi[:, -1]
    ok = (last > 0) & np.all(np.abs(xi[:, :-1]) <= window * last[:, None] + 1e-15, axis=1)
    if not np.all(ok):
        i = int(np.argmin(ok))
        raise LocalisationError(f"frequency {xi[i].tolist()} outside the admissible cone (window {window})")


def _increasing_root(curve, xi, order, lo, hi, sign=1.0):
    """Root of ``sign * <gamma^(order)(s), xi>`` on ``[lo, hi]`` (increasing there)."""

    def f(s):
        return sign * pairing(curve, s, xi, order)

    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(hi))):
            break
    s = 0.5 * (lo + hi)
    # two safeguarded Newton steps; never leave the bracket
    for _ in range(2):
        fp = sign * pairing(curve, s, xi, order + 1)
        step = np.where(fp != 0, f(s) / np.where(fp != 0, fp, 1.0), 0.0)
        cand = s - step
        s = np.where((cand >= lo) & (cand <= hi), cand, s)
    return s


def monotone_root(curve: Curve, xi, order: int, window: float | None = DEFAULT_WINDOW):
    """Unique root on [-1, 1] of ``<gamma^(order)(s), xi>`` when ``<gamma^(order+1), xi> > 0``."""
    xb, single = _as_batch(xi)
    if window is not None:
        check_admissible(xb, window)
    m = xb.shape[0]
    lo = np.full(m, -1.0)
    hi = np.full(m, 1.0)
    flo = pairing(curve, lo, xb, order)
    fhi = pairing(curve, hi, xb, order)
    bad = (flo > 0) | (fhi < 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RootMissingError(f"no sign change of order-{order} pairing on [-1, 1] for xi={xb[i].tolist()}")
    s = _increasing_root(curve, xb, order, lo, hi)
    return s[0] if single else s


def theta(curve: Curve, xi, window: float | None = DEFAULT_WINDOW):
    """Root of ``<gamma^(n-1)(s), xi>``; the stationary point on the worst cone."""
    return monotone_root(curve, xi, curve.n - 1, window)


def theta2(curve: Curve, xi, window: float | None = DEFAULT_WINDOW):
    """Root of ``<gamma'''(s), xi>``; the minimiser of ``<gamma''(s), xi>``."""
    if curve.n < 4:
        raise ValueError("theta2 needs n >= 4")
    return monotone_root(curve, xi, 3, window)


@dataclass(frozen=True)
class ConeRoots:
    """Batched roots and u-quantities.  Entries absent for a row are NaN."""

    xi: np.ndarray
    theta2: np.ndarray
    u12: np.ndarray
    u2: np.ndarray
    degenerate: np.ndarray
    theta1_minus: np.ndarray
    theta1_plus: np.ndarray
    u1_minus: np.ndarray
    u1_plus: np.ndarray
    u31_minus: np.ndarray
    u31_plus: np.ndarray
    u1: np.ndarray
    theta1: np.ndarray
    u31: np.ndarray
    tie: np.ndarray

    def row(self, i: int = 0) -> dict:
        out = {}
        for key, val in self.__dict__.items():
            v = val[i]
            if isinstance(v, np.ndarray):
                out[key] = v.tolist()
            elif isinstance(v, (np.bool_, bool)):
                out[key] = bool(v)
            else:
                out[key] = None if np.isnan(v) else float(v)
        return out


def theta1_pm(
    curve: Curve, xi, window: float | None = DEFAULT_WINDOW, band: float = 1e-12, strict: bool = True
):
    """Roots of ``<gamma''(s), xi>`` bracketing ``theta2``.

    Returns ``(minus, plus, degenerate)`` arrays; rows with ``u2 > band |xi|`` get
    NaN, rows with ``|u2| <= band |xi|`` are flagged degenerate and return the
    double root ``theta2``.  With ``strict=False`` rows whose roots leave
    [-1, 1] get NaN instead of raising.
    """
    xb, single = _as_batch(xi)
    t2 = np.atleast_1d(theta2(curve, xb, window))
    u2 = pairing(curve, t2, xb, 2)
    scale = np.linalg.norm(xb, axis=1)
    degenerate = np.abs(u2) <= band * scale
    two = (u2 < 0) & ~degenerate
    minus = np.full(xb.shape[0], np.nan)
    plus = np.full(xb.shape[0], np.nan)
    minus[degenerate] = t2[degenerate]
    plus[degenerate] = t2[degenerate]
    if np.any(two):
        x2 = xb[two]
        t = t2[two]
        f_left = pairing(curve, np.full(t.size, -1.0), x2, 2)
        f_right = pairing(curve, np.full(t.size, 1.0), x2, 2)
        escaped = (f_left < 0) | (f_right < 0)
        if strict and np.any(escaped):
            i = int(np.argmax(escaped))
            raise OutOfWindowError(f"roots of <gamma'', xi> leave [-1, 1] for xi={x2[i].tolist()}")
        # decreasing on [-1, theta2], increasing on [theta2, 1]
        lo_root = _increasing_root(curve, x2, 2, np.full(t.size, -1.0), t, sign=-1.0)
        hi_root = _increasing_root(curve, x2, 2, t, np.full(t.size, 1.0))
        minus[two] = np.where(escaped, np.nan, lo_root)
        plus[two] = np.where(escaped, np.nan, hi_root)
    if single:
        return (None if np.isnan(minus[0]) else float(minus[0]),
                None if np.isnan(plus[0]) else float(plus[0]),
                bool(degenerate[0]))
    return minus, plus, degenerate


def u_report(
    curve: Curve, xi, window: float | None = DEFAULT_WINDOW, band: float = 1e-12, strict: bool = True
) -> ConeRoots:
    """All of ``theta2, theta1^+-, u_{1,2}, u_2, u_1^+-, u_{3,1}^+-, u_1, theta_1``.

    When ``|u_1^+| = |u_1^-|`` the ``+`` branch is chosen and ``tie`` is set.
    """
    xb, _ = _as_batch(xi)
    t2 = np.atleast_1d(theta2(curve, xb, window))
    u12 = pairing(curve, t2, xb, 1)
    u2 = pairing(curve, t2, xb, 2)
    minus, plus, degen = theta1_pm(curve, xb, window, band, strict)
    has = ~np.isnan(minus)
    m = xb.shape[0]
    u1m, u1p, u31m, u31p = (np.full(m, np.nan) for _ in range(4))
    if np.any(has):
        u1m[has] = pairing(curve, minus[has], xb[has], 1)
        u1p[has] = pairing(curve, plus[has], xb[has], 1)
        u31m[has] = pairing(curve, minus[has], xb[has], 3)
        u31p[has] = pairing(curve, plus[has], xb[has], 3)
    take_plus = np.abs(u1p) <= np.abs(u1m)
    tie = has & (np.abs(u1p) == np.abs(u1m))
    u1 = np.where(has, np.where(take_plus, u1p, u1m), np.nan)
    th1 = np.where(has, np.where(take_plus, plus, minus), np.nan)
    u31 = np.where(has, np.where(take_plus, u31p, u31m), np.nan)
    return ConeRoots(xb, t2, u12, u2, degen, minus, plus, u1m, u1p, u31m, u31p, u1, th1, u31, tie)


def size_ratios(roots: ConeRoots) -> dict[str, np.ndarray]:
    """Scale-free ratios between the u-quantities, evaluated at ``xi / |xi|``.

    Keys ``i_u31``, ``i_gap_pm``, ``i_gap_full`` compare with ``|u2|^{1/2}``;
    ``ii`` and ``iii`` compare with ``|u2|^{3/2}``.  Only rows with two roots.
    """
    has = ~np.isnan(roots.theta1_minus) & ~roots.degenerate
    scale = np.linalg.norm(roots.xi[has], axis=1)
    u2 = np.abs(roots.u2[has]) / scale
    h = np.sqrt(u2)
    h3 = u2 * h
    t2 = roots.theta2[has]
    tm, tp = roots.theta1_minus[has], roots.theta1_plus[has]
    out = {
        "i_u31": np.concatenate([np.abs(roots.u31_minus[has]) / scale, np.abs(roots.u31_plus[has]) / scale]) / np.tile(h, 2),
        "i_gap_pm": np.concatenate([np.abs(tm - t2), np.abs(tp - t2)]) / np.tile(h, 2),
        "i_gap_full": np.abs(tp - tm) / h,
        "ii": np.concatenate([
            np.abs(roots.u12[has] - roots.u1_minus[has]),
            np.abs(roots.u12[has] - roots.u1_plus[has]),
        ]) / np.tile(scale * h3, 2),
        "iii": np.abs(roots.u1_plus[has] - roots.u1_minus[has]) / (scale * h3),
    }
    return out


def global_min_gap(curve: Curve, xi, n_grid: int = 4001) -> float:
    """``min_s <gamma''(s), xi> - <gamma''(theta2), xi>`` over a dense grid (should be >= 0)."""
    xb, _ = _as_batch(xi)
    t2 = np.atleast_1d(theta2(curve, xb))
    s = np.linspace(-1, 1, n_grid)
    g2 = curve.deriv(s, 2) @ xb.T  # (grid, m)
    at_root = pairing(curve, t2, xb, 2)
    return float(np.min(g2.min(axis=0) - at_root))


# ---------------------------------------------------------------- worst cone


@dataclass(frozen=True)
class WorstConePoint:
    tau: float
    xi: np.ndarray
    s: float
    residual: float


def worst_cone_moment(n: int, tau: float) -> np.ndarray:
    """Closed form on the moment curve: ``sum_i (-tau)^{n-i}/(n-i)! e_i``."""
    return np.array([(-tau) ** (n - i) / factorial(n - i) for i in range(1, n + 1)])


def _cone_newton(curve: Curve, tau: float, s: float, free: np.ndarray, iters: int = 50):
    n = curve.n
    for _ in range(iters):
        xi = np.concatenate([free, [-tau, 1.0]])
        ders = np.stack([curve.point(s, j) for j in range(1, n + 1)])  # rows gamma^(j), j=1..n
        F = ders[: n - 1] @ xi
        if np.max(np.abs(F)) <= 1e-14 * np.linalg.norm(xi):
            return s, free, float(np.max(np.abs(F)))
        J = np.empty((n - 1, n - 1))
        J[:, 0] = ders[1:n] @ xi
        J[:, 1:] = ders[: n - 1, : n - 2]
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        s += step[0]
        free = free + step[1:]
        if not np.isfinite(s) or abs(s) > 1:
            break
    xi = np.concatenate([free, [-tau, 1.0]])
    F = np.stack([curve.point(s, j) for j in range(1, n)]) @ xi if np.isfinite(s) and abs(s) <= 1 else np.array([np.inf])
    return s, free, float(np.max(np.abs(F)))


def worst_cone(curve: Curve, tau: float, tau_max: float = 0.3, tol: float = 1e-12) -> WorstConePoint:
    """Solve ``<gamma^(j)(s), xi> = 0`` for ``1 <= j <= n-1`` with ``xi_{n-1} = -tau``, ``xi_n = 1``.

    The unknowns are ``s`` and ``xi_1..xi_{n-2}``; the moment-curve closed form
    seeds Newton, with continuation from ``tau = 0`` as a fallback.
    """
    if abs(tau) > tau_max:
        raise ValueError(f"|tau|={abs(tau)} exceeds tau_max={tau_max}")
    n = curve.n
    guess = worst_cone_moment(n, tau)
    s, free, res = _cone_newton(curve, tau, tau, guess[: n - 2].copy())
    if not res <= tol:
        s, free = 0.0, np.zeros(n - 2)
        for t in np.linspace(0.0, tau, 17)[1:]:
            s, free, res = _cone_newton(curve, t, s, free)
            if not np.isfinite(res):
                break
        if not res <= tol:
            raise ConvergenceError(f"worst-cone Newton failed at tau={tau}, residual {res:.3e}")
    xi = np.concatenate([free, [-tau, 1.0]])
    return WorstConePoint(float(tau), xi, float(s), res)


@dataclass(frozen=True)
class PhiData:
    nu: int
    xi: np.ndarray
    theta: float
    phi: float
    grad_phi: np.ndarray
    x: np.ndarray


def grad_theta(curve: Curve, xi) -> np.ndarray:
    """``-gamma^(n-1)(theta) / <gamma^(n)(theta), xi>``, batched."""
    xb, single = _as_batch(xi)
    t = np.atleast_1d(theta(curve, xb, window=None))
    out = -curve.deriv(t, curve.n - 1) / pairing(curve, t, xb, curve.n)[:, None]
    return out[0] if single else out


def phi(curve: Curve, xi):
    xb, single = _as_batch(xi)
    t = np.atleast_1d(theta(curve, xb, window=None))
    out = pairing(curve, t, xb, 0)
    return out[0] if single else out


def grad_phi(curve: Curve, xi) -> np.ndarray:
    """``gamma(theta) + <gamma'(theta), xi> grad theta``, batched."""
    xb, single = _as_batch(xi)
    t = np.atleast_1d(theta(curve, xb, window=None))
    gt = -curve.deriv(t, curve.n - 1) / pairing(curve, t, xb, curve.n)[:, None]
    out = curve.deriv(t, 0) + pairing(curve, t, xb, 1)[:, None] * gt
    return out[0] if single else out


def phi_and_xnu(curve: Curve, lam: float, nu: int, eps: float) -> PhiData:
    """Centre ``xi^nu = lam Gamma(nu lam^{-1/n})`` and ``x^nu = -grad phi(xi^nu)``."""
    n = curve.n
    if abs(nu) > eps * lam ** (1.0 / n) + 1e-12:
        raise ValueError(f"|nu|={abs(nu)} exceeds eps lam^(1/n)={eps * lam ** (1.0 / n):.4g}")
    tau = nu * lam ** (-1.0 / n)
    xi = lam * worst_cone(curve, tau).xi
    t = float(theta(curve, xi, window=None))
    g = grad_phi(curve, xi)
    return PhiData(int(nu), xi, t, float(pairing(curve, np.array([t]), xi[None, :], 0)[0]), g, -g)


# ---------------------------------------------------------------- audits


@dataclass(frozen=True)
class DerivativeAudit:
    ratios: dict  # (quantity, j, N) -> max normalised ratio
    skipped: list


def derivative_bound_audit(
    curve: Curve,
    samples: np.ndarray,
    k: int,
    ell: int,
    s_center: float,
    orders=(1, 2),
    directions=(1, 2, 3, 4),
    rel_step: float = 1e-2,
) -> DerivativeAudit:
    """Finite-difference derivatives of ``theta2``, ``u2``, ``u_{1,2}`` along Frenet directions.

    Along ``e_j(s_center)`` each quantity is predicted to vary on the length
    scale ``L_j = 2^{k - (4-j) ell}``.  The normalised ratio is
    ``w_f |d^N f| L_j^N`` with weights ``2^ell``, ``2^{-k+2ell}``, ``2^{-k+3ell}``.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    E = frenet_frames(curve, np.array([s_center]))[0]
    weights = {"theta2": 2.0**ell, "u2": 2.0 ** (-k + 2 * ell), "u12": 2.0 ** (-k + 3 * ell)}

    def quantities(x):
        t2 = np.atleast_1d(theta2(curve, x, window=None))
        return {"theta2": t2, "u2": pairing(curve, t2, x, 2), "u12": pairing(curve, t2, x, 1)}

    base = quantities(samples)
    ratios: dict = {}
    skipped: list = []
    norms = np.linalg.norm(samples, axis=1)
    for j in directions:
        L = 2.0 ** (k - (4 - j) * ell)
        h = rel_step * L
        if h < 1e-7 * norms.max():
            skipped.append(f"j={j}: step {h:.3g} below resolution")
            continue
        e = E[:, j - 1]
        plus = quantities(samples + h * e)
        minus = quantities(samples - h * e)
        for name, w in weights.items():
            if 1 in orders:
                d1 = (plus[name] - minus[name]) / (2 * h)
                ratios[(name, j, 1)] = float(np.max(w * np.abs(d1) * L))
            if 2 in orders:
                d2 = (plus[name] - 2 * base[name] + minus[name]) / h**2
                ratios[(name, j, 2)] = float(np.max(w * np.abs(d2) * L**2))
    return DerivativeAudit(ratios, skipped)
