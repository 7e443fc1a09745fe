"""Oscillatory integrals along curves.

Two quadrature routes are provided.  ``reference_quadrature`` is a brute
force composite Gauss-Legendre rule on uniform panels, with the panel
width chosen from a global bound on the phase derivative so that every
oscillation receives at least ``nodes_per_osc`` nodes.  ``adaptive_quadrature``
places panel breakpoints by inverting the cumulative phase variation, so
panels are long where the phase is nearly stationary and short where it
oscillates quickly.  Both refine by panel doubling until two successive
answers agree to the requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma as gamma_fn
from typing import Callable, Sequence

import numpy as np

from .cutoffs import SmoothCutoff, bump
from .curves import Curve


class AccuracyError(RuntimeError):
    def __init__(self, achieved: float, message: str = "tolerance not reached"):
        super().__init__(f"{message}; achieved error bound {achieved:.3e}")
        self.achieved = achieved


class InsufficientDataError(ValueError):
    pass


def alpha_n(n: int) -> complex:
    """Constant with ``int_R exp(i lam s^n) ds = alpha_n lam^{-1/n}``."""
    if n < 2:
        raise ValueError(f"invalid order n={n}; need n >= 2")
    mag = (2.0 / n) * gamma_fn(1.0 / n)
    if n % 2:
        return complex(mag * np.sin((n - 1) * np.pi / (2 * n)), 0.0)
    return complex(mag * np.cos(np.pi / (2 * n)), mag * np.sin(np.pi / (2 * n)))


@lru_cache(maxsize=None)
def _gauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error: float
    panels: int
    nodes: int


Amp = Callable[[np.ndarray], np.ndarray]
Phase = Callable[[np.ndarray], np.ndarray]


def _panel_sum(amp: Amp, phase: Phase, edges: np.ndarray, m: int) -> complex:
    x, w = _gauss(m)
    left = edges[:-1, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    s = (left + half * (x[None, :] + 1.0)).ravel()
    weights = (half * w[None, :]).ravel()
    vals = amp(s) * np.exp(1j * phase(s))
    return complex(np.sum(weights * vals))


def _refine(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[1:] + edges[:-1])
    out = np.empty(edges.size + mids.size)
    out[0::2] = edges
    out[1::2] = mids
    return out


def _converge(amp, phase, edges, m, tol, max_nodes, rtol=0.0):
    prev = _panel_sum(amp, phase, edges, m)
    while True:
        finer = _refine(edges)
        if (finer.size - 1) * m > max_nodes:
            raise AccuracyError(float("nan"), "node budget exceeded before convergence")
        cur = _panel_sum(amp, phase, finer, m)
        err = abs(cur - prev)
        if err <= max(tol, rtol * abs(cur)):
            return QuadResult(cur, err, finer.size - 1, (finer.size - 1) * m)
        edges, prev = finer, cur


def reference_quadrature(
    amp: Amp,
    phase: Phase,
    dphase: Phase,
    a: float,
    b: float,
    tol: float = 1e-10,
    nodes_per_osc: int = 20,
    min_panels: int = 32,
    max_nodes: int = 50_000_000,
    probe: int = 4097,
) -> QuadResult:
    """Uniform composite Gauss rule with at least ``nodes_per_osc`` nodes per oscillation."""
    if b <= a:
        return QuadResult(0j, 0.0, 0, 0)
    grid = np.linspace(a, b, probe)
    dmax = float(np.max(np.abs(dphase(grid))))
    width = (b - a) / min_panels
    if dmax > 0:
        width = min(width, 2 * np.pi / dmax)
    panels = int(np.ceil((b - a) / width))
    edges = np.linspace(a, b, panels + 1)
    return _converge(amp, phase, edges, nodes_per_osc, tol, max_nodes)


def adaptive_quadrature(
    amp: Amp,
    phase: Phase,
    dphase: Phase,
    a: float,
    b: float,
    tol: float = 1e-10,
    nodes: int = 20,
    min_panels: int = 32,
    max_nodes: int = 50_000_000,
    probe: int = 4097,
) -> QuadResult:
    """Composite Gauss rule on panels carrying at most one oscillation each.

    Breakpoints are the level sets of ``V(s)/(2 pi) + min_panels (s - a)/(b - a)``
    where ``V`` is the cumulative phase variation, so a panel is never wider than
    one oscillation nor than ``(b - a)/min_panels``.
    """
    if b <= a:
        return QuadResult(0j, 0.0, 0, 0)
    grid = np.linspace(a, b, probe)
    speed = np.abs(dphase(grid))
    # max of neighbouring samples keeps the variation estimate on the safe side
    local = np.maximum(speed[1:], speed[:-1]) * np.diff(grid)
    var = np.concatenate([[0.0], np.cumsum(local)]) / (2 * np.pi)
    w = var + min_panels * (grid - a) / (b - a)
    count = int(np.ceil(w[-1]))
    levels = np.linspace(0.0, w[-1], count + 1)
    edges = np.interp(levels, w, grid)
    edges[0], edges[-1] = a, b
    return _converge(amp, phase, edges, nodes, tol, max_nodes)


# ------------------------------------------------------------------ curves


def _support_in_domain(curve: Curve, chi: SmoothCutoff) -> tuple[float, float]:
    lo, hi = chi.support
    a, b = curve.domain
    if lo < a - 1e-12 or hi > b + 1e-12:
        raise ValueError(f"cutoff support {chi.support} not inside curve domain {curve.domain}")
    return max(lo, a), min(hi, b)


def default_chi() -> SmoothCutoff:
    """Cutoff equal to 1 on [-1/2, 1/2] and supported in [-1, 1]."""
    return bump().dilate(2.0)


def eval_mu_hat(
    curve: Curve,
    chi: SmoothCutoff,
    xi: Sequence[float],
    tol: float = 1e-10,
    method: str = "adaptive",
    amplitude: Amp | None = None,
) -> QuadResult:
    """``int exp(-i <gamma(s), xi>) a(s) chi(s) ds`` with ``a = 1`` by default."""
    xi = np.asarray(xi, dtype=float)
    a, b = _support_in_domain(curve, chi)

    def phase(s):
        return -(curve.deriv(s, 0) @ xi)

    def dphase(s):
        return -(curve.deriv(s, 1) @ xi)

    if amplitude is None:
        amp = chi
    else:
        def amp(s):
            return chi(s) * amplitude(s)

    rule = adaptive_quadrature if method == "adaptive" else reference_quadrature
    return rule(amp, phase, dphase, a, b, tol=tol)


def mu_hat(curve: Curve, chi: SmoothCutoff, xi, tol: float = 1e-10) -> complex:
    return eval_mu_hat(curve, chi, xi, tol).value


@dataclass(frozen=True)
class ModelIntegral:
    value: complex
    leading: complex
    residual: float
    error: float


def model_integral(
    n: int,
    lam: float,
    eta: SmoothCutoff | None = None,
    w: Sequence[float] | None = None,
    g: Callable[[np.ndarray, int], np.ndarray] | None = None,
    tol: float = 1e-12,
    method: str = "adaptive",
) -> ModelIntegral:
    """``int eta(s) exp(i lam (sum_j w_j s^j + s^n + g(s) s^{n+1})) ds``.

    ``g(s, order)`` returns ``g`` or its first derivative.  The leading term
    is ``eta(0) alpha_n lam^{-1/n}``.  The default ``eta`` is 1 on [-1/2, 1/2]
    and supported in [-1, 1].
    """
    if lam <= 2:
        raise ValueError("lam must exceed 2")
    eta = default_chi() if eta is None else eta
    w = np.zeros(max(n - 2, 0)) if w is None else np.asarray(w, dtype=float)
    if w.size != max(n - 2, 0):
        raise ValueError("w must have n - 2 entries")
    pw = np.arange(1, n - 1)

    def poly(s):
        out = s**n
        for j, wj in zip(pw, w):
            out = out + wj * s**j
        if g is not None:
            out = out + g(s, 0) * s ** (n + 1)
        return out

    def dpoly(s):
        out = n * s ** (n - 1)
        for j, wj in zip(pw, w):
            out = out + j * wj * s ** (j - 1)
        if g is not None:
            out = out + g(s, 1) * s ** (n + 1) + (n + 1) * g(s, 0) * s**n
        return out

    lo, hi = eta.support
    rule = adaptive_quadrature if method == "adaptive" else reference_quadrature
    res = rule(eta, lambda s: lam * poly(s), lambda s: lam * dpoly(s), lo, hi, tol=tol)
    lead = eta.value_at_zero * alpha_n(n) * lam ** (-1.0 / n)
    return ModelIntegral(res.value, lead, abs(res.value - lead), res.error)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    used: int


def loglog_fit(x: np.ndarray, y: np.ndarray) -> SlopeFit:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if x.size < 4:
        raise InsufficientDataError(f"need at least 4 usable points, got {x.size}")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(x.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return SlopeFit(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), int(x.size))


def decay_exponent_fit(
    curve: Curve,
    chi: SmoothCutoff,
    ray: Sequence[float],
    lam_grid: Sequence[float],
    tol: float = 1e-10,
) -> tuple[SlopeFit, np.ndarray]:
    """Least-squares slope of ``log |mu_hat(lam ray)|`` against ``log lam``."""
    ray = np.asarray(ray, dtype=float)
    ray = ray / np.linalg.norm(ray)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.max() / lam_grid.min() < 2**6:
        raise InsufficientDataError("lambda grid must span at least 6 octaves")
    vals = np.array([abs(mu_hat(curve, chi, lam * ray, tol)) for lam in lam_grid])
    keep = vals > max(1e-14, 100 * tol)
    if keep.sum() < 4:
        raise InsufficientDataError(f"only {int(keep.sum())} values above the noise floor")
    return loglog_fit(lam_grid[keep], vals[keep]), vals
