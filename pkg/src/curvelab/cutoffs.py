"""Compactly supported smooth cutoffs with closed-form derivatives.

Everything here is built from ``f(t) = exp(-1/t)`` (``t > 0``) and the
smooth step ``h(t) = f(t) / (f(t) + f(1 - t))``, which is 0 for ``t <= 0``,
1 for ``t >= 1`` and satisfies ``h(t) + h(1 - t) = 1`` exactly.

The standard bump is ``eta(r) = h(2 - |r|)``: equal to 1 on [-1, 1] and
vanishing outside [-2, 2].  The angular partition function is
``zeta(x) = h(1 - |x|)`` which is supported in [-1, 1] and whose integer
translates sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

MAX_ORDER = 6


def _poly_table(order: int) -> list[np.ndarray]:
    # d^k/dt^k exp(-1/t) = P_k(1/t) exp(-1/t),  P_{k+1}(x) = x^2 (P_k(x) - P_k'(x))
    polys = [np.array([1.0])]
    for _ in range(order):
        p = polys[-1]
        dp = np.polynomial.polynomial.polyder(p) if p.size > 1 else np.array([0.0])
        diff = np.polynomial.polynomial.polysub(p, dp)
        polys.append(np.polynomial.polynomial.polymul([0.0, 0.0, 1.0], diff))
    return polys


_POLYS = _poly_table(MAX_ORDER)


def _f_derivs(t: np.ndarray, order: int) -> list[np.ndarray]:
    """Derivatives 0..order of exp(-1/t) (zero for t <= 0)."""
    t = np.asarray(t, dtype=float)
    # below 1/500 the value is under exp(-500); treating it as zero keeps 1/t finite
    pos = t > 2e-3
    tt = np.where(pos, t, 1.0)
    x = 1.0 / tt
    base = np.where(pos, np.exp(-x), 0.0)
    out = []
    for k in range(order + 1):
        val = np.polynomial.polynomial.polyval(x, _POLYS[k]) * base
        out.append(np.where(pos, val, 0.0))
    return out


def smooth_step(t, order: int = 0) -> np.ndarray:
    """The step ``h`` and its derivative of the given order."""
    if order > MAX_ORDER:
        raise ValueError(f"derivative order {order} exceeds {MAX_ORDER}")
    t = np.asarray(t, dtype=float)
    f = _f_derivs(t, order)
    g_minus = _f_derivs(1.0 - t, order)
    # derivatives of f(1 - t) pick up (-1)^k
    g = [f[k] + (-1) ** k * g_minus[k] for k in range(order + 1)]
    # NaN inputs propagate quietly; callers map them to zero
    with np.errstate(invalid="ignore"):
        h = [f[0] / g[0]]
        for k in range(1, order + 1):
            acc = f[k].copy()
            for i in range(k):
                acc -= comb(k, i) * h[i] * g[k - i]
            h.append(acc / g[0])
    return h[order]


@dataclass(frozen=True)
class SmoothCutoff:
    """A smooth compactly supported scalar function of one variable.

    ``func(x, order)`` returns the derivative of the requested order.
    ``support`` is a closed interval outside which the function and all
    of its derivatives vanish.
    """

    func: Callable[[np.ndarray, int], np.ndarray]
    support: tuple[float, float]
    name: str = "cutoff"

    def __call__(self, x, order: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        val = np.asarray(self.func(x, order), dtype=float)
        return np.where((x >= lo) & (x <= hi), val, 0.0)

    @property
    def value_at_zero(self) -> float:
        return float(self(0.0))

    def dilate(self, scale: float) -> "SmoothCutoff":
        """Return ``x -> self(scale * x)``."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        lo, hi = self.support
        parent = self

        def func(x, order):
            return scale**order * parent.func(scale * x, order)

        return SmoothCutoff(func, (lo / scale, hi / scale), f"{self.name}({scale:g}x)")

    def __sub__(self, other: "SmoothCutoff") -> "SmoothCutoff":
        a, b = self, other

        def func(x, order):
            return a(x, order) - b(x, order)

        lo = min(a.support[0], b.support[0])
        hi = max(a.support[1], b.support[1])
        return SmoothCutoff(func, (lo, hi), f"({a.name}-{b.name})")


def _eta_func(x, order):
    x = np.asarray(x, dtype=float)
    sgn = np.sign(x)
    # eta(r) = h(2 - |r|); d/dr = -sign(r) h'(2 - |r|); flat near r = 0 so the kink is harmless
    return (-sgn) ** order * smooth_step(2.0 - np.abs(x), order)


def bump() -> SmoothCutoff:
    """Standard bump: 1 on [-1, 1], supported in [-2, 2]."""
    return SmoothCutoff(_eta_func, (-2.0, 2.0), "eta")


def _zeta_func(x, order):
    x = np.asarray(x, dtype=float)
    sgn = np.sign(x)
    return (-sgn) ** order * smooth_step(1.0 - np.abs(x), order)


def zeta() -> SmoothCutoff:
    """Angular partition function: supported in [-1, 1], integer translates sum to 1."""
    return SmoothCutoff(_zeta_func, (-1.0, 1.0), "zeta")


def littlewood_paley(k: int) -> SmoothCutoff:
    """``beta^k(r) = eta(2^-k r) - eta(2^{-k+1} r)`` for k >= 1 and ``eta`` for k = 0."""
    if k < 0:
        raise ValueError("k must be non-negative")
    eta = bump()
    if k == 0:
        return eta
    out = eta.dilate(2.0**-k) - eta.dilate(2.0 ** (-k + 1))
    return SmoothCutoff(out.func, (-(2.0 ** (k + 1)), 2.0 ** (k + 1)), f"beta^{k}")


def annulus(inner: float, outer: float) -> SmoothCutoff:
    """``eta(r / outer') - eta(r / inner')`` normalised so the support is [inner, outer].

    Equals 1 on ``[2 inner, outer / 2]`` when that interval is nonempty.  This
    is the parameterised ``beta`` used at each decomposition site.
    """
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    eta = bump()
    out = eta.dilate(2.0 / outer) - eta.dilate(1.0 / inner)
    return SmoothCutoff(out.func, (-outer, outer), f"annulus[{inner:g},{outer:g}]")


def zeta_partition_check(x: np.ndarray, span: int = 3) -> np.ndarray:
    """Return ``sum_m zeta(x - m)`` over the translates that can be nonzero."""
    z = zeta()
    x = np.asarray(x, dtype=float)
    base = np.floor(x)
    total = np.zeros_like(x)
    for m in range(-span, span + 1):
        total += z(x - (base + m))
    return total


def angular_pieces(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The two integers ``m`` with ``zeta(x - m)`` possibly nonzero and their weights.

    Returns ``(m0, w0, w1)`` where the pieces are ``m0`` and ``m0 + 1`` and
    ``w0 + w1 = 1``.
    """
    x = np.asarray(x, dtype=float)
    m0 = np.floor(x)
    w1 = smooth_step(x - m0)
    # h(t) + h(1 - t) = 1 exactly up to rounding; compute both from the same quotient
    w0 = smooth_step(1.0 - (x - m0))
    return m0.astype(int), w0, w1
