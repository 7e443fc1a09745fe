"""Grid realisations of the examples showing that the Sobolev exponents are sharp.

``bump_example`` is the frequency-localised bump whose average spreads over a
``1/lambda`` neighbourhood of the curve.  ``wolff_example`` places small
balls along the worst decay cone and randomises their signs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .cone import phi_and_xnu, worst_cone
from .cutoffs import annulus, bump
from .curves import Curve
from .grid import (
    PeriodicField,
    ScaleError,
    check_budget,
    frequency_norm,
    lp_norm,
    mu_hat_lattice,
    wavenumbers,
)
from .oscillatory import InsufficientDataError, SlopeFit, default_chi, loglog_fit


class ParameterError(ValueError):
    pass


class FitError(ValueError):
    pass


# ------------------------------------------------------------------ fits


def exponent_fit(pairs: Sequence[tuple[float, float]]) -> SlopeFit:
    """OLS fit of ``log value`` against ``log lambda`` given ``(log lam, log value)`` pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise FitError(f"need at least 4 points, got {0 if arr.ndim != 2 else arr.shape[0]}")
    if np.ptp(arr[:, 0]) == 0:
        raise FitError("degenerate abscissae")
    try:
        return loglog_fit(np.exp(arr[:, 0]), np.exp(arr[:, 1]))
    except InsufficientDataError as exc:
        raise FitError(str(exc)) from exc


# ------------------------------------------------------------------ bump example


@lru_cache(maxsize=8)
def _bump_hat_table(c: float) -> tuple[np.ndarray, np.ndarray]:
    # 1D transform of eta(x / c), tabulated finely; eta is even so the cosine transform suffices
    x, w = np.polynomial.legendre.leggauss(400)
    x, w = 2 * c * x, 2 * c * w
    vals = bump()(x / c)
    t = np.linspace(0.0, 4.0, 8001)
    return t, (np.cos(np.outer(t, x)) * vals) @ w


def _bump_hat_1d(t: np.ndarray, c: float) -> np.ndarray:
    grid, tab = _bump_hat_table(c)
    return np.interp(np.abs(t), grid, tab, right=0.0)


def bump_spectrum(d: int, N: int, lam: float, L: float = 2 * np.pi, c: float = 0.25) -> np.ndarray:
    """``beta(xi / lam) lam^{-d} psi_hat(xi / lam)`` on the lattice, FFT order.

    ``beta`` is a non-negative annulus cutoff supported in ``1/2 <= |xi| <= 2``
    and ``psi(x) = prod_i eta(x_i / c')`` is a non-negative bump supported in
    the ball of radius ``c`` (``c' = c / (2 sqrt d)``).
    """
    cp = c / (2 * np.sqrt(d))
    k = wavenumbers(N, L) / lam
    prof = _bump_hat_1d(k, cp)
    out = annulus(0.5, 2.0)(frequency_norm(d, N, L) / lam).astype(complex)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = N
        out *= prof.reshape(shape)
    return out * lam ** (-d)


def _trig_eval(F: np.ndarray, points: np.ndarray, L: float) -> np.ndarray:
    """``L^{-d} sum_k F_k exp(i <x, xi_k>)`` at arbitrary points, cropped to the live lattice box."""
    d, N = F.ndim, F.shape[0]
    k = wavenumbers(N, L)
    live = [np.flatnonzero(np.any(np.abs(np.moveaxis(F, ax, 0)).reshape(N, -1) > 0, axis=1)) for ax in range(d)]
    sub = F[np.ix_(*live)]
    out = np.empty(len(points), dtype=complex)
    for i, x in enumerate(np.atleast_2d(points)):
        acc = sub
        for ax in range(d):
            acc = np.tensordot(np.exp(1j * k[live[ax]] * x[ax]), acc, axes=([0], [0]))
        out[i] = acc
    return out / L**d


@dataclass
class BumpResult:
    lam: float
    N: int
    f_norms: dict[float, float]
    af_norms: dict[float, float]
    ratios: dict[float, float]
    neighbourhood_min: float  # min of lam |A f| on sampled points near the curve


def default_grid(lam: float, d: int) -> int:
    n = max(256 if d == 2 else 64, int(8 * lam))
    return 1 << int(np.ceil(np.log2(n)))


def bump_example(
    curve: Curve,
    lam: float,
    ps: Sequence[float] = (1.5,),
    N: int | None = None,
    chi=None,
    L: float = 2 * np.pi,
    c: float = 0.25,
    n_points: int = 64,
    seed: int = 0,
    budget: int | None = None,
) -> BumpResult:
    """``f = (beta_{1/lam})^vee * psi_lam`` and the ratios ``||A f||_p / ||f||_p``."""
    d = curve.n
    chi = default_chi() if chi is None else chi
    N = default_grid(lam, d) if N is None else N
    if lam > N / 8:
        raise ScaleError(f"lambda={lam:g} exceeds a quarter of the Nyquist frequency {N / 2:g}")
    check_budget((N,) * d, buffers=4, budget=budget)
    fhat = bump_spectrum(d, N, lam, L, c)
    mu = mu_hat_lattice(curve, chi, d, N, L, radius=2 * lam, budget=budget)
    f = PeriodicField.from_spectrum(fhat, L)
    af_hat = fhat * mu
    del mu
    af = PeriodicField.from_spectrum(af_hat, L)
    fn = {p: lp_norm(f, p) for p in ps}
    an = {p: lp_norm(af, p) for p in ps}
    rng = np.random.default_rng(seed)
    s = rng.uniform(-0.5, 0.5, n_points)
    u = rng.standard_normal((n_points, d))
    u *= (rng.uniform(0, 1, n_points) ** (1.0 / d) / np.linalg.norm(u, axis=1))[:, None]
    pts = curve(s) + (c / lam) * u
    vals = _trig_eval(af_hat, pts, L)
    return BumpResult(lam, N, fn, an, {p: an[p] / fn[p] for p in ps}, float(lam * np.min(np.abs(vals))))


# ------------------------------------------------------------------ Wolff example


@dataclass
class WolffEnsemble:
    lam: float
    eps: float
    rho: float
    nus: np.ndarray
    centres: np.ndarray  # (#nu, d)
    N: int
    L: float
    spectrum: np.ndarray  # sum of g_nu_hat on the lattice
    labels: np.ndarray  # index of the ball each lattice point belongs to, -1 outside

    @property
    def radius(self) -> float:
        return self.rho * self.lam ** (1.0 / len(self.centres[0]))

    def field(self, signs: np.ndarray) -> PeriodicField:
        F = np.where(self.labels >= 0, self.spectrum * np.append(signs, 0.0)[self.labels], 0.0)
        return PeriodicField.from_spectrum(F, self.L)

    def piece(self, i: int) -> PeriodicField:
        return PeriodicField.from_spectrum(np.where(self.labels == i, self.spectrum, 0.0), self.L)


def index_window(lam: float, eps: float, n: int) -> np.ndarray:
    m = int(np.floor(eps * lam ** (1.0 / n) + 1e-12))
    return np.arange(-m, m + 1)


def wolff_ensemble(curve: Curve, lam: float, eps: float, rho: float, N: int, L: float = 2 * np.pi) -> WolffEnsemble:
    d = curve.n
    nus = index_window(lam, eps, d)
    centres = np.array([lam * worst_cone(curve, nu * lam ** (-1.0 / d), tau_max=max(0.3, eps)).xi for nu in nus])
    rad = rho * lam ** (1.0 / d)
    nyq = (2 * np.pi / L) * N / 2
    if np.max(np.abs(centres)) + rad >= nyq:
        raise ScaleError(f"ensemble reaches |xi|_inf = {np.max(np.abs(centres)) + rad:.4g} beyond Nyquist {nyq:g}")
    k = wavenumbers(N, L)
    eta = bump().dilate(2.0)  # 1 on |x| <= 1/2, 0 for |x| >= 1
    spec = np.zeros((N,) * d, dtype=complex)
    labels = np.full((N,) * d, -1, dtype=np.int32)
    step = 2 * np.pi / L
    for i, c in enumerate(centres):
        # lattice box around the centre, then the exact radial cutoff
        idx = []
        for ax in range(d):
            lo = int(np.ceil((c[ax] - rad) / step))
            hi = int(np.floor((c[ax] + rad) / step))
            idx.append(np.arange(lo, hi + 1) % N)
        box = np.ix_(*idx)
        r2 = sum(((k[idx[ax]] - c[ax]).reshape([-1 if j == ax else 1 for j in range(d)])) ** 2 for ax in range(d))
        vals = eta(np.sqrt(r2) / rad)
        live = vals > 0
        if np.any(live & (labels[box] >= 0)):
            raise ParameterError(f"balls overlap on the lattice at lambda={lam:g}; use a smaller rho than {rho}")
        sub = labels[box]
        sub[live] = i
        labels[box] = sub
        s2 = spec[box]
        s2[live] = vals[live]
        spec[box] = s2
    return WolffEnsemble(lam, eps, rho, nus, centres, N, L, spec, labels)


@dataclass
class WolffResult:
    lam: float
    count: int
    norms: np.ndarray  # ||g^omega||_p per trial
    moment: float  # (mean ||g^omega||_p^p)^{1/p}
    square_function: float | None


def wolff_example(
    curve: Curve,
    lam: float,
    eps: float = 0.3,
    rho: float = 0.4,
    p: float = 6.0,
    trials: int = 32,
    N: int = 4096,
    seed: int = 0,
    square_function: bool = False,
    budget: int | None = None,
) -> WolffResult:
    check_budget((N,) * curve.n, buffers=4, budget=budget)
    ens = wolff_ensemble(curve, lam, eps, rho, N)
    rng = np.random.default_rng([seed, int(lam)])
    norms = np.empty(trials)
    for t in range(trials):
        signs = rng.choice([-1.0, 1.0], size=len(ens.nus))
        norms[t] = lp_norm(ens.field(signs), p)
    sq = None
    if square_function:
        acc = np.zeros((N,) * curve.n)
        for i in range(len(ens.nus)):
            acc += np.abs(ens.piece(i).values) ** 2
        sq = lp_norm(PeriodicField(np.sqrt(acc), ens.L), p)
    moment = float(np.mean(norms**p) ** (1.0 / p))
    return WolffResult(lam, len(ens.nus), norms, moment, sq)


def wolff_exponent(results: Sequence[WolffResult]) -> SlopeFit:
    return exponent_fit([(np.log(r.lam), np.log(r.moment)) for r in results])


def wolff_target(n: int, p: float) -> float:
    return 1 - 1 / p + 1 / (2 * n)


def inversion_check(curve: Curve, ens: WolffEnsemble, signs: np.ndarray, chi=None, floor: float = 1e-6) -> float:
    """Relative l2 error of ``A f = g`` where ``f_hat = g_hat / mu_hat`` on the ensemble support."""
    chi = default_chi() if chi is None else chi
    d = curve.n
    rad = float(np.max(np.linalg.norm(ens.centres, axis=1))) + ens.radius + 1
    mu = mu_hat_lattice(curve, chi, d, ens.N, ens.L, radius=rad)
    ghat = np.where(ens.labels >= 0, ens.spectrum * np.append(signs, 0.0)[ens.labels], 0.0)
    supp = ghat != 0
    if np.min(np.abs(mu[supp])) < floor:
        raise ParameterError("multiplier falls below the inversion floor on the ensemble support")
    fhat = np.zeros_like(ghat)
    fhat[supp] = ghat[supp] / mu[supp]
    back = fhat * mu
    return float(np.linalg.norm(back - ghat) / np.linalg.norm(ghat))


# ------------------------------------------------------------------ separation


def separation_audit(curve: Curve, lam: float, eps: float) -> float:
    """``min |x^nu - x^nu'| lam^{1/n} / |nu - nu'|`` over distinct pairs; ``inf`` if fewer than two."""
    n = curve.n
    nus = index_window(lam, eps, n)
    xs = np.array([phi_and_xnu(curve, lam, int(nu), eps).x for nu in nus])
    best = np.inf
    for i in range(len(nus)):
        for j in range(i + 1, len(nus)):
            gap = np.linalg.norm(xs[i] - xs[j]) * lam ** (1.0 / n) / abs(nus[i] - nus[j])
            best = min(best, float(gap))
    return best
