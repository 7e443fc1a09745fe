"""Periodic-grid realisation of averaging operators and Fourier multipliers.

Fields live on the torus ``[0, L)^d`` sampled at ``x_j = j L / N``.  The
Fourier side is indexed in FFT order; lattice frequencies are
``2 pi k / L`` with ``k`` integer.  A multiplier ``m`` acts by
``ifftn(m * fftn(f))`` which is exact on the lattice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .cutoffs import SmoothCutoff, littlewood_paley
from .curves import Curve
from .oscillatory import SlopeFit, loglog_fit

DEFAULT_BUDGET = 2 * 1024**3
BUDGET_ENV = "CURVELAB_BUDGET_BYTES"


class ScaleError(ValueError):
    """Requested frequency scale does not fit on the lattice."""


class WrapError(ValueError):
    """Curve image leaves the fundamental cell of the torus."""


class MemoryBudgetError(MemoryError):
    def __init__(self, shape, required: int, budget: int, buffers: int):
        pts = int(np.prod(shape))
        msg = (
            f"grid {'x'.join(map(str, shape))} refused: one real float64 buffer is "
            f"{pts * 8 / 1e9:.1f} GB ({pts * 8 / 2**30:.1f} GiB); the operation needs "
            f"about {required / 2**30:.1f} GiB ({buffers} complex buffers) against a "
            f"budget of {budget / 2**30:.2f} GiB"
        )
        super().__init__(msg)
        self.shape = tuple(shape)
        self.required = required
        self.budget = budget


def budget_bytes(budget: int | None = None) -> int:
    if budget is not None:
        return int(budget)
    env = os.environ.get(BUDGET_ENV)
    return int(float(env)) if env else DEFAULT_BUDGET


def estimate_bytes(shape: Sequence[int], buffers: int = 1, itemsize: int = 8) -> int:
    return int(np.prod(shape)) * itemsize * buffers


def check_budget(shape: Sequence[int], buffers: int = 4, budget: int | None = None) -> int:
    """Raise ``MemoryBudgetError`` unless ``buffers`` complex arrays of ``shape`` fit."""
    cap = budget_bytes(budget)
    need = estimate_bytes(shape, buffers, itemsize=16)
    if need > cap:
        raise MemoryBudgetError(shape, need, cap, buffers)
    return need


# ------------------------------------------------------------------ fields


def wavenumbers(N: int, L: float = 2 * np.pi) -> np.ndarray:
    """Angular lattice frequencies along one axis, FFT order."""
    return (2 * np.pi / L) * np.fft.fftfreq(N, d=1.0 / N)


def frequency_axes(d: int, N: int, L: float = 2 * np.pi) -> list[np.ndarray]:
    """Sparse broadcastable frequency coordinates, one array per axis."""
    k = wavenumbers(N, L)
    out = []
    for i in range(d):
        shape = [1] * d
        shape[i] = N
        out.append(k.reshape(shape))
    return out


def frequency_norm(d: int, N: int, L: float = 2 * np.pi) -> np.ndarray:
    axes = frequency_axes(d, N, L)
    r2 = axes[0] ** 2
    for a in axes[1:]:
        r2 = r2 + a**2
    return np.sqrt(r2)


@dataclass
class PeriodicField:
    values: np.ndarray
    L: float = 2 * np.pi
    side: str = "physical"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.side not in ("physical", "frequency"):
            raise ValueError("side must be 'physical' or 'frequency'")
        sh = self.values.shape
        if len(set(sh)) != 1 or sh[0] & (sh[0] - 1):
            raise ValueError(f"expected a cube with power-of-two side, got {sh}")

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def cell_volume(self) -> float:
        return (self.L / self.N) ** self.d

    def to_frequency(self) -> "PeriodicField":
        if self.side == "frequency":
            return self
        return PeriodicField(sfft.fftn(self.values, workers=-1), self.L, "frequency")

    def to_physical(self) -> "PeriodicField":
        if self.side == "physical":
            return self
        return PeriodicField(sfft.ifftn(self.values, workers=-1), self.L, "physical")

    def coordinates(self) -> list[np.ndarray]:
        x = np.arange(self.N) * (self.L / self.N)
        out = []
        for i in range(self.d):
            shape = [1] * self.d
            shape[i] = self.N
            out.append(x.reshape(shape))
        return out

    @classmethod
    def from_function(cls, func: Callable, d: int, N: int, L: float = 2 * np.pi) -> "PeriodicField":
        x = np.arange(N) * (L / N)
        grids = np.meshgrid(*([x] * d), indexing="ij", sparse=True)
        vals = np.broadcast_to(func(*grids), (N,) * d)
        return cls(np.array(vals, dtype=complex), L)

    @classmethod
    def from_spectrum(cls, fhat: np.ndarray, L: float = 2 * np.pi) -> "PeriodicField":
        """Field whose continuous Fourier transform, sampled on the lattice, is ``fhat``.

        Uses ``f(x) = L^{-d} sum_k fhat(xi_k) exp(i <x, xi_k>)``, the periodisation
        of ``(2 pi)^{-d} int fhat(xi) exp(i <x, xi>) d xi``.
        """
        d, N = fhat.ndim, fhat.shape[0]
        vals = sfft.ifftn(fhat, workers=-1) * (N / L) ** d
        return cls(vals, L)

    def round_trip_error(self) -> float:
        back = sfft.ifftn(sfft.fftn(self.values, workers=-1), workers=-1)
        scale = np.max(np.abs(self.values)) or 1.0
        return float(np.max(np.abs(back - self.values)) / scale)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Trigonometric interpolation at arbitrary points; exact for lattice modes."""
        F = self.to_frequency().values / self.N**self.d
        axes = [wavenumbers(self.N, self.L)] * self.d
        pts = np.atleast_2d(points)
        out = np.empty(len(pts), dtype=complex)
        for i, x in enumerate(pts):
            acc = F
            # contract one axis at a time: cost N^d per point, then N^{d-1}, ...
            for ax, xi in enumerate(axes):
                acc = np.tensordot(np.exp(1j * xi * x[ax]), acc, axes=([0], [0]))
            out[i] = acc
        return out


def _as_physical(field: PeriodicField) -> PeriodicField:
    return field.to_physical()


def apply_multiplier(field: PeriodicField, m) -> PeriodicField:
    """``m(D) f``; ``m`` is an array on the lattice (FFT order) or a callable of the axes list."""
    if field.side != "physical":
        raise ValueError("apply_multiplier expects a physical-side field")
    F = sfft.fftn(field.values, workers=-1)
    if callable(m):
        m = m(frequency_axes(field.d, field.N, field.L))
    F *= m
    return PeriodicField(sfft.ifftn(F, workers=-1, overwrite_x=True), field.L)


def lp_norm(field: PeriodicField, p: float) -> float:
    vals = np.abs(field.to_physical().values)
    if np.isinf(p):
        return float(vals.max())
    if p == 2:
        return float(np.sqrt(np.sum(vals * vals) * field.cell_volume))
    m = vals.max()
    if m == 0:
        return 0.0
    # scale out the maximum so large exponents neither overflow nor underflow
    return float(m * (np.sum((vals / m) ** p) * field.cell_volume) ** (1.0 / p))


def l2_norm_frequency(field: PeriodicField) -> float:
    """Parseval: ``||f||_2`` computed from the DFT coefficients."""
    F = field.to_frequency().values
    N, d = field.N, field.d
    return float(np.sqrt(np.sum(np.abs(F) ** 2) / N**d * field.cell_volume))


def sobolev_norm(field: PeriodicField, p: float, alpha: float) -> float:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    w = (1.0 + frequency_norm(field.d, field.N, field.L) ** 2) ** (alpha / 2)
    return lp_norm(apply_multiplier(field.to_physical(), w), p)


# ------------------------------------------------------------------ mu_hat on the lattice


def _check_cell(curve: Curve, chi: SmoothCutoff, L: float) -> tuple[float, float]:
    lo, hi = chi.support
    s = np.linspace(lo, hi, 2001)
    ext = float(np.max(np.abs(curve(s))))
    if ext >= L / 2:
        raise WrapError(f"curve reaches |x|_inf = {ext:.3g}, outside the cell of half-width {L / 2:.3g}")
    return lo, hi


def _max_speed(curve: Curve, lo: float, hi: float) -> np.ndarray:
    s = np.linspace(lo, hi, 2001)
    return np.max(np.abs(curve.deriv(s, 1)), axis=0)


def _active_indices(N: int, L: float, radius: float | None) -> np.ndarray:
    k = wavenumbers(N, L)
    if radius is None:
        return np.arange(N)
    return np.flatnonzero(np.abs(k) <= radius + 1e-9)


def mu_hat_lattice(
    curve: Curve,
    chi: SmoothCutoff,
    d: int,
    N: int,
    L: float = 2 * np.pi,
    radius: float | None = None,
    budget: int | None = None,
    chunk_bytes: int = 64 * 1024**2,
) -> np.ndarray:
    """``mu_hat(xi) = int exp(-i <gamma(s), xi>) chi(s) ds`` at every lattice point.

    Frequencies with ``|xi| > radius`` are left at zero.  When ``gamma_1(s) = s``
    the integral over ``s`` at a fixed tail ``xi'`` is a Fourier coefficient of
    ``chi(s) exp(-i <gamma'(s), xi'>)`` on ``[-L/2, L/2)`` and all first
    coordinates are produced by one FFT; otherwise a composite Gauss rule is
    applied per frequency.
    """
    if curve.n != d:
        raise ValueError(f"curve dimension {curve.n} does not match grid dimension {d}")
    check_budget((N,) * d, buffers=1, budget=budget)
    lo, hi = _check_cell(curve, chi, L)
    speed = _max_speed(curve, lo, hi)
    k = wavenumbers(N, L)
    kmax = float(np.max(np.abs(k))) if radius is None else min(radius, float(np.max(np.abs(k))))
    act = _active_indices(N, L, radius)
    out = np.zeros((N,) * d, dtype=complex)
    if curve.first_coordinate_is_parameter:
        _mu_hat_fast(curve, chi, d, N, L, k, kmax, act, speed, out, chunk_bytes, radius)
    else:
        _mu_hat_gauss(curve, chi, d, N, L, k, kmax, act, speed, out, chunk_bytes, radius, lo, hi)
    return out


def _tail_grid(d, k, act):
    idx = np.array(np.meshgrid(*([act] * (d - 1)), indexing="ij")).reshape(d - 1, -1).T
    return idx, k[idx]


def _mu_hat_fast(curve, chi, d, N, L, k, kmax, act, speed, out, chunk_bytes, radius):
    band = kmax * float(np.sum(speed[1:])) * L / (2 * np.pi)
    need = 2 * (kmax * L / (2 * np.pi) + band) + 512
    M = 1 << int(np.ceil(np.log2(need)))
    s = -L / 2 + np.arange(M) * (L / M)
    w = chi(s)
    rest = curve(s)[:, 1:]  # (M, d-1)
    k1 = np.rint(k * L / (2 * np.pi)).astype(int)
    sel = act
    # exp(-i k1 s_m) = (-1)^k1 exp(-2 pi i k1 m / M) with s_m = -L/2 + m L/M
    sign = np.where(k1[sel] % 2 == 0, 1.0, -1.0) * (L / M)
    idx, tails = _tail_grid(d, k, act)
    if radius is not None:
        keep = np.sum(tails**2, axis=1) <= radius**2 + 1e-9
        idx, tails = idx[keep], tails[keep]
    rows = max(1, chunk_bytes // (16 * M))
    for start in range(0, len(idx), rows):
        t = tails[start : start + rows]
        h = w[None, :] * np.exp(-1j * (t @ rest.T))
        H = sfft.fft(h, axis=1, workers=-1)
        vals = H[:, k1[sel] % M] * sign[None, :]
        for r, ii in enumerate(idx[start : start + rows]):
            out[(slice(None),) + tuple(ii)][sel] = vals[r]
    if radius is not None:
        out *= frequency_norm(d, N, L) <= radius + 1e-9


@lru_cache(maxsize=None)
def _gauss(m):
    return np.polynomial.legendre.leggauss(m)


def _mu_hat_gauss(curve, chi, d, N, L, k, kmax, act, speed, out, chunk_bytes, radius, lo, hi):
    band = kmax * float(np.sum(speed))
    panels = max(32, int(np.ceil((hi - lo) * band / (2 * np.pi))) + 1)
    x, wq = _gauss(20)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    s = (edges[:-1, None] + half * (x[None, :] + 1)).ravel()
    w = (half * wq[None, :]).ravel() * chi(s)
    pts = curve(s)  # (M, d)
    grids = np.meshgrid(*([act] * d), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    xi = k[idx]
    if radius is not None:
        keep = np.sum(xi**2, axis=1) <= radius**2 + 1e-9
        idx, xi = idx[keep], xi[keep]
    rows = max(1, chunk_bytes // (16 * len(s)))
    for start in range(0, len(idx), rows):
        ph = xi[start : start + rows] @ pts.T
        vals = np.exp(-1j * ph) @ w
        out[tuple(idx[start : start + rows].T)] = vals


# ------------------------------------------------------------------ averaging operator


def averaging_operator(
    curve: Curve,
    chi: SmoothCutoff,
    field: PeriodicField,
    backend: str = "multiplier",
    mu: np.ndarray | None = None,
    order: int = 3,
    budget: int | None = None,
    nodes: int = 10,
    min_panels: int = 8,
) -> PeriodicField:
    """``A f(x) = int f(x - gamma(s)) chi(s) ds`` on the torus.

    ``backend="multiplier"`` multiplies by ``mu_hat`` on the lattice.
    ``backend="direct"`` sums over Gauss nodes in ``s`` with periodic spline
    interpolation of ``f`` of the given order.
    """
    if field.side != "physical":
        raise ValueError("averaging_operator expects a physical-side field")
    if backend == "multiplier":
        if mu is None:
            mu = mu_hat_lattice(curve, chi, field.d, field.N, field.L, budget=budget)
        return apply_multiplier(field, mu)
    if backend != "direct":
        raise ValueError(f"unknown backend {backend!r}")
    lo, hi = _check_cell(curve, chi, field.L)
    check_budget(field.values.shape, buffers=6, budget=budget)
    F = sfft.fftn(field.values, workers=-1)
    mag = np.abs(F)
    live = mag > 1e-13 * mag.max()
    kmax = float(np.max(frequency_norm(field.d, field.N, field.L)[live])) if live.any() else 0.0
    band = kmax * float(np.linalg.norm(_max_speed(curve, lo, hi)))
    panels = max(min_panels, int(np.ceil((hi - lo) * band / (2 * np.pi))))
    x, wq = _gauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    s = (edges[:-1, None] + half * (x[None, :] + 1)).ravel()
    w = (half * wq[None, :]).ravel() * chi(s)
    keep = w != 0
    s, w = s[keep], w[keep]
    h = field.L / field.N
    base = np.indices(field.values.shape, dtype=float)
    shifts = curve(s) / h
    out = np.zeros(field.values.shape, dtype=complex)
    parts = [field.values.real, field.values.imag]
    coeffs = [ndimage.spline_filter(p, order=order, mode="grid-wrap") if order > 1 else p for p in parts]
    coords = np.empty_like(base)
    for wi, sh in zip(w, shifts):
        for ax in range(field.d):
            coords[ax] = base[ax] - sh[ax]
        re = ndimage.map_coordinates(coeffs[0], coords, order=order, mode="grid-wrap", prefilter=False)
        im = ndimage.map_coordinates(coeffs[1], coords, order=order, mode="grid-wrap", prefilter=False)
        out += wi * (re + 1j * im)
    return PeriodicField(out, field.L)


def relative_l2(a: PeriodicField, b: PeriodicField) -> float:
    den = np.linalg.norm(b.values)
    return float(np.linalg.norm(a.values - b.values) / (den if den else 1.0))


def random_band_limited(d: int, N: int, kmax: float, seed: int = 0, L: float = 2 * np.pi) -> PeriodicField:
    """Complex Gaussian lattice coefficients on ``|xi| <= kmax``."""
    rng = np.random.default_rng(seed)
    shape = (N,) * d
    F = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    F *= frequency_norm(d, N, L) <= kmax
    return PeriodicField(sfft.ifftn(F, workers=-1), L)


# ------------------------------------------------------------------ dyadic probes


def check_band(k: int, N: int, L: float = 2 * np.pi) -> None:
    """The band centre ``2^k`` must not exceed the lattice Nyquist frequency."""
    nyq = (2 * np.pi / L) * N / 2
    if 2.0**k > nyq:
        raise ScaleError(f"band 2^{k} = {2.0**k:g} exceeds the Nyquist frequency {nyq:g} of an N={N} grid")


@dataclass
class OperatorProbeReport:
    k: int
    p: float
    families: dict[str, list[float]] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)

    @property
    def maxima(self) -> dict[str, float]:
        return {name: max(v) for name, v in self.families.items() if v}

    @property
    def max_ratio(self) -> float:
        return max(self.maxima.values())


PROBE_DESCRIPTIONS = {
    "random": "complex Gaussian lattice coefficients times beta^k",
    "bump": "frequency-localised bump at lambda = 2^k",
    "focusing": "beta^k times the conjugate multiplier, focusing at the origin",
}


def dyadic_operator_probe(
    curve: Curve,
    chi: SmoothCutoff,
    k: int,
    p: float,
    N: int,
    probes: Sequence[str] = ("random", "bump", "focusing"),
    n_random: int = 4,
    seed: int = 0,
    L: float = 2 * np.pi,
    mu: np.ndarray | None = None,
    budget: int | None = None,
) -> OperatorProbeReport:
    """Ratios ``||beta^k(D) A f||_p / ||f||_p`` over a family of test fields."""
    d = curve.n
    check_band(k, N, L)
    check_budget((N,) * d, buffers=5, budget=budget)
    radius = 2.0 ** (k + 1)
    if mu is None:
        mu = mu_hat_lattice(curve, chi, d, N, L, radius=radius, budget=budget)
    r = frequency_norm(d, N, L)
    beta = littlewood_paley(k)(r)
    del r
    mult = beta * mu
    rep = OperatorProbeReport(k, p)
    rng = np.random.default_rng([seed, k])

    def ratio(fhat):
        f = PeriodicField(sfft.ifftn(fhat, workers=-1), L)
        num = PeriodicField(sfft.ifftn(fhat * mult, workers=-1), L)
        return lp_norm(num, p) / lp_norm(f, p)

    for name in probes:
        vals = []
        if name == "random":
            for _ in range(n_random):
                F = (rng.standard_normal(mu.shape) + 1j * rng.standard_normal(mu.shape)) * beta
                vals.append(ratio(F))
        elif name == "bump":
            from .sharpness import bump_spectrum

            vals.append(ratio(bump_spectrum(d, N, 2.0**k, L)))
        elif name == "focusing":
            vals.append(ratio(beta * np.conj(mu)))
        else:
            raise ValueError(f"unknown probe family {name!r}")
        rep.families[name] = vals
        rep.descriptions[name] = PROBE_DESCRIPTIONS[name]
    return rep


def probe_slope(reports: Sequence[OperatorProbeReport]) -> SlopeFit:
    """Slope of ``log max ratio`` against ``log 2^k``; needs at least 4 bands."""
    lam = np.array([2.0**r.k for r in reports])
    vals = np.array([r.max_ratio for r in reports])
    return loglog_fit(lam, vals)
