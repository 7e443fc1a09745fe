"""Slabs, cone-generating tuples, plates and empirical decoupling ratios.

A non-degenerate curve in ``R^n`` with Frenet frame ``e_1..e_n`` generates, for
each ``2 <= d <= n-1``, a tuple of curves ``g_{d+1}..g_n`` into ``R^d``.  They
are read off from ``[e_{d+1} .. e_n](s) A(s)``, where ``A(s)`` inverts the
lower-right block of the frame, so the columns take the form
``G_j(s) = (g_j(s), 0) + e_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import fft as sfft

from .curves import Curve, DegeneracyError, frenet_frames
from .decomposition import FrenetBox
from .grid import PeriodicField, ScaleError, check_budget, lp_norm, wavenumbers
from .oscillatory import SlopeFit, loglog_fit

TupleFn = Callable[[np.ndarray, int], np.ndarray]  # (m,) -> (m, d, n - d)


def _scaled_columns(mats: np.ndarray, r: float) -> np.ndarray:
    d = mats.shape[-1]
    return mats * (r ** np.arange(1, d + 1))[None, :]


# ------------------------------------------------------------------ slabs


@dataclass(frozen=True)
class Slab:
    """``alpha(s; r) = g(s) + [g]_{s,r}([-2, 2]^d)`` for a curve ``g`` in ``R^d``."""

    curve: Curve
    s: float
    r: float

    @property
    def matrix(self) -> np.ndarray:
        return _scaled_columns(self.curve.derivative_matrix(self.s), self.r)

    def coords(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.linalg.solve(self.matrix, (xi - self.curve.point(self.s)).T).T

    def contains(self, xi, slack: float = 1.0) -> np.ndarray:
        return np.max(np.abs(self.coords(xi)), axis=1) <= 2 * slack

    def scale_needed(self, xi) -> np.ndarray:
        """Smallest ``C`` with each point in ``alpha(s; C r)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        v = np.abs(np.linalg.solve(self.curve.derivative_matrix(self.s), (xi - self.curve.point(self.s)).T).T)
        j = np.arange(1, v.shape[1] + 1)
        return np.max((v / 2) ** (1.0 / j), axis=1) / self.r

    def corners(self) -> np.ndarray:
        d = self.curve.n
        cube = np.array(np.meshgrid(*([[-2.0, 2.0]] * d), indexing="ij")).reshape(d, -1).T
        return self.curve.point(self.s) + cube @ self.matrix.T


# ------------------------------------------------------------------ cone tuples


@dataclass(frozen=True)
class ConeTuple:
    """Curves ``g_{d+1}..g_n`` into ``R^d``; ``g(s, j)`` has shape ``(m, d, n - d)``."""

    n: int
    d: int
    g_fn: TupleFn
    interval: tuple[float, float]
    source: dict = field(default_factory=dict)

    def g(self, s, order: int = 0) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.g_fn(s, order)

    def g_a(self, a, s, order: int = 0) -> np.ndarray:
        return self.g(s, order) @ np.asarray(a, dtype=float)

    def derivative_matrix(self, a, s: float) -> np.ndarray:
        """``[g_a]_s`` with columns ``g_a^(j)(s)``, ``j = 1..d``."""
        return np.column_stack([self.g_a(a, s, j)[0] for j in range(1, self.d + 1)])

    def matrix(self, a, s: float, r: float = 1.0) -> np.ndarray:
        return _scaled_columns(self.derivative_matrix(a, s), r)

    def curve(self, a) -> Curve:
        a = np.asarray(a, dtype=float)

        def deriv(s, j):
            return self.g(s, j) @ a

        return Curve(self.d, deriv, self.interval, "cone-tuple-combination", {"a": a.tolist()})

    def cone_point(self, a, s: float) -> np.ndarray:
        """``Gamma(a, s) = sum_j a_j G_j(s) = (g_a(s), a)``."""
        return np.concatenate([self.g_a(a, s)[0], np.asarray(a, dtype=float)])

    def min_abs_det(self, a, s_grid) -> float:
        return float(min(abs(np.linalg.det(self.derivative_matrix(a, s))) for s in np.atleast_1d(s_grid)))

    def rescale(self, a, b: float, rho: float) -> "ConeTuple":
        """``g_{a,b,rho}(t) = [g_a]_{b,rho}^{-1} (g(b + rho t) - g(b))`` with chain-rule derivatives."""
        if rho <= 0:
            raise ValueError("rho must be positive")
        M = self.matrix(a, b, rho)
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > 1e12:
            raise DegeneracyError(b, cond)
        Minv = np.linalg.inv(M)
        gb = self.g(b)[0]
        parent = self.g_fn

        def g_fn(t, j):
            vals = parent(b + rho * t, j)
            if j == 0:
                vals = vals - gb[None]
            return rho**j * np.einsum("ik,mkl->mil", Minv, vals)

        lo, hi = self.interval
        src = {"parent": self.source, "a": list(map(float, a)), "b": b, "rho": rho}
        return ConeTuple(self.n, self.d, g_fn, ((lo - b) / rho, (hi - b) / rho), src)


def admissible_weights(a, d: int, n: int) -> bool:
    """Membership in ``R'_{n,d}``: ``1/4 <= a_{d+1} <= 2`` and ``|a_j| <= 2`` otherwise."""
    a = np.asarray(a, dtype=float)
    return a.shape == (n - d,) and 0.25 <= a[0] <= 2 and bool(np.all(np.abs(a[1:]) <= 2))


def frame_tuple_values(curve: Curve, d: int, s, cond_cap: float = 1e8) -> np.ndarray:
    """``g(s)`` from the frame: top block of ``[e_{d+1}..e_n]`` times the inverse bottom block."""
    E = frenet_frames(curve, s)
    top, bot = E[:, :d, d:], E[:, d:, d:]
    conds = np.linalg.cond(bot)
    bad = ~np.isfinite(conds) | (conds > cond_cap)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegeneracyError(float(np.atleast_1d(s)[i]), float(conds[i]))
    return top @ np.linalg.inv(bot)


def cone_tuple_from_curve(
    curve: Curve,
    d: int,
    interval: tuple[float, float] = (-0.25, 0.25),
    degree: int = 48,
    margin: float = 0.2,
) -> ConeTuple:
    """Cone tuple of ``curve`` on ``interval``.

    The frame-derived values are interpolated at Chebyshev points of a
    slightly enlarged interval; derivatives come from the interpolant.
    """
    n = curve.n
    if not 2 <= d <= n - 1:
        raise ValueError(f"need 2 <= d <= n-1, got d={d}, n={n}")
    lo, hi = interval
    pad = margin * (hi - lo)
    a, b = lo - pad, hi + pad
    nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
    s = 0.5 * (a + b) + 0.5 * (b - a) * nodes
    vals = frame_tuple_values(curve, d, s).reshape(len(s), -1)
    coef = C.chebfit(nodes, vals, degree)  # (degree+1, d*(n-d))
    derivs = [coef]
    for _ in range(d + 2):
        derivs.append(C.chebder(derivs[-1]) * (2.0 / (b - a)))

    def g_fn(t, j):
        if j > d + 2:
            raise ValueError(f"derivative order {j} not available")
        u = (2 * t - (a + b)) / (b - a)
        return C.chebval(u, derivs[j]).T.reshape(len(t), d, n - d)

    return ConeTuple(n, d, g_fn, interval, {"curve": curve.kind, "params": dict(curve.params), "d": d})


def reparametrisation_residual(curve: Curve, tup: ConeTuple, lams: np.ndarray, s: np.ndarray) -> float:
    """``max |Gamma(E_bot(s) lam, s) - sum_j lam_j e_j(s)|`` over paired samples."""
    d = tup.d
    E = frenet_frames(curve, s)
    worst = 0.0
    for lam, Ei, si in zip(lams, E, s):
        a = Ei[d:, d:] @ lam
        worst = max(worst, float(np.max(np.abs(tup.cone_point(a, si) - Ei[:, d:] @ lam))))
    return worst


# ------------------------------------------------------------------ Lorentz rescaling


@dataclass(frozen=True)
class LorentzResidual:
    matrix: float  # the d x d identity between scaled derivative matrices
    offset: float  # the d x (n-d) identity between tuple values


def _rel(lhs, rhs, *terms) -> float:
    scale = max([np.max(np.abs(rhs))] + [np.max(np.abs(t)) for t in terms] + [1e-300])
    return float(np.max(np.abs(lhs - rhs)) / scale)


def lorentz_identity_check(tup: ConeTuple, a, b: float, rho: float, s: float, r: float) -> LorentzResidual:
    if not 0 < r <= rho <= 1:
        raise ValueError("need 0 < r <= rho <= 1")
    res = tup.rescale(a, b, rho)
    u, h = (s - b) / rho, r / rho
    M = tup.matrix(a, b, rho)
    lhs5 = M @ res.matrix(a, u, h)
    rhs5 = tup.matrix(a, s, r)
    inner = res.g(u)[0]
    lhs6 = M @ inner + tup.g(b)[0]
    rhs6 = tup.g(s)[0]
    return LorentzResidual(_rel(lhs5, rhs5), _rel(lhs6, rhs6, M @ inner, tup.g(b)[0]))


# ------------------------------------------------------------------ plates


@dataclass(frozen=True)
class Plate:
    """``theta(s; r) = [g]_{a,s,r}([-2, 2]^n)`` intersected with ``Q(a, 1/K)``."""

    tup: ConeTuple
    a: tuple
    s: float
    r: float
    K: float = 1.0

    @property
    def matrix(self) -> np.ndarray:
        n, d = self.tup.n, self.tup.d
        out = np.zeros((n, n))
        out[:d, :d] = self.tup.matrix(self.a, self.s, self.r)
        out[:d, d:] = self.tup.g(self.s)[0]
        out[d:, d:] = np.eye(n - d)
        return out

    def coords(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.linalg.solve(self.matrix, xi.T).T

    def in_cube(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        d = self.tup.d
        return np.all(np.abs(xi[:, d:] - np.asarray(self.a)[None, :]) <= 1.0 / self.K, axis=1)

    def required_slack(self, xi) -> np.ndarray:
        return np.max(np.abs(self.coords(xi)), axis=1) / 2

    def contains(self, xi, slack: float = 1.0) -> np.ndarray:
        return (self.required_slack(xi) <= slack) & self.in_cube(xi)

    def sample(self, m: int, rng) -> np.ndarray:
        """Uniform preimage samples: ``eta' in [-2,2]^d``, ``eta_j`` within ``1/K`` of ``a_j``."""
        d, n = self.tup.d, self.tup.n
        a = np.asarray(self.a, dtype=float)
        eta = np.empty((m, n))
        eta[:, :d] = rng.uniform(-2, 2, (m, d))
        lo = np.maximum(a - 1.0 / self.K, -2.0)
        hi = np.minimum(a + 1.0 / self.K, 2.0)
        eta[:, d:] = rng.uniform(lo, hi, (m, n - d))
        return eta @ self.matrix.T

    def corners(self) -> np.ndarray:
        n = self.tup.n
        cube = np.array(np.meshgrid(*([[-2.0, 2.0]] * n), indexing="ij")).reshape(n, -1).T
        return cube @ self.matrix.T


def net(interval: tuple[float, float], r: float) -> np.ndarray:
    lo, hi = interval
    i0, i1 = int(np.ceil(lo / r - 1e-12)), int(np.floor(hi / r + 1e-12))
    return np.arange(i0, i1 + 1) * r


def plate_decomposition(tup: ConeTuple, a, K: float, r: float) -> list[Plate]:
    if K < 1 or not 0 < r <= 1:
        raise ValueError("need K >= 1 and 0 < r <= 1")
    a = tuple(float(x) for x in a)
    return [Plate(tup, a, float(s), r, K) for s in net(tup.interval, r)]


def projection_constant(plate: Plate, m: int = 2000, seed: int = 0) -> float:
    """Smallest ``C`` with ``proj_d`` of the sampled plate members inside ``alpha(g_a; s; C r)``."""
    rng = np.random.default_rng(seed)
    xi = plate.sample(m, rng)
    slab = Slab(plate.tup.curve(plate.a), plate.s, plate.r)
    return float(np.max(slab.scale_needed(xi[:, : plate.tup.d])))


# ------------------------------------------------------------------ decoupling


def frenet_boxes(curve: Curve, r: float, scale: float, interval=(-0.25, 0.25), d: int = 2) -> list[FrenetBox]:
    return [FrenetBox(curve, d, float(s), r, scale) for s in net(interval, r)]


def _frenet_corners(box: FrenetBox) -> np.ndarray:
    n, d, r = box.curve.n, box.d, box.r
    hi = [r ** (d + 1 - j) for j in range(1, d + 1)] + [1.0] + [box.tail] * (n - d - 1)
    lo = [-h for h in hi]
    lo[d] = 0.5
    cube = np.array(np.meshgrid(*[[l, h] for l, h in zip(lo, hi)], indexing="ij")).reshape(n, -1).T
    return box.scale * cube @ box.frame.T


def region_corners(region) -> np.ndarray:
    if isinstance(region, FrenetBox):
        return _frenet_corners(region)
    return region.corners()


def lattice_points(d: int, N: int, L: float = 2 * np.pi) -> np.ndarray:
    k = wavenumbers(N, L)
    return np.stack(np.meshgrid(*([k] * d), indexing="ij"), axis=-1).reshape(-1, d)


@dataclass
class DecouplingResult:
    regions: int
    excluded: list[int]
    p: float
    ratio_lp: np.ndarray  # per trial, Gaussian coefficients
    ratio_l2: np.ndarray
    focusing_lp: float | None
    focusing_l2: float | None
    notes: list[str] = field(default_factory=list)

    @property
    def trivial_lp(self) -> float:
        return self.regions ** (1 - 1 / self.p)

    @property
    def trivial_l2(self) -> float:
        return self.regions**0.5

    def max_gaussian_l2(self) -> float:
        return float(np.max(self.ratio_l2))

    def max_l2(self) -> float:
        vals = list(self.ratio_l2) + ([self.focusing_l2] if self.focusing_l2 is not None else [])
        return float(max(vals))

    def max_lp(self) -> float:
        vals = list(self.ratio_lp) + ([self.focusing_lp] if self.focusing_lp is not None else [])
        return float(max(vals))


def _slack(region, pts) -> np.ndarray:
    if isinstance(region, Slab):
        return np.max(np.abs(region.coords(pts)), axis=1) / 2
    if isinstance(region, Plate):
        return np.where(region.in_cube(pts), region.required_slack(pts), np.inf)
    return np.asarray(region.required_slack(pts))


def region_masks(
    regions: Sequence, d: int, N: int, L: float = 2 * np.pi, partition: bool = True
) -> tuple[list[np.ndarray], list[int]]:
    """Lattice masks of the regions; empty regions are reported by index.

    A lattice point belongs to a region when its membership test passes.  With
    ``partition=True`` a point passing several tests is kept only by the region
    where it sits deepest (smallest slack, ties to the lower index), so the
    masks are disjoint.
    """
    nyq = (2 * np.pi / L) * (N // 2 - 1)
    pts = lattice_points(d, N, L)
    slacks = []
    for i, reg in enumerate(regions):
        ext = float(np.max(np.abs(region_corners(reg))))
        if ext > nyq + 1e-9:
            raise ScaleError(f"region {i} reaches |xi|_inf = {ext:.4g}, beyond the lattice bound {nyq:g}")
        slacks.append(_slack(reg, pts))
    slacks = np.array(slacks)
    inside = slacks <= 1.0
    if partition and len(regions) > 1:
        best = np.argmin(np.where(inside, slacks, np.inf), axis=0)
        inside &= best[None, :] == np.arange(len(regions))[:, None]
    masks, excluded = [], []
    for i, m in enumerate(inside):
        if not m.any():
            excluded.append(i)
            continue
        masks.append(m.reshape((N,) * d))
    return masks, excluded


def decoupling_constant_estimate(
    regions: Sequence,
    ps: Sequence[float] | float,
    N: int,
    trials: int = 32,
    focusing: bool = True,
    seed: int = 0,
    L: float = 2 * np.pi,
    budget: int | None = None,
    partition: bool = True,
) -> dict[float, DecouplingResult]:
    """Ratios ``||sum f_R||_p / (sum ||f_R||_p^q)^{1/q}`` for ``q = p`` and ``q = 2``.

    Each ``f_R`` has independent standard complex Gaussian coefficients on the
    lattice points of ``R``; the focusing trial uses all-ones coefficients.
    Regions containing no lattice point are excluded; see ``region_masks``
    for how shared lattice points are assigned.
    """
    ps = [float(ps)] if np.isscalar(ps) else [float(p) for p in ps]
    if min(ps) < 2:
        raise ValueError("p must be at least 2")
    d = len(np.asarray(region_corners(regions[0]))[0])
    check_budget((N,) * d, buffers=4, budget=budget)
    masks, excluded = region_masks(regions, d, N, L, partition)
    notes = [f"region {i} has no lattice point and is excluded" for i in excluded]
    rng = np.random.default_rng(seed)
    shape = (N,) * d

    def run(coeff_fn):
        total = np.zeros(shape, dtype=complex)
        norms = {p: [] for p in ps}
        for m in masks:
            F = np.where(m, coeff_fn(), 0)
            f = sfft.ifftn(F, workers=-1)
            total += f
            fld = PeriodicField(f, L)
            for p in ps:
                norms[p].append(lp_norm(fld, p))
        tot = PeriodicField(total, L)
        out = {}
        for p in ps:
            big = lp_norm(tot, p)
            v = np.asarray(norms[p])
            out[p] = (big / np.sum(v**p) ** (1 / p), big / np.sqrt(np.sum(v**2)))
        return out

    gauss = [run(lambda: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)) for _ in range(trials)]
    foc = run(lambda: np.ones(shape)) if focusing else None
    results = {}
    for p in ps:
        results[p] = DecouplingResult(
            len(masks),
            excluded,
            p,
            np.array([g[p][0] for g in gauss]),
            np.array([g[p][1] for g in gauss]),
            foc[p][0] if foc else None,
            foc[p][1] if foc else None,
            list(notes),
        )
    return results


def decoupling_exponent(rs: Sequence[float], ratios: Sequence[float]) -> SlopeFit:
    """Slope of ``log R`` against ``log(1/r)``."""
    return loglog_fit(1.0 / np.asarray(rs, dtype=float), np.asarray(ratios, dtype=float))
