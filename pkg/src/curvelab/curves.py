"""Curves with analytic derivatives, Frenet frames and rescaling matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np


class DegeneracyError(ValueError):
    """Raised when ``[gamma]_s`` is numerically singular."""

    def __init__(self, s, cond):
        super().__init__(f"derivative matrix is near-singular at s={s!r} (cond={cond:.3g})")
        self.s = s
        self.cond = cond


class CurveDomainError(ValueError):
    pass


DerivFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class Curve:
    """A smooth curve ``[a, b] -> R^n``.

    ``deriv(s, j)`` takes an array of parameters of shape ``(m,)`` and
    returns the ``j``-th derivative as an array of shape ``(m, n)``.
    Derivatives must be available for ``0 <= j <= n + 1``.
    """

    n: int
    deriv_fn: DerivFn
    domain: tuple[float, float] = (-1.0, 1.0)
    kind: str = "user-defined"
    params: dict = field(default_factory=dict)
    # True when gamma_1(s) = s identically; enables the fast grid multiplier
    first_coordinate_is_parameter: bool = False

    def deriv(self, s, j: int = 0) -> np.ndarray:
        if j < 0 or j > self.n + 1:
            raise ValueError(f"derivative order {j} outside 0..{self.n + 1}")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.asarray(self.deriv_fn(s, j), dtype=float).reshape(s.size, self.n)

    def __call__(self, s) -> np.ndarray:
        return self.deriv(s, 0)

    def point(self, s: float, j: int = 0) -> np.ndarray:
        return self.deriv(np.array([s]), j)[0]

    def derivative_matrix(self, s: float) -> np.ndarray:
        """``[gamma]_s`` with columns ``gamma^(1)(s), ..., gamma^(n)(s)``."""
        return np.column_stack([self.point(s, j) for j in range(1, self.n + 1)])

    def derivative_matrices(self, s: np.ndarray) -> np.ndarray:
        """Batched ``[gamma]_s``; shape ``(m, n, n)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.stack([self.deriv(s, j) for j in range(1, self.n + 1)], axis=-1)


def _moment_deriv(n: int) -> DerivFn:
    def deriv(s, j):
        out = np.zeros((s.size, n))
        for i in range(1, n + 1):
            p = i - j
            if p >= 0:
                out[:, i - 1] = s**p / factorial(p)
        return out

    return deriv


def moment_curve(n: int) -> Curve:
    """The moment curve ``(s, s^2/2, ..., s^n/n!)``."""
    if n < 2:
        raise ValueError(f"invalid dimension n={n}; need n >= 2")
    return Curve(n, _moment_deriv(n), (-1.0, 1.0), "moment", {"n": n}, True)


def _sine_deriv(s, j, freq, phase):
    # d^j/ds^j sin(w s + phi) = w^j sin(w s + phi + j pi / 2)
    return freq**j * np.sin(freq * s + phase + j * np.pi / 2)


def perturbed_moment_curve(
    n: int,
    amplitude: float,
    direction: Sequence[float] | None = None,
    freq: float = 1.0,
    phase: float = 0.0,
    normalized: bool = True,
) -> Curve:
    """Moment curve plus ``amplitude * q(s) * direction``.

    ``q(s) = sin(freq s + phase)``; when ``normalized`` the Taylor polynomial of
    ``q`` of degree ``n`` at 0 is subtracted, so ``gamma^(j)(0) = e_j`` still
    holds for ``1 <= j <= n`` and the curve lies in the model class for small
    amplitude.
    """
    if n < 2:
        raise ValueError(f"invalid dimension n={n}; need n >= 2")
    if direction is None:
        direction = np.zeros(n)
        direction[-1] = 1.0
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (n,):
        raise ValueError("direction must have length n")
    base = _moment_deriv(n)
    taylor = [_sine_deriv(np.zeros(1), m, freq, phase)[0] for m in range(n + 1)]

    def q(s, j):
        val = _sine_deriv(s, j, freq, phase)
        if normalized:
            # subtract d^j/ds^j sum_{m<=n} c_m s^m / m!
            for m in range(j, n + 1):
                val = val - taylor[m] * s ** (m - j) / factorial(m - j)
        return val

    def deriv(s, j):
        return base(s, j) + amplitude * q(s, j)[:, None] * direction[None, :]

    params = {
        "n": n,
        "amplitude": amplitude,
        "direction": direction.tolist(),
        "freq": freq,
        "phase": phase,
        "normalized": normalized,
    }
    flat = direction[0] == 0.0
    return Curve(n, deriv, (-1.0, 1.0), "perturbed-moment", params, bool(flat))


def polynomial_curve(coeffs: np.ndarray, domain=(-1.0, 1.0)) -> Curve:
    """Curve whose i-th coordinate is ``sum_m coeffs[i, m] s^m``."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[0]
    polys = [np.polynomial.Polynomial(c) for c in coeffs]

    def deriv(s, j):
        return np.column_stack([p.deriv(j)(s) if j else p(s) for p in polys])

    flat = np.allclose(coeffs[0], np.eye(1, coeffs.shape[1], 1)[0])
    return Curve(n, deriv, tuple(domain), "user-defined", {"coeffs": coeffs.tolist()}, bool(flat))


def curve_from_spec(spec: dict) -> Curve:
    """Build a curve from a config dict with a ``kind`` tag."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("curve spec: missing field 'kind'")
    kind = spec["kind"]
    if kind == "moment":
        if "n" not in spec:
            raise ValueError("curve spec: missing field 'n'")
        return moment_curve(int(spec["n"]))
    if kind == "perturbed-moment":
        for key in ("n", "amplitude"):
            if key not in spec:
                raise ValueError(f"curve spec: missing field '{key}'")
        return perturbed_moment_curve(
            int(spec["n"]),
            float(spec["amplitude"]),
            spec.get("direction"),
            float(spec.get("freq", 1.0)),
            float(spec.get("phase", 0.0)),
            bool(spec.get("normalized", True)),
        )
    if kind == "polynomial":
        if "coeffs" not in spec:
            raise ValueError("curve spec: missing field 'coeffs'")
        return polynomial_curve(np.asarray(spec["coeffs"]))
    raise ValueError(f"curve spec: unknown kind {kind!r} in field 'kind'")


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True)
class RescalingMatrices:
    gamma_sigma: np.ndarray
    d_lambda: np.ndarray
    gamma_sigma_lambda: np.ndarray


def dilation_matrix(lam: float, n: int) -> np.ndarray:
    """``D_lambda = diag(lambda, lambda^2, ..., lambda^n)``."""
    return np.diag(lam ** np.arange(1, n + 1, dtype=float))


def rescaling_matrices(curve: Curve, sigma: float, lam: float) -> RescalingMatrices:
    g = curve.derivative_matrix(sigma)
    d = dilation_matrix(lam, curve.n)
    # scaling the columns is exact: each product is a single multiplication
    return RescalingMatrices(g, d, g * np.diag(d)[None, :])


def rescale(curve: Curve, sigma: float, lam: float, strict: bool = True) -> Curve:
    """The ``(sigma, lambda)``-rescaling ``[gamma]_{s,l}^{-1}(gamma(s + l t) - gamma(s))``.

    With ``strict=False`` the interval check is skipped; useful when the parent
    derivative evaluator extends past its nominal domain (polynomial or
    trigonometric curves) and only pointwise quantities are needed.
    """
    a, b = curve.domain
    if lam <= 0:
        raise CurveDomainError("lambda must be positive")
    if strict and (sigma - lam < a - 1e-15 or sigma + lam > b + 1e-15):
        raise CurveDomainError(f"[{sigma - lam}, {sigma + lam}] not inside domain {curve.domain}")
    mats = rescaling_matrices(curve, sigma, lam)
    cond = np.linalg.cond(mats.gamma_sigma)
    if not np.isfinite(cond) or cond > 1e8:
        raise DegeneracyError(sigma, cond)
    minv = np.linalg.inv(mats.gamma_sigma_lambda)
    g0 = curve.point(sigma)

    def deriv(t, j):
        vals = curve.deriv(sigma + lam * t, j)
        if j == 0:
            vals = vals - g0[None, :]
        return (lam**j) * vals @ minv.T

    params = {"parent": curve.kind, "sigma": sigma, "lambda": lam}
    return Curve(curve.n, deriv, (-1.0, 1.0), "rescaled", params, False)


# ---------------------------------------------------------------- Frenet


@dataclass(frozen=True)
class FrenetFrame:
    s: float
    E: np.ndarray  # columns e_1..e_n


def _mgs(cols: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalisation pass, batched.

    ``cols`` has shape ``(m, n, n)``; returns orthonormal columns of the same shape.
    """
    q = np.array(cols, dtype=float, copy=True)
    n = q.shape[-1]
    for j in range(n):
        v = q[:, :, j]
        for _ in range(2):
            for i in range(j):
                qi = q[:, :, i]
                v = v - np.sum(qi * v, axis=1, keepdims=True) * qi
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        q[:, :, j] = v
    return q


def frenet_frames(curve: Curve, s, cond_cap: float = 1e8) -> np.ndarray:
    """Frenet frames at each parameter; shape ``(m, n, n)`` with columns ``e_j``.

    Sign convention: ``<e_j, gamma^(j)> > 0``, which is automatic for Gram-Schmidt.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    mats = curve.derivative_matrices(s)
    conds = np.linalg.cond(mats)
    bad = ~np.isfinite(conds) | (conds > cond_cap)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegeneracyError(float(s[i]), float(conds[i]))
    return _mgs(mats)


def frenet_frame(curve: Curve, s: float, cond_cap: float = 1e8) -> FrenetFrame:
    return FrenetFrame(float(s), frenet_frames(curve, np.array([s]), cond_cap)[0])


# ---------------------------------------------------------------- audits


@dataclass(frozen=True)
class MembershipReport:
    delta: float
    deviation: float
    member: bool
    normalized: bool
    normalization_error: float


def model_class_check(curve: Curve, delta: float, n_grid: int = 401) -> MembershipReport:
    """Sampled ``C^{n+1}`` distance to the moment curve and the normalisation at 0.

    ``member`` compares the sampled deviation with ``delta``; the normalisation
    ``gamma^(j)(0) = e_j`` is reported separately in ``normalized``.
    """
    a, b = curve.domain
    if a > -1 or b < 1:
        raise CurveDomainError("model class check needs the domain to contain [-1, 1]")
    s = np.linspace(-1.0, 1.0, n_grid)
    ref = moment_curve(curve.n)
    dev = 0.0
    for j in range(1, curve.n + 2):
        dev = max(dev, float(np.max(np.abs(curve.deriv(s, j) - ref.deriv(s, j)))))
    norm_err = float(np.max(np.abs(curve.derivative_matrix(0.0) - np.eye(curve.n))))
    return MembershipReport(delta, dev, dev <= delta, norm_err <= 1e-12, norm_err)


def sphere_net(n: int, size: int, seed: int = 0) -> np.ndarray:
    """Random points on the unit sphere in ``R^n``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((size, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass(frozen=True)
class TypeProfile:
    s: np.ndarray
    order: np.ndarray  # smallest d per s (-1 if none up to d_max)
    attained: np.ndarray  # min over the net of the partial sum at that d
    maximal_type: int


def finite_type_profile(
    curve: Curve, d_max: int, net: np.ndarray, s_grid, c0: float = 1e-2
) -> TypeProfile:
    """Smallest ``d`` with ``sum_{j<=d} |<gamma^(j)(s), xi>| >= c0`` on the unit net."""
    if d_max > curve.n + 1:
        raise ValueError("d_max must be at most n + 1")
    net = np.asarray(net, dtype=float)
    if net.size == 0:
        raise ValueError("sphere net is empty")
    net = net / np.linalg.norm(net, axis=1, keepdims=True)
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    orders = np.full(s_grid.size, -1)
    attained = np.zeros(s_grid.size)
    for i, s in enumerate(s_grid):
        partial = np.zeros(net.shape[0])
        for d in range(1, d_max + 1):
            partial += np.abs(net @ curve.point(s, d))
            low = float(partial.min())
            if low >= c0:
                orders[i] = d
                attained[i] = low
                break
        else:
            attained[i] = float(partial.min())
    maximal = int(orders.max()) if np.all(orders > 0) else -1
    return TypeProfile(s_grid, orders, attained, maximal)
