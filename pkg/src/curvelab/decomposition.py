"""Frequency decompositions of symbols for curves in R^4.

Symbols are lazy products of cutoffs evaluated on a batch of points
``(xi, s)``.  The geometric quantities they depend on (roots and
u-quantities from :mod:`curvelab.cone`) are computed once per batch in a
:class:`Features` cache and shared between all pieces of a tree.

Every split below is an exact telescoping identity, so the pieces of each
level add back to their parent up to rounding.  Where a literal transcription
of the textbook cutoffs would only telescope approximately (outermost cutoffs
that are 1 only for very small constants) the outermost factor is replaced by
the constant 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import floor
from typing import Callable

import numpy as np

from . import cone
from .cutoffs import bump, littlewood_paley, smooth_step, zeta
from .curves import Curve, frenet_frames, rescale, rescaling_matrices

ETA = bump()
ZETA = zeta()
J4_WINDOW = 0.1
J3_WINDOW = (0.1, 0.5)
CHI_S = bump().dilate(2.0)


class SymmetryError(ValueError):
    pass


# ------------------------------------------------------------------ features


class Features:
    """Per-batch cache of the quantities the symbols depend on."""

    def __init__(self, curve: Curve, xi, s, family: int):
        self.curve = curve
        self.xi = np.atleast_2d(np.asarray(xi, dtype=float))
        s = np.asarray(s, dtype=float)
        self.s = np.broadcast_to(s, (self.xi.shape[0],)).astype(float)
        self.family = family

    @cached_property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.xi, axis=1)

    @cached_property
    def base(self) -> np.ndarray:
        """Angular base symbol times ``chi(s)``."""
        x = self.xi
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == 4:
                top = x[:, 3]
                val = np.where(top > 0, 1.0, 0.0)
                for j in range(3):
                    val = val * ETA(np.where(top > 0, x[:, j] / (0.5 * J4_WINDOW * top), np.inf))
            else:
                top = x[:, 2]
                val = np.where(top > 0, 1.0, 0.0)
                w12, w4 = J3_WINDOW
                for j, w in ((0, w12), (1, w12), (3, w4)):
                    val = val * ETA(np.where(top > 0, x[:, j] / (0.5 * w * top), np.inf))
        return val * CHI_S(self.s)

    @cached_property
    def mask(self) -> np.ndarray:
        return self.base != 0

    def _masked(self, fn, rows=None) -> np.ndarray:
        rows = self.mask if rows is None else rows
        out = np.full(self.xi.shape[0], np.nan)
        if np.any(rows):
            out[rows] = fn(self.xi[rows], rows)
        return out

    # J = 4 quantities
    @cached_property
    def theta2(self) -> np.ndarray:
        return self._masked(lambda x, r: cone.theta2(self.curve, x, window=None))

    @cached_property
    def u12(self) -> np.ndarray:
        return self._masked(lambda x, r: cone.pairing(self.curve, self.theta2[r], x, 1))

    @cached_property
    def u2(self) -> np.ndarray:
        return self._masked(lambda x, r: cone.pairing(self.curve, self.theta2[r], x, 2))

    @cached_property
    def _roots1(self) -> cone.ConeRoots | None:
        rows = self.mask & (self.u2 < 0)
        if not np.any(rows):
            return None
        return cone.u_report(self.curve, self.xi[rows], window=None, strict=False), rows

    def _from_roots(self, name: str) -> np.ndarray:
        out = np.full(self.xi.shape[0], np.nan)
        got = self._roots1
        if got is not None:
            roots, rows = got
            out[rows] = getattr(roots, name)
        return out

    @cached_property
    def theta1(self) -> np.ndarray:
        return self._from_roots("theta1")

    @cached_property
    def u1(self) -> np.ndarray:
        return self._from_roots("u1")

    @cached_property
    def u31(self) -> np.ndarray:
        return self._from_roots("u31")

    # J = 3 quantities
    @cached_property
    def theta(self) -> np.ndarray:
        return self._masked(lambda x, r: cone.monotone_root(self.curve, x, 2, window=None))

    @cached_property
    def u(self) -> np.ndarray:
        return self._masked(lambda x, r: cone.pairing(self.curve, self.theta[r], x, 1))


# ------------------------------------------------------------------ symbols


@dataclass(frozen=True)
class Factor:
    name: str
    fn: Callable[[Features], np.ndarray]


@dataclass(frozen=True)
class Symbol:
    """Product of factors; ``index`` records the decomposition labels."""

    curve: Curve
    family: int
    index: dict
    factors: tuple[Factor, ...]

    def evaluate(self, feats: Features) -> np.ndarray:
        val = np.ones(feats.xi.shape[0])
        for f in self.factors:
            val = val * f.fn(feats)
        return val

    def __call__(self, xi, s) -> np.ndarray:
        return self.evaluate(Features(self.curve, xi, s, self.family))

    def support(self, xi, s) -> np.ndarray:
        return self(xi, s) != 0

    def times(self, index: dict, *factors: Factor) -> "Symbol":
        return Symbol(self.curve, self.family, {**self.index, **index}, self.factors + tuple(factors))

    @property
    def provenance(self) -> list[str]:
        return [f.name for f in self.factors]


def _cut(c, arg: Callable[[Features], np.ndarray], name: str, complement: bool = False) -> Factor:
    if complement:
        return Factor(f"1-{name}", lambda F: 1.0 - c(arg(F)))
    return Factor(name, lambda F: c(arg(F)))


def _diff(arg: Callable[[Features], np.ndarray], outer: float, inner: float, name: str) -> Factor:
    """``eta(outer * x) - eta(inner * x)`` with ``outer < inner``."""
    return Factor(name, lambda F: ETA(outer * arg(F)) - ETA(inner * arg(F)))


def _signed(arg, outer, inner, sign, name) -> Factor:
    def fn(F):
        x = arg(F)
        return (ETA(outer * x) - ETA(inner * x)) * (sign * np.nan_to_num(x) > 0)

    return Factor(name, fn)


def base_symbol(curve: Curve, family: int) -> Symbol:
    if curve.n != 4:
        raise ValueError("the decompositions are implemented for curves in R^4")
    return Symbol(curve, family, {"J": family}, (Factor("a", lambda F: F.base),))


def band_limited(a: Symbol, k: int) -> Symbol:
    beta = littlewood_paley(k)
    return a.times({"k": k}, Factor(f"beta^{k}", lambda F: beta(F.norm)))


# ------------------------------------------------------------------ J = 3


@dataclass
class J3Tree:
    curve: Curve
    k: int
    rho: float
    eps: float
    a_k: Symbol
    pieces: list[Symbol]

    @property
    def L(self) -> int:
        return self.k // 3

    def angular(self, piece: Symbol, mus=None) -> list[Symbol]:
        ell = piece.index["ell"]
        mus = range(-(2**ell) - 1, 2**ell + 2) if mus is None else mus
        return [
            piece.times({"mu": mu}, _cut(ZETA, lambda F, ell=ell, mu=mu: 2.0**ell * F.theta - mu, f"zeta(2^{ell}theta-{mu})"))
            for mu in mus
        ]

    def eps_split(self, piece_mu: Symbol) -> tuple[Symbol, Symbol]:
        ell, mu = piece_mu.index["ell"], piece_mu.index["mu"]
        c = self.rho * 2.0 ** (ell * (1 - self.eps))
        s_mu = 2.0**-ell * mu

        def arg(F):
            return c * (F.s - s_mu)

        main = piece_mu.times({"eps": True}, _cut(ETA, arg, "eta(rho 2^{l(1-e)}(s-s_mu))"))
        rest = piece_mu.times({"eps": False}, _cut(ETA, arg, "eta(rho 2^{l(1-e)}(s-s_mu))", complement=True))
        return main, rest

    def features(self, xi, s) -> Features:
        return Features(self.curve, xi, s, 3)


def decompose_J3(curve: Curve, k: int, rho: float = 0.05, eps: float = 0.1, a: Symbol | None = None) -> J3Tree:
    """``a_k = sum_l a_{k,l}`` split by the size of ``u = <gamma'(theta), xi>``.

    With ``A_l = eta(2^{-k+2l} u)`` the pieces are ``1 - A_1`` (l = 0),
    ``A_l - A_{l+1}`` (0 < l < L) and ``A_L`` (l = L = floor(k/3)).
    """
    a = base_symbol(curve, 3) if a is None else a
    a_k = band_limited(a, k) if k >= 1 else a
    L = k // 3
    if k < 1 or L == 0:
        return J3Tree(curve, k, rho, eps, a_k, [a_k.times({"ell": 0})])

    def r(F):
        return 2.0**-k * F.u

    pieces = []
    for ell in range(L + 1):
        if ell == 0:
            f = _cut(ETA, lambda F: 2.0**2 * r(F), "1-eta(2^{-k+2}u)", complement=True)
        elif ell < L:
            f = _diff(r, 2.0 ** (2 * ell), 2.0 ** (2 * ell + 2), f"beta(2^(-k+{2 * ell})u)")
        else:
            f = _cut(ETA, lambda F, L=L: 2.0 ** (2 * L) * r(F), f"eta(2^(-k+{2 * L})u)")
        pieces.append(a_k.times({"ell": ell}, f))
    return J3Tree(curve, k, rho, eps, a_k, pieces)


# ------------------------------------------------------------------ J = 4


def lambda_set(k: int) -> list[tuple[int, int]]:
    """``{(l1, l2): 0 <= l2 < floor(k/4), l2 <= l1 <= floor((2k + l2)/9)}``."""
    return [(l1, l2) for l2 in range(k // 4) for l1 in range(l2, (2 * k + l2) // 9 + 1)]


@dataclass
class J4Tree:
    curve: Curve
    k: int
    rho: float
    eps: float
    a_k: Symbol
    a_pieces: list[Symbol]  # iota = 1..4
    b_mid: list[Symbol]  # b_{k, l2}
    b_pieces: list[Symbol]  # b_{k, (l1, l2)}
    kappa: float = 0.0  # width of the theta_1 windows relative to 2^{-(3 l1 - l2)/2}

    def __post_init__(self):
        if self.kappa <= 0:
            self.kappa = np.sqrt(self.rho) / 8

    @property
    def L(self) -> int:
        return self.k // 4

    @property
    def level1(self) -> list[Symbol]:
        """The pieces of the final decomposition of ``a_k``."""
        return self.a_pieces + self.b_pieces

    def angular_a(self, piece: Symbol, mus=None) -> list[Symbol]:
        ell = piece.index["ell"]
        mus = range(-(2**ell) - 1, 2**ell + 2) if mus is None else mus
        return [
            piece.times({"mu": mu}, _cut(ZETA, lambda F, ell=ell, mu=mu: 2.0**ell * F.theta2 - mu, f"zeta(2^{ell}theta2-{mu})"))
            for mu in mus
        ]

    def nu_scale(self, l1: int, l2: int) -> float:
        """Reciprocal spacing of the centres ``s_nu``."""
        return 2.0 ** ((3 * l1 - l2) / 2) / self.kappa

    def angular_b(self, piece: Symbol, nus=None) -> list[Symbol]:
        l1, l2 = piece.index["ell1"], piece.index["ell2"]
        c = self.nu_scale(l1, l2)
        if nus is None:
            top = int(np.ceil(c)) + 1
            nus = range(-top, top + 1)
        return [
            piece.times({"nu": nu}, _cut(ZETA, lambda F, c=c, nu=nu: c * F.theta1 - nu, f"zeta(2^((3l1-l2)/2)theta1-{nu})"))
            for nu in nus
        ]

    def group_of(self, nu: int, l1: int, l2: int) -> int:
        """``mu`` whose centre ``2^{-l2} mu`` is nearest to ``s_nu``."""
        return int(floor(2.0**l2 * nu / self.nu_scale(l1, l2) + 0.5))

    def grouped_b(self, piece: Symbol) -> dict[int, list[Symbol]]:
        l1, l2 = piece.index["ell1"], piece.index["ell2"]
        groups: dict[int, list[Symbol]] = {}
        for sym in self.angular_b(piece):
            groups.setdefault(self.group_of(sym.index["nu"], l1, l2), []).append(sym)
        return groups

    def eps_split(self, piece_mu: Symbol) -> tuple[Symbol, Symbol]:
        if "nu" in piece_mu.index:
            l1, l2 = piece_mu.index["ell1"], piece_mu.index["ell2"]
            c = self.rho * 2.0 ** ((3 * l1 - l2) / 2 * (1 - self.eps))
            centre = piece_mu.index["nu"] / self.nu_scale(l1, l2)
        else:
            ell = piece_mu.index["ell"]
            c = self.rho * 2.0 ** (ell * (1 - self.eps))
            centre = piece_mu.index["mu"] * 2.0**-ell

        def arg(F):
            return c * (F.s - centre)

        main = piece_mu.times({"eps": True}, _cut(ETA, arg, "eta(s-loc)"))
        rest = piece_mu.times({"eps": False}, _cut(ETA, arg, "eta(s-loc)", complement=True))
        return main, rest

    def features(self, xi, s) -> Features:
        return Features(self.curve, xi, s, 4)


def decompose_J4(
    curve: Curve, k: int, rho: float = 0.05, eps: float = 0.1, a: Symbol | None = None, kappa: float = 0.0
) -> J4Tree:
    """Two-parameter split in ``(u_{1,2}, u_2)`` followed by the ``u_1`` split of each ``b_{k,l}``.

    With ``A_l = eta(2^{3l} r1)``, ``B_l = eta(2^{2l} r2)``, ``A_{-1} = B_0 = 1``,
    ``r1 = 2^{1-k} u_{1,2}`` and ``r2 = rho^{-1} 2^{-k} u_2``:

    * ``iota = 1``: ``(A_{l-1} - A_l) B_l`` for ``0 <= l <= L``;
    * ``iota = 2``: ``A_l (B_l - B_{l+1}) [u_2 > 0]`` for ``l < L`` and ``A_L B_L``;
    * ``b_{k,l}``: ``A_l (B_l - B_{l+1}) [u_2 < 0]`` for ``l < L``.

    Each ``b_{k,l2}`` then splits as ``iota = 3`` (large ``|u_1|``), ``iota = 4``
    (``s`` away from ``theta_1``) and ``b_{k,(l1,l2)}`` for ``(l1, l2)`` in ``Lambda(k)``.
    """
    a = base_symbol(curve, 4) if a is None else a
    if k < 1:
        raise ValueError("k must be at least 1")
    a_k = band_limited(a, k)
    L = k // 4

    def r1(F):
        return 2.0 ** (1 - k) * F.u12

    def r2(F):
        return 2.0**-k * F.u2 / rho

    def A(ell) -> Callable[[Features], np.ndarray] | None:
        if ell < 0:
            return None
        return lambda F: ETA(2.0 ** (3 * ell) * r1(F))

    def B(ell) -> Callable[[Features], np.ndarray] | None:
        if ell <= 0:
            return None
        return lambda F: ETA(2.0 ** (2 * ell) * r2(F))

    def A_minus(ell) -> Factor:
        # A_{l-1} - A_l
        if ell == 0:
            return _cut(ETA, r1, "1-eta(2^{1-k}u12)", complement=True)
        return _diff(r1, 2.0 ** (3 * ell - 3), 2.0 ** (3 * ell), f"beta(2^(1-k+{3 * ell})u12)")

    def B_fac(ell) -> list[Factor]:
        fn = B(ell)
        return [] if fn is None else [Factor(f"eta(rho^-1 2^(-k+{2 * ell})u2)", fn)]

    def A_fac(ell) -> list[Factor]:
        return [Factor(f"eta(2^(1-k+{3 * ell})u12)", A(ell))]

    def B_step(ell, sign) -> Factor:
        # B_l - B_{l+1} restricted to one sign of u2
        tag = "+" if sign > 0 else "-"
        if ell == 0:
            return Factor(f"(1-eta(4 r2)){tag}", lambda F: (1.0 - ETA(4.0 * r2(F))) * (sign * np.nan_to_num(F.u2) > 0))
        return _signed(r2, 2.0 ** (2 * ell), 2.0 ** (2 * ell + 2), sign, f"beta{tag}(rho^-1 2^(-k+{2 * ell})u2)")

    a_pieces: list[Symbol] = []
    b_mid: list[Symbol] = []
    for ell in range(L + 1):
        a_pieces.append(a_k.times({"ell": ell, "iota": 1}, A_minus(ell), *B_fac(ell)))
        if ell < L:
            a_pieces.append(a_k.times({"ell": ell, "iota": 2}, *A_fac(ell), B_step(ell, +1)))
            b_mid.append(a_k.times({"ell": ell, "b": True}, *A_fac(ell), B_step(ell, -1)))
        else:
            a_pieces.append(a_k.times({"ell": ell, "iota": 2}, *A_fac(ell), *B_fac(ell)))

    b_pieces: list[Symbol] = []
    rho4 = rho**-4
    for b in b_mid:
        l2 = b.index["ell"]

        def x(F):
            return rho4 * 2.0**-k * F.u1

        def s_loc(F, l2=l2):
            return 2.0**l2 * (F.s - F.theta1) / rho

        E = Factor(f"eta(rho^-4 2^(-k+{3 * l2})u1)", lambda F, l2=l2: ETA(2.0 ** (3 * l2) * x(F)))
        a_pieces.append(b.times({"ell": l2, "iota": 3, "b": False},
                                Factor(f"1-eta(rho^-4 2^(-k+{3 * l2})u1)", lambda F, l2=l2: 1.0 - ETA(2.0 ** (3 * l2) * x(F)))))
        a_pieces.append(b.times({"ell": l2, "iota": 4, "b": False}, E, _cut(ETA, s_loc, "eta(rho^-1 2^l2 (s-theta1))", complement=True)))
        L1 = (2 * k + l2) // 9
        S = _cut(ETA, s_loc, "eta(rho^-1 2^l2 (s-theta1))")
        for l1 in range(l2, L1 + 1):
            if l1 < L1:
                C = _diff(x, 2.0 ** (3 * l1), 2.0 ** (3 * l1 + 3), f"beta(rho^-4 2^(-k+{3 * l1})u1)")
            else:
                C = Factor(f"eta(rho^-4 2^(-k+{3 * l1})u1)", lambda F, l1=l1: ETA(2.0 ** (3 * l1) * x(F)))
            b_pieces.append(b.times({"ell1": l1, "ell2": l2, "b": True}, C, S))
    # iota = 3, 4 at l = L are identically zero; record them explicitly
    zero = Factor("0", lambda F: np.zeros(F.xi.shape[0]))
    a_pieces.append(a_k.times({"ell": L, "iota": 3}, zero))
    a_pieces.append(a_k.times({"ell": L, "iota": 4}, zero))
    a_pieces.sort(key=lambda p: (p.index["ell"], p.index["iota"]))
    return J4Tree(curve, k, rho, eps, a_k, a_pieces, b_mid, b_pieces, kappa)


def reconstruction_error(parent: Symbol, pieces: list[Symbol], feats: Features) -> float:
    total = np.zeros(feats.xi.shape[0])
    for p in pieces:
        total = total + p.evaluate(feats)
    return float(np.max(np.abs(total - parent.evaluate(feats))))


def tree_reconstruction(tree, n_samples: int = 200, seed: int = 0) -> float:
    """Worst partition-of-unity defect over every split in ``tree``.

    Checks ``a_k = sum`` of the level pieces on base proposals, and for each
    level piece the angular split and the localisation split on points drawn
    from that piece's support.
    """
    rng = np.random.default_rng(seed)
    level = tree.level1 if isinstance(tree, J4Tree) else tree.pieces
    xi, s = propose_base(tree, n_samples, rng)
    worst = reconstruction_error(tree.a_k, level, tree.features(xi, s))
    for piece in level:
        if isinstance(tree, J4Tree):
            if "iota" in piece.index and piece.index["iota"] in (3, 4):
                continue
            ang = tree.angular_b(piece) if "ell1" in piece.index else tree.angular_a(piece)
        else:
            ang = tree.angular(piece)
        xi, s = sample_support(tree, piece, n_samples, rng)
        if xi.shape[0] == 0:
            continue
        feats = tree.features(xi, s)
        worst = max(worst, reconstruction_error(piece, ang, feats))
        for sym in ang[:: max(1, len(ang) // 8)]:
            worst = max(worst, reconstruction_error(sym, list(tree.eps_split(sym)), feats))
    return worst


# ------------------------------------------------------------------ J classification


@dataclass(frozen=True)
class DeltaProfile:
    delta0: float = 0.01
    deltas: tuple = ()

    def delta(self, j: int) -> float:
        if self.deltas:
            return self.deltas[j - 1]
        d0 = self.delta0
        return {1: d0, 2: d0**3, 3: d0, 4: 0.9}[j]

    def width(self, j: int) -> float:
        return self.delta(j) if j <= 3 else self.delta0


@dataclass(frozen=True)
class JWeights:
    weights: np.ndarray  # (m, 4)
    overlap: np.ndarray  # product of the four rho_j; zero when the classes are disjoint
    inf_pairings: np.ndarray  # (m, 4)


def classify_J(curve: Curve, xi, profile: DeltaProfile = DeltaProfile(), n_grid: int = 201) -> JWeights:
    """Smooth weights ``chi_J(xi/|xi|)`` summing to ``1 - prod_j rho_j``.

    ``rho_j`` is a smooth step in ``m_j = inf_{|s| <= delta0} |<gamma^(j)(s), omega>|``:
    1 when ``m_j <= delta_j``, 0 when ``m_j >= delta_j + w_j``.
    """
    xb = np.atleast_2d(np.asarray(xi, dtype=float))
    if np.any(np.linalg.norm(xb, axis=1) == 0):
        raise ValueError("xi must be nonzero")
    omega = xb / np.linalg.norm(xb, axis=1, keepdims=True)
    s = np.linspace(-profile.delta0, profile.delta0, n_grid)
    m = np.empty((omega.shape[0], 4))
    rho = np.empty_like(m)
    for j in range(1, 5):
        m[:, j - 1] = np.min(np.abs(curve.deriv(s, j) @ omega.T), axis=0)
        d, w = profile.delta(j), profile.width(j)
        rho[:, j - 1] = smooth_step((d + w - m[:, j - 1]) / w)
    weights = np.empty_like(m)
    prod = np.ones(omega.shape[0])
    for J in range(4):
        weights[:, J] = prod * (1.0 - rho[:, J])
        prod = prod * rho[:, J]
    return JWeights(weights, prod, m)


# ------------------------------------------------------------------ Frenet boxes


@dataclass(frozen=True)
class FrenetBox:
    """``scale * pi_{d-1}(s; r)``; coordinates beyond ``d+1`` are bounded by ``tail``."""

    curve: Curve
    d: int
    s: float
    r: float
    scale: float = 1.0
    tail: float = 1.0

    @cached_property
    def frame(self) -> np.ndarray:
        return frenet_frames(self.curve, np.array([self.s]))[0]

    def coords(self, xi) -> np.ndarray:
        return np.atleast_2d(np.asarray(xi, dtype=float)) @ self.frame / self.scale

    def required_slack(self, xi) -> np.ndarray:
        """Smallest ``C`` for which each point satisfies the three box conditions."""
        c = np.abs(self.coords(xi))
        d = self.d
        need = np.zeros(c.shape[0])
        for j in range(1, d + 1):
            need = np.maximum(need, c[:, j - 1] / self.r ** (d + 1 - j))
        # the (d+1)-th condition is on |<e_{d+1}, xi>|, so the box is symmetric under xi -> -xi
        mid = c[:, d]
        with np.errstate(divide="ignore"):
            need = np.maximum(need, np.where(mid > 0, np.maximum(mid, 0.5 / mid), np.inf))
        for j in range(d + 2, c.shape[1] + 1):
            need = np.maximum(need, c[:, j - 1] / self.tail)
        return need

    def contains(self, xi, C: float = 1.0) -> np.ndarray:
        return self.required_slack(xi) <= C


def frenet_box_contains(box: FrenetBox, xi, C: float = 1.0):
    out = box.contains(xi, C)
    return bool(out[0]) if np.asarray(xi).ndim == 1 else out


# ------------------------------------------------------------------ sampling


def _solve_pairings(curve: Curve, t: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """``xi`` with ``<gamma^(j)(t), xi> = targets[:, j-1]`` for ``j = 1..4``."""
    mats = curve.derivative_matrices(t)  # columns gamma^(j)
    return np.linalg.solve(np.transpose(mats, (0, 2, 1)), targets[..., None])[..., 0]


def _loguniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def _signs(rng, size):
    return rng.choice([-1.0, 1.0], size)


def propose_J4(tree: J4Tree, piece: Symbol, m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Proposals concentrated near a J = 4 piece's support; exact filtering is by rejection."""
    k, rho = tree.k, tree.rho
    K = 2.0**k
    c = rng.uniform(0.55, 1.9, m) * K
    idx = piece.index
    if idx.get("iota") in (1, 2, 3) or idx.get("b") is True and "ell1" not in idx:
        ell = idx["ell"]
        t = rng.uniform(-0.1, 0.1, m)
        if idx.get("iota") == 1:
            lo = 2.0 ** (-3 * ell - 1) if ell > 0 else 0.25
            u12 = _signs(rng, m) * _loguniform(rng, lo, 2.0 ** (3 - 3 * ell), m) * K
            u2 = rng.uniform(-2, 2, m) * rho * 2.0 ** (-2 * ell) * K
        else:
            u12 = rng.uniform(-1, 1, m) * 2.0 ** (-3 * ell) * K
            mag = _loguniform(rng, 0.2, 2.0, m) * rho * 2.0 ** (-2 * ell) * K
            if idx.get("iota") == 2 and ell == tree.L:
                u2 = _signs(rng, m) * mag
            elif idx.get("iota") == 2:
                u2 = mag
            else:
                u2 = -mag
        targets = np.column_stack([u12, u2, np.zeros(m), c])
        xi = _solve_pairings(tree.curve, t, targets)
        s = rng.uniform(-0.6, 0.6, m)
        return xi, s
    # theta_1 parametrisation for iota = 4 and b_{k,(l1,l2)}
    l2 = idx["ell"] if "ell1" not in idx else idx["ell2"]
    t = rng.uniform(-0.35, 0.35, m)
    mag2 = _loguniform(rng, 0.2, 2.0, m) * rho * 2.0 ** (-2 * l2) * K
    sign = _signs(rng, m)
    u31 = sign * np.sqrt(2 * c * mag2)
    if "ell1" in idx:
        l1 = idx["ell1"]
        L1 = (2 * k + l2) // 9
        hi = 2.0 ** (1 - 3 * l1)
        lo = 2.0 ** (-3 * l1 - 3) if l1 < L1 else hi * 1e-4
        u1 = _signs(rng, m) * _loguniform(rng, lo, hi, m) * rho**4 * K
        s = t + rng.uniform(-2, 2, m) * rho * 2.0**-l2
    else:
        u1 = rng.uniform(-2, 2, m) * 2.0 ** (-3 * l2) * rho**4 * K
        s = t + _signs(rng, m) * rng.uniform(1, 3, m) * rho * 2.0**-l2
    targets = np.column_stack([u1, np.zeros(m), u31, c])
    xi = _solve_pairings(tree.curve, t, targets)
    return xi, np.clip(s, -0.99, 0.99)


def propose_J3(tree: J3Tree, piece: Symbol, m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    K = 2.0**tree.k
    ell, L = piece.index["ell"], tree.L
    c3 = rng.uniform(0.55, 1.9, m) * K
    c4 = rng.uniform(-0.3, 0.3, m) * c3
    if ell == 0:
        mag = _loguniform(rng, 0.25, 4.0, m) * K
    elif ell < L:
        mag = _loguniform(rng, 0.25, 2.0, m) * 2.0 ** (-2 * ell) * K
    else:
        mag = rng.uniform(0, 2.0, m) * 2.0 ** (-2 * L) * K
    u = _signs(rng, m) * mag
    t = rng.uniform(-0.1, 0.1, m)
    xi = _solve_pairings(tree.curve, t, np.column_stack([u, np.zeros(m), c3, c4]))
    return xi, rng.uniform(-0.6, 0.6, m)


def propose_base(tree, m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniform proposals over the band-limited base support."""
    K = 2.0**tree.k
    r = rng.uniform(0.5, 2.0, m) * K
    x = np.empty((m, 4))
    if isinstance(tree, J4Tree):
        x[:, :3] = rng.uniform(-J4_WINDOW, J4_WINDOW, (m, 3))
        x[:, 3] = 1.0
    else:
        w12, w4 = J3_WINDOW
        x[:, :2] = rng.uniform(-w12, w12, (m, 2))
        x[:, 2] = 1.0
        x[:, 3] = rng.uniform(-w4, w4, m)
    x *= (r / np.linalg.norm(x, axis=1))[:, None]
    return x, rng.uniform(-1, 1, m)


def sample_support(tree, piece: Symbol, n: int, rng, max_rounds: int = 40, batch: int = 4000):
    """Rejection sampling of ``(xi, s)`` with ``piece(xi, s) != 0``."""
    propose = propose_J4 if isinstance(tree, J4Tree) else propose_J3
    got_x, got_s, total = [], [], 0
    for _ in range(max_rounds):
        xi, s = propose(tree, piece, batch, rng)
        feats = tree.features(xi, s)
        keep = piece.evaluate(feats) != 0
        if np.any(keep):
            got_x.append(xi[keep])
            got_s.append(s[keep])
            total += int(keep.sum())
        if total >= n:
            break
    if total == 0:
        return np.empty((0, 4)), np.empty(0)
    return np.concatenate(got_x)[:n], np.concatenate(got_s)[:n]


# ------------------------------------------------------------------ audits


@dataclass
class PieceAudit:
    label: dict
    lemma: str
    samples: int
    slack: float  # smallest admissible C over the samples; nan when vacuous

    @property
    def vacuous(self) -> bool:
        return self.samples == 0


@dataclass
class SupportReport:
    k: int
    pieces: list[PieceAudit] = field(default_factory=list)

    def max_slack(self, lemma: str) -> float:
        vals = [p.slack for p in self.pieces if p.lemma == lemma and not p.vacuous]
        return max(vals) if vals else float("nan")

    @property
    def lemmas(self) -> list[str]:
        return sorted({p.lemma for p in self.pieces})


def _mu_members(theta_scaled: np.ndarray):
    """The (at most two) integers ``mu`` with ``zeta(x - mu) > 0``."""
    m0 = np.floor(theta_scaled).astype(int)
    w1 = smooth_step(theta_scaled - m0)
    w0 = smooth_step(1.0 - (theta_scaled - m0))
    return [(m0, w0 > 0), (m0 + 1, w1 > 0)]


def _audit_by_centre(box_of, xi, theta_scaled, label, lemma, report):
    need = np.zeros(xi.shape[0])
    for mu_arr, active in _mu_members(theta_scaled):
        for mu in np.unique(mu_arr[active]):
            rows = active & (mu_arr == mu)
            need[rows] = np.maximum(need[rows], box_of(int(mu)).required_slack(xi[rows]))
    report.pieces.append(PieceAudit(label, lemma, xi.shape[0], float(need.max()) if xi.size else float("nan")))


def support_audit_J3(tree: J3Tree, n_samples: int = 1000, seed: int = 0) -> SupportReport:
    rng = np.random.default_rng(seed)
    rep = SupportReport(tree.k)
    K = 2.0**tree.k
    for piece in tree.pieces:
        ell = piece.index["ell"]
        xi, s = sample_support(tree, piece, n_samples, rng)
        th = tree.features(xi, s).theta if xi.size else np.empty(0)

        def box(mu, ell=ell):
            return FrenetBox(tree.curve, 2, 2.0**-ell * mu, 2.0**-ell, K)

        _audit_by_centre(box, xi, 2.0**ell * th, {"ell": ell}, "J3", rep)
    return rep


def support_audit_J4(tree: J4Tree, n_samples: int = 1000, seed: int = 0, rescaled: bool = True) -> SupportReport:
    """Containment constants for ``a^mu``, ``b^{*,mu}``, ``b^nu`` and the rescaled ``b~^nu``."""
    rng = np.random.default_rng(seed)
    rep = SupportReport(tree.k)
    K = 2.0**tree.k
    curve = tree.curve
    for piece in tree.a_pieces:
        if piece.index["ell"] == tree.L and piece.index["iota"] in (3, 4):
            continue
        ell = piece.index["ell"]
        xi, s = sample_support(tree, piece, n_samples, rng)
        th = tree.features(xi, s).theta2 if xi.size else np.empty(0)

        def box(mu, ell=ell):
            return FrenetBox(curve, 3, 2.0**-ell * mu, 2.0**-ell, K)

        _audit_by_centre(box, xi, 2.0**ell * th, dict(piece.index), "J4a", rep)
    for piece in tree.b_pieces:
        l1, l2 = piece.index["ell1"], piece.index["ell2"]
        label = dict(piece.index)
        xi, s = sample_support(tree, piece, n_samples, rng)
        if xi.size == 0:
            for lemma in ("J4b*", "J4bnu") + (("J4bnu~",) if rescaled else ()):
                rep.pieces.append(PieceAudit(label, lemma, 0, float("nan")))
            continue
        th1 = tree.features(xi, s).theta1
        c = tree.nu_scale(l1, l2)
        need_star = np.zeros(xi.shape[0])
        need_nu = np.zeros(xi.shape[0])
        need_res = np.zeros(xi.shape[0])
        for nu_arr, active in _mu_members(c * th1):
            for nu in np.unique(nu_arr[active]):
                rows = active & (nu_arr == nu)
                nu = int(nu)
                mu = tree.group_of(nu, l1, l2)
                s_nu, s_mu = nu / c, mu * 2.0**-l2
                star = FrenetBox(curve, 3, s_mu, 2.0**-l2, K)
                need_star[rows] = np.maximum(need_star[rows], star.required_slack(xi[rows]))
                bnu = FrenetBox(curve, 2, s_nu, 2.0 ** (-(3 * l1 - l2) / 2), K * 2.0**-l2, tail=2.0**l2)
                need_nu[rows] = np.maximum(need_nu[rows], bnu.required_slack(xi[rows]))
                if rescaled:
                    lam = 2.0**-l2
                    sub = rescale(curve, s_mu, lam, strict=False)
                    G = rescaling_matrices(curve, s_mu, lam).gamma_sigma_lambda
                    xt = xi[rows] @ G  # rows of ([gamma]_{s,l}^T xi)
                    tbox = FrenetBox(sub, 2, (s_nu - s_mu) / lam, 2.0 ** (-1.5 * (l1 - l2)), K * 2.0 ** (-4 * l2))
                    need_res[rows] = np.maximum(need_res[rows], tbox.required_slack(xt))
        rep.pieces.append(PieceAudit(label, "J4b*", xi.shape[0], float(need_star.max())))
        rep.pieces.append(PieceAudit(label, "J4bnu", xi.shape[0], float(need_nu.max())))
        if rescaled:
            rep.pieces.append(PieceAudit(label, "J4bnu~", xi.shape[0], float(need_res.max())))
    return rep


def support_audit(tree, n_samples: int = 1000, seed: int = 0) -> SupportReport:
    if isinstance(tree, J4Tree):
        return support_audit_J4(tree, n_samples, seed)
    return support_audit_J3(tree, n_samples, seed)


def third_derivative_ratio(tree: J4Tree, n_samples: int = 500, seed: int = 0) -> dict:
    """Range of ``|<gamma'''(s), xi>| / (rho^{1/2} 2^{k - l2})`` on each ``supp b_{k,(l1,l2)}``."""
    rng = np.random.default_rng(seed)
    out = {}
    for piece in tree.b_pieces:
        l1, l2 = piece.index["ell1"], piece.index["ell2"]
        xi, s = sample_support(tree, piece, n_samples, rng)
        if xi.size == 0:
            continue
        val = np.abs(cone.pairing(tree.curve, s, xi, 3)) / (np.sqrt(tree.rho) * 2.0 ** (tree.k - l2))
        out[(l1, l2)] = (float(val.min()), float(val.max()))
    return out
