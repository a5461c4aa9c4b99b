"""Periodic Korobov-space reproducing kernel with product weights.

The kernel on the s-torus is a product over coordinates of
``1 + gamma_j * omega_alpha(|y_j - y'_j| mod 1)`` where ``omega_alpha`` is a
scaled Bernoulli polynomial of degree ``2*alpha``.  On a rank-1 lattice the
Gram matrix is circulant, so interpolation systems are solved by FFT from the
first column alone.  The module also provides the product ("serendipitous")
weight recipe, Stirling numbers of the second kind, and a Riemann zeta
evaluator used by the weight formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class IllConditionedKernelError(ArithmeticError):
    """A circulant kernel eigenvalue is too close to zero to divide by."""

    def __init__(self, index: int, eigenvalue: float, threshold: float):
        self.index = index
        self.eigenvalue = eigenvalue
        self.threshold = threshold
        super().__init__(
            f"circulant eigenvalue {eigenvalue:.6e} at index {index} is below "
            f"the relative cutoff {threshold:.6e}; the kernel matrix is "
            f"numerically singular in double precision"
        )


# Relative eigenvalue cutoff: surfaces double-precision instability as a typed
# error instead of silent noise.
EIGENVALUE_RTOL = 1e-12

_MAX_ALPHA = 3

# B_{2a}(x) coefficients, highest degree first, for a = 1, 2, 3.
_B2A_COEFFS = {
    1: (1.0, -1.0, 1.0 / 6.0),
    2: (1.0, -2.0, 1.0, 0.0, -1.0 / 30.0),
    3: (1.0, -3.0, 2.5, 0.0, -0.5, 0.0, 1.0 / 42.0),
}


def bernoulli_poly(alpha: int, x):
    """Evaluate the Bernoulli polynomial of degree ``2*alpha`` on [0, 1].

    Supports scalar or ndarray ``x``.  Raises :class:`DomainError` for
    ``x`` outside [0, 1] or alpha outside {1, 2, 3}.
    """
    if alpha not in _B2A_COEFFS:
        raise DomainError(f"alpha must be in {{1,2,3}}, got {alpha}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0) or np.any(xa > 1.0):
        raise DomainError("bernoulli_poly argument outside [0, 1]")
    val = np.polyval(_B2A_COEFFS[alpha], xa)
    return float(val) if np.isscalar(x) else val


def omega(alpha: int, t):
    """Kernel coordinate factor ``(-1)^(alpha+1) (2pi)^(2a)/(2a)! B_{2a}(t)``."""
    scale = (-1.0) ** (alpha + 1) * (2.0 * math.pi) ** (2 * alpha) / math.factorial(2 * alpha)
    return scale * bernoulli_poly(alpha, t)


@dataclass(frozen=True)
class KernelSpec:
    """Smoothness ``alpha`` plus per-dimension product weights ``gamma``.

    alpha is capped at 3: beyond that the circulant eigenvalues are not
    reliable in double precision.
    """

    alpha: int
    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "gamma", g)
        if not (isinstance(self.alpha, (int, np.integer)) and 1 <= self.alpha <= _MAX_ALPHA):
            raise DomainError(
                f"alpha must be an integer in [1, {_MAX_ALPHA}], got {self.alpha!r}"
            )
        if g.ndim != 1 or g.size == 0 or np.any(g <= 0.0):
            raise DomainError("gamma must be a 1-d array of positive weights")

    @property
    def s(self) -> int:
        return int(self.gamma.size)


def _wrapped_dist(y, y2):
    d = np.mod(np.asarray(y, dtype=float) - np.asarray(y2, dtype=float), 1.0)
    # B_{2a} is symmetric about 1/2, so the representative in [0,1) suffices.
    return d


def kernel_eval(spec: KernelSpec, y: Sequence[float], y2: Sequence[float]) -> float:
    """Kernel value ``prod_j (1 + gamma_j * omega_alpha(|y_j - y2_j|))``."""
    y = np.asarray(y, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y.shape != (spec.s,) or y2.shape != (spec.s,):
        raise DomainError(
            f"kernel arguments must have shape ({spec.s},), got {y.shape} and {y2.shape}"
        )
    factors = 1.0 + spec.gamma * omega(spec.alpha, _wrapped_dist(y, y2))
    return float(np.prod(factors))


def kernel_cross(spec: KernelSpec, points: np.ndarray, y: Sequence[float]) -> np.ndarray:
    """Vector ``[K(t_k, y)]_k`` for an (N, s) array of anchor points."""
    pts = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != spec.s or y.shape != (spec.s,):
        raise DomainError("points must be (N, s) and y must be (s,)")
    out = np.ones(pts.shape[0])
    for j in range(spec.s):
        out *= 1.0 + spec.gamma[j] * omega(spec.alpha, _wrapped_dist(pts[:, j], y[j]))
    return out


def kernel_cross_matrix(spec: KernelSpec, points: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Matrix ``[K(t_k, y_i)]_{i,k}`` of shape (len(ys), len(points)).

    Built one coordinate at a time so only (n, N) temporaries are held.
    """
    pts = np.asarray(points, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = np.ones((ys.shape[0], pts.shape[0]))
    for j in range(spec.s):
        d = _wrapped_dist(ys[:, j, None], pts[None, :, j])
        out *= 1.0 + spec.gamma[j] * omega(spec.alpha, d)
    return out


@dataclass
class CirculantOperator:
    """Symmetric circulant kernel matrix stored as its first column."""

    N: int
    first_col: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.first_col, dtype=float)
        if c.shape != (self.N,):
            raise DomainError(f"first column must have shape ({self.N},)")
        self.first_col = c

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        # DFT of a midpoint-symmetric real vector is real.
        return scipy.fft.fft(self.first_col).real

    def subsample(self, N: int) -> "CirculantOperator":
        """Operator for the nested N-point subset (stride slicing of column 1)."""
        if N < 1 or self.N % N != 0:
            raise DomainError(f"{N} does not divide {self.N}")
        return CirculantOperator(N, self.first_col[:: self.N // N].copy())


def kernel_first_column(spec: KernelSpec, lattice_points) -> CirculantOperator:
    """First column ``[K(t_k, 0)]_k`` of the kernel matrix on a rank-1 lattice.

    Only the first ceil(N/2)+1 entries are evaluated; the rest follow from the
    midpoint symmetry ``col[N-k] = col[k]``.
    """
    pts = np.asarray(getattr(lattice_points, "points", lattice_points), dtype=float)
    N = pts.shape[0]
    half = N // 2
    col = np.empty(N)
    head = np.ones(half + 1)
    for j in range(spec.s):
        head *= 1.0 + spec.gamma[j] * omega(spec.alpha, pts[: half + 1, j])
    col[: half + 1] = head
    if N > 1:
        col[half + 1 :] = head[1 : N - half][::-1]
    return CirculantOperator(N, col)


def circulant_solve(op: CirculantOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve ``K @ A = rhs`` for circulant K via FFT diagonalisation.

    rhs may be a vector (N,) or a matrix (N, M); columns are solved jointly.
    Raises :class:`IllConditionedKernelError` when any eigenvalue falls below
    ``EIGENVALUE_RTOL`` times the largest.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != op.N:
        raise DomainError(f"rhs has {rhs.shape[0]} rows, expected {op.N}")
    eig = op.eigenvalues
    cutoff = EIGENVALUE_RTOL * np.max(np.abs(eig))
    bad = np.abs(eig) < cutoff
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise IllConditionedKernelError(idx, float(eig[idx]), float(cutoff))
    eig_half = eig[: op.N // 2 + 1]
    vec = rhs.ndim == 1
    work = rhs[:, None] if vec else rhs
    # Forward FFT, divide by eigenvalues, inverse FFT; irfft keeps it real.
    spec = scipy.fft.rfft(work, axis=0) / eig_half[:, None]
    out = scipy.fft.irfft(spec, n=op.N, axis=0)
    return out[:, 0] if vec else out


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind via the alternating-sum formula."""
    if n < 0 or k < 0 or k > n or n > 20:
        raise DomainError(f"stirling2 requires 0 <= k <= n <= 20, got ({n}, {k})")
    if n == 0:
        return 1
    total = sum((-1) ** (k - j) * math.comb(k, j) * j**n for j in range(k + 1))
    return total // math.factorial(k)


# Bernoulli numbers B_2, B_4, ... used by the Euler-Maclaurin tail.
_BERNOULLI = (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0)


def riemann_zeta(x: float, n_direct: int = 64) -> float:
    """``zeta(x)`` for x > 1 by direct summation plus an Euler-Maclaurin tail.

    With the default 64 direct terms the correction series leaves a remainder
    far below 1e-12 for every x > 1 of interest here.
    """
    if not x > 1.0:
        raise DomainError(f"zeta requires x > 1, got {x}")
    n = n_direct
    total = float(np.sum(np.arange(1, n + 1, dtype=float) ** (-x)))
    total += n ** (1.0 - x) / (x - 1.0) - 0.5 * n ** (-x)
    poch = x  # x*(x+1)*...*(x+2i-2), updated per term
    power = float(n) ** (-x - 1.0)
    for i, b in enumerate(_BERNOULLI, start=1):
        total += b / math.factorial(2 * i) * poch * power
        poch *= (x + 2 * i - 1) * (x + 2 * i)
        power /= n * n
    return total


@dataclass(frozen=True)
class WeightRecipe:
    """Product ("serendipitous") weight recipe: drop the order-dependent part.

    lambda must lie in (1/(2*alpha), 1]; bbar is the per-dimension sequence
    the weights are built from.
    """

    lam: float
    bbar: np.ndarray
    alpha: int = 1
    mode: str = field(default="serendipitous")

    def __post_init__(self):
        object.__setattr__(self, "bbar", np.asarray(self.bbar, dtype=float))
        if self.mode != "serendipitous":
            raise DomainError(f"unsupported weight mode {self.mode!r}")
        if not (1 <= self.alpha <= _MAX_ALPHA):
            raise DomainError(f"alpha must be in [1, {_MAX_ALPHA}]")
        if not (1.0 / (2.0 * self.alpha) < self.lam <= 1.0):
            raise DomainError(
                f"lambda must lie in (1/(2*alpha), 1] = ({1/(2*self.alpha)}, 1], got {self.lam}"
            )
        if np.any(self.bbar <= 0.0):
            raise DomainError("bbar entries must be positive")


def serendipitous_weights(recipe: WeightRecipe, s: int | None = None) -> np.ndarray:
    """Per-dimension weights ``gamma_j`` from the product-form recipe.

    gamma_j = [ sum_{m=1}^{alpha} bbar_j^m S(alpha, m)
                / sqrt(2 e^{1/e} zeta(2 alpha lambda)) ]^{2/(1+lambda)}
    """
    if s is None:
        s = int(recipe.bbar.size)
    if s < 1 or s > recipe.bbar.size:
        raise DomainError(f"need 1 <= s <= {recipe.bbar.size}, got {s}")
    bbar = recipe.bbar[:s]
    num = np.zeros(s)
    for m in range(1, recipe.alpha + 1):
        num += bbar**m * stirling2(recipe.alpha, m)
    denom = math.sqrt(2.0 * math.exp(1.0 / math.e) * riemann_zeta(2.0 * recipe.alpha * recipe.lam))
    return (num / denom) ** (2.0 / (1.0 + recipe.lam))
