"""Rank-1 lattice point sets with power-of-two embedding.

Point sets are ``t_k = (k*z mod N)/N``.  Restricting N to powers of two makes
coprimality of the generating vector equal oddness and gives automatic
nesting: the N-point set is the stride-(N_max/N) subset of the N_max-point
set.  Generating vectors are built by a component-by-component search that
minimises the Korobov worst-case criterion with the kernel weight function,
or loaded from a plain-text file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernel import DomainError, omega


class InvalidDivisorError(ValueError):
    """Requested point count does not divide the lattice size."""

    def __init__(self, N: int, N_max: int):
        super().__init__(f"N={N} does not divide N_max={N_max}")
        self.N = N
        self.N_max = N_max


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PointSet:
    """N lattice points in [0,1)^s, in index order (t_0 = 0)."""

    N: int
    s: int
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        if self.points.shape != (self.N, self.s):
            raise DomainError(f"points must have shape ({self.N}, {self.s})")


@dataclass(frozen=True)
class EmbeddedLattice:
    """Generating vector z for N_max points; all power-of-two divisors nest."""

    s: int
    N_max: int
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int64)
        object.__setattr__(self, "z", z)
        if not _is_pow2(self.N_max) or self.N_max < 2:
            raise DomainError(f"N_max must be a power of two >= 2, got {self.N_max}")
        if z.shape != (self.s,):
            raise DomainError(f"z must have {self.s} components")
        if np.any(z < 1) or np.any(z >= self.N_max):
            raise DomainError("z components must lie in {1,...,N_max-1}")
        if np.any(z % 2 == 0):
            raise DomainError("z components must be odd (coprime to a power of two)")


def generate_points(lattice: EmbeddedLattice, N: int) -> PointSet:
    """The N-point set ``t_k = (k*z mod N)/N`` for a divisor N of N_max."""
    if N < 1 or lattice.N_max % N != 0:
        raise InvalidDivisorError(N, lattice.N_max)
    k = np.arange(N, dtype=np.int64)
    pts = (k[:, None] * lattice.z[None, :]) % N / N
    return PointSet(N, lattice.s, pts)


def subsample_stride(N_max: int, N: int) -> int:
    """Stride such that point k of the N-set is point k*stride of the N_max-set."""
    if N < 1 or N_max % N != 0:
        raise InvalidDivisorError(N, N_max)
    return N_max // N


def euler_totient(N: int) -> int:
    """Count of integers in {1,...,N} coprime to N."""
    if N < 1:
        raise DomainError(f"totient requires N >= 1, got {N}")
    result = N
    n = N
    p = 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


def shift_points(points: PointSet, shift) -> PointSet:
    """Componentwise shift mod 1 (used for error-estimation points y_r + t_k)."""
    shift = np.asarray(shift, dtype=float)
    if shift.shape != (points.s,):
        raise DomainError(f"shift must have {points.s} components, got {shift.shape}")
    return PointSet(points.N, points.s, np.mod(points.points + shift, 1.0))


def cbc_construct(N_max: int, s: int, weights, alpha: int = 1, chunk: int = 256) -> EmbeddedLattice:
    """Component-by-component generating-vector search.

    z_1 = 1; each later z_j is the odd candidate minimising the Korobov
    worst-case criterion
        E^2_j(z) = -1 + (1/N) sum_k prod_{i<=j} (1 + gamma_i * omega_alpha(t_{k,i}))
    with ties broken by the smallest candidate.  Deterministic regardless of
    evaluation order; candidates are scanned in ascending order in chunks.
    """
    weights = np.asarray(weights, dtype=float)
    if not _is_pow2(N_max) or N_max < 4:
        raise DomainError(f"N_max must be a power of two >= 4, got {N_max}")
    if s < 1 or weights.shape != (s,) or np.any(weights <= 0.0):
        raise DomainError("weights must be s positive values")
    N = N_max
    k = np.arange(N, dtype=np.int64)
    omega_tab = omega(alpha, k / N)

    z = np.empty(s, dtype=np.int64)
    z[0] = 1
    running = 1.0 + weights[0] * omega_tab  # prod over dims selected so far, per k
    candidates = np.arange(1, N, 2, dtype=np.int64)
    for j in range(1, s):
        best_val = math.inf
        best_z = -1
        for lo in range(0, candidates.size, chunk):
            cand = candidates[lo : lo + chunk]
            idx = (cand[:, None] * k[None, :]) % N
            crit = ((1.0 + weights[j] * omega_tab[idx]) * running[None, :]).mean(axis=1) - 1.0
            pos = int(np.argmin(crit))
            if crit[pos] < best_val:
                best_val = float(crit[pos])
                best_z = int(cand[pos])
        z[j] = best_z
        running = running * (1.0 + weights[j] * omega_tab[(best_z * k) % N])
    return EmbeddedLattice(s, N_max, z)


def save_generating_vector(lattice: EmbeddedLattice, path) -> None:
    """Write the plain-text vector file: N_max, s, then one z_j per line."""
    lines = [str(lattice.N_max), str(lattice.s)] + [str(int(v)) for v in lattice.z]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_generating_vector(path) -> EmbeddedLattice:
    """Read a vector file written by :func:`save_generating_vector`.

    Externally constructed vectors use the same format, so production-grade
    embedded-CBC vectors can be dropped in.
    """
    tokens = Path(path).read_text(encoding="ascii").split()
    if len(tokens) < 2:
        raise DomainError(f"{path}: expected at least N_max and s")
    N_max, s = int(tokens[0]), int(tokens[1])
    if len(tokens) != 2 + s:
        raise DomainError(f"{path}: expected {s} vector components, found {len(tokens) - 2}")
    z = np.array([int(t) for t in tokens[2:]], dtype=np.int64)
    return EmbeddedLattice(s, N_max, z)
