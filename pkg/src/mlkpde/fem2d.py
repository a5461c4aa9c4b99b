"""Piecewise-linear finite elements on nested uniform meshes of the unit square.

Level m splits the square into n = 2^m cells per side, each cut along its
lower-left-to-upper-right diagonal, giving 2 n^2 congruent right triangles and
M = (n-1)^2 interior nodes (homogeneous Dirichlet).  The diagonal direction is
the same on every level so the FE spaces are exactly nested and prolongation
is pointwise exact.

Assembly uses the one-point centroid rule for both the coefficient and the
source; with constant element gradients this keeps the O(h^2) L2 rate while
needing one coefficient value per triangle.  Per-parameter assembly reduces to
one sparse matrix-vector product thanks to a precomputed scatter operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficient import CoefficientModel, sin_table
from .kernel import DomainError

# Element stiffness (unit coefficient) for the two triangle orientations.
# Vertex order: lower = (LL, LR, UR), upper = (LL, UR, UL).  Independent of h.
_K_LOWER = np.array([[0.5, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 0.5]])
_K_UPPER = np.array([[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]])


class CoefficientPositivityError(ArithmeticError):
    """Coefficient evaluated non-positive at a quadrature point."""


class NoConvergenceError(ArithmeticError):
    """CG failed to reach the residual tolerance within the iteration cap."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG did not converge within {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


def default_source(xs: np.ndarray) -> np.ndarray:
    """The fixed load f(x) = x_2 of the experiment problem."""
    return np.asarray(xs)[:, 1]


class MeshLevel:
    """Uniform criss triangulation at level m (h = 2^-m)."""

    def __init__(self, m: int):
        if not 1 <= m <= 10:
            raise DomainError(f"mesh level must be in [1, 10], got {m}")
        self.m = m
        self.n = 2**m
        self.h = 1.0 / self.n
        self.M = (self.n - 1) ** 2

        n = self.n
        # Full grid node g = i + j*(n+1) at (i*h, j*h); interior map is
        # lexicographic in (i, j) with x fastest.
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        interior = (ii > 0) & (ii < n) & (jj > 0) & (jj < n)
        self._interior_of_grid = np.full((n + 1) * (n + 1), -1, dtype=np.int64)
        g = (ii + jj * (n + 1))[interior]
        self._interior_of_grid[g] = (ii[interior] - 1) + (jj[interior] - 1) * (n - 1)

        cx, cy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        cx = cx.ravel()
        cy = cy.ravel()
        ll = cx + cy * (n + 1)
        lr = ll + 1
        ul = ll + (n + 1)
        ur = ul + 1
        lower = np.stack([ll, lr, ur], axis=1)
        upper = np.stack([ll, ur, ul], axis=1)
        self.tri_nodes = np.concatenate([lower, upper], axis=0)  # (2 n^2, 3)
        self.n_tri = self.tri_nodes.shape[0]
        self.tri_area = self.h * self.h / 2.0

        verts = np.stack([self.tri_nodes % (n + 1), self.tri_nodes // (n + 1)], axis=2) * self.h
        self.centroids = verts.mean(axis=1)  # (2 n^2, 2)

        self._build_assembly_operator()
        self._load_cache: dict[int, np.ndarray] = {}
        self._sin_cache: dict[tuple, np.ndarray] = {}

    def _build_assembly_operator(self):
        base = np.concatenate(
            [np.tile(_K_LOWER, (self.n_tri // 2, 1, 1)), np.tile(_K_UPPER, (self.n_tri // 2, 1, 1))]
        )
        rows = self._interior_of_grid[self.tri_nodes]  # (n_tri, 3)
        r = np.repeat(rows, 3, axis=1).ravel()
        c = np.tile(rows, (1, 3)).ravel()
        v = base.reshape(self.n_tri, 9).ravel()
        t = np.repeat(np.arange(self.n_tri), 9)
        keep = (r >= 0) & (c >= 0)
        r, c, v, t = r[keep], c[keep], v[keep], t[keep]

        # Group coincident (r, c) entries once; per-parameter assembly is then
        # stiffness.data = scatter @ psi_at_centroids.
        key = r * self.M + c
        order = np.argsort(key, kind="stable")
        key, r, c, v, t = key[order], r[order], c[order], v[order], t[order]
        uniq, pos = np.unique(key, return_inverse=True)
        self._stiff_rows = (uniq // self.M).astype(np.int32)
        self._stiff_cols = (uniq % self.M).astype(np.int32)
        self._scatter = sp.csr_matrix(
            (v, (pos, t)), shape=(uniq.size, self.n_tri)
        )
        template = sp.csr_matrix(
            (np.zeros(uniq.size), (self._stiff_rows, self._stiff_cols)), shape=(self.M, self.M)
        )
        template.sort_indices()
        self._template = template
        # csr_matrix construction sorts by (row, col), same as our key order.

        node_r = rows.ravel()
        node_t = np.repeat(np.arange(self.n_tri), 3)
        ok = node_r >= 0
        self._load_op = sp.csr_matrix(
            (np.full(ok.sum(), self.tri_area / 3.0), (node_r[ok], node_t[ok])),
            shape=(self.M, self.n_tri),
        )

    def node_coords(self) -> np.ndarray:
        """Coordinates of the interior nodes in index order, shape (M, 2)."""
        idx = np.arange(self.M)
        i = idx % (self.n - 1) + 1
        j = idx // (self.n - 1) + 1
        return np.stack([i, j], axis=1) * self.h

    def psi_table(self, model: CoefficientModel) -> np.ndarray:
        key = (model.s, model.C, model.theta)
        tab = self._sin_cache.get(key)
        if tab is None:
            tab = sin_table(model, self.centroids)
            self._sin_cache[key] = tab
        return tab

    def load_vector(self, source: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        key = id(source)
        vec = self._load_cache.get(key)
        if vec is None:
            vec = self._load_op @ np.asarray(source(self.centroids), dtype=float)
            self._load_cache[key] = vec
        return vec


@lru_cache(maxsize=None)
def build_mesh(m: int) -> MeshLevel:
    """Shared immutable mesh for level m."""
    return MeshLevel(m)


@dataclass
class SparseSystem:
    """Assembled interior stiffness matrix and load vector."""

    stiffness: sp.csr_matrix
    load: np.ndarray
    mesh: MeshLevel


@dataclass
class FESolution:
    """Interior nodal values on a mesh; boundary trace is zero by construction."""

    mesh: MeshLevel
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.M,):
            raise DomainError(f"expected {self.mesh.M} coefficients, got {self.coeffs.shape}")


def assemble(
    mesh: MeshLevel,
    coeff: Optional[CoefficientModel],
    y=None,
    source: Callable[[np.ndarray], np.ndarray] = default_source,
) -> SparseSystem:
    """Stiffness and load with the coefficient frozen at triangle centroids.

    ``coeff=None`` (or C = 0) gives the constant-one field.  Raises
    :class:`CoefficientPositivityError` if the field is not positive at every
    centroid.
    """
    if coeff is None or coeff.C == 0.0:
        psi = np.ones(mesh.n_tri)
    else:
        y = np.asarray(y, dtype=float)
        psi = 1.0 + mesh.psi_table(coeff) @ np.sin(2.0 * math.pi * y[: coeff.s])
    if np.any(psi <= 0.0):
        bad = int(np.argmax(psi <= 0.0))
        raise CoefficientPositivityError(
            f"coefficient is {psi[bad]:.6e} at centroid {mesh.centroids[bad]}"
        )
    K = mesh._template.copy()
    K.data = mesh._scatter @ psi
    return SparseSystem(K, mesh.load_vector(source), mesh)


def solve_fe(system: SparseSystem, rtol: float = 1e-12) -> FESolution:
    """Jacobi-preconditioned CG solve of the SPD interior system."""
    K, b = system.stiffness, system.load
    M = b.size
    inv_diag = 1.0 / K.diagonal()
    precond = spla.LinearOperator((M, M), matvec=lambda v: inv_diag * v)
    maxiter = 20 * M
    x, info = spla.cg(K, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
    if info != 0:
        resid = float(np.linalg.norm(b - K @ x) / np.linalg.norm(b))
        raise NoConvergenceError(maxiter, resid)
    return FESolution(system.mesh, x)


def solve_at(
    mesh: MeshLevel,
    coeff: Optional[CoefficientModel],
    y,
    source: Callable[[np.ndarray], np.ndarray] = default_source,
) -> FESolution:
    """Assemble-and-solve convenience wrapper."""
    return solve_fe(assemble(mesh, coeff, y, source))


@lru_cache(maxsize=None)
def prolongation_matrix(m_coarse: int) -> sp.csr_matrix:
    """Exact interior prolongation from level m to level m+1.

    Fine nodes sit either on coarse nodes (copied) or on coarse edge midpoints
    (average of the two endpoints); cell-centre fine nodes lie on the coarse
    diagonal, so they average the LL and UR corners.
    """
    coarse = build_mesh(m_coarse)
    fine = build_mesh(m_coarse + 1)
    nc = coarse.n
    rows, cols, vals = [], [], []

    def coarse_idx(a: int, b: int) -> int:
        if 0 < a < nc and 0 < b < nc:
            return (a - 1) + (b - 1) * (nc - 1)
        return -1  # boundary: value 0

    for j in range(1, fine.n):
        for i in range(1, fine.n):
            fi = (i - 1) + (j - 1) * (fine.n - 1)
            if i % 2 == 0 and j % 2 == 0:
                pairs = [(coarse_idx(i // 2, j // 2), 1.0)]
            elif i % 2 == 1 and j % 2 == 0:
                a = (i - 1) // 2
                pairs = [(coarse_idx(a, j // 2), 0.5), (coarse_idx(a + 1, j // 2), 0.5)]
            elif i % 2 == 0 and j % 2 == 1:
                b = (j - 1) // 2
                pairs = [(coarse_idx(i // 2, b), 0.5), (coarse_idx(i // 2, b + 1), 0.5)]
            else:
                a, b = (i - 1) // 2, (j - 1) // 2
                pairs = [(coarse_idx(a, b), 0.5), (coarse_idx(a + 1, b + 1), 0.5)]
            for cidx, w in pairs:
                if cidx >= 0:
                    rows.append(fi)
                    cols.append(cidx)
                    vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine.M, coarse.M))


def prolongate(coarse: FESolution, fine_mesh: MeshLevel) -> FESolution:
    """Re-express a coarse solution exactly in the next finer nested space."""
    if fine_mesh.m != coarse.mesh.m + 1:
        raise DomainError(
            f"prolongation goes one level up: coarse m={coarse.mesh.m}, fine m={fine_mesh.m}"
        )
    P = prolongation_matrix(coarse.mesh.m)
    return FESolution(fine_mesh, P @ coarse.coeffs)


def prolongate_to(sol: FESolution, m_target: int) -> FESolution:
    """Chain prolongations up to the requested level."""
    out = sol
    while out.mesh.m < m_target:
        out = prolongate(out, build_mesh(out.mesh.m + 1))
    if out.mesh.m != m_target:
        raise DomainError(f"cannot prolongate from m={sol.mesh.m} down to m={m_target}")
    return out


@lru_cache(maxsize=None)
def prolongation_chain(m_from: int, m_to: int) -> sp.csr_matrix:
    """Composed prolongation matrix from level m_from up to m_to."""
    if m_to < m_from:
        raise DomainError(f"cannot prolongate from m={m_from} down to m={m_to}")
    P = sp.identity(build_mesh(m_from).M, format="csr")
    for m in range(m_from, m_to):
        P = prolongation_matrix(m) @ P
    return P


def _grid_values(sol: FESolution) -> np.ndarray:
    n = sol.mesh.n
    full = np.zeros((n + 1) * (n + 1))
    idx = np.arange(sol.mesh.M)
    i = idx % (n - 1) + 1
    j = idx // (n - 1) + 1
    full[i + j * (n + 1)] = sol.coeffs
    return full


def l2_norm(sol: FESolution) -> float:
    """Exact L2 norm via the element mass matrix (boundary values are 0)."""
    full = _grid_values(sol)
    v = full[sol.mesh.tri_nodes]  # (n_tri, 3)
    # v^T M v per triangle = area/12 * ((v0+v1+v2)^2 + v0^2+v1^2+v2^2)
    quad = (v.sum(axis=1) ** 2 + (v**2).sum(axis=1)) * (sol.mesh.tri_area / 12.0)
    return math.sqrt(float(quad.sum()))


@lru_cache(maxsize=None)
def mass_matrix(m: int) -> sp.csr_matrix:
    """Interior-node mass matrix (boundary rows/cols dropped; their values are 0)."""
    mesh = build_mesh(m)
    local = mesh.tri_area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    rows = mesh._interior_of_grid[mesh.tri_nodes]
    r = np.repeat(rows, 3, axis=1).ravel()
    c = np.tile(rows, (1, 3)).ravel()
    v = np.tile(local.ravel(), mesh.n_tri)
    keep = (r >= 0) & (c >= 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(mesh.M, mesh.M))


def l2_norms_rows(mesh: MeshLevel, rows: np.ndarray) -> np.ndarray:
    """L2 norms of many coefficient vectors at once (rows of shape (n, M))."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    mm = mass_matrix(mesh.m)
    quad = np.einsum("ij,ij->i", rows, (mm @ rows.T).T)
    return np.sqrt(np.maximum(quad, 0.0))


def l2_diff(a: FESolution, b: FESolution) -> float:
    """L2 distance; the coarser solution is prolongated to the finer mesh first."""
    if a.mesh.m < b.mesh.m:
        a = prolongate_to(a, b.mesh.m)
    elif b.mesh.m < a.mesh.m:
        b = prolongate_to(b, a.mesh.m)
    return l2_norm(FESolution(a.mesh, a.coeffs - b.coeffs))


def interpolation_stencil(mesh: MeshLevel, x_star) -> tuple[np.ndarray, np.ndarray]:
    """Interior node indices and barycentric weights covering x_star.

    Returns empty arrays on the boundary (Dirichlet zero); raises outside the
    closed unit square.
    """
    x = np.asarray(x_star, dtype=float)
    if x.shape != (2,):
        raise DomainError(f"x_star must be a 2-d point, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError(f"x_star {x} outside the unit square")
    if np.any(x == 0.0) or np.any(x == 1.0):
        return np.empty(0, dtype=np.int64), np.empty(0)
    n = mesh.n
    cx = min(int(x[0] * n), n - 1)
    cy = min(int(x[1] * n), n - 1)
    xi = x[0] * n - cx
    eta = x[1] * n - cy
    if xi >= eta:  # lower triangle (LL, LR, UR)
        corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1)]
        weights = [1.0 - xi, xi - eta, eta]
    else:  # upper triangle (LL, UR, UL)
        corners = [(cx, cy), (cx + 1, cy + 1), (cx, cy + 1)]
        weights = [1.0 - eta, xi, eta - xi]
    cols, w = [], []
    for (a, b), wt in zip(corners, weights):
        if 0 < a < n and 0 < b < n:
            cols.append((a - 1) + (b - 1) * (n - 1))
            w.append(wt)
    return np.asarray(cols, dtype=np.int64), np.asarray(w)


def evaluate_fe(sol: FESolution, x_star) -> float:
    """Point value of the piecewise-linear function (0 on the boundary)."""
    cols, w = interpolation_stencil(sol.mesh, x_star)
    if cols.size == 0:
        return 0.0
    return float(sol.coeffs[cols] @ w)
