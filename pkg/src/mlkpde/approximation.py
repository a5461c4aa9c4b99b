"""Single-level and multilevel lattice-kernel surrogates of the PDE solution.

A single-level surrogate interpolates the FE solution over the parameter
domain: solve the PDE at N lattice points, stack the nodal values into U
(N x M), and solve the circulant system K A = U by FFT.  The multilevel
surrogate interpolates FE *differences* across a nested mesh hierarchy with
non-increasing point counts, reusing the level-0 kernel column and the
previous level's FE values through the embedded point structure.  Evaluation
at (x*, y*) contracts the spatial stencil of each level's coefficient matrix
against the kernel vector at y*.
"""

from __future__ import annotations

import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import fem2d
from .coefficient import CoefficientModel
from .kernel import (
    CirculantOperator,
    DomainError,
    KernelSpec,
    circulant_solve,
    kernel_cross,
    kernel_first_column,
)
from .lattice import EmbeddedLattice, InvalidDivisorError, PointSet, generate_points


class ConfigError(ValueError):
    """Invalid planner or build configuration."""


def _solve_rows(
    mesh: fem2d.MeshLevel,
    model: Optional[CoefficientModel],
    ys: np.ndarray,
    source,
    threads: int = 1,
    timer: "Optional[_StageTimer]" = None,
) -> np.ndarray:
    """FE nodal values at each parameter vector, rows in point order.

    With threads == 1 the assembly (coefficient evaluation) and CG stages are
    timed separately; threaded runs report the lump under "fe_solves" since
    process CPU time cannot be attributed per stage across workers.
    """
    U = np.empty((ys.shape[0], mesh.M))

    def one(k: int) -> None:
        U[k] = fem2d.solve_at(mesh, model, ys[k], source).coeffs

    if threads > 1:
        t = timer.start() if timer else None
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(ys.shape[0])))
        if timer:
            timer.add("fe_solves", *t)
    elif timer is None:
        for k in range(ys.shape[0]):
            one(k)
    else:
        for k in range(ys.shape[0]):
            t = timer.start()
            system = fem2d.assemble(mesh, model, ys[k], source)
            timer.add("assembly", *t)
            t = timer.start()
            U[k] = fem2d.solve_fe(system).coeffs
            timer.add("fe_solves", *t)
    return U


@dataclass
class LevelRecord:
    """One level of a built approximation."""

    N: int
    mesh: fem2d.MeshLevel
    A: np.ndarray  # (N, M_level), point-major


@dataclass
class MLApproximation:
    """Per-level coefficient matrices plus the shared lattice and kernel."""

    lattice: EmbeddedLattice
    kernel: KernelSpec
    levels: list[LevelRecord]
    stage_seconds: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def N0(self) -> int:
        return self.levels[0].N

    @property
    def points0(self) -> PointSet:
        return generate_points(self.lattice, self.N0)


@dataclass
class SingleLevelInterpolant(MLApproximation):
    """Degenerate one-level approximation interpolating the FE solution itself."""

    @property
    def N(self) -> int:
        return self.levels[0].N

    @property
    def A(self) -> np.ndarray:
        return self.levels[0].A

    @property
    def mesh(self) -> fem2d.MeshLevel:
        return self.levels[0].mesh


class _StageTimer:
    """CPU + wall seconds per named stage."""

    def __init__(self):
        self.seconds = {}

    def add(self, name: str, cpu0: float, wall0: float):
        cpu = time.process_time() - cpu0
        wall = time.perf_counter() - wall0
        c, w = self.seconds.get(name, (0.0, 0.0))
        self.seconds[name] = (c + cpu, w + wall)

    def start(self):
        return time.process_time(), time.perf_counter()

    def cpu_total(self) -> float:
        return sum(c for c, _ in self.seconds.values())


def _validate_levels(lattice: EmbeddedLattice, Ns: Sequence[int], ms: Sequence[int]):
    if len(Ns) != len(ms) or not Ns:
        raise ConfigError("level lists must be non-empty and of equal length")
    N0 = Ns[0]
    if lattice.N_max % N0 != 0:
        raise InvalidDivisorError(N0, lattice.N_max)
    for ell, N in enumerate(Ns):
        if ell and N > Ns[ell - 1]:
            raise ConfigError(f"N_l must be non-increasing, got {Ns}")
        if ell and ms[ell] != ms[ell - 1] + 1:
            raise ConfigError(f"mesh levels must ascend by 1, got {ms}")
        if N < 1 or N0 % N != 0:
            raise InvalidDivisorError(N, N0)


def build_single_level(
    lattice: EmbeddedLattice,
    N: int,
    kernel: KernelSpec,
    mesh_level: int,
    model: Optional[CoefficientModel],
    source: Callable = fem2d.default_source,
    threads: int = 1,
) -> SingleLevelInterpolant:
    """Construct the N-point interpolant of the level-`mesh_level` FE solution."""
    if kernel.s != lattice.s:
        raise ConfigError(f"kernel has {kernel.s} weights but lattice dimension is {lattice.s}")
    timer = _StageTimer()
    mesh = fem2d.build_mesh(mesh_level)
    pts = generate_points(lattice, N)

    t = timer.start()
    op = kernel_first_column(kernel, pts)
    timer.add("kernel_column", *t)

    U = _solve_rows(mesh, model, pts.points, source, threads, timer)

    t = timer.start()
    A = circulant_solve(op, U)
    timer.add("fft_solves", *t)

    return SingleLevelInterpolant(lattice, kernel, [LevelRecord(N, mesh, A)], timer.seconds)


def build_multilevel(
    lattice: EmbeddedLattice,
    levels: Sequence[tuple[int, int]],
    kernel: KernelSpec,
    model: Optional[CoefficientModel],
    source: Callable = fem2d.default_source,
    threads: int = 1,
) -> MLApproximation:
    """Construct the multilevel approximation from (N_l, mesh_l) pairs.

    Level 0 interpolates the coarse FE solution; level l >= 1 interpolates the
    difference between the level-l solution and the prolongated level-(l-1)
    solution, on the nested N_l-point subset.  Kernel columns come from stride
    slicing of the level-0 column and coarse values from stored rows of the
    previous level's U matrix, so mesh level l sees exactly N_l FE solves.
    """
    if kernel.s != lattice.s:
        raise ConfigError(f"kernel has {kernel.s} weights but lattice dimension is {lattice.s}")
    Ns = [int(N) for N, _ in levels]
    ms = [int(m) for _, m in levels]
    _validate_levels(lattice, Ns, ms)
    timer = _StageTimer()

    pts0 = generate_points(lattice, Ns[0])
    t = timer.start()
    op0 = kernel_first_column(kernel, pts0)
    timer.add("kernel_column", *t)

    records: list[LevelRecord] = []
    U_prev: Optional[np.ndarray] = None
    fe_counts = []
    for ell, (N, m) in enumerate(zip(Ns, ms)):
        mesh = fem2d.build_mesh(m)
        ys = pts0.points[:: Ns[0] // N]

        U = _solve_rows(mesh, model, ys, source, threads, timer)
        fe_counts.append(N)

        if ell == 0:
            rhs = U
        else:
            t = timer.start()
            P = fem2d.prolongation_matrix(ms[ell - 1])
            coarse_rows = U_prev[:: Ns[ell - 1] // N]
            rhs = U - coarse_rows @ P.T
            timer.add("prolongation", *t)

        t = timer.start()
        A = circulant_solve(op0.subsample(N), rhs)
        timer.add("fft_solves", *t)

        records.append(LevelRecord(N, mesh, A))
        U_prev = U

    out = MLApproximation(lattice, kernel, records, timer.seconds)
    out.stage_seconds["fe_solve_counts"] = fe_counts
    return out


def evaluate(approx: MLApproximation, x_star, y_star) -> float:
    """Surrogate value at (x*, y*): per-level spatial stencils dotted with kappa(y*).

    Cost O(s N_0): one kernel vector over the level-0 points plus O(N_l)
    work per level through the embedded stride indexing.
    """
    y = np.mod(np.asarray(y_star, dtype=float), 1.0)
    if y.shape != (approx.lattice.s,):
        raise DomainError(f"y_star must have {approx.lattice.s} components")
    pts0 = approx.points0
    kappa = kernel_cross(approx.kernel, pts0.points, y)
    total = 0.0
    for rec in approx.levels:
        cols, w = fem2d.interpolation_stencil(rec.mesh, x_star)
        if cols.size == 0:
            continue
        a_ell = rec.A[:, cols] @ w
        total += float(a_ell @ kappa[:: approx.N0 // rec.N])
    return total


def coefficients_at(approx: MLApproximation, y_star) -> list[np.ndarray]:
    """Per-level FE nodal coefficient vectors of the surrogate at y*.

    Summing the prolongated vectors reconstructs the surrogate as a FE
    function; used by the error estimators.
    """
    y = np.mod(np.asarray(y_star, dtype=float), 1.0)
    pts0 = approx.points0
    kappa = kernel_cross(approx.kernel, pts0.points, y)
    return [rec.A.T @ kappa[:: approx.N0 // rec.N] for rec in approx.levels]


@dataclass(frozen=True)
class LevelPlan:
    """Planner output: level count and per-level point counts."""

    epsilon: float
    h0: float
    beta: float
    mu: float
    d: int
    L: int
    N0_hat: float
    N_hat: tuple
    N: tuple
    snapped: bool

    @property
    def mesh_offsets(self) -> tuple:
        return tuple(range(self.L + 1))


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1).bit_length() if n > 1 else 0)


def plan_levels(
    epsilon: float,
    h0: float,
    beta: float,
    mu: float,
    d: int,
    snap_to_divisors: bool = True,
) -> LevelPlan:
    """Choose L and N_0..N_L so the interpolation error budget stays below eps/2.

    L = ceil(log2(2 h0^beta / eps) / beta); the continuous point counts come
    from the cost-minimising profile
        Nhat_l = Nhat_0 * 2^(-(d+beta) l / (1+mu)),
        Nhat_0 = (2 eps^-1 h0^beta * sum_l 2^((d mu - beta) l / (1+mu)))^(1/mu),
    rounded up to integers, and optionally up again to powers of two so every
    N_l divides N_0 and the embedded lattice applies (rounding up only
    tightens the error budget).
    """
    if not (mu > 0.0 and beta > 0.0 and d >= 1 and 0.0 < h0 < 1.0):
        raise ConfigError(f"require mu, beta > 0, d >= 1, h0 in (0,1); got {(mu, beta, d, h0)}")
    limit = min(1.0, 2.0 * h0**beta)
    if not 0.0 < epsilon < limit:
        raise ConfigError(
            f"epsilon must lie in (0, min(1, 2 h0^beta)) = (0, {limit:.6g}), got {epsilon}"
        )
    L = math.ceil(math.log2(2.0 * h0**beta / epsilon) / beta)
    ells = np.arange(L + 1)
    geo = np.sum(2.0 ** ((d * mu - beta) * ells / (1.0 + mu)))
    N0_hat = (2.0 / epsilon * h0**beta * geo) ** (1.0 / mu)
    N_hat = N0_hat * 2.0 ** (-(d + beta) * ells / (1.0 + mu))
    N = [math.ceil(v) for v in N_hat]
    snapped = bool(snap_to_divisors)
    if snapped:
        N = [_next_pow2(v) for v in N]
    return LevelPlan(
        epsilon, h0, beta, mu, d, int(L), float(N0_hat), tuple(map(float, N_hat)), tuple(N), snapped
    )


# --- binary serialization -------------------------------------------------
#
# Layout (little-endian):
#   magic "MLKA" | uint32 version | int64 L, s, alpha
#   per level: int64 N_l, int64 m_l
#   float64 gamma[s] | int64 z[s] | per level float64 A_l row-major

_MAGIC = b"MLKA"
_VERSION = 1


def save_approximation(approx: MLApproximation, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<3q", approx.L, approx.lattice.s, approx.kernel.alpha))
        for rec in approx.levels:
            f.write(struct.pack("<2q", rec.N, rec.mesh.m))
        f.write(approx.kernel.gamma.astype("<f8").tobytes())
        f.write(approx.lattice.z.astype("<i8").tobytes())
        for rec in approx.levels:
            f.write(np.ascontiguousarray(rec.A, dtype="<f8").tobytes())


def load_approximation(path) -> MLApproximation:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ConfigError(f"{path}: not a MLKA file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        L, s, alpha = struct.unpack("<3q", f.read(24))
        shapes = [struct.unpack("<2q", f.read(16)) for _ in range(L + 1)]
        gamma = np.frombuffer(f.read(8 * s), dtype="<f8")
        z = np.frombuffer(f.read(8 * s), dtype="<i8")
        kernel = KernelSpec(int(alpha), gamma.copy())
        records = []
        for N, m in shapes:
            mesh = fem2d.build_mesh(int(m))
            A = np.frombuffer(f.read(8 * N * mesh.M), dtype="<f8").reshape(N, mesh.M).copy()
            records.append(LevelRecord(int(N), mesh, A))
    N_lat = max(2, int(shapes[0][0]))
    lattice = EmbeddedLattice(int(s), N_lat, z % N_lat)
    cls = SingleLevelInterpolant if L == 0 else MLApproximation
    return cls(lattice, kernel, records)
