"""Empirical convergence and cost studies, CSV emission, and rate fitting.

Five studies: FE refinement error, dimension-truncation error, single-level
interpolation error, interpolation error of FE level differences, and the
single-level vs multilevel cost comparison.  Errors are root-mean-square L2
norms over lattice (or Sobol-shifted lattice) parameter points; rates are
least-squares slopes in log2-log2 coordinates.

CSV schema (one file per study, LF endings, 17 significant digits):
    study,preset,param,value,error,cpu_seconds
`param` names the series and x-variable of a row: "inv_h", "s", "N",
"N@ell=<l>" for the level study, and "error:sl"/"error:ml" for the cost
study (where `value` repeats the estimated error and the fit is cpu vs
error).  A companion <name>.meta.json echoes the configuration and fits.
All value/error columns are deterministic for a fixed configuration;
cpu_seconds is measured and varies run to run.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import fem2d
from .approximation import (
    _solve_rows,
    build_multilevel,
    build_single_level,
)
from .coefficient import CoefficientModel, bbar_sequence, preset as make_preset, truncate
from .kernel import (
    DomainError,
    KernelSpec,
    WeightRecipe,
    circulant_solve,
    kernel_cross_matrix,
    kernel_first_column,
    serendipitous_weights,
)
from .lattice import EmbeddedLattice, cbc_construct, generate_points


# --- Sobol' shift generation ------------------------------------------------

_SOBOL_BITS = 32
_SOBOL_MAX_DIM = 64


@dataclass(frozen=True)
class SobolShifts:
    """First R points of the 64-dimension Sobol' sequence (zero point skipped)."""

    R: int
    s: int
    points: np.ndarray


def _load_direction_data() -> list[tuple[int, list[int]]]:
    text = resources.files("mlkpde").joinpath("data/joe_kuo_64.txt").read_text("ascii")
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [int(t) for t in line.split()]
        rows.append((parts[1], parts[2:]))
    return rows


_DIRECTION_CACHE: dict[int, np.ndarray] = {}


def _direction_vectors(s: int) -> np.ndarray:
    """Direction integers V[j, i] scaled by 2^(i+1) <= 2^_SOBOL_BITS."""
    if s in _DIRECTION_CACHE:
        return _DIRECTION_CACHE[s]
    data = _load_direction_data()
    V = np.zeros((s, _SOBOL_BITS), dtype=np.uint64)
    V[0] = [1 << (_SOBOL_BITS - i - 1) for i in range(_SOBOL_BITS)]
    for j in range(1, s):
        poly, m_init = data[j - 1]
        deg = poly.bit_length() - 1
        m = list(m_init)
        for i in range(deg, _SOBOL_BITS):
            new = m[i - deg] ^ (m[i - deg] << deg)
            for r in range(1, deg):
                if (poly >> (deg - r)) & 1:
                    new ^= m[i - r] << r
            m.append(new)
        V[j] = [m[i] << (_SOBOL_BITS - i - 1) for i in range(_SOBOL_BITS)]
    _DIRECTION_CACHE[s] = V
    return V


def sobol_points(n: int, s: int, skip_zero: bool = True) -> np.ndarray:
    """Sobol' points in radical-inverse index order (no Gray-code reordering)."""
    if s < 1 or s > _SOBOL_MAX_DIM:
        raise DomainError(f"Sobol dimension must be in [1, {_SOBOL_MAX_DIM}], got {s}")
    V = _direction_vectors(s)
    start = 1 if skip_zero else 0
    out = np.zeros((n, s))
    for row, k in enumerate(range(start, start + n)):
        acc = np.zeros(s, dtype=np.uint64)
        i = 0
        kk = k
        while kk:
            if kk & 1:
                acc ^= V[:, i]
            kk >>= 1
            i += 1
        out[row] = acc / float(1 << _SOBOL_BITS)
    return out


def sobol_shifts(R: int, s: int) -> SobolShifts:
    """Deterministic shift vectors y_r for the residual error estimators."""
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    return SobolShifts(R, s, sobol_points(R, s))


# --- rate fitting and study results ----------------------------------------


def fit_rate(rows: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line on (log2 x, log2 err); returns (rate, intercept).

    rate is minus the fitted slope, so errors decaying like x^-r report r > 0.
    """
    rows = list(rows)
    if len(rows) < 3:
        raise DomainError(f"rate fit needs at least 3 rows, got {len(rows)}")
    x = np.array([r[0] for r in rows], dtype=float)
    y = np.array([r[1] for r in rows], dtype=float)
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise DomainError("rate fit requires positive values")
    slope, intercept = np.polyfit(np.log2(x), np.log2(y), 1)
    return float(-slope), float(intercept)


@dataclass
class StudyRow:
    param: str
    value: float
    error: float
    cpu_seconds: float


@dataclass
class StudyResult:
    """Rows plus the headline fit and the full configuration echo."""

    kind: str
    preset: str
    rows: list[StudyRow]
    rate: Optional[float]
    intercept: Optional[float]
    config: dict
    extra: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        lines = ["study,preset,param,value,error,cpu_seconds"]
        for r in self.rows:
            lines.append(
                f"{self.kind},{self.preset},{r.param},{r.value:.17g},"
                f"{r.error:.17g},{r.cpu_seconds:.17g}"
            )
        return "\n".join(lines) + "\n"

    def write(self, out_dir, basename: str) -> tuple[str, str]:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{basename}.csv"
        meta_path = out / f"{basename}.meta.json"
        with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.csv_text())
        meta = {
            "study": self.kind,
            "preset": self.preset,
            "config": self.config,
            "fit": {"rate": self.rate, "intercept": self.intercept},
            "extra": self.extra,
        }
        with open(meta_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")
        return str(csv_path), str(meta_path)


# --- shared setup -----------------------------------------------------------


def _resolve_model(preset, s: int) -> tuple[CoefficientModel, str]:
    if isinstance(preset, CoefficientModel):
        name = f"custom(C={preset.C:g},theta={preset.theta:g})"
        return preset, name
    return make_preset(preset, s=s), str(preset)


def _kernel_for(model: CoefficientModel, alpha: int, lam: float) -> KernelSpec:
    if model.C == 0.0:
        # degenerate deterministic field: unit weights for the quadrature lattice
        return KernelSpec(alpha, np.ones(model.s))
    gamma = serendipitous_weights(WeightRecipe(lam=lam, bbar=bbar_sequence(model), alpha=alpha))
    return KernelSpec(alpha, gamma)


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1).bit_length() if n > 1 else 0)


def _study_lattice(lattice: Optional[EmbeddedLattice], N_needed: int, spec: KernelSpec):
    if lattice is not None:
        if lattice.N_max % N_needed != 0:
            raise DomainError(
                f"supplied lattice N_max={lattice.N_max} not divisible by N={N_needed}"
            )
        return lattice
    return cbc_construct(max(4, _next_pow2(N_needed)), spec.s, spec.gamma, spec.alpha)


class _CpuClock:
    def __enter__(self):
        self.cpu0 = time.process_time()
        return self

    def __exit__(self, *exc):
        self.seconds = time.process_time() - self.cpu0
        return False


def _shifted_points(points: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """(R*N, s) array of (y_r + t_k) mod 1, r-major then k."""
    return np.mod(shifts[:, None, :] + points[None, :, :], 1.0).reshape(
        -1, points.shape[1]
    )


# --- studies ----------------------------------------------------------------


def fe_error_study(
    preset,
    m_list: Sequence[int],
    m_ref: int,
    N_quad: int,
    s: int = 16,
    alpha: int = 1,
    lam: float = 0.6,
    lattice: Optional[EmbeddedLattice] = None,
    threads: int = 1,
) -> StudyResult:
    """RMS L2 distance of level-m solutions to the m_ref reference, per mesh level.

    The parametric integral is an equal-weight average over N_quad lattice
    points; the fitted rate against 1/h is the observed FE order beta.
    """
    m_list = sorted(int(m) for m in m_list)
    if m_ref <= max(m_list):
        raise DomainError(f"m_ref={m_ref} must exceed max(m_list)={max(m_list)}")
    model, name = _resolve_model(preset, s)
    spec = _kernel_for(model, alpha, lam)
    lat = _study_lattice(lattice, N_quad, spec)
    ys = generate_points(lat, N_quad).points

    with _CpuClock() as ref_clock:
        U_ref = _solve_rows(fem2d.build_mesh(m_ref), model, ys, fem2d.default_source, threads)
    mesh_ref = fem2d.build_mesh(m_ref)

    rows = []
    for m in m_list:
        with _CpuClock() as clk:
            U_m = _solve_rows(fem2d.build_mesh(m), model, ys, fem2d.default_source, threads)
        P = fem2d.prolongation_chain(m, m_ref)
        norms = fem2d.l2_norms_rows(mesh_ref, U_m @ P.T - U_ref)
        err = float(np.sqrt(np.mean(norms**2)))
        rows.append(StudyRow("inv_h", float(2**m), err, clk.seconds / N_quad))
    rate, intercept = fit_rate([(r.value, r.error) for r in rows]) if len(rows) >= 3 else (None, None)
    cost_rate = (
        fit_rate([(r.value, r.cpu_seconds) for r in rows])[0] if len(rows) >= 3 else None
    )
    config = {
        "m_list": m_list,
        "m_ref": m_ref,
        "N_quad": N_quad,
        "s": model.s,
        "alpha": alpha,
        "lambda": lam,
        "z": [int(v) for v in lat.z],
        "threads": threads,
    }
    return StudyResult(
        "fe",
        name,
        rows,
        rate,
        intercept,
        config,
        extra={"cost_exponent_tau": None if cost_rate is None else -cost_rate,
               "ref_cpu_seconds": ref_clock.seconds},
    )


def truncation_study(
    preset,
    s_list: Sequence[int],
    s_ref: int,
    m: int,
    N_quad: int,
    alpha: int = 1,
    lam: float = 0.6,
    lattice: Optional[EmbeddedLattice] = None,
    threads: int = 1,
) -> StudyResult:
    """RMS L2 distance of s-truncated solutions to the s_ref reference; rate = kappa."""
    s_list = sorted(int(v) for v in s_list)
    if s_ref <= max(s_list):
        raise DomainError(f"s_ref={s_ref} must exceed max(s_list)={max(s_list)}")
    model_ref, name = _resolve_model(preset, s_ref)
    if model_ref.s != s_ref:
        model_ref = CoefficientModel(s_ref, model_ref.C, model_ref.theta)
    spec = _kernel_for(model_ref, alpha, lam)
    lat = _study_lattice(lattice, N_quad, spec)
    ys = generate_points(lat, N_quad).points
    mesh = fem2d.build_mesh(m)

    with _CpuClock() as ref_clock:
        U_ref = _solve_rows(mesh, model_ref, ys, fem2d.default_source, threads)

    rows = []
    for s_val in s_list:
        with _CpuClock() as clk:
            U_s = _solve_rows(mesh, truncate(model_ref, s_val), ys, fem2d.default_source, threads)
        norms = fem2d.l2_norms_rows(mesh, U_s - U_ref)
        err = float(np.sqrt(np.mean(norms**2)))
        rows.append(StudyRow("s", float(s_val), err, clk.seconds / N_quad))
    rate, intercept = fit_rate([(r.value, r.error) for r in rows]) if len(rows) >= 3 else (None, None)
    config = {
        "s_list": s_list,
        "s_ref": s_ref,
        "m": m,
        "N_quad": N_quad,
        "alpha": alpha,
        "lambda": lam,
        "z": [int(v) for v in lat.z],
        "threads": threads,
    }
    return StudyResult(
        "truncation", name, rows, rate, intercept, config,
        extra={"ref_cpu_seconds": ref_clock.seconds},
    )


def sl_error_study(
    preset,
    N_list: Sequence[int],
    m_star: int,
    R: int,
    s: int = 16,
    alpha: int = 1,
    lam: float = 0.6,
    lattice: Optional[EmbeddedLattice] = None,
    threads: int = 1,
) -> StudyResult:
    """Shifted-residual estimate of the single-level interpolation error per N.

    The estimator averages ||u(., y_r + t_k) - I_N u(., y_r + t_k)||^2 over R
    Sobol shifts and the N lattice points.  FE solutions at nested lattice
    points и shifted points are computed once at N_max and reused; the
    cpu_seconds column charges each N its standalone construction share.
    """
    N_list = sorted(int(v) for v in N_list)
    model, name = _resolve_model(preset, s)
    spec = _kernel_for(model, alpha, lam)
    N_max = N_list[-1]
    lat = _study_lattice(lattice, N_max, spec)
    mesh = fem2d.build_mesh(m_star)
    pts_max = generate_points(lat, N_max)

    with _CpuClock() as pool_clock:
        U_pool = _solve_rows(mesh, model, pts_max.points, fem2d.default_source, threads)
    op_max = kernel_first_column(spec, pts_max)

    shifts = sobol_shifts(R, lat.s)
    W = _shifted_points(pts_max.points, shifts.points)
    with _CpuClock() as ref_clock:
        U_ref = _solve_rows(mesh, model, W, fem2d.default_source, threads)
    U_ref3 = U_ref.reshape(R, N_max, mesh.M)
    W3 = W.reshape(R, N_max, lat.s)

    rows = []
    for N in N_list:
        stride = N_max // N
        with _CpuClock() as clk:
            A = circulant_solve(op_max.subsample(N), U_pool[::stride])
            pts_N = pts_max.points[::stride]
            W_N = W3[:, ::stride, :].reshape(-1, lat.s)
            C_sur = kernel_cross_matrix(spec, pts_N, W_N) @ A
            diff = C_sur - U_ref3[:, ::stride, :].reshape(-1, mesh.M)
            norms = fem2d.l2_norms_rows(mesh, diff)
            err = float(np.sqrt(np.mean(norms**2)))
        cpu = clk.seconds + pool_clock.seconds * (N / N_max)
        rows.append(StudyRow("N", float(N), err, cpu))
    rate, intercept = fit_rate([(r.value, r.error) for r in rows]) if len(rows) >= 3 else (None, None)
    config = {
        "N_list": N_list,
        "m_star": m_star,
        "R": R,
        "s": model.s,
        "alpha": alpha,
        "lambda": lam,
        "z": [int(v) for v in lat.z],
        "threads": threads,
    }
    return StudyResult(
        "sl", name, rows, rate, intercept, config,
        extra={"ref_cpu_seconds": ref_clock.seconds, "pool_cpu_seconds": pool_clock.seconds},
    )


def level_difference_study(
    preset,
    m0: int,
    L: int,
    N_list: Sequence[int],
    R: int,
    s: int = 16,
    alpha: int = 1,
    lam: float = 0.6,
    lattice: Optional[EmbeddedLattice] = None,
    threads: int = 1,
) -> StudyResult:
    """Shifted-residual estimates of ||(I - I_N)(u_l - u_{l-1})|| over l and N.

    Level l = 0 interpolates u_0 itself (u_{-1} := 0) and reproduces the
    single-level study at mesh m0.  Per-l rates in N and the per-N decay in l
    are reported in `extra`.
    """
    N_list = sorted(int(v) for v in N_list)
    model, name = _resolve_model(preset, s)
    spec = _kernel_for(model, alpha, lam)
    N_max = N_list[-1]
    lat = _study_lattice(lattice, N_max, spec)
    pts_max = generate_points(lat, N_max)
    op_max = kernel_first_column(spec, pts_max)
    shifts = sobol_shifts(R, lat.s)
    W = _shifted_points(pts_max.points, shifts.points)

    rows = []
    per_level_rates = {}
    decay = {}
    U_prev = None
    V_prev = None
    pool_cpu_prev = 0.0
    ref_cpu_total = 0.0
    for ell in range(L + 1):
        mesh = fem2d.build_mesh(m0 + ell)
        with _CpuClock() as pool_clock:
            U_ell = _solve_rows(mesh, model, pts_max.points, fem2d.default_source, threads)
        with _CpuClock() as ref_clock:
            V_ell = _solve_rows(mesh, model, W, fem2d.default_source, threads)
        ref_cpu_total += ref_clock.seconds
        if ell == 0:
            D = U_ell
            D_ref = V_ell
        else:
            P = fem2d.prolongation_chain(m0 + ell - 1, m0 + ell)
            D = U_ell - U_prev @ P.T
            D_ref = V_ell - V_prev @ P.T
        D_ref3 = D_ref.reshape(R, N_max, mesh.M)

        level_rows = []
        for N in N_list:
            stride = N_max // N
            with _CpuClock() as clk:
                A = circulant_solve(op_max.subsample(N), D[::stride])
                pts_N = pts_max.points[::stride]
                W_N = W.reshape(R, N_max, lat.s)[:, ::stride, :].reshape(-1, lat.s)
                C_sur = kernel_cross_matrix(spec, pts_N, W_N) @ A
                diff = C_sur - D_ref3[:, ::stride, :].reshape(-1, mesh.M)
                err = float(np.sqrt(np.mean(fem2d.l2_norms_rows(mesh, diff) ** 2)))
            cpu = clk.seconds + (pool_clock.seconds + pool_cpu_prev) * (N / N_max)
            level_rows.append(StudyRow(f"N@ell={ell}", float(N), err, cpu))
        rows.extend(level_rows)
        if len(level_rows) >= 3:
            per_level_rates[str(ell)] = fit_rate(
                [(r.value, r.error) for r in level_rows]
            )[0]
        for r in level_rows:
            decay.setdefault(f"N={int(r.value)}", []).append(r.error)
        U_prev, V_prev = U_ell, V_ell
        pool_cpu_prev = pool_clock.seconds
    rate = per_level_rates.get("0")
    config = {
        "m0": m0,
        "L": L,
        "N_list": N_list,
        "R": R,
        "s": model.s,
        "alpha": alpha,
        "lambda": lam,
        "z": [int(v) for v in lat.z],
        "threads": threads,
    }
    return StudyResult(
        "level-diff",
        name,
        rows,
        rate,
        None,
        config,
        extra={
            "per_level_rates": per_level_rates,
            "decay_by_N": decay,
            "ref_cpu_seconds": ref_cpu_total,
        },
    )


def cost_comparison_study(
    preset,
    pairings: Sequence[tuple[int, int]],
    R: int,
    m_ref: Optional[int] = None,
    s: int = 16,
    alpha: int = 1,
    lam: float = 0.6,
    lattice: Optional[EmbeddedLattice] = None,
    threads: int = 1,
) -> StudyResult:
    """Construction CPU cost vs estimated error for SL and ML approximations.

    `pairings` is the (m, N) table in ascending m.  The ML approximation for
    max level L uses meshes m_0..m_L with the point counts read in reversed
    order (N_l = pairing N of index L - l).  Errors are shifted-residual
    estimates against the m_ref reference solution; reference solves are not
    charged to the construction cost.
    """
    pairings = [(int(m), int(N)) for m, N in pairings]
    if any(pairings[i][0] >= pairings[i + 1][0] for i in range(len(pairings) - 1)):
        raise DomainError(f"pairings must ascend in m, got {pairings}")
    if m_ref is None:
        m_ref = max(m for m, _ in pairings) + 1
    model, name = _resolve_model(preset, s)
    spec = _kernel_for(model, alpha, lam)
    N_big = max(N for _, N in pairings)
    lat = _study_lattice(lattice, N_big, spec)
    pts_big = generate_points(lat, N_big)
    shifts = sobol_shifts(R, lat.s)
    W = _shifted_points(pts_big.points, shifts.points)
    mesh_ref = fem2d.build_mesh(m_ref)
    with _CpuClock() as ref_clock:
        V_ref = _solve_rows(mesh_ref, model, W, fem2d.default_source, threads)
    V_ref3 = V_ref.reshape(R, N_big, mesh_ref.M)
    W3 = W.reshape(R, N_big, lat.s)

    def estimator(levels: list) -> float:
        """RMS estimate for a surrogate given as (N_l, mesh, A_l) records."""
        N_star = levels[0].N
        stride = N_big // N_star
        W_N = W3[:, ::stride, :].reshape(-1, lat.s)
        total = np.zeros((W_N.shape[0], mesh_ref.M))
        for rec in levels:
            pts_N = generate_points(lat, rec.N).points
            Kx = kernel_cross_matrix(spec, pts_N, W_N)
            C = Kx @ rec.A
            total += C @ fem2d.prolongation_chain(rec.mesh.m, m_ref).T
        diff = total - V_ref3[:, ::stride, :].reshape(-1, mesh_ref.M)
        return float(np.sqrt(np.mean(fem2d.l2_norms_rows(mesh_ref, diff) ** 2)))

    rows = []
    sl_points = []
    for m, N in pairings:
        with _CpuClock() as clk:
            sl = build_single_level(lat, N, spec, m, model, threads=threads)
        err = estimator(sl.levels)
        rows.append(StudyRow("error:sl", err, err, clk.seconds))
        sl_points.append((err, clk.seconds))

    ml_points = []
    for L in range(len(pairings)):
        levels = [(pairings[L - ell][1], pairings[ell][0]) for ell in range(L + 1)]
        with _CpuClock() as clk:
            ml = build_multilevel(lat, levels, spec, model, threads=threads)
        err = estimator(ml.levels)
        rows.append(StudyRow("error:ml", err, err, clk.seconds))
        ml_points.append((err, clk.seconds))

    def cost_exponent(points):
        if len(points) < 3:
            return None
        return fit_rate(points)[0]

    exp_sl = cost_exponent(sl_points)
    exp_ml = cost_exponent(ml_points)
    config = {
        "pairings": pairings,
        "R": R,
        "m_ref": m_ref,
        "s": model.s,
        "alpha": alpha,
        "lambda": lam,
        "z": [int(v) for v in lat.z],
        "threads": threads,
    }
    return StudyResult(
        "cost",
        name,
        rows,
        exp_sl,
        None,
        config,
        extra={
            "cost_exponent_sl": exp_sl,
            "cost_exponent_ml": exp_ml,
            "sl_points": sl_points,
            "ml_points": ml_points,
            "ref_cpu_seconds": ref_clock.seconds,
        },
    )
