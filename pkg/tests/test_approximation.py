import math

import numpy as np
import pytest

from mlkpde import fem2d
from mlkpde.approximation import (
    ConfigError,
    build_multilevel,
    build_single_level,
    coefficients_at,
    evaluate,
    load_approximation,
    plan_levels,
    save_approximation,
)
from mlkpde.coefficient import preset
from mlkpde.kernel import kernel_first_column
from mlkpde.lattice import generate_points


def dense_circulant(op):
    i = np.arange(op.N)
    return op.first_col[(i[:, None] - i[None, :]) % op.N]


# ── single level ─────────────────────────────────────────────────────────────


def test_single_level_n1_scalar_system(easy8):
    model, spec, lattice = easy8
    sl = build_single_level(lattice, 1, spec, 3, model)
    assert sl.A.shape == (1, fem2d.build_mesh(3).M)
    # N=1: A = U / K(0,0)
    u0 = fem2d.solve_at(fem2d.build_mesh(3), model, np.zeros(8))
    k00 = kernel_first_column(spec, generate_points(lattice, 1)).first_col[0]
    assert sl.A[0] == pytest.approx(u0.coeffs / k00, rel=1e-12)
    # interpolation at the single node reproduces the stored solution
    x = np.array([0.375, 0.5])
    assert evaluate(sl, x, np.zeros(8)) == pytest.approx(
        fem2d.evaluate_fe(u0, x), rel=1e-12
    )


def test_single_level_interpolation_property(easy8):
    model, spec, lattice = easy8
    N = 64
    sl = build_single_level(lattice, N, spec, 3, model)
    pts = generate_points(lattice, N)
    U = np.array([fem2d.solve_at(fem2d.build_mesh(3), model, y).coeffs for y in pts.points])
    K = dense_circulant(kernel_first_column(spec, pts))
    resid = np.max(np.abs(K @ sl.A - U)) / np.max(np.abs(U))
    assert resid <= 1e-9


def test_single_level_constant_coefficient_rows_identical(easy8):
    """C=0: all U rows equal, so the surrogate takes one value at every node."""
    _, spec, lattice = easy8
    sl = build_single_level(lattice, 16, spec, 2, None)  # C=0 route
    pts = generate_points(lattice, 16)
    K = dense_circulant(kernel_first_column(spec, pts))
    U = K @ sl.A
    assert np.max(np.abs(U - U[0])) <= 1e-9 * np.max(np.abs(U))
    x = np.array([0.4, 0.8])
    vals = [evaluate(sl, x, y) for y in pts.points]
    assert np.ptp(vals) < 1e-9


def test_stage_seconds_recorded(easy8):
    model, spec, lattice = easy8
    sl = build_single_level(lattice, 8, spec, 2, model)
    for key in ("kernel_column", "assembly", "fe_solves", "fft_solves"):
        assert key in sl.stage_seconds


# ── multilevel ───────────────────────────────────────────────────────────────


def test_multilevel_l0_equals_single_level(easy8):
    model, spec, lattice = easy8
    sl = build_single_level(lattice, 32, spec, 3, model)
    ml = build_multilevel(lattice, [(32, 3)], spec, model)
    assert np.array_equal(sl.levels[0].A, ml.levels[0].A)


def test_multilevel_telescoping_exactness(easy8):
    """At nested lattice points the ML surrogate equals the finest FE solve."""
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(64, 3), (16, 4), (8, 5)], spec, model)
    pts = generate_points(lattice, 8)
    rng = np.random.default_rng(7)
    for k in range(8):
        y = pts.points[k]
        direct = fem2d.solve_at(fem2d.build_mesh(5), model, y)
        for _ in range(4):
            x = rng.uniform(0.02, 0.98, 2)
            assert evaluate(ml, x, y) == pytest.approx(
                fem2d.evaluate_fe(direct, x), abs=1e-9
            )


def test_multilevel_equal_point_counts_identity(easy8):
    """With N_1 = N_0 the two-level sum collapses to interpolating u_1 directly."""
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(32, 3), (32, 4)], spec, model)
    sl = build_single_level(lattice, 32, spec, 4, model)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.uniform(0.05, 0.95, 2)
        y = rng.uniform(0, 1, 8)
        # sum of level coefficients prolongated equals the direct interpolant
        got = evaluate(ml, x, y)
        expect = evaluate(sl, x, y)
        assert got == pytest.approx(expect, rel=1e-9, abs=1e-12)


def test_multilevel_interpolation_residual_per_level(easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(64, 3), (16, 4)], spec, model)
    pts0 = generate_points(lattice, 64)
    U0 = np.array([fem2d.solve_at(fem2d.build_mesh(3), model, y).coeffs for y in pts0.points])
    K0 = dense_circulant(kernel_first_column(spec, pts0))
    r0 = np.max(np.abs(K0 @ ml.levels[0].A - U0)) / np.max(np.abs(U0))
    assert r0 <= 1e-9
    pts1 = generate_points(lattice, 16)
    U1 = np.array([fem2d.solve_at(fem2d.build_mesh(4), model, y).coeffs for y in pts1.points])
    P = fem2d.prolongation_matrix(3)
    rhs1 = U1 - U0[::4] @ P.T
    K1 = dense_circulant(kernel_first_column(spec, pts1))
    r1 = np.max(np.abs(K1 @ ml.levels[1].A - rhs1)) / max(np.max(np.abs(rhs1)), 1e-30)
    assert r1 <= 1e-9


def test_multilevel_fe_solve_counts(easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(64, 2), (16, 3), (4, 4)], spec, model)
    assert ml.stage_seconds["fe_solve_counts"] == [64, 16, 4]


def test_multilevel_validation(easy8):
    model, spec, lattice = easy8
    with pytest.raises(ConfigError):
        build_multilevel(lattice, [(16, 3), (32, 4)], spec, model)  # increasing N
    with pytest.raises(ConfigError):
        build_multilevel(lattice, [(32, 3), (16, 5)], spec, model)  # mesh skips
    with pytest.raises(Exception):
        build_multilevel(lattice, [(48, 3), (16, 4)], spec, model)  # non-divisor


def test_evaluate_linearity(easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(16, 2), (8, 3)], spec, model)
    x, y = np.array([0.37, 0.21]), np.array([0.1, 0.9, 0.4, 0.6, 0.2, 0.8, 0.35, 0.65])
    base = evaluate(ml, x, y)
    for rec in ml.levels:
        rec.A = rec.A * 2.5
    assert evaluate(ml, x, y) == pytest.approx(2.5 * base, rel=1e-13)


def test_coefficients_at_matches_evaluate(easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(16, 2), (4, 3)], spec, model)
    y = np.array([0.11, 0.52, 0.93, 0.24, 0.65, 0.06, 0.47, 0.88])
    per_level = coefficients_at(ml, y)
    x = np.array([0.62, 0.31])
    total = sum(
        fem2d.evaluate_fe(fem2d.FESolution(rec.mesh, c), x)
        for rec, c in zip(ml.levels, per_level)
    )
    assert total == pytest.approx(evaluate(ml, x, y), rel=1e-12, abs=1e-15)


# ── level planning ───────────────────────────────────────────────────────────


def test_plan_levels_reference_case():
    plan = plan_levels(2.0**-10, 2.0**-3, 2.0, 1.0, 2)
    assert plan.L == 3
    # d*mu = beta: the geometric sum degenerates to L+1
    assert plan.N0_hat == pytest.approx(2.0 * 2**10 * 2.0**-6 * 4, rel=1e-13)


def test_plan_levels_monotone_and_divisors():
    plan = plan_levels(1e-3, 0.25, 2.0, 0.7, 2)
    N = list(plan.N)
    assert all(N[i] >= N[i + 1] for i in range(len(N) - 1))
    assert all(N[0] % n == 0 for n in N)  # snapped to powers of two


def test_plan_levels_unsnapped_ceiling():
    plan = plan_levels(1e-3, 0.25, 2.0, 0.7, 2, snap_to_divisors=False)
    for n, nh in zip(plan.N, plan.N_hat):
        assert n == math.ceil(nh)


def test_plan_levels_error_budget_random_tuples():
    """sum_l Nhat_l^(-mu) h_l^beta equals eps/2 by construction (50 tuples)."""
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 50:
        h0 = 2.0 ** -rng.integers(1, 5)
        beta = rng.uniform(0.5, 3.0)
        mu = rng.uniform(0.3, 2.0)
        d = int(rng.integers(1, 4))
        limit = min(1.0, 2.0 * h0**beta)
        epsilon = rng.uniform(0.001, 0.999) * limit
        plan = plan_levels(epsilon, h0, beta, mu, d)
        total = sum(
            nh**-mu * (h0 * 2.0**-ell) ** beta for ell, nh in enumerate(plan.N_hat)
        )
        assert total <= epsilon / 2.0 * (1.0 + 1e-9)
        # integer N only tightens the bound
        total_int = sum(
            n**-mu * (h0 * 2.0**-ell) ** beta for ell, n in enumerate(plan.N)
        )
        assert total_int <= epsilon / 2.0 * (1.0 + 1e-9)
        checked += 1


def test_plan_levels_epsilon_range():
    with pytest.raises(ConfigError):
        plan_levels(0.5, 0.5, 2.0, 1.0, 2)  # eps >= 2 h0^beta
    with pytest.raises(ConfigError):
        plan_levels(-1e-3, 0.125, 2.0, 1.0, 2)
    with pytest.raises(ConfigError):
        plan_levels(1e-3, 0.125, 2.0, -1.0, 2)


# ── serialization ────────────────────────────────────────────────────────────


def test_save_load_roundtrip(tmp_path, easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(32, 2), (8, 3)], spec, model)
    path = tmp_path / "ml.bin"
    save_approximation(ml, path)
    back = load_approximation(path)
    assert back.L == ml.L
    assert back.kernel.alpha == spec.alpha
    assert np.array_equal(back.kernel.gamma, spec.gamma)
    for a, b in zip(ml.levels, back.levels):
        assert (a.N, a.mesh.m) == (b.N, b.mesh.m)
        assert np.array_equal(a.A, b.A)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x, y = rng.uniform(0.05, 0.95, 2), rng.uniform(0, 1, 8)
        assert evaluate(back, x, y) == evaluate(ml, x, y)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(ConfigError):
        load_approximation(path)


def test_header_layout(tmp_path, easy8):
    model, spec, lattice = easy8
    ml = build_multilevel(lattice, [(16, 2)], spec, model)
    path = tmp_path / "ml.bin"
    save_approximation(ml, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MLKA"
    version = int.from_bytes(raw[4:8], "little")
    L = int.from_bytes(raw[8:16], "little")
    s = int.from_bytes(raw[16:24], "little")
    alpha = int.from_bytes(raw[24:32], "little")
    assert (version, L, s, alpha) == (1, 0, 8, 1)