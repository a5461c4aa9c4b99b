import math

import numpy as np
import pytest

from mlkpde.kernel import (
    CirculantOperator,
    DomainError,
    IllConditionedKernelError,
    KernelSpec,
    WeightRecipe,
    bernoulli_poly,
    circulant_solve,
    kernel_cross,
    kernel_cross_matrix,
    kernel_eval,
    kernel_first_column,
    omega,
    riemann_zeta,
    serendipitous_weights,
    stirling2,
)

PI2 = math.pi**2


# ── Bernoulli polynomials and the kernel factor ─────────────────────────────


def test_bernoulli_values():
    assert bernoulli_poly(1, 0.0) == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert bernoulli_poly(1, 0.5) == pytest.approx(-1.0 / 12.0, abs=1e-15)
    assert bernoulli_poly(2, 0.0) == pytest.approx(-1.0 / 30.0, abs=1e-15)
    assert bernoulli_poly(3, 0.0) == pytest.approx(1.0 / 42.0, abs=1e-15)


def test_bernoulli_symmetry_about_half():
    """B_{2a}(t) = B_{2a}(1-t), the property the wrapped distance relies on."""
    t = np.linspace(0.0, 1.0, 41)
    for a in (1, 2, 3):
        assert np.allclose(bernoulli_poly(a, t), bernoulli_poly(a, 1.0 - t), atol=1e-14)


def test_bernoulli_domain_errors():
    with pytest.raises(DomainError):
        bernoulli_poly(1, -0.1)
    with pytest.raises(DomainError):
        bernoulli_poly(1, 1.1)
    with pytest.raises(DomainError):
        bernoulli_poly(4, 0.5)


def test_omega_values():
    assert omega(1, 0.0) == pytest.approx(PI2 / 3.0, rel=1e-14)
    assert omega(1, 0.5) == pytest.approx(-PI2 / 6.0, rel=1e-14)
    assert omega(2, 0.0) == pytest.approx((2 * math.pi) ** 4 / 720.0, rel=1e-14)


# ── kernel evaluation ────────────────────────────────────────────────────────


def test_kernel_eval_closed_forms():
    one = KernelSpec(1, np.array([1.0]))
    assert kernel_eval(one, [0.0], [0.0]) == pytest.approx(1.0 + PI2 / 3.0, rel=1e-14)
    assert kernel_eval(one, [0.25], [0.75]) == pytest.approx(1.0 - PI2 / 6.0, rel=1e-14)
    two = KernelSpec(1, np.array([1.0, 1.0]))
    assert kernel_eval(two, [0.3, 0.8], [0.3, 0.8]) == pytest.approx(
        (1.0 + PI2 / 3.0) ** 2, rel=1e-14
    )


def test_kernel_symmetry_and_periodicity(rng):
    spec = KernelSpec(1, np.array([0.9, 0.4, 0.2]))
    for _ in range(50):
        y, y2 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        k12 = kernel_eval(spec, y, y2)
        assert k12 == pytest.approx(kernel_eval(spec, y2, y), rel=1e-14)
        shifted = y.copy()
        shifted[1] += 1.0
        assert kernel_eval(spec, np.mod(shifted, 1.0), y2) == pytest.approx(k12, rel=1e-12)


def test_kernel_cross_matches_scalar(rng):
    spec = KernelSpec(2, np.array([0.5, 0.25]))
    pts = rng.uniform(0, 1, (10, 2))
    y = rng.uniform(0, 1, 2)
    vec = kernel_cross(spec, pts, y)
    assert vec == pytest.approx([kernel_eval(spec, p, y) for p in pts], rel=1e-14)
    mat = kernel_cross_matrix(spec, pts, np.vstack([y, pts[3]]))
    assert mat[0] == pytest.approx(vec, rel=1e-14)


def test_kernel_spec_validation():
    with pytest.raises(DomainError):
        KernelSpec(0, np.array([1.0]))
    with pytest.raises(DomainError):
        KernelSpec(4, np.array([1.0]))  # hard cap: double precision instability
    with pytest.raises(DomainError):
        KernelSpec(1, np.array([1.0, -1.0]))


# ── circulant first column and FFT solve ────────────────────────────────────


def _lattice_points(N, z):
    k = np.arange(N)
    return np.stack([(k * zj) % N / N for zj in z], axis=1)


def test_first_column_symmetry():
    spec = KernelSpec(1, np.array([1.0, 0.5]))
    for N in (1, 2, 4, 8, 16, 31 + 1):
        pts = _lattice_points(N, (1, max(1, N // 2 - 1) | 1))
        col = kernel_first_column(spec, pts).first_col
        for k in range(1, N):
            assert col[k] == pytest.approx(col[N - k], rel=1e-14)


def test_first_column_n4_equal_tails():
    spec = KernelSpec(1, np.array([1.0]))
    col = kernel_first_column(spec, _lattice_points(4, (1,))).first_col
    assert col[0] == pytest.approx(1.0 + PI2 / 3.0, rel=1e-14)
    assert col[1] == pytest.approx(col[3], rel=1e-15)


def test_circulant_identity():
    op = CirculantOperator(5, np.array([1.0, 0, 0, 0, 0]))
    rhs = np.arange(15.0).reshape(5, 3)
    assert circulant_solve(op, rhs) == pytest.approx(rhs, abs=1e-14)


def test_circulant_2x2_closed_form():
    a, b = 3.0, 1.25
    op = CirculantOperator(2, np.array([a, b]))
    r = np.array([2.0, -1.0])
    expect = np.array([(a * r[0] - b * r[1]), (a * r[1] - b * r[0])]) / (a * a - b * b)
    assert circulant_solve(op, r) == pytest.approx(expect, rel=1e-14)


def _random_spd_circulant(N, rng):
    v = rng.standard_normal(N)
    col = np.fft.ifft(np.abs(np.fft.fft(v)) ** 2).real  # circular autocorrelation: PSD
    col[0] += 0.1 * N
    return col


@pytest.mark.parametrize("N", [2, 4, 8, 16, 32, 64])
def test_circulant_vs_dense_oracle(N, rng):
    col = _random_spd_circulant(N, rng)
    dense = np.empty((N, N))
    i = np.arange(N)
    dense[:] = col[(i[:, None] - i[None, :]) % N]
    rhs = rng.standard_normal((N, 3))
    expect = np.linalg.solve(dense, rhs)
    got = circulant_solve(CirculantOperator(N, col), rhs)
    assert np.max(np.abs(got - expect)) / np.max(np.abs(expect)) < 1e-10


def test_circulant_interpolation_identity(rng):
    """K (K^-1 g) = g: solving then multiplying back reproduces the data."""
    N = 32
    col = _random_spd_circulant(N, rng)
    dense = col[(np.arange(N)[:, None] - np.arange(N)[None, :]) % N]
    g = rng.standard_normal(N)
    a = circulant_solve(CirculantOperator(N, col), g)
    assert np.max(np.abs(dense @ a - g)) / np.max(np.abs(g)) < 1e-9


def test_circulant_ill_conditioned_error():
    # eigenvalues of [1,1,...,1] circulant are (N, 0, ..., 0)
    op = CirculantOperator(4, np.ones(4))
    with pytest.raises(IllConditionedKernelError) as err:
        circulant_solve(op, np.ones(4))
    assert err.value.index > 0


def test_circulant_rhs_shape_mismatch():
    op = CirculantOperator(4, np.array([2.0, 0.1, 0.05, 0.1]))
    with pytest.raises(DomainError):
        circulant_solve(op, np.ones(5))


# ── Stirling numbers, zeta, weights ─────────────────────────────────────────


def _stirling_recurrence(n, k):
    table = {(0, 0): 1}
    for nn in range(1, n + 1):
        for kk in range(0, nn + 1):
            table[(nn, kk)] = (
                kk * table.get((nn - 1, kk), 0) + table.get((nn - 1, kk - 1), 0)
            )
    return table[(n, k)]


def test_stirling_values():
    assert stirling2(0, 0) == 1
    assert stirling2(3, 2) == 3
    assert stirling2(4, 2) == 7


def test_stirling_against_recurrence_oracle():
    for n in range(0, 9):
        for k in range(0, n + 1):
            assert stirling2(n, k) == _stirling_recurrence(n, k), (n, k)


def test_stirling_domain():
    with pytest.raises(DomainError):
        stirling2(2, 3)
    with pytest.raises(DomainError):
        stirling2(21, 1)


def _zeta_summation_oracle(x, n=10**7):
    """Brute-force partial sum with integral tail correction, good to ~1e-12."""
    j = np.arange(1, n + 1, dtype=float)
    return float(np.sum(j**-x)) + n ** (1.0 - x) / (x - 1.0) - 0.5 * n**-x


def test_zeta_closed_forms():
    assert riemann_zeta(2.0) == pytest.approx(PI2 / 6.0, rel=1e-13)
    assert riemann_zeta(4.0) == pytest.approx(math.pi**4 / 90.0, rel=1e-13)


def test_zeta_against_summation_oracle():
    for x in (1.2, 1.44, 3.6, 7.2):
        assert riemann_zeta(x) == pytest.approx(_zeta_summation_oracle(x), abs=1e-12)


def test_zeta_domain():
    with pytest.raises(DomainError):
        riemann_zeta(1.0)
    with pytest.raises(DomainError):
        riemann_zeta(0.5)


def test_serendipitous_unit_bracket():
    """bbar_j chosen to cancel the denominator gives gamma_j = 1 exactly."""
    denom = math.sqrt(2.0 * math.exp(1.0 / math.e) * riemann_zeta(1.2))
    recipe = WeightRecipe(lam=0.6, bbar=np.full(3, denom), alpha=1)
    assert serendipitous_weights(recipe) == pytest.approx(np.ones(3), rel=1e-14)


def test_serendipitous_monotone():
    recipe = WeightRecipe(lam=0.6, bbar=np.array([2.0, 1.0, 0.5, 0.25]), alpha=1)
    g = serendipitous_weights(recipe)
    assert np.all(np.diff(g) < 0)


def test_serendipitous_derived_value():
    """alpha=1, lambda=0.6, bbar_1=1: gamma_1 = (2 e^(1/e) zeta(1.2))^(-1/1.6)."""
    recipe = WeightRecipe(lam=0.6, bbar=np.array([1.0]), alpha=1)
    got = serendipitous_weights(recipe)[0]
    expect = (2.0 * math.exp(1.0 / math.e) * _zeta_summation_oracle(1.2)) ** (-1.0 / 1.6)
    assert got == pytest.approx(expect, rel=1e-11)
    assert got == pytest.approx(0.17570820328798016, rel=1e-12)


def test_serendipitous_alpha2_uses_stirling():
    """For alpha=2 the numerator is bbar*S(2,1) + bbar^2*S(2,2) = bbar + bbar^2."""
    lam, bb = 0.3, 1.7
    recipe = WeightRecipe(lam=lam, bbar=np.array([bb]), alpha=2)
    denom = math.sqrt(2.0 * math.exp(1.0 / math.e) * riemann_zeta(4 * lam))
    expect = ((bb + bb * bb) / denom) ** (2.0 / (1.0 + lam))
    assert serendipitous_weights(recipe)[0] == pytest.approx(expect, rel=1e-13)


def test_weight_recipe_lambda_range():
    with pytest.raises(DomainError):
        WeightRecipe(lam=0.5, bbar=np.array([1.0]), alpha=1)  # must exceed 1/(2a)
    with pytest.raises(DomainError):
        WeightRecipe(lam=1.1, bbar=np.array([1.0]), alpha=1)
