import json

import numpy as np
import pytest
from scipy.stats import qmc

from mlkpde import diagnostics as diag
from mlkpde.coefficient import CoefficientModel
from mlkpde.kernel import DomainError


# ── Sobol' points ────────────────────────────────────────────────────────────


def test_sobol_dim1_radical_inverse():
    pts = diag.sobol_points(3, 1)
    assert pts.ravel() == pytest.approx([0.5, 0.25, 0.75])


def test_sobol_range_and_determinism():
    a = diag.sobol_shifts(10, 64)
    b = diag.sobol_shifts(10, 64)
    assert np.array_equal(a.points, b.points)
    assert np.all(a.points >= 0.0) and np.all(a.points < 1.0)
    assert a.points.shape == (10, 64)


def test_sobol_matches_scipy_under_gray_reorder():
    """Same Joe-Kuo net: standard-order point g(n) equals scipy's n-th point."""
    mine = diag.sobol_points(32, 8, skip_zero=False)
    ref = qmc.Sobol(d=8, scramble=False).random_base2(m=5)
    for n in range(32):
        g = n ^ (n >> 1)
        assert mine[g] == pytest.approx(ref[n], abs=1e-12)


def test_sobol_skips_zero_point():
    pts = diag.sobol_points(4, 6)
    assert np.all(np.any(pts != 0.0, axis=1))


def test_sobol_dimension_cap():
    with pytest.raises(DomainError):
        diag.sobol_shifts(2, 65)
    with pytest.raises(DomainError):
        diag.sobol_shifts(0, 4)


# ── rate fitting ─────────────────────────────────────────────────────────────


def test_fit_rate_exact_power_law():
    rate, intercept = diag.fit_rate([(x, x**-2.0) for x in (2, 4, 8, 16)])
    assert rate == pytest.approx(2.0, abs=1e-12)
    assert intercept == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_constant():
    rate, _ = diag.fit_rate([(x, 5.0) for x in (2, 4, 8)])
    assert rate == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_offset_power_law():
    rate, intercept = diag.fit_rate([(x, 8.0 * x**-1.5) for x in (2, 4, 8, 16)])
    assert rate == pytest.approx(1.5, abs=1e-12)
    assert intercept == pytest.approx(3.0, abs=1e-12)


def test_fit_rate_domain():
    with pytest.raises(DomainError):
        diag.fit_rate([(1.0, 1.0), (2.0, 0.5)])
    with pytest.raises(DomainError):
        diag.fit_rate([(1.0, 1.0), (2.0, -0.5), (4.0, 0.2)])


# ── study mechanics on tiny configurations ───────────────────────────────────


@pytest.fixture(scope="module")
def tiny_fe_study():
    return diag.fe_error_study("easy", [2, 3, 4], 5, 2**4, s=4)


def test_fe_study_monotone_and_rate(tiny_fe_study):
    errs = [r.error for r in tiny_fe_study.rows]
    assert errs[0] > errs[1] > errs[2]
    assert tiny_fe_study.rate == pytest.approx(2.0, abs=0.5)


def test_fe_study_degenerate_deterministic_coefficient():
    """C=0 gives a y-independent problem: the estimator is a single FE distance."""
    model = CoefficientModel(2, 0.0, 2.0)
    res = diag.fe_error_study(model, [2, 3], 4, 2**3)
    from mlkpde import fem2d

    u4 = fem2d.solve_at(fem2d.build_mesh(4), None, None)
    for row, m in zip(res.rows, (2, 3)):
        um = fem2d.solve_at(fem2d.build_mesh(int(np.log2(row.value))), None, None)
        assert row.error == pytest.approx(fem2d.l2_diff(um, u4), rel=1e-12)
        assert row.value == 2.0**m


def test_truncation_study_monotone():
    res = diag.truncation_study("easy", [2, 4, 8], 16, 3, 2**4)
    errs = [r.error for r in res.rows]
    assert errs[0] > errs[1] > errs[2]


def test_sl_study_unshifted_residual_is_solver_noise(easy8):
    """With shift 0 the estimator collapses to the interpolation residual ~1e-9."""
    from mlkpde import fem2d
    from mlkpde.approximation import build_single_level, coefficients_at
    from mlkpde.lattice import generate_points

    model, spec, lattice = easy8
    sl = build_single_level(lattice, 16, spec, 3, model)
    pts = generate_points(lattice, 16)
    mesh = fem2d.build_mesh(3)
    errs = []
    for k in range(16):
        surr = coefficients_at(sl, pts.points[k])[0]
        ref = fem2d.solve_at(mesh, model, pts.points[k]).coeffs
        errs.append(fem2d.l2_norm(fem2d.FESolution(mesh, surr - ref)))
    est = float(np.sqrt(np.mean(np.array(errs) ** 2)))
    assert est < 1e-9


def test_level_study_ell0_equals_sl_study():
    sl = diag.sl_error_study("easy", [2**3, 2**4], m_star=3, R=2, s=4)
    lvl = diag.level_difference_study("easy", m0=3, L=1, N_list=[2**3, 2**4], R=2, s=4)
    ell0 = [r for r in lvl.rows if r.param == "N@ell=0"]
    for a, b in zip(sl.rows, ell0):
        assert a.error == pytest.approx(b.error, abs=1e-8)


def test_level_study_shapes_and_extras():
    res = diag.level_difference_study("easy", m0=2, L=2, N_list=[2**3, 2**4, 2**5], R=2, s=4)
    params = {r.param for r in res.rows}
    assert params == {"N@ell=0", "N@ell=1", "N@ell=2"}
    assert set(res.extra["per_level_rates"]) == {"0", "1", "2"}
    assert set(res.extra["decay_by_N"]) == {"N=8", "N=16", "N=32"}


def test_cost_study_l0_coincides_with_first_sl():
    res = diag.cost_comparison_study("easy", [(2, 2**3), (3, 2**4), (4, 2**5)], R=2, s=4)
    sl0 = res.extra["sl_points"][0]
    ml0 = res.extra["ml_points"][0]
    assert abs(sl0[0] - ml0[0]) <= 1e-10
    assert res.extra["cost_exponent_sl"] is not None


def test_cost_study_rejects_unsorted_pairings():
    with pytest.raises(DomainError):
        diag.cost_comparison_study("easy", [(3, 8), (3, 16)], R=1, s=4)


# ── CSV and meta output ──────────────────────────────────────────────────────


def _mask_cpu(text: str) -> str:
    lines = text.splitlines()
    out = [lines[0]]
    for line in lines[1:]:
        cols = line.split(",")
        cols[-1] = "X"
        out.append(",".join(cols))
    return "\n".join(out)


def test_csv_schema_and_reproducibility(tmp_path):
    res1 = diag.fe_error_study("easy", [2, 3, 4], 5, 2**3, s=4)
    res2 = diag.fe_error_study("easy", [2, 3, 4], 5, 2**3, s=4)
    text1, text2 = res1.csv_text(), res2.csv_text()
    assert text1.splitlines()[0] == "study,preset,param,value,error,cpu_seconds"
    # deterministic modulo the measured cpu column
    assert _mask_cpu(text1) == _mask_cpu(text2)
    csv_path, meta_path = res1.write(tmp_path, "fe_easy")
    raw = open(csv_path, "rb").read()
    assert b"\r" not in raw
    meta = json.loads(open(meta_path).read())
    assert meta["study"] == "fe" and meta["config"]["N_quad"] == 8
    assert meta["fit"]["rate"] == res1.rate


def test_csv_full_precision(tmp_path):
    res = diag.fe_error_study("easy", [2, 3, 4], 5, 2**3, s=4)
    for row, line in zip(res.rows, res.csv_text().splitlines()[1:]):
        assert float(line.split(",")[4]) == row.error  # 17 digits round-trip
