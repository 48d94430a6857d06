import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shocklab.errors import ConfigurationError, NumericError, UsageError
from shocklab.limit_laws import (
    DistributionTable,
    KernelSpec,
    NystromOperator,
    brownian_lpp_sample,
    build_table,
    default_radius,
    f_m1_gram,
    f_m1_gram_vec,
    f_mp,
    f_mp_detail,
    fredholm_det,
    gue_matrices,
    gue_sample_max,
    gue_sample_max_batch,
    jacobi_eigvalsh,
    kernel_eval,
    limit_cdf,
    product_law,
    reference_table,
    residue_form,
)
from shocklab.stats import EmpiricalCdf, dkw_band, ks_distance

from . import oracles

GUE2_AT_0 = (math.pi - 2.0) / (4.0 * math.pi)

# Frozen outputs of tests/oracles.py (Gauss-Laguerre Fredholm determinants and
# direct integration of the GUE eigenvalue densities).
FROZEN_FREDHOLM = [
    (1, 0.75, 0.0, 0.6684871137169075),
    (1, 0.6, -1.0, 0.8366245334703561),
    (1, 0.9, 1.0, 0.8359523961359598),
    (2, 0.75, 0.0, 0.2311343561700201),
    (3, 0.75, 0.5, 0.08656979832579999),
    (2, 0.6, 1.0, 0.7597818781434346),
]
FROZEN_GUE = [
    (2, 0.0, 0.0908450569081047),
    (2, 1.0, 0.4457303524362418),
    (3, 0.5, 0.032938002229668736),
]


# -- kernel and determinant ---------------------------------------------------------------------


def test_kernel_values():
    assert kernel_eval(KernelSpec(1.0), 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    assert kernel_eval(KernelSpec(0.75), 0.0, 0.0) == pytest.approx(0.75 / math.sqrt(2 * math.pi), abs=1e-15)


@given(st.floats(0.51, 0.99), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_kernel_symmetric_positive(p, z, zp):
    spec = KernelSpec(p)
    a, b = kernel_eval(spec, z, zp), kernel_eval(spec, zp, z)
    assert a == b and a > 0


def test_determinant_at_zero_is_one():
    op = NystromOperator(0.75, 0.0)
    assert fredholm_det(op, 0.0) == 1.0


def test_log_det_first_order_is_trace():
    op = NystromOperator(0.75, 0.0)
    tr = op.trace()
    tr2 = float(np.sum(op.matrix * op.matrix))
    for lam in (1e-3, -1e-3, 1e-4):
        logd = math.log(fredholm_det(op, lam).real)
        assert abs(logd + lam * tr) <= lam * lam * tr2
        assert logd + lam * tr == pytest.approx(-0.5 * lam * lam * tr2, rel=1e-2)


def test_determinant_stable_under_node_doubling():
    coarse = NystromOperator(0.75, 0.0)
    fine = NystromOperator(0.75, 0.0, m=2 * coarse.m, L=coarse.L)
    for lam in np.exp(1j * np.linspace(0, 2 * np.pi, 9)) * np.array([0.5, 1.0, 2.0, 1.5, 2.0, 0.1, 1.0, 2.0, 0.7]):
        assert abs(fredholm_det(coarse, lam) - fredholm_det(fine, lam)) < 1e-8


def test_eigenvalues_are_geometric_on_the_full_line():
    op = NystromOperator(0.75, 30.0, L=60.0, m=200)
    ev = op.eigenvalues()[:5]
    assert ev == pytest.approx([(1 / 3) ** k for k in range(5)], abs=1e-10)


def test_nonfinite_lambda():
    with pytest.raises(NumericError):
        fredholm_det(NystromOperator(0.75, 0.0), complex(math.inf, 0))


# -- F_{M,p} --------------------------------------------------------------------------------------


@pytest.mark.parametrize("M,p,s,ref", FROZEN_FREDHOLM)
def test_contour_value_matches_independent_oracle(M, p, s, ref):
    assert f_mp(M, p, s) == pytest.approx(ref, abs=1e-10)


def test_oracle_reproduces_frozen_value():
    assert oracles.fredholm_cdf(1, 0.75, 0.0) == pytest.approx(FROZEN_FREDHOLM[0][3], abs=1e-13)


@pytest.mark.parametrize("p", [0.6, 0.75, 0.9])
@pytest.mark.parametrize("s", [-1.0, 0.0, 1.0, 2.0])
def test_m1_equals_residue_form(p, s):
    assert abs(f_mp(1, p, s) - residue_form(1, p, s)) < 1e-8


@pytest.mark.parametrize("M", [2, 3])
def test_residue_sum_for_larger_m(M):
    assert abs(f_mp(M, 0.75, 0.0) - residue_form(M, 0.75, 0.0)) < 1e-8


@pytest.mark.parametrize("M,p,s", [(1, 0.75, 0.0), (2, 0.75, 0.5), (3, 0.6, -0.5), (4, 0.9, 1.0)])
def test_radius_independence(M, p, s):
    base = (p / (1 - p)) ** (M - 1)
    vals = [f_mp_detail(M, p, s, r=f * base).raw for f in (1.25, 1.5, 2.0)]
    assert max(vals) - min(vals) < 1e-6


def test_imaginary_part_and_range_diagnostics():
    for M in (1, 2, 3, 5):
        v = f_mp_detail(M, 0.75, 0.3)
        assert v.imag <= 1e-8
        assert -1e-6 <= v.raw <= 1 + 1e-6


def test_upper_tail_limit():
    assert f_mp(1, 0.75, 8.0) >= 1 - 1e-4


def test_nonincreasing_in_m():
    for s in (-1.0, 0.0, 1.0, 2.0):
        vals = [f_mp(M, 0.75, s) for M in range(1, 7)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_decay_in_m_at_zero():
    vals = [f_mp(M, 0.75, 0.0) for M in range(1, 9)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0] / 10


def test_contour_errors():
    with pytest.raises(UsageError):
        f_mp(1, 0.5, 0.0)
    with pytest.raises(UsageError):
        f_mp(0, 0.75, 0.0)
    with pytest.raises(ConfigurationError):
        f_mp_detail(2, 0.75, 0.0, r=3.0)
    with pytest.raises(ConfigurationError):
        f_mp_detail(3, 0.75, 0.0, r=5.0)
    with pytest.raises(NumericError) as info:
        f_mp_detail(2, 0.75, 0.0, m=6, refine=True, tol=1e-12)
    assert "fine" in info.value.report


def test_refinement_passes_at_defaults():
    v = f_mp_detail(2, 0.75, 0.0, refine=True)
    assert v.refinement_delta < 1e-10


# -- p = 1 -------------------------------------------------------------------------------------------


def test_gram_is_gaussian_for_m1():
    grid = np.linspace(-4, 4, 17)
    for s in grid:
        assert abs(f_m1_gram(1, s) - oracles.normal_cdf(s)) < 1e-6
    assert f_m1_gram(1, 0.0) == 0.5
    assert f_m1_gram(1, 1.0) == pytest.approx(0.8413447460685429, abs=1e-15)


def test_gram_closed_form_m2():
    assert abs(f_m1_gram(2, 0.0) - GUE2_AT_0) < 1e-10


@pytest.mark.parametrize("M,s,ref", FROZEN_GUE)
def test_gram_matches_density_integration(M, s, ref):
    assert f_m1_gram(M, s) == pytest.approx(ref, abs=1e-9)


def test_vectorized_gram_agrees():
    s = np.linspace(-4, 5, 19)
    for M in (1, 2, 3, 6, 12):
        assert np.max(np.abs(f_m1_gram_vec(M, s) - [f_m1_gram(M, v) for v in s])) < 1e-10


def test_gram_guard():
    with pytest.raises(NumericError):
        f_m1_gram(13, 0.0)
    with pytest.raises(UsageError):
        f_m1_gram(0, 0.0)
    assert f_m1_gram(3, math.inf) == 1.0 and f_m1_gram(3, -math.inf) == 0.0


def test_p1_routed_to_gram():
    assert f_mp(2, 1.0, 0.0) == f_m1_gram(2, 0.0)
    assert f_mp_detail(2, 1.0, 0.0).method == "gram"


def test_jacobi_matches_lapack():
    rng = np.random.default_rng(5)
    for M in (2, 3, 5, 8):
        h = gue_matrices(M, 200, rng)
        assert np.max(np.abs(jacobi_eigvalsh(h) - np.linalg.eigvalsh(h))) < 1e-10


def test_gue_sampler_conventions():
    rng = np.random.default_rng(1)
    h = gue_matrices(4, 10, rng)
    assert np.allclose(h, np.conj(np.swapaxes(h, 1, 2)))
    assert np.max(np.abs(np.linalg.eigvals(h).imag)) < 1e-10
    # M = 1: the sample is the diagonal Gaussian itself
    a = gue_sample_max(1, np.random.default_rng(3))
    b = np.random.default_rng(3)
    b.standard_normal((1, 1, 1))
    b.standard_normal((1, 1, 1))
    assert a == b.standard_normal((1, 1))[0, 0]


@pytest.mark.parametrize("M", [1, 2, 3, 5])
def test_gue_monte_carlo_within_dkw_band(M):
    n = 10**5
    x = gue_sample_max_batch(M, n, np.random.default_rng(100 + M))
    assert ks_distance(EmpiricalCdf(x), lambda s: f_m1_gram_vec(M, s)) <= dkw_band(n, 0.01)


def test_gue_m2_cdf_at_zero():
    n = 10**5
    x = gue_sample_max_batch(2, n, np.random.default_rng(8))
    assert abs(np.mean(x <= 0) - GUE2_AT_0) <= 3 * dkw_band(n, 0.05)


def test_brownian_lpp_cross_check():
    n = 4000
    x = brownian_lpp_sample(2, n, np.random.default_rng(2), n_steps=2000)
    # grid bias is O(n_steps^-1/2) and downward
    assert ks_distance(EmpiricalCdf(x + 0.02), lambda s: f_m1_gram_vec(2, s)) <= dkw_band(n, 0.01)


# -- product law and tables ----------------------------------------------------------------------------


def test_product_law_cases():
    for p in (0.75, 1.0):
        assert product_law(2, 3, p) == f_mp(2, p, 0.0)
    assert product_law(2, 0, 1.0) == pytest.approx(GUE2_AT_0**2, abs=1e-12)
    assert product_law(1, -10, 0.75) < product_law(1, -2, 0.75) < product_law(1, 0, 0.75)
    assert product_law(2, -8, 1.0) < 1e-12


def test_table_csv_round_trip(tmp_path):
    t = build_table(2, 0.75, [-1.0, 0.0, 1.0, 2.0], refine=True)
    path = tmp_path / "t.csv"
    t.write_csv(path)
    back = DistributionTable.read_csv(path)
    assert back.M == 2 and back.p == 0.75 and back.m == t.m and back.L == t.L and back.n_lambda == 256
    assert np.array_equal(back.s, t.s) and np.array_equal(back.F, t.F)
    assert np.nanmax(t.refinement) < 1e-6
    with open(path) as fh:
        assert fh.readline().strip() == "M,p,m,L,r,n_lambda"


def test_table_monotone_and_flags_defects():
    t = build_table(1, 0.75, np.linspace(-3, 3, 13), refine=False)
    assert t.monotonicity_defects() == []
    bad = DistributionTable(1, 0.75, [0.0, 1.0, 2.0], [0.2, 0.5, 0.4])
    assert bad.monotonicity_defects() == [(1.0, 2.0)]


def test_reference_table_interpolation():
    tab = reference_table(2, 0.75)
    for s in (-0.7, 0.33, 1.9):
        assert abs(tab(s) - f_mp(2, 0.75, s)) < 1e-6
    cdf = limit_cdf(2, 1.0)
    assert abs(cdf(np.array([0.0]))[0] - GUE2_AT_0) < 1e-12
