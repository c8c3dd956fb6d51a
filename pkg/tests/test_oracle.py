import numpy as np
import pytest

from clmsep import _rng
from clmsep.asymptotics import limit_dev_factors
from clmsep.exceptions import SpecError
from clmsep.mack import dev_factors
from clmsep.models import ClaimSize, ModelSpec
from clmsep.oracle import decompose, oracle_result, true_std_cmsep
from clmsep.simulate import simulate_special
from clmsep.triangle import Triangle

from test_models import make_indep_spec, make_joint_spec


def simulated(spec, seed=123, rep=0):
    return simulate_special(spec, seed, rep).triangle


def test_nothing_to_predict_gives_zero():
    spec = make_indep_spec(q=(0.6, 0.4, 0.0, 0.0))
    tri = simulated(spec)
    i = 2  # m = 3, P(D > 3) = 0
    f_hat = np.ones(3)
    assert true_std_cmsep(tri, spec, f_hat, i) == 0.0


def test_unit_factor_product_leaves_pure_future_term():
    spec = make_indep_spec(alpha=500.0)
    tri = simulated(spec)
    i = 3
    m = spec.T - i + 1
    mom = spec.moments()
    en = spec.alpha * spec.lam[i - 1] * float(np.sum(mom.p_delay[m:]))
    c = tri.cells[i - 1, m - 1]
    expected = (en * mom.varz + en * mom.ez**2 + en**2 * mom.ez**2) / c
    assert true_std_cmsep(tri, spec, np.ones(3), i) == pytest.approx(expected, rel=1e-14)


def test_conditional_monte_carlo_oracle_agreement():
    spec = ModelSpec(T=3, alpha=10.0, lam=(1.0, 1.0, 1.0), q=(0.5, 0.3, 0.2),
                     claim_size=ClaimSize.point_mass(1.0), counting="poisson")
    i = 2
    inner = 200_000
    for rep in range(4):
        tri = simulate_special(spec, 2024, rep).triangle
        f_hat = dev_factors(tri)
        exact = true_std_cmsep(tri, spec, f_hat, i)
        # conditional Monte Carlo: resample only the future compound sum,
        # keeping the triangle fixed
        mom = spec.moments()
        en = spec.alpha * spec.lam[i - 1] * float(np.sum(mom.p_delay[spec.T - i + 1:]))
        c = tri.cells[i - 1, spec.T - i]
        g_hat = float(np.prod(f_hat[spec.T - i:]))
        rng = _rng.substream(2024, rep, accident_year=i,
                             purpose=_rng.PURPOSE_ORACLE_MC)
        draws = rng.poisson(en, size=inner).astype(float)  # Z == 1: sum = count
        samples = (draws - c * (g_hat - 1.0)) ** 2 / c
        mc = samples.mean()
        se = samples.std(ddof=1) / np.sqrt(inner)
        assert abs(exact - mc) < 4 * se


def test_decompose_no_estimation_error():
    spec = make_indep_spec(alpha=2000.0)
    tri = simulated(spec, seed=9)
    f_lim = limit_dev_factors(spec)
    t1, t2, t3 = decompose(tri, spec, f_lim, 3)
    assert t2 == 0.0
    assert t3 == 0.0
    assert true_std_cmsep(tri, spec, f_lim, 3) == pytest.approx(t1, rel=1e-12)


def test_decompose_centered_diagonal():
    spec = make_indep_spec(alpha=1000.0)
    i = 3
    m = spec.T - i + 1
    mom = spec.moments()
    ec = spec.alpha * spec.lam[i - 1] * mom.ez * mom.cdf_delay[m - 1]
    # plant a triangle whose diagonal cell equals its expectation
    cells = simulated(spec, seed=4).cells.copy()
    cells[i - 1, m - 1:] += ec - cells[i - 1, m - 1]
    tri = Triangle.from_cumulative(cells)
    t1, _, _ = decompose(tri, spec, np.ones(spec.T - 1), i)
    p_gt = float(np.sum(mom.p_delay[m:]))
    expected = (spec.alpha / ec) * spec.lam[i - 1] * mom.ez2 * p_gt
    assert t1 == pytest.approx(expected, rel=1e-12)


def test_decomposition_identity_random_triangles():
    spec = make_indep_spec(alpha=800.0, claim_size=ClaimSize.gamma(2.0, 0.7))
    for rep in range(30):
        tri = simulated(spec, seed=31, rep=rep)
        f_hat = dev_factors(tri)
        for i in (2, 3, 4):
            res = oracle_result(tri, spec, f_hat, i)
            total = res.term1 + res.term2 + res.term3
            assert total == pytest.approx(res.L_alpha, rel=1e-10)


def test_future_count_mean_field():
    spec = make_indep_spec(alpha=100.0)
    tri = simulated(spec, seed=2)
    res = oracle_result(tri, spec, np.ones(3), 2)
    mom = spec.moments()
    assert res.future_count_mean == pytest.approx(
        100.0 * spec.lam[1] * mom.p_delay[3], rel=1e-14)


def test_oracle_rejects_joint_law():
    spec = make_joint_spec()
    tri = simulated(spec, seed=8)
    with pytest.raises(SpecError):
        true_std_cmsep(tri, spec, np.ones(2), 2)


def test_oracle_rejects_zero_diagonal():
    spec = make_indep_spec(alpha=0.0)
    tri = simulated(spec)
    with pytest.raises(SpecError, match="positive"):
        true_std_cmsep(tri, spec, np.ones(3), 2)
