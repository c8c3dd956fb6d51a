import math

import numpy as np
import pytest

from clmsep.asymptotics import (
    asymptotic_quantities,
    f_to_qtilde,
    gamma2,
    hf_moments,
    limit_dev_factors,
    limit_sigma2,
    process_term_expectation,
    quadratic_form_eigs,
    renewal_clt_cov,
)
from clmsep.exceptions import SpecError
from clmsep.models import ClaimSize, Interarrival, JointAtom, ModelSpec

from test_models import JOINT_ATOMS, make_indep_spec, make_joint_spec


def random_special_spec(rng, T=None):
    T = T or int(rng.integers(3, 8))
    q = rng.uniform(0.05, 1.0, size=T)
    q = q / q.sum()
    lam = rng.uniform(0.3, 2.0, size=T)
    family = rng.integers(0, 3)
    if family == 0:
        z = ClaimSize.point_mass(float(rng.uniform(0.5, 3.0)))
    elif family == 1:
        z = ClaimSize.gamma(float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.2, 2.0)))
    else:
        z = ClaimSize.discrete([1.0, 2.0, 4.0], [0.5, 0.3, 0.2])
    return ModelSpec(T=T, alpha=float(rng.uniform(10, 1e5)), lam=tuple(lam),
                     q=tuple(q), claim_size=z, counting="poisson")


# ---------------------------------------------------------------------------
# development-factor limits

def test_uniform_delay_limits():
    spec = make_indep_spec(q=(0.25, 0.25, 0.25, 0.25))
    assert np.allclose(limit_dev_factors(spec), [2.0, 1.5, 4.0 / 3.0], rtol=1e-15)


def test_limits_round_trip_to_q():
    rng = np.random.default_rng(21)
    for _ in range(25):
        spec = random_special_spec(rng)
        q = f_to_qtilde(limit_dev_factors(spec))
        assert np.allclose(q, spec.q, rtol=1e-12, atol=1e-14)


def test_joint_limits_match_enumeration():
    spec = make_joint_spec()
    f = limit_dev_factors(spec)
    for t in range(1, 3):
        num = sum(a.z * a.p for a in JOINT_ATOMS if a.d <= t + 1)
        den = sum(a.z * a.p for a in JOINT_ATOMS if a.d <= t)
        assert f[t - 1] == pytest.approx(num / den, rel=1e-14)


# ---------------------------------------------------------------------------
# sigma2 limits

def test_sigma2_limit_unit_claims():
    spec = make_indep_spec()
    f = limit_dev_factors(spec)
    s2 = limit_sigma2(spec)
    assert np.allclose(s2, (f - 1.0) * f, rtol=1e-14)


def test_sigma2_limit_zero_increment_year():
    spec = make_indep_spec(q=(0.5, 0.5, 0.0, 0.0))
    s2 = limit_sigma2(spec)
    assert s2[1] == 0.0 and s2[2] == 0.0


def test_sigma2_limit_general_form_matches_enumeration():
    spec = make_joint_spec()
    f = limit_dev_factors(spec)
    s2 = limit_sigma2(spec)
    for t in range(1, 3):
        ez_next = sum(a.z * a.p for a in JOINT_ATOMS if a.d == t + 1)
        ez2_next = sum(a.z**2 * a.p for a in JOINT_ATOMS if a.d == t + 1)
        ez_cum = sum(a.z * a.p for a in JOINT_ATOMS if a.d <= t)
        ez2_cum = sum(a.z**2 * a.p for a in JOINT_ATOMS if a.d <= t)
        expected = (f[t - 1] - 1) * (ez2_next / ez_next + (f[t - 1] - 1) * ez2_cum / ez_cum)
        assert s2[t - 1] == pytest.approx(expected, rel=1e-12)


def test_sigma2_limit_reduces_to_independent_form():
    spec = make_indep_spec(claim_size=ClaimSize.gamma(2.0, 1.5))
    f = limit_dev_factors(spec)
    ratio = spec.claim_size.second_moment() / spec.claim_size.mean()
    assert np.allclose(limit_sigma2(spec), (f - 1) * f * ratio, rtol=1e-12)


# ---------------------------------------------------------------------------
# q-tilde transform

def test_qtilde_no_development():
    assert np.allclose(f_to_qtilde([1.0, 1.0, 1.0]), [1.0, 0.0, 0.0, 0.0], atol=0)


def test_qtilde_single_factor():
    assert np.allclose(f_to_qtilde([2.0]), [0.5, 0.5], atol=0)


def test_qtilde_sums_to_one():
    rng = np.random.default_rng(33)
    for _ in range(50):
        f = rng.uniform(0.2, 5.0, size=int(rng.integers(1, 12)))
        q = f_to_qtilde(f)
        assert math.fsum(q) == pytest.approx(1.0, abs=1e-12)


def test_qtilde_rejects_non_positive():
    with pytest.raises(SpecError):
        f_to_qtilde([1.0, 0.0])


# ---------------------------------------------------------------------------
# gamma2

def test_gamma2_zero_when_no_dispersion():
    spec = make_indep_spec(q=(1.0, 0.0, 0.0, 0.0))
    assert gamma2(spec, 3) == 0.0


def test_gamma2_single_term_hand_evaluation():
    spec = make_indep_spec(claim_size=ClaimSize.gamma(2.0, 0.5))
    i = 2
    T = spec.T
    m = T - i + 1  # = 3
    f = limit_dev_factors(spec)
    s2 = limit_sigma2(spec)
    mom = spec.moments()
    den = sum(spec.lam[j] * mom.ez * mom.cdf_delay[m - 1] for j in range(T - m))
    expected = (spec.lam[i - 1] * mom.ez * mom.cdf_delay[m - 1]
                * f[m - 1] ** 2 * (s2[m - 1] / f[m - 1] ** 2) / den)
    assert gamma2(spec, i) == pytest.approx(expected, rel=1e-12)


def test_gamma2_refuses_joint_law():
    with pytest.raises(SpecError, match="closed form"):
        gamma2(make_joint_spec(), 2)


# ---------------------------------------------------------------------------
# process-term expectation identity

def test_process_term_identity_zero_future():
    spec = make_indep_spec(q=(0.6, 0.4, 0.0, 0.0))
    lhs, rhs = process_term_expectation(spec, 2)  # m = 3: P(D>3) = 0
    assert lhs == pytest.approx(0.0, abs=1e-14)
    assert rhs == pytest.approx(0.0, abs=1e-14)


def test_process_term_identity_random_specs():
    rng = np.random.default_rng(55)
    for _ in range(100):
        spec = random_special_spec(rng)
        i = int(rng.integers(2, spec.T + 1))
        lhs, rhs = process_term_expectation(spec, i)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_process_term_requires_special_model():
    with pytest.raises(SpecError):
        process_term_expectation(make_joint_spec(), 2)


# ---------------------------------------------------------------------------
# renewal CLT covariance

def test_poisson_cov_is_diagonal():
    spec = make_indep_spec(claim_size=ClaimSize.gamma(2.0, 1.0))
    mom = spec.moments()
    sigma = renewal_clt_cov(spec, 2)
    assert np.allclose(sigma, np.diag(spec.lam[1] * mom.ez2_ind), rtol=1e-14)


def test_poisson_unit_claims_cov_is_lambda_q():
    spec = make_indep_spec()
    sigma = renewal_clt_cov(spec, 1)
    assert np.allclose(sigma, np.diag(np.asarray(spec.q)), rtol=1e-14)


def test_gamma_renewal_cov_formula():
    spec = make_indep_spec(counting="renewal", interarrival=Interarrival("gamma", 2.0),
                           claim_size=ClaimSize.gamma(3.0, 0.5))
    j = 1
    lam = spec.lam[0]
    mom = spec.moments()
    sigma = renewal_clt_cov(spec, j)
    q = np.asarray(spec.q)
    expected = lam * mom.ez2 * np.diag(q) - (lam / 2.0) * mom.ez**2 * np.outer(q, q)
    assert np.allclose(sigma, expected, rtol=1e-12)
    # symmetric PSD
    assert np.allclose(sigma, sigma.T, atol=0)
    assert np.min(np.linalg.eigvalsh(sigma)) > -1e-12


def test_hf_moments_bilinearity():
    spec = make_indep_spec(counting="renewal", interarrival=Interarrival("gamma", 3.0),
                           claim_size=ClaimSize.discrete([1.0, 2.0], [0.7, 0.3]))
    mom = spec.moments()
    lam = spec.lam[0]
    corr = lam * (lam**2 * mom.var_y[0] - 1.0)
    total_var = lam * mom.ez2 + corr * mom.ez**2
    for t in range(1, spec.T + 1):
        hf = hf_moments(spec, 1, t)
        assert hf.var_h + hf.var_f + 2 * hf.cov_hf == pytest.approx(total_var, rel=1e-12)


def test_hf_poisson_independent():
    spec = make_indep_spec()
    hf = hf_moments(spec, 1, 2)
    assert hf.cov_hf == 0.0


# ---------------------------------------------------------------------------
# quadratic-form eigenvalues

def test_identity_eigenvalues():
    assert np.allclose(quadratic_form_eigs(np.eye(3)), [1.0, 1.0, 1.0], atol=1e-14)


def test_rank_one_eigenvalues():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    eigs = quadratic_form_eigs(np.outer(v, v))
    assert eigs[0] == pytest.approx(float(v @ v), rel=1e-12)
    assert np.allclose(eigs[1:], 0.0, atol=1e-10)


def test_rejects_asymmetric():
    m = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(SpecError, match="symmetric"):
        quadratic_form_eigs(m)


def build_centering_shape_matrix(lambdas):
    """The limit shape matrix of the variance-estimator statistic.

    B has entries lam_j^{-1/2} (delta_{jl} - lam_j / sum(lam)); the shape
    matrix is E-weighted B diag(lam) B^T with the leading scalar dropped,
    i.e. exactly B diag(lam) B^T.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    n = len(lam)
    total = lam.sum()
    B = np.empty((n, n))
    for j in range(n):
        for l in range(n):
            B[j, l] = lam[j] ** -0.5 * ((1.0 if j == l else 0.0) - lam[j] / total)
    return B @ np.diag(lam) @ B.T


def test_variance_statistic_shape_matrix_eigenstructure():
    sigma = build_centering_shape_matrix([1.0, 0.984, 0.812])
    eigs = quadratic_form_eigs(sigma)
    assert np.allclose(eigs, [1.0, 1.0, 0.0], atol=1e-10)


def test_shape_matrix_eigenvectors_match_closure():
    # the eigenvalue-1 space is spanned by sqrt-intensity contrasts and the
    # null space by the sqrt-intensity vector itself
    lam = np.array([0.7, 1.3, 0.9, 1.1])
    sigma = build_centering_shape_matrix(lam)
    null_vec = np.sqrt(lam)
    assert np.allclose(sigma @ null_vec, 0.0, atol=1e-12)
    contrast = np.array([np.sqrt(lam[1]), -np.sqrt(lam[0]), 0.0, 0.0])
    assert np.allclose(sigma @ contrast, contrast, atol=1e-12)


# ---------------------------------------------------------------------------
# bundle

def test_asymptotic_quantities_bundle():
    spec = make_indep_spec()
    aq = asymptotic_quantities(spec, years=(2, 3), clt_year=1, split_year=2)
    assert set(aq.gamma2) == {2, 3}
    assert aq.clt_cov is not None and aq.hf is not None
    payload = aq.to_json()
    assert math.fsum(payload["q_tilde"]) == pytest.approx(1.0, abs=1e-12)
