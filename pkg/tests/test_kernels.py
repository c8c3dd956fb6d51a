"""Backend parity: the compiled kernel, the pure-Python kernel and the
single-triangle mack module must agree bit for bit."""

import numpy as np
import pytest

from clmsep import _kernels as K
from clmsep._kernels import reference as ref
from clmsep.harness import _year_inputs
from clmsep.mack import TailRule, dev_factors, mack_msep, sigma2
from clmsep.models import ClaimSize
from clmsep.oracle import oracle_result
from clmsep.simulate import simulate_batch
from clmsep.triangle import Triangle

from test_models import make_indep_spec

try:
    from clmsep._kernels import _fast
except ImportError:
    _fast = None

needs_compiled = pytest.mark.skipif(_fast is None, reason="compiled kernel not built")


@pytest.fixture(scope="module")
def batch():
    spec = make_indep_spec(T=4, alpha=300.0, claim_size=ClaimSize.gamma(2.0, 0.5))
    return spec, simulate_batch(spec, 17, 0, 128)


@needs_compiled
@pytest.mark.parametrize("tail_kind,tail_value", [
    (K.TAIL_MACK, 0.0), (K.TAIL_RATIO, 0.0), (K.TAIL_USER, 1.25),
])
def test_chain_stats_backend_parity(batch, tail_kind, tail_value):
    _, cum = batch
    for a, b in zip(_fast.chain_stats(cum, tail_kind, tail_value),
                    ref.chain_stats(cum, tail_kind, tail_value)):
        assert np.array_equal(a, b, equal_nan=True)


@needs_compiled
def test_year_stats_backend_parity(batch):
    spec, cum = batch
    f_hat, s2, colsum, ok = ref.chain_stats(cum, K.TAIL_RATIO, 0.0)
    yi = _year_inputs(spec, 3)
    args = (cum, f_hat, s2, colsum, ok, yi.year, spec.alpha, yi.esum,
            yi.esum2, yi.ec, yi.g, yi.pgt_term)
    out_c, ok_c = _fast.year_stats(*args)
    out_p, ok_p = ref.year_stats(*args)
    assert np.array_equal(out_c, out_p, equal_nan=True)
    assert np.array_equal(ok_c, ok_p)


def test_kernel_matches_mack_module_bitwise(batch):
    _, cum = batch
    for rule, kind, value in ((TailRule.mack(), K.TAIL_MACK, 0.0),
                              (TailRule.ratio(), K.TAIL_RATIO, 0.0)):
        f_hat, s2, colsum, ok = K.chain_stats(cum, kind, value)
        for r in (0, 5, 17):
            tri = Triangle.from_cumulative(cum[r])
            f_mod = dev_factors(tri)
            s_mod = sigma2(tri, rule, f_mod)
            assert np.array_equal(f_mod, f_hat[r])
            assert np.array_equal(s_mod, s2[r])
            report = mack_msep(tri, f_mod, s_mod, rule)
            for row in report.rows:
                pass  # standardized value checked below against year kernel


def test_kernel_l_hat_matches_mack_module(batch):
    spec, cum = batch
    f_hat, s2, colsum, ok = K.chain_stats(cum, K.TAIL_RATIO, 0.0)
    yi = _year_inputs(spec, 3)
    out, ok_y = K.year_stats(cum, f_hat, s2, colsum, ok, 3, spec.alpha,
                             yi.esum, yi.esum2, yi.ec, yi.g, yi.pgt_term)
    for r in (1, 9, 33):
        tri = Triangle.from_cumulative(cum[r])
        report = mack_msep(tri, f_hat[r], s2[r], TailRule.ratio())
        assert out[r, K.COL_L_HAT] == report.row(3).standardized_msep


def test_kernel_oracle_matches_oracle_module(batch):
    spec, cum = batch
    f_hat, s2, colsum, ok = K.chain_stats(cum, K.TAIL_RATIO, 0.0)
    yi = _year_inputs(spec, 2)
    out, ok_y = K.year_stats(cum, f_hat, s2, colsum, ok, 2, spec.alpha,
                             yi.esum, yi.esum2, yi.ec, yi.g, yi.pgt_term)
    for r in (0, 21, 64):
        tri = Triangle.from_cumulative(cum[r])
        res = oracle_result(tri, spec, f_hat[r], 2)
        assert out[r, K.COL_L_TRUE] == pytest.approx(res.L_alpha, rel=1e-12)
        assert out[r, K.COL_TERM1] == pytest.approx(res.term1, rel=1e-12)
        assert out[r, K.COL_TERM2] == pytest.approx(res.term2, rel=1e-12, abs=1e-300)
        assert out[r, K.COL_TERM3] == pytest.approx(res.term3, rel=1e-12, abs=1e-300)


def test_failed_replication_marked_not_raised():
    cum = np.zeros((2, 4, 4))
    f_hat, s2, colsum, ok = K.chain_stats(cum, K.TAIL_MACK, 0.0)
    assert np.all(ok == 0)
    assert np.all(np.isnan(f_hat))


def test_decomposition_identity_in_kernel(batch):
    spec, cum = batch
    f_hat, s2, colsum, ok = K.chain_stats(cum, K.TAIL_RATIO, 0.0)
    yi = _year_inputs(spec, 4)
    out, ok_y = K.year_stats(cum, f_hat, s2, colsum, ok, 4, spec.alpha,
                             yi.esum, yi.esum2, yi.ec, yi.g, yi.pgt_term)
    good = ok_y == 1
    total = out[good, K.COL_TERM1] + out[good, K.COL_TERM2] + out[good, K.COL_TERM3]
    assert np.allclose(total, out[good, K.COL_L_TRUE], rtol=1e-10)
