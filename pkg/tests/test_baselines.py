import math

import numpy as np
import pytest

from rsma_gmi.baselines import (
    mrt_directions,
    no_info_variant,
    oma_rate,
    optimize_fixed_directions,
    reduced_stacked,
    run_scheme,
    zf_directions,
)
from rsma_gmi.channel import CsiModel, complex_normal, draw_csi
from rsma_gmi.errors import DomainError
from rsma_gmi.optimizer import OptimizerConfig
from rsma_gmi.rates import build_stacked, objective_f

FAST = OptimizerConfig(n_random=200)


def test_zf_identity_channel():
    csi = CsiModel(np.eye(2, dtype=complex), 0.0, 1.0)
    np.testing.assert_allclose(zf_directions(csi).v_private, np.eye(2), atol=1e-15)


def test_zf_nulls_other_users():
    rng = np.random.default_rng(0)
    for nt, k in [(2, 2), (3, 2), (4, 3)]:
        csi = CsiModel(complex_normal(rng, (k, nt)), 0.05, 1.0)
        v = zf_directions(csi).v_private
        cross = np.abs(csi.h_hat.conj() @ v.T)  # [j, k] = |h_hat_j^H v_k|
        assert np.max(cross[~np.eye(k, dtype=bool)]) < 1e-9
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)


def test_zf_preconditions():
    rng = np.random.default_rng(1)
    with pytest.raises(DomainError, match="K <= Nt"):
        zf_directions(CsiModel(complex_normal(rng, (3, 2)), 0.0, 1.0))
    h = complex_normal(rng, (1, 2))
    with pytest.raises(DomainError, match="rank"):
        zf_directions(CsiModel(np.vstack([h, 2 * h]), 0.0, 1.0))


def test_mrt_directions():
    csi = CsiModel(np.array([[3.0, 4.0]], dtype=complex), 0.0, 1.0)
    np.testing.assert_allclose(mrt_directions(csi).v_private, [[0.6, 0.8]])
    one = CsiModel(np.array([[2 - 2j]]), 0.0, 1.0)
    v = mrt_directions(one).v_private[0, 0]
    assert abs(v) == pytest.approx(1.0)
    assert v == pytest.approx((2 - 2j) / abs(2 - 2j))
    with pytest.raises(DomainError):
        mrt_directions(CsiModel(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex), 0.0, 1.0))


def test_reduction_matches_full_objective():
    rng = np.random.default_rng(2)
    csi = draw_csi(3, 2, 0.1, 1.0, 7)
    for dirs in (zf_directions(csi), mrt_directions(csi)):
        reduced, t = reduced_stacked(csi, dirs, 10.0)
        for _ in range(10):
            q = complex_normal(rng, 2 + 3)
            q *= math.sqrt(10.0) / np.linalg.norm(q)
            p = t @ q
            # T has orthonormal columns, so power is preserved
            assert np.vdot(p, p).real == pytest.approx(10.0)
            assert objective_f(reduced, q) == pytest.approx(objective_f(build_stacked(csi, 10.0), p), rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_single_user_mrt_closed_form(seed):
    csi = draw_csi(2, 1, 0.0, 1.0, seed)
    res = optimize_fixed_directions(csi, mrt_directions(csi), 10.0, FAST)
    closed = math.log2(1 + 10.0 * np.sum(np.abs(csi.h_hat) ** 2))
    assert res.rates.r_sum == pytest.approx(closed, rel=0.02)
    # private stream must point along the MRT direction
    v = mrt_directions(csi).v_private[0]
    pk = res.precoders.p_private[0]
    if np.linalg.norm(pk) > 0:
        assert abs(np.vdot(v, pk)) == pytest.approx(np.linalg.norm(pk))


def test_fixed_direction_precoders_along_directions():
    csi = draw_csi(2, 2, 0.05, 1.0, 3)
    dirs = zf_directions(csi)
    res = optimize_fixed_directions(csi, dirs, 100.0, FAST)
    for k in range(2):
        pk = res.precoders.p_private[k]
        assert np.linalg.norm(pk - np.linalg.norm(pk) * dirs.v_private[k]) < 1e-12
    assert res.precoders.total_power() == pytest.approx(100.0, rel=1e-9)


def test_oma_examples():
    csi = CsiModel(np.array([[1.0], [1.0]], dtype=complex), 0.0, 1.0)
    rep = oma_rate(csi, 1.0)
    # each user gets log2(1 + 1) for half the time
    np.testing.assert_allclose(rep.r_private, [0.5, 0.5])
    assert rep.r_sum == pytest.approx(1.0)
    assert oma_rate(csi, 0.0).r_sum == 0.0
    with pytest.raises(DomainError):
        oma_rate(csi, -1.0)


def test_oma_saturates_with_error():
    csi = CsiModel(np.array([[math.sqrt(0.9)], [math.sqrt(0.9)]], dtype=complex), 0.1, 1.0)
    ceiling = math.log2(1 + 0.9 / 0.1)
    assert oma_rate(csi, 1e9).r_sum == pytest.approx(ceiling, rel=1e-6)
    assert oma_rate(csi, 1e3).r_sum < ceiling


def test_no_info_equals_informed_without_error():
    csi = draw_csi(2, 2, 0.0, 1.0, 5)
    for scheme in ("RSMA", "SDMA", "OMA"):
        informed = run_scheme(csi, 31.6, FAST, scheme).rates.r_sum
        assert no_info_variant(csi, 31.6, FAST, scheme).r_sum == informed


def test_oma_no_info_identical_under_error():
    csi = draw_csi(2, 2, 0.1, 1.0, 5)
    assert no_info_variant(csi, 100.0, FAST, "OMA").r_sum == run_scheme(csi, 100.0, FAST, "OMA").rates.r_sum


def test_no_info_evaluated_under_true_error():
    csi = draw_csi(2, 2, 0.1, 1.0, 5)
    out = run_scheme(csi, 100.0, FAST, "RSMA", no_info=True)
    from rsma_gmi.rates import rate_report

    assert out.rates.r_sum == pytest.approx(rate_report(csi, out.precoders).r_sum)
    assert out.rates.r_sum < rate_report(csi.with_sigma_e2(0.0), out.precoders).r_sum


def test_unknown_scheme():
    with pytest.raises(DomainError):
        run_scheme(draw_csi(2, 2, 0.1, 1.0, 0), 1.0, FAST, "CDMA")
