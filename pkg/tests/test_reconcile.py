import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hnl.forecasters import ForecastBundle
from hnl.laplace import build_band_partition
from hnl.metrics import block_downsample, mce, tce
from hnl.reconcile import bu_reconcile, build_aggregation, opt_reconcile

LADDER = (1.0, 4.0, 12.0)


def random_bundle(rng, batch=None, ladder=LADDER, horizon=24):
    shape = () if batch is None else (batch,)
    return {r: rng.normal(100, 20, size=(*shape, int(horizon * r))) for r in ladder}


def test_aggregation_rows():
    agg = build_aggregation(build_band_partition(LADDER, 24))
    assert agg.lengths == (24, 96, 288)
    S = agg.S
    assert S.shape == (408, 288)
    np.testing.assert_allclose(S.sum(1), 1.0)
    np.testing.assert_array_equal(S[0, :12], np.full(12, 1 / 12))
    assert np.all(S[0, 12:] == 0)
    np.testing.assert_array_equal(S[-288:], np.eye(288))


def test_aggregation_rejects_non_nested_ladder():
    with pytest.raises(ValueError):
        build_aggregation([1.0, 100 / 24], 24)
    with pytest.raises(ValueError):
        build_aggregation([4.0, 1.0], 24)


def test_structural_weights():
    agg = build_aggregation(LADDER, 24)
    w = agg.weights("structural")
    assert w[0] == 12 and w[24] == 3 and w[-1] == 1
    with pytest.raises(ValueError):
        agg.weights("mint")


def test_bu_zeroes_every_pair(rng):
    b = bu_reconcile(random_bundle(rng, 4))
    assert np.all(tce(b) == 0)
    for lo, hi in [(1, 4), (1, 12), (4, 12)]:
        assert np.all(mce(b[lo], b[hi], lo, hi) == 0)


def test_bu_keeps_base_and_provenance(rng):
    raw = random_bundle(rng, 3)
    fb = ForecastBundle(raw, None, {"model": "x"})
    out = bu_reconcile(fb)
    assert np.array_equal(out.values[12.0], raw[12.0])
    assert out.provenance == {"model": "x", "coordination": "bu"}


def test_bu_constant_base():
    out = bu_reconcile({1.0: np.zeros(24), 12.0: np.full(288, 3.25)})
    np.testing.assert_array_equal(out[1.0], np.full(24, 3.25))


def test_bu_missing_base(rng):
    with pytest.raises(ValueError):
        bu_reconcile({1.0: np.zeros(24), 4.0: np.zeros(96)}, base_resolution=12.0)
    with pytest.raises(ValueError):
        bu_reconcile({})


def test_opt_fixes_coherent_bundles(rng):
    base = rng.normal(size=(5, 288))
    coherent = {r: block_downsample(base, 12, r) for r in LADDER}
    for w in ("identity", "structural"):
        out = opt_reconcile(coherent, w)
        for r in LADDER:
            np.testing.assert_allclose(out[r], coherent[r], atol=1e-10)


def test_opt_handles_single_origin(rng):
    b = random_bundle(rng)
    out = opt_reconcile(b)
    assert out[4.0].shape == (96,)
    assert tce(out) <= 1e-8


def test_opt_length_mismatch(rng):
    b = random_bundle(rng, 2)
    b[4.0] = b[4.0][:, :95]
    with pytest.raises(ValueError):
        opt_reconcile(b)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["identity", "structural"]),
       st.sampled_from([(1.0, 4.0, 12.0), (2.0, 6.0), (1.0, 2.0, 4.0, 12.0)]))
def test_opt_is_idempotent_coherent_projection(seed, weighting, ladder):
    rng = np.random.default_rng(seed)
    b = random_bundle(rng, 3, ladder)
    once = opt_reconcile(b, weighting)
    twice = opt_reconcile(once, weighting)
    for r in ladder:
        np.testing.assert_allclose(twice[r], once[r], atol=1e-10)
    assert np.max(tce(once)) <= 1e-8


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_opt_is_linear(seed, a, c):
    rng = np.random.default_rng(seed)
    x, y = random_bundle(rng, 2), random_bundle(rng, 2)
    mix = opt_reconcile({r: a * x[r] + c * y[r] for r in LADDER})
    ox, oy = opt_reconcile(x), opt_reconcile(y)
    for r in LADDER:
        np.testing.assert_allclose(mix[r], a * ox[r] + c * oy[r], atol=1e-9)


def test_opt_matches_explicit_gls(rng):
    # Oracle: dense pseudo-inverse form of the GLS projection.
    b = random_bundle(rng)
    agg = build_aggregation(LADDER, 24)
    W = np.diag(agg.weights("structural"))
    Wi = np.linalg.inv(W)
    P = agg.S @ np.linalg.pinv(agg.S.T @ Wi @ agg.S) @ agg.S.T @ Wi
    ref = P @ np.concatenate([b[r] for r in LADDER])
    out = opt_reconcile(b, "structural")
    np.testing.assert_allclose(np.concatenate([out[r] for r in LADDER]), ref, atol=1e-9)


def test_opt_identity_weights_equal_least_squares(rng):
    # Identity W reduces to ordinary least squares on the base vector.
    b = random_bundle(rng)
    agg = build_aggregation(LADDER, 24)
    y = np.concatenate([b[r] for r in LADDER])
    beta, *_ = np.linalg.lstsq(agg.S, y, rcond=None)
    np.testing.assert_allclose(opt_reconcile(b)[12.0], beta, atol=1e-9)
