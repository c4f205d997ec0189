import numpy as np
import pytest

from fpca import (
    DeviceModel,
    IdealLinear,
    SaturatingOracle,
    Surface2D,
    SurrogateDevice,
    SurrogateModel,
    error_report,
    find_anchor,
    fit_bucket,
    fit_generic,
    fit_surrogate,
)
from fpca.errors import EstimateOutOfRange, SingularFit, UnreachableBucket
from fpca.surrogate import BucketModel, fit_surface


class ConstantOracle(DeviceModel):
    """Degenerate device pinned at a fixed voltage."""

    def __init__(self, level=0.25, v_max=1.0):
        self.level = level
        self.v_max = v_max
        self.params = {"level": level}

    def evaluate(self, currents, weights):
        currents = np.asarray(currents, dtype=np.float64)
        return np.full(currents.shape[:-1], self.level)


@pytest.fixture(scope="module")
def sat_model():
    return fit_surrogate(SaturatingOracle())


@pytest.fixture(scope="module")
def lin_model():
    return fit_surrogate(IdealLinear())


def test_fit_generic_ideal_linear_is_exact():
    surface = fit_generic(IdealLinear(v_max=2.0), n_pixels=75)
    assert surface.residual_rms < 1e-9
    grid = np.linspace(0, 1, 7)
    gi, gw = np.meshgrid(grid, grid)
    np.testing.assert_allclose(surface.evaluate(gi, gw), 2.0 * gi * gw,
                               atol=1e-9)


def test_fit_generic_constant_oracle():
    surface = fit_generic(ConstantOracle(0.25), n_pixels=75)
    assert surface.residual_rms < 1e-12
    assert surface.evaluate(0.3, 0.9) == pytest.approx(0.25, abs=1e-9)


def test_fit_generic_saturating_residual_bound():
    surface = fit_generic(SaturatingOracle(), n_pixels=75, grid_size=21,
                          degree=3)
    assert surface.residual_rms < 0.01  # of v_max = 1


def test_fit_surface_rejects_rank_deficiency():
    # all points identical: every nonconstant column is collinear
    pts = np.full(40, 0.5)
    with pytest.raises(SingularFit):
        fit_surface(pts, pts, pts, degree=3)


def test_find_anchor_ideal_bucket3():
    anchor = find_anchor(IdealLinear(), 75, bucket=3)
    assert anchor[0] == anchor[1]
    assert anchor[0] == pytest.approx(np.sqrt(0.5), abs=1e-4)


def test_find_anchor_unreachable_bucket():
    # saturating oracle tops out at 20/33 ~ 0.606 < 0.7
    with pytest.raises(UnreachableBucket):
        find_anchor(SaturatingOracle(), 75, bucket=4)


@pytest.mark.parametrize("bucket", [1, 2, 3])
def test_find_anchor_lands_inside_bucket_saturating(bucket):
    oracle = SaturatingOracle()
    t, _ = find_anchor(oracle, 75, bucket=bucket)
    out = oracle.evaluate(np.full((1, 75), t), np.full((1, 75), t))[0]
    assert (bucket - 1) / 5 <= out <= bucket / 5


def test_fit_bucket_linear_superposition():
    oracle = IdealLinear()
    anchor = (0.6, 0.6)
    surface = fit_bucket(oracle, anchor, n_pixels=75, subset_size=5)
    assert surface.residual_rms < 1e-9
    gi = np.array([0.0, 0.3, 1.0])
    gw = np.array([1.0, 0.7, 0.2])
    expect = (5 * gi * gw + 70 * 0.36) / 75
    np.testing.assert_allclose(surface.evaluate(gi, gw), expect, atol=1e-9)


def test_fit_bucket_anchor_point_matches_homogeneous():
    oracle = SaturatingOracle()
    t, _ = find_anchor(oracle, 75, bucket=2)
    surface = fit_bucket(oracle, (t, t), n_pixels=75, subset_size=5)
    assert surface.residual_rms < 0.01
    homog = oracle.evaluate(np.full((1, 75), t), np.full((1, 75), t))[0]
    assert surface.evaluate(t, t) == pytest.approx(homog, abs=3 * 0.01)


def test_surrogate_unreachable_buckets_flagged(sat_model):
    assert [b.reachable for b in sat_model.buckets] == [True, True, True,
                                                        False, False]
    # unreachable buckets reuse the nearest reachable anchor (bucket 3)
    assert sat_model.buckets[3].anchor_current == sat_model.buckets[2].anchor_current
    assert sat_model.buckets[4].anchor_current == sat_model.buckets[2].anchor_current


def test_surrogate_anchor_consistency(sat_model):
    oracle = SaturatingOracle()
    for bucket in sat_model.buckets:
        if not bucket.reachable:
            continue
        level = oracle.evaluate(np.full((1, 75), bucket.anchor_current),
                                np.full((1, 75), bucket.anchor_weight))[0]
        lo, hi = (bucket.index - 1) / 5, bucket.index / 5
        assert lo <= level <= hi
        assert bucket.anchor_output == pytest.approx(level, abs=1e-6)


def test_predict_step_all_pixels_at_anchor_linear(lin_model):
    bucket = lin_model.buckets[2]
    currents = np.full(75, bucket.anchor_current)
    weights = np.full(75, bucket.anchor_weight)
    assert lin_model.predict_step(currents, weights) == pytest.approx(
        bucket.anchor_output, abs=1e-8)


def test_predict_step_recovers_linear_dot_product(lin_model, rng):
    currents = rng.uniform(0, 1, (200, 75))
    weights = rng.uniform(0, 1, (200, 75))
    expect = (currents * weights).mean(axis=1)
    got = lin_model.predict_step(currents, weights)
    assert np.max(np.abs(got - expect)) < 1e-7


def test_predict_sigmoid_recovers_linear_dot_product(lin_model, rng):
    currents = rng.uniform(0, 1, (200, 75))
    weights = rng.uniform(0, 1, (200, 75))
    expect = (currents * weights).mean(axis=1)
    got = lin_model.predict_sigmoid(currents, weights)
    # sigmoid windows leak ~sigma(-slope*x) near the range ends
    assert np.max(np.abs(got - expect)) < 1e-3


def test_predict_step_saturating_accuracy(sat_model, rng):
    oracle = SaturatingOracle()
    currents = rng.uniform(0, 1, (500, 75))
    weights = rng.uniform(0, 1, (500, 75))
    err = np.abs(sat_model.predict_step(currents, weights)
                 - oracle.evaluate(currents, weights))
    assert err.mean() < 0.03


def test_sigmoid_weights_sum_telescopes(sat_model):
    from scipy.special import expit

    x = np.linspace(0.02, 0.98, 97)
    total = sat_model._sigmoid_weights(x).sum(axis=0)
    closed = expit(100 * x) + expit(100 * (1 - x)) - 1
    np.testing.assert_allclose(total, closed, atol=1e-12)
    eps = 10 * expit(-100 * 0.02)
    assert np.all(total >= 1 - eps) and np.all(total <= 1 + eps)


def test_sigmoid_weights_at_bucket_center_and_boundary(sat_model):
    from scipy.special import expit

    # at the bucket-3 center the own weight misses 1 by exactly
    # 2*sigma(-slope/10); the direct neighbors each carry ~sigma(-slope/10)
    w = sat_model._sigmoid_weights(np.array([0.5]))[:, 0]
    assert w[2] == pytest.approx(1.0 - 2 * expit(-10.0), abs=1e-12)
    assert w[1] == pytest.approx(expit(-10.0), rel=1e-6)
    assert w[3] == pytest.approx(expit(-10.0), rel=1e-6)
    assert np.all(w[[0, 4]] < 1e-8)
    w = sat_model._sigmoid_weights(np.array([0.4]))[:, 0]  # bucket 2/3 edge
    assert w[1] == pytest.approx(0.5, abs=1e-8)
    assert w[2] == pytest.approx(0.5, abs=1e-8)


def test_sigmoid_step_agreement_away_from_boundaries(sat_model, rng):
    currents = rng.uniform(0, 1, (500, 75))
    weights = rng.uniform(0, 1, (500, 75))
    x = sat_model.estimate(currents, weights) / sat_model.v_max
    edges = np.arange(6) / 5
    margin = np.abs(x[:, None] - edges[None, :]).min(axis=1)
    far = margin > 0.01
    step = np.atleast_1d(sat_model.predict_step(currents, weights))
    smooth = np.atleast_1d(sat_model.predict_sigmoid(currents, weights))
    assert np.max(np.abs(step - smooth)[far]) < 0.005


def test_predict_sigmoid_continuous_across_boundary(sat_model, rng):
    # scale one contribution vector so its estimate crosses the 0.4 edge
    base_i = rng.uniform(0, 1, 75)
    base_w = rng.uniform(0, 1, 75)

    def x_of(scale):
        est = np.squeeze(sat_model.estimate(base_i * scale, base_w))
        return float(est) / sat_model.v_max

    lo, hi = 0.2, 5.0
    assert x_of(lo) < 0.4 < x_of(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if x_of(mid) < 0.4:
            lo = mid
        else:
            hi = mid
    before = sat_model.predict_sigmoid(base_i * lo, base_w)
    after = sat_model.predict_sigmoid(base_i * hi, base_w)
    assert abs(after - before) < 1e-3  # of v_max = 1


def test_estimate_out_of_range_raises():
    # generic surface pinned at 3x v_max
    surface = Surface2D(degree=1, coeffs=np.array([3.0, 0.0, 0.0]))
    bucket = BucketModel(index=1, surface=surface, anchor_current=0.5,
                         anchor_weight=0.5, anchor_output=0.5)
    model = SurrogateModel(generic=surface, buckets=[bucket] * 5,
                           pixel_count=4, subset_size=2, slope=100.0,
                           v_max=1.0)
    with pytest.raises(EstimateOutOfRange):
        model.predict_step(np.full(4, 0.5), np.full(4, 0.5))


def test_gradient_zero_surfaces_zero_gradient():
    zero = Surface2D(degree=1, coeffs=np.zeros(3))
    bucket = BucketModel(index=1, surface=zero, anchor_current=0.0,
                         anchor_weight=0.0, anchor_output=0.0)
    model = SurrogateModel(generic=zero, buckets=[bucket] * 5, pixel_count=4,
                           subset_size=2, slope=100.0, v_max=1.0)
    d_i, d_w = model.gradient(np.zeros(4), np.zeros(4))
    assert not d_i.any() and not d_w.any()


def test_gradient_linear_model_closed_form(lin_model, rng):
    currents = rng.uniform(0.05, 0.95, 75)
    weights = rng.uniform(0.05, 0.95, 75)
    d_i, d_w = lin_model.gradient(currents, weights)
    np.testing.assert_allclose(d_i, weights / 75, atol=1e-4)
    np.testing.assert_allclose(d_w, currents / 75, atol=1e-4)


def test_gradient_matches_finite_differences(sat_model, rng):
    h = 1e-5
    for _ in range(10):
        currents = rng.uniform(0, 1, 75)
        weights = rng.uniform(0, 1, 75)
        d_i, d_w = sat_model.gradient(currents, weights)
        for grad, base in ((d_i, "i"), (d_w, "w")):
            batch_plus = np.repeat((currents if base == "i" else weights)[None, :],
                                   75, axis=0)
            batch_minus = batch_plus.copy()
            batch_plus[np.arange(75), np.arange(75)] += h
            batch_minus[np.arange(75), np.arange(75)] -= h
            if base == "i":
                up = sat_model.predict_sigmoid(batch_plus,
                                               np.repeat(weights[None, :], 75, 0))
                dn = sat_model.predict_sigmoid(batch_minus,
                                               np.repeat(weights[None, :], 75, 0))
            else:
                up = sat_model.predict_sigmoid(np.repeat(currents[None, :], 75, 0),
                                               batch_plus)
                dn = sat_model.predict_sigmoid(np.repeat(currents[None, :], 75, 0),
                                               batch_minus)
            fd = (np.asarray(up) - np.asarray(dn)) / (2 * h)
            small = np.abs(grad) < 1e-8
            np.testing.assert_allclose(grad[~small], fd[~small], rtol=1e-4)
            np.testing.assert_allclose(grad[small], fd[small], atol=1e-8)


def test_error_report_self_oracle(sat_model):
    stats = error_report(sat_model, SaturatingOracle(), trials=1000, seed=8)
    assert stats.mean_abs_step < 0.03
    assert stats.mean_abs_sigmoid < 0.03
    assert sum(stats.bucket_counts) == 1000


def test_error_report_ideal_oracle(lin_model):
    stats = error_report(lin_model, IdealLinear(), trials=500, seed=8)
    assert stats.mean_abs_step < 0.001
    assert stats.mean_abs_sigmoid < 0.001


def test_error_report_empty():
    model = fit_surrogate(IdealLinear(), n_pixels=12, grid_size=7)
    stats = error_report(model, IdealLinear(), trials=0, seed=0)
    assert stats.trials == 0 and stats.mean_abs_step == 0.0


def test_error_report_deterministic(sat_model):
    a = error_report(sat_model, SaturatingOracle(), trials=100, seed=3)
    b = error_report(sat_model, SaturatingOracle(), trials=100, seed=3)
    assert a.to_dict() == b.to_dict()


def test_serialization_roundtrip(sat_model, tmp_path, rng):
    path = tmp_path / "model.json"
    sat_model.save(path)
    loaded = SurrogateModel.load(path)
    currents = rng.uniform(0, 1, (50, 75))
    weights = rng.uniform(0, 1, (50, 75))
    np.testing.assert_array_equal(loaded.predict_step(currents, weights),
                                  sat_model.predict_step(currents, weights))
    np.testing.assert_array_equal(loaded.predict_sigmoid(currents, weights),
                                  sat_model.predict_sigmoid(currents, weights))
    assert loaded.oracle_info == sat_model.oracle_info


def test_surrogate_device_monotone_within_fit_noise(sat_model, rng):
    # the fitted surfaces track a monotone oracle but are least-squares
    # approximations; allow decreases up to 1e-3 * v_max under perturbation
    device = SurrogateDevice(sat_model)
    for _ in range(30):
        currents = rng.uniform(0, 1, 75)
        weights = rng.uniform(0, 1, 75)
        base = float(device.evaluate(currents, weights))
        j = rng.integers(0, 75)
        bumped = currents.copy()
        bumped[j] = min(1.0, bumped[j] + 0.25)
        assert float(device.evaluate(bumped, weights)) >= base - 1e-3


def test_surrogate_device_in_run_frame(sat_model, rng):
    from fpca import FPCAConfig, WeightBlock, run_frame

    cfg = FPCAConfig(rows=20, cols=20, max_kernel=5, out_channels=2, stride=5)
    kernels = [rng.uniform(-1, 1, (5, 5, 3)) for _ in range(2)]
    block = WeightBlock.program(kernels, cfg)
    image = rng.uniform(0, 1, (20, 20, 3))
    counts = run_frame(image, block, cfg, SurrogateDevice(sat_model))
    oracle_counts = run_frame(image, block, cfg, SaturatingOracle())
    assert counts.shape == (4, 4, 2)
    # surrogate should land within a few percent of the oracle's codes
    assert np.max(np.abs(counts - oracle_counts)) <= 0.05 * 255
