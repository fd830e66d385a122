import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abssgd.models import (
    Dataset,
    Model,
    SampleBatch,
    accuracy,
    estimate_lipschitz,
    estimate_sigma_sq,
    exact_sigma_sq,
    full_gradient,
    generate_synthetic,
    grad_sum,
    load_dataset_csv,
    logistic_smoothness_bound,
    loss,
    minimize_full_batch,
    sample_batch,
    save_dataset_csv,
)
from abssgd.numeric import ContractViolation, RngStream

from conftest import central_diff


def test_noise_free_teacher_separates_training_set():
    data, w = generate_synthetic(4, 100, 0.0, RngStream(1))
    assert accuracy(Model("logistic", 4), w, data) == 1.0


def test_generation_is_deterministic():
    a, wa = generate_synthetic(3, 50, 0.2, RngStream(7))
    b, wb = generate_synthetic(3, 50, 0.2, RngStream(7))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(wa, wb)


def test_label_flip_rate():
    data, w = generate_synthetic(2, 10_000, 0.05, RngStream(3))
    clean = (data.features @ w > 0).astype(float)
    assert abs(np.mean(clean != data.labels) - 0.05) < 0.01


def test_dataset_rejects_mismatch():
    with pytest.raises(ContractViolation):
        Dataset(np.zeros((3, 2)), np.zeros(2))


def test_logistic_loss_at_zero_is_ln2(small_data, logistic5):
    data, _ = small_data
    assert loss(logistic5, np.zeros(5), SampleBatch.full(data), data) == pytest.approx(math.log(2), abs=1e-15)


def test_confident_correct_sample_has_tiny_loss():
    data = Dataset(np.array([[1.0, 0.0]]), np.array([1.0]))
    assert loss(Model("logistic", 2), np.array([20.0, 0.0]), SampleBatch([0]), data) < 0.01


@pytest.mark.parametrize("kind", ["logistic", "mlp", "quadratic"])
def test_loss_is_mean_of_single_sample_losses(kind, small_data):
    data, _ = small_data
    model = Model(kind, 5, width=3)
    x = RngStream(4).generator.normal(size=model.n)
    batch = SampleBatch([0, 3, 3, 17, 59])
    singles = [loss(model, x, SampleBatch([i]), data) for i in batch.indices]
    assert loss(model, x, batch, data) == pytest.approx(np.mean(singles), rel=1e-14)


def test_loss_dimension_mismatch(small_data, logistic5):
    data, _ = small_data
    with pytest.raises(ContractViolation):
        loss(logistic5, np.zeros(4), SampleBatch([0]), data)


def test_empty_batch_gradient_is_zero(small_data, mlp5):
    data, _ = small_data
    np.testing.assert_array_equal(grad_sum(mlp5, np.ones(mlp5.n), SampleBatch([]), data), np.zeros(mlp5.n))


@pytest.mark.parametrize("kind", ["logistic", "mlp", "quadratic"])
def test_grad_sum_is_additive(kind, small_data):
    data, _ = small_data
    model = Model(kind, 5, width=3)
    x = RngStream(5).generator.normal(size=model.n)
    b1, b2 = SampleBatch([1, 2, 2]), SampleBatch([40, 7])
    np.testing.assert_allclose(
        grad_sum(model, x, b1 + b2, data), grad_sum(model, x, b1, data) + grad_sum(model, x, b2, data), rtol=1e-13, atol=1e-15
    )


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_grad_sum_matches_finite_differences(kind, small_data):
    data, _ = small_data
    model = Model(kind, 5, width=4)
    rng = RngStream(6)
    x = rng.generator.normal(size=model.n)
    batch = sample_batch(data, 8, rng)
    fd = central_diff(lambda z: loss(model, z, batch, data) * batch.size, x)
    g = grad_sum(model, x, batch, data)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5


def test_full_gradient_definition(small_data, mlp5):
    data, _ = small_data
    x = RngStream(8).generator.normal(size=mlp5.n)
    np.testing.assert_allclose(
        full_gradient(mlp5, x, data), grad_sum(mlp5, x, SampleBatch.full(data), data) / data.size, rtol=0, atol=0
    )


def test_gradient_vanishes_at_long_descent_optimum():
    data, _ = generate_synthetic(3, 200, 0.2, RngStream(12))
    model = Model("logistic", 3)
    x = minimize_full_batch(model, data, np.zeros(3), 1.0 / logistic_smoothness_bound(data), 100_000)
    g = full_gradient(model, x, data)
    assert math.sqrt(g @ g) < 1e-6


def test_single_sample_gradients_are_unbiased(small_data, logistic5):
    data, _ = small_data
    x = RngStream(9).generator.normal(size=5)
    idx = sample_batch(data, 10_000, RngStream(10)).indices
    per = logistic5.sample_grads(x, idx, data)
    sd = per.std(axis=0, ddof=1)
    assert np.all(np.abs(per.mean(axis=0) - full_gradient(logistic5, x, data)) <= 3 * sd / 100)


def test_sigma_zero_for_identical_samples(logistic5):
    data = Dataset(np.tile([1.0, -2.0, 0.5, 0.0, 3.0], (20, 1)), np.ones(20))
    assert estimate_sigma_sq(logistic5, np.full(5, 0.3), data, 50, RngStream(1)) == pytest.approx(0.0, abs=1e-28)


def test_sigma_estimate_is_stable_under_doubling(small_data, logistic5):
    data, _ = small_data
    x = np.full(5, 0.2)
    a = estimate_sigma_sq(logistic5, x, data, 2000, RngStream(20))
    b = estimate_sigma_sq(logistic5, x, data, 4000, RngStream(21))
    assert abs(b - a) / a < 0.10


def test_sigma_matches_exhaustive_on_symmetric_data(logistic5):
    # pairs (a, 1), (a, 0) with equal-norm features: every sample deviates by
    # the same amount at x = 0, so any sample size recovers the exact value
    rng = RngStream(30).generator
    base = rng.normal(size=(10, 5))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    data = Dataset(np.vstack([base, base]), np.r_[np.ones(10), np.zeros(10)])
    exhaustive = np.mean([0.25 * a @ a for a in data.features])
    assert exact_sigma_sq(logistic5, np.zeros(5), data) == pytest.approx(exhaustive, abs=1e-12)
    assert estimate_sigma_sq(logistic5, np.zeros(5), data, 37, RngStream(31)) == pytest.approx(exhaustive, abs=1e-9)


def test_lipschitz_of_isotropic_quadratic():
    c = 2.5
    model = Model("quadratic", 4, curvature=(c,) * 4)
    data = Dataset(RngStream(1).generator.normal(size=(10, 4)), np.zeros(10))
    assert estimate_lipschitz(model, data, 5, 1.0, RngStream(2)) == pytest.approx(c, abs=1e-9)


def test_lipschitz_estimate_monotone_in_probes(small_data, logistic5):
    data, _ = small_data
    vals = [estimate_lipschitz(logistic5, data, p, 2.0, RngStream(3)) for p in (1, 2, 5, 10, 40)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_logistic_lipschitz_below_hessian_bound(small_data, logistic5):
    data, _ = small_data
    est = estimate_lipschitz(logistic5, data, 100, 3.0, RngStream(4))
    assert 0 < est <= logistic_smoothness_bound(data) + 1e-6


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_lipschitz_estimate_stable_across_seeds(kind, small_data):
    data, _ = small_data
    model = Model(kind, 5, width=4)
    ests = [estimate_lipschitz(model, data, 50, 1.0, RngStream(s)) for s in range(4)]
    assert np.isfinite(ests).all()
    assert max(ests) < 2 * min(ests)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["logistic", "mlp", "quadratic"]))
def test_exhaustive_average_equals_full_gradient(seed, kind):
    data, _ = generate_synthetic(3, 25, 0.1, RngStream(seed))
    model = Model(kind, 3, width=2)
    x = RngStream(seed, 1).generator.normal(size=model.n)
    per = model.sample_grads(x, np.arange(data.size), data)
    np.testing.assert_allclose(per.mean(axis=0), full_gradient(model, x, data), rtol=0, atol=1e-12)


def test_dataset_csv_round_trip(tmp_path, small_data):
    data, _ = small_data
    path = tmp_path / "data.csv"
    save_dataset_csv(data, path)
    back = load_dataset_csv(path)
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,x4,x5,label"


def test_mlp_parameter_count():
    assert Model("mlp", 10, width=8).n == 8 * 10 + 8 + 8 + 1
