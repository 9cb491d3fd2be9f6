import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit.sensing import (
    GroundTruthModel,
    MiniBatch,
    NoiseSpec,
    apply_adjoint,
    apply_sensing,
    column_normalize,
    label,
    make_ground_truth,
    sample_batch,
    sample_full_observation,
    sign,
)


def eye_model():
    return GroundTruthModel.from_matrix(np.eye(2), 2)


def test_sign_scalar():
    assert sign(3.2) == 1
    assert sign(-0.001) == -1
    assert sign(0.0) == 1
    assert sign(-0.0) == 1
    np.testing.assert_array_equal(sign(np.array([-1.0, 0.0, 2.0])), [-1.0, 1.0, 1.0])


def test_ground_truth_normalized_and_low_rank():
    m = make_ground_truth(10, 4, 2, seed=7)
    np.testing.assert_allclose(np.linalg.norm(m.W_star, axis=0), 1.0, atol=1e-10)
    s = np.linalg.svd(m.W_star, compute_uv=False)
    assert s[2] <= 1e-8 * s[0]
    assert np.all(np.diff(m.sigma) <= 0)
    np.testing.assert_allclose(m.U_star.T @ m.U_star, np.eye(2), atol=1e-12)
    np.testing.assert_allclose((m.U_star * m.sigma) @ m.V_star.T, m.W_star, atol=1e-12)


def test_ground_truth_deterministic():
    a = make_ground_truth(10, 4, 2, seed=7).W_star
    b = make_ground_truth(10, 4, 2, seed=7).W_star
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_ground_truth(10, 4, 2, seed=8).W_star)


@pytest.mark.parametrize("args", [(10, 4, 0), (10, 4, 5), (1, 4, 1), (10, 0, 1)])
def test_ground_truth_rejects_bad_dims(args):
    with pytest.raises(ValueError):
        make_ground_truth(*args, seed=0)


def test_injected_label_arithmetic():
    x = np.array([[0.5], [-0.2]])
    b = label(eye_model(), x, [1])
    assert apply_sensing(np.eye(2), b)[0] == pytest.approx(math.sqrt(2) * -0.2)
    assert apply_sensing(np.eye(2), b)[0] == pytest.approx(-0.28284, abs=1e-5)
    assert b.y[0] == -1


def test_sensing_of_zero():
    b = sample_batch(make_ground_truth(6, 3, 2, 0), 20, seed=1)
    assert np.all(apply_sensing(np.zeros((6, 3)), b) == 0)


def test_adjoint_single_term():
    b = MiniBatch(np.array([[1.0], [2.0]]), np.array([0]), np.ones(1), d2=3)
    A = apply_adjoint(np.array([2.0]), b)
    np.testing.assert_allclose(A[:, 0], [2 * math.sqrt(3), 4 * math.sqrt(3)])
    np.testing.assert_allclose(A[:, 0], [3.4641, 6.9282], atol=1e-4)
    assert np.all(A[:, 1:] == 0)


def test_adjoint_of_zero():
    b = sample_batch(make_ground_truth(6, 3, 2, 0), 20, seed=1)
    assert np.all(apply_adjoint(np.zeros(20), b) == 0)


def test_adjoint_identity_random_m50():
    model = make_ground_truth(8, 5, 2, 3)
    b = sample_batch(model, 50, seed=4)
    rng = np.random.default_rng(0)
    W = rng.standard_normal((8, 5))
    r = rng.standard_normal(50)
    lhs = apply_sensing(W, b) @ r
    rhs = np.sum(W * apply_adjoint(r, b))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


@settings(max_examples=40, deadline=None)
@given(
    d1=st.integers(2, 12), d2=st.integers(1, 8), m=st.integers(1, 60), seed=st.integers(0, 2**31)
)
def test_adjoint_identity_property(d1, d2, m, seed):
    model = GroundTruthModel.from_matrix(column_normalize(np.ones((d1, d2)))[0], 1)
    b = sample_batch(model, m, seed=seed)
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d1, d2))
    r = rng.standard_normal(m)
    lhs = apply_sensing(W, b) @ r
    rhs = np.sum(W * apply_adjoint(r, b))
    scale = np.sum(np.abs(apply_sensing(W, b) * r)) + 1e-300
    assert abs(lhs - rhs) <= 1e-10 * scale


def test_dimension_mismatch_errors():
    b = sample_batch(make_ground_truth(6, 3, 2, 0), 10, seed=1)
    with pytest.raises(ValueError):
        apply_sensing(np.zeros((6, 4)), b)
    with pytest.raises(ValueError):
        apply_adjoint(np.zeros(11), b)


def test_batch_fields_and_determinism():
    model = make_ground_truth(7, 4, 2, 0)
    b1 = sample_batch(model, 5000, NoiseSpec.flip(0.1), seed=3, batch_number=2)
    b2 = sample_batch(model, 5000, NoiseSpec.flip(0.1), seed=3, batch_number=2)
    assert np.array_equal(b1.X, b2.X) and np.array_equal(b1.y, b2.y)
    assert np.array_equal(b1.class_index, b2.class_index)
    assert b1.X.shape == (7, 5000)
    assert set(np.unique(b1.y)) <= {-1.0, 1.0}
    assert b1.class_index.min() >= 0 and b1.class_index.max() < 4
    b3 = sample_batch(model, 5000, seed=3, batch_number=3)
    assert not np.array_equal(b1.X, b3.X)


def test_batch_prefix_stable_across_sizes():
    # instances are keyed per block, so a larger batch extends a smaller one
    model = make_ground_truth(5, 3, 1, 0)
    small = sample_batch(model, 100, seed=2)
    big = sample_batch(model, 9000, seed=2)
    assert np.array_equal(small.X, big.X[:, :100])
    assert np.array_equal(small.class_index, big.class_index[:100])


def test_clean_labels_recompute():
    model = make_ground_truth(10, 6, 2, 1)
    b = sample_batch(model, 10**5, seed=5)
    margin = apply_sensing(model.W_star, b)
    assert np.mean(b.y * margin) >= 0
    assert np.all(b.y == sign(margin))


def test_flip_one_negates_every_label():
    model = make_ground_truth(10, 6, 2, 1)
    clean = sample_batch(model, 3000, seed=5)
    flipped = sample_batch(model, 3000, NoiseSpec.flip(1.0), seed=5)
    assert np.array_equal(flipped.y, -clean.y)


def test_gaussian_noise_zero_is_clean():
    model = make_ground_truth(10, 6, 2, 1)
    a = sample_batch(model, 2000, seed=5)
    b = sample_batch(model, 2000, NoiseSpec.gaussian(0.0), seed=5)
    assert np.array_equal(a.y, b.y)


def test_gaussian_noise_changes_some_labels():
    model = make_ground_truth(10, 6, 2, 1)
    a = sample_batch(model, 20000, seed=5)
    b = sample_batch(model, 20000, NoiseSpec.gaussian(0.3), seed=5)
    rate = np.mean(a.y != b.y)
    # P(flip) = E[arctan(xi/|margin|)]/pi with margin ~ N(0, d2): about 0.04
    assert 0.02 < rate < 0.07


def test_label_symmetry_1e6():
    model = make_ground_truth(20, 10, 3, 2)
    b = sample_batch(model, 10**6, seed=11)
    assert abs(np.mean(b.y > 0) - 0.5) <= 0.01


@pytest.mark.parametrize("p", [0.05, 0.3])
def test_flip_rate_1e6(p):
    model = make_ground_truth(20, 10, 3, 2)
    clean = sample_batch(model, 10**6, seed=11)
    noisy = sample_batch(model, 10**6, NoiseSpec.flip(p), seed=11)
    assert abs(np.mean(clean.y != noisy.y) - p) <= 0.005


def test_noise_spec_validation():
    for bad in (dict(kind="other"), dict(kind="gaussian", xi=-1.0), dict(kind="flip", p=1.5)):
        with pytest.raises(ValueError):
            NoiseSpec(**bad)
    assert NoiseSpec.flip(0.1).to_dict() == {"kind": "flip", "p": 0.1}


def test_label_hook_validates_classes():
    with pytest.raises(ValueError):
        label(eye_model(), np.ones((2, 1)), [2])


def test_full_observation_shared_instance():
    model = make_ground_truth(6, 4, 2, 0)
    x = np.random.default_rng(0).standard_normal((6, 1))
    b = sample_full_observation(model, 4, instances=x)
    assert b.m == 4
    for j in range(4):
        assert np.array_equal(b.X[:, j], x[:, 0])
    np.testing.assert_array_equal(b.class_index, np.arange(4))


def test_full_observation_labels_and_determinism():
    model = make_ground_truth(6, 4, 2, 0)
    b1 = sample_full_observation(model, 1001, seed=3, batch_number=1)
    b2 = sample_full_observation(model, 1001, seed=3, batch_number=1)
    assert b1.m == 1001
    assert np.array_equal(b1.X, b2.X) and np.array_equal(b1.class_index, b2.class_index)
    assert np.all(b1.y == sign(apply_sensing(model.W_star, b1)))
    # every instance appears at most d2 times, each time with a distinct class
    keys = {(tuple(b1.X[:, i]), b1.class_index[i]) for i in range(b1.m)}
    assert len(keys) == b1.m


def test_column_normalize_fallbacks():
    W = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    prev = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    out, n_bad = column_normalize(W, fallback=prev)
    assert n_bad == 2
    np.testing.assert_array_equal(out, [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
