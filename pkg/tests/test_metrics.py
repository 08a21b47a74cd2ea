import warnings

import numpy as np
import pytest

import gradleak.models as M
from gradleak.attack import AttackConfig, make_init
from gradleak.metrics import (GradSimCurve, ScoredPolicy, accuracy_score,
                              grad_sim, grad_sim_curve, jacobian_score,
                              layerwise_gradsim_trace, pearson,
                              policy_accuracy_score, privacy_score, psnr,
                              spectrum_score, transform_batch)
from gradleak.transforms import (Policy, TransformSpec, apply_policy,
                                 parse_policy, sample_seed)


MLP = M.ModelConfig(arch="mlp", input_shape=(1, 4, 4), classes=3,
                    hidden=(8,), seed=1)
CONV = M.ModelConfig(arch="convnet", input_shape=(1, 8, 8), classes=4,
                     channels=(4, 8), fc_width=32, seed=2)


def _dataset(n, shape=(1, 4, 4), classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return [(rng.random(shape), int(rng.integers(classes)))
            for _ in range(n)]


def _saturated(cfg):
    """Huge weights drive softmax to an exact one-hot, so the loss gradient
    at the predicted label underflows to exactly zero."""
    base = M.init_model(cfg)
    return M.ModelParams({k: v * 1e6 for k, v in base.layers.items()})


# ---------------------------------------------------------------------------
# psnr / pearson

def test_psnr_examples():
    x = np.random.default_rng(0).random((1, 4, 4))
    assert psnr(x, x) == 100.0
    assert psnr(np.zeros((2, 2)), np.ones((2, 2))) == pytest.approx(0.0)
    assert psnr(np.zeros((2, 2)), np.full((2, 2), 0.5)) == pytest.approx(
        6.0206, abs=1e-4)


def test_psnr_symmetric_and_monotone_in_noise():
    rng = np.random.default_rng(1)
    x = rng.random((1, 8, 8))
    vals = []
    for amp in (0.01, 0.1, 0.5):
        noisy = np.clip(x + amp * np.random.default_rng(7).standard_normal(
            x.shape), 0.0, 1.0)
        assert psnr(x, noisy) == pytest.approx(psnr(noisy, x))
        vals.append(psnr(x, noisy))
    assert vals[0] > vals[1] > vals[2]


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


def test_pearson_examples():
    v = np.array([0.3, 1.9, -2.2, 0.4])
    assert pearson(v, v) == pytest.approx(1.0)
    assert pearson(v, -v) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)


def test_pearson_validation():
    with pytest.raises(ValueError, match="zero-variance"):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError, match="3 points"):
        pearson([1, 2], [3, 4])
    with pytest.raises(ValueError, match="equal-length"):
        pearson([1, 2, 3], [1, 2])


# ---------------------------------------------------------------------------
# grad_sim and curves

def test_grad_sim_self_is_one():
    params = M.init_model(MLP)
    x = np.random.default_rng(2).random(MLP.input_shape)
    assert grad_sim(MLP, params, x, x, 1) == pytest.approx(1.0, abs=1e-12)


def test_grad_sim_symmetric_and_bounded():
    params = M.init_model(MLP)
    rng = np.random.default_rng(3)
    for _ in range(100):
        x1 = rng.random(MLP.input_shape)
        x2 = rng.random(MLP.input_shape)
        y = int(rng.integers(MLP.classes))
        s = grad_sim(MLP, params, x1, x2, y)
        assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
        assert s == pytest.approx(grad_sim(MLP, params, x2, x1, y))


def test_grad_sim_zero_gradient_errors():
    params = _saturated(MLP)
    x = np.random.default_rng(4).random(MLP.input_shape)
    y = int(M.predict(MLP, params, x)[0])
    with pytest.raises(ValueError, match="zero-norm"):
        grad_sim(MLP, params, x, x, y)


def test_grad_sim_curve_shape_and_endpoint():
    params = M.init_model(MLP)
    rng = np.random.default_rng(5)
    x0 = rng.random(MLP.input_shape)
    xt = rng.random(MLP.input_shape)
    curve = grad_sim_curve(MLP, params, x0, xt, 2, points=4)
    assert [i for i, _ in curve.samples] == [0.0, 0.25, 0.5, 0.75]
    full = grad_sim_curve(MLP, params, x0, xt, 2, points=4, include_end=True)
    assert full.samples[-1][0] == 1.0
    assert full.samples[-1][1] == pytest.approx(1.0, abs=1e-12)


def test_gradsimcurve_validation():
    with pytest.raises(ValueError, match="increasing"):
        GradSimCurve(samples=((0.0, 0.5), (0.0, 0.6)))
    with pytest.raises(ValueError, match="outside"):
        GradSimCurve(samples=((0.0, 1.5),))


def test_scored_policy_validation():
    pol = parse_policy("3-1-7")
    ScoredPolicy(policy=pol, s_pri=0.4, s_acc=-52.0)
    with pytest.raises(ValueError, match="s_pri"):
        ScoredPolicy(policy=pol, s_pri=1.5, s_acc=-52.0)
    with pytest.raises(ValueError, match="s_acc"):
        ScoredPolicy(policy=pol, s_pri=0.4, s_acc=0.2)


# ---------------------------------------------------------------------------
# accuracy score

def test_spectrum_score_closed_forms():
    ideal = spectrum_score(np.ones(5))
    assert abs(ideal - (-1.0)) / 1.0 < 1e-4
    dup = spectrum_score([2.0, 0.0])
    assert abs(dup - (-49995.0)) / 49995.0 < 1e-4


def test_jacobian_score_duplicated_rows_hit_the_eps_floor():
    params = M.init_model(MLP)
    x = np.random.default_rng(6).random(MLP.input_shape)
    score = jacobian_score(MLP, params, np.stack([x, x]))
    assert abs(score - (-49995.0)) / 49995.0 < 1e-3


def test_jacobian_score_reorder_invariant():
    params = M.init_model(MLP)
    xs = np.stack([x for x, _ in _dataset(6, seed=7)])
    a = jacobian_score(MLP, params, xs)
    b = jacobian_score(MLP, params, xs[::-1])
    assert a == b


def test_jacobian_score_constant_row_errors():
    # every row of fc0.weight sums to the same value, so each Jacobian row
    # is constant and the correlation matrix is undefined
    cfg = M.ModelConfig(arch="mlp", input_shape=(1, 4, 4), classes=3,
                        hidden=(), seed=0)
    flat = M.ModelParams({"fc0.weight": np.ones((16, 3)),
                          "fc0.bias": np.zeros(3)})
    xs = np.stack([x for x, _ in _dataset(2, seed=8)])
    with pytest.raises(ValueError, match="degenerate"):
        jacobian_score(cfg, flat, xs)


def test_jacobian_score_single_sample_degenerate():
    params = M.init_model(MLP)
    x = np.random.default_rng(9).random((1,) + MLP.input_shape)
    assert jacobian_score(MLP, params, x) == pytest.approx(-1.0, abs=1e-3)


def test_accuracy_score_reorder_invariant():
    params = M.init_model(MLP)
    data = _dataset(6, seed=10)
    xs = np.stack([x for x, _ in data])
    ys = [y for _, y in data]
    a = accuracy_score(MLP, params, xs, ys, rounds=10)
    b = accuracy_score(MLP, params, xs[::-1], ys[::-1], rounds=10)
    assert a == b


def test_accuracy_score_duplicate_sample_decreases():
    params = M.init_model(MLP)
    data = _dataset(5, seed=11)
    xs = np.stack([x for x, _ in data])
    ys = [y for _, y in data]
    base = accuracy_score(MLP, params, xs, ys, rounds=3)
    dup_xs = np.concatenate([xs, xs[:1]])
    dup_ys = ys + [ys[0]]
    dup = accuracy_score(MLP, params, dup_xs, dup_ys, rounds=3)
    assert dup < base


def test_policy_accuracy_identity_beats_destructive():
    # factor-0.1 brightness and contrast collapse every sample toward the
    # same dark image; correlated Jacobian rows crater the score
    destructive = Policy(specs=(TransformSpec("brightness", 0),
                                TransformSpec("contrast", 0)))
    batch = _dataset(8, shape=(1, 8, 8), classes=4, seed=12)
    for seed in range(3):
        cfg = M.ModelConfig(arch="convnet", input_shape=(1, 8, 8), classes=4,
                            channels=(4, 8), fc_width=32, seed=seed)
        params = M.init_model(cfg)
        s_id = policy_accuracy_score(None, cfg, params, batch, seed=seed,
                                     rounds=3)
        s_bad = policy_accuracy_score(destructive, cfg, params, batch,
                                      seed=seed, rounds=3)
        assert s_id >= s_bad


# ---------------------------------------------------------------------------
# privacy score

def test_privacy_score_target_init_collapses_to_one():
    params = M.init_model(MLP)
    pol = parse_policy("29")
    score = privacy_score(pol, MLP, params, _dataset(3, seed=13), k=4,
                          init="target")
    assert score == pytest.approx(1.0, abs=1e-9)


def test_privacy_score_k1_reduces_to_init_similarity():
    params = M.init_model(MLP)
    pol = parse_policy("3-1")
    data = _dataset(3, seed=14)
    score = privacy_score(pol, MLP, params, data, k=1, seed=5)
    sims = []
    for x, y in data:
        rng = np.random.default_rng(sample_seed(5, x, y))
        tx = apply_policy(x, pol, rng)
        x0 = make_init("gaussian", x.shape, rng)
        sims.append(grad_sim(MLP, params, x0, tx, y))
    assert score == pytest.approx(np.mean(sims), abs=0)


def test_privacy_score_reorder_invariant_exactly():
    params = M.init_model(MLP)
    pol = parse_policy("7-3")
    data = _dataset(4, seed=15)
    a = privacy_score(pol, MLP, params, data, k=3, seed=1)
    b = privacy_score(pol, MLP, params, list(reversed(data)), k=3, seed=1)
    assert a == b


def test_privacy_score_bounded_for_random_policies():
    params = M.init_model(MLP)
    rng = np.random.default_rng(16)
    data = _dataset(2, seed=17)
    for _ in range(20):
        idx = rng.integers(0, 50, size=int(rng.integers(1, 4)))
        pol = parse_policy("-".join(str(i) for i in idx))
        s = privacy_score(pol, MLP, params, data, k=2, seed=3)
        assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12


def test_privacy_score_all_degenerate_errors():
    params = _saturated(MLP)
    rng = np.random.default_rng(18)
    data = []
    for _ in range(2):
        x = rng.random(MLP.input_shape)
        data.append((x, int(M.predict(MLP, params, x)[0])))
    with pytest.warns(UserWarning, match="degenerate"):
        with pytest.raises(ValueError, match="degenerate"):
            privacy_score(None, MLP, params, data, k=2)


def test_privacy_score_validation():
    params = M.init_model(MLP)
    with pytest.raises(ValueError, match="k"):
        privacy_score(None, MLP, params, _dataset(1), k=0)
    with pytest.raises(ValueError, match="non-empty"):
        privacy_score(None, MLP, params, [], k=2)


def test_transform_batch_identity_and_seeding():
    data = _dataset(3, seed=19)
    same = transform_batch(None, data)
    for (a, _), (b, _) in zip(same, data):
        np.testing.assert_array_equal(a, b)
    pol = parse_policy("3-1-7")
    fwd = transform_batch(pol, data, seed=4)
    rev = transform_batch(pol, list(reversed(data)), seed=4)
    for (a, _), (b, _) in zip(fwd, reversed(rev)):
        np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# layer traces

def test_layerwise_trace_from_target_init_starts_at_one():
    params = M.init_model(CONV)
    x = np.random.default_rng(20).random(CONV.input_shape)
    _, target = M.loss_gradients(CONV, params, x, [1])
    cfg = AttackConfig(optimizer="sgd", lr=0.0, iterations=2, tv_weight=0.0,
                       init="from_image", init_image=x)
    curves, res = layerwise_gradsim_trace(CONV, params, target, cfg, label=1)
    assert set(curves) == set(params.names())
    for name, curve in curves.items():
        it0, sim0 = curve[0]
        assert it0 == 0
        assert sim0 == pytest.approx(1.0, abs=1e-9)
        for _, sim in curve:
            assert np.isnan(sim) or -1.0 - 1e-9 <= sim <= 1.0 + 1e-9
