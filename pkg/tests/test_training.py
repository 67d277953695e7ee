import numpy as np
import pytest

from gbbm import ansatz as az
from gbbm import gaussian as gs
from gbbm import observables as ob
from gbbm import sampler as sp
from gbbm import training as tr
from gbbm.errors import InvalidArgumentError, TrainingDivergedError


def model_data(spec, seed, n=2000, scale=0.5):
    s = az.forward(spec, az.init_params(spec, seed, scale))
    return s, sp.sample_parity(s, n, np.random.default_rng(seed))


def test_median_heuristic():
    X = np.zeros((2, 12), dtype=int)
    X[1, :10] = 1
    assert tr.median_heuristic(X) == 5
    with pytest.raises(InvalidArgumentError):
        tr.median_heuristic(np.ones((10, 4)))
    assert tr.default_bandwidths(2.0) == (2.0, 4.0, 8.0)


def test_median_heuristic_genomic_scale():
    # Bernoulli(0.2) columns at d=113 give a mean pair distance near 36
    rng = np.random.default_rng(0)
    X = (rng.random((2000, 113)) < 0.2).astype(int)
    assert 15 <= tr.median_heuristic(X, 5000, rng) <= 25


def test_single_string_loss():
    s = gs.apply(gs.vacuum(1), gs.displacement([0.4]))
    spec = az.clements_spec(1)
    params = np.array([0.4, 0.0, 0.0, 0.0])
    batch = tr.LossBatch((1.0,), [[np.array([0])]], [np.array([1.0])])
    m = ob.parity_expval(s, [0])
    assert tr.mmd2(spec, params, batch) == pytest.approx((1 - m) ** 2)


def kernel_mmd2(p, q, sigma, d):
    X = sp.index_to_bits(np.arange(2**d), d).astype(float)
    D = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    K = np.exp(-D / (2 * sigma))
    return p @ K @ p + q @ K @ q - 2 * p @ K @ q


def test_subset_expectation_equals_kernel_double_sum():
    d = 2
    rng = np.random.default_rng(0)
    for k in range(5):
        spec = az.clements_spec(d, 2)
        s = az.forward(spec, az.init_params(spec, k, 0.6))
        target = rng.integers(0, 2, (50, d))
        q = sp.parity_probs(s).probabilities
        p = np.bincount(sp.bits_to_index(target), minlength=4) / 50
        for sigma in (0.3, 1.0, 4.0):
            assert tr.exact_mmd2(s, target, sigma) == pytest.approx(kernel_mmd2(p, q, sigma, d), abs=1e-12)


def test_exact_mmd2_threshold_matches_outcome_table():
    spec = az.clements_spec(3, 1)
    s = az.forward(spec, az.init_params(spec, 1, 0.6))
    target = np.random.default_rng(0).integers(0, 2, (40, 3))
    q = sp.threshold_probs(s).probabilities
    p = np.bincount(sp.bits_to_index(target), minlength=8) / 40
    assert tr.exact_mmd2(s, target, 0.7, ob.THRESHOLD) == pytest.approx(kernel_mmd2(p, q, 0.7, 3), abs=1e-12)


@pytest.mark.parametrize("kind", [ob.PARITY, ob.THRESHOLD])
@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(kind, seed):
    d = 2 + seed
    layout = az.clements_spec(d, 2) if seed % 2 == 0 else az.graph_spec(d, [(i, i + 1) for i in range(d - 1)], 2)
    _, data = model_data(layout, 100 + seed)
    rng = np.random.default_rng(seed)
    batch = tr.make_batch(data, d, (0.7, 2.0), 24, rng, kind)
    params = az.init_params(layout, seed, 0.4)
    loss, grad = tr.loss_and_gradient(layout, params, batch)
    assert loss == pytest.approx(tr.mmd2(layout, params, batch), rel=1e-12)
    fd = tr.finite_difference_gradient(layout, params, batch)
    assert np.max(np.abs(grad - fd)) / np.max(np.abs(fd)) <= 1e-4


def test_gradient_vanishes_at_zero_residual():
    spec = az.clements_spec(3, 1)
    params = az.init_params(spec, 2, 0.3)
    s = az.forward(spec, params)
    subsets, _ = ob.sample_subsets(1.0, 3, 30, np.random.default_rng(0))
    batch = tr.LossBatch((1.0,), [subsets], [ob.parity_expvals(s, subsets)])
    loss, grad = tr.loss_and_gradient(spec, params, batch)
    assert loss == pytest.approx(0, abs=1e-28) and np.allclose(grad, 0, atol=1e-14)


def test_displacement_gradient_at_vacuum():
    spec = az.clements_spec(2, 1)
    params = np.zeros(az.param_count(spec))
    batch = tr.LossBatch((1.0,), [[np.array([0]), np.array([0, 1])]], [np.array([0.2, -0.1])])
    _, grad = tr.loss_and_gradient(spec, params, batch)
    assert np.allclose(grad[:2], 0)


def test_adam():
    p = np.array([1.0, -2.0])
    st = tr.AdamState.zeros(2)
    q, _ = tr.adam_step(p, np.zeros(2), st, 0.1)
    assert np.array_equal(p, q)
    q, _ = tr.adam_step(p, np.array([3.0, -0.5]), st, 0.0)
    assert np.array_equal(p, q)
    q, st2 = tr.adam_step(p, np.array([3.0, -0.5]), st, 0.01)
    assert np.allclose(q - p, [-0.01, 0.01], rtol=1e-6) and st2.step == 1
    with pytest.raises(TrainingDivergedError):
        tr.adam_step(p, np.array([np.nan, 0.0]), st, 0.01)


def config(spec, **kw):
    base = dict(strings_per_step=32, learning_rate=0.02, episodes=15, seed=5, eval_interval=3)
    base.update(kw)
    return tr.TrainConfig(spec, (1.0, 2.0), **base)


def test_train_is_deterministic_and_resumable():
    spec = az.clements_spec(3, 1)
    _, data = model_data(spec, 1, 300)
    full = tr.train(config(spec), data)
    again = tr.train(config(spec), data)
    assert np.array_equal(full.params, again.params)
    assert np.array_equal(full.history.totals, again.history.totals)
    part = tr.train(config(spec, episodes=7), data)
    rest = tr.train(config(spec), data, part.params, part.optimizer, part.rng_state, part.episode)
    assert np.array_equal(rest.params, full.params)
    assert np.array_equal(rest.history.totals, full.history.totals[-len(rest.history.totals):])


def test_train_zero_episodes():
    spec = az.clements_spec(3, 1)
    _, data = model_data(spec, 1, 100)
    res = tr.train(config(spec, episodes=0), data)
    assert np.array_equal(res.params, tr.initial_params(config(spec)))
    assert len(res.history.rows) == 1


def test_train_fixed_batch_and_cosine():
    spec = az.clements_spec(3, 1)
    _, data = model_data(spec, 1, 300)
    res = tr.train(config(spec, resample_strings_each_step=False, lr_schedule="cosine"), data)
    assert np.all(np.isfinite(res.params))
    cfg = config(spec, lr_schedule="cosine")
    assert cfg.learning_rate_at(0) == pytest.approx(0.02) and cfg.learning_rate_at(15) == pytest.approx(0)


def test_train_loss_decreases():
    spec = az.clements_spec(4, 1)
    _, data = model_data(spec, 3, 2000, scale=0.6)
    res = tr.train(config(spec, episodes=150, strings_per_step=256, eval_interval=10), data)
    assert res.history.totals[-1] < 0.5 * res.history.totals[0]


def test_train_row_order_invariance():
    spec = az.clements_spec(3, 1)
    _, data = model_data(spec, 1, 300)
    perm = np.random.default_rng(0).permutation(len(data))
    a = tr.train(config(spec), data)
    b = tr.train(config(spec), data.rows[perm])
    assert np.allclose(a.params, b.params, atol=1e-10)


def test_train_width_mismatch():
    spec = az.clements_spec(3, 1)
    with pytest.raises(InvalidArgumentError, match="width"):
        tr.train(config(spec), np.zeros((10, 4), dtype=int))


def test_config_validation_and_roundtrip():
    spec = az.clements_spec(3, 1)
    for bad in (dict(strings_per_step=0), dict(learning_rate=0.0), dict(episodes=-1), dict(lr_schedule="step")):
        with pytest.raises(InvalidArgumentError):
            config(spec, **bad)
    c = config(spec, kind=ob.THRESHOLD)
    assert tr.TrainConfig.from_dict(c.to_dict()) == c


def test_self_consistent_estimate_is_small():
    spec = az.clements_spec(4, 1)
    s, data = model_data(spec, 9, 20_000)
    params = az.init_params(spec, 9, 0.5)
    batch = tr.make_batch(data, 4, (1.0, 2.0), 2000, np.random.default_rng(0))
    assert tr.mmd2(spec, params, batch) < 9 / len(data)


def test_history_csv(tmp_path):
    h = tr.TrainHistory((1.0, 2.0))
    h.record(0, 0.1, [0.5, 0.25])
    h.record(5, 0.2, [0.1, 0.05])
    with pytest.raises(InvalidArgumentError):
        h.record(5, 0.3, [0, 0])
    path = tmp_path / "h.csv"
    h.to_csv(path, ["config_hash: abc"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash: abc"
    assert lines[1] == "episode,seconds,loss_sigma_1,loss_sigma_2,total"
    assert len(lines) == 4
