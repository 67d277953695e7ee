import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fock_oracle import simulate_converged
from gbbm import ansatz as az
from gbbm import gaussian as gs
from gbbm import observables as ob
from gbbm import sampler as sp
from gbbm.errors import InvalidArgumentError, LocalityError


def coherent(alpha):
    return gs.apply(gs.vacuum(1), gs.displacement([alpha]))


def squeezed(r):
    return gs.apply(gs.vacuum(1), gs.squeezer([r]))


def test_subset_probability():
    assert np.isclose(ob.subset_probability(0.5), 0.31606, atol=1e-5)
    assert ob.subset_probability(1e9) < 1e-9
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidArgumentError):
            ob.subset_probability(bad)


def test_subset_sampling_mean_size():
    rng = np.random.default_rng(0)
    d, sigma, n = 10, 1.3, 100_000
    subsets, _ = ob.sample_subsets(sigma, d, n, rng)
    sizes = np.array([len(A) for A in subsets])
    p = ob.subset_probability(sigma)
    se = np.sqrt(d * p * (1 - p) / n)
    assert abs(sizes.mean() - d * p) < 3 * se
    assert all(np.all(np.diff(A) > 0) for A in subsets[:100])


def test_subset_sampling_is_deterministic():
    a, _ = ob.sample_subsets(2.0, 6, 50, np.random.default_rng(3))
    b, _ = ob.sample_subsets(2.0, 6, 50, np.random.default_rng(3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_sample_subsets_redraws_long_strings():
    subsets, redrawn = ob.sample_subsets(0.05, 12, 200, np.random.default_rng(0), max_locality=3)
    assert redrawn > 0 and max(len(A) for A in subsets) <= 3


def test_vacuum_values():
    v = gs.vacuum(3)
    for A in ([0], [1, 2], [0, 1, 2], []):
        assert ob.parity_expval(v, A) == pytest.approx(1.0)
        assert ob.threshold_expval(v, A) == pytest.approx(1.0)


def test_closed_forms():
    assert ob.parity_expval(coherent(0.5), [0]) == pytest.approx(np.exp(-0.5), abs=1e-12)
    assert ob.threshold_expval(coherent(0.5), [0]) == pytest.approx(2 * np.exp(-0.25) - 1, abs=1e-12)
    r = 0.7
    assert ob.threshold_expval(squeezed(r), [0]) == pytest.approx(2 / np.cosh(r) - 1, abs=1e-12)
    assert ob.parity_expval(squeezed(r), [0]) == pytest.approx(1.0)


def test_fock_single_mode():
    st_ = simulate_converged([("displace", 0.5, 0)], 1, tail=1e-10)
    assert st_.parity([0]) == pytest.approx(np.exp(-0.5), abs=1e-9)
    st_ = simulate_converged([("displace", 0.5, 0)], 1, tail=1e-10)
    assert st_.threshold([0]) == pytest.approx(2 * np.exp(-0.25) - 1, abs=1e-9)
    r = 0.4
    st_ = simulate_converged([("squeeze", r, 0)], 1, tail=1e-10)
    assert st_.threshold([0]) == pytest.approx(ob.threshold_expval(squeezed(r), [0]), abs=1e-9)


def test_pure_centered_global_parity_is_one():
    spec = az.clements_spec(4, 2)
    p = az.init_params(spec, 5, 0.5)
    alpha_idx = np.concatenate([np.arange(s.start, s.stop) for s in
                                [az._layer_slices(spec)[0]]])
    n = az.layer_param_count(spec)
    for k in range(spec.layers):
        p[k * n + alpha_idx] = 0.0
    s = az.forward(spec, p)
    assert ob.parity_expval(s, [0, 1, 2, 3]) == pytest.approx(1.0, abs=1e-10)


def test_fock_two_mode_circuit():
    spec = az.clements_spec(2, 1)
    p = az.init_params(spec, 3, 0.4)
    gates = [g for lp in az.unpack(spec, p) for g in az.layer_gates(spec, lp)]
    fock = simulate_converged(gates, 2)
    s = az.forward(spec, p)
    for A in ([0], [1], [0, 1]):
        assert ob.parity_expval(s, A) == pytest.approx(fock.parity(A), abs=1e-6)
        assert ob.threshold_expval(s, A) == pytest.approx(fock.threshold(A), abs=1e-6)
    assert s.photon_number() == pytest.approx(
        float((fock.probs * fock.total).sum()), abs=1e-6)


def test_locality_cutoff():
    s = gs.vacuum(9)
    with pytest.raises(LocalityError):
        ob.threshold_expval(s, list(range(8)))
    assert ob.threshold_expval(s, list(range(8)), max_locality=None) == pytest.approx(1.0)


def test_bad_subsets():
    s = gs.vacuum(3)
    for A in ([1, 0], [3], [0, 0]):
        with pytest.raises(InvalidArgumentError):
            ob.parity_expval(s, A)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_parity_in_unit_interval_and_reduction_consistent(seed, d):
    spec = az.clements_spec(d, 2)
    s = az.forward(spec, az.init_params(spec, seed, 0.5))
    rng = np.random.default_rng(seed)
    A = np.flatnonzero(rng.random(d) < 0.6)
    if A.size == 0:
        A = np.array([0])
    v = ob.parity_expval(s, A)
    assert 0 < v <= 1 + 1e-12
    assert v == pytest.approx(ob.parity_expval(gs.reduce(s, A), np.arange(A.size)), abs=1e-12)
    t = ob.threshold_expval(s, A)
    assert -1 - 1e-12 <= t <= 1 + 1e-12


def test_batched_matches_single():
    spec = az.clements_spec(6, 2)
    s = az.forward(spec, az.init_params(spec, 1, 0.4))
    subsets, _ = ob.sample_subsets(1.0, 6, 200, np.random.default_rng(0))
    for kind, fn in ((ob.PARITY, ob.parity_expval), (ob.THRESHOLD, ob.threshold_expval)):
        batched = ob.expvals(s, subsets, kind)
        single = np.array([fn(s, A) for A in subsets])
        assert np.allclose(batched, single, atol=1e-12)


def test_empirical_values():
    assert ob.empirical_expval(np.zeros((5, 3)), [0, 2]) == 1
    assert ob.empirical_expval(np.array([[1, 0]]), [0]) == -1
    X = np.array([[0, 0], [1, 1]])
    assert ob.empirical_expval(X, [0, 1]) == 1
    assert ob.empirical_expval(X, [0]) == 0
    assert ob.empirical_expval(X, []) == 1
    with pytest.raises(InvalidArgumentError):
        ob.empirical_expval(np.zeros((0, 2)), [0])


def test_bit_moments():
    mean, second, cov = ob.bit_moments(gs.vacuum(3))
    assert np.allclose(mean, 0) and np.allclose(cov, 0)
    a = 0.6
    mean, _, _ = ob.bit_moments(coherent(a))
    assert mean[0] == pytest.approx((1 - np.exp(-2 * a * a)) / 2)
    spec = az.clements_spec(4, 2)
    s = az.forward(spec, az.init_params(spec, 2, 0.5))
    for kind in (ob.PARITY, ob.THRESHOLD):
        mean, second, cov = ob.bit_moments(s, kind)
        t_mean, t_second = sp.outcome_probs(s, kind).moments()
        assert np.allclose(mean, t_mean, atol=1e-9) and np.allclose(second, t_second, atol=1e-9)


def test_bit_moment_covariance_matches_samples():
    spec = az.clements_spec(4, 1)
    s = az.forward(spec, az.init_params(spec, 8, 0.6))
    _, _, cov = ob.bit_moments(s)
    X = sp.sample_parity(s, 1_000_000, np.random.default_rng(0)).rows.astype(float)
    emp = np.cov(X.T, bias=True)
    # standard error of each covariance entry is at most 0.25 / sqrt(n)
    assert np.max(np.abs(emp - cov)) < 3 * 0.25 / np.sqrt(len(X)) * 2


def test_vjp_matches_finite_differences():
    spec = az.clements_spec(3, 1)
    s = az.forward(spec, az.init_params(spec, 4, 0.5))
    subsets, _ = ob.sample_subsets(0.8, 3, 20, np.random.default_rng(1))
    w = np.random.default_rng(2).normal(size=len(subsets))
    for kind in (ob.PARITY, ob.THRESHOLD):
        _, g_mu, g_sigma = ob.expvals_vjp(s, subsets, w, kind)
        h = 1e-6
        k = 1
        mu = s.mu.copy()
        mu[k] += h
        up = w @ ob.expvals(gs.GaussianState(mu, s.sigma), subsets, kind)
        mu[k] -= 2 * h
        dn = w @ ob.expvals(gs.GaussianState(mu, s.sigma), subsets, kind)
        assert g_mu[k] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-8)
        E = np.zeros_like(s.sigma)
        E[0, 2] = E[2, 0] = h
        up = w @ ob.expvals(gs.GaussianState(s.mu, s.sigma + E), subsets, kind)
        dn = w @ ob.expvals(gs.GaussianState(s.mu, s.sigma - E), subsets, kind)
        assert g_sigma[0, 2] + g_sigma[2, 0] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-8)
