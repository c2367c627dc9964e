import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mlpicard.stochastics import (
    Branch,
    Driver,
    DriverKind,
    RngKey,
    derive_child_key,
    derive_keys,
    driver_eval,
    normals,
    root_key,
    sample_brownian_path,
    uniforms,
)

ROOT = root_key(2016)


def sibling_arrays(n, branch=Branch.RUN):
    hi, lo = ROOT.arrays()
    return derive_keys(hi, lo, branch, [np.arange(n)])


def test_child_key_is_deterministic():
    a = derive_child_key(ROOT, Branch.PATH, [3, 7])
    b = derive_child_key(ROOT, Branch.PATH, [3, 7])
    assert a == b
    assert a.path == b.path
    assert a.path_digest == b.path_digest


def test_current_and_previous_branches_differ():
    cur = derive_child_key(ROOT, Branch.F_SAMPLE_CURRENT, [2, 5, 1])
    prev = derive_child_key(ROOT, Branch.F_SAMPLE_PREVIOUS, [2, 5, 1])
    assert cur != prev


def test_index_tuples_are_not_confused():
    keys = {derive_child_key(ROOT, b, idx).state
            for b in Branch
            for idx in [(), (0,), (1,), (0, 0), (0, 1), (1, 0), (-1,), (0, 0, 0)]}
    assert len(keys) == len(Branch) * 8


def test_negative_and_positive_indices_differ():
    assert derive_child_key(ROOT, Branch.PATH, [-2]) != derive_child_key(ROOT, Branch.PATH, [2])


def test_grid_of_children_has_no_collisions():
    hi, lo = ROOT.arrays()
    c_hi, c_lo = derive_keys(hi[:, None, None], lo[:, None, None], Branch.F_SAMPLE_CURRENT,
                             [np.arange(40)[:, None, None], np.arange(50)[None, :, None],
                              np.arange(30)[None, None, :]])
    pairs = set(zip(c_hi.ravel().tolist(), c_lo.ravel().tolist()))
    assert len(pairs) == 40 * 50 * 30


def test_vectorised_and_scalar_derivation_agree():
    hi, lo = ROOT.arrays()
    v_hi, v_lo = derive_keys(hi[:, None], lo[:, None], Branch.PATH, [4, np.arange(6)[None, :]])
    for i in range(6):
        key = derive_child_key(ROOT, Branch.PATH, [4, i])
        assert (key.hi, key.lo) == (int(v_hi[0, i]), int(v_lo[0, i]))


def test_root_key_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        root_key(-1)
    with pytest.raises(ValueError):
        root_key(2**64)
    assert root_key(2**64 - 1) != root_key(0)


def test_first_draws_of_siblings_are_uniform():
    hi, lo = sibling_arrays(10**6)
    u = uniforms(hi, lo, 1)[:, 0]
    counts, _ = np.histogram(u, bins=100, range=(0.0, 1.0))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_stream_of_one_key_is_uniform():
    u = uniforms(*ROOT.arrays(), 200_000)[0]
    counts, _ = np.histogram(u, bins=50, range=(0.0, 1.0))
    assert stats.chisquare(counts).pvalue > 1e-3
    # lag-one correlation
    assert abs(np.corrcoef(u[:-1], u[1:])[0, 1]) < 4 / np.sqrt(u.size)


def test_normals_are_standard():
    z = normals(*sibling_arrays(200_000), 3)
    assert stats.kstest(z[:, 0], "norm").pvalue > 1e-3
    assert stats.kstest(z[:, 2], "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z[:, 0], z[:, 1])[0, 1]) < 4 / np.sqrt(z.shape[0])


def paths_at_T(n, s, T):
    hi, lo = sibling_arrays(n, Branch.PATH)
    # same construction as sample_brownian_path, vectorised over keys
    return np.sqrt(T - s) * normals(hi, lo, 1)[:, 0]


def test_path_endpoint_mean():
    s, T = 0.25, 1.0
    w = paths_at_T(10**5, s, T)
    assert abs(w.mean()) <= 4 / np.sqrt(10**5) * np.sqrt(T - s)


def test_path_endpoint_variance():
    s, T = 0.25, 1.0
    w = paths_at_T(10**5, s, T)
    assert w.var(ddof=1) == pytest.approx(T - s, rel=0.05)


def test_vectorised_paths_match_sample_brownian_path():
    hi, lo = sibling_arrays(5, Branch.PATH)
    expected = np.sqrt(0.75) * normals(hi, lo, 1)[:, 0]
    for i in range(5):
        key = RngKey(int(hi[i]), int(lo[i]))
        assert sample_brownian_path(key, 0.25, [1.0], 1).values[0, 0] == expected[i]


def test_marginal_law_at_interior_time():
    s, t = 0.1, 0.6
    hi, lo = sibling_arrays(2000, Branch.PATH)
    vals = np.array([sample_brownian_path(RngKey(int(a), int(b)), s, [0.3, t, 0.9], 1).values[1, 0]
                     for a, b in zip(hi, lo)])
    assert stats.kstest(vals / np.sqrt(t - s), "norm").pvalue > 1e-3


def test_prefix_consistency():
    key = derive_child_key(ROOT, Branch.PATH, [0, 1])
    long = sample_brownian_path(key, 0.0, [0.2, 0.5, 0.7], 4)
    short = sample_brownian_path(key, 0.0, [0.2, 0.5], 4)
    np.testing.assert_array_equal(long.values[:2], short.values)


def test_replay_is_bit_identical():
    key = derive_child_key(ROOT, Branch.PATH, [1, 1])
    a = sample_brownian_path(key, 0.0, [0.1, 0.4], 3)
    b = sample_brownian_path(key, 0.0, [0.1, 0.4], 3)
    np.testing.assert_array_equal(a.values, b.values)


def test_increments_are_scaled_draws():
    key = derive_child_key(ROOT, Branch.PATH, [2, 0])
    times = np.array([0.3, 0.5, 0.9])
    path = sample_brownian_path(key, 0.1, times, 2)
    z = normals(*key.arrays(), 6)[0].reshape(3, 2)
    steps = np.diff(np.concatenate(([0.1], times)))
    np.testing.assert_allclose(np.diff(path.values, axis=0, prepend=0.0),
                               np.sqrt(steps)[:, None] * z, rtol=1e-14)


@pytest.mark.parametrize("times", [[0.5, 0.4], [0.0, 0.5], [0.5, 0.5], []])
def test_bad_time_grids_are_rejected(times):
    with pytest.raises(ValueError):
        sample_brownian_path(ROOT, 0.0, times, 1)


def test_abm_zero_increment():
    path = sample_brownian_path(ROOT, 0.0, [1.0], 3)
    path.values[:] = 0.0
    x, integrand = driver_eval(Driver(DriverKind.ABM), [1.0, -2.0, 0.5], 0.0, path, 1.0)
    np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])
    np.testing.assert_array_equal(integrand, [1.0, 0.0, 0.0, 0.0])


def test_gbm_drift_cancels():
    path = sample_brownian_path(ROOT, 0.0, [0.7], 2)
    path.values[:] = 0.0
    drv = Driver(DriverKind.GBM, mu_bar=0.02, sigma_bar=0.2)
    x, _ = driver_eval(drv, [3.0, 4.0], 0.0, path, 0.7)
    np.testing.assert_array_equal(x, [3.0, 4.0])


def test_gbm_hand_evaluation():
    path = sample_brownian_path(ROOT, 0.0, [1.0], 1)
    path.values[:] = 0.5
    drv = Driver(DriverKind.GBM, mu_bar=0.02, sigma_bar=0.2)
    x, integrand = driver_eval(drv, [100.0], 0.0, path, 1.0)
    assert x[0] == pytest.approx(110.51709180756477, rel=1e-14)
    np.testing.assert_allclose(integrand, [1.0, 0.5])


def test_integrand_divides_by_elapsed_time():
    path = sample_brownian_path(ROOT, 0.2, [0.6], 2)
    _, integrand = driver_eval(Driver(DriverKind.ABM), [0.0, 0.0], 0.2, path, 0.6)
    np.testing.assert_allclose(integrand[1:], path.values[0] / 0.4)


def test_integrand_vanishes_at_start_time():
    path = sample_brownian_path(ROOT, 0.2, [0.6], 2)
    x, integrand = driver_eval(Driver(DriverKind.ABM), [1.0, 2.0], 0.2, path, 0.2)
    np.testing.assert_array_equal(integrand, np.zeros(3))
    np.testing.assert_array_equal(x, [1.0, 2.0])


def test_driver_eval_needs_recorded_time():
    path = sample_brownian_path(ROOT, 0.0, [0.5], 1)
    with pytest.raises(ValueError):
        driver_eval(Driver(DriverKind.ABM), [0.0], 0.0, path, 0.4)


def test_gbm_needs_positive_start():
    path = sample_brownian_path(ROOT, 0.0, [0.5], 1)
    with pytest.raises(ValueError):
        driver_eval(Driver(DriverKind.GBM, 0.0, 0.2), [-1.0], 0.0, path, 0.5)


@settings(max_examples=60, deadline=None)
@given(
    x=st.lists(st.floats(1e-3, 1e4), min_size=1, max_size=5),
    seed=st.integers(0, 2**64 - 1),
    mu=st.floats(-0.5, 0.5),
    sigma=st.floats(0.01, 2.0),
)
def test_gbm_states_stay_positive(x, seed, mu, sigma):
    drv = Driver(DriverKind.GBM, mu_bar=mu, sigma_bar=sigma)
    path = sample_brownian_path(root_key(seed), 0.0, [0.3, 1.0, 2.0], len(x))
    for t in path.times:
        state, _ = driver_eval(drv, x, 0.0, path, t)
        assert np.all(state > 0)
