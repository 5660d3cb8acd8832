import numpy as np
import pytest

from otfs_noma.channel import (
    SPEED_OF_LIGHT, ChannelStats, DdChannelMatrix, NotBlockCirculantError, PathSet, UpaGeometry,
    build_channel_matrix, channel_eigensystem, eigen_decompose, path_coefficients,
    round_half_toward_zero, sample_paths, steering_element, steering_vector, tf_gain, tf_gains,
)
from otfs_noma.grid import DdFrame, OtfsGrid, psi_apply, psi_apply_h, psi_matrix, vectorize

W1 = UpaGeometry(1, 0.5, 1.0)


def single_path(l=0, k=0, h=1.0, el=0.3, az=0.2):
    return PathSet([h], [l], [k], [el], [az])


def eq7_bruteforce(grid, paths, geom, antenna, x):
    """Direct double sum over paths and grid points."""
    n, m = grid.shape
    y = np.zeros((n, m), dtype=complex)
    for p in range(paths.count):
        lp, kp = paths.delay_taps[p], paths.doppler_taps[p]
        tau = lp / (m * grid.subcarrier_spacing)
        nu = kp / (n * grid.symbol_duration)
        i, ip = divmod(antenna, geom.side)
        v = steering_element(geom, i, ip, paths.elevations[p], paths.azimuths[p])
        c = paths.gains[p] * np.exp(-2j * np.pi * tau * nu) * v
        for k in range(n):
            for l in range(m):
                y[k, l] += c * x[(k - kp) % n, (l - lp) % m]
    return y


def test_steering_examples():
    g = UpaGeometry(4, 0.5, 1.0)
    assert steering_element(g, 0, 0, 0.7, -1.1) == 1
    for i, ip in [(1, 2), (3, 3), (2, 0)]:
        assert steering_element(g, i, ip, np.pi / 2, np.pi / 2) == pytest.approx(1, abs=1e-14)
    assert steering_element(g, 1, 0, np.pi / 2, 0.0) == pytest.approx(-1, abs=1e-14)
    with pytest.raises(IndexError):
        steering_element(g, 4, 0, 0.1, 0.1)


def test_steering_vector_matches_elements(rng):
    g = UpaGeometry(3, 0.4, 1.0)
    el, az = rng.uniform(0, np.pi, 2)
    v = steering_vector(g, el, az)
    expected = [steering_element(g, i, ip, el, az) for i in range(3) for ip in range(3)]
    np.testing.assert_allclose(v, expected, atol=1e-14)
    np.testing.assert_allclose(np.abs(v), 1.0)


def test_lm_paths_static(rng):
    grid = OtfsGrid(16, 16)
    for _ in range(50):
        assert np.all(sample_paths(rng, ChannelStats(), grid, False).doppler_taps == 0)


def test_delay_taps_layout(rng):
    grid = OtfsGrid(16, 16)
    for _ in range(50):
        p = sample_paths(rng, ChannelStats(), grid, True)
        assert p.delay_taps[0] == 0
        assert len(set(p.delay_taps.tolist())) == 4
        assert np.all((p.delay_taps >= 0) & (p.delay_taps <= 4))


def test_doppler_tap_bound(rng):
    grid = OtfsGrid(16, 16, 15e3)
    nu_max = 60e9 * (200 / 3.6) / SPEED_OF_LIGHT
    k_max = round(nu_max * 16 / 15e3)
    assert k_max == 12
    taps = np.concatenate([sample_paths(rng, ChannelStats(), grid, True).doppler_taps
                           for _ in range(2000)])
    assert np.max(np.abs(taps)) == k_max
    assert np.max(np.abs(taps)) < grid.n_doppler


def test_round_half_toward_zero():
    np.testing.assert_array_equal(round_half_toward_zero([0.5, -0.5, 1.5, -2.5, 2.6, -0.49]),
                                  [0, 0, 1, -2, 3, 0])


def test_angle_moments(rng):
    grid = OtfsGrid(16, 16)
    stats = ChannelStats()
    draws = [sample_paths(rng, stats, grid, True) for _ in range(20000)]
    el = np.concatenate([d.elevations for d in draws])
    az = np.concatenate([d.azimuths for d in draws])
    assert el.mean() == pytest.approx(np.pi / 4, abs=0.01)
    assert el.var() == pytest.approx(np.pi / 10, rel=0.02)
    assert az.mean() == pytest.approx(0.0, abs=0.03)
    assert az.var() == pytest.approx(np.pi, rel=0.02)


def test_path_power_statistics(rng):
    grid = OtfsGrid(16, 16)
    power = np.array([np.sum(np.abs(sample_paths(rng, ChannelStats(), grid, True).gains) ** 2)
                      for _ in range(100_000)])
    assert power.mean() == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("kwargs", [dict(n_paths=0), dict(max_speed=-1.0),
                                    dict(n_paths=6, max_delay_tap=4)])
def test_invalid_stats(kwargs):
    with pytest.raises(ValueError):
        ChannelStats(**kwargs)


def test_delay_spread_must_fit_grid(rng):
    with pytest.raises(ValueError):
        sample_paths(rng, ChannelStats(max_delay_tap=4), OtfsGrid(16, 4), True)


def test_pathset_lengths():
    with pytest.raises(ValueError):
        PathSet([1, 1], [0], [0], [0.0], [0.0])


def test_identity_channel():
    grid = OtfsGrid(4, 3)
    h = build_channel_matrix(grid, single_path(), W1, 0)
    np.testing.assert_allclose(h.matrix, np.eye(12), atol=1e-15)


def test_delay_shift_permutation():
    grid = OtfsGrid(2, 2)
    h = build_channel_matrix(grid, single_path(l=1), W1, 0).matrix
    for k in range(2):
        for l in range(2):
            e = np.zeros(4)
            e[k + 2 * l] = 1
            target = np.zeros(4)
            target[k + 2 * ((l + 1) % 2)] = 1
            np.testing.assert_allclose(h @ e, target, atol=1e-15)


def test_matrix_matches_bruteforce(rng):
    grid = OtfsGrid(6, 5)
    geom = UpaGeometry(2, 0.5, 1.0)
    paths = sample_paths(rng, ChannelStats(max_delay_tap=4), grid, True)
    for antenna in (0, 3):
        h = build_channel_matrix(grid, paths, geom, antenna).matrix
        for _ in range(10):
            x = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
            y = eq7_bruteforce(grid, paths, geom, antenna, x)
            assert np.max(np.abs(h @ vectorize(DdFrame(grid, x)) - vectorize(DdFrame(grid, y)))) < 1e-10


def test_tap_bounds_checked():
    with pytest.raises(ValueError):
        build_channel_matrix(OtfsGrid(4, 4), single_path(l=4), W1, 0)
    with pytest.raises(ValueError):
        build_channel_matrix(OtfsGrid(4, 4), single_path(k=-4), W1, 0)


def test_identity_eigenvalues():
    e = eigen_decompose(build_channel_matrix(OtfsGrid(4, 4), single_path(), W1, 0))
    np.testing.assert_allclose(e.eigenvalues, np.ones((1, 16)), atol=1e-14)


def test_permutation_eigenvalues():
    grid = OtfsGrid(2, 2)
    h = build_channel_matrix(grid, single_path(l=1), W1, 0)
    e = eigen_decompose(h).eigenvalues[0]
    psi = psi_matrix(grid)
    dense = np.diag(psi @ h.matrix @ psi.conj().T)
    np.testing.assert_allclose(e, dense, atol=1e-14)
    np.testing.assert_allclose(np.sort(e.real), [-1, -1, 1, 1], atol=1e-14)


@pytest.mark.parametrize("n,m", [(8, 8), (4, 6)])
def test_random_eigenvalues_against_dense(rng, n, m):
    grid = OtfsGrid(n, m)
    geom = UpaGeometry(2, 0.5, 1.0)
    paths = sample_paths(rng, ChannelStats(max_delay_tap=min(4, m - 1), n_paths=3), grid, True)
    h = build_channel_matrix(grid, paths, geom, 2)
    psi = psi_matrix(grid)
    d = psi @ h.matrix @ psi.conj().T
    e = eigen_decompose(h).eigenvalues[0]
    assert np.max(np.abs(np.diag(d) - e)) < 1e-9
    assert np.linalg.norm(d - np.diag(np.diag(d))) < 1e-9
    np.testing.assert_allclose(channel_eigensystem(grid, paths, geom).eigenvalues[2], e, atol=1e-12)


def test_eigen_rejects_non_circulant(rng):
    grid = OtfsGrid(3, 3)
    with pytest.raises(NotBlockCirculantError):
        eigen_decompose(DdChannelMatrix(grid, rng.standard_normal((9, 9))))


def test_tf_gain_examples():
    grid = OtfsGrid(4, 8)
    for m in range(8):
        assert tf_gain(grid, single_path(), W1, 0, m) == pytest.approx(1.0)
    two = PathSet([1, 1], [0, 4], [0, 0], [0.2, 0.4], [0.1, 0.3])
    assert tf_gain(grid, two, W1, 0, 0) == pytest.approx(2.0)
    assert tf_gain(grid, two, W1, 0, 1) == pytest.approx(0.0, abs=1e-14)


def test_tf_gain_requires_static_paths():
    with pytest.raises(ValueError):
        tf_gain(OtfsGrid(4, 4), single_path(k=1), W1, 0, 0)


def hnm_sampled(grid, paths, geom, antenna, n, m):
    """Channel integral with delta delays and Dopplers, sampled at (nT, m df)."""
    i, ip = divmod(antenna, geom.side)
    total = 0j
    for p in range(paths.count):
        tau = paths.delay_taps[p] / (grid.n_delay * grid.subcarrier_spacing)
        nu = paths.doppler_taps[p] / grid.frame_duration
        v = steering_element(geom, i, ip, paths.elevations[p], paths.azimuths[p])
        total += (paths.gains[p] * v * np.exp(2j * np.pi * nu * n * grid.symbol_duration)
                  * np.exp(-2j * np.pi * (nu + m * grid.subcarrier_spacing) * tau))
    return total


def test_tf_gain_time_invariant(rng):
    grid = OtfsGrid(16, 16)
    geom = UpaGeometry(3, 0.5, 1.0)
    paths = sample_paths(rng, ChannelStats(), grid, False)
    for antenna in (0, 4, 8):
        for m in range(16):
            g0 = hnm_sampled(grid, paths, geom, antenna, 0, m)
            g7 = hnm_sampled(grid, paths, geom, antenna, 7, m)
            assert g0 == g7
            # the integral's exp(-j2pi m df tau) is the simplified form at subchannel -m
            assert tf_gain(grid, paths, geom, antenna, (-m) % 16) == pytest.approx(g0, abs=1e-12)


@pytest.mark.property
def test_block_circulant_structure(rng):
    grid = OtfsGrid(5, 4)
    geom = UpaGeometry(2, 0.5, 1.0)
    for _ in range(20):
        paths = sample_paths(rng, ChannelStats(max_delay_tap=3), grid, True)
        h = build_channel_matrix(grid, paths, geom, int(rng.integers(4))).matrix
        n, m = grid.shape
        blk = lambda r, c: h[r * n:(r + 1) * n, c * n:(c + 1) * n]
        for r in range(m):
            for c in range(m):
                np.testing.assert_array_equal(blk(r, c), blk((r + 1) % m, (c + 1) % m))
                b = blk(r, c)
                for j in range(n):
                    np.testing.assert_array_equal(b[:, j], np.roll(b[:, 0], j))


@pytest.mark.property
def test_diagonalization_and_matrix_free_product(rng):
    grid = OtfsGrid(8, 8)
    geom = UpaGeometry(2, 0.5, 1.0)
    psi = psi_matrix(grid)
    for _ in range(20):
        paths = sample_paths(rng, ChannelStats(), grid, bool(rng.integers(2)))
        h = build_channel_matrix(grid, paths, geom, int(rng.integers(4)))
        lam = eigen_decompose(h).eigenvalues[0]
        recon = psi.conj().T @ np.diag(lam) @ psi
        assert np.linalg.norm(h.matrix - recon) / np.linalg.norm(h.matrix) < 1e-10
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        fast = psi_apply_h(lam * psi_apply(x, grid), grid)
        assert np.max(np.abs(fast - h.matrix @ x)) < 1e-9


@pytest.mark.property
def test_lm_time_invariance(rng):
    grid = OtfsGrid(16, 16)
    geom = UpaGeometry(2, 0.5, 1.0)
    for _ in range(10):
        paths = sample_paths(rng, ChannelStats(), grid, False)
        for n1, n2 in [(0, 5), (3, 15)]:
            assert hnm_sampled(grid, paths, geom, 1, n1, 3) == hnm_sampled(grid, paths, geom, 1, n2, 3)


@pytest.mark.property
def test_energy_statistics(rng):
    grid = OtfsGrid(16, 16)
    power = np.array([np.sum(np.abs(sample_paths(rng, ChannelStats(), grid, True).gains) ** 2)
                      for _ in range(20000)])
    stderr = power.std(ddof=1) / np.sqrt(power.size)
    assert abs(power.mean() - 1.0) < 3 * stderr


def test_path_coefficients_shape(rng):
    grid = OtfsGrid(16, 16)
    geom = UpaGeometry(8, 0.5, 1.0)
    paths = sample_paths(rng, ChannelStats(), grid, True)
    assert path_coefficients(grid, paths, geom).shape == (64, 4)
    assert tf_gains(grid, sample_paths(rng, ChannelStats(), grid, False), geom).shape == (64, 16)
