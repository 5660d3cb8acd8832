import numpy as np
import pytest

from otfs_noma.channel import ChannelStats, UpaGeometry, sample_paths
from otfs_noma.grid import OtfsGrid
from otfs_noma.precoding import allocate_power, conjugate_beam

ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def random_scenario(rng, n=8, m=8, side=2, clusters=2, lm_users=2, snr_db=30.0, alpha=0.75):
    """Cluster-1 user channel plus a precoder and power split, all random."""
    grid = OtfsGrid(n, m)
    geom = UpaGeometry(side, 0.5, 1.0)
    stats = ChannelStats(n_paths=4, max_delay_tap=min(4, m - 1))
    hm_paths = [sample_paths(rng, stats, grid, True) for _ in range(clusters)]
    user_paths = sample_paths(rng, stats, grid, bool(rng.integers(2)))
    precoder = conjugate_beam(geom, hm_paths)
    power = allocate_power(10 ** (snr_db / 10), clusters, [lm_users] * clusters, alpha)
    return grid, geom, user_paths, precoder, power


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
