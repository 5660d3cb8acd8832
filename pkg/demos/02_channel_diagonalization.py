"""A high-mobility channel in the DD domain is block-circulant, so Psi diagonalizes it."""

# %%
import numpy as np

from otfs_noma import (
    ChannelStats, OtfsGrid, UpaGeometry, build_channel_matrix, channel_eigensystem,
    eigen_decompose, psi_matrix, sample_paths,
)

grid = OtfsGrid(16, 16)
geom = UpaGeometry(side=8, element_spacing=0.5, wavelength=1.0)
stats = ChannelStats()  # 4 paths, 60 GHz, 200 km/h
rng = np.random.default_rng(1)

paths = sample_paths(rng, stats, grid, high_mobility=True)
print("max Doppler", round(stats.max_doppler), "Hz")
print("delay taps  ", paths.delay_taps)
print("Doppler taps", paths.doppler_taps)

# %% dense H for antenna 0, then its eigenvalues from block FFTs
h = build_channel_matrix(grid, paths, geom, antenna=0)
d = eigen_decompose(h).eigenvalues[0]
psi = psi_matrix(grid)
err = np.linalg.norm(h.matrix - psi.conj().T @ np.diag(d) @ psi) / np.linalg.norm(h.matrix)
print("||H - Psi^H D Psi|| / ||H|| =", err)

# %% the simulator never forms H: eigenvalues for all 64 antennas straight from the paths
eigs = channel_eigensystem(grid, paths, geom)
print("eigen array", eigs.eigenvalues.shape, "antenna 0 matches", np.allclose(eigs.eigenvalues[0], d))
