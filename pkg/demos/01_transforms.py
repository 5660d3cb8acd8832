"""Delay-Doppler frames, the ISFFT/SFFT pair and the Kronecker DFT Psi."""

# %%
import numpy as np

from otfs_noma import DdFrame, OtfsGrid, isfft, psi_matrix, sfft, vectorize
from otfs_noma.grid import psi_apply

grid = OtfsGrid(n_doppler=4, n_delay=4)
print(grid, "frame", grid.frame_duration * 1e3, "ms")

# %% a single pilot in the DD grid spreads flat over the whole TF grid
x = np.zeros(grid.shape)
x[0, 0] = 1.0
print(np.round(isfft(DdFrame(grid, x)).symbols.real, 4))

# %% round trip and energy: isfft carries a 1/(NM) scale
rng = np.random.default_rng(0)
x = rng.choice([-1.0, 1.0], size=grid.shape)
tf = isfft(DdFrame(grid, x))
print("round trip error", np.max(np.abs(sfft(tf).symbols - x)))
print("energy ratio", np.sum(np.abs(tf.symbols) ** 2) / np.sum(x**2), "=", 1 / grid.size)

# %% Psi acts on the Doppler-fastest vectorization and is unitary
psi = psi_matrix(grid)
v = vectorize(DdFrame(grid, x))
print("unitary", np.allclose(psi @ psi.conj().T, np.eye(grid.size)))
print("matrix-free agrees", np.allclose(psi_apply(v, grid), psi @ v))
