"""ZF equalization, SIC and the SINR closed forms against a dense oracle."""

# %%
import numpy as np

from otfs_noma import (
    ChannelStats, DdFrame, OtfsGrid, UpaGeometry, allocate_power, build_channel_matrix, build_zf,
    channel_eigensystem, conjugate_beam, detect_and_cancel, effective_eigenvalues, equalize_hm,
    hm_interference_oracle, hm_sinr_closed_form, lm_sinr, sample_paths, vectorize,
)
from otfs_noma.channel import apply_channel, path_coefficients

grid = OtfsGrid(8, 8)
geom = UpaGeometry(2, 0.5, 1.0)
rng = np.random.default_rng(4)
stats = ChannelStats()
hm = [sample_paths(rng, stats, grid, True) for _ in range(2)]
precoder = conjugate_beam(geom, hm)
power = allocate_power(10 ** 2.5, 2, [2, 2], 0.75)  # 25 dB

# %% noiseless HM frame through cluster 1's channel, then ZF
p = precoder.column(0)
s = rng.choice([-1.0, 1.0], size=grid.shape)
y = vectorize(DdFrame(grid, apply_channel(grid, hm[0], p @ path_coefficients(grid, hm[0], geom), s)))
zf = build_zf(effective_eigenvalues(channel_eigensystem(grid, hm[0], geom), p), grid)
print("ZF max error", np.max(np.abs(equalize_hm(zf, y) - vectorize(DdFrame(grid, s)))))

# %% SIC: with a correct HM decision only the noise is left
w = 0.01 * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
residual = detect_and_cancel(y + w, zf, DdFrame(grid, s))
print("residual energy", np.sum(np.abs(residual.symbols) ** 2))

# %% HM SINR: closed form from eigenvalues vs the dense per-symbol oracle
closed = hm_sinr_closed_form(channel_eigensystem(grid, hm[0], geom), precoder, power)
dense = [build_channel_matrix(grid, hm[0], geom, a).matrix for a in range(geom.n_antennas)]
oracle = hm_interference_oracle(dense, precoder, power)
print("closed form", closed.sinr, "oracle range", oracle.min(), oracle.max())

# %% an LM user on subchannel 2 after the HM signal is removed
lm = sample_paths(rng, stats, grid, False)
print("LM SINR", lm_sinr(grid, lm, geom, precoder, power, user_index=2).sinr)
