"""Conjugate beams toward each cluster and the NOMA power split."""

# %%
import numpy as np

from otfs_noma import ChannelStats, OtfsGrid, UpaGeometry, allocate_power, conjugate_beam, sample_paths
from otfs_noma.precoding import beam_gain, db_to_linear

grid = OtfsGrid(16, 16)
geom = UpaGeometry(8, 0.5, 1.0)
rng = np.random.default_rng(2)
hm = [sample_paths(rng, ChannelStats(azimuth_var=0.05), grid, True, azimuth_mean=az)
      for az in (-0.8, 0.0, 0.8)]
precoder = conjugate_beam(geom, hm)

# %% array gain of each beam toward each cluster's strongest path
for q, paths in enumerate(hm):
    k = int(np.argmax(np.abs(paths.gains)))
    gains = [abs(beam_gain(precoder.column(j), geom, paths.elevations[k], paths.azimuths[k])) ** 2
             for j in range(3)]
    print(f"cluster {q}: |p_j^T v|^2 =", np.round(gains, 2))

# %% 30 dB over 3 clusters, 3/4 to each HM user
pa = allocate_power(db_to_linear(30), 3, [4, 2, 7], hm_fraction=0.75)
print("cluster SNR", pa.cluster_snr)
print("HM SNR     ", pa.hm_snr)
print("LM SNR each", np.round(pa.lm_snr_each, 3))
