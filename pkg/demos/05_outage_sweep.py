"""Outage of the HM and LM users versus SNR, with the OMA benchmark.

A smaller version of what ``simulate --config demos/fig4.yaml`` runs.
"""

# %%
from otfs_noma import ScenarioConfig, sweep

cfg = ScenarioConfig(trials=2000, seed=1)  # N=M=16, 8x8 UPA, Q=3, random U
points = sweep(cfg, "transmit_snr", [10, 20, 30, 40], schemes=("noma", "oma"))

print(f"{'SNR':>4} {'scheme':>6} {'HM out':>8} {'LM out':>8}")
for p in points:
    s = p.stats
    print(f"{p.value:>4} {p.scheme:>6} {s.hm_outage:8.4f} {s.lm_outage:8.4f}")

# %% a single cluster has no inter-cluster interference, so outage vanishes
single = sweep(ScenarioConfig(trials=2000, seed=1, clusters=1), "transmit_snr", [10, 30])
print([(p.value, p.stats.hm_outage) for p in single])
