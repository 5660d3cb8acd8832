"""Location-based cluster beams and the NOMA power split."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import PathSet, UpaGeometry, steering_vector


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class Precoder:
    """Beam weights ``p[a, q]``; each column has unit norm."""

    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.complex128)
        if c.ndim != 2:
            raise ValueError("coefficients must be an (A, Q) matrix")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def n_antennas(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.coefficients.shape[1]

    def column(self, cluster: int) -> np.ndarray:
        return self.coefficients[:, cluster]


def strongest_path(paths: PathSet) -> int:
    return int(np.argmax(np.abs(paths.gains)))


def conjugate_beam(geom: UpaGeometry, hm_paths: Sequence[PathSet]) -> Precoder:
    """Matched-filter beam toward the strongest path of each cluster's HM user.

    ``p[:, q] = conj(v(theta*, phi*)) / sqrt(A)``.
    """
    if len(hm_paths) == 0:
        raise ValueError("need one HM path set per cluster")
    cols = []
    for paths in hm_paths:
        p = strongest_path(paths)
        v = steering_vector(geom, paths.elevations[p], paths.azimuths[p])
        cols.append(np.conj(v) / np.sqrt(geom.n_antennas))
    return Precoder(np.stack(cols, axis=1))


def beam_gain(weights: np.ndarray, geom: UpaGeometry, elevation, azimuth) -> np.ndarray:
    """Array response ``sum_a p_a v_a(theta, phi)`` (complex, before squaring)."""
    return steering_vector(geom, elevation, azimuth) @ weights


@dataclass(frozen=True)
class PowerAllocation:
    """Linear transmit SNRs per cluster, HM user and each LM user.

    ``cluster_snr``, ``hm_snr``, ``lm_snr_each`` and ``users_per_cluster`` all
    have one entry per cluster.
    """

    total_snr: float
    cluster_snr: np.ndarray
    hm_fraction: float
    hm_snr: np.ndarray
    lm_snr_each: np.ndarray
    users_per_cluster: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_snr)

    def lm_total(self, cluster: int = 0) -> float:
        return float(self.users_per_cluster[cluster] * self.lm_snr_each[cluster])


def allocate_power(total_snr: float, clusters: int, users_per_cluster: Sequence[int],
                   hm_fraction: float, cluster_split: Sequence[float] | None = None
                   ) -> PowerAllocation:
    """Split ``total_snr`` over clusters, then between the HM and the LM users.

    The cluster split defaults to equal shares. A cluster without LM users
    gives all of its power to the HM user.
    """
    if not 0.0 < hm_fraction < 1.0:
        raise ValueError(f"hm_fraction must lie in (0, 1), got {hm_fraction}")
    users = np.asarray(users_per_cluster, dtype=np.int64)
    if users.shape != (clusters,):
        raise ValueError("users_per_cluster needs one entry per cluster")
    if np.any(users < 0):
        raise ValueError("users_per_cluster must be non-negative")
    if cluster_split is None:
        weights = np.full(clusters, 1.0 / clusters)
    else:
        weights = np.asarray(cluster_split, dtype=float)
        if weights.shape != (clusters,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("cluster_split must be non-negative with one entry per cluster")
        weights = weights / weights.sum()
    cluster_snr = total_snr * weights
    hm = np.where(users > 0, hm_fraction * cluster_snr, cluster_snr)
    lm = np.where(users > 0, (cluster_snr - hm) / np.maximum(users, 1), 0.0)
    return PowerAllocation(float(total_snr), cluster_snr, float(hm_fraction), hm, lm, users)
