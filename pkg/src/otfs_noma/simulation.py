"""Monte Carlo outage experiments for clustered OTFS-NOMA downlinks.

Every random draw comes from a stream keyed by ``(seed, trial, cluster, user,
purpose)``. Changing a power setting, the LM count of a cluster or the number
of clusters therefore leaves every other draw untouched (common random
numbers), and serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelStats, PathSet, UpaGeometry, path_phases, sample_paths, steering_vector
from .detection import SINGULAR_EPS, rate
from .grid import OtfsGrid
from .precoding import PowerAllocation, Precoder, allocate_power, conjugate_beam, db_to_linear

Z_95 = 1.96

# stream purposes
_COUNT, _PLACE, _PATHS = 0, 1, 2

SWEEP_AXES = ("transmit_snr", "lm_count", "alpha", "clusters")
SCHEMES = ("noma", "oma")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one Monte Carlo experiment needs.

    ``users_per_cluster`` holds one LM count per cluster; ``None`` (for the
    whole tuple or an entry) draws the count uniformly from ``1..M`` in every
    trial. Angles are in radians, distances in meters, speeds in m/s.
    """

    n_doppler: int = 16
    n_delay: int = 16
    subcarrier_spacing: float = 15e3
    carrier_frequency: float = 60e9
    array_side: int = 8
    spacing_ratio: float = 0.5
    clusters: int = 3
    users_per_cluster: tuple | None = None
    n_paths: int = 4
    max_delay_tap: int = 4
    max_speed: float = 200 / 3.6
    elevation_mean: float = np.pi / 4
    elevation_var: float = np.pi / 10
    azimuth_mean: float = 0.0
    azimuth_var: float = np.pi
    transmit_snr_db: float = 30.0
    hm_fraction: float = 0.75
    cluster_split: tuple | None = None
    oma_time_fraction: float | None = 0.5
    cluster_distance: float = 100.0
    cluster_radius: float = 10.0
    sector_half_width: float = np.pi / 3
    min_separation: float = np.deg2rad(20.0)
    rate_threshold: float = 0.5
    report_all_clusters: bool = False
    singular_eps: float = SINGULAR_EPS
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.users_per_cluster is not None:
            object.__setattr__(self, "users_per_cluster", tuple(self.users_per_cluster))
        if self.cluster_split is not None:
            object.__setattr__(self, "cluster_split", tuple(float(x) for x in self.cluster_split))
        self.validate()

    def validate(self):
        if self.clusters < 1:
            raise ValueError("clusters: need Q >= 1")
        if self.users_per_cluster is not None:
            if len(self.users_per_cluster) != self.clusters:
                raise ValueError("users_per_cluster: need one entry per cluster")
            for u in self.users_per_cluster:
                if u is not None and not 0 <= u <= self.n_delay:
                    raise ValueError(f"users_per_cluster: U_q = {u} violates 0 <= U_q <= M = {self.n_delay}")
        if self.cluster_split is not None and len(self.cluster_split) != self.clusters:
            raise ValueError("cluster_split: need one weight per cluster")
        if not 0.0 < self.hm_fraction < 1.0:
            raise ValueError("hm_fraction: must lie in (0, 1)")
        if self.oma_time_fraction is not None and not 0.0 < self.oma_time_fraction <= 1.0:
            raise ValueError("oma_time_fraction: must lie in (0, 1]")
        if self.cluster_radius < 0:
            raise ValueError("cluster_radius: must be non-negative")
        if self.cluster_distance <= 0:
            raise ValueError("cluster_distance: must be positive")
        if not 0.0 < self.elevation_mean <= np.pi / 2:
            raise ValueError("elevation_mean: must lie in (0, pi/2]")
        if self.trials < 1:
            raise ValueError("trials: need at least one trial")
        if self.rate_threshold < 0:
            raise ValueError("rate_threshold: must be non-negative")
        self.grid
        self.stats

    @property
    def grid(self) -> OtfsGrid:
        return OtfsGrid(self.n_doppler, self.n_delay, self.subcarrier_spacing)

    @property
    def geometry(self) -> UpaGeometry:
        return UpaGeometry(self.array_side, self.spacing_ratio, 1.0)

    @property
    def stats(self) -> ChannelStats:
        return ChannelStats(self.n_paths, self.max_delay_tap, self.max_speed, self.carrier_frequency,
                            self.elevation_mean, self.elevation_var, self.azimuth_mean,
                            self.azimuth_var)

    @property
    def transmit_snr(self) -> float:
        return db_to_linear(self.transmit_snr_db)

    @property
    def time_fraction(self) -> float:
        """OMA share of the HM user; ``None`` mirrors ``hm_fraction``."""
        return self.hm_fraction if self.oma_time_fraction is None else self.oma_time_fraction

    @property
    def bs_height(self) -> float:
        # puts every HM user at the mean elevation
        return self.cluster_distance / np.tan(self.elevation_mean)


def _rng(cfg: ScenarioConfig, trial: int, cluster: int, user: int, purpose: int):
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(trial, cluster, user, purpose))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ClusterGeometry:
    """Ground positions relative to the BS and the angles they subtend.

    Index 0 is the HM user; ``1..U`` are the LM users.
    """

    positions: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray

    @property
    def hm_position(self) -> np.ndarray:
        return self.positions[0]

    @property
    def lm_positions(self) -> np.ndarray:
        return self.positions[1:]


def _angles(xy: np.ndarray, height: float) -> tuple[np.ndarray, np.ndarray]:
    rho = np.hypot(xy[:, 0], xy[:, 1])
    return np.arctan2(rho, height), np.arctan2(xy[:, 1], xy[:, 0])


def lm_counts(cfg: ScenarioConfig, trial: int) -> np.ndarray:
    counts = []
    for q in range(cfg.clusters):
        fixed = None if cfg.users_per_cluster is None else cfg.users_per_cluster[q]
        if fixed is None:
            fixed = int(_rng(cfg, trial, q, 0, _COUNT).integers(1, cfg.n_delay + 1))
        counts.append(fixed)
    return np.array(counts, dtype=np.int64)


def place_users(cfg: ScenarioConfig, trial: int, counts: Sequence[int],
                max_retries: int = 1000) -> list[ClusterGeometry]:
    """HM users at separated azimuths, LM users uniform on a disk around each.

    Cluster ``q`` only looks at the clusters before it, so adding clusters
    never moves existing ones.
    """
    lo = cfg.azimuth_mean - cfg.sector_half_width
    hi = cfg.azimuth_mean + cfg.sector_half_width
    height = cfg.bs_height
    hm_az: list[float] = []
    out = []
    for q, n_lm in enumerate(counts):
        rng = _rng(cfg, trial, q, 0, _PLACE)
        for _ in range(max_retries):
            az = rng.uniform(lo, hi)
            gaps = np.abs(np.angle(np.exp(1j * (az - np.asarray(hm_az)))))
            if np.all(gaps >= cfg.min_separation):
                break
        else:
            raise RuntimeError(f"could not separate cluster {q} by {cfg.min_separation} rad "
                               f"after {max_retries} draws")
        hm_az.append(az)
        center = cfg.cluster_distance * np.array([np.cos(az), np.sin(az)])
        pts = [center]
        for u in range(1, n_lm + 1):
            r_rng = _rng(cfg, trial, q, u, _PLACE)
            r = cfg.cluster_radius * np.sqrt(r_rng.uniform())
            psi = r_rng.uniform(0.0, 2 * np.pi)
            pts.append(center + r * np.array([np.cos(psi), np.sin(psi)]))
        xy = np.array(pts)
        el, azs = _angles(xy, height)
        out.append(ClusterGeometry(xy, el, azs))
    return out


@dataclass(frozen=True)
class ClusterChannels:
    """Power-independent gain terms for the users of one reported cluster.

    ``hm_omega[u, j]`` and ``lm_inter[u-1, j]`` refer to the j-th *other*
    cluster in index order. Singular users carry NaN gains and a set flag.
    """

    cluster: int
    hm_omega: np.ndarray
    hm_noise: np.ndarray
    lm_own: np.ndarray
    lm_inter: np.ndarray
    singular: np.ndarray


@dataclass(frozen=True)
class TrialChannels:
    counts: np.ndarray
    clusters: tuple[ClusterChannels, ...]


def _user_terms(cfg: ScenarioConfig, grid: OtfsGrid, geom: UpaGeometry, precoder: Precoder,
                paths: PathSet, desired: int, subchannel: int | None):
    beams = precoder.coefficients.T @ steering_vector(geom, paths.elevations, paths.azimuths).T
    tau_nu = paths.delay_taps * paths.doppler_taps / grid.size  # tau*nu with T*df = 1
    weights = beams * (paths.gains * np.exp(-2j * np.pi * tau_nu))  # (Q, P)
    others = [q for q in range(precoder.n_clusters) if q != desired]
    eff = weights @ path_phases(grid, paths)  # (Q, NM)
    own = np.abs(eff[desired]) ** 2
    singular = bool(np.min(own) < cfg.singular_eps**2)
    if singular:
        omega = np.full(len(others), np.nan)
        noise = np.nan
    else:
        omega = np.mean(np.abs(eff[others]) ** 2 / own, axis=1)
        noise = float(np.mean(1.0 / own))
    if subchannel is None:
        return omega, noise, np.nan, np.full(len(others), np.nan), singular
    tf = beams @ (paths.gains * np.exp(2j * np.pi * paths.delay_taps * subchannel / grid.n_delay))
    tf_own = float(np.abs(tf[desired]) ** 2)
    if tf_own < cfg.singular_eps**2:
        singular = True
    return omega, noise, tf_own, np.abs(tf[others]) ** 2, singular


def draw_channels(cfg: ScenarioConfig, trial: int) -> TrialChannels:
    """Draw geometry and paths for one trial and reduce them to gain terms."""
    grid, geom, stats = cfg.grid, cfg.geometry, cfg.stats
    counts = lm_counts(cfg, trial)
    layout = place_users(cfg, trial, counts)
    hm_paths = [sample_paths(_rng(cfg, trial, q, 0, _PATHS), stats, grid, True,
                             layout[q].elevations[0], layout[q].azimuths[0])
                for q in range(cfg.clusters)]
    precoder = conjugate_beam(geom, hm_paths)
    reported = range(cfg.clusters) if cfg.report_all_clusters else range(1)
    result = []
    for c in reported:
        n_users = counts[c] + 1
        n_other = cfg.clusters - 1
        omega = np.empty((n_users, n_other))
        noise = np.empty(n_users)
        lm_own = np.empty(counts[c])
        lm_inter = np.empty((counts[c], n_other))
        singular = np.zeros(n_users, dtype=bool)
        for u in range(n_users):
            if u == 0:
                paths, sub = hm_paths[c], None
            else:
                paths = sample_paths(_rng(cfg, trial, c, u, _PATHS), stats, grid, False,
                                     layout[c].elevations[u], layout[c].azimuths[u])
                sub = u - 1
            terms = _user_terms(cfg, grid, geom, precoder, paths, c, sub)
            omega[u], noise[u], singular[u] = terms[0], terms[1], terms[4]
            if u > 0:
                lm_own[u - 1], lm_inter[u - 1] = terms[2], terms[3]
        result.append(ClusterChannels(c, omega, noise, lm_own, lm_inter, singular))
    return TrialChannels(counts, tuple(result))


@dataclass(frozen=True)
class TrialResult:
    """Rates (b/s/Hz), outage flags and SINRs of the reported users."""

    hm_rate: np.ndarray
    hm_outage: np.ndarray
    lm_rate: np.ndarray
    lm_outage: np.ndarray
    hm_sinr: np.ndarray = field(repr=False)
    lm_sinr: np.ndarray = field(repr=False)
    hm_signal_rate_at_lm: np.ndarray = field(repr=False)


def _power(cfg: ScenarioConfig, counts) -> PowerAllocation:
    return allocate_power(cfg.transmit_snr, cfg.clusters, counts, cfg.hm_fraction,
                          cfg.cluster_split)


def evaluate_trial(cfg: ScenarioConfig, channels: TrialChannels, scheme: str = "noma") -> TrialResult:
    """Turn gain terms into rates and outage flags under ``scheme``.

    NOMA: every user first decodes the HM signal; an LM user is in outage if
    either that step or its own decoding misses the threshold. OMA: the HM
    user gets a time fraction ``beta`` with the full cluster power and the LM
    users share the remaining ``1 - beta``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    power = _power(cfg, channels.counts)
    th = cfg.rate_threshold
    hm_r, hm_o, lm_r, lm_o, hm_s, lm_s, hm_at_lm = [], [], [], [], [], [], []
    with np.errstate(invalid="ignore"):
        for ch in channels.clusters:
            c = ch.cluster
            others = np.array([q for q in range(cfg.clusters) if q != c], dtype=np.int64)
            rho_other = power.cluster_snr[others]
            inter_hm = ch.hm_omega @ rho_other
            inter_lm = ch.lm_inter @ rho_other
            n_lm = channels.counts[c]
            if scheme == "noma":
                sinr_hm = power.hm_snr[c] / (power.lm_total(c) + inter_hm + ch.hm_noise)
                rate_hm = rate(sinr_hm)
                sinr_lm = power.lm_snr_each[c] * ch.lm_own / (inter_lm + 1.0)
                rate_lm = rate(sinr_lm)
                sic_ok = rate_hm[1:] >= th
            else:
                beta = cfg.time_fraction
                sinr_hm = power.cluster_snr[c] / (inter_hm + ch.hm_noise)
                rate_hm = beta * rate(sinr_hm)
                each = power.cluster_snr[c] / max(n_lm, 1)
                sinr_lm = each * ch.lm_own / (inter_lm + 1.0)
                rate_lm = (1.0 - beta) * rate(sinr_lm)
                sic_ok = np.ones(n_lm, dtype=bool)
            ok = ~ch.singular
            hm_r.append(rate_hm[:1])
            hm_o.append(~(ok[:1] & (rate_hm[:1] >= th)))
            lm_r.append(rate_lm)
            lm_o.append(~(ok[1:] & sic_ok & (rate_lm >= th)))
            hm_s.append(sinr_hm[:1])
            lm_s.append(sinr_lm)
            hm_at_lm.append(rate_hm[1:])
    cat = np.concatenate
    return TrialResult(cat(hm_r), cat(hm_o), cat(lm_r), cat(lm_o), cat(hm_s), cat(lm_s),
                       cat(hm_at_lm))


def run_trial(cfg: ScenarioConfig, trial: int = 0, scheme: str = "noma") -> TrialResult:
    """One end-to-end realization. The random source is keyed by ``(cfg.seed, trial)``."""
    return evaluate_trial(cfg, draw_channels(cfg, trial), scheme)


@dataclass(frozen=True)
class OutageStats:
    hm_outage: float
    lm_outage: float
    hm_halfwidth: float
    lm_halfwidth: float
    trials: int

    @classmethod
    def from_counts(cls, hm_fail, hm_total, lm_fail, lm_total, trials) -> "OutageStats":
        p_hm = hm_fail / hm_total if hm_total else float("nan")
        p_lm = lm_fail / lm_total if lm_total else float("nan")
        return cls(p_hm, p_lm, halfwidth(p_hm, trials), halfwidth(p_lm, trials), trials)

    def role(self, name: str) -> tuple[float, float]:
        if name == "hm":
            return self.hm_outage, self.hm_halfwidth
        if name == "lm":
            return self.lm_outage, self.lm_halfwidth
        raise ValueError(f"unknown role {name!r}")


def halfwidth(p: float, n: int, z: float = Z_95) -> float:
    """Normal-approximation confidence half-width ``z sqrt(p(1-p)/n)``."""
    if not np.isfinite(p):
        return float("nan")
    return float(z * np.sqrt(p * (1.0 - p) / n))


def _channel_key(cfg: ScenarioConfig) -> ScenarioConfig:
    # fields that do not influence any random draw
    return dataclasses.replace(cfg, transmit_snr_db=0.0, hm_fraction=0.5, cluster_split=None,
                               oma_time_fraction=None, rate_threshold=0.0, trials=1)


def _count_chunk(configs: Sequence[ScenarioConfig], schemes: Sequence[str],
                 trials: Sequence[int]) -> np.ndarray:
    """Outage tallies ``[config, scheme, (hm_fail, hm_total, lm_fail, lm_total)]``."""
    tally = np.zeros((len(configs), len(schemes), 4), dtype=np.int64)
    for t in trials:
        cache = {}
        for i, cfg in enumerate(configs):
            key = _channel_key(cfg)
            if key not in cache:
                cache[key] = draw_channels(cfg, t)
            for j, scheme in enumerate(schemes):
                res = evaluate_trial(cfg, cache[key], scheme)
                tally[i, j] += (res.hm_outage.sum(), res.hm_outage.size,
                                res.lm_outage.sum(), res.lm_outage.size)
    return tally


def _tally(configs: Sequence[ScenarioConfig], schemes: Sequence[str], trials: int,
           workers: int = 1) -> np.ndarray:
    if workers <= 1 or trials < 2:
        return _count_chunk(configs, schemes, range(trials))
    chunks = [range(s, trials, workers) for s in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_count_chunk, [configs] * workers, [schemes] * workers, chunks))
    return np.sum(parts, axis=0)


def _stats(tally_row, trials: int) -> OutageStats:
    return OutageStats.from_counts(*tally_row.tolist(), trials)


def outage_probability(cfg: ScenarioConfig, scheme: str = "noma", workers: int = 1) -> OutageStats:
    """Empirical outage of the HM user and the pooled LM users over ``cfg.trials``."""
    return _stats(_tally([cfg], [scheme], cfg.trials, workers)[0, 0], cfg.trials)


def oma_baseline(cfg: ScenarioConfig, workers: int = 1) -> OutageStats:
    """Time-division benchmark on the same channel draws as the NOMA run."""
    return outage_probability(cfg, "oma", workers)


def with_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Copy of ``cfg`` with one sweep axis set to ``value``."""
    if axis == "transmit_snr":
        return dataclasses.replace(cfg, transmit_snr_db=float(value))
    if axis == "alpha":
        return dataclasses.replace(cfg, hm_fraction=float(value))
    if axis == "lm_count":
        if int(value) != value:
            raise ValueError("lm_count values must be integers")
        rest = (None,) * (cfg.clusters - 1) if cfg.users_per_cluster is None \
            else cfg.users_per_cluster[1:]
        return dataclasses.replace(cfg, users_per_cluster=(int(value),) + tuple(rest))
    if axis == "clusters":
        q = int(value)
        if q != value or q < 1:
            raise ValueError("clusters values must be positive integers")
        if cfg.cluster_split is not None:
            raise ValueError("a clusters sweep needs the default equal cluster split")
        users = None
        if cfg.users_per_cluster is not None:
            users = (cfg.users_per_cluster[0],) + (None,) * (q - 1)
        return dataclasses.replace(cfg, clusters=q, users_per_cluster=users)
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


@dataclass(frozen=True)
class SweepPoint:
    value: float
    scheme: str
    stats: OutageStats


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, schemes: Sequence[str] = ("noma",),
          workers: int = 1) -> list[SweepPoint]:
    """Outage for every ``value`` of ``axis`` on common random numbers.

    Rows come out value-major, scheme-minor. Points that share channel draws
    (power axes) draw them once per trial.
    """
    values = list(values)
    if not values:
        return []
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    configs = [with_axis(cfg, axis, v) for v in values]
    tally = _tally(configs, list(schemes), cfg.trials, workers)
    return [SweepPoint(v, s, _stats(tally[i, j], cfg.trials))
            for i, v in enumerate(values) for j, s in enumerate(schemes)]
