"""Random multipath DD channels, their block-circulant matrices and eigenvalues.

A path set is drawn once per user. Taps, angles and gains are shared by every
BS antenna; only the UPA steering phase differs from antenna to antenna.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import OtfsGrid

SPEED_OF_LIGHT = 299_792_458.0


class NotBlockCirculantError(ValueError):
    """Matrix is not block-circulant with circulant blocks."""


@dataclass(frozen=True)
class UpaGeometry:
    """W x W uniform planar array, antenna ``a = i*W + i'``."""

    side: int = 8
    element_spacing: float = 0.0025
    wavelength: float = 0.005

    def __post_init__(self):
        if int(self.side) != self.side or self.side < 1:
            raise ValueError("side must be a positive integer")
        if not (self.element_spacing > 0 and self.wavelength > 0):
            raise ValueError("element_spacing and wavelength must be positive")

    @classmethod
    def half_wavelength(cls, side: int, carrier_frequency: float) -> "UpaGeometry":
        lam = SPEED_OF_LIGHT / carrier_frequency
        return cls(side=side, element_spacing=lam / 2, wavelength=lam)

    @property
    def n_antennas(self) -> int:
        return self.side**2

    @property
    def spacing_ratio(self) -> float:
        return self.element_spacing / self.wavelength

    def element_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(i, i')`` for every antenna in index order."""
        i, ip = np.divmod(np.arange(self.n_antennas), self.side)
        return i, ip


def steering_element(geom: UpaGeometry, i: int, i_prime: int,
                     elevation: float, azimuth: float) -> complex:
    """UPA phase ``exp(j2pi d/lambda (i sin(theta) cos(phi) + i' cos(theta)))``."""
    if not (0 <= i < geom.side and 0 <= i_prime < geom.side):
        raise IndexError(f"element ({i}, {i_prime}) outside a {geom.side}x{geom.side} array")
    phase = i * np.sin(elevation) * np.cos(azimuth) + i_prime * np.cos(elevation)
    return complex(np.exp(2j * np.pi * geom.spacing_ratio * phase))


def steering_vector(geom: UpaGeometry, elevation, azimuth) -> np.ndarray:
    """Steering vectors for arrays of angles; shape ``angles.shape + (A,)``."""
    el = np.asarray(elevation, dtype=float)[..., None]
    az = np.asarray(azimuth, dtype=float)[..., None]
    i, ip = geom.element_indices()
    phase = i * np.sin(el) * np.cos(az) + ip * np.cos(el)
    return np.exp(2j * np.pi * geom.spacing_ratio * phase)


@dataclass(frozen=True)
class ChannelStats:
    """Per-user small-scale statistics; angle moments are (mean, variance)."""

    n_paths: int = 4
    max_delay_tap: int = 4
    max_speed: float = 200 / 3.6  # m/s
    carrier_frequency: float = 60e9
    elevation_mean: float = np.pi / 4
    elevation_var: float = np.pi / 10
    azimuth_mean: float = 0.0
    azimuth_var: float = np.pi

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if self.max_delay_tap < 0:
            raise ValueError("max_delay_tap must be non-negative")
        if self.n_paths - 1 > self.max_delay_tap:
            raise ValueError("need max_delay_tap >= n_paths - 1 for distinct delay taps")
        if self.max_speed < 0:
            raise ValueError("max_speed must be non-negative")
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be positive")
        if self.elevation_var < 0 or self.azimuth_var < 0:
            raise ValueError("angle variances must be non-negative")

    @property
    def max_doppler(self) -> float:
        return self.carrier_frequency * self.max_speed / SPEED_OF_LIGHT


@dataclass(frozen=True)
class PathSet:
    gains: np.ndarray
    delay_taps: np.ndarray
    doppler_taps: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray

    def __post_init__(self):
        conv = {"gains": np.complex128, "delay_taps": np.int64, "doppler_taps": np.int64,
                "elevations": np.float64, "azimuths": np.float64}
        for name, dtype in conv.items():
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        lengths = {getattr(self, name).size for name in conv}
        if len(lengths) != 1 or self.gains.size == 0:
            raise ValueError("path vectors must be non-empty and share one length")

    @property
    def count(self) -> int:
        return self.gains.size

    @property
    def is_static(self) -> bool:
        return not np.any(self.doppler_taps)


def round_half_toward_zero(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.ceil(np.abs(x) - 0.5)).astype(np.int64)


def _uniform_moments(rng, mean, var, size):
    half = np.sqrt(3.0 * var)
    return rng.uniform(mean - half, mean + half, size)


def sample_paths(rng: np.random.Generator, stats: ChannelStats, grid: OtfsGrid,
                 high_mobility: bool, elevation_mean: float | None = None,
                 azimuth_mean: float | None = None) -> PathSet:
    """Draw one user's path set.

    Gains are CN(0, 1/P). The first path sits at delay tap 0 and the others
    take distinct taps from ``1..l_max``. High-mobility Doppler follows
    Jakes' model, ``nu_max cos(psi)``, rounded to an integer tap.
    ``elevation_mean`` / ``azimuth_mean`` override the statistics' means so a
    user's position can shift its angular spread.
    """
    if stats.max_delay_tap >= grid.n_delay:
        raise ValueError(f"max_delay_tap {stats.max_delay_tap} must be below M = {grid.n_delay}")
    p = stats.n_paths
    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) * np.sqrt(0.5 / p)
    delays = np.concatenate(
        [[0], rng.choice(np.arange(1, stats.max_delay_tap + 1), size=p - 1, replace=False)])
    if high_mobility:
        psi = rng.uniform(0.0, 2 * np.pi, p)
        nu = stats.max_doppler * np.cos(psi)
        dopplers = round_half_toward_zero(nu * grid.frame_duration)
        if np.any(np.abs(dopplers) >= grid.n_doppler):
            raise ValueError("Doppler spread exceeds the grid; increase n_doppler")
    else:
        dopplers = np.zeros(p, dtype=np.int64)
    el_mean = stats.elevation_mean if elevation_mean is None else elevation_mean
    az_mean = stats.azimuth_mean if azimuth_mean is None else azimuth_mean
    elevations = _uniform_moments(rng, el_mean, stats.elevation_var, p)
    azimuths = _uniform_moments(rng, az_mean, stats.azimuth_var, p)
    return PathSet(gains, delays, dopplers, elevations, azimuths)


def _check_taps(grid: OtfsGrid, paths: PathSet):
    if np.any(paths.delay_taps < 0) or np.any(paths.delay_taps >= grid.n_delay):
        raise ValueError("delay tap outside [0, M)")
    if np.any(np.abs(paths.doppler_taps) >= grid.n_doppler):
        raise ValueError("Doppler tap outside (-N, N)")


def path_coefficients(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry) -> np.ndarray:
    """Per-antenna path weights ``h_p exp(-j2pi tau_p nu_p) v_a(theta_p, phi_p)``.

    Returns shape ``(A, P)``.
    """
    _check_taps(grid, paths)
    tau = paths.delay_taps / (grid.n_delay * grid.subcarrier_spacing)
    nu = paths.doppler_taps / grid.frame_duration
    scalar = paths.gains * np.exp(-2j * np.pi * tau * nu)
    return steering_vector(geom, paths.elevations, paths.azimuths).T * scalar


@dataclass(frozen=True)
class DdChannelMatrix:
    grid: OtfsGrid
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (self.grid.size, self.grid.size):
            raise ValueError("channel matrix must be NM x NM")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class ChannelEigenSystem:
    """Eigenvalues of ``H_a`` for each antenna, shape ``(A, NM)``."""

    grid: OtfsGrid
    eigenvalues: np.ndarray = field(repr=False)

    def __post_init__(self):
        ev = np.atleast_2d(np.array(self.eigenvalues, dtype=np.complex128))
        if ev.ndim != 2 or ev.shape[1] != self.grid.size:
            raise ValueError("eigenvalues must have shape (A, NM)")
        ev.flags.writeable = False
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_antennas(self) -> int:
        return self.eigenvalues.shape[0]

    @classmethod
    def stack(cls, systems) -> "ChannelEigenSystem":
        systems = list(systems)
        return cls(systems[0].grid, np.concatenate([s.eigenvalues for s in systems]))


def _shift(n: int, s: int) -> np.ndarray:
    # (P x)[k] = x[(k - s) mod n]
    return np.roll(np.eye(n), s, axis=0)


def build_channel_matrix(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry,
                         antenna: int) -> DdChannelMatrix:
    """Dense ``H_a`` with ``y[k,l] = sum_p c_p x[(k-k_p)_N, (l-l_p)_M]``."""
    if not 0 <= antenna < geom.n_antennas:
        raise IndexError(f"antenna {antenna} out of range")
    coef = path_coefficients(grid, paths, geom)[antenna]
    h = np.zeros((grid.size, grid.size), dtype=np.complex128)
    for c, l, k in zip(coef, paths.delay_taps, paths.doppler_taps):
        h += c * np.kron(_shift(grid.n_delay, l), _shift(grid.n_doppler, k))
    return DdChannelMatrix(grid, h)


def apply_channel(grid: OtfsGrid, paths: PathSet, path_weights, frame) -> np.ndarray:
    """Matrix-free ``y[k,l] = sum_p w_p x[(k-k_p)_N, (l-l_p)_M]`` on a DD frame.

    ``path_weights`` (length P) is one row of :func:`path_coefficients`, or a
    precoded combination of rows.
    """
    x = np.asarray(frame)
    out = np.zeros(grid.shape, dtype=np.complex128)
    for w, l, k in zip(path_weights, paths.delay_taps, paths.doppler_taps):
        out += w * np.roll(x, (k, l), axis=(0, 1))
    return out


def block_circulant_error(ch: DdChannelMatrix) -> float:
    """Largest deviation of ``ch`` from block-circulant-with-circulant-blocks."""
    n, m = ch.grid.n_doppler, ch.grid.n_delay
    blocks = ch.matrix.reshape(m, n, m, n).transpose(0, 2, 1, 3)  # [r, c, :, :]
    first_row = blocks[0]
    err = 0.0
    for r in range(m):
        expected = np.roll(first_row, r, axis=0)  # block (r, c) = block (0, c - r)
        err = max(err, np.max(np.abs(blocks[r] - expected)))
    cols = first_row[:, :, 0]  # first column of every block (0, i)
    for j in range(n):
        err = max(err, np.max(np.abs(first_row[:, :, j] - np.roll(cols, j, axis=1))))
    return float(err)


def eigen_decompose(ch: DdChannelMatrix, tol: float = 1e-12) -> ChannelEigenSystem:
    """Eigenvalues of a block-circulant DD channel via block FFTs.

    ``D = sum_i O^i (x) D_i`` where ``D_i`` is the N-point FFT of the first
    column of block ``(0, i)`` and ``O = diag(exp(j2pi m/M))``.
    """
    scale = max(1.0, float(np.max(np.abs(ch.matrix))))
    if block_circulant_error(ch) > tol * scale:
        raise NotBlockCirculantError("channel matrix is not block-circulant")
    n, m = ch.grid.n_doppler, ch.grid.n_delay
    first_cols = ch.matrix[:n, ::n].T  # row i = first column of block (0, i)
    block_eigs = np.fft.fft(first_cols, axis=1)  # D_i, shape (M, N)
    o_powers = np.exp(2j * np.pi * np.outer(np.arange(m), np.arange(m)) / m)  # [m, i]
    eigs = o_powers @ block_eigs  # [delay freq, Doppler freq]
    return ChannelEigenSystem(ch.grid, eigs.reshape(1, -1))


def path_phases(grid: OtfsGrid, paths: PathSet) -> np.ndarray:
    """Eigenvalue of each path's shift operator at every index; shape ``(P, NM)``."""
    ik = np.arange(grid.n_doppler)
    il = np.arange(grid.n_delay)
    dop = np.exp(-2j * np.pi * np.outer(paths.doppler_taps, ik) / grid.n_doppler)
    dly = np.exp(-2j * np.pi * np.outer(paths.delay_taps, il) / grid.n_delay)
    # index i = i_k + N i_l
    return (dly[:, :, None] * dop[:, None, :]).reshape(paths.count, -1)


def channel_eigensystem(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry) -> ChannelEigenSystem:
    """Eigenvalues for all antennas straight from the path set (no dense matrix)."""
    return ChannelEigenSystem(grid, path_coefficients(grid, paths, geom) @ path_phases(grid, paths))


def tf_gains(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry) -> np.ndarray:
    """Static TF gains ``sum_p h_p exp(j2pi l_p m/M) v_a`` for all antennas, shape ``(A, M)``."""
    if not paths.is_static:
        raise ValueError("TF gain is time-invariant only for zero-Doppler paths")
    _check_taps(grid, paths)
    phase = np.exp(2j * np.pi * np.outer(paths.delay_taps, np.arange(grid.n_delay)) / grid.n_delay)
    steer = steering_vector(geom, paths.elevations, paths.azimuths)  # (P, A)
    return (steer * paths.gains[:, None]).T @ phase


def tf_gain(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry, antenna: int,
            subchannel: int) -> complex:
    if not 0 <= subchannel < grid.n_delay:
        raise IndexError("subchannel out of range")
    return complex(tf_gains(grid, paths, geom)[antenna, subchannel])
