"""HM zero-forcing in the eigenvalue domain, LM one-tap detection and SINRs.

Powers are transmit SNRs, i.e. already normalized by the noise variance, so
the noise term in every SINR is ``1`` (LM) or the ZF noise enhancement (HM).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelEigenSystem, DdChannelMatrix, PathSet, UpaGeometry, tf_gains
from .grid import DdFrame, OtfsGrid, TfFrame, devectorize, isfft, psi_apply, psi_apply_h, vectorize
from .precoding import PowerAllocation, Precoder

SINGULAR_EPS = 1e-12
MAX_ORACLE_SIZE = 1024


class SingularChannelError(ArithmeticError):
    """An effective channel eigenvalue or TF gain is (numerically) zero."""

    def __init__(self, index: int, magnitude: float):
        super().__init__(f"effective channel is singular at index {index} (|value| = {magnitude:.3g})")
        self.index = index
        self.magnitude = magnitude


def rate(sinr):
    """Achievable rate in b/s/Hz."""
    return np.log2(1.0 + np.asarray(sinr))


@dataclass(frozen=True)
class SinrComponents:
    """Signal and impairment powers of one detection, noise-normalized."""

    signal: float
    intra_cluster: float
    inter_cluster: tuple[float, ...]
    noise: float

    def __post_init__(self):
        values = (self.signal, self.intra_cluster, self.noise, *self.inter_cluster)
        if min(values) < 0:
            raise ValueError("SINR components must be non-negative")

    @property
    def interference(self) -> float:
        return self.intra_cluster + sum(self.inter_cluster)

    @property
    def sinr(self) -> float:
        return self.signal / (self.interference + self.noise)


@dataclass(frozen=True)
class SinrReport:
    """HM-signal SINR at every cluster user and each LM user's own SINR."""

    hm_sinr_at_user: np.ndarray
    lm_sinr: np.ndarray
    hm_components: tuple[SinrComponents, ...] = field(default=(), repr=False)
    lm_components: tuple[SinrComponents, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class ZfEqualizer:
    grid: OtfsGrid
    delta: np.ndarray = field(repr=False)
    effective_eigenvalues: np.ndarray = field(repr=False)


def check_nonsingular(values, eps: float = SINGULAR_EPS):
    mags = np.abs(values)
    bad = np.flatnonzero(mags < eps)
    if bad.size:
        raise SingularChannelError(int(bad[0]), float(mags[bad[0]]))


def effective_eigenvalues(eigs: ChannelEigenSystem, precoder_column) -> np.ndarray:
    """``eta_i = sum_a p_a lambda_{a,i}``: eigenvalues of the precoded channel."""
    p = np.asarray(precoder_column)
    if p.shape != (eigs.n_antennas,):
        raise ValueError(f"precoder has {p.size} antennas, channel has {eigs.n_antennas}")
    return p @ eigs.eigenvalues


def build_zf(effective_eigs, grid: OtfsGrid, eps: float = SINGULAR_EPS) -> ZfEqualizer:
    """``delta_i = conj(eta_i) / |eta_i|^2``."""
    eta = np.asarray(effective_eigs, dtype=np.complex128)
    if eta.shape != (grid.size,):
        raise ValueError("need one eigenvalue per DD symbol")
    check_nonsingular(eta, eps)
    return ZfEqualizer(grid, np.conj(eta) / np.abs(eta) ** 2, eta)


def equalize_hm(zf: ZfEqualizer, received) -> np.ndarray:
    """``Psi^H diag(delta) Psi y`` without forming a matrix."""
    y = np.asarray(received)
    if y.shape != (zf.grid.size,):
        raise ValueError(f"received vector must have length {zf.grid.size}")
    return psi_apply_h(zf.delta * psi_apply(y, zf.grid), zf.grid)


def detect_and_cancel(received, zf: ZfEqualizer, hm_frame_estimate: DdFrame) -> TfFrame:
    """Subtract the re-modulated HM frame and hand the residual over in TF."""
    y = np.asarray(received)
    if y.shape != (zf.grid.size,):
        raise ValueError(f"received vector must have length {zf.grid.size}")
    s = vectorize(hm_frame_estimate)
    hm_part = psi_apply_h(zf.effective_eigenvalues * psi_apply(s, zf.grid), zf.grid)
    return isfft(devectorize(y - hm_part, zf.grid))


def hm_gain_terms(effective_by_cluster, eps: float = SINGULAR_EPS) -> tuple[np.ndarray, float]:
    """Power-free parts of the HM SINR from precoded eigenvalues.

    ``effective_by_cluster`` has shape ``(Q, NM)``; row 0 is the desired
    cluster. Returns ``(omega[q] for q >= 2, noise enhancement)``.
    """
    eff = np.atleast_2d(effective_by_cluster)
    own = eff[0]
    check_nonsingular(own, eps)
    inv_pow = 1.0 / np.abs(own) ** 2
    omega = np.mean(np.abs(eff[1:]) ** 2 * inv_pow, axis=1)
    return omega, float(np.mean(inv_pow))


def hm_components(omega, noise_enhancement: float, power: PowerAllocation,
                  hm_snr: float | None = None, lm_total: float | None = None) -> SinrComponents:
    signal = power.hm_snr[0] if hm_snr is None else hm_snr
    intra = power.lm_total(0) if lm_total is None else lm_total
    inter = tuple(float(x) for x in power.cluster_snr[1:] * np.asarray(omega))
    return SinrComponents(float(signal), float(intra), inter, float(noise_enhancement))


def hm_sinr_closed_form(eigs: ChannelEigenSystem, precoder: Precoder,
                        power: PowerAllocation, eps: float = SINGULAR_EPS) -> SinrComponents:
    """SINR of the cluster-1 HM signal at one user, from eigenvalues only.

    ``rho_0 / (sum rho_u + sum_{q>=2} rho_{c,q} omega_q + eta)`` with
    ``omega_q = mean |eta_q,i / eta_1,i|^2`` and ``eta = mean 1/|eta_1,i|^2``.
    """
    if precoder.n_clusters != power.n_clusters:
        raise ValueError("precoder and power allocation disagree on the cluster count")
    eff = precoder.coefficients.T @ eigs.eigenvalues
    omega, noise = hm_gain_terms(eff, eps)
    return hm_components(omega, noise, power)


def hm_interference_oracle(channels, precoder: Precoder, power: PowerAllocation) -> np.ndarray:
    """Per-symbol HM SINR from dense matrices (small grids only).

    ``channels`` lists one :class:`DdChannelMatrix` per antenna. Builds
    ``G = (H^H H)^-1 H^H`` and ``Omega_q = G sum_a p_{a,q} H_a`` and reads the
    interference and noise powers off the diagonals of ``Omega Omega^H`` and
    ``(H^H H)^-1``.
    """
    mats = np.stack([c.matrix if isinstance(c, DdChannelMatrix) else np.asarray(c)
                     for c in channels])
    nm = mats.shape[1]
    if nm > MAX_ORACLE_SIZE:
        raise ValueError(f"oracle limited to NM <= {MAX_ORACLE_SIZE}, got {nm}")
    per_cluster = np.einsum("aq,aij->qij", precoder.coefficients, mats)
    h = per_cluster[0]
    gram = h.conj().T @ h
    if np.linalg.cond(gram) > 1.0 / SINGULAR_EPS:
        raise SingularChannelError(-1, 0.0)
    gram_inv = np.linalg.inv(gram)
    g = gram_inv @ h.conj().T
    inter = np.zeros(nm)
    for q in range(1, precoder.n_clusters):
        omega = g @ per_cluster[q]
        inter += power.cluster_snr[q] * np.sum(np.abs(omega) ** 2, axis=1)
    noise = np.real(np.diag(gram_inv))
    return power.hm_snr[0] / (power.lm_total(0) + inter + noise)


def lm_gain_terms(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry, precoder: Precoder,
                  subchannel: int, eps: float = SINGULAR_EPS) -> tuple[float, np.ndarray]:
    """``|H_u[m]|^2`` and the inter-cluster gains ``|sum_a p_{a,q} H_{a,u}[m]|^2``."""
    g = tf_gains(grid, paths, geom)[:, subchannel]
    per_cluster = precoder.coefficients.T @ g
    check_nonsingular(per_cluster[:1], eps)
    return float(np.abs(per_cluster[0]) ** 2), np.abs(per_cluster[1:]) ** 2


def lm_sinr(grid: OtfsGrid, paths: PathSet, geom: UpaGeometry, precoder: Precoder,
            power: PowerAllocation, user_index: int, eps: float = SINGULAR_EPS) -> SinrComponents:
    """One-tap SINR of LM user ``u`` (1-based) on subchannel ``u - 1``.

    The HM signal is taken as already cancelled.
    """
    if not 1 <= user_index <= grid.n_delay:
        raise ValueError("LM user index must lie in 1..M")
    own, inter = lm_gain_terms(grid, paths, geom, precoder, user_index - 1, eps)
    return SinrComponents(float(power.lm_snr_each[0] * own), 0.0,
                          tuple(float(x) for x in power.cluster_snr[1:] * inter), 1.0)
