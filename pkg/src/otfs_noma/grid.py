"""OTFS frame geometry and the delay-Doppler / time-frequency transforms.

Two scalings coexist here on purpose:

* :func:`isfft` / :func:`sfft` act on frames and carry the ``1/(NM)`` factor
  on the DD -> TF direction, so ``||isfft(x)||^2 = ||x||^2 / (NM)``.
* :func:`psi_matrix` / :func:`psi_apply` are unitary and are what the
  detection math uses.

The two differ by a scalar only.

Vectors use Doppler-fastest order: element ``k + N*l`` holds frame ``[k, l]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_PSI_SIZE = 2**16


@dataclass(frozen=True)
class OtfsGrid:
    """N Doppler bins by M delay bins with subcarrier spacing ``1/T``."""

    n_doppler: int = 16
    n_delay: int = 16
    subcarrier_spacing: float = 15e3
    symbol_duration: float | None = None

    def __post_init__(self):
        if int(self.n_doppler) != self.n_doppler or self.n_doppler < 1:
            raise ValueError(f"n_doppler must be a positive integer, got {self.n_doppler}")
        if int(self.n_delay) != self.n_delay or self.n_delay < 1:
            raise ValueError(f"n_delay must be a positive integer, got {self.n_delay}")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.symbol_duration is None:
            object.__setattr__(self, "symbol_duration", 1.0 / self.subcarrier_spacing)
        elif not np.isclose(self.symbol_duration * self.subcarrier_spacing, 1.0,
                            rtol=1e-12, atol=0.0):
            raise ValueError("symbol_duration * subcarrier_spacing must equal 1")

    @property
    def size(self) -> int:
        return self.n_doppler * self.n_delay

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_doppler, self.n_delay)

    @property
    def frame_duration(self) -> float:
        return self.n_doppler * self.symbol_duration

    @property
    def bandwidth(self) -> float:
        return self.n_delay * self.subcarrier_spacing


def _frozen(symbols, grid: OtfsGrid) -> np.ndarray:
    arr = np.array(symbols, dtype=np.complex128)
    if arr.shape != grid.shape:
        raise ValueError(f"frame shape {arr.shape} does not match grid {grid.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DdFrame:
    """Delay-Doppler symbols indexed ``[k, l]`` (Doppler, delay)."""

    grid: OtfsGrid
    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "symbols", _frozen(self.symbols, self.grid))


@dataclass(frozen=True)
class TfFrame:
    """Time-frequency symbols indexed ``[n, m]`` (time slot, subchannel)."""

    grid: OtfsGrid
    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "symbols", _frozen(self.symbols, self.grid))


def isfft(frame: DdFrame) -> TfFrame:
    """DD -> TF: ``(1/NM) sum_k sum_l x[k,l] exp(j2pi(kn/N - ml/M))``."""
    x = frame.symbols
    # ifft over k supplies exp(+j..)/N; fft over l supplies exp(-j..)
    tf = np.fft.fft(np.fft.ifft(x, axis=0), axis=1) / frame.grid.n_delay
    return TfFrame(frame.grid, tf)


def sfft(frame: TfFrame) -> DdFrame:
    """TF -> DD, the exact inverse of :func:`isfft`."""
    y = frame.symbols
    dd = np.fft.fft(np.fft.ifft(y, axis=1), axis=0) * frame.grid.n_delay
    return DdFrame(frame.grid, dd)


def vectorize(frame: DdFrame) -> np.ndarray:
    """Stack a DD frame so that ``out[k + N*l] = frame[k, l]``."""
    return frame.symbols.reshape(-1, order="F").copy()


def devectorize(vector, grid: OtfsGrid) -> DdFrame:
    vector = np.asarray(vector)
    if vector.shape != (grid.size,):
        raise ValueError(f"expected vector of length {grid.size}, got shape {vector.shape}")
    return DdFrame(grid, vector.reshape(grid.shape, order="F"))


def dft_matrix(n: int) -> np.ndarray:
    """Unitary n-point DFT matrix, ``F[m, k] = exp(-j2pi mk/n) / sqrt(n)``."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def psi_matrix(grid: OtfsGrid) -> np.ndarray:
    """Dense unitary ``Psi`` that diagonalizes every DD channel matrix.

    The N-point DFT acts on the Doppler index and the M-point DFT on the delay
    index. With Doppler-fastest vectorization the delay factor is the outer
    Kronecker factor, i.e. ``np.kron(F_M, F_N)``; for ``N == M`` this is the
    same matrix as ``np.kron(F_N, F_M)``.
    """
    if grid.size > MAX_PSI_SIZE:
        raise ValueError(f"NM = {grid.size} exceeds the dense limit {MAX_PSI_SIZE}")
    return np.kron(dft_matrix(grid.n_delay), dft_matrix(grid.n_doppler))


def psi_apply(vector, grid: OtfsGrid) -> np.ndarray:
    """Matrix-free ``Psi @ vector``."""
    x = np.asarray(vector).reshape(grid.shape, order="F")
    return np.fft.fft2(x, norm="ortho").reshape(-1, order="F")


def psi_apply_h(vector, grid: OtfsGrid) -> np.ndarray:
    """Matrix-free ``Psi^H @ vector``."""
    x = np.asarray(vector).reshape(grid.shape, order="F")
    return np.fft.ifft2(x, norm="ortho").reshape(-1, order="F")
