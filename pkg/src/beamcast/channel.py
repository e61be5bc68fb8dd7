"""mmWave ULA channel model: DFT codebook, beamforming gain, optimal beam.

All complex arithmetic lives here; downstream modules only ever see
real-valued features and integer beam labels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class BeamCodebook:
    """M unit-norm beamforming vectors over an N-element half-wavelength ULA."""

    n_antennas: int
    n_beams: int
    vectors: np.ndarray  # [M, N] complex128, rows unit-norm

    def __post_init__(self):
        if self.vectors.shape != (self.n_beams, self.n_antennas):
            raise ShapeError(
                f"codebook vectors shape {self.vectors.shape} != (M={self.n_beams}, N={self.n_antennas})"
            )


@dataclass
class ChannelSnapshot:
    h: np.ndarray  # [N] complex128
    t: int = 0


@dataclass
class RxConfig:
    tx_power: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ConfigError("tx_power must be positive")
        if self.noise_var < 0:
            raise ConfigError("noise_var must be >= 0")


def steering_vector(n_antennas, sin_theta):
    """Unnormalized steering vector: element n = exp(-j*pi*n*sin_theta)."""
    if abs(sin_theta) > 1.0:
        raise ValueError(f"sin_theta must lie in [-1, 1], got {sin_theta}")
    n = np.arange(n_antennas)
    return np.exp(-1j * np.pi * n * sin_theta)


def codebook_grid(n_beams):
    """Uniform sine-space grid: sin_theta_m = -1 + (2m + 1) / M, m = 0..M-1."""
    m = np.arange(n_beams)
    return -1.0 + (2.0 * m + 1.0) / n_beams


def dft_codebook(n_antennas, n_beams, allow_undersampled=False):
    """Oversampled-DFT codebook on the uniform sine grid, unit-norm rows.

    Requires M >= N (candidate beams at least as dense as the critical DFT);
    pass allow_undersampled=True to override.
    """
    if n_antennas < 1 or n_beams < 1:
        raise ConfigError("n_antennas and n_beams must be >= 1")
    if n_beams < n_antennas and not allow_undersampled:
        raise ConfigError(
            f"undersampled codebook (M={n_beams} < N={n_antennas}); "
            "pass allow_undersampled=True to force"
        )
    grid = codebook_grid(n_beams)
    vecs = np.stack(
        [steering_vector(n_antennas, s) / np.sqrt(n_antennas) for s in grid]
    )
    return BeamCodebook(n_antennas=n_antennas, n_beams=n_beams, vectors=vecs)


def bearing_sine(bs_pos, ue_pos, array_axis):
    """Sine of the UE bearing w.r.t. array broadside: the unit BS->UE
    direction projected onto the (unit) array axis."""
    bs = np.asarray(bs_pos, dtype=np.float64)
    ue = np.asarray(ue_pos, dtype=np.float64)
    axis = np.asarray(array_axis, dtype=np.float64)
    d = float(np.linalg.norm(ue - bs))
    if d == 0.0:
        raise ValueError("BS and UE positions coincide")
    axis = axis / np.linalg.norm(axis)
    u = (ue - bs) / d
    return float(np.clip(np.dot(u, axis), -1.0, 1.0)), d


def los_channel(bs_pos, ue_pos, array_axis, n_antennas, ref_gain=1.0, t=0):
    """Deterministic line-of-sight channel h = (ref_gain / d) * a(sin_theta)."""
    sin_theta, d = bearing_sine(bs_pos, ue_pos, array_axis)
    h = (ref_gain / d) * steering_vector(n_antennas, sin_theta)
    return ChannelSnapshot(h=h, t=t)


def _channel_array(h):
    return h.h if isinstance(h, ChannelSnapshot) else np.asarray(h)


def beamforming_gain(h, f):
    """|h^H f|^2 for a channel vector and one beamforming vector."""
    h = _channel_array(h)
    f = np.asarray(f)
    if h.shape != f.shape:
        raise ShapeError(f"dimension mismatch: h {h.shape} vs f {f.shape}")
    return float(np.abs(np.vdot(h, f)) ** 2)


def all_gains(h, codebook):
    """Vector of |h^H f_m|^2 over the whole codebook."""
    h = _channel_array(h)
    if h.shape != (codebook.n_antennas,):
        raise ShapeError(
            f"channel length {h.shape} does not match codebook N={codebook.n_antennas}"
        )
    proj = codebook.vectors @ np.conj(h)
    return np.abs(proj) ** 2


def optimal_beam(h, codebook):
    """Index of the maximal-gain beam; ties break to the lowest index."""
    return int(np.argmax(all_gains(h, codebook)))


def simulate_rx(h, f, s, noise_var, rng):
    """One received sample y = h^H f * s + n with n ~ CN(0, noise_var)."""
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    h = _channel_array(h)
    f = np.asarray(f)
    if h.shape != f.shape:
        raise ShapeError(f"dimension mismatch: h {h.shape} vs f {f.shape}")
    scale = np.sqrt(noise_var / 2.0)
    n = scale * (rng.standard_normal() + 1j * rng.standard_normal())
    return np.vdot(h, f) * s + n
