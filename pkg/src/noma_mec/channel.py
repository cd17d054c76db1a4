"""Multi-antenna Rayleigh-fading uplink channels.

Channels are noise-normalized at draw time: every vector is divided by
``sqrt(N0 * B)`` so the receiver-side noise has unit power and none of the
rate formulas in :mod:`noma_mec.rate_region` need to carry a noise term.
All dB/dBm quantities are converted to linear scale exactly once, when the
:class:`PathLossModel` is constructed.

Randomness comes from numpy's PCG64 generator.  Monte Carlo code should use
:func:`trial_rng` to derive one independent substream per trial (via
``SeedSequence`` spawn keys), which makes every trial reproducible in
isolation and safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RngLike = "int | np.random.SeedSequence | np.random.Generator"


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed, a SeedSequence, or a Generator to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible substream for one Monte Carlo trial.

    ``trial_rng(seed, i, j)`` always returns the same stream, and streams
    with different keys are statistically independent.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class PathLossModel:
    """Distance-based average power gain plus the receiver noise floor.

    The average channel power gain at distance ``d`` is
    ``G0 * (d / d0) ** -theta`` and the noise power is ``N0 * B``; both are
    kept in linear scale after construction.
    """

    reference_gain_db: float = -40.0
    reference_distance_m: float = 1.0
    exponent: float = 3.5
    noise_psd_dbm_per_hz: float = -174.0
    bandwidth_hz: float = 2e6

    reference_gain: float = field(init=False, repr=False)
    noise_power_w: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path loss exponent must be positive")
        if self.reference_distance_m <= 0:
            raise ValueError("reference distance must be positive")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "reference_gain", 10.0 ** (self.reference_gain_db / 10.0))
        noise_w = 10.0 ** ((self.noise_psd_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz
        object.__setattr__(self, "noise_power_w", noise_w)

    def mean_gain(self, distance_m: float) -> float:
        """Noise-normalized average per-antenna power gain at ``distance_m``."""
        if distance_m <= 0:
            raise ValueError("distance must be positive")
        path = self.reference_gain * (distance_m / self.reference_distance_m) ** (-self.exponent)
        return path / self.noise_power_w


def draw_channel(model: PathLossModel, distance_m: float, n_antennas: int, rng) -> np.ndarray:
    """Draw one noise-normalized Rayleigh-fading channel vector.

    Entries are i.i.d. circularly symmetric complex Gaussian with per-entry
    power ``model.mean_gain(distance_m)``, i.e. ``E[||h||^2]`` equals
    ``n_antennas * G0 * (d/d0)**-theta / (N0 * B)``.  Deterministic given
    the seed.
    """
    gen = as_generator(rng)
    raw = (gen.standard_normal(n_antennas) + 1j * gen.standard_normal(n_antennas)) / np.sqrt(2.0)
    return np.sqrt(model.mean_gain(distance_m)) * raw


def draw_channel_matrix(model: PathLossModel, distances_m, n_antennas: int, rng) -> np.ndarray:
    """Stack one channel vector per user (rows = users)."""
    gen = as_generator(rng)
    rows = [draw_channel(model, d, n_antennas, gen) for d in np.asarray(distances_m, dtype=float)]
    return np.asarray(rows)


def save_channel_matrix(path, channels: np.ndarray) -> None:
    """Write channels as a plain text matrix.

    Rows are users; columns interleave the real and imaginary part of each
    antenna entry (2N columns for N antennas), so implementations in other
    languages can consume identical realizations.
    """
    h = np.atleast_2d(np.asarray(channels))
    flat = np.empty((h.shape[0], 2 * h.shape[1]), dtype=float)
    flat[:, 0::2] = h.real
    flat[:, 1::2] = h.imag
    np.savetxt(path, flat, fmt="%.17e")


def load_channel_matrix(path) -> np.ndarray:
    """Inverse of :func:`save_channel_matrix`."""
    flat = np.loadtxt(path, ndmin=2, dtype=float)
    if flat.shape[1] % 2 != 0:
        raise ValueError("channel file must have an even number of columns (Re/Im pairs)")
    return flat[:, 0::2] + 1j * flat[:, 1::2]
