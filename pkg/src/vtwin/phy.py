"""Beam codebook, link budget, and exact SINR evaluation.

Powers are linear watts internally; dB and dBm appear only at the interfaces.
The gain tensor G[u, b, w] = |h_{u,b}^H f_w|^2 is the only channel summary the
resource manager needs: with it, the SINR of user u served by RSU b under a
global beam state w is exact, interference included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

THERMAL_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class LinkBudget:
    p_tx_dbm: float = 44.0
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 6.0
    gamma_min_db: float = -6.0
    carrier_hz: float = 5.875e9

    @property
    def p_tx_w(self) -> float:
        return 10.0 ** ((self.p_tx_dbm - 30.0) / 10.0)

    @property
    def noise_w(self) -> float:
        return 10.0 ** ((noise_power_dbm(self.bandwidth_hz, self.noise_figure_db)
                         - 30.0) / 10.0)

    @property
    def gamma_min_linear(self) -> float:
        return 10.0 ** (self.gamma_min_db / 10.0)


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power over a bandwidth, in dBm."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return THERMAL_NOISE_DBM_HZ + 10.0 * np.log10(bandwidth_hz) + noise_figure_db


def dft_codebook(n_tx: int, n_beams: int) -> np.ndarray:
    """Azimuth DFT codebook, one unit-norm beam per row, shape (w, n_tx).

    Beam w points at sin(theta) = -1 + (2w + 1) / n_beams relative to
    broadside; for n_beams == n_tx the rows are pairwise orthogonal.
    """
    if n_tx < 1 or n_beams < 1:
        raise ValueError("n_tx and n_beams must be >= 1")
    n = np.arange(n_tx)
    sines = -1.0 + (2.0 * np.arange(n_beams) + 1.0) / n_beams
    phases = -1j * np.pi * np.outer(sines, n)
    return np.exp(phases) / np.sqrt(n_tx)


def beam_gain(h: np.ndarray, f: np.ndarray) -> float:
    """|h^H f|^2 for one channel vector and one beamforming vector."""
    h = np.asarray(h)
    f = np.asarray(f)
    if h.shape != f.shape or h.ndim != 1:
        raise DimensionMismatch(f"shape mismatch: h {h.shape} vs f {f.shape}")
    return float(np.abs(np.vdot(h, f)) ** 2)


def gain_tensor(channels: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """G[u, b, w] from stacked channel vectors (u, b, n_tx) and a codebook."""
    channels = np.asarray(channels)
    codebook = np.asarray(codebook)
    if channels.ndim != 3 or codebook.ndim != 2 \
            or channels.shape[2] != codebook.shape[1]:
        raise DimensionMismatch(
            f"channels {channels.shape} incompatible with codebook {codebook.shape}")
    return np.abs(np.einsum("ubn,wn->ubw", channels.conj(), codebook)) ** 2


def sinr_linear(gains: np.ndarray, beams: np.ndarray, p_tx_w: float,
                noise_w: float) -> np.ndarray:
    """Exact SINR of every (user, serving RSU) pair under a global beam state.

    gains is G[u, b, w]; beams[b] is the beam index active at RSU b.  Every
    RSU transmits continuously, so the interference at user u from RSU j is
    p_tx * G[u, j, beams[j]].
    """
    gains = np.asarray(gains, dtype=float)
    beams = np.asarray(beams, dtype=np.int64)
    n_u, n_b, n_w = gains.shape
    if beams.shape != (n_b,):
        raise DimensionMismatch(f"beam state has shape {beams.shape}, want ({n_b},)")
    if np.any(beams < 0) or np.any(beams >= n_w):
        raise ValueError("beam index out of range")
    rx_power = p_tx_w * gains[:, np.arange(n_b), beams]  # (u, b)
    total = rx_power.sum(axis=1, keepdims=True)
    # Subtract before adding noise: total and rx_power are ~14 orders of
    # magnitude above the noise floor, so (noise + total) - rx would round
    # the noise term away entirely.
    interference = total - rx_power
    return rx_power / (noise_w + interference)


def sinr_db(gains: np.ndarray, beams: np.ndarray, budget: LinkBudget) -> np.ndarray:
    lin = sinr_linear(gains, beams, budget.p_tx_w, budget.noise_w)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(lin)
