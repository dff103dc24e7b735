"""LoS channel synthesis and analytic link evaluation.

Convention used throughout the package: a CSI matrix stores the raw channel
vectors h_k as rows (NOT conjugated); every inner product h^H w conjugates h
explicitly at the point of use. Path attenuation follows the inverse-square
law beta = beta0 * (d0 / d)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import ValidationError, check_csi_matrix
from .world import RadioConfig

__all__ = [
    "ClusterSnapshot",
    "steering_vector",
    "channel",
    "channel_batch",
    "cluster_rates",
    "cluster_sum_rate",
    "system_sum_rate",
    "mrt_precoder_single_user",
    "DegenerateGeometryError",
]

_LN2 = float(np.log(2.0))


class DegenerateGeometryError(ValueError):
    """Transmitter and receiver coincide."""


@dataclass
class ClusterSnapshot:
    """One UAV's served-user channel matrix plus bookkeeping."""

    uav_index: int
    user_indices: list[int]
    csi: np.ndarray                  # complex [cluster_size x n_antennas], rows h_k

    def __post_init__(self):
        self.csi = check_csi_matrix(self.csi, name="csi")
        if len(self.user_indices) != self.csi.shape[0]:
            raise ValidationError("user_indices length must match csi rows")

    @property
    def cluster_size(self) -> int:
        return self.csi.shape[0]


def steering_vector(theta: float, n_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """ULA response: element l is exp(j 2 pi spacing_ratio l cos(theta))."""
    if n_antennas < 1:
        raise ValidationError("n_antennas must be >= 1")
    l = np.arange(n_antennas)
    return np.exp(1j * 2.0 * np.pi * spacing_ratio * l * np.cos(theta))


def channel(uav_pos, user_pos, config: RadioConfig, altitude: float | None = None) -> np.ndarray:
    """LoS channel vector sqrt(beta) * a(theta) for one UAV-user link.

    beta = ref_gain * (ref_distance / d)^2 with d the 3-d distance, and
    theta = arccos(H / d) is the elevation angle of departure.
    """
    uav = np.asarray(uav_pos, dtype=np.float64)
    user = np.asarray(user_pos, dtype=np.float64)
    h_alt = float(uav[2]) if altitude is None else float(altitude)
    d = float(np.linalg.norm(uav - user))
    if d <= 0.0:
        raise DegenerateGeometryError("zero UAV-user distance")
    beta = config.ref_gain * (config.ref_distance / d) ** 2
    theta = np.arccos(np.clip(h_alt / d, -1.0, 1.0))
    return np.sqrt(beta) * steering_vector(theta, config.n_antennas, config.spacing_ratio)


def channel_batch(uav_pos, user_positions, config: RadioConfig) -> np.ndarray:
    """Channels from one UAV to many users, stacked as rows."""
    uav = np.asarray(uav_pos, dtype=np.float64)
    users = np.asarray(user_positions, dtype=np.float64)
    if users.size == 0:
        return np.zeros((0, config.n_antennas), dtype=np.complex128)
    d = np.linalg.norm(users - uav[None, :], axis=1)
    if np.any(d <= 0.0):
        raise DegenerateGeometryError("zero UAV-user distance")
    beta = config.ref_gain * (config.ref_distance / d) ** 2
    theta = np.arccos(np.clip(uav[2] / d, -1.0, 1.0))
    l = np.arange(config.n_antennas)
    phases = 2.0 * np.pi * config.spacing_ratio * np.cos(theta)[:, None] * l[None, :]
    return np.sqrt(beta)[:, None] * np.exp(1j * phases)


def cluster_rates(csi: np.ndarray, w: np.ndarray, noise_power: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-user rates (bps/Hz) and SINRs for one cluster.

    Interference is intra-cluster only; clusters of different UAVs occupy
    orthogonal spectrum. Rows of ``csi`` are channels h_k, rows of ``w`` are
    the per-user beams.
    """
    csi = np.asarray(csi, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    if csi.shape != w.shape:
        raise ValidationError(f"csi shape {csi.shape} != precoder shape {w.shape}")
    # gains[k, j] = h_k^H w_j
    gains = np.abs(csi.conj() @ w.T) ** 2
    signal = np.diagonal(gains).copy()
    interference = gains.sum(axis=1) - signal
    sinr = signal / (interference + noise_power)
    return np.log2(1.0 + sinr), sinr


def cluster_sum_rate(csi: np.ndarray, w: np.ndarray, noise_power: float) -> float:
    rates, _ = cluster_rates(csi, w, noise_power)
    return float(rates.sum())


def system_sum_rate(snapshots, precoders, noise_power: float) -> float:
    """Total rate over all clusters; an empty cluster list is 0."""
    total = 0.0
    for snap, w in zip(snapshots, precoders):
        csi = snap.csi if isinstance(snap, ClusterSnapshot) else snap
        total += cluster_sum_rate(csi, w, noise_power)
    return total


def mrt_precoder_single_user(h: np.ndarray, power: float) -> np.ndarray:
    """Matched filter at the given power for one user (rate-optimal for K=1)."""
    norm = np.linalg.norm(h)
    if norm == 0:
        raise ValidationError("zero-norm channel")
    return np.sqrt(power) * h / norm
