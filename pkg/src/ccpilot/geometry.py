"""UE deployment, sector arrays and one-ring channels.

Each UE sees ``S`` co-located ULAs. The local angle used both for the array
response and for the sector antenna pattern is the global azimuth minus the
sector boresight, wrapped into (-pi, pi]. Per-sector path gains and angles
are independent, so every UE covariance is block diagonal with ``S`` blocks
of size ``M x M``; covariances are therefore stored as ``(S, M, M)`` stacks
(``(N, S, M, M)`` for a whole deployment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag, toeplitz

from .config import SystemConfig

SQRT3 = math.sqrt(3.0)


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


@dataclass(frozen=True)
class SectorArray:
    boresight: float
    n_antennas: int
    spacing: float


def sector_arrays(config: SystemConfig) -> list[SectorArray]:
    """S arrays with boresights 2*pi/S apart, the first pointing north."""
    S = config.n_sectors
    return [SectorArray(wrap_angle(np.pi / 2 + 2 * np.pi * s / S),
                        config.antennas_per_sector, config.antenna_spacing)
            for s in range(S)]


def boresights(config: SystemConfig) -> np.ndarray:
    return np.array([a.boresight for a in sector_arrays(config)])


@dataclass(frozen=True)
class Ue:
    id: int
    position: tuple[float, float]
    distance: float
    mean_angle: float
    sector_offsets: tuple[float, ...]


def make_ue(ue_id: int, x: float, y: float, config: SystemConfig) -> Ue:
    angle = math.atan2(y, x)
    offsets = tuple(float(o) for o in wrap_angle(angle - boresights(config)))
    return Ue(ue_id, (float(x), float(y)), math.hypot(x, y), angle, offsets)


def deploy_ues(config: SystemConfig, rng: np.random.Generator) -> list[Ue]:
    """Drop ``n_ues`` UEs uniformly over the square cell centred on the BS.

    Draws closer than ``min_bs_distance`` are rejected and redrawn.
    """
    half = config.cell_side / 2
    points = np.empty((0, 2))
    while len(points) < config.n_ues:
        need = config.n_ues - len(points)
        draw = rng.uniform(-half, half, size=(need, 2))
        keep = np.hypot(draw[:, 0], draw[:, 1]) >= config.min_bs_distance
        points = np.vstack([points, draw[keep]])
    return [make_ue(i, x, y, config) for i, (x, y) in enumerate(points)]


def ue_arrays(ues: Sequence[Ue]) -> tuple[np.ndarray, np.ndarray]:
    """Distances ``(N,)`` and per-sector offsets ``(N, S)``."""
    d = np.array([u.distance for u in ues])
    offsets = np.array([u.sector_offsets for u in ues])
    return d, offsets


def array_response(theta, n_antennas: int, spacing: float) -> np.ndarray:
    """ULA response ``exp(-j 2 pi m spacing cos(theta))``, m = 0..M-1.

    ``theta`` may be an array; the antenna index is appended as last axis.
    """
    m = np.arange(n_antennas)
    phase = -2j * np.pi * spacing * np.multiply.outer(np.cos(theta), m)
    return np.exp(phase)


def antenna_gain_db(theta_off, config: SystemConfig):
    """Sector antenna pattern in dB; ``theta_off`` is measured from boresight."""
    theta_off = wrap_angle(theta_off)
    att = np.minimum(12.0 * (np.asarray(theta_off) / config.beamwidth_3db) ** 2,
                     config.atten_max_db)
    return config.gain_max_db - att


def path_gain(distance, gain_db, wavelength: float):
    """Free-space path gain including the antenna gain (linear scale)."""
    return 10.0 ** (np.asarray(gain_db) / 10.0) * (wavelength / (4 * np.pi * np.asarray(distance))) ** 2


def aoa_interval(mean_offset: float, angular_std: float) -> tuple[float, float]:
    half = SQRT3 * angular_std
    return mean_offset - half, mean_offset + half


def _draw_paths(d, offsets, config, rng, size):
    """Angles and weighted gains for paths of shape ``size + (L,)``."""
    L = config.n_paths
    u = rng.random(size + (L,))
    alpha = (rng.standard_normal(size + (L,)) + 1j * rng.standard_normal(size + (L,))) / math.sqrt(2)
    theta = offsets[..., None] + SQRT3 * config.angular_std * (2 * u - 1)
    beta = path_gain(d[..., None], antenna_gain_db(theta, config), config.wavelength)
    return theta, np.sqrt(beta / L) * alpha


def draw_channel(ue: Ue, sector: int, config: SystemConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """One realization of the M-element channel of ``ue`` at one sector."""
    d = np.array(ue.distance)
    off = np.array(ue.sector_offsets[sector])
    theta, weights = _draw_paths(d, off, config, rng, ())
    resp = array_response(wrap_angle(theta), config.antennas_per_sector, config.antenna_spacing)
    return weights @ resp


def draw_channels(ues: Sequence[Ue], config: SystemConfig, rng: np.random.Generator,
                  n_draws: int | None = None, scale: float = 1.0) -> np.ndarray:
    """Compound channels stacked as columns.

    Returns ``(MS, K)``, or ``(n_draws, MS, K)`` when ``n_draws`` is given.
    ``scale`` multiplies the channel power (gain normalization).
    """
    d, offsets = ue_arrays(ues)
    K, S = offsets.shape
    M = config.antennas_per_sector
    d = np.broadcast_to(d[:, None], (K, S))
    size = (K, S) if n_draws is None else (n_draws, K, S)
    theta, weights = _draw_paths(d, offsets, config, rng, size)
    # h_m = sum_l w_l z_l^m with z_l the unit phasor of one antenna step;
    # stepping m avoids materializing the (..., L, M) response array
    z = np.exp(-2j * np.pi * config.antenna_spacing * np.cos(theta))
    h = np.empty(size + (M,), dtype=complex)
    cur = weights
    for m in range(M):
        h[..., m] = cur.sum(axis=-1)
        cur = cur * z
    h *= math.sqrt(scale)
    # (..., K, S, M) -> (..., S*M, K)
    h = h.reshape(h.shape[:-2] + (S * M,))
    return np.swapaxes(h, -1, -2)


def covariance_blocks(ue: Ue, config: SystemConfig) -> np.ndarray:
    """Exact long-term covariance of one UE as ``(S, M, M)`` blocks.

    Midpoint quadrature of E[beta(theta) a(theta) a(theta)^H] over the
    uniform AoA interval. ULA covariances are Hermitian Toeplitz, so only the
    first column is integrated.
    """
    Q = config.quadrature_points
    M = config.antennas_per_sector
    half = SQRT3 * config.angular_std
    nodes = (np.arange(Q) + 0.5) / Q * 2 - 1
    blocks = np.empty((config.n_sectors, M, M), dtype=complex)
    for s, off in enumerate(ue.sector_offsets):
        theta = off + half * nodes
        beta = path_gain(ue.distance, antenna_gain_db(theta, config), config.wavelength)
        col = beta @ array_response(theta, M, config.antenna_spacing) / Q
        blocks[s] = toeplitz(col, col.conj())
    return blocks


def covariance(ue: Ue, config: SystemConfig) -> np.ndarray:
    """Full ``MS x MS`` block-diagonal covariance."""
    return to_full(covariance_blocks(ue, config))


def covariance_set(ues: Sequence[Ue], config: SystemConfig) -> np.ndarray:
    """Block covariances of all UEs, shape ``(N, S, M, M)``."""
    return np.stack([covariance_blocks(u, config) for u in ues])


def to_full(blocks: np.ndarray) -> np.ndarray:
    """Expand ``(S, M, M)`` blocks into the ``MS x MS`` block-diagonal matrix."""
    return block_diag(*blocks)


def gain_normalization(covs: np.ndarray) -> float:
    """Factor making the average per-antenna channel gain equal to one."""
    N, S, M, _ = covs.shape
    traces = np.einsum("nsii->n", covs).real
    return float(S * M / traces.mean())
