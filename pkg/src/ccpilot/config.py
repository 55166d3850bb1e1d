"""System parameters and their validation.

Angles are stored in radians; the YAML loader in :mod:`ccpilot.harness`
accepts ``*_deg`` keys for convenience.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Optional

# Search-size guard for exhaustive pilot assignment.
EXHAUSTIVE_MAX_UES = 12
EXHAUSTIVE_MAX_PILOTS = 6


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemConfig:
    """Cell, array, channel and algorithm parameters.

    Defaults describe the full-size setup: 512 UEs (64 active) in a
    1 km x 1 km square cell, three 64-element half-wavelength ULAs, 200
    paths with 10 degree angular spread and 64 orthogonal pilots.

    ``noise_power`` is relative to ``pilot_power``; with ``normalize_gain``
    the channels are rescaled so that the deployment-average per-antenna
    gain is one, making ``pilot_power / noise_power`` the average received
    SNR per antenna.
    """

    cell_side: float = 1000.0
    min_bs_distance: float = 10.0
    n_ues: int = 512
    n_active: int = 64
    n_sectors: int = 3
    antennas_per_sector: int = 64
    wavelength: float = 0.05
    n_paths: int = 200
    antenna_spacing: float = 0.5
    angular_std: float = math.radians(10.0)
    gain_max_db: float = 0.0
    atten_max_db: float = 30.0
    beamwidth_3db: float = math.radians(65.0)
    pilot_len: int = 64
    pilot_power: float = 1.0
    noise_power: float = 0.1
    data_power: Optional[float] = None
    normalize_gain: bool = True
    eps: float = 1e-4
    xi: float = 1e-4
    knn: int = 15
    max_chart_dim: Optional[int] = None
    fixed_chart_dim: Optional[int] = None
    quadrature_points: int = 256
    seed: int = 0

    def __post_init__(self):
        ints = ("n_ues", "n_active", "n_sectors", "antennas_per_sector",
                "n_paths", "pilot_len", "knn", "quadrature_points")
        for name in ints:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if self.n_active > self.n_ues:
            raise ConfigError("n_active", f"{self.n_active} exceeds n_ues={self.n_ues}")
        if not is_power_of_two(self.pilot_len):
            raise ConfigError("pilot_len", f"{self.pilot_len} is not a power of two")
        for name in ("cell_side", "min_bs_distance", "wavelength",
                     "angular_std", "beamwidth_3db", "pilot_power",
                     "noise_power", "eps", "xi"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(name, f"must be a finite positive number, got {value!r}")
        if self.min_bs_distance >= self.cell_side / 2:
            raise ConfigError("min_bs_distance", "must be well below half the cell side")
        if self.antenna_spacing <= 0:
            raise ConfigError("antenna_spacing", "must be positive")
        if self.atten_max_db < 0:
            raise ConfigError("atten_max_db", "must be nonnegative")
        if self.data_power is not None and self.data_power <= 0:
            raise ConfigError("data_power", "must be positive")
        for name in ("max_chart_dim", "fixed_chart_dim"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, int) or value < 1):
                raise ConfigError(name, "must be a positive integer or null")
        if self.seed < 0:
            raise ConfigError("seed", "must be nonnegative")

    @property
    def n_antennas(self) -> int:
        """Total antennas M*S across all sectors."""
        return self.antennas_per_sector * self.n_sectors

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.pilot_power / self.noise_power)

    @property
    def p_data(self) -> float:
        return self.pilot_power if self.data_power is None else self.data_power

    @property
    def chart_dim_cap(self) -> int:
        if self.max_chart_dim is not None:
            return min(self.max_chart_dim, self.n_ues - 1)
        return max(1, min(self.n_ues - 1, 16))

    def with_snr(self, snr_db: float) -> "SystemConfig":
        return self.replace(noise_power=self.pilot_power / 10.0 ** (snr_db / 10.0))

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_exhaustive_feasible(n_ues: int, pilot_len: int) -> None:
    if n_ues > EXHAUSTIVE_MAX_UES:
        raise ConfigError(
            "n_ues", f"exhaustive search needs n_ues <= {EXHAUSTIVE_MAX_UES}, got {n_ues}")
    if pilot_len > EXHAUSTIVE_MAX_PILOTS:
        raise ConfigError(
            "pilot_len",
            f"exhaustive search needs pilot_len <= {EXHAUSTIVE_MAX_PILOTS}, got {pilot_len}")
