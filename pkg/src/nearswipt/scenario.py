"""
System configuration, base-station array geometry and user placement.

Coordinate convention
---------------------
The base-station array is a uniform planar array in the ``z = 0`` plane,
centred at the origin and mounted on the ceiling. Its broadside points
straight down (``-z``). ``rows`` elements run along ``x`` and ``cols``
elements along ``y``.

A user direction is given by an azimuth ``phi`` and an elevation
``theta``, both measured from broadside and both in ``[-pi/2, pi/2]``::

    u(phi, theta) = (sin(phi) cos(theta), sin(theta), -cos(phi) cos(theta))

Azimuth rotates the direction inside the ``x-z`` plane and elevation tilts
it towards ``y``. Every pair in the square ``[-pi/2, pi/2]^2`` maps to a
direction in the lower half-space, so sampled users are always in front
of the array.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class SystemConfig:
    """Link-level system parameters. Defaults reproduce the smart-factory setup."""

    carrier_frequency: float = 7.5e9  # Hz
    bandwidth: float = 100e6  # Hz
    noise_psd: float = -204.0  # dBW/Hz
    noise_figure: float = 7.0  # dB
    tx_power_total: float = 10.0  # W
    pilot_power: float = 100e-6  # W
    coherence_block_len: int = 10_000  # symbols
    eh_circuit_power: float = 3e-3  # W
    num_id_users: int = 20
    num_eh_users: int = 10
    id_user_antennas: int = 1
    trials: int = 200
    master_seed: int = 0

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise ConfigurationError("carrier_frequency must be positive")
        if not self.bandwidth > 0:
            raise ConfigurationError("bandwidth must be positive")
        if not self.tx_power_total > 0:
            raise ConfigurationError("tx_power_total must be positive")
        if self.pilot_power < 0 or self.eh_circuit_power < 0:
            raise ConfigurationError("powers must be nonnegative")
        for name in ("coherence_block_len", "num_id_users", "num_eh_users",
                     "id_user_antennas", "trials"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")

    def prelog(self, pilot_length: int) -> float:
        """Fraction of the coherence block left for data after ``pilot_length`` pilots."""
        if pilot_length > self.coherence_block_len:
            raise ConfigurationError(
                f"pilot length {pilot_length} exceeds coherence block "
                f"{self.coherence_block_len}")
        return (self.coherence_block_len - pilot_length) / self.coherence_block_len


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Uniform planar array centred at the origin in the ``z = 0`` plane."""

    rows: int
    cols: int
    spacing: float  # m
    wavelength: float  # m
    element_positions: np.ndarray = field(repr=False)  # (rows*cols, 3), m

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    @property
    def aperture_diagonal(self) -> float:
        """Diagonal of the physical aperture, each element filling a ``spacing``-wide cell.

        A lone element has no array aperture and reports 0.
        """
        if self.num_elements == 1:
            return 0.0
        return float(self.spacing * np.hypot(self.rows, self.cols))

    @property
    def key(self) -> Tuple[int, int, float]:
        """Hashable identity in wavelength units (for caches)."""
        return (self.rows, self.cols, round(self.spacing / self.wavelength, 12))


def wavelength_of(carrier_frequency: float) -> float:
    if not carrier_frequency > 0:
        raise ConfigurationError("carrier frequency must be positive")
    return SPEED_OF_LIGHT / carrier_frequency


def planar_grid(rows: int, cols: int, spacing: float,
                center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Element coordinates of a centred ``rows x cols`` grid parallel to ``z = 0``.

    Elements are ordered row-major: index ``m = i * cols + j`` sits at
    ``x = (i - (rows-1)/2) * spacing`` and ``y = (j - (cols-1)/2) * spacing``.
    """
    x = (np.arange(rows) - (rows - 1) / 2) * spacing
    y = (np.arange(cols) - (cols - 1) / 2) * spacing
    xx, yy = np.meshgrid(x, y, indexing="ij")
    pos = np.stack([xx.ravel(), yy.ravel(), np.zeros(rows * cols)], axis=1)
    return pos + np.asarray(center, dtype=float)


def build_array_geometry(rows: int, cols: int, carrier_frequency: float,
                         spacing_factor: float = 0.5) -> ArrayGeometry:
    """Build a ``rows x cols`` planar array with spacing ``spacing_factor`` wavelengths."""
    if rows < 1 or cols < 1:
        raise ConfigurationError("rows and cols must be at least 1")
    if not spacing_factor > 0:
        raise ConfigurationError("spacing_factor must be positive")
    lam = wavelength_of(carrier_frequency)
    spacing = spacing_factor * lam
    return ArrayGeometry(rows, cols, spacing, lam, planar_grid(rows, cols, spacing))


def fraunhofer_distance(geometry: ArrayGeometry) -> float:
    """Near-/far-field boundary ``2 D^2 / lambda`` for aperture diagonal ``D``."""
    return 2.0 * geometry.aperture_diagonal ** 2 / geometry.wavelength


def noise_power(config: SystemConfig) -> float:
    """Receiver noise power in watts."""
    db = config.noise_psd + 10.0 * np.log10(config.bandwidth) + config.noise_figure
    return float(10.0 ** (db / 10.0))


@dataclass(frozen=True)
class UserPlacement:
    """Sampling domain for user positions (distances in m, angles in rad).

    When ``cone_half_angle`` is set it replaces both angular ranges with
    ``[-cone_half_angle, cone_half_angle]``.
    """

    distance_range: Tuple[float, float] = (1.5, 25.0)
    azimuth_range: Tuple[float, float] = (-np.pi / 2, np.pi / 2)
    elevation_range: Tuple[float, float] = (-np.pi / 2, np.pi / 2)
    cone_half_angle: Optional[float] = None

    def __post_init__(self):
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ConfigurationError(f"invalid distance range {self.distance_range}")
        for name in ("azimuth_range", "elevation_range"):
            lo, hi = getattr(self, name)
            if not -np.pi / 2 - 1e-12 <= lo <= hi <= np.pi / 2 + 1e-12:
                raise ConfigurationError(f"invalid {name} {(lo, hi)}")
        if self.cone_half_angle is not None and not 0 <= self.cone_half_angle <= np.pi / 2:
            raise ConfigurationError("cone_half_angle must lie in [0, pi/2]")

    @property
    def angle_ranges(self):
        if self.cone_half_angle is not None:
            c = self.cone_half_angle
            return (-c, c), (-c, c)
        return self.azimuth_range, self.elevation_range


def direction_vector(azimuth, elevation) -> np.ndarray:
    """Unit vector(s) from the array centre towards ``(azimuth, elevation)``."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    return np.stack([np.sin(az) * np.cos(el),
                     np.sin(el) * np.ones_like(az),
                     -np.cos(az) * np.cos(el)], axis=-1)


def spherical_to_position(distance, azimuth, elevation) -> np.ndarray:
    return np.asarray(distance, dtype=float)[..., None] * direction_vector(azimuth, elevation)


def position_to_spherical(position):
    """Inverse of :func:`spherical_to_position`: returns ``(distance, azimuth, elevation)``."""
    q = np.asarray(position, dtype=float)
    d = np.linalg.norm(q, axis=-1)
    el = np.arcsin(np.clip(q[..., 1] / d, -1.0, 1.0))
    az = np.arctan2(q[..., 0], -q[..., 2])
    return d, az, el


def sample_user_positions(placement: UserPlacement, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` independent user positions, shape ``(count, 3)``.

    Distance, azimuth and elevation are each uniform over their ranges.
    Draws are taken user by user so the first ``n`` positions do not
    depend on ``count``.
    """
    if count < 0:
        raise ConfigurationError("count must be nonnegative")
    (a_lo, a_hi), (e_lo, e_hi) = placement.angle_ranges
    d_lo, d_hi = placement.distance_range
    u = rng.random((count, 3))
    d = d_lo + (d_hi - d_lo) * u[:, 0]
    az = a_lo + (a_hi - a_lo) * u[:, 1]
    el = e_lo + (e_hi - e_lo) * u[:, 2]
    pos = spherical_to_position(d, az, el).reshape(count, 3)
    # elevation +-pi/2 puts a user in the array plane; keep it in front
    pos[:, 2] = np.minimum(pos[:, 2], 0.0)
    return pos


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("integer stream tags must be nonnegative")
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def trial_rng(master_seed: int, trial_index: int, *tags) -> np.random.Generator:
    """Counter-based generator keyed by ``(master_seed, trial_index, *tags)``.

    Streams for different keys are statistically independent and do not
    depend on how many trials a campaign runs.
    """
    seq = np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(int(trial_index),) + tuple(_tag_to_int(t) for t in tags))
    return np.random.Generator(np.random.Philox(seq))
