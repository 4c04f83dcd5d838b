"""
Channel generation: array responses, indoor-factory path loss and
spatially correlated Rician fading.

Responses follow the ``exp(-i 2 pi r / lambda)`` phase convention, so the
planar-wave response toward direction ``u`` is ``exp(+i 2 pi p_m . u / lambda)``
and differs from the spherical-wave response of a distant user only by the
common factor ``exp(-i 2 pi d / lambda)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .errors import DomainError
from .scenario import ArrayGeometry, direction_vector, planar_grid

#: InF-LOS coefficients: PL = A + B log10(d [m]) + C log10(f [GHz])
INF_LOS_COEFFS = (31.84, 21.50, 19.00)


@dataclass(frozen=True)
class FadingModel:
    """Large-scale randomness of a link.

    ``kappa_mean_db = inf`` gives pure line of sight; ``kappa_std_db = 0``
    pins the Rician factor to its mean.
    """

    shadowing_std_db: float = 4.0
    kappa_mean_db: float = 7.0
    kappa_std_db: float = 8.0

    @classmethod
    def los(cls, shadowing_std_db=0.0):
        return cls(shadowing_std_db, np.inf, 0.0)


@dataclass(frozen=True)
class LargeScaleState:
    pathloss_db: float
    shadowing_db: float
    kappa_db: float

    @property
    def beta(self) -> float:
        return float(10.0 ** (-(self.pathloss_db + self.shadowing_db) / 10.0))

    @property
    def kappa(self) -> float:
        return float(10.0 ** (self.kappa_db / 10.0))  # +inf dB -> LOS, -inf dB -> Rayleigh


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Channel between the BS array and one user.

    ``entries`` has shape ``(M,)`` for single-antenna users and ``(M, N)``
    otherwise. ``beta`` is the large-scale power gain baked into it.
    """

    entries: np.ndarray
    user_id: int = 0
    field_model: str = "near"
    beta: float = 1.0

    @property
    def matrix(self) -> np.ndarray:
        """Entries as an ``(M, N)`` array."""
        return self.entries.reshape(self.entries.shape[0], -1)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Spatial correlation ``R`` and a factor ``L`` with ``L L^H = R`` (after clipping)."""

    entries: np.ndarray
    factor: np.ndarray

    @property
    def repaired(self) -> np.ndarray:
        return self.factor @ self.factor.conj().T


def pathloss_indoor_factory(distance, carrier_frequency):
    """Indoor-factory LOS path loss in dB, valid for ``d >= 1 m`` and 0.5-100 GHz."""
    d = np.asarray(distance, dtype=float)
    f_ghz = np.asarray(carrier_frequency, dtype=float) / 1e9
    if np.any(~np.isfinite(d)) or np.any(d < 1.0):
        raise DomainError("path-loss model requires distance >= 1 m")
    if np.any(f_ghz < 0.5) or np.any(f_ghz > 100.0):
        raise DomainError("path-loss model requires 0.5 GHz <= f <= 100 GHz")
    a, b, c = INF_LOS_COEFFS
    pl = a + b * np.log10(d) + c * np.log10(f_ghz)
    return float(pl) if pl.ndim == 0 else pl


def draw_large_scale(distance: float, carrier_frequency: float, fading: FadingModel,
                     rng: np.random.Generator) -> LargeScaleState:
    """Path loss plus one shadowing and one Rician-factor draw.

    Two normals are always consumed so streams stay aligned across fading models.
    """
    z = rng.standard_normal(2)
    kappa_db = np.inf if fading.kappa_mean_db == np.inf else \
        fading.kappa_mean_db + fading.kappa_std_db * z[1]
    return LargeScaleState(pathloss_indoor_factory(distance, carrier_frequency),
                           fading.shadowing_std_db * z[0], float(kappa_db))


def nearfield_response(geometry: ArrayGeometry, position, amplitude_taper: bool = False):
    """Spherical-wave response of a user at ``position``, shape ``(M,)``.

    With ``amplitude_taper`` each entry is additionally scaled by
    ``d_center / d_m`` (free-space amplitude variation across the array).
    """
    q = np.asarray(position, dtype=float)
    r = np.linalg.norm(q[None, :] - geometry.element_positions, axis=1)
    if r.min() < 1e-3:
        raise DomainError("user position coincides with an array element")
    a = np.exp(-2j * np.pi * r / geometry.wavelength)
    if amplitude_taper:
        a = a * (np.linalg.norm(q) / r)
    return a


def nearfield_responses(geometry: ArrayGeometry, positions,
                        amplitude_taper: bool = False) -> np.ndarray:
    """Spherical-wave responses of several single-antenna users, ``(M, K)``."""
    q = np.asarray(positions, dtype=float).reshape(-1, 3)
    r = np.linalg.norm(geometry.element_positions[:, None, :] - q[None, :, :], axis=2)
    if r.size and r.min() < 1e-3:
        raise DomainError("user position coincides with an array element")
    a = np.exp(-2j * np.pi * r / geometry.wavelength)
    if amplitude_taper:
        a = a * (np.linalg.norm(q, axis=1)[None, :] / r)
    return a


def nearfield_mimo_response(geometry: ArrayGeometry, user_elements,
                            amplitude_taper: bool = False) -> np.ndarray:
    """Element-to-element spherical-wave responses for a multi-antenna user, ``(M, N)``."""
    q = np.atleast_2d(np.asarray(user_elements, dtype=float))
    return np.stack([nearfield_response(geometry, qn, amplitude_taper) for qn in q], axis=1)


def farfield_response(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Planar-wave response for a source in direction ``(azimuth, elevation)``, ``(M,)``."""
    u = direction_vector(azimuth, elevation)
    return np.exp(2j * np.pi * (geometry.element_positions @ u) / geometry.wavelength)


def farfield_mimo_response(geometry: ArrayGeometry, user_offsets, azimuth: float,
                           elevation: float) -> np.ndarray:
    """Rank-one planar-wave MIMO response, ``(M, N)``.

    ``user_offsets`` are the user-array element positions relative to the
    user's reference point.
    """
    u = direction_vector(azimuth, elevation)
    q = np.atleast_2d(np.asarray(user_offsets, dtype=float))
    a_bs = farfield_response(geometry, azimuth, elevation)
    a_ue = np.exp(-2j * np.pi * (q @ u) / geometry.wavelength)
    return np.outer(a_bs, a_ue)


def user_array_offsets(num_antennas: int, wavelength: float,
                       spacing_factor: float = 0.5) -> np.ndarray:
    """Offsets of a small user-side planar array parallel to the BS array.

    Uses the most square ``r x c`` factorisation with ``r <= c``
    (1 -> 1x1, 2 -> 1x2, 4 -> 2x2, 8 -> 2x4).
    """
    if num_antennas < 1:
        raise DomainError("a user needs at least one antenna")
    r = int(np.floor(np.sqrt(num_antennas)))
    while num_antennas % r:
        r -= 1
    return planar_grid(r, num_antennas // r, spacing_factor * wavelength)


@lru_cache(maxsize=8)
def _isotropic_correlation(rows: int, cols: int, spacing_wl: float):
    pos = planar_grid(rows, cols, spacing_wl)  # in wavelengths
    diff = pos[:, None, :2] - pos[None, :, :2]
    R = np.sinc(2.0 * np.linalg.norm(diff, axis=-1))
    w, V = np.linalg.eigh(R)
    w = np.where(w > 1e-9 * w.max(), w, 0.0)
    keep = w > 0
    factor = np.ascontiguousarray(V[:, keep] * np.sqrt(w[keep]))
    R.setflags(write=False)
    factor.setflags(write=False)
    return R, factor


def spatial_correlation_isotropic(geometry: ArrayGeometry) -> CorrelationMatrix:
    """3-D isotropic-scattering correlation ``[R]_mn = sinc(2 |p_m - p_n| / lambda)``.

    Cached per geometry (in wavelength units); the returned arrays are read-only.
    """
    R, factor = _isotropic_correlation(*geometry.key)
    return CorrelationMatrix(R, factor)


def _apply_factor(factor: np.ndarray, w: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(factor):
        return factor @ w
    # strided views of a complex array are slow GEMM operands
    return factor @ np.ascontiguousarray(w.real) + 1j * (factor @ np.ascontiguousarray(w.imag))


def _scattered(R: Optional[CorrelationMatrix], M: int, cols: int,
               rng: np.random.Generator) -> np.ndarray:
    rank = M if R is None else R.factor.shape[1]
    w = (rng.standard_normal((cols, rank)) + 1j * rng.standard_normal((cols, rank))) / np.sqrt(2)
    return w.T


def draw_rician_channel(los_response, R: Optional[CorrelationMatrix],
                        large_scale: LargeScaleState, rng: np.random.Generator,
                        user_id: int = 0, field_model: str = "near") -> ChannelMatrix:
    """Correlated Rician channel around ``los_response`` (``(M,)`` or ``(M, N)``).

    Each user-antenna column gets its own independent scattered part.
    ``R = None`` means uncorrelated scattering.
    """
    los = np.asarray(los_response, dtype=complex)
    kappa = large_scale.kappa
    beta = large_scale.beta
    if np.isinf(kappa):
        return ChannelMatrix(np.sqrt(beta) * los, user_id, field_model, beta)
    if kappa < 0:
        raise DomainError("Rician factor must be nonnegative")
    cols = 1 if los.ndim == 1 else los.shape[1]
    w = _scattered(R, los.shape[0], cols, rng)
    nlos = w if R is None else _apply_factor(R.factor, w)
    if los.ndim == 1:
        nlos = nlos[:, 0]
    h = np.sqrt(beta) * (np.sqrt(kappa / (kappa + 1)) * los + np.sqrt(1 / (kappa + 1)) * nlos)
    return ChannelMatrix(h, user_id, field_model, beta)


def draw_rician_channels(los_responses, R: Optional[CorrelationMatrix], large_scale,
                         rngs) -> np.ndarray:
    """Single-antenna channels for many users at once, ``(M, K)``.

    Column ``k`` equals ``draw_rician_channel(los[:, k], R, large_scale[k],
    rngs[k]).entries``; the correlation factor is applied in one product.
    """
    los = np.asarray(los_responses, dtype=complex)
    M, K = los.shape
    beta = np.array([s.beta for s in large_scale])
    kappa = np.array([s.kappa for s in large_scale])
    H = los * np.sqrt(beta)[None, :]
    nl = np.flatnonzero(~np.isinf(kappa))
    if len(nl) == 0:
        return H
    if np.any(kappa[nl] < 0):
        raise DomainError("Rician factor must be nonnegative")
    W = np.concatenate([_scattered(R, M, 1, rngs[k]) for k in nl], axis=1)
    nlos = W if R is None else _apply_factor(R.factor, W)
    kn = kappa[nl]
    H[:, nl] = np.sqrt(beta[nl]) * (np.sqrt(kn / (kn + 1)) * los[:, nl]
                                    + np.sqrt(1 / (kn + 1)) * nlos)
    return H


def scale_to_reference_pathloss(channel: ChannelMatrix, reference_distance: float,
                                carrier_frequency: float) -> ChannelMatrix:
    """Rescale so the large-scale gain equals the shadowing-free path loss at ``reference_distance``."""
    beta_ref = 10.0 ** (-pathloss_indoor_factory(reference_distance, carrier_frequency) / 10.0)
    return replace(channel, entries=channel.entries * np.sqrt(beta_ref / channel.beta),
                   beta=float(beta_ref))


CHANNEL_CSV_HEADER = ["user_id", "field_model", "bs_element", "user_antenna", "real", "imag"]


def dump_channels_csv(channels: Iterable[ChannelMatrix], path) -> None:
    """Write channels to CSV, one row per (user, BS element, user antenna)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHANNEL_CSV_HEADER)
        for ch in channels:
            H = ch.matrix
            for m in range(H.shape[0]):
                for n in range(H.shape[1]):
                    w.writerow([ch.user_id, ch.field_model, m, n,
                                repr(float(H[m, n].real)), repr(float(H[m, n].imag))])
