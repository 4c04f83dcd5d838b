"""
Uplink pilot transmission, least-squares and parametric maximum-likelihood
channel estimation.

The ML estimator fits a pure line-of-sight spherical-wave model with three
unknowns (distance, azimuth, elevation) by exhaustive grid search followed by
an optional golden-section search along each coordinate and a joint Powell
polish. The grid stage runs in
float32 over blocks of angle cells, one distance at a time; the winning cell
is then re-scored in float64 together with its neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError
from .scenario import ArrayGeometry, direction_vector

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PilotConfig:
    """Orthogonal pilot book of length ``pilot_length`` sent with ``pilot_power`` watts.

    ``assignment[k]`` is the pilot index of sounding stream ``k``; ``None``
    means stream ``k`` uses pilot ``k``.
    """

    pilot_length: int
    pilot_power: float = 100e-6
    assignment: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.pilot_length < 1:
            raise ConfigurationError("pilot_length must be at least 1")
        if self.pilot_power <= 0:
            raise ConfigurationError("pilot_power must be positive")
        if self.assignment is not None:
            a = self.assignment
            if len(set(a)) != len(a) or min(a) < 0 or max(a) >= self.pilot_length:
                raise ConfigurationError("pilot assignment must be distinct indices < pilot_length")

    def indices(self, streams: int) -> np.ndarray:
        if self.assignment is None:
            if streams > self.pilot_length:
                raise ConfigurationError(
                    f"{streams} streams cannot share {self.pilot_length} orthogonal pilots")
            return np.arange(streams)
        if len(self.assignment) != streams:
            raise ConfigurationError("assignment length differs from number of streams")
        return np.asarray(self.assignment)


def pilot_book(pilot_length: int) -> np.ndarray:
    """Unit-modulus DFT pilot book; column ``k`` has squared norm ``pilot_length``."""
    n = np.arange(pilot_length)
    return np.exp(-2j * np.pi * np.outer(n, n) / pilot_length)


@dataclass(frozen=True)
class MlParams:
    distance: float
    azimuth: float
    elevation: float
    gain: complex


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    estimate: np.ndarray
    estimator_tag: str
    ml_params: Optional[MlParams] = None
    error_variance: Optional[float] = None
    grid_evaluations: int = 0


def simulate_uplink_pilot(true_channel, pilot: PilotConfig, noise_power: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Transmit pilots over ``true_channel`` and despread at the BS.

    ``true_channel`` is ``(M,)`` for one stream or ``(M, K)`` with one
    column per stream. Returns despread observations of the same shape,
    ``sqrt(p) tau h_k + n_k`` with ``n_k ~ CN(0, sigma^2 tau I)``.
    """
    H = np.asarray(true_channel, dtype=complex)
    single = H.ndim == 1
    H = H.reshape(H.shape[0], -1)
    tau = pilot.pilot_length
    phi = pilot_book(tau)[:, pilot.indices(H.shape[1])]
    noise = np.sqrt(noise_power / 2) * (rng.standard_normal((H.shape[0], tau))
                                        + 1j * rng.standard_normal((H.shape[0], tau)))
    Y = np.sqrt(pilot.pilot_power) * H @ phi.T + noise
    obs = Y @ phi.conj()
    return obs[:, 0] if single else obs


def ls_estimate(observation, pilot: PilotConfig,
                noise_power: Optional[float] = None) -> ChannelEstimate:
    """Least-squares estimate from a despread observation."""
    scale = np.sqrt(pilot.pilot_power) * pilot.pilot_length
    err = None if noise_power is None else noise_power / (pilot.pilot_power * pilot.pilot_length)
    return ChannelEstimate(np.asarray(observation) / scale, "LS", error_variance=err)


def perfect_estimate(true_channel) -> ChannelEstimate:
    return ChannelEstimate(np.array(true_channel, dtype=complex, copy=True), "PERFECT",
                           error_variance=0.0)


def estimate_mse(estimate: ChannelEstimate, true_channel) -> float:
    """Squared error ``||h_hat - h||^2``."""
    h = np.asarray(true_channel)
    if estimate.estimate.shape != h.shape:
        raise ValueError(f"shape mismatch {estimate.estimate.shape} vs {h.shape}")
    return float(np.sum(np.abs(estimate.estimate - h) ** 2))


# ---------------------------------------------------------------- ML estimator


@dataclass(frozen=True)
class MlGridSpec:
    """Search grid: log-spaced distances, uniformly spaced angles."""

    distance_points: int = 50
    distance_range: Tuple[float, float] = (1.5, 25.0)
    azimuth_points: int = 64
    azimuth_range: Tuple[float, float] = (-np.pi / 2, np.pi / 2)
    elevation_points: int = 64
    elevation_range: Tuple[float, float] = (-np.pi / 2, np.pi / 2)
    refine: bool = True
    refine_sweeps: int = 1
    polish: bool = True

    def __post_init__(self):
        for name in ("distance_points", "azimuth_points", "elevation_points"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if not 0 < self.distance_range[0] <= self.distance_range[1]:
            raise ConfigurationError("invalid ML distance range")

    def axes(self):
        d = np.geomspace(self.distance_range[0], self.distance_range[1], self.distance_points)
        az = np.linspace(*self.azimuth_range, self.azimuth_points)
        el = np.linspace(*self.elevation_range, self.elevation_points)
        return d, az, el

    @property
    def size(self) -> int:
        return self.distance_points * self.azimuth_points * self.elevation_points


@lru_cache(maxsize=4)
def _angular_projections(key, positions_bytes, num_elements, azimuth, elevation):
    pos = np.frombuffer(positions_bytes).reshape(num_elements, 3)
    az, el = np.meshgrid(np.asarray(azimuth), np.asarray(elevation), indexing="ij")
    u = direction_vector(az.ravel(), el.ravel())
    s = (u @ pos.T).astype(np.float32)
    s.setflags(write=False)
    return s


def _conj_steering(geometry: ArrayGeometry, d: float, az: float, el: float) -> np.ndarray:
    q = d * direction_vector(az, el)
    r = np.linalg.norm(q[None, :] - geometry.element_positions, axis=1)
    return np.exp(2j * np.pi * r / geometry.wavelength)


def _score(geometry, y, params) -> float:
    a_conj = _conj_steering(geometry, *params)
    return float(np.abs(a_conj @ y) ** 2 / geometry.num_elements)


_BLOCK_ENTRIES = 1 << 18  # float32 entries per work buffer, about 1 MB


def _grid_search(Y: np.ndarray, grid: MlGridSpec, geometry: ArrayGeometry):
    """Best grid index ``(di, ai, ei)`` per column of ``Y`` (first index wins ties).

    Angle cells are processed in fixed-size blocks so the working set, and
    with it the cost per cell, does not grow with the grid.
    """
    d_axis, az_axis, el_axis = grid.axes()
    pos = geometry.element_positions
    s_all = _angular_projections(geometry.key + (geometry.wavelength,), pos.tobytes(),
                                 pos.shape[0], tuple(az_axis), tuple(el_axis))
    n_cells, M = s_all.shape
    block = max(16, _BLOCK_ENTRIES // M)
    rho2 = np.sum(pos ** 2, axis=1).astype(np.float32)
    k = np.float32(2 * np.pi / geometry.wavelength)
    U = Y.shape[1]
    cols = np.arange(U)
    Yri = np.concatenate([Y.real, Y.imag], axis=1).astype(np.float32)
    buf = np.empty((min(block, n_cells), M), np.float32)
    C = np.empty_like(buf)
    S = np.empty_like(buf)
    best = np.full(U, -np.inf)
    best_d = np.zeros(U, dtype=int)
    best_j = np.zeros(U, dtype=int)
    for j0 in range(0, n_cells, block):
        s = s_all[j0:j0 + block]
        b, c, sn = buf[:len(s)], C[:len(s)], S[:len(s)]
        for di, d in enumerate(d_axis):
            np.multiply(s, np.float32(-2.0 * d), out=b)
            np.add(b, rho2 + np.float32(d * d), out=b)
            np.maximum(b, 0, out=b)
            np.sqrt(b, out=b)
            np.multiply(b, k, out=b)
            np.cos(b, out=c)
            np.sin(b, out=sn)
            X = c @ Yri
            Z = sn @ Yri
            re = X[:, :U] - Z[:, U:]
            im = X[:, U:] + Z[:, :U]
            score = re * re + im * im
            j = np.argmax(score, axis=0)
            val = score[j, cols]
            j = j + j0
            # blocks are visited out of (di, j) order, so ties compare indices
            better = (val > best) | ((val == best) & ((di < best_d) |
                                                      ((di == best_d) & (j < best_j))))
            best[better] = val[better]
            best_d[better] = di
            best_j[better] = j[better]
    n_el = len(el_axis)
    return [(int(di), int(j // n_el), int(j % n_el)) for di, j in zip(best_d, best_j)]


def _polish_cell(geometry, y, idx, axes):
    """Re-score the winning cell and its neighbours in float64."""
    best_val, best_idx = -np.inf, idx
    ranges = [range(max(i - 1, 0), min(i + 2, len(ax))) for i, ax in zip(idx, axes)]
    for di in ranges[0]:
        for ai in ranges[1]:
            for ei in ranges[2]:
                v = _score(geometry, y, (axes[0][di], axes[1][ai], axes[2][ei]))
                if v > best_val:
                    best_val, best_idx = v, (di, ai, ei)
    return best_idx, best_val


def _golden_max(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _refine(geometry, y, params, value, grid: MlGridSpec, axes):
    """Coordinate-wise golden-section search within one grid step of ``params``,
    optionally followed by a joint Powell polish (coordinates are coupled in
    the near field, so per-axis line searches alone converge slowly)."""
    params = list(params)
    steps = []
    for ax in axes:
        steps.append(np.diff(ax).max() if len(ax) > 1 else 0.0)
    # distance is searched in log-domain where the grid is uniform
    log_step = np.log(axes[0][1] / axes[0][0]) if len(axes[0]) > 1 else 0.0
    bounds = [grid.distance_range, grid.azimuth_range, grid.elevation_range]
    for _ in range(grid.refine_sweeps):
        for dim in range(3):
            if steps[dim] == 0.0:
                continue

            def f(x, dim=dim):
                p = list(params)
                p[dim] = np.exp(x) if dim == 0 else x
                return _score(geometry, y, p)

            if dim == 0:
                x0 = np.log(params[0])
                lo = max(x0 - log_step, np.log(bounds[0][0]))
                hi = min(x0 + log_step, np.log(bounds[0][1]))
                tol = 1e-7
            else:
                x0 = params[dim]
                lo = max(x0 - steps[dim], bounds[dim][0])
                hi = min(x0 + steps[dim], bounds[dim][1])
                tol = 1e-8
            x, v = _golden_max(f, lo, hi, tol)
            if v > value:
                value = v
                params[dim] = np.exp(x) if dim == 0 else x
    if grid.polish:
        # scipy's bounded Powell ignores ``direc``; search unbounded and keep
        # the result only if it scores higher
        x0 = np.array([np.log(params[0]), params[1], params[2]])
        direc = np.diag([max(log_step, 1e-3), max(steps[1], 1e-3), max(steps[2], 1e-3)])
        res = minimize(lambda x: -_score(geometry, y, (np.exp(x[0]), x[1], x[2])), x0,
                       method="Powell", options=dict(xtol=1e-6, ftol=1e-14, direc=direc))
        if -res.fun > value:
            value = -res.fun
            params = [np.exp(res.x[0]), res.x[1], res.x[2]]
    return tuple(params), value


def ml_estimate_many(observations, pilot: PilotConfig, grid: MlGridSpec,
                     geometry: ArrayGeometry) -> List[ChannelEstimate]:
    """ML estimates for every column of ``observations`` (``(M,)`` or ``(M, U)``).

    The grid stage is shared across columns, so estimating many users costs
    little more than one.
    """
    Y = np.asarray(observations, dtype=complex)
    Y = Y.reshape(Y.shape[0], -1)
    if Y.shape[0] != geometry.num_elements:
        raise ValueError("observation length differs from number of array elements")
    axes = grid.axes()
    cells = _grid_search(Y, grid, geometry)
    scale = np.sqrt(pilot.pilot_power) * pilot.pilot_length
    out = []
    for u, idx in enumerate(cells):
        y = Y[:, u]
        idx, val = _polish_cell(geometry, y, idx, axes)
        params = (axes[0][idx[0]], axes[1][idx[1]], axes[2][idx[2]])
        if grid.refine:
            params, val = _refine(geometry, y, params, val, grid, axes)
        a_conj = _conj_steering(geometry, *params)
        gain = complex(a_conj @ y) / (scale * geometry.num_elements)
        est = gain * a_conj.conj()
        out.append(ChannelEstimate(
            est, "ML", ml_params=MlParams(float(params[0]), float(params[1]),
                                          float(params[2]), gain),
            grid_evaluations=grid.size * geometry.num_elements))
    return out


def ml_estimate(observation, pilot: PilotConfig, grid: MlGridSpec,
                geometry: ArrayGeometry) -> ChannelEstimate:
    """Parametric LOS maximum-likelihood estimate from one despread observation."""
    return ml_estimate_many(np.asarray(observation).reshape(-1, 1), pilot, grid, geometry)[0]


def ml_grid_operation_count(grid: MlGridSpec, num_elements: int) -> int:
    """Steering entries generated by the grid stage: ``D * A * E * M``."""
    return grid.size * num_elements
