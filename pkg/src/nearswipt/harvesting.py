"""
RF-to-DC conversion at energy-harvesting users.

The rectifier follows the normalised logistic model

    dc = (Psi(P) - M * Omega) / (1 - Omega),
    Psi(P) = M / (1 + exp(-a (P - b))),  Omega = 1 / (1 + exp(a b)),

which is zero at zero input, strictly increasing and saturates at ``M``.
Default parameters (M = 24 mW, a = 150 1/W, b = 14 mW) are a common fit
to measured rectifier data and should be treated as a calibration point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError


@dataclass(frozen=True)
class EhModelParams:
    saturation_power: float = 24e-3  # W
    steepness: float = 150.0  # 1/W
    inflection: float = 14e-3  # W
    model: str = "sigmoid"  # or "linear"
    efficiency: float = 0.5  # linear model only

    def __post_init__(self):
        if min(self.saturation_power, self.steepness, self.inflection) <= 0:
            raise ConfigurationError("rectifier parameters must be positive")
        if self.model not in ("sigmoid", "linear"):
            raise ConfigurationError(f"unknown rectifier model {self.model!r}")
        if not 0 < self.efficiency <= 1:
            raise ConfigurationError("efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class HarvestResult:
    rf_input: np.ndarray
    dc_output: np.ndarray
    net: np.ndarray
    clipped_net: np.ndarray


def rf_input_power(eh_channels, data=None, energy=None, include_information: bool = True):
    """Average RF power picked up by each EH user.

    ``eh_channels`` is ``(M,)`` or ``(M, E)``; ``data`` and ``energy`` are
    any objects with ``precoders``/``beams`` and ``powers`` (a
    :class:`~nearswipt.precoding.ZfSolution` and an
    :class:`~nearswipt.precoding.EnergyBeamSet`). Noise is ignored.
    """
    He = np.asarray(eh_channels, dtype=complex)
    single = He.ndim == 1
    He = He.reshape(He.shape[0], -1)
    total = np.zeros(He.shape[1])
    if include_information and data is not None and data.precoders.shape[1]:
        total += (np.abs(He.conj().T @ data.precoders) ** 2) @ data.powers
    if energy is not None and energy.beams.shape[1]:
        total += (np.abs(He.conj().T @ energy.beams) ** 2) @ energy.powers
    return float(total[0]) if single else total


def nonlinear_dc(rf_input, params: EhModelParams = EhModelParams()):
    """DC output (W) for RF input (W)."""
    p = np.asarray(rf_input, dtype=float)
    if params.model == "linear":
        return params.efficiency * p
    M, a, b = params.saturation_power, params.steepness, params.inflection
    omega = expit(-a * b)
    dc = M * (expit(a * (p - b)) - omega) / (1.0 - omega)
    dc = np.clip(dc, 0.0, M)  # rounding can step one ulp outside [0, M]
    return dc if dc.ndim else float(dc)


def net_harvested(dc, circuit_power: float = 3e-3):
    """``(net, clipped_net)`` after subtracting the analog circuit consumption."""
    net = np.asarray(dc, dtype=float) - circuit_power
    clipped = np.maximum(net, 0.0)
    if net.ndim == 0:
        return float(net), float(clipped)
    return net, clipped


def harvest(rf_input, params: EhModelParams = EhModelParams(),
            circuit_power: float = 3e-3) -> HarvestResult:
    rf = np.atleast_1d(np.asarray(rf_input, dtype=float))
    dc = np.atleast_1d(nonlinear_dc(rf, params))
    net, clipped = net_harvested(dc, circuit_power)
    return HarvestResult(rf, dc, np.atleast_1d(net), np.atleast_1d(clipped))


def eh_curve(params: EhModelParams = EhModelParams(), max_input: Optional[float] = None,
             points: int = 201):
    """Sampled input/output curve ``(rf, dc)`` for calibration plots."""
    top = 4 * params.inflection if max_input is None else max_input
    rf = np.linspace(0.0, top, points)
    return rf, nonlinear_dc(rf, params)
