"""
Downlink precoding for ID users and dedicated energy beams.

Multi-user links use zero-forcing with the minimum transmit power meeting
a per-user SE target; whatever is left of the budget feeds energy beams
projected onto the null space of the ID channels. The single multi-antenna
ID link uses SVD precoding with water-filling and places energy beams in
the complement of the active precoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, SingularChannelError

RANK_TOL = 1e-10
DEGENERATE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ZfSolution:
    """Data precoders (unit-norm columns), per-stream powers and leftover budget."""

    precoders: np.ndarray  # (M, K)
    powers: np.ndarray  # (K,)
    feasible: bool
    residual_power: float
    gains: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class EnergyBeamSet:
    beams: np.ndarray  # (M, E)
    powers: np.ndarray  # (E,)
    unused_power: float = 0.0


@dataclass(frozen=True)
class WaterfillingSolution:
    mode_powers: np.ndarray
    water_level: float
    sum_se: float
    active_modes: int


@dataclass(frozen=True, eq=False)
class TradeoffDesign:
    sum_se: float
    waterfilling: WaterfillingSolution
    information: ZfSolution  # active SVD precoders with their mode powers
    energy: EnergyBeamSet
    singular_values: np.ndarray


def _as_matrix(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    return H.reshape(H.shape[0], -1)


def zf_precoders(estimates):
    """Zero-forcing precoders for the columns of ``estimates`` (``(M, K)``).

    Returns ``(W, g)`` with unit-norm columns ``w_k`` and effective gains
    ``g_k = |h_k^H w_k|^2 = 1 / [(H^H H)^-1]_kk``. Raises
    :class:`SingularChannelError` if the smallest singular value falls
    below ``1e-10`` times the largest.
    """
    H = _as_matrix(estimates)
    M, K = H.shape
    if K == 0:
        return np.zeros((M, 0), complex), np.zeros(0)
    if K > M:
        raise SingularChannelError(f"{K} users exceed {M} antennas")
    Q, R = np.linalg.qr(H)
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise SingularChannelError(f"channel condition number {sv[0] / max(sv[-1], 1e-300):.3g}")
    # H = QR  =>  H (H^H H)^-1 = Q R^-H
    Rinv = np.linalg.solve(R, np.eye(K))
    W_raw = Q @ Rinv.conj().T
    diag = np.sum(np.abs(Rinv) ** 2, axis=1)  # [(H^H H)^-1]_kk
    W = W_raw / np.sqrt(diag)
    return W, 1.0 / diag


def condition_number_db(H) -> float:
    """``20 log10(s_max / s_min)`` of the stacked channel matrix."""
    H = _as_matrix(H)
    if H.shape[1] == 0:
        return 0.0
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] == 0:
        return float("inf")
    return float(20 * np.log10(sv[0] / sv[-1]))


def min_se_power_allocation(gains, target_se: float, prelog: float, noise: float,
                            p_total: float):
    """Per-user powers reaching ``target_se`` through a ZF link.

    Returns ``(powers, feasible, residual_power)``. An infeasible
    allocation has ``residual_power = 0``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0):
        raise DomainError("effective gains must be positive")
    if not 0 < prelog <= 1:
        raise DomainError("prelog must lie in (0, 1]")
    powers = (2.0 ** (target_se / prelog) - 1.0) * noise / g
    used = float(powers.sum())
    feasible = used <= p_total
    return powers, feasible, (p_total - used) if feasible else 0.0


def design_zf(id_estimates, target_se: float, prelog: float, noise: float,
              p_total: float) -> ZfSolution:
    W, g = zf_precoders(id_estimates)
    powers, feasible, residual = min_se_power_allocation(g, target_se, prelog, noise, p_total)
    return ZfSolution(W, powers, feasible, residual, g)


def orthonormal_basis(H) -> np.ndarray:
    H = _as_matrix(H)
    if H.shape[1] == 0:
        return H
    Q, _ = np.linalg.qr(H)
    return Q


def project_out(basis: np.ndarray, X) -> np.ndarray:
    """Apply ``I - Q Q^H`` to the columns of ``X`` for orthonormal ``Q``."""
    X = np.asarray(X, dtype=complex)
    if basis.shape[1] == 0:
        return X.copy()
    return X - basis @ (basis.conj().T @ X)


def energy_beams_from_basis(basis: np.ndarray, eh_channels, residual_power: float,
                            split: str = "equal") -> EnergyBeamSet:
    """Energy beams ``P h_e / ||P h_e||`` in the complement of ``basis``.

    ``split`` is ``"equal"`` or ``"proportional"`` (to the projected gain
    ``||P h_e||^2``). Beams whose projection collapses below ``1e-8`` of
    the channel norm get no power; if every beam collapses, the residual is
    reported as ``unused_power``.
    """
    He = _as_matrix(eh_channels)
    M, E = He.shape
    if E == 0:
        return EnergyBeamSet(np.zeros((M, 0), complex), np.zeros(0), float(residual_power))
    P = project_out(basis, He)
    pn = np.linalg.norm(P, axis=0)
    hn = np.linalg.norm(He, axis=0)
    ok = pn >= DEGENERATE_TOL * np.maximum(hn, 1e-300)
    beams = np.zeros_like(P)
    beams[:, ok] = P[:, ok] / pn[ok]
    powers = np.zeros(E)
    if not ok.any():
        return EnergyBeamSet(beams, powers, float(residual_power))
    if split == "equal":
        powers[ok] = residual_power / ok.sum()
    elif split == "proportional":
        w = pn[ok] ** 2
        powers[ok] = residual_power * w / w.sum()
    else:
        raise ValueError(f"unknown power split {split!r}")
    return EnergyBeamSet(beams, powers, 0.0)


def nullspace_energy_beams(id_estimates, eh_estimates, residual_power: float,
                           split: str = "equal") -> EnergyBeamSet:
    """Energy beams orthogonal to every ID channel estimate."""
    return energy_beams_from_basis(orthonormal_basis(id_estimates) if id_estimates is not None
                                   else np.zeros((_as_matrix(eh_estimates).shape[0], 0)),
                                   eh_estimates, residual_power, split)


def realized_se(true_channels, zf: ZfSolution, energy: Optional[EnergyBeamSet],
                noise: float, prelog: float) -> np.ndarray:
    """Per-user SE of the ZF link evaluated on the true channels."""
    H = _as_matrix(true_channels)
    G = np.abs(H.conj().T @ zf.precoders) ** 2 * zf.powers[None, :]
    signal = np.diag(G).copy()
    interference = G.sum(axis=1) - signal
    if energy is not None and energy.beams.shape[1]:
        interference += (np.abs(H.conj().T @ energy.beams) ** 2) @ energy.powers
    return prelog * np.log2(1.0 + signal / (interference + noise))


def waterfill(singular_values, allocated_power: float, noise: float) -> WaterfillingSolution:
    """Capacity-maximising power split over eigenmodes with gains ``s_i^2 / noise``."""
    s = np.asarray(singular_values, dtype=float)
    if np.any(s < 0):
        raise DomainError("singular values must be nonnegative")
    if allocated_power < 0:
        raise DomainError("allocated power must be nonnegative")
    powers = np.zeros(len(s))
    pos = s > 0
    if not pos.any() or allocated_power == 0:
        return WaterfillingSolution(powers, 0.0, 0.0, 0)
    order = np.argsort(-s[pos], kind="stable")
    idx = np.flatnonzero(pos)[order]
    floors = noise / s[idx] ** 2  # ascending
    level = 0.0
    n = len(idx)
    for k in range(n, 0, -1):
        level = (allocated_power + floors[:k].sum()) / k
        if level > floors[k - 1]:
            n = k
            break
    # written via floor differences so huge floors do not cancel away the power
    act = floors[:n]
    powers[idx[:n]] = (allocated_power + (act.sum() - n * act)) / n
    sum_se = float(np.sum(np.log2(1.0 + powers * s ** 2 / noise)))
    return WaterfillingSolution(powers, float(level), sum_se, int(n))


def mimo_tradeoff_design(id_channel, eh_channels, rho: float, p_total: float, noise: float,
                         split: str = "equal") -> TradeoffDesign:
    """Split ``p_total`` between one multi-antenna ID user (share ``rho``) and energy beams.

    ``id_channel`` is ``(M, N)``: column ``n`` is the channel to user
    antenna ``n``. The downlink matrix ``H^H = U S V^H`` is precoded with
    the columns of ``V``; energy beams live in the complement of the
    active ones.
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [0, 1]")
    H = _as_matrix(id_channel)
    V, s, _ = np.linalg.svd(H, full_matrices=False)  # H = V S U^H
    wf = waterfill(s, rho * p_total, noise)
    active = wf.mode_powers > 0
    V_act = V[:, active]
    info = ZfSolution(V_act, wf.mode_powers[active], True, (1.0 - rho) * p_total)
    energy = energy_beams_from_basis(V_act, eh_channels, (1.0 - rho) * p_total, split)
    return TradeoffDesign(wf.sum_se, wf, info, energy, s)
