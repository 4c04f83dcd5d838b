"""
Monte-Carlo campaigns for the four case-study experiments.

``band_sweep``
    Harvested power against the number of ID users for several
    (carrier, array) pairs under LS-estimated Rician channels.
``near_vs_far``
    Spherical- against planar-wave channels for users crowded in a narrow
    broadside cone, all equalised to the same path loss.
``estimator_cdf``
    Distribution of net harvested power when EH channels come from
    perfect CSI, the parametric ML estimator or LS.
``tradeoff``
    One multi-antenna ID user below the array: SE against harvested power
    as the information share ``rho`` of the budget varies.

Every random draw is keyed by ``(master_seed, trial, role, ...)`` and never
by a sweep variable that differs between compared arms, so arms within a
trial see the same users, fading and noise wherever dimensions permit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import (FadingModel, draw_large_scale, draw_rician_channel, draw_rician_channels,
                      farfield_mimo_response, farfield_response, nearfield_mimo_response,
                      nearfield_responses, pathloss_indoor_factory, spatial_correlation_isotropic,
                      user_array_offsets)
from .errors import ConfigurationError, SingularChannelError
from .estimation import MlGridSpec, PilotConfig, ls_estimate, ml_estimate_many, simulate_uplink_pilot
from .harvesting import EhModelParams, harvest, rf_input_power
from .precoding import (condition_number_db, design_zf, mimo_tradeoff_design,
                        nullspace_energy_beams, realized_se)
from .records import ExperimentRecord
from .scenario import (SystemConfig, UserPlacement, build_array_geometry, noise_power,
                       position_to_spherical, sample_user_positions, trial_rng)

EXPERIMENT_IDS = ("band_sweep", "near_vs_far", "estimator_cdf", "tradeoff")
ESTIMATORS = ("PERFECT", "ML", "LS")
FIELD_MODELS = ("near", "far")
CHANNEL_CASES = ("los", "rician")

Band = Tuple[float, int, int]  # (carrier frequency in Hz, rows, cols)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a campaign needs; :func:`default_spec` fills per-experiment defaults.

    Parameters
    ----------
    experiment_id
        One of :data:`EXPERIMENT_IDS`.
    system, placement, fading, harvester, ml_grid
        Model settings. ``system.trials`` and ``system.master_seed`` set the
        campaign size and seed.
    bands
        ``(carrier_frequency, rows, cols)`` triples.
    id_user_counts
        Number of single-antenna ID users at each sweep point.
    estimators
        EH-channel estimators to compare (``PERFECT``, ``ML``, ``LS``).
    id_estimator
        ``"PERFECT"``, ``"LS"`` or ``"same"`` (use the arm's estimator for
        ID channels too).
    field_models
        ``near`` and/or ``far`` channel models.
    reference_distance
        If set, every channel is rescaled to the shadowing-free path loss at
        this distance.
    eh_pilot_length
        Pilot length for EH users when it differs from the ID pilot
        length; ``None`` means one shared book of ``K_ID + K_EH`` pilots.
    id_distance, id_antenna_counts, channel_cases, rician_kappa_db, rho_grid
        Settings of the trade-off experiment.
    """

    experiment_id: str
    system: SystemConfig = SystemConfig()
    placement: UserPlacement = UserPlacement()
    fading: FadingModel = FadingModel()
    harvester: EhModelParams = EhModelParams()
    ml_grid: MlGridSpec = MlGridSpec()
    bands: Tuple[Band, ...] = ((7.5e9, 40, 10),)
    id_user_counts: Tuple[int, ...] = (20,)
    estimators: Tuple[str, ...] = ("LS",)
    id_estimator: str = "same"
    field_models: Tuple[str, ...] = ("near",)
    reference_distance: Optional[float] = None
    eh_pilot_length: Optional[int] = None
    target_se: float = 4.0
    energy_split: str = "equal"
    include_information: bool = True
    amplitude_taper: bool = False
    id_distance: float = 25.0
    id_antenna_counts: Tuple[int, ...] = (1,)
    channel_cases: Tuple[str, ...] = ("los",)
    rician_kappa_db: float = 20.0
    rho_grid: Tuple[float, ...] = (1.0,)
    workers: int = 1

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ConfigurationError(f"unknown experiment {self.experiment_id!r}")
        for name in ("bands", "id_user_counts", "estimators", "field_models",
                     "id_antenna_counts", "channel_cases", "rho_grid"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"{name} must be nonempty")
        for f, rows, cols in self.bands:
            if f <= 0 or rows < 1 or cols < 1:
                raise ConfigurationError(f"invalid band {(f, rows, cols)}")
        if min(self.id_user_counts) < 1 or min(self.id_antenna_counts) < 1:
            raise ConfigurationError("user and antenna counts must be positive")
        _check_members("estimators", self.estimators, ESTIMATORS)
        _check_members("field_models", self.field_models, FIELD_MODELS)
        _check_members("channel_cases", self.channel_cases, CHANNEL_CASES)
        if self.id_estimator not in ("PERFECT", "LS", "same"):
            raise ConfigurationError(f"unknown id_estimator {self.id_estimator!r}")
        if self.id_estimator == "same" and "ML" in self.estimators and \
                self.experiment_id != "estimator_cdf":
            raise ConfigurationError("ML estimation of ID channels is only wired into estimator_cdf")
        if any(not 0.0 <= r <= 1.0 for r in self.rho_grid):
            raise ConfigurationError("rho values must lie in [0, 1]")
        if self.energy_split not in ("equal", "proportional"):
            raise ConfigurationError(f"unknown energy_split {self.energy_split!r}")
        if self.eh_pilot_length is not None and self.eh_pilot_length < self.system.num_eh_users:
            raise ConfigurationError("eh_pilot_length must cover every EH user")
        if self.reference_distance is not None and self.reference_distance < 1.0:
            raise ConfigurationError("reference_distance must be at least 1 m")
        if self.workers < 1:
            raise ConfigurationError("workers must be positive")

    @property
    def trials(self) -> int:
        return self.system.trials

    @property
    def seed(self) -> int:
        return self.system.master_seed


def _check_members(name, values, allowed):
    bad = [v for v in values if v not in allowed]
    if bad:
        raise ConfigurationError(f"{name} contains unknown entries {bad}; allowed {allowed}")


def default_spec(experiment_id: str, **overrides) -> ExperimentSpec:
    """Per-experiment defaults; keyword arguments replace individual fields."""
    if experiment_id == "band_sweep":
        base = dict(system=SystemConfig(num_id_users=40, num_eh_users=10),
                    bands=((3e9, 16, 4), (7.5e9, 40, 10), (15e9, 80, 20), (30e9, 80, 20)),
                    id_user_counts=(10, 20, 30, 40), estimators=("LS",), id_estimator="same")
    elif experiment_id == "near_vs_far":
        base = dict(system=SystemConfig(num_id_users=20, num_eh_users=5),
                    placement=UserPlacement(cone_half_angle=np.deg2rad(5.0)),
                    fading=FadingModel.los(0.0),
                    bands=((7.5e9, 40, 10), (15e9, 80, 20)),
                    id_user_counts=(5, 10, 15, 20), estimators=("PERFECT",),
                    id_estimator="PERFECT", field_models=("near", "far"),
                    reference_distance=25.0)
    elif experiment_id == "estimator_cdf":
        base = dict(system=SystemConfig(num_id_users=20, num_eh_users=5, trials=500),
                    fading=FadingModel(4.0, 27.0, 0.0),
                    id_user_counts=(20,), estimators=ESTIMATORS, id_estimator="PERFECT",
                    eh_pilot_length=5)
    elif experiment_id == "tradeoff":
        base = dict(system=SystemConfig(num_id_users=1, num_eh_users=10),
                    fading=FadingModel.los(0.0), id_user_counts=(1,),
                    estimators=("PERFECT",), id_estimator="PERFECT",
                    field_models=("near", "far"), id_antenna_counts=(1, 2, 4, 8),
                    channel_cases=("los", "rician"),
                    rho_grid=tuple(float(r) for r in np.round(np.linspace(0.05, 1.0, 20), 10)))
    else:
        raise ConfigurationError(f"unknown experiment {experiment_id!r}")
    base.update(overrides)
    return ExperimentSpec(experiment_id=experiment_id, **base)


# --------------------------------------------------------------------------- sweep points

def _freq_label(f: float) -> str:
    return f"{f / 1e9:g}GHz"


def sweep_points(spec: ExperimentSpec) -> List[dict]:
    """Ordered sweep points; each dict holds the record fields identifying the point."""
    pts = []
    eid = spec.experiment_id
    if eid == "tradeoff":
        f, rows, cols = spec.bands[0]
        for case in spec.channel_cases:
            for model in spec.field_models:
                for n in spec.id_antenna_counts:
                    for rho in spec.rho_grid:
                        pts.append(dict(carrier_frequency=f, rows=rows, cols=cols,
                                        num_id_users=1, num_eh_users=spec.system.num_eh_users,
                                        id_antennas=n, field_model=model, estimator="PERFECT",
                                        channel_case=case, rho=float(rho)))
    else:
        case = "los" if spec.fading.kappa_mean_db == math.inf else "rician"
        for f, rows, cols in spec.bands:
            for k in spec.id_user_counts:
                for model in spec.field_models:
                    for est in spec.estimators:
                        pts.append(dict(carrier_frequency=f, rows=rows, cols=cols,
                                        num_id_users=k, num_eh_users=spec.system.num_eh_users,
                                        id_antennas=1, field_model=model, estimator=est,
                                        channel_case=case))
    for p in pts:
        p["point_id"] = point_id(p)
    return pts


def point_id(point: dict) -> str:
    parts = [_freq_label(point["carrier_frequency"]), f"{point['rows']}x{point['cols']}",
             f"K{point['num_id_users']}", point["field_model"], point["estimator"]]
    if point.get("channel_case"):
        parts.append(point["channel_case"])
    if point.get("id_antennas", 1) != 1 or "rho" in point:
        parts.append(f"N{point['id_antennas']}")
    if "rho" in point:
        parts.append(f"rho{point['rho']:g}")
    return "|".join(parts)


# --------------------------------------------------------------------------- shared helpers

@dataclass
class _Band:
    geometry: object
    frequency: float
    correlation: object = None


def _prepare_band(band: Band, fading: FadingModel) -> _Band:
    f, rows, cols = band
    geo = build_array_geometry(rows, cols, f)
    R = None if fading.kappa_mean_db == math.inf else spatial_correlation_isotropic(geo)
    return _Band(geo, f, R)


def _los_columns(band: _Band, positions, model: str, taper: bool) -> np.ndarray:
    if model == "near":
        return nearfield_responses(band.geometry, positions, taper)
    _, az, el = position_to_spherical(positions)
    return np.stack([farfield_response(band.geometry, a, e) for a, e in zip(az, el)], axis=1)


def _user_channels(spec: ExperimentSpec, band: _Band, positions, trial: int, role: str,
                   model: str, fading: Optional[FadingModel] = None) -> np.ndarray:
    """True channels ``(M, K)`` of single-antenna users.

    Large-scale and scattering streams are keyed per user, so the first
    ``k`` columns do not depend on how many users are drawn and both field
    models share the same random draws.
    """
    fading = spec.fading if fading is None else fading
    K = len(positions)
    M = band.geometry.num_elements
    if K == 0:
        return np.zeros((M, 0), complex)
    seed = spec.seed
    d = np.linalg.norm(positions, axis=1)
    states = [draw_large_scale(max(float(dk), 1.0), band.frequency, fading,
                               trial_rng(seed, trial, role, "large", k))
              for k, dk in enumerate(d)]
    if spec.reference_distance is not None:
        pl = pathloss_indoor_factory(spec.reference_distance, band.frequency)
        states = [replace(s, pathloss_db=pl, shadowing_db=0.0) for s in states]
    rngs = [trial_rng(seed, trial, role, "scatter", k) for k in range(K)]
    los = _los_columns(band, positions, model, spec.amplitude_taper)
    return draw_rician_channels(los, band.correlation, states, rngs)


def _positions(spec: ExperimentSpec, trial: int, role: str, count: int) -> np.ndarray:
    return sample_user_positions(spec.placement, count, trial_rng(spec.seed, trial, role, "pos"))


def _fill_multiuser(rec: ExperimentRecord, spec: ExperimentSpec, H_id, H_eh, est_id, est_eh,
                    prelog: float, noise: float) -> None:
    """Run ZF + null-space energy beams on estimates, score on true channels."""
    sysc = spec.system
    rec.cond_db = condition_number_db(est_id)
    try:
        zf = design_zf(est_id, spec.target_se, prelog, noise, sysc.tx_power_total)
    except SingularChannelError as exc:
        rec.feasible, rec.status = False, f"singular: {exc}"
        return
    rec.id_power = float(zf.powers.sum())
    if not zf.feasible:
        rec.feasible, rec.status = False, "infeasible"
        return
    energy = nullspace_energy_beams(est_id, est_eh, zf.residual_power, spec.energy_split)
    rec.energy_power = float(energy.powers.sum())
    se = realized_se(H_id, zf, energy, noise, prelog)
    rf = rf_input_power(H_eh, zf, energy, spec.include_information)
    _fill_harvest(rec, spec, rf)
    rec.id_se = [float(v) for v in se]
    rec.sum_se = float(se.sum())
    rec.min_se = float(se.min())


def _fill_harvest(rec: ExperimentRecord, spec: ExperimentSpec, rf) -> None:
    hv = harvest(rf, spec.harvester, spec.system.eh_circuit_power)
    rec.eh_rf = [float(v) for v in hv.rf_input]
    rec.eh_dc = [float(v) for v in hv.dc_output]
    rec.eh_net = [float(v) for v in hv.net]
    rec.mean_rf = float(hv.rf_input.mean())
    rec.mean_dc = float(hv.dc_output.mean())
    rec.mean_net = float(hv.net.mean())
    rec.mean_clipped_net = float(hv.clipped_net.mean())


def _new_record(spec: ExperimentSpec, point: dict, trial: int) -> ExperimentRecord:
    return ExperimentRecord(experiment_id=spec.experiment_id, trial_index=trial,
                            seed=spec.seed, **point)


def _estimate(name: str, H, obs, pilot: PilotConfig, spec: ExperimentSpec, band: _Band):
    if name == "PERFECT":
        return H
    if name == "LS":
        return ls_estimate(obs, pilot).estimate
    ests = ml_estimate_many(obs, pilot, spec.ml_grid, band.geometry)
    return np.stack([e.estimate for e in ests], axis=1)


# --------------------------------------------------------------------------- per-trial drivers

def _multiuser_trial(spec: ExperimentSpec, trial: int) -> Dict[str, ExperimentRecord]:
    """Shared driver of ``band_sweep``, ``near_vs_far`` and ``estimator_cdf``."""
    sysc = spec.system
    noise = noise_power(sysc)
    E = sysc.num_eh_users
    k_max = max(spec.id_user_counts)
    pos_id = _positions(spec, trial, "id", k_max)
    pos_eh = _positions(spec, trial, "eh", E)
    points = sweep_points(spec)
    out = {}
    for bi, bspec in enumerate(spec.bands):
        band = _prepare_band(bspec, spec.fading)
        for model in spec.field_models:
            H_id_all = _user_channels(spec, band, pos_id, trial, "id", model)
            H_eh = _user_channels(spec, band, pos_eh, trial, "eh", model)
            for K in spec.id_user_counts:
                H_id = H_id_all[:, :K]
                arms = [p for p in points if p["carrier_frequency"] == bspec[0]
                        and (p["rows"], p["cols"]) == bspec[1:] and p["num_id_users"] == K
                        and p["field_model"] == model]
                _run_estimator_arms(spec, band, bi, trial, K, H_id, H_eh, arms, noise, out)
    return out


def _run_estimator_arms(spec, band, bi, trial, K, H_id, H_eh, arms, noise, out):
    sysc = spec.system
    E = H_eh.shape[1]
    need_obs = any(p["estimator"] != "PERFECT" for p in arms) or spec.id_estimator == "LS"
    obs = None
    if spec.eh_pilot_length is None:
        # one shared orthogonal book: ID users on pilots 0..K-1, EH users after
        pilot_id = pilot_eh = PilotConfig(K + E, sysc.pilot_power)
        pilot_len = K + E
        if need_obs:
            y = simulate_uplink_pilot(np.concatenate([H_id, H_eh], axis=1), pilot_id, noise,
                                      trial_rng(spec.seed, trial, "pilot", bi, K))
            obs = (y[:, :K], y[:, K:])
    else:
        pilot_id = PilotConfig(K, sysc.pilot_power)
        pilot_eh = PilotConfig(spec.eh_pilot_length, sysc.pilot_power)
        pilot_len = K + spec.eh_pilot_length
        if need_obs:
            obs = (simulate_uplink_pilot(H_id, pilot_id, noise,
                                         trial_rng(spec.seed, trial, "pilot-id", bi, K)),
                   simulate_uplink_pilot(H_eh, pilot_eh, noise,
                                         trial_rng(spec.seed, trial, "pilot-eh", bi)))
    prelog = sysc.prelog(pilot_len)
    cache = {}
    for point in arms:
        rec = _new_record(spec, point, trial)
        try:
            name = point["estimator"]
            if name not in cache:
                cache[name] = _estimate(name, H_eh, None if obs is None else obs[1],
                                        pilot_eh, spec, band)
            est_eh = cache[name]
            id_name = name if spec.id_estimator == "same" else spec.id_estimator
            key = "id:" + id_name
            if key not in cache:
                cache[key] = _estimate(id_name, H_id, None if obs is None else obs[0],
                                       pilot_id, spec, band)
            _fill_multiuser(rec, spec, H_id, H_eh, cache[key], est_eh, prelog, noise)
        except Exception as exc:  # a failed trial is recorded, not fatal
            rec.feasible, rec.status = False, f"error: {type(exc).__name__}: {exc}"
        out[point["point_id"]] = rec


def _tradeoff_fading(spec: ExperimentSpec, case: str) -> FadingModel:
    if case == "los":
        return FadingModel.los(spec.fading.shadowing_std_db)
    return FadingModel(spec.fading.shadowing_std_db, spec.rician_kappa_db, 0.0)


def _tradeoff_trial(spec: ExperimentSpec, trial: int) -> Dict[str, ExperimentRecord]:
    """One ID user with ``N`` antennas at ``(0, 0, -id_distance)`` plus EH users.

    The field model applies to the ID MIMO link; EH channels always use the
    spherical-wave model so both arms harvest from the same physical users.
    """
    sysc = spec.system
    noise = noise_power(sysc)
    f, rows, cols = spec.bands[0]
    pos_eh = _positions(spec, trial, "eh", sysc.num_eh_users)
    centre = np.array([0.0, 0.0, -spec.id_distance])
    points = sweep_points(spec)
    out = {}
    for case in spec.channel_cases:
        fading = _tradeoff_fading(spec, case)
        band = _prepare_band((f, rows, cols), fading)
        lam = band.geometry.wavelength
        H_eh = _user_channels(spec, band, pos_eh, trial, "eh", "near", fading)
        id_state = draw_large_scale(spec.id_distance, f, fading,
                                    trial_rng(spec.seed, trial, "id", "large", 0))
        # shadowing is a property of the link, not of the model or antenna count
        for model in spec.field_models:
            for n in spec.id_antenna_counts:
                offsets = user_array_offsets(n, lam)
                if model == "near":
                    los = nearfield_mimo_response(band.geometry, centre + offsets,
                                                  spec.amplitude_taper)
                else:
                    los = farfield_mimo_response(band.geometry, offsets, 0.0, 0.0)
                H_id = draw_rician_channel(los, band.correlation, id_state,
                                           trial_rng(spec.seed, trial, "id", "scatter", 0),
                                           field_model=model).entries
                sv = np.linalg.svd(H_id, compute_uv=False)
                for point in points:
                    if (point["channel_case"], point["field_model"], point["id_antennas"]) != \
                            (case, model, n):
                        continue
                    rec = _new_record(spec, point, trial)
                    try:
                        design = mimo_tradeoff_design(H_id, H_eh, point["rho"],
                                                      sysc.tx_power_total, noise,
                                                      spec.energy_split)
                        rec.cond_db = float(20 * np.log10(sv[0] / sv[-1])) if sv[-1] > 0 \
                            else math.inf
                        rec.id_power = float(design.information.powers.sum())
                        rec.energy_power = float(design.energy.powers.sum())
                        rec.sum_se = design.sum_se
                        rec.min_se = design.sum_se
                        rec.id_se = [design.sum_se]
                        rf = rf_input_power(H_eh, design.information, design.energy,
                                            spec.include_information)
                        _fill_harvest(rec, spec, rf)
                    except Exception as exc:
                        rec.feasible, rec.status = False, f"error: {type(exc).__name__}: {exc}"
                    out[point["point_id"]] = rec
    return out


_TRIAL_DRIVERS: Dict[str, Callable[[ExperimentSpec, int], Dict[str, ExperimentRecord]]] = {
    "band_sweep": _multiuser_trial,
    "near_vs_far": _multiuser_trial,
    "estimator_cdf": _multiuser_trial,
    "tradeoff": _tradeoff_trial,
}


def run_trial(spec: ExperimentSpec, trial: int) -> List[ExperimentRecord]:
    """All sweep points of one trial, in :func:`sweep_points` order.

    An exception escaping the driver marks every point of the trial as failed.
    """
    points = sweep_points(spec)
    try:
        got = _TRIAL_DRIVERS[spec.experiment_id](spec, trial)
    except Exception as exc:
        msg = f"error: {type(exc).__name__}: {exc}"
        got = {}
    else:
        msg = "error: point not evaluated"
    recs = []
    for p in points:
        rec = got.get(p["point_id"])
        if rec is None:
            rec = _new_record(spec, p, trial)
            rec.feasible, rec.status = False, msg
        recs.append(rec)
    return recs


def _run_trial_args(args):
    return run_trial(*args)


def run_experiment(spec: ExperimentSpec, trials: Optional[Sequence[int]] = None,
                   progress: Optional[Callable[[int], None]] = None) -> List[ExperimentRecord]:
    """Run a campaign; records are ordered by (sweep point, trial index).

    With ``spec.workers > 1`` trials run in a process pool. Results do not
    depend on the worker count.
    """
    idx = list(range(spec.trials)) if trials is None else list(trials)
    per_trial: List[List[ExperimentRecord]] = []
    if spec.workers > 1 and len(idx) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for i, recs in enumerate(pool.map(_run_trial_args, [(spec, t) for t in idx])):
                per_trial.append(recs)
                if progress:
                    progress(i + 1)
    else:
        for i, t in enumerate(idx):
            per_trial.append(run_trial(spec, t))
            if progress:
                progress(i + 1)
    n_points = len(sweep_points(spec))
    return [per_trial[j][p] for p in range(n_points) for j in range(len(idx))]


def run_band_sweep(spec: ExperimentSpec, **kw) -> List[ExperimentRecord]:
    _expect(spec, "band_sweep")
    return run_experiment(spec, **kw)


def run_near_vs_far(spec: ExperimentSpec, **kw) -> List[ExperimentRecord]:
    _expect(spec, "near_vs_far")
    return run_experiment(spec, **kw)


def run_estimator_cdf(spec: ExperimentSpec, **kw) -> List[ExperimentRecord]:
    _expect(spec, "estimator_cdf")
    return run_experiment(spec, **kw)


def run_tradeoff(spec: ExperimentSpec, **kw) -> List[ExperimentRecord]:
    _expect(spec, "tradeoff")
    return run_experiment(spec, **kw)


def _expect(spec: ExperimentSpec, eid: str) -> None:
    if spec.experiment_id != eid:
        raise ConfigurationError(f"expected a {eid} spec, got {spec.experiment_id!r}")
