import filecmp
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import nearswipt.experiments as ex
from nearswipt.channel import FadingModel
from nearswipt.errors import ConfigurationError
from nearswipt.estimation import MlGridSpec
from nearswipt.records import summarize, write_csv
from nearswipt.scenario import UserPlacement

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden_band_sweep_2trials.csv"


def _small(eid, trials=2, **kw):
    spec = ex.default_spec(eid, **kw)
    return replace(spec, system=replace(spec.system, trials=trials))


def _csv_bytes(records, tmp_path, name):
    # byte comparison treats NaN fields as equal, unlike dataclass equality
    path = tmp_path / name
    write_csv(records, path)
    return path.read_bytes()


def golden_spec():
    return _small("band_sweep", trials=2)


# ---------------------------------------------------------------- specs and sweep points

def test_default_specs():
    bs = ex.default_spec("band_sweep")
    assert bs.bands == ((3e9, 16, 4), (7.5e9, 40, 10), (15e9, 80, 20), (30e9, 80, 20))
    assert bs.id_user_counts == (10, 20, 30, 40) and bs.system.num_eh_users == 10
    assert bs.trials == 200 and bs.estimators == ("LS",)
    nf = ex.default_spec("near_vs_far")
    assert nf.placement.cone_half_angle == pytest.approx(np.deg2rad(5))
    assert nf.field_models == ("near", "far") and nf.reference_distance == 25.0
    cdf = ex.default_spec("estimator_cdf")
    assert cdf.trials == 500 and cdf.estimators == ("PERFECT", "ML", "LS")
    assert cdf.system.num_id_users == 20 and cdf.system.num_eh_users == 5
    to = ex.default_spec("tradeoff")
    assert to.id_antenna_counts == (1, 2, 4, 8) and to.channel_cases == ("los", "rician")
    assert to.rician_kappa_db == 20.0 and to.id_distance == 25.0


@pytest.mark.parametrize("eid,count", [("band_sweep", 16), ("near_vs_far", 16),
                                       ("estimator_cdf", 3), ("tradeoff", 2 * 2 * 4 * 20)])
def test_sweep_point_counts(eid, count):
    pts = ex.sweep_points(ex.default_spec(eid))
    assert len(pts) == count
    assert len({p["point_id"] for p in pts}) == count


def test_point_ids():
    pts = ex.sweep_points(ex.default_spec("band_sweep"))
    assert pts[0]["point_id"] == "3GHz|16x4|K10|near|LS|rician"
    to = ex.sweep_points(ex.default_spec("tradeoff"))
    assert to[0]["point_id"] == "7.5GHz|40x10|K1|near|PERFECT|los|N1|rho0.05"


@pytest.mark.parametrize("kw", [dict(bands=()), dict(estimators=("MMSE",)),
                                dict(id_user_counts=(0,)), dict(rho_grid=(-0.1,)),
                                dict(workers=0), dict(energy_split="x"),
                                dict(eh_pilot_length=1), dict(reference_distance=0.5)])
def test_spec_validation(kw):
    with pytest.raises(ConfigurationError):
        ex.default_spec("estimator_cdf", **kw)
    with pytest.raises(ConfigurationError):
        ex.default_spec("unknown")


def test_wrapper_checks_experiment():
    with pytest.raises(ConfigurationError):
        ex.run_tradeoff(ex.default_spec("band_sweep"))


# ---------------------------------------------------------------- determinism

def test_same_seed_identical_records():
    spec = _small("near_vs_far")
    assert ex.run_experiment(spec) == ex.run_experiment(spec)


def test_seed_changes_draws():
    spec = _small("near_vs_far", trials=1)
    other = replace(spec, system=replace(spec.system, master_seed=1))
    a, b = ex.run_experiment(spec), ex.run_experiment(other)
    assert [r.mean_rf for r in a] != [r.mean_rf for r in b]


def test_trial_streams_do_not_depend_on_trial_count():
    spec = _small("tradeoff", trials=3)
    full = ex.run_experiment(spec)
    part = ex.run_experiment(spec, trials=[0, 1])
    assert [r for r in full if r.trial_index < 2] == part


def test_worker_count_does_not_change_results(tmp_path):
    spec = _small("near_vs_far", trials=4)
    assert _csv_bytes(ex.run_experiment(replace(spec, workers=2)), tmp_path, "a.csv") == \
        _csv_bytes(ex.run_experiment(spec), tmp_path, "b.csv")


def test_record_order_and_progress():
    spec = _small("near_vs_far", trials=3)
    seen = []
    recs = ex.run_experiment(spec, progress=seen.append)
    assert seen == [1, 2, 3]
    pts = [p["point_id"] for p in ex.sweep_points(spec)]
    assert [(r.point_id, r.trial_index) for r in recs] == [(p, t) for p in pts for t in range(3)]


def test_golden_csv(tmp_path):
    out = tmp_path / "run1.csv"
    write_csv(ex.run_experiment(golden_spec()), out)
    write_csv(ex.run_experiment(golden_spec()), tmp_path / "run2.csv")
    assert filecmp.cmp(out, tmp_path / "run2.csv", shallow=False)
    assert out.read_bytes() == GOLDEN.read_bytes()


# ---------------------------------------------------------------- pairing

def test_near_and_far_share_random_draws():
    spec = ex.default_spec("band_sweep", fading=FadingModel(4.0, -math.inf, 0.0))
    band = ex._prepare_band((7.5e9, 40, 10), spec.fading)
    pos = ex._positions(spec, 3, "id", 6)
    near = ex._user_channels(spec, band, pos, 3, "id", "near")
    far = ex._user_channels(spec, band, pos, 3, "id", "far")
    # with no LOS part the field model drops out and the draws must coincide exactly
    np.testing.assert_array_equal(near, far)


def test_user_columns_do_not_depend_on_user_count():
    spec = ex.default_spec("band_sweep")
    band = ex._prepare_band((3e9, 16, 4), spec.fading)
    pos = ex._positions(spec, 0, "id", 8)
    np.testing.assert_array_equal(ex._positions(spec, 0, "id", 3), pos[:3])
    H8 = ex._user_channels(spec, band, pos, 0, "id", "near")
    H3 = ex._user_channels(spec, band, pos[:3], 0, "id", "near")
    # identical draws; BLAS may round a 3- and an 8-column product differently in the last ulp
    np.testing.assert_allclose(H8[:, :3], H3, rtol=1e-12, atol=0)


def _capture(monkeypatch):
    calls = []
    real = ex._fill_multiuser

    def spy(rec, spec, H_id, H_eh, est_id, est_eh, prelog, noise):
        calls.append((rec.point_id, rec.trial_index, H_id.copy(), H_eh.copy(), est_eh.copy()))
        return real(rec, spec, H_id, H_eh, est_id, est_eh, prelog, noise)

    monkeypatch.setattr(ex, "_fill_multiuser", spy)
    return calls


def test_estimator_arms_share_channels_and_noise(monkeypatch):
    calls = _capture(monkeypatch)
    grid = MlGridSpec(distance_points=8, azimuth_points=12, elevation_points=12)
    spec = _small("estimator_cdf", trials=2, ml_grid=grid)
    spec = replace(spec, system=replace(spec.system, num_id_users=4), id_user_counts=(4,))
    ex.run_experiment(spec)
    by_trial = {}
    for pid, t, H_id, H_eh, est in calls:
        by_trial.setdefault(t, []).append((pid, H_id, H_eh, est))
    for arms in by_trial.values():
        assert len(arms) == 3
        for _, H_id, H_eh, _ in arms[1:]:
            np.testing.assert_array_equal(H_id, arms[0][1])
            np.testing.assert_array_equal(H_eh, arms[0][2])
        perfect = next(a for a in arms if "|PERFECT|" in a[0])
        np.testing.assert_array_equal(perfect[3], perfect[2])
    np.testing.assert_raises(AssertionError, np.testing.assert_array_equal,
                             by_trial[0][0][2], by_trial[1][0][2])


def test_band_sweep_shares_users_across_counts(monkeypatch):
    calls = _capture(monkeypatch)
    spec = _small("band_sweep", trials=1, bands=((3e9, 16, 4),), id_user_counts=(2, 5))
    ex.run_experiment(spec)
    (_, _, H2, E2, _), (_, _, H5, E5, _) = calls
    np.testing.assert_array_equal(H5[:, :2], H2)
    np.testing.assert_array_equal(E5, E2)


def test_tradeoff_eh_channels_shared_across_arms(monkeypatch):
    seen = {}
    real = ex.mimo_tradeoff_design

    def spy(H_id, H_eh, rho, *a, **k):
        seen.setdefault(H_id.shape[1], []).append(H_eh.copy())
        return real(H_id, H_eh, rho, *a, **k)

    monkeypatch.setattr(ex, "mimo_tradeoff_design", spy)
    spec = _small("tradeoff", trials=1, channel_cases=("los",), rho_grid=(0.5, 1.0))
    ex.run_experiment(spec)
    ref = seen[1][0]
    for lst in seen.values():
        for H in lst:
            np.testing.assert_array_equal(H, ref)


# ---------------------------------------------------------------- failure handling

def test_point_failure_is_recorded(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(ex, "design_zf", boom)
    recs = ex.run_experiment(_small("near_vs_far", trials=1))
    assert all(not r.feasible and r.status == "error: RuntimeError: solver exploded" for r in recs)


def test_trial_failure_is_recorded(monkeypatch):
    def boom(spec, trial):
        if trial == 1:
            raise ValueError("bad trial")
        return real(spec, trial)

    real = ex._TRIAL_DRIVERS["tradeoff"]
    monkeypatch.setitem(ex._TRIAL_DRIVERS, "tradeoff", boom)
    recs = ex.run_experiment(_small("tradeoff", trials=2, rho_grid=(1.0,)))
    bad = [r for r in recs if r.trial_index == 1]
    assert bad and all(r.status == "error: ValueError: bad trial" for r in bad)
    assert all(r.status == "ok" for r in recs if r.trial_index == 0)


def test_infeasible_zf_is_an_outage():
    spec = _small("near_vs_far", trials=2, id_user_counts=(20,), target_se=40.0)
    recs = ex.run_experiment(spec)
    assert recs and all(r.status == "infeasible" and r.outage for r in recs)
    assert all(math.isnan(r.mean_net) for r in recs)


# ---------------------------------------------------------------- physical sanity

def test_far_field_distinct_angles_feasible():
    spec = _small("near_vs_far", trials=20, placement=UserPlacement(),
                  field_models=("far",), id_user_counts=(5,))
    recs = ex.run_experiment(spec)
    assert sum(r.feasible for r in recs) / len(recs) >= 0.95


def test_record_fields_consistent():
    recs = ex.run_experiment(_small("band_sweep", trials=1, bands=((3e9, 16, 4),),
                                    id_user_counts=(10,)))
    r = recs[0]
    assert r.feasible and len(r.id_se) == 10 and len(r.eh_net) == 10
    assert min(r.id_se) >= 0 and r.sum_se == pytest.approx(sum(r.id_se))
    assert r.id_power + r.energy_power <= 10.0 + 1e-9
    assert r.mean_net == pytest.approx(np.mean(r.eh_net))


def test_cone_width_shrinks_near_far_gap():
    def gap(placement):
        spec = _small("near_vs_far", trials=60, placement=placement, id_user_counts=(20,))
        s = {row["point_id"]: row for row in summarize(ex.run_experiment(spec))}
        return s["7.5GHz|40x10|K20|near|PERFECT|los"]["mean_dc"] - \
            s["7.5GHz|40x10|K20|far|PERFECT|los"]["mean_dc"]

    cone = gap(ex.default_spec("near_vs_far").placement)
    wide = gap(UserPlacement())
    assert cone > 0 and wide < cone
