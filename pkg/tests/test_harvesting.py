import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nearswipt.errors import ConfigurationError
from nearswipt.harvesting import (EhModelParams, eh_curve, harvest, net_harvested, nonlinear_dc,
                                  rf_input_power)
from nearswipt.precoding import EnergyBeamSet, ZfSolution

from conftest import crandn

P = EhModelParams()


def _logistic_oracle(x, M=24e-3, a=150.0, b=14e-3):
    psi = M / (1 + math.exp(-a * (x - b)))
    omega = 1 / (1 + math.exp(a * b))
    return (psi - M * omega) / (1 - omega)


def test_dc_zero_input():
    assert nonlinear_dc(0.0) == 0.0


def test_dc_saturation():
    M = P.saturation_power
    dc = nonlinear_dc(100 * P.inflection)
    assert M - 1e-6 * M <= dc <= M


def test_dc_at_inflection():
    M, a, b = P.saturation_power, P.steepness, P.inflection
    omega = 1 / (1 + math.exp(a * b))
    assert nonlinear_dc(b) == pytest.approx(M / (1 - omega) * (0.5 - omega), rel=1e-12)


@pytest.mark.parametrize("x", [1e-6, 1e-3, 5e-3, 0.02, 0.05, 0.3])
def test_dc_matches_formula_oracle(x):
    assert nonlinear_dc(x) == pytest.approx(_logistic_oracle(x), rel=1e-12, abs=1e-18)


def test_dc_monotone_on_grid():
    rf = np.linspace(0.0, 100 * P.inflection, 1000)
    dc = nonlinear_dc(rf)
    assert np.all(np.diff(dc) >= 0)
    # strict growth wherever float64 can still resolve the logistic tail
    resolvable = P.steepness * (rf[1:] - P.inflection) < 30
    assert np.all(np.diff(dc)[resolvable] > 0)
    assert np.all((dc >= 0) & (dc <= P.saturation_power))
    assert np.all(dc[1:][resolvable] < P.saturation_power)


@given(st.floats(1e-3, 1.0), st.floats(1.0, 1e3), st.floats(1e-3, 0.1),
       st.floats(0.0, 0.5), st.floats(1e-6, 0.5))
@settings(max_examples=200)
def test_dc_monotone_and_bounded_property(M, a, b, x, dx):
    params = EhModelParams(M, a, b)
    lo, hi = nonlinear_dc(x, params), nonlinear_dc(x + dx, params)
    assert 0.0 <= lo <= hi <= M
    # strictness only where the logistic is numerically resolvable
    if a * dx > 1e-6 and a * (x + dx - b) < 30:
        assert lo < hi < M


def test_linear_mode():
    lin = EhModelParams(model="linear", efficiency=0.4)
    x = np.array([0.0, 1e-3, 2.0])
    np.testing.assert_array_equal(nonlinear_dc(x, lin), 0.4 * x)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        EhModelParams(saturation_power=0)
    with pytest.raises(ConfigurationError):
        EhModelParams(model="diode")
    with pytest.raises(ConfigurationError):
        EhModelParams(efficiency=1.5)


def test_net_harvested_examples():
    assert net_harvested(3e-3) == (0.0, 0.0)
    net, clipped = net_harvested(0.0)
    assert net == pytest.approx(-3e-3) and clipped == 0.0
    net, clipped = net_harvested(5e-3)
    assert net == pytest.approx(2e-3) and clipped == pytest.approx(2e-3)
    n, c = net_harvested(np.array([0.0, 5e-3]), 1e-3)
    np.testing.assert_allclose(n, [-1e-3, 4e-3])
    np.testing.assert_allclose(c, [0.0, 4e-3])


def test_harvest_bundle():
    r = harvest([0.0, 0.02])
    np.testing.assert_allclose(r.dc_output, [0.0, _logistic_oracle(0.02)], rtol=1e-12)
    np.testing.assert_allclose(r.net, r.dc_output - 3e-3)
    np.testing.assert_allclose(r.clipped_net, np.maximum(r.net, 0))


def test_eh_curve_shape():
    rf, dc = eh_curve(points=11)
    assert rf[0] == 0 and rf[-1] == pytest.approx(4 * P.inflection) and len(dc) == 11
    rf, _ = eh_curve(max_input=1.0, points=3)
    np.testing.assert_allclose(rf, [0, 0.5, 1])


# ---------------------------------------------------------------- RF input

def test_rf_input_zero_powers(rng):
    He = crandn(rng, 8, 2)
    zf = ZfSolution(crandn(rng, 8, 3), np.zeros(3), True, 0.0)
    eb = EnergyBeamSet(crandn(rng, 8, 2), np.zeros(2))
    np.testing.assert_array_equal(rf_input_power(He, zf, eb), 0.0)
    assert rf_input_power(He[:, 0]) == 0.0


def test_rf_input_aligned_beam(rng):
    h = crandn(rng, 16)
    eb = EnergyBeamSet((h / np.linalg.norm(h))[:, None], np.array([0.7]))
    assert rf_input_power(h, None, eb) == pytest.approx(0.7 * np.linalg.norm(h) ** 2, rel=1e-12)


def test_rf_input_double_loop_oracle(rng):
    M, K, J, E = 12, 3, 2, 4
    He = crandn(rng, M, E)
    zf = ZfSolution(crandn(rng, M, K), rng.uniform(0, 1, K), True, 0.0)
    eb = EnergyBeamSet(crandn(rng, M, J), rng.uniform(0, 1, J))
    got = rf_input_power(He, zf, eb)
    for e in range(E):
        want = 0.0
        for k in range(K):
            want += zf.powers[k] * abs(sum(He[m, e].conjugate() * zf.precoders[m, k]
                                           for m in range(M))) ** 2
        for j in range(J):
            want += eb.powers[j] * abs(sum(He[m, e].conjugate() * eb.beams[m, j]
                                           for m in range(M))) ** 2
        assert got[e] == pytest.approx(want, rel=1e-12)
    only_energy = rf_input_power(He, zf, eb, include_information=False)
    assert np.all(only_energy <= got)
