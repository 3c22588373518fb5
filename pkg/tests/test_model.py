import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from polariton_twa.errors import NoEquilibrium
from polariton_twa.model import (LinearSaturation, ModelParams, NonlinearSaturation, Protocol,
                                 ReservoirThermo, equilibrium_density, eta_from_thermo, excess_pump,
                                 flux_elasticity, gain, gain_potential, gain_potential_curvature,
                                 gain_potential_derivative, gain_slope, lower_polariton_offset)


def test_gain_examples():
    assert gain(NonlinearSaturation(P=2, R=1, gamma_R=1), 0.0) == 2.0
    assert gain(LinearSaturation(P0=3, alpha=1), 3.0) == 0.0
    assert gain(NonlinearSaturation(P=2, R=1, gamma_R=1), 1.0) == pytest.approx(1.0, rel=1e-15)


def test_linear_gain_not_clamped():
    assert gain(LinearSaturation(P0=1, alpha=1), 5.0) == -4.0


def test_law_validation():
    with pytest.raises(ValueError):
        NonlinearSaturation(P=1, R=0, gamma_R=1)
    with pytest.raises(ValueError):
        LinearSaturation(P0=-1, alpha=1)
    with pytest.raises(ValueError):
        ModelParams(LinearSaturation(2, 1), eta=0.5)
    with pytest.raises(ValueError):
        ModelParams(LinearSaturation(2, 1), Gamma=0)
    with pytest.raises(ValueError):
        ModelParams(LinearSaturation(2, 1), chi0=-0.1)


def test_potential_derivative_examples():
    lin = ModelParams(LinearSaturation(P0=3.0, alpha=0.7))
    rho = np.linspace(0, 10, 7)
    np.testing.assert_allclose(gain_potential_derivative(lin, rho), 1.0 - 3.0 + 0.7 * rho)
    np.testing.assert_allclose(gain_potential_curvature(lin, rho), 0.7)
    nl = ModelParams(NonlinearSaturation(P=2, R=1, gamma_R=1))
    assert gain_potential_derivative(nl, 1.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("law", [LinearSaturation(P0=3.0, alpha=0.02),
                                 NonlinearSaturation(P=4.0, R=0.1, gamma_R=2.0)])
def test_potential_matches_integrated_derivative(law):
    p = ModelParams(law, Gamma=1.3)
    for rho in (0.5, 7.0, 120.0):
        integral, _ = quad(lambda r: float(gain_potential_derivative(p, r)), 0.0, rho, epsabs=0, epsrel=1e-13)
        assert float(gain_potential(p, rho)) == pytest.approx(integral, rel=1e-9)
        h = 1e-4 * rho
        fd = (gain_potential(p, rho + h) - gain_potential(p, rho - h)) / (2 * h)
        assert float(gain_potential_derivative(p, rho)) == pytest.approx(float(fd), rel=1e-6, abs=1e-9)
        fd2 = (gain_potential_derivative(p, rho + h) - gain_potential_derivative(p, rho - h)) / (2 * h)
        assert float(gain_potential_curvature(p, rho)) == pytest.approx(float(fd2), rel=1e-6)


def test_eta_examples():
    assert lower_polariton_offset(1.0, 0.0) == -1.0
    # |E - mu_R| = 2 T_R
    t = ReservoirThermo(rabi=1.0, detuning=0.0, mu_R=-3.0, T_R=1.0)
    assert eta_from_thermo(t) == pytest.approx(1.0 / math.tanh(1.0), rel=1e-14)
    assert eta_from_thermo(ReservoirThermo(1.0, 0.0, -3.0, 1e-6 * 2.0)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        eta_from_thermo(ReservoirThermo(1.0, 0.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        ReservoirThermo(0.0, 0.0, 0.0, 1.0)


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(1e-3, 50), st.floats(1e-3, 50))
def test_eta_at_least_one_and_increasing(det, rabi, t1, t2):
    mu = lower_polariton_offset(rabi, det) - 1.0
    e1 = eta_from_thermo(ReservoirThermo(rabi, det, mu, min(t1, t2)))
    e2 = eta_from_thermo(ReservoirThermo(rabi, det, mu, max(t1, t2)))
    assert 1.0 <= e1 <= e2


def test_equilibrium_linear_closed_form():
    p = ModelParams(LinearSaturation(P0=3.0, alpha=0.25))
    assert equilibrium_density(p) == 2.0 / 0.25
    p = ModelParams(LinearSaturation(P0=3.0, alpha=0.25), chi0=0.3)
    assert equilibrium_density(p) == (3.0 - 1.0 + 0.6) / 0.25


def test_equilibrium_nonlinear_example():
    p = ModelParams(NonlinearSaturation(P=2.0, R=1.0, gamma_R=1.0), chi0=0.25)
    assert equilibrium_density(p) == pytest.approx(3.0, rel=1e-13)


def test_no_equilibrium():
    with pytest.raises(NoEquilibrium):
        equilibrium_density(ModelParams(NonlinearSaturation(P=2.0, R=1.0, gamma_R=1.0), chi0=0.5))
    with pytest.raises(NoEquilibrium):
        equilibrium_density(ModelParams(NonlinearSaturation(P=0.5, R=1.0, gamma_R=1.0)))
    with pytest.raises(NoEquilibrium):
        equilibrium_density(ModelParams(LinearSaturation(P0=0.5, alpha=1.0)))
    with pytest.raises(NoEquilibrium):
        equilibrium_density(ModelParams(LinearSaturation(P0=0.0, alpha=0.0)))


def test_density_diverges_as_zeta_to_one():
    law = NonlinearSaturation(P=2.0, R=1.0, gamma_R=1.0)
    rhos = [equilibrium_density(ModelParams(law, chi0=0.5 * z)) for z in (0.9, 0.99, 0.999)]
    assert rhos[0] < rhos[1] < rhos[2] and rhos[2] > 1e3


@settings(max_examples=200)
@given(st.floats(0.05, 20), st.floats(0.0, 0.99), st.floats(1e-3, 10), st.floats(0.1, 5),
       st.booleans())
def test_equilibrium_residual(f, zeta, scale, gamma, linear):
    if linear:
        law = LinearSaturation(P0=gamma * (1 + f), alpha=scale)
    else:
        law = NonlinearSaturation(P=gamma * (1 + f) / scale, R=scale, gamma_R=1.0)
    p = ModelParams(law, Gamma=gamma, chi0=0.5 * zeta * gamma)
    rho = equilibrium_density(p)
    assert rho > 0
    assert abs(float(gain(law, rho)) + 2 * p.chi0 - gamma) <= 1e-10 * gamma


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.01, 5))
def test_gain_monotone(r1, r2, P, R, g):
    lo, hi = sorted((r1, r2))
    nl = NonlinearSaturation(P=P, R=R, gamma_R=g)
    assert gain(nl, lo) >= gain(nl, hi)
    if hi - lo > 1e-6 * (1.0 + hi):
        assert gain(nl, lo) > gain(nl, hi)
        assert float(gain_slope(nl, lo)) < 0


def test_excess_pump_matches_threshold():
    for f in (1e-2, 1e-4, 1e-6):
        lin = ModelParams(LinearSaturation(P0=1.0 + f, alpha=0.1))
        assert excess_pump(lin) == pytest.approx(f, rel=1e-8)
        nl = ModelParams(NonlinearSaturation(P=(1 + f) * 2.0 / 0.5, R=0.5, gamma_R=2.0))
        assert excess_pump(nl) == pytest.approx(f, rel=1e-6)
        assert equilibrium_density(lin) == pytest.approx(f / 0.1, rel=1e-8)
        assert equilibrium_density(nl) == pytest.approx(f * 2.0 / 0.5, rel=1e-6)


def test_flux_elasticity_linear_zero_zeta():
    p = ModelParams.linear_from_targets(f=2.5, zeta=0.0, rho_m=300.0)
    assert flux_elasticity(p) == pytest.approx(2.5, rel=1e-12)


def test_from_targets_hit_density():
    p = ModelParams.linear_from_targets(2.0, 0.6, 200.0)
    assert equilibrium_density(p) == pytest.approx(200.0, rel=1e-14)
    assert p.zeta == pytest.approx(0.6)
    q = ModelParams.nonlinear_from_targets(1.0, 0.5, 40.0, gamma_R=3.0)
    assert equilibrium_density(q) == pytest.approx(40.0, rel=1e-12)
    assert excess_pump(q) == pytest.approx(1.0, rel=1e-12)


def test_params_digest_and_protocol():
    p = ModelParams(LinearSaturation(3, 1), protocol="step-off")
    assert p.protocol is Protocol.STEP_OFF
    assert p.digest() == ModelParams(LinearSaturation(3, 1), protocol=Protocol.STEP_OFF).digest()
    assert p.digest() != p.with_chi(0.1).digest()
    assert ModelParams(LinearSaturation(3, 1), omega1=1.0, omega2=2.5).omega == 3.5
