import numpy as np
import pytest

from polariton_twa.errors import NonFinite
from polariton_twa.model import LinearSaturation, ModelParams, NonlinearSaturation, Protocol, equilibrium_density
from polariton_twa.sde import (Ensemble, EnsembleState, IntegratorConfig, NoiseDensityMode, drift,
                               initial_states, noise_amplitude, potential, run_protocol, step)
from polariton_twa.stats import quadrature_variances


def _grad_fd(params, s, chi, h):
    g = np.empty(4)
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        # five-point stencil
        g[k] = (-potential(params, s + 2 * e, chi) + 8 * potential(params, s + e, chi)
                - 8 * potential(params, s - e, chi) + potential(params, s - 2 * e, chi)) / (12 * h)
    return g


def test_drift_zero_on_ring():
    p = ModelParams(LinearSaturation(P0=3.0, alpha=0.01))
    rho = equilibrium_density(p)
    th = np.linspace(0, 2 * np.pi, 9)
    states = np.stack([np.sqrt(rho) * np.cos(th), np.sqrt(rho) * np.sin(th),
                       np.sqrt(rho) * np.cos(2 * th), np.sqrt(rho) * np.sin(2 * th)], axis=1)
    np.testing.assert_allclose(drift(p, states, 0.0), 0.0, atol=1e-12)


def test_drift_cross_term():
    p = ModelParams(NonlinearSaturation(P=2.0, R=1.0, gamma_R=1.0))
    d = drift(p, [1.5, 0.0, 0.0, 0.0], 0.3)
    assert d[3] == pytest.approx(0.3 * 1.5)
    assert d[1] == 0.0 and d[2] == 0.0


@pytest.mark.parametrize("params", [
    ModelParams(LinearSaturation(P0=3.0, alpha=0.02), Gamma=1.0),
    ModelParams(NonlinearSaturation(P=4.0, R=0.05, gamma_R=1.0), Gamma=1.3),
])
def test_drift_is_minus_gradient(params):
    rng = np.random.default_rng(7)
    states = rng.normal(0.0, 6.0, size=(1000, 4))
    chis = rng.uniform(0.0, 0.5, size=1000)
    worst = 0.0
    for s, chi in zip(states, chis):
        d = drift(params, s, chi)
        fd = -_grad_fd(params, s, chi, 1e-3)
        worst = max(worst, np.max(np.abs(d - fd)) / max(np.max(np.abs(d)), 1e-300))
    assert worst < 1e-8


def test_noise_amplitude_examples():
    vac = ModelParams(LinearSaturation(P0=0.0, alpha=0.0), Gamma=1.0)
    assert noise_amplitude(vac, 10.0) == pytest.approx(0.5)
    p = ModelParams(LinearSaturation(P0=3.0, alpha=0.01))
    assert noise_amplitude(p, equilibrium_density(p)) ** 2 == pytest.approx(0.5)
    p2 = ModelParams(LinearSaturation(P0=3.0, alpha=0.01), eta=2.0, chi0=0.25)
    assert noise_amplitude(p2, equilibrium_density(p2)) ** 2 == pytest.approx(0.5)
    # negative linear gain is clamped inside the radical
    assert noise_amplitude(p, 1e4) ** 2 == pytest.approx(0.25)


def test_stability_guard():
    p = ModelParams(LinearSaturation(P0=30.0, alpha=0.1))
    with pytest.raises(ValueError, match="too large"):
        IntegratorConfig(dt=0.01, n_traj=100).check_stability(p)
    IntegratorConfig(dt=0.001, n_traj=100).check_stability(p)


def test_config_and_state_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(seed=-1)
    with pytest.raises(ValueError):
        EnsembleState(0.0, np.zeros((1, 4)))
    with pytest.raises(NonFinite):
        EnsembleState(0.0, np.array([[0, 0, 0, np.nan], [0, 0, 0, 0]]))
    s = EnsembleState(0.0, np.ones((3, 4)))
    with pytest.raises(ValueError):
        s.states[0, 0] = 2.0


def test_vacuum_variance_small():
    p = ModelParams(LinearSaturation(P0=0.0, alpha=0.0))
    cfg = IntegratorConfig(dt=0.01, n_traj=4000, seed=3, burn_in=15.0)
    (s,) = run_protocol(p, cfg, [0.0])
    var, se = quadrature_variances(s)
    assert np.all(np.abs(var - 0.25) < 4 * se)


def test_pure_decay_rate():
    p = ModelParams(LinearSaturation(P0=0.0, alpha=0.0), Gamma=1.0)
    cfg = IntegratorConfig(dt=0.002, n_traj=2000, seed=1, burn_in=0.0)
    rho0 = 400.0
    init = np.tile([np.sqrt(rho0), 0.0, 0.0, np.sqrt(rho0)], (cfg.n_traj, 1))
    taus = np.linspace(0.0, 3.0, 7)
    snaps = run_protocol(p, cfg, taus, initial=init)
    excess = np.array([s.densities.mean() for s in snaps]) - 0.5
    rate = -np.polyfit(taus, np.log(excess), 1)[0]
    assert rate == pytest.approx(1.0, rel=0.02)


def test_unstable_growth_above_zeta_one():
    p = ModelParams(NonlinearSaturation(P=2.0, R=1.0, gamma_R=1.0), chi0=0.6)
    cfg = IntegratorConfig(dt=0.002, n_traj=200, seed=5, burn_in=0.0)
    init = np.tile([3.0, 0.0, 0.0, 3.0], (cfg.n_traj, 1))
    try:
        snaps = run_protocol(p, cfg, [0.0, 5.0, 10.0, 15.0], initial=init)
    except NonFinite:
        return
    rho = [s.densities.mean() for s in snaps]
    assert all(b > a for a, b in zip(rho, rho[1:]))
    assert rho[-1] > 10 * rho[0]


def test_nonfinite_raised():
    p = ModelParams(LinearSaturation(P0=3.0, alpha=0.01))
    cfg = IntegratorConfig(dt=0.001, n_traj=10, burn_in=0.0)
    init = np.ones((10, 4))
    init[3, 2] = np.inf
    ens = Ensemble(p, cfg, init)
    with pytest.raises(NonFinite):
        ens.step(0.0)


def test_determinism_and_thread_independence():
    p = ModelParams.linear_from_targets(2.0, 0.6, 100.0)
    base = dict(dt=0.002, n_traj=5000, seed=11, burn_in=0.5)
    a = run_protocol(p, IntegratorConfig(**base), [0.0, 0.2])
    b = run_protocol(p, IntegratorConfig(**base), [0.0, 0.2])
    c = run_protocol(p, IntegratorConfig(**base, n_workers=3), [0.0, 0.2])
    for x, y, z in zip(a, b, c):
        assert np.array_equal(x.states, y.states)
        assert np.array_equal(x.states, z.states)
    d = run_protocol(p, IntegratorConfig(**{**base, "seed": 12}), [0.0])
    assert not np.array_equal(a[0].states, d[0].states)


def test_functional_step_matches_ensemble():
    p = ModelParams.linear_from_targets(2.0, 0.6, 100.0)
    cfg = IntegratorConfig(dt=0.002, n_traj=300, seed=2, burn_in=0.0)
    s0 = EnsembleState(0.0, initial_states(p, cfg))
    s1 = step(step(s0, p, cfg, p.chi0), p, cfg, p.chi0)
    ens = Ensemble(p, cfg, s0.states)
    ens.advance(2, p.chi0)
    assert np.array_equal(ens.snapshot().states, s1.states)
    assert s1.step_index == 2 and s1.t == pytest.approx(0.004)


def test_step_off_at_zero_equals_constant_chi():
    p = ModelParams.linear_from_targets(2.0, 0.6, 100.0)
    cfg = IntegratorConfig(dt=0.002, n_traj=500, seed=9, burn_in=1.0)
    (a,) = run_protocol(p, cfg, [0.0])
    (b,) = run_protocol(ModelParams.linear_from_targets(2.0, 0.6, 100.0, protocol=Protocol.STEP_OFF), cfg, [0.0])
    assert np.array_equal(a.states, b.states)


def test_step_off_relaxes_to_free_density():
    p = ModelParams.linear_from_targets(2.0, 0.6, 200.0, protocol=Protocol.STEP_OFF)
    cfg = IntegratorConfig(dt=0.002, n_traj=2000, seed=4, burn_in=5.0)
    (s,) = run_protocol(p, cfg, [8.0])
    target = 2.0 / p.saturation.alpha
    assert s.densities.mean() == pytest.approx(target, rel=0.01)


def test_factorized_without_pairs():
    p = ModelParams.linear_from_targets(2.0, 0.0, 200.0)
    cfg = IntegratorConfig(dt=0.002, n_traj=4000, seed=8, burn_in=5.0)
    (s,) = run_protocol(p, cfg, [0.0])
    prod = s.states[:, 0] * s.states[:, 3]
    assert abs(prod.mean()) < 4 * prod.std(ddof=1) / np.sqrt(s.n_traj)


def test_initial_states_on_ring():
    p = ModelParams.linear_from_targets(2.0, 0.6, 150.0)
    x = initial_states(p, IntegratorConfig(n_traj=300))
    np.testing.assert_allclose(x[:, 0] ** 2 + x[:, 1] ** 2, 150.0)
    th = np.arctan2(x[:, 1], x[:, 0]) + np.arctan2(x[:, 3], x[:, 2])
    np.testing.assert_allclose(np.cos(th), 0.0, atol=1e-9)
    np.testing.assert_allclose(np.sin(th), 1.0, atol=1e-9)


@pytest.mark.slow
def test_dt_convergence():
    p = ModelParams.linear_from_targets(2.0, 0.6, 200.0)
    out = []
    for dt in (0.002, 0.001):
        (s,) = run_protocol(p, IntegratorConfig(dt=dt, n_traj=10_000, seed=21, burn_in=4.0), [0.0])
        rho = s.densities.mean(axis=1)
        out.append((rho.mean(), rho.std(ddof=1) / np.sqrt(rho.size)))
    assert abs(out[0][0] - out[1][0]) < np.hypot(out[0][1], out[1][1]) * 4


@pytest.mark.slow
def test_noise_modes_agree():
    p = ModelParams.linear_from_targets(2.0, 0.6, 200.0)
    res = []
    for mode in NoiseDensityMode:
        (s,) = run_protocol(p, IntegratorConfig(dt=0.002, n_traj=10_000, seed=5, burn_in=4.0,
                                                noise_density_mode=mode), [0.0])
        rho = s.densities.mean(axis=1)
        res.append((rho.mean(), rho.std(ddof=1) / np.sqrt(rho.size), s.densities.var()))
    (m1, e1, v1), (m2, e2, v2) = res
    assert abs(m1 - m2) < 4 * np.hypot(e1, e2)
    assert v1 == pytest.approx(v2, rel=0.1)
