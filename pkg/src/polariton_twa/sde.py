"""Euler-Maruyama ensemble integrator for the four quadrature SDEs.

State layout: every trajectory carries the rotating-frame quadratures
``(x1, p1, x2, p2)``. The drift is the negative gradient of

    V = (G[rho1] + G[rho2]) / 4 - chi (p2 x1 + x2 p1),

and each quadrature receives an independent Wiener increment of variance
``dt`` scaled by ``sqrt((eta P[rho] + Gamma) / 4)``.

Random numbers are counter based: trajectories are grouped in fixed blocks
of ``TRAJ_BLOCK`` and the normals for block ``b`` at step ``k`` come from a
Philox stream keyed on ``(seed, b)`` with the counter set from ``k``. A run
therefore does not depend on how blocks are scheduled over threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoEquilibrium, NonFinite
from .model import ModelParams, Protocol, equilibrium_density, gain, gain_potential

TRAJ_BLOCK = 2048
STABILITY_LIMIT = 0.05

_NOISE_STREAM = 0
_INIT_STREAM = 1


class NoiseDensityMode(str, enum.Enum):
    SELF_CONSISTENT_MEAN = "self-consistent-mean"
    PER_TRAJECTORY = "per-trajectory"


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    n_traj: int = 10_000
    seed: int = 42
    burn_in: float = 20.0
    noise_density_mode: NoiseDensityMode = NoiseDensityMode.SELF_CONSISTENT_MEAN
    n_workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.n_traj < 2:
            raise ValueError(f"n_traj must be >= 2, got {self.n_traj}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        object.__setattr__(self, "noise_density_mode", NoiseDensityMode(self.noise_density_mode))

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in / self.dt))

    def check_stability(self, params: ModelParams) -> None:
        fastest = max(params.Gamma, params.max_gain, 2.0 * params.chi0)
        if self.dt * fastest > STABILITY_LIMIT:
            raise ValueError(
                f"dt = {self.dt:g} too large: dt * max rate = {self.dt * fastest:.3g} > {STABILITY_LIMIT}")


@dataclass(frozen=True)
class EnsembleState:
    """Snapshot of N trajectories at time ``t``; ``states`` has shape (N, 4)."""

    t: float
    states: np.ndarray
    clamp_events: int = 0
    step_index: int = 0

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        if s.ndim != 2 or s.shape[1] != 4:
            raise ValueError(f"states must have shape (N, 4), got {s.shape}")
        if s.shape[0] < 2:
            raise ValueError("an ensemble needs at least 2 trajectories")
        if not np.isfinite(s).all():
            raise NonFinite("ensemble contains non-finite quadratures")
        s.flags.writeable = False
        object.__setattr__(self, "states", s)

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def densities(self) -> np.ndarray:
        """Per-trajectory (rho1, rho2), shape (N, 2)."""
        s = self.states
        return np.stack([s[:, 0] ** 2 + s[:, 1] ** 2, s[:, 2] ** 2 + s[:, 3] ** 2], axis=1)


def potential(params: ModelParams, state, chi: float):
    s = np.asarray(state, dtype=float)
    x1, p1, x2, p2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    g = gain_potential(params, x1**2 + p1**2) + gain_potential(params, x2**2 + p2**2)
    return 0.25 * g - chi * (p2 * x1 + x2 * p1)


def drift(params: ModelParams, state, chi: float) -> np.ndarray:
    """-grad V for one state or a stack of states (..., 4)."""
    s = np.asarray(state, dtype=float)
    x1, p1, x2, p2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    h1 = 0.5 * (gain(params.saturation, x1**2 + p1**2) - params.Gamma)
    h2 = 0.5 * (gain(params.saturation, x2**2 + p2**2) - params.Gamma)
    return np.stack([h1 * x1 + chi * p2, h1 * p1 + chi * x2,
                     h2 * x2 + chi * p1, h2 * p2 + chi * x1], axis=-1)


def noise_amplitude(params: ModelParams, rho):
    """sqrt((eta max(P[rho], 0) + Gamma) / 4).

    The clamp only bites for the linear law deep in saturation.
    """
    p = np.maximum(gain(params.saturation, rho), 0.0)
    return np.sqrt(0.25 * (params.eta * p + params.Gamma))


def _stream_key(seed: int, block: int, stream: int) -> np.ndarray:
    return np.random.SeedSequence(seed, spawn_key=(stream, block)).generate_state(2, np.uint64)


def _block_generator(key: np.ndarray, step_index: int) -> np.random.Generator:
    # the second counter word indexes the step, so each step owns 2**64 draws
    return np.random.Generator(np.random.Philox(counter=[0, step_index, 0, 0], key=key))


def _block_slices(n_traj: int):
    return [slice(lo, min(lo + TRAJ_BLOCK, n_traj)) for lo in range(0, n_traj, TRAJ_BLOCK)]


class Ensemble:
    """Mutable integrator state. Use :meth:`snapshot` to emit immutable copies."""

    def __init__(self, params: ModelParams, cfg: IntegratorConfig, states: np.ndarray,
                 t: float = 0.0, step_index: int = 0):
        cfg.check_stability(params)
        s = np.asarray(states, dtype=float)
        if s.shape != (cfg.n_traj, 4):
            raise ValueError(f"expected initial states of shape {(cfg.n_traj, 4)}, got {s.shape}")
        self.params = params
        self.cfg = cfg
        self.t = t
        self.step_index = step_index
        self.clamp_events = 0
        self._s = np.ascontiguousarray(s.T)
        self._drift = np.empty_like(self._s)
        self._noise = np.empty_like(self._s)
        self._blocks = _block_slices(cfg.n_traj)
        self._keys = [_stream_key(cfg.seed, b, _NOISE_STREAM) for b in range(len(self._blocks))]
        self._pool = ThreadPoolExecutor(cfg.n_workers) if cfg.n_workers > 1 else None

    @classmethod
    def at_equilibrium(cls, params: ModelParams, cfg: IntegratorConfig) -> "Ensemble":
        return cls(params, cfg, initial_states(params, cfg))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _fill_block(self, b: int):
        sl = self._blocks[b]
        gen = _block_generator(self._keys[b], self.step_index)
        self._noise[:, sl] = gen.standard_normal((4, sl.stop - sl.start))

    def _fill_noise(self):
        if self._pool is None:
            for b in range(len(self._blocks)):
                self._fill_block(b)
        else:
            list(self._pool.map(self._fill_block, range(len(self._blocks))))

    def step(self, chi: float) -> None:
        p, dt = self.params, self.cfg.dt
        s, d, n = self._s, self._drift, self._noise
        x1, p1, x2, p2 = s
        r1 = x1 * x1 + p1 * p1
        r2 = x2 * x2 + p2 * p2
        m1, m2 = r1.mean(), r2.mean()
        if not (math.isfinite(m1) and math.isfinite(m2)):
            raise NonFinite(f"trajectories diverged at step {self.step_index} (t = {self.t:.6g})")

        h1 = 0.5 * (gain(p.saturation, r1) - p.Gamma)
        h2 = 0.5 * (gain(p.saturation, r2) - p.Gamma)
        np.multiply(h1, x1, out=d[0])
        np.multiply(h1, p1, out=d[1])
        np.multiply(h2, x2, out=d[2])
        np.multiply(h2, p2, out=d[3])
        if chi:
            d[0] += chi * p2
            d[1] += chi * x2
            d[2] += chi * p1
            d[3] += chi * x1

        if self.cfg.noise_density_mode is NoiseDensityMode.SELF_CONSISTENT_MEAN:
            g1, g2 = gain(p.saturation, m1), gain(p.saturation, m2)
            self.clamp_events += int(g1 < 0) + int(g2 < 0)
            a1 = float(noise_amplitude(p, m1))
            a2 = float(noise_amplitude(p, m2))
        else:
            self.clamp_events += int(np.count_nonzero(gain(p.saturation, r1) < 0)
                                     + np.count_nonzero(gain(p.saturation, r2) < 0))
            a1 = noise_amplitude(p, r1)
            a2 = noise_amplitude(p, r2)

        self._fill_noise()
        sq = math.sqrt(dt)
        n[:2] *= a1 * sq
        n[2:] *= a2 * sq
        d *= dt
        s += d
        s += n
        self.step_index += 1
        self.t += dt

    def advance(self, n_steps: int, chi: float) -> None:
        for _ in range(n_steps):
            self.step(chi)

    def snapshot(self, t: float | None = None) -> EnsembleState:
        return EnsembleState(t=self.t if t is None else t, states=self._s.T.copy(),
                             clamp_events=self.clamp_events, step_index=self.step_index)


def initial_states(params: ModelParams, cfg: IntegratorConfig) -> np.ndarray:
    """Deterministic start on the potential minimum with random free phases.

    With chi0 > 0 the phase sum is pinned to pi/2 and only the phase
    difference is random; with chi0 = 0 both phases are independent.
    Below threshold every trajectory starts at the origin.
    """
    try:
        rho = equilibrium_density(params)
    except NoEquilibrium:
        return np.zeros((cfg.n_traj, 4))
    out = np.empty((cfg.n_traj, 4))
    for b, sl in enumerate(_block_slices(cfg.n_traj)):
        gen = _block_generator(_stream_key(cfg.seed, b, _INIT_STREAM), 0)
        th = gen.uniform(0.0, 2.0 * np.pi, size=(sl.stop - sl.start, 2))
        th1 = th[:, 0]
        th2 = 0.5 * np.pi - th1 if params.chi0 > 0 else th[:, 1]
        r = math.sqrt(rho)
        out[sl] = np.stack([r * np.cos(th1), r * np.sin(th1), r * np.cos(th2), r * np.sin(th2)], 1)
    return out


def step(state: EnsembleState, params: ModelParams, cfg: IntegratorConfig, chi_t: float) -> EnsembleState:
    """Advance a snapshot by one ``dt``; the noise is fixed by (seed, block, step_index)."""
    ens = Ensemble(params, cfg, state.states, t=state.t, step_index=state.step_index)
    ens.clamp_events = state.clamp_events
    ens.step(chi_t)
    return ens.snapshot()


def run_protocol(params: ModelParams, cfg: IntegratorConfig, observe_at: Sequence[float],
                 initial: np.ndarray | None = None) -> list[EnsembleState]:
    """Burn in at chi0, then record snapshots at dimensionless times tau = Gamma t.

    ``observe_at`` is measured from the end of the burn-in. For the step-off
    protocol chi drops to zero at that instant.
    """
    taus = np.asarray(observe_at, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("observe_at must be a non-empty 1-D sequence")
    if (taus < 0).any() or (np.diff(taus) < 0).any():
        raise ValueError("observe_at must be non-negative and sorted")

    ens = Ensemble(params, cfg, initial_states(params, cfg) if initial is None else initial,
                   t=-cfg.burn_in_steps * cfg.dt)
    try:
        ens.advance(cfg.burn_in_steps, params.chi0)
        ens.t = 0.0
        origin = ens.step_index
        chi = 0.0 if params.protocol is Protocol.STEP_OFF else params.chi0
        out = []
        for tau in taus:
            target = origin + int(round(tau / params.Gamma / cfg.dt))
            ens.advance(target - ens.step_index, chi)
            ens.t = (ens.step_index - origin) * cfg.dt
            out.append(ens.snapshot())
        return out
    finally:
        ens.close()
