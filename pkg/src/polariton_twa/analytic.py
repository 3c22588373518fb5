"""Closed-form quench dynamics for the linear saturation law at eta = 1.

The entangled pump is switched off at tau = Gamma t = 0. Before the quench
the system sits in its stationary state at zeta0; afterwards the density
relaxes logistically towards f Gamma / alpha, the radial cumulants decay on
the scale 1/f and the phase sum diffuses freely.

``phase_noise_factor`` scales the diffusion coefficient of the phase sum.
The default 1.0 keeps the conventional closed form, in which theta_+ picks
up the phase-noise rate of a single mode. The stochastic quadrature dynamics
add the independent phase noise of both modes, which corresponds to 2.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .entanglement import analytic_steady_moments
from .errors import NeverEntangled
from .model import LinearSaturation, ModelParams, Protocol
from .stats import MadelungMoments


@dataclass(frozen=True)
class QuenchParams:
    f: float
    zeta0: float
    alpha: float
    Gamma: float = 1.0
    phase_noise_factor: float = 1.0

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError("f must be > 0")
        if not 0 < self.zeta0 <= 1:
            raise ValueError("zeta0 must lie in (0, 1]")
        if not self.alpha > 0 or not self.Gamma > 0:
            raise ValueError("alpha and Gamma must be > 0")
        if not self.phase_noise_factor > 0:
            raise ValueError("phase_noise_factor must be > 0")

    @classmethod
    def from_rho0(cls, f: float, zeta0: float, rho0: float, Gamma: float = 1.0,
                  **kw) -> "QuenchParams":
        """Pick alpha so that the pre-quench density equals ``rho0``."""
        return cls(f=f, zeta0=zeta0, alpha=Gamma * (f + zeta0) / rho0, Gamma=Gamma, **kw)

    @property
    def a(self) -> float:
        return self.alpha / self.Gamma

    @property
    def rho0(self) -> float:
        return self.Gamma * (self.f + self.zeta0) / self.alpha

    @property
    def rho_inf(self) -> float:
        return self.f * self.Gamma / self.alpha

    def model_params(self) -> ModelParams:
        law = LinearSaturation(P0=self.Gamma * (1.0 + self.f), alpha=self.alpha)
        return ModelParams(law, Gamma=self.Gamma, eta=1.0, chi0=0.5 * self.zeta0 * self.Gamma,
                           protocol=Protocol.STEP_OFF)

    def initial_moments(self) -> MadelungMoments:
        return analytic_steady_moments(self.model_params())


def _decay(q: QuenchParams, tau):
    return np.exp(-q.f * np.asarray(tau, dtype=float))


def rho_mean(q: QuenchParams, tau):
    """Mean density after the quench."""
    e = _decay(q, tau)
    return q.rho_inf * (q.f + q.zeta0) / (q.f + q.zeta0 * (1.0 - e))


def relaxation_profile(q: QuenchParams, tau):
    """e(tau): rises from 0 to 1 as the radial variance refills to Gamma/alpha."""
    f, z = q.f, q.zeta0
    tau = np.asarray(tau, dtype=float)
    e = _decay(q, tau)
    lead = ((f + z) / (f + z * (1.0 - e))) ** 4
    body = (1.0 - e) * (1.0 - (f * (z - 1.0) + 5.0 * z) / (f + z) * e
                        - (f + 2.0) * z**3 / (f + z) ** 3 * e**2)
    return lead * (body + 2.0 * z**2 * f * (f + 3.0) * e**2 * tau / (f + z) ** 2)


def cumulants(q: QuenchParams, C0: float, C12_0: float, Ctheta0: float, tau):
    """(C, C12, C_theta) at ``tau`` from the given pre-quench values."""
    f, z = q.f, q.zeta0
    tau = np.asarray(tau, dtype=float)
    e = _decay(q, tau)
    shrink = (f / (f + z * (1.0 - e))) ** 4 * e**2
    C = shrink * C0 + relaxation_profile(q, tau) / q.a
    C12 = shrink * C12_0
    diffusion = -(f + 2.0) * z * (1.0 - e) / (4.0 * f**2 * (f + z)) + tau / (2.0 * f)
    C_theta = Ctheta0 + q.phase_noise_factor * q.a * diffusion
    return C, C12, C_theta


def moments(q: QuenchParams, tau) -> dict:
    """All closed-form moments on a tau grid, started from the stationary state."""
    m0 = q.initial_moments()
    C, C12, Cth = cumulants(q, m0.C, m0.C12, m0.C_theta, tau)
    return {"rho_m": rho_mean(q, tau), "C": C, "C12": C12, "C_theta": Cth}


def xi_trajectory(q: QuenchParams, tau):
    m = moments(q, tau)
    return 1.0 - (m["C"] - m["C12"]) / (4.0 * m["rho_m"] ** 2) - 0.5 * m["C_theta"]


def squeezing_threshold_curve(q: QuenchParams, tau):
    return 1.0 - 1.0 / (2.0 * rho_mean(q, tau))


def xi_late(q: QuenchParams, tau):
    """Squeezing once radial correlations have died out (f tau >> 1)."""
    f, z, k = q.f, q.zeta0, q.phase_noise_factor
    tau = np.asarray(tau, dtype=float)
    c_theta_reduced = ((2.0 - z) / (4.0 * z * (f + z))
                       + k * (-(f + 2.0) * z / (4.0 * f**2 * (f + z)) + tau / (2.0 * f)))
    return 1.0 - q.a * (1.0 / (4.0 * f**2) + 0.5 * c_theta_reduced)


def xi_initial(q: QuenchParams) -> float:
    """Pre-quench squeezing in closed form."""
    z = q.zeta0
    return 1.0 - (2.0 - z) / (8.0 * q.rho0) * (1.0 / (q.f + 2.0 * z) + 1.0 / z)


def initial_entanglement_zeta(f: float) -> float:
    """Smallest zeta0 whose stationary state is entangled (linear law, eta = 1)."""
    return (6.0 - 5.0 * f + math.sqrt(36.0 + 28.0 * f + 25.0 * f * f)) / 22.0


def disentanglement_bound(q: QuenchParams) -> float:
    """Crossing of the late-time squeezing with the late-time threshold 1 - alpha / (2 f Gamma).

    With the default phase-noise factor this reduces to 5/2 - 1/zeta0 for
    every f; it overestimates the exact crossing because the radial
    cumulants have not yet relaxed.
    """
    f, z, k = q.f, q.zeta0, q.phase_noise_factor
    return (2.0 - 1.0 / f - (2.0 - z) * f / (2.0 * z * (f + z))
            + k * (f + 2.0) * z / (2.0 * f * (f + z))) / k


@dataclass(frozen=True)
class DisentanglementTime:
    bound: float
    numeric: float


def disentanglement_time(q: QuenchParams, tol: float = 1e-10) -> DisentanglementTime:
    """Late-time estimate and the exact crossing of xi(tau) with its threshold."""

    def g(t):
        return float(xi_trajectory(q, t) - squeezing_threshold_curve(q, t))

    if g(0.0) <= 0:
        raise NeverEntangled(
            f"zeta0 = {q.zeta0} is below the initial-entanglement value {initial_entanglement_zeta(q.f):.6g}")
    hi = 25.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise RuntimeError("squeezing never drops below threshold")
    return DisentanglementTime(bound=disentanglement_bound(q), numeric=brentq(g, 0.0, hi, xtol=tol))


@dataclass(frozen=True)
class AnalyticCurves:
    tau: np.ndarray
    rho_m: np.ndarray
    C: np.ndarray
    C12: np.ndarray
    C_theta: np.ndarray
    e: np.ndarray
    xi: np.ndarray
    threshold: np.ndarray
    tau_d: Optional[float] = None
    tau_d_bound: Optional[float] = None

    def rows(self):
        cols = ("tau", "rho_m", "C", "C12", "C_theta", "xi", "threshold")
        for i in range(self.tau.size):
            yield {c: float(getattr(self, c)[i]) for c in cols}


def analytic_curves(q: QuenchParams, tau) -> AnalyticCurves:
    tau = np.asarray(tau, dtype=float)
    m = moments(q, tau)
    try:
        td = disentanglement_time(q)
        tau_d, bound = td.numeric, td.bound
    except NeverEntangled:
        tau_d, bound = None, None
    xi = 1.0 - (m["C"] - m["C12"]) / (4.0 * m["rho_m"] ** 2) - 0.5 * m["C_theta"]
    return AnalyticCurves(tau=tau, rho_m=m["rho_m"], C=m["C"], C12=m["C12"], C_theta=m["C_theta"],
                          e=relaxation_profile(q, tau), xi=xi,
                          threshold=squeezing_threshold_curve(q, tau), tau_d=tau_d, tau_d_bound=bound)
