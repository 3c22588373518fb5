"""Physical parameters of two condensates coupled to exciton reservoirs.

Rates are in units where the cavity decay Gamma sets the time scale; all
densities are occupation numbers of a single mode.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Union

import numpy as np
from scipy.optimize import brentq

from .errors import NoEquilibrium


@dataclass(frozen=True)
class NonlinearSaturation:
    """Gain from an adiabatically eliminated reservoir, P R / (gamma_R + R rho)."""

    P: float
    R: float
    gamma_R: float

    def __post_init__(self):
        if self.P < 0:
            raise ValueError(f"reservoir pump P must be >= 0, got {self.P}")
        if self.R <= 0 or self.gamma_R <= 0:
            raise ValueError("scatter rate R and reservoir decay gamma_R must be > 0")

    kind = "nonlinear"


@dataclass(frozen=True)
class LinearSaturation:
    """Linearly saturating gain P0 - alpha rho (may turn negative)."""

    P0: float
    alpha: float

    def __post_init__(self):
        if self.P0 < 0:
            raise ValueError(f"base gain P0 must be >= 0, got {self.P0}")
        if self.alpha < 0:
            raise ValueError(f"gain slope alpha must be >= 0, got {self.alpha}")

    kind = "linear"


SaturationLaw = Union[NonlinearSaturation, LinearSaturation]


class Protocol(str, enum.Enum):
    CONSTANT_CHI = "constant-chi"
    STEP_OFF = "step-off"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the coupled two-mode system.

    ``omega1``/``omega2`` are kept for bookkeeping only: the quadratures are
    defined in the frame rotating with each mode, so they never enter the
    dynamics.
    """

    saturation: SaturationLaw
    Gamma: float = 1.0
    eta: float = 1.0
    chi0: float = 0.0
    protocol: Protocol = Protocol.CONSTANT_CHI
    omega1: float = 0.0
    omega2: float = 0.0

    def __post_init__(self):
        if not self.Gamma > 0:
            raise ValueError(f"Gamma must be > 0, got {self.Gamma}")
        if not self.eta >= 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if self.chi0 < 0:
            raise ValueError(f"chi0 must be >= 0, got {self.chi0}")
        object.__setattr__(self, "protocol", Protocol(self.protocol))

    @property
    def omega(self) -> float:
        return self.omega1 + self.omega2

    @property
    def zeta(self) -> float:
        """Entangled-pump strength 2 chi0 / Gamma."""
        return 2.0 * self.chi0 / self.Gamma

    @property
    def max_gain(self) -> float:
        return float(gain(self.saturation, 0.0))

    def with_chi(self, chi0: float) -> "ModelParams":
        return replace(self, chi0=chi0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["saturation"] = {"kind": self.saturation.kind, **asdict(self.saturation)}
        d["protocol"] = self.protocol.value
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def linear_from_targets(cls, f: float, zeta: float, rho_m: float, Gamma: float = 1.0,
                            eta: float = 1.0, **kw) -> "ModelParams":
        """Linear law tuned so the equilibrium sits at ``rho_m``.

        P0 = Gamma (1 + f), chi0 = zeta Gamma / 2 and alpha = Gamma (f + zeta) / rho_m.
        """
        if f <= 0 or rho_m <= 0:
            raise ValueError("need f > 0 and rho_m > 0")
        law = LinearSaturation(P0=Gamma * (1.0 + f), alpha=Gamma * (f + zeta) / rho_m)
        return cls(law, Gamma=Gamma, eta=eta, chi0=0.5 * zeta * Gamma, **kw)

    @classmethod
    def nonlinear_from_targets(cls, f: float, zeta: float, rho_m: float, gamma_R: float = 1.0,
                               Gamma: float = 1.0, eta: float = 1.0, **kw) -> "ModelParams":
        """Reservoir law tuned so the equilibrium sits at ``rho_m`` (needs zeta < 1)."""
        if f <= 0 or rho_m <= 0 or not 0 <= zeta < 1:
            raise ValueError("need f > 0, rho_m > 0 and 0 <= zeta < 1")
        R = gamma_R * (f + zeta) / (rho_m * (1.0 - zeta))
        P = (1.0 + f) * Gamma * gamma_R / R
        law = NonlinearSaturation(P=P, R=R, gamma_R=gamma_R)
        return cls(law, Gamma=Gamma, eta=eta, chi0=0.5 * zeta * Gamma, **kw)


@dataclass(frozen=True)
class ReservoirThermo:
    """Exciton reservoir thermodynamics, all in energy units (k_B = hbar = 1)."""

    rabi: float
    detuning: float
    mu_R: float
    T_R: float

    def __post_init__(self):
        if self.rabi <= 0:
            raise ValueError("Rabi splitting must be > 0")
        if self.T_R <= 0:
            raise ValueError("reservoir temperature must be > 0")


def gain(law: SaturationLaw, rho):
    """Stimulated-scattering gain P[rho]. Not clamped for the linear law."""
    if isinstance(law, LinearSaturation):
        return law.P0 - law.alpha * np.asarray(rho, dtype=float)
    return law.P * law.R / (law.gamma_R + law.R * np.asarray(rho, dtype=float))


def gain_slope(law: SaturationLaw, rho):
    """dP/drho."""
    rho = np.asarray(rho, dtype=float)
    if isinstance(law, LinearSaturation):
        return np.full_like(rho, -law.alpha)
    return -law.P * law.R**2 / (law.gamma_R + law.R * rho) ** 2


def gain_potential(params: ModelParams, rho):
    """G[rho] with G(0) = 0 and dG/drho = Gamma - P[rho]."""
    law = params.saturation
    rho = np.asarray(rho, dtype=float)
    if isinstance(law, LinearSaturation):
        return (params.Gamma - law.P0) * rho + 0.5 * law.alpha * rho**2
    return params.Gamma * rho - law.P * np.log1p(law.R * rho / law.gamma_R)


def gain_potential_derivative(params: ModelParams, rho):
    """G'[rho] = Gamma - P[rho]."""
    return params.Gamma - gain(params.saturation, rho)


def gain_potential_curvature(params: ModelParams, rho):
    """G''[rho] = -P'[rho] for constant Gamma."""
    return -gain_slope(params.saturation, rho)


def threshold_pump(params: ModelParams) -> float:
    """Pump at which the condensate density vanishes (chi = 0)."""
    law = params.saturation
    if isinstance(law, LinearSaturation):
        return params.Gamma
    return params.Gamma * law.gamma_R / law.R


def excess_pump(params: ModelParams) -> float:
    """Normalized excess pump f = P / P_th - 1."""
    law = params.saturation
    pump = law.P0 if isinstance(law, LinearSaturation) else law.P
    return pump / threshold_pump(params) - 1.0


def lower_polariton_offset(rabi: float, detuning: float) -> float:
    """Energy E of the lower polariton relative to the exciton line (negative)."""
    half = 0.5 * detuning
    return half - math.sqrt(half * half + rabi * rabi)


def eta_from_thermo(t: ReservoirThermo) -> float:
    """Noise enhancement coth(|E - mu_R| / 2 T_R) from reservoir backflow."""
    gap = abs(lower_polariton_offset(t.rabi, t.detuning) - t.mu_R)
    if gap == 0.0:
        raise ValueError("E == mu_R: reservoir at resonance, eta diverges")
    arg = gap / (2.0 * t.T_R)
    # coth(x) - 1 = 2 / (exp(2x) - 1); stays accurate for large x
    return 1.0 + 2.0 / math.expm1(2.0 * arg) if arg < 350 else 1.0


def equilibrium_density(params: ModelParams) -> float:
    """Density rho_m solving P[rho_m] + 2 chi0 = Gamma.

    Raises NoEquilibrium when no positive root exists (below threshold, or
    chi0 >= Gamma/2 for the reservoir law).
    """
    law = params.saturation
    target = params.Gamma - 2.0 * params.chi0
    if isinstance(law, LinearSaturation):
        if law.alpha <= 0:
            raise NoEquilibrium("linear law with alpha = 0 has no saturation")
        rho = (law.P0 - params.Gamma + 2.0 * params.chi0) / law.alpha
        if rho <= 0:
            raise NoEquilibrium(f"linear law below threshold (rho_m = {rho:.6g})")
        return rho

    # P_nlin is strictly decreasing towards 0, so a positive root needs 0 < target < P(0)
    if target <= 0:
        raise NoEquilibrium(
            f"zeta = {params.zeta:.6g} >= 1: gain cannot balance decay, density grows without bound")
    if gain(law, 0.0) <= target:
        raise NoEquilibrium("reservoir pump below threshold")

    def residual(r):
        return float(gain(law, r)) - target

    hi = 1.0
    while residual(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise NoEquilibrium("no bracket for the equilibrium density")
    return brentq(residual, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def flux_elasticity(params: ModelParams, rho_m: float | None = None) -> float:
    """kappa = G''[rho_m] rho_m / Gamma from first principles."""
    if rho_m is None:
        rho_m = equilibrium_density(params)
    return float(gain_potential_curvature(params, rho_m)) * rho_m / params.Gamma
