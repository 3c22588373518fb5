"""Partial-transpose entanglement test and the critical entangled-pump strength.

The covariance blocks follow quadrature order (x1, p1 | x2, p2). Quadratures
here carry an extra 1/sqrt(2) relative to canonical ones, so the blocks are
taken from 2 sigma, for which the vacuum is I/2.

The functional F_PT < 0 is a sufficient condition for entanglement. It is
evaluated on any symmetric input; physicality of the matrix (uncertainty
relation) is not checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NoThreshold
from .model import (LinearSaturation, ModelParams, NonlinearSaturation,
                    equilibrium_density, gain_potential_curvature)
from .stats import (CovarianceMatrix4, MadelungMoments, bootstrap, sample_covariance,
                    squeezing_from_moments)

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class PptBlocks:
    A: np.ndarray
    B: np.ndarray
    Cblk: np.ndarray


def _sigma(sigma) -> np.ndarray:
    s = sigma.sigma if isinstance(sigma, CovarianceMatrix4) else np.asarray(sigma, dtype=float)
    if s.shape != (4, 4):
        raise ValueError(f"sigma must be 4x4, got {s.shape}")
    return s


def ppt_blocks(sigma) -> PptBlocks:
    two = 2.0 * _sigma(sigma)
    return PptBlocks(A=two[:2, :2], B=two[2:, 2:], Cblk=two[:2, 2:])


def _det2(m: np.ndarray) -> float:
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def ppt_functional(sigma) -> float:
    """F_PT = det A det B + (1/4 - |det C|)^2 - tr(AJCJBJC^TJ) - (det A + det B)/4."""
    b = ppt_blocks(sigma)
    det_a, det_b, det_c = _det2(b.A), _det2(b.B), _det2(b.Cblk)
    cross = np.trace(b.A @ J @ b.Cblk @ J @ b.B @ J @ b.Cblk.T @ J)
    return float(det_a * det_b + (0.25 - abs(det_c)) ** 2 - cross - 0.25 * (det_a + det_b))


def squeezing_threshold(rho_m: float) -> float:
    """Smallest xi at which the stationary covariance form violates PPT."""
    if not rho_m > 0:
        raise ValueError("rho_m must be > 0")
    return 1.0 - 1.0 / (2.0 * rho_m)


def analytic_steady_moments(params: ModelParams) -> MadelungMoments:
    """Gaussian weak-noise moments of the stationary state.

    Uses the curvature G''[rho_m] = -P'[rho_m] (constant Gamma). Raises
    NoEquilibrium if the potential has no minimum.
    """
    rho = equilibrium_density(params)
    chi, gamma, eta = params.chi0, params.Gamma, params.eta
    g2 = float(gain_potential_curvature(params, rho))
    if not g2 > 0:
        raise ValueError("density curvature G'' must be positive at rho_m")
    noise = (1.0 + eta) * gamma - 2.0 * eta * chi
    denom = 2.0 * g2 * (g2 * rho + 2.0 * chi)
    C = noise * (g2 * rho + chi) / denom
    C12 = noise * chi / denom
    C_theta = noise / (8.0 * chi * rho) if chi > 0 else None
    return MadelungMoments(rho_m=rho, C=C, C12=C12, C_theta=C_theta)


def threshold_polynomial(zeta, kappa, eta: float):
    """Positive exactly when the analytic stationary state violates PPT."""
    zeta = np.asarray(zeta, dtype=float)
    return (2.0 * (2.0 + eta) * zeta**2 + ((4.0 + eta) * kappa - 2.0 * (1.0 + eta)) * zeta
            - (1.0 + eta) * kappa)


def zeta_critical_explicit(eta: float, kappa: float) -> float:
    """Positive root of the threshold quadratic at fixed kappa."""
    disc = 4.0 * (eta + 1.0) ** 2 + (eta + 4.0) ** 2 * kappa**2 + 4.0 * eta * (eta + 1.0) * kappa
    return (2.0 * eta + math.sqrt(disc) - (eta + 4.0) * kappa + 2.0) / (4.0 * (eta + 2.0))


def zeta_critical(eta: float, kappa_of_zeta: Callable[[float], float], n_scan: int = 400) -> float:
    """Self-consistent critical zeta for a kappa(zeta) curve.

    Scans (0, 1] for the first sign change of the threshold polynomial and
    refines it by bracketed root finding; the explicit radical is kept as a
    cross-check via :func:`zeta_critical_explicit`.
    """

    def poly(z):
        return float(threshold_polynomial(z, kappa_of_zeta(z), eta))

    grid = np.linspace(0.0, 1.0, n_scan + 1)[1:]
    vals = np.array([poly(z) for z in grid])
    if vals[0] > 0:
        if not poly(0.0) < 0:
            raise NoThreshold("threshold polynomial is non-negative at zeta = 0")
        lo, hi = 0.0, grid[0]
    else:
        pos = np.nonzero(vals > 0)[0]
        if pos.size == 0:
            raise NoThreshold(f"no entangled region in (0, 1] for eta = {eta}")
        i = pos[0]
        lo, hi = grid[i - 1], grid[i]
    return brentq(poly, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def _law_kind(law) -> str:
    if isinstance(law, LinearSaturation):
        return "linear"
    if isinstance(law, NonlinearSaturation):
        return "nonlinear"
    if law in ("linear", "nonlinear"):
        return law
    raise ValueError(f"unknown saturation law {law!r}")


def kappa_curve(law, f: float, zeta):
    """Closed-form flux elasticity kappa(zeta) for the given saturation law."""
    zeta = np.asarray(zeta, dtype=float)
    if _law_kind(law) == "linear":
        return f + zeta
    return (1.0 - zeta) * (zeta + f) / (1.0 + f)


def params_from_targets(law, f: float, zeta: float, rho_m: float, eta: float = 1.0,
                        Gamma: float = 1.0) -> ModelParams:
    if _law_kind(law) == "linear":
        return ModelParams.linear_from_targets(f, zeta, rho_m, Gamma=Gamma, eta=eta)
    return ModelParams.nonlinear_from_targets(f, zeta, rho_m, Gamma=Gamma, eta=eta)


@dataclass(frozen=True)
class PhasePoint:
    model: str
    f: float
    eta: float
    zeta: float
    kappa: float
    F_PT: float
    entangled: bool

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")


def _analytic_fpt(law, f, zeta, eta, rho_ref) -> float:
    if zeta == 0.0:
        return ppt_functional(CovarianceMatrix4.structured(rho_ref, 0.0))
    try:
        p = params_from_targets(law, f, zeta, rho_ref, eta=eta)
    except ValueError:
        return float("nan")
    xi = squeezing_from_moments(analytic_steady_moments(p))
    return ppt_functional(CovarianceMatrix4.structured(rho_ref, xi))


def phase_diagram(law, f_list: Iterable[float], eta_list: Iterable[float],
                  zeta_grid: Iterable[float], rho_ref: float = 100.0) -> list[PhasePoint]:
    """Entanglement verdict over an (f, eta, zeta) grid.

    ``entangled`` is the sign of the threshold polynomial; ``F_PT`` is the
    functional of the analytic stationary covariance at density ``rho_ref``
    (its sign does not depend on the density).
    """
    kind = _law_kind(law)
    out = []
    for f in f_list:
        for eta in eta_list:
            for z in zeta_grid:
                z = float(z)
                k = float(kappa_curve(kind, f, z))
                ent = bool(z > 0 and threshold_polynomial(z, k, eta) > 0)
                out.append(PhasePoint(kind, float(f), float(eta), z, k,
                                      _analytic_fpt(kind, f, z, eta, rho_ref), ent))
    return out


def boundary_curve(eta: float, kappas: Sequence[float]) -> np.ndarray:
    """zeta_crit(kappa) at fixed kappa for each entry of ``kappas``."""
    return np.array([zeta_critical_explicit(eta, float(k)) for k in kappas])


def critical_pump(law, f: float, eta: float) -> float:
    """zeta_crit where the kappa(zeta) curve of ``law`` meets the boundary."""
    kind = _law_kind(law)
    return zeta_critical(eta, lambda z: float(kappa_curve(kind, f, z)))


@dataclass(frozen=True)
class Verdict:
    F_PT: float
    se: float
    entangled: bool


def simulated_verdict(s, n_boot: int = 200, seed: int = 0, n_se: float = 4.0) -> Verdict:
    """Entangled only if F_PT of the sample covariance is below -n_se bootstrap SEs."""
    f, se = bootstrap(s, lambda x: ppt_functional(sample_covariance(x)), n_boot=n_boot, seed=seed)
    return Verdict(F_PT=f, se=se, entangled=bool(f < -n_se * se))
