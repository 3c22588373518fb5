"""Moment estimators over ensemble snapshots.

All reductions go through numpy's pairwise summation on arrays whose
layout does not depend on threading, so repeated runs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegeneratePhase
from .sde import EnsembleState

MIN_DENSITY = 1e-12
MIN_SAMPLES = 100


def _states(s) -> np.ndarray:
    return s.states if isinstance(s, EnsembleState) else np.asarray(s, dtype=float)


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class MadelungMoments:
    """Density/phase moments of a (symmetrized) two-mode ensemble.

    ``C_theta`` is ``None`` when the phase sum is unconstrained (chi = 0 in the
    closed forms). The ``*_se`` fields are one-sigma standard errors and are
    ``None`` for analytic moments.
    """

    rho_m: float
    C: float
    C12: float
    C_theta: Optional[float]
    n_samples: int = 0
    rho_m_se: Optional[float] = None
    C_se: Optional[float] = None
    C12_se: Optional[float] = None
    C_theta_se: Optional[float] = None
    circular_variance: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CovarianceMatrix4:
    """4x4 quadrature covariance in the order (x1, p1, x2, p2)."""

    sigma: np.ndarray
    xi: float
    K: float
    n_samples: int = 0

    @classmethod
    def from_sigma(cls, sigma, n_samples: int = 0) -> "CovarianceMatrix4":
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (4, 4):
            raise ValueError(f"sigma must be 4x4, got {sigma.shape}")
        sigma = 0.5 * (sigma + sigma.T)
        sigma.flags.writeable = False
        return cls(sigma=sigma, xi=squeezing_from_sigma(sigma), K=_anisotropy(sigma), n_samples=n_samples)

    @classmethod
    def structured(cls, rho_m: float, xi: float) -> "CovarianceMatrix4":
        """The stationary form (rho_m / 2) [[1,0,0,xi],[0,1,xi,0],[0,xi,1,0],[xi,0,0,1]]."""
        m = np.eye(4)
        m[0, 3] = m[3, 0] = m[1, 2] = m[2, 1] = xi
        return cls.from_sigma(0.5 * rho_m * m)

    def as_dict(self) -> dict:
        return {"sigma": self.sigma.tolist(), "xi": self.xi, "K": self.K, "n_samples": self.n_samples}


def madelung_moments(s) -> MadelungMoments:
    """rho_m, C, C12 and C_theta of a snapshot, with delta-method standard errors.

    The phase sum theta_+ = theta_1 + theta_2 is measured on the branch
    centred at pi/2; C_theta is its mean square offset from pi/2.
    """
    x = _states(s)
    n = x.shape[0]
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} trajectories, got {n}")
    r1 = x[:, 0] ** 2 + x[:, 1] ** 2
    r2 = x[:, 2] ** 2 + x[:, 3] ** 2
    if min(r1.min(), r2.min()) < MIN_DENSITY:
        raise DegeneratePhase("a trajectory sits at the origin; phase undefined")

    d1, d2 = r1 - r1.mean(), r2 - r2.mean()
    rho_i = 0.5 * (r1 + r2)
    c_i = 0.5 * (d1 * d1 + d2 * d2)
    c12_i = d1 * d2
    dth = wrap_angle(np.arctan2(x[:, 1], x[:, 0]) + np.arctan2(x[:, 3], x[:, 2]) - 0.5 * np.pi)
    th_i = dth * dth
    sq = np.sqrt(n)
    # n/(n-1) turns the plug-in (co)variances into unbiased ones
    corr = n / (n - 1.0)
    return MadelungMoments(
        rho_m=float(rho_i.mean()),
        C=float(c_i.mean() * corr),
        C12=float(c12_i.mean() * corr),
        C_theta=float(th_i.mean()),
        n_samples=n,
        rho_m_se=float(rho_i.std(ddof=1) / sq),
        C_se=float(c_i.std(ddof=1) / sq),
        C12_se=float(c12_i.std(ddof=1) / sq),
        C_theta_se=float(th_i.std(ddof=1) / sq),
        circular_variance=float(1.0 - np.abs(np.exp(1j * dth).mean())),
    )


def sample_covariance(x: np.ndarray) -> np.ndarray:
    d = x - x.mean(axis=0)
    return d.T @ d / (x.shape[0] - 1)


def covariance(s) -> CovarianceMatrix4:
    x = _states(s)
    if x.shape[0] < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} trajectories, got {x.shape[0]}")
    return CovarianceMatrix4.from_sigma(sample_covariance(x), n_samples=x.shape[0])


def squeezing_from_sigma(sigma) -> float:
    """xi as the symmetrized cross term over the mean diagonal."""
    s = np.asarray(sigma, dtype=float)
    cross = 0.25 * (s[0, 3] + s[3, 0] + s[1, 2] + s[2, 1])
    diag = 0.25 * np.trace(s)
    return float(cross / diag)


def squeezing_from_moments(m: MadelungMoments) -> float:
    """xi = 1 - (C - C12) / (4 rho_m^2) - C_theta / 2; an unpinned phase gives 0."""
    if m.C_theta is None:
        return 0.0
    return 1.0 - (m.C - m.C12) / (4.0 * m.rho_m**2) - 0.5 * m.C_theta


def _anisotropy(sigma: np.ndarray) -> float:
    q_minus = sigma[0, 0] + sigma[3, 3] - 2.0 * sigma[0, 3]
    q_plus = sigma[0, 0] + sigma[3, 3] + 2.0 * sigma[0, 3]
    if not q_plus > 0:
        return float("nan")
    return float(q_minus / q_plus)


def anisotropy(cov: CovarianceMatrix4) -> float:
    """K = <q_-^2> / <q_+^2> with q_pm = (x1 +- p2) / sqrt(2)."""
    s = cov.sigma
    if not s[0, 0] + s[3, 3] + 2.0 * s[0, 3] > 0:
        raise ValueError("<q_+^2> must be positive")
    return _anisotropy(s)


def xi_standard_error(s) -> float:
    """Delta-method standard error of :func:`squeezing_from_sigma` on a sample."""
    x = _states(s)
    d = x - x.mean(axis=0)
    u = 0.5 * (d[:, 0] * d[:, 3] + d[:, 1] * d[:, 2])
    w = 0.25 * (d * d).sum(axis=1)
    xi = u.mean() / w.mean()
    return float((u - xi * w).std(ddof=1) / (np.sqrt(x.shape[0]) * w.mean()))


def bootstrap(s, statistic: Callable[[np.ndarray], float], n_boot: int = 200,
              seed: int = 0) -> tuple[float, float]:
    """Point estimate and bootstrap standard error of ``statistic`` over trajectories."""
    x = _states(s)
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    reps = np.empty(n_boot)
    for i in range(n_boot):
        reps[i] = statistic(x[rng.integers(0, n, n)])
    return float(statistic(x)), float(reps.std(ddof=1))


def quadrature_variances(s) -> tuple[np.ndarray, np.ndarray]:
    """Per-quadrature sample variance and its standard error."""
    x = _states(s)
    d = x - x.mean(axis=0)
    n = x.shape[0]
    var = (d * d).sum(axis=0) / (n - 1)
    se = (d * d).std(axis=0, ddof=1) / np.sqrt(n)
    return var, se
