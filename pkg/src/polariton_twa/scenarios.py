"""Scenario runners: glue between the physics modules and the output files."""

from __future__ import annotations

import json
import platform
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np
import pydantic
import scipy

from . import __version__
from .analytic import QuenchParams, analytic_curves, disentanglement_time
from .config import ScenarioConfig
from .entanglement import (analytic_steady_moments, boundary_curve, critical_pump, phase_diagram,
                           ppt_functional, simulated_verdict, squeezing_threshold)
from .errors import NeverEntangled, NoThreshold
from .io import canonical_json, manifest_hash, write_csv, write_json, write_snapshot
from .model import equilibrium_density, excess_pump
from .sde import EnsembleState, run_protocol
from .stats import (CovarianceMatrix4, covariance, madelung_moments, quadrature_variances,
                    squeezing_from_moments, xi_standard_error)

UNITS = "Gamma = 1 sets the rate unit; tau = Gamma t; densities are mode occupations"


def build_manifest(cfg: ScenarioConfig) -> dict:
    """Resolved config, seed and versions; the output location is left out so
    the same run written to two directories produces identical files."""
    config = cfg.resolved()
    config["output"].pop("dir", None)
    m = {
        "tool": "polariton-twa",
        "version": __version__,
        "scenario": cfg.scenario,
        "config": config,
        "seed": cfg.integrator.seed,
        "units": UNITS,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "pydantic": pydantic.__version__},
    }
    if cfg.model is not None:
        params = cfg.model_params()
        m["params"] = params.to_dict()
        m["params_hash"] = params.digest()
    return m


class Run:
    """Output directory plus the manifest hash stamped on every file."""

    def __init__(self, cfg: ScenarioConfig, out_dir: Optional[Path] = None):
        self.cfg = cfg
        self.dir = Path(out_dir if out_dir is not None else cfg.output.dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = build_manifest(cfg)
        self.sha = manifest_hash(self.manifest)
        self.files: list[Path] = []

    def write_manifest(self):
        body = dict(self.manifest, manifest_sha256=self.sha)
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(json.loads(canonical_json(body)), sort_keys=True, indent=2) + "\n")
        self.files.append(p)

    def table(self, stem: str, columns, rows, fmt: Optional[str] = None) -> Path:
        rows = list(rows)
        if (fmt or self.cfg.output.format) == "json":
            p = write_json(self.dir / f"{stem}.json", {"columns": list(columns), "rows": rows}, self.sha)
        else:
            p = write_csv(self.dir / f"{stem}.csv", columns, rows, self.sha)
        self.files.append(p)
        return p

    def record(self, name: str, payload: dict) -> Path:
        p = write_json(self.dir / name, payload, self.sha)
        self.files.append(p)
        return p

    def snapshots(self, snaps: list[EnsembleState]):
        mode = self.cfg.output.snapshots
        if mode == "none":
            return
        sub = self.dir / "snapshots"
        sub.mkdir(exist_ok=True)
        digest = self.manifest.get("params_hash", "")
        for i, s in enumerate(snaps):
            ext = "bin" if mode == "binary" else "csv"
            p = write_snapshot(sub / f"snap_{i:04d}.{ext}", s, self.cfg.integrator.seed, digest,
                               self.sha, binary=mode == "binary")
            self.files.append(p)


def _tau_key(t: float) -> str:
    return f"{t:.6g}"


def _vacuum(run: Run):
    cfg = run.cfg
    params = cfg.model_params()
    icfg = cfg.integrator.build()
    snaps = run_protocol(params, icfg, cfg.observe_at)
    run.snapshots(snaps)
    rows = []
    for tau, s in zip(cfg.observe_at, snaps):
        var, se = quadrature_variances(s)
        # Ornstein-Uhlenbeck relaxation from the origin, counted from the start of burn-in
        expected = 0.25 * (1.0 - np.exp(-params.Gamma * (tau / params.Gamma + icfg.burn_in)))
        row = {"tau": tau, "expected": expected}
        for k, name in enumerate(("x1", "p1", "x2", "p2")):
            row[f"var_{name}"] = var[k]
            row[f"se_{name}"] = se[k]
        row["within_4se"] = bool(np.all(np.abs(var - expected) <= 4.0 * se))
        rows.append(row)
    cols = ["tau", "expected"] + [f"{p}_{n}" for n in ("x1", "p1", "x2", "p2") for p in ("var", "se")]
    run.table("vacuum", cols + ["within_4se"], rows)


def _steady_record(s: EnsembleState, n_boot: int, n_se: float, seed: int) -> dict:
    mom = madelung_moments(s)
    cov = covariance(s)
    ver = simulated_verdict(s, n_boot=n_boot, seed=seed, n_se=n_se)
    return {"moments": mom.as_dict(), "covariance": cov.as_dict(), "xi_se": xi_standard_error(s),
            "xi_from_moments": squeezing_from_moments(mom), "F_PT": ver.F_PT, "F_PT_se": ver.se,
            "verdict": "entangled" if ver.entangled else "separable",
            "threshold": squeezing_threshold(mom.rho_m)}


def _analytic_record(params) -> dict:
    am = analytic_steady_moments(params)
    xi = squeezing_from_moments(am)
    return {"moments": am.as_dict(), "xi": xi, "threshold": squeezing_threshold(am.rho_m),
            "F_PT": ppt_functional(CovarianceMatrix4.structured(am.rho_m, xi)),
            "verdict": "entangled" if xi > squeezing_threshold(am.rho_m) else "separable"}


_STEADY_COLS = ["tau", "rho_m", "rho_m_se", "C", "C_se", "C12", "C12_se", "C_theta", "C_theta_se",
                "xi", "xi_se", "K", "F_PT", "F_PT_se", "verdict",
                "analytic_rho_m", "analytic_C", "analytic_C12", "analytic_C_theta", "analytic_xi",
                "analytic_F_PT", "analytic_verdict", "threshold"]


def _steady(run: Run):
    cfg = run.cfg
    params = cfg.model_params()
    equilibrium_density(params)
    snaps = run_protocol(params, cfg.integrator.build(), cfg.observe_at)
    run.snapshots(snaps)
    ana = _analytic_record(params)
    records, rows = {}, []
    for tau, s in zip(cfg.observe_at, snaps):
        rec = _steady_record(s, cfg.bootstrap.n_boot, cfg.bootstrap.n_se, cfg.integrator.seed)
        rec["clamp_events"] = s.clamp_events
        records[_tau_key(tau)] = rec
        m, am = rec["moments"], ana["moments"]
        rows.append({"tau": tau, **{k: m[k] for k in ("rho_m", "rho_m_se", "C", "C_se", "C12", "C12_se",
                                                      "C_theta", "C_theta_se")},
                     "xi": rec["covariance"]["xi"], "xi_se": rec["xi_se"], "K": rec["covariance"]["K"],
                     "F_PT": rec["F_PT"], "F_PT_se": rec["F_PT_se"], "verdict": rec["verdict"],
                     "analytic_rho_m": am["rho_m"], "analytic_C": am["C"], "analytic_C12": am["C12"],
                     "analytic_C_theta": am["C_theta"], "analytic_xi": ana["xi"],
                     "analytic_F_PT": ana["F_PT"], "analytic_verdict": ana["verdict"],
                     "threshold": rec["threshold"]})
    run.record("moments.json", {"analytic": ana, "by_tau": records})
    run.table("steady_state", _STEADY_COLS, rows)


def _phase(run: Run):
    pd = run.cfg.phase_diagram
    zetas, kappas = pd.zeta_values(), pd.kappa_values()
    points = []
    for law in pd.laws:
        points += phase_diagram(law, pd.f, pd.eta, zetas, rho_ref=pd.rho_ref)
    cols = ["model", "f", "eta", "zeta", "kappa", "F_PT", "entangled"]
    run.files.append(write_csv(run.dir / "phase_diagram.csv", cols,
                               [asdict(p) for p in points], run.sha))
    for eta in pd.eta:
        zc = boundary_curve(eta, kappas)
        run.files.append(write_csv(run.dir / f"boundary_eta{eta:g}.csv", ["eta", "kappa", "zeta_crit"],
                                   [{"eta": eta, "kappa": k, "zeta_crit": z} for k, z in zip(kappas, zc)],
                                   run.sha))
    rows = []
    for law in pd.laws:
        for f in pd.f:
            for eta in pd.eta:
                try:
                    zc = critical_pump(law, f, eta)
                except NoThreshold:
                    zc = None
                rows.append({"model": law, "f": f, "eta": eta, "zeta_crit": zc})
    run.files.append(write_csv(run.dir / "thresholds.csv", ["model", "f", "eta", "zeta_crit"], rows, run.sha))


def quench_params(cfg: ScenarioConfig, phase_noise_factor: float = 1.0) -> QuenchParams:
    params = cfg.model_params()
    law = params.saturation
    return QuenchParams(f=excess_pump(params), zeta0=params.zeta, alpha=law.alpha, Gamma=params.Gamma,
                        phase_noise_factor=phase_noise_factor)


_QUENCH_COLS = ["tau", "rho_m_sim", "rho_m_se", "C_sim", "C_se", "C12_sim", "C12_se", "C_theta_sim",
                "C_theta_se", "xi_sim", "xi_se", "F_PT", "F_PT_se", "verdict",
                "rho_m", "C", "C12", "C_theta", "xi", "threshold", "analytic_verdict"]


def measured_flip_time(taus, entangled) -> Optional[float]:
    """First observation time at which an initially entangled verdict turns separable."""
    ent = list(entangled)
    if not ent or not ent[0]:
        return None
    for t, e in zip(taus, ent):
        if not e:
            return float(t)
    return None


def _quench(run: Run):
    cfg = run.cfg
    q = quench_params(cfg)
    params = cfg.model_params()
    taus = np.asarray(cfg.observe_at, dtype=float)
    curves = analytic_curves(q, taus)
    run.table("analytic_curves", ["tau", "rho_m", "C", "C12", "C_theta", "xi", "threshold"], curves.rows())

    snaps = run_protocol(params, cfg.integrator.build(), cfg.observe_at)
    run.snapshots(snaps)
    rows, flags = [], []
    for i, (tau, s) in enumerate(zip(taus, snaps)):
        rec = _steady_record(s, cfg.bootstrap.n_boot, cfg.bootstrap.n_se, cfg.integrator.seed)
        m = rec["moments"]
        flags.append(rec["verdict"] == "entangled")
        rows.append({"tau": tau, "rho_m_sim": m["rho_m"], "rho_m_se": m["rho_m_se"], "C_sim": m["C"],
                     "C_se": m["C_se"], "C12_sim": m["C12"], "C12_se": m["C12_se"],
                     "C_theta_sim": m["C_theta"], "C_theta_se": m["C_theta_se"],
                     "xi_sim": rec["covariance"]["xi"], "xi_se": rec["xi_se"], "F_PT": rec["F_PT"],
                     "F_PT_se": rec["F_PT_se"], "verdict": rec["verdict"],
                     "rho_m": curves.rho_m[i], "C": curves.C[i], "C12": curves.C12[i],
                     "C_theta": curves.C_theta[i], "xi": curves.xi[i], "threshold": curves.threshold[i],
                     "analytic_verdict": "entangled" if curves.xi[i] > curves.threshold[i] else "separable"})
    run.table("quench", _QUENCH_COLS, rows)

    summary = {"f": q.f, "zeta0": q.zeta0, "alpha": q.alpha, "rho0": q.rho0, "rho_inf": q.rho_inf,
               "tau_d_measured": measured_flip_time(taus, flags)}
    for label, k in (("", 1.0), ("_two_mode_phase_noise", 2.0)):
        try:
            td = disentanglement_time(quench_params(cfg, k))
            summary[f"tau_d{label}"], summary[f"tau_d_bound{label}"] = td.numeric, td.bound
        except NeverEntangled:
            summary[f"tau_d{label}"], summary[f"tau_d_bound{label}"] = None, None
    run.record("quench_summary.json", summary)


_RUNNERS = {"vacuum-check": _vacuum, "steady-state": _steady, "phase-diagram": _phase, "quench": _quench}


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[Path] = None) -> Run:
    """Execute a validated scenario; returns the run with the list of files written."""
    run = Run(cfg, out_dir)
    run.write_manifest()
    _RUNNERS[cfg.scenario](run)
    return run
