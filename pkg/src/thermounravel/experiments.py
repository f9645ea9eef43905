"""Run orchestration shared by the CLI: oracle, unraveling, comparison, detailed balance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .density import gibbs_state, trace_distance
from .errors import ConfigError
from .io import columns_for, observable_row
from .linalg import hermitian_eig
from .oracle import EnvironmentSpec, integrate_oracle
from .unravel import UnravelResult, jump_operator, resolve_parameters, run_unraveling

DIAGNOSTIC_COLUMNS = ["time", "trace_raw", "jumps", "alpha", "beta", "gamma"]


@dataclass
class SeriesOutput:
    series: list[dict]
    columns: list[str]
    diagnostics: list[dict] | None = None


def oracle_run(cfg: SimConfig) -> list[tuple[float, np.ndarray]]:
    model = cfg.build_model()
    env = cfg.build_env()
    rho0 = cfg.build_initial_density(model)
    r = cfg.run
    return integrate_oracle(rho0, model, env, r.dt, r.t_end, r.record_every, degeneracy_tol=r.degeneracy_tol)


def unravel_run(cfg: SimConfig) -> UnravelResult:
    model = cfg.build_model()
    return run_unraveling(cfg.build_ensemble(model), model, cfg.build_env(), cfg.unravel_config())


def oracle_series(cfg: SimConfig) -> SeriesOutput:
    H = cfg.build_model().H
    obs = cfg.output.observables
    series = [
        observable_row(t, rho, H, obs, trace_raw=float(np.trace(rho).real)) for t, rho in oracle_run(cfg)
    ]
    return SeriesOutput(series, columns_for(obs, with_oracle=False))


def _diagnostic_rows(result: UnravelResult) -> list[dict]:
    return [
        {"time": d.time, "trace_raw": d.trace_raw, "jumps": d.jumps, "alpha": d.alpha, "beta": d.beta, "gamma": d.gamma}
        for d in result.diagnostics
    ]


def unravel_series(cfg: SimConfig) -> SeriesOutput:
    H = cfg.build_model().H
    obs = cfg.output.observables
    result = unravel_run(cfg)
    series = [observable_row(r.time, r.rho, H, obs, trace_raw=r.trace_raw) for r in result.records]
    return SeriesOutput(series, columns_for(obs, with_oracle=False), _diagnostic_rows(result))


def compare_series(cfg: SimConfig) -> SeriesOutput:
    """Unraveling observables plus the trace distance to the oracle at each recorded time."""
    H = cfg.build_model().H
    obs = list(cfg.output.observables)
    if "trace_distance_to_oracle" not in obs:
        obs.append("trace_distance_to_oracle")
    oracle = oracle_run(cfg)
    result = unravel_run(cfg)
    if len(oracle) != len(result.records):
        raise RuntimeError("oracle and unraveling recorded different time grids")
    series = []
    for (t_o, rho_o), rec in zip(oracle, result.records):
        if abs(t_o - rec.time) > 1e-9 * max(1.0, abs(t_o)):
            raise RuntimeError(f"time grids disagree: {t_o} vs {rec.time}")
        series.append(
            observable_row(rec.time, rec.rho, H, obs, trace_raw=rec.trace_raw, oracle_rho=rho_o, distance=trace_distance)
        )
    return SeriesOutput(series, columns_for(obs, with_oracle=True), _diagnostic_rows(result))


def detailed_balance_table(cfg: SimConfig) -> tuple[list[dict], float]:
    """Jump-operator matrix elements in the energy eigenbasis at the Gibbs state.

    Each row compares ``<m|Qt|n> / (alpha <m|Q|n>)`` computed from the general
    jump operator with ``(1 + exp((E_n - E_m)/(k_B T_e)))/2``.  Also returns
    the largest relative mismatch.
    """
    if cfg.env.T_e is None:
        raise ConfigError("detailed-balance needs env.T_e")
    consts = cfg.consts
    model = cfg.build_model()
    T = cfg.env.T_e
    c_hh = cfg.env.c_hh if cfg.env.c_hh > 0 else 1.0
    env = EnvironmentSpec.at_equilibrium(c_hh, T, consts)
    rho = gibbs_state(model.H, T, consts)
    params = resolve_parameters(rho, model, env, cfg.run.alpha_policy)
    Qt = jump_operator(rho, params, model)
    spec = hermitian_eig(model.H)
    V, E = spec.vectors, spec.values
    Qe = V.conj().T @ model.Q @ V
    Qte = V.conj().T @ Qt @ V
    kT = consts.k_B * T
    rows, worst = [], 0.0
    n_lvl = model.dim
    for m in range(n_lvl):
        for n in range(n_lvl):
            if m == n or abs(Qe[m, n]) < 1e-12:
                continue
            factor = (Qte[m, n] / (params.alpha * Qe[m, n])).real
            expected = 0.5 * (1.0 + math.exp((E[n] - E[m]) / kT))
            worst = max(worst, abs(factor - expected) / expected)
            direction = "down" if E[m] < E[n] else "up"
            rows.append(
                {"m": m, "n": n, "E_n_minus_E_m": float(E[n] - E[m]), "direction": direction,
                 "factor": float(factor), "expected": expected}
            )
    return rows, worst


def downward_upward_ratios(rows: list[dict]) -> list[tuple[int, int, float]]:
    """For each connected pair m < n: factor(m<-n) / factor(n<-m)."""
    lookup = {(r["m"], r["n"]): r["factor"] for r in rows}
    out = []
    for (m, n), f in sorted(lookup.items()):
        if m < n and (n, m) in lookup:
            out.append((m, n, f / lookup[(n, m)]))
    return out
