"""Long-time property checks: horizon convergence, turnpike bound, long-run
behaviour of the optimal position and the trade-sign rule."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .model import Constant, DampedExponential, ModelParams
from .riccati import InfiniteHorizonSolution, solve_abar_finite, solve_finite, solve_infinite
from .simulator import (INFINITE, FINITE, SimConfig, closed_form_moments, feedback_rule,
                        simulate_optimal, simulate_strategy)

GAP_CHUNK = 500


def _constants(params: ModelParams) -> tuple[float, float, float]:
    if not params.constant_rho_lambda:
        raise ValueError("this check requires constant rho and lambda")
    rho, lam, g = float(params.rho.value), float(params.lam.value), params.gamma
    return rho, lam, g * rho + lam + 0.5 * params.phi * g


@dataclass
class ConvergenceRow:
    T: float
    abar_gap: float
    c_gap: float
    path_gap: float
    path_gap_se: float
    path_gap_by_seed: list

    def to_dict(self) -> dict:
        return asdict(self)


def _strictly_decreasing(v) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.diff(v) < 0))


@dataclass
class ConvergenceTable:
    rows: list
    seeds: tuple
    n_paths: int
    dt: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def decreasing(self) -> dict:
        per_seed = np.array([r.path_gap_by_seed for r in self.rows])
        return {
            "abar_gap": _strictly_decreasing(self.column("abar_gap")),
            "c_gap": _strictly_decreasing(self.column("c_gap")),
            "path_gap": all(_strictly_decreasing(per_seed[:, j]) for j in range(per_seed.shape[1])),
        }

    def to_dict(self) -> dict:
        return {"seeds": list(self.seeds), "n_paths": self.n_paths, "dt": self.dt,
                "rows": [r.to_dict() for r in self.rows], "decreasing": self.decreasing()}


def path_gap(params: ModelParams, finite, infinite: InfiniteHorizonSolution, T: float, dt: float,
             n_paths: int, seed: int, include_terminal: bool = True,
             backend: Optional[str] = None) -> tuple[float, float]:
    """MC estimate of E[sup_t e^{-phi t} |X^(T)_t - X_t|^2] with shared noise.

    Returns the estimate and its standard error.  ``include_terminal``
    keeps the node t = T, where the finite-horizon position has been closed.
    """
    sups = []
    for start in range(0, n_paths, GAP_CHUNK):
        m = min(GAP_CHUNK, n_paths - start)
        fin = simulate_optimal(params, finite, SimConfig(T, dt, m, seed, FINITE, start), backend=backend)
        inf = simulate_optimal(params, infinite, SimConfig(T, dt, m, seed, INFINITE, start), backend=backend)
        gap = np.exp(-params.phi * fin.t) * (fin.x - inf.x) ** 2
        if not include_terminal:
            gap = gap[:, :-1]
        sups.append(gap.max(axis=1))
    sups = np.concatenate(sups)
    return float(np.mean(sups)), float(np.std(sups, ddof=1) / math.sqrt(len(sups))) if len(sups) > 1 else 0.0


def convergence_study(params: ModelParams, T_list: Sequence[float],
                      reference: Optional[InfiniteHorizonSolution] = None, dt: float = 0.01,
                      n_paths: int = 5000, seeds: Sequence[int] = (1, 2, 3),
                      include_terminal: bool = True, terminal_value: Optional[float] = None,
                      backend: Optional[str] = None) -> ConvergenceTable:
    """Finite-horizon quantities against their stationary limits for each T."""
    _constants(params)
    ref = reference or solve_infinite(params)
    c0 = float(ref.c(0.0))
    rows = []
    for T in T_list:
        steps = int(round(T / dt))
        vc = solve_finite(params, T, steps, terminal_value)
        gaps = [path_gap(params, vc, ref, T, dt, n_paths, s, include_terminal, backend) for s in seeds]
        means = [g[0] for g in gaps]
        rows.append(ConvergenceRow(
            T=float(T), abar_gap=abs(float(vc.abar[0]) - ref.abar_inf), c_gap=abs(float(vc.cval[0]) - c0),
            path_gap=float(np.mean(means)),
            path_gap_se=float(math.sqrt(sum(g[1] ** 2 for g in gaps)) / len(gaps)),
            path_gap_by_seed=means))
    return ConvergenceTable(rows, tuple(seeds), n_paths, dt)


@dataclass
class TurnpikeReport:
    T: float
    t: np.ndarray
    lhs: np.ndarray
    bound: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    mu: float
    K1: float
    K2: float
    K: float
    passed: bool
    min_margin: float
    x_bound_passed: bool

    def to_dict(self) -> dict:
        return {"T": self.T, "mu": self.mu, "K1": self.K1, "K2": self.K2, "K": self.K,
                "pass": self.passed, "min_margin": self.min_margin,
                "x_bound_pass": self.x_bound_passed, "nodes": len(self.t)}

    def table(self):
        return ["t", "lhs", "bound", "mean_x", "mean_y"], np.column_stack(
            [self.t, self.lhs, self.bound, self.mean_x, self.mean_y])


def turnpike_check(params: ModelParams, T: float, steps: int) -> TurnpikeReport:
    """Deterministic check of |E X_t| + |E Y_t| <= K (e^{-mu t} + e^{-mu (T-t)})."""
    rho, lam, a = _constants(params)
    if not lam > 0:
        raise ValueError("turnpike bound needs lambda > 0")
    g, phi = params.gamma, params.phi
    t, abar = solve_abar_finite(params, T, steps)
    kappa = rho * (lam + rho * abar) / a
    p0 = params.x0 + params.y0 / g
    mean_p = p0 * np.exp(-cumulative_simpson(kappa, x=t, initial=0.0))
    mean_x = (1.0 - (lam + rho * abar) / a) * mean_p
    mean_y = g * (lam + rho * abar) / a * mean_p
    mu = rho * lam / a
    K1 = (g * rho + 0.5 * phi * g) / a
    K2 = g * (lam + 0.5 * rho * g) / a
    K = (K1 + K2) * abs(p0)
    lhs = np.abs(mean_x) + np.abs(mean_y)
    bound = K * (np.exp(-mu * t) + np.exp(-mu * (T - t)))
    margin = bound - lhs
    x_ok = bool(np.all(np.abs(mean_x) <= K1 * abs(p0) * np.exp(-mu * t) + 1e-12))
    return TurnpikeReport(float(T), t, lhs, bound, mean_x, mean_y, mu, K1, K2, K,
                          bool(np.all(lhs <= bound + 1e-12)), float(margin.min()), x_ok)


@dataclass
class LongRunReport:
    case: str
    window: tuple
    n_paths: int
    estimate: float
    std_error: float
    stationary_variance: Optional[float] = None
    lower_bound: Optional[float] = None
    ratio_to_stationary: Optional[float] = None
    bootstrap_confidence: Optional[float] = None
    second_moment_at_start: Optional[float] = None
    closed_form_at_start: Optional[float] = None
    max_abs_window: Optional[float] = None
    psi: Optional[float] = None
    kappa: Optional[float] = None
    psi_bar: Optional[float] = None
    decay_condition_met: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _window_cfg(cfg: SimConfig, window) -> SimConfig:
    t_a, t_b = window
    if not 0 <= t_a < t_b <= cfg.T + 1e-12:
        raise ValueError("window must satisfy 0 <= start < end <= T")
    return cfg


def _window_mask(ens, window) -> np.ndarray:
    return (ens.t >= window[0] - 1e-9) & (ens.t <= window[1] + 1e-9)


def longrun_case1(params: ModelParams, cfg: SimConfig, window=(40.0, 50.0),
                  backend: Optional[str] = None) -> LongRunReport:
    """Damped external flow: the optimal position should die out."""
    if not isinstance(params.sigma, DampedExponential):
        raise ValueError("case 1 needs a damped-exponential sigma")
    _window_cfg(cfg, window)
    sol = solve_infinite(params)
    ens = simulate_optimal(params, sol, cfg, backend=backend)
    mask = _window_mask(ens, window)
    xw = ens.x[:, mask]
    k0 = ens.index_of(window[0])
    x2_start = ens.x[:, k0] ** 2
    mean, var = closed_form_moments(params, sol.abar_inf, window[0])
    psi = params.sigma.decay
    return LongRunReport(
        case="damped", window=tuple(window), n_paths=cfg.n_paths,
        estimate=float(np.mean(xw ** 2)), std_error=float(np.std(np.mean(xw ** 2, axis=1), ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0,
        second_moment_at_start=float(np.mean(x2_start)),
        closed_form_at_start=float(var + mean ** 2),
        max_abs_window=float(np.max(np.abs(xw))),
        psi=psi, kappa=sol.kappa, psi_bar=psi - sol.kappa, decay_condition_met=psi - sol.kappa > 0)


def longrun_case2(params: ModelParams, cfg: SimConfig, window=(30.0, 50.0), n_boot: int = 2000,
                  boot_seed: int = 0, backend: Optional[str] = None) -> LongRunReport:
    """Persistent external flow: the position keeps fluctuating with a positive second moment."""
    if not isinstance(params.sigma, Constant):
        raise ValueError("case 2 needs a constant sigma")
    _window_cfg(cfg, window)
    sol = solve_infinite(params)
    g = params.gamma
    sbar = params.sigma.value ** 2
    stationary = sol.coef ** 2 * sbar / (g * g * 2.0 * sol.kappa) if sol.kappa > 0 else math.inf
    bound = sbar / g ** 2 * sol.coef ** 2 / (4.0 * sol.kappa) if sol.kappa > 0 else math.inf
    ens = simulate_optimal(params, sol, cfg, backend=backend)
    per_path = np.mean(ens.x[:, _window_mask(ens, window)] ** 2, axis=1)
    est = float(np.mean(per_path))
    se = float(np.std(per_path, ddof=1) / math.sqrt(len(per_path))) if len(per_path) > 1 else 0.0
    rng = np.random.default_rng(boot_seed)
    boots = np.array([per_path[rng.integers(0, len(per_path), len(per_path))].mean() for _ in range(n_boot)])
    conf = float(np.mean(boots >= bound))
    return LongRunReport(
        case="constant", window=tuple(window), n_paths=cfg.n_paths, estimate=est, std_error=se,
        stationary_variance=stationary, lower_bound=bound,
        ratio_to_stationary=est / stationary if stationary not in (0.0, math.inf) else None,
        bootstrap_confidence=conf, kappa=sol.kappa)


@dataclass
class SignTestReport:
    fraction: Optional[float]
    n_samples: int
    n_agree: int
    position_tol: float
    applicable: bool
    conclusive: bool

    def to_dict(self) -> dict:
        return asdict(self)


def sign_test_property2(params: ModelParams, cfg: SimConfig, position_tol: float = 1e-3,
                        coeffs=None, backend: Optional[str] = None) -> SignTestReport:
    """Fraction of near-flat steps whose next position change follows the external shock."""
    if position_tol < 0:
        raise ValueError("position_tol must be nonnegative")
    t = cfg.grid()
    if np.all(np.asarray(params.sigma(t)) == 0.0):
        return SignTestReport(None, 0, 0, position_tol, applicable=False, conclusive=False)
    if coeffs is None:
        coeffs = solve_infinite(params) if cfg.mode == INFINITE else solve_finite(params, cfg.T, cfg.n_steps)
    ens = simulate_strategy(params, feedback_rule(params, coeffs, cfg), cfg, sign_tol=position_tol,
                            backend=backend)
    n = int(ens.n_qualify.sum())
    k = int(ens.n_agree.sum())
    if n < 100:
        warnings.warn(f"only {n} qualifying steps; sign test is inconclusive", RuntimeWarning)
    return SignTestReport(k / n if n else None, n, k, position_tol, applicable=True, conclusive=n >= 100)
