"""Monte Carlo simulation of optimal and user-specified trading strategies.

Trading happens on the grid t_n = n*dt.  Within a step the trade comes
first, then resilience and the external shock act on the price deviation:

    X_{n+1-} = X_{n-} - xi_n
    Y_{n+1-} = (1 - dt*rho_n) * (Y_{n-} + gamma*xi_n) + sigma_n * eps_{n+1}

and the discounted cost is sum_n (1 - dt*phi)^n (Y_{n-} xi_n + gamma/2 xi_n^2
+ lam_n dt X_n^2), where X_n is the position held over [t_n, t_{n+1}).
Under the optimal feedback rule this recursion is exactly Euler-Maruyama
for P = X + Y/gamma, which is how the optimal kernel advances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import backend as _backend
from .model import Constant, DampedExponential, ModelParams, derived
from .riccati import InfiniteHorizonSolution, ValueCoefficients

FINITE = "finite"
INFINITE = "infinite"
MARKET_STREAM = 0
TRADE_STREAM = 1


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    T: float
    dt: float
    n_paths: int
    seed: int = 0
    mode: str = FINITE
    path_offset: int = 0
    record_every: int = 1

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def validate(self) -> None:
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(f"T/dt must be a positive integer, got {n}")
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.mode not in (FINITE, INFINITE):
            raise ValueError(f"mode must be '{FINITE}' or '{INFINITE}'")
        if self.record_every < 1 or self.n_steps % self.record_every:
            raise ValueError("record_every must divide the number of steps")
        if self.path_offset < 0 or self.path_offset + self.n_paths > 2 ** 32:
            raise ValueError("path indices must fit in 32 bits")

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def to_dict(self) -> dict:
        return {"T": self.T, "dt": self.dt, "n_paths": self.n_paths, "seed": self.seed,
                "mode": self.mode, "path_offset": self.path_offset, "record_every": self.record_every}


@dataclass
class PathEnsemble:
    """Recorded trajectories; ``x``, ``y``, ``p`` are undiscounted post-trade states."""

    cfg: SimConfig
    phi: float
    gamma: float
    t: np.ndarray
    p: np.ndarray
    x: np.ndarray
    y: np.ndarray
    costs: np.ndarray
    jump0: Optional[np.ndarray] = None
    jump_T: Optional[np.ndarray] = None
    max_residual: Optional[np.ndarray] = None
    n_qualify: Optional[np.ndarray] = None
    n_agree: Optional[np.ndarray] = None
    kind: str = "optimal"
    backend: str = "compiled"
    stream: int = MARKET_STREAM
    meta: dict = field(default_factory=dict)

    @property
    def path_ids(self) -> np.ndarray:
        return self.cfg.path_offset + np.arange(self.cfg.n_paths)

    @property
    def _disc(self) -> np.ndarray:
        return np.exp(-0.5 * self.phi * self.t)

    @property
    def x_tilde(self) -> np.ndarray:
        return self.x * self._disc

    @property
    def y_tilde(self) -> np.ndarray:
        return self.y * self._disc

    @property
    def p_tilde(self) -> np.ndarray:
        return self.p * self._disc

    def index_of(self, t: float) -> int:
        k = int(round(t / (self.cfg.dt * self.cfg.record_every)))
        if not 0 <= k < len(self.t) or abs(self.t[k] - t) > 1e-9:
            raise KeyError(f"time {t} is not a recorded node")
        return k


def _threads(num_threads: Optional[int]) -> int:
    return _backend.thread_count() if num_threads is None else max(1, int(num_threads))


def _c(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def _coefficient_path(coeffs, t: np.ndarray, T: float, mode: str):
    if isinstance(coeffs, ValueCoefficients):
        if mode == FINITE and coeffs.T + 1e-12 < T:
            raise ValueError("coefficient horizon is shorter than the simulation horizon")
        return np.interp(t, coeffs.t, coeffs.abar), np.interp(t, coeffs.t, coeffs.bbar)
    if isinstance(coeffs, InfiniteHorizonSolution):
        return np.full_like(t, coeffs.abar_inf), np.full_like(t, coeffs.bbar_inf)
    raise TypeError("coeffs must be ValueCoefficients or InfiniteHorizonSolution")


def _bcast(v, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=float), shape).astype(float)


def simulate_optimal(params: ModelParams, coeffs: Union[ValueCoefficients, InfiniteHorizonSolution],
                     cfg: SimConfig, abar_scale: float = 1.0, backend: Optional[str] = None,
                     num_threads: Optional[int] = None) -> PathEnsemble:
    """Simulate the optimal feedback strategy.

    ``abar_scale`` perturbs the coefficient driving the dynamics while the
    feedback residual is still measured against the unperturbed one; it
    exists to check that the residual detects a wrong strategy.
    """
    cfg.validate()
    kern = _backend.get_backend(backend)
    N, dt, g = cfg.n_steps, cfg.dt, params.gamma
    t = cfg.grid()
    abar, bbar = _coefficient_path(coeffs, t, cfg.T, cfg.mode)
    dc = derived(params, t)
    rho, lam, sig, a = (_bcast(v, t.shape) for v in (dc.rho, dc.lam, dc.sigma, dc.a))
    a_eff = abar_scale * abar
    coef = 1.0 - (lam + rho * a_eff) / a
    kappa = rho * (lam + rho * a_eff) / a
    shift = np.exp(0.5 * params.phi * t) * rho * bbar / (2.0 * a)
    ia1 = -rho * abar - lam
    ia2 = -rho / g * abar + rho + 0.5 * params.phi
    ib = -0.5 * rho * bbar
    w = (1.0 - dt * params.phi) ** np.arange(N + 1)
    check = np.ones(N + 1)
    if cfg.mode == FINITE:
        coef[N], shift[N], check[N] = 0.0, 0.0, 0.0
    else:
        w[N] = 0.0
    out = kern.optimal_paths(
        int(cfg.seed), int(cfg.path_offset), int(cfg.n_paths), float(params.x0), float(params.y0),
        float(g), float(dt), _c(coef), _c(kappa), _c(shift), _c(rho), _c(sig / g * math.sqrt(dt)),
        _c(w), _c(lam * dt), _c(np.exp(-0.5 * params.phi * t)), _c(ia1), _c(ia2), _c(ib), _c(check),
        int(cfg.record_every), _threads(num_threads))
    if np.any(out["blown_up"]) or not np.all(np.isfinite(out["cost"])):
        raise SimulationError("non-finite state encountered in the optimal simulation")
    rec = slice(None, None, cfg.record_every)
    jump_T = None
    if cfg.mode == FINITE:
        jump_T = -math.exp(-0.5 * params.phi * cfg.T) * out["x_pre_terminal"]
    return PathEnsemble(
        cfg=cfg, phi=params.phi, gamma=g, t=t[rec], p=out["P"], x=out["X"], y=out["Y"],
        costs=out["cost"], jump0=out["jump0"], jump_T=jump_T, max_residual=out["max_residual"],
        kind="optimal", backend=_backend.backend_name(kern),
        meta={"abar_scale": abar_scale})


@dataclass(frozen=True)
class AffineStrategy:
    """Trade rule xi_n = alpha_n X_{n-} + beta_n Y_{n-} + shift_n + eta_n * zeta_n.

    ``eta`` already includes sqrt(dt); zeta is drawn from the trade-noise stream.
    """

    alpha: np.ndarray
    beta: np.ndarray
    shift: np.ndarray
    eta: np.ndarray
    name: str = "affine"


def twap(params: ModelParams, cfg: SimConfig) -> AffineStrategy:
    N = cfg.n_steps
    s = np.zeros(N + 1)
    s[:N] = params.x0 / N
    z = np.zeros(N + 1)
    return AffineStrategy(z, z.copy(), s, z.copy(), "twap")


def block_trade(params: ModelParams, cfg: SimConfig) -> AffineStrategy:
    N = cfg.n_steps
    s = np.zeros(N + 1)
    s[0] = params.x0
    z = np.zeros(N + 1)
    return AffineStrategy(z, z.copy(), s, z.copy(), "block")


def no_trading(cfg: SimConfig) -> AffineStrategy:
    z = np.zeros(cfg.n_steps + 1)
    return AffineStrategy(z, z.copy(), z.copy(), z.copy(), "none")


def feedback_rule(params: ModelParams, coeffs, cfg: SimConfig, jump_scale: float = 1.0,
                  trade_noise: float = 0.0) -> AffineStrategy:
    """The optimal feedback as an affine rule, optionally perturbed.

    ``jump_scale`` multiplies the initial trade; ``trade_noise`` adds
    trade_noise * sqrt(dt) * N(0, 1) to every interior trade.
    """
    N, t = cfg.n_steps, cfg.grid()
    abar, bbar = _coefficient_path(coeffs, t, cfg.T, cfg.mode)
    dc = derived(params, t)
    rho, lam, a = (_bcast(v, t.shape) for v in (dc.rho, dc.lam, dc.a))
    coef = 1.0 - (lam + rho * abar) / a
    shift = np.exp(0.5 * params.phi * t) * rho * bbar / (2.0 * a)
    alpha = 1.0 - coef
    beta = -coef / params.gamma
    alpha[0] *= jump_scale
    beta[0] *= jump_scale
    shift[0] *= jump_scale
    eta = np.full(N + 1, trade_noise * math.sqrt(cfg.dt))
    eta[N] = 0.0
    name = "optimal" if jump_scale == 1.0 and trade_noise == 0.0 else \
        f"optimal(jump x{jump_scale:g}, noise {trade_noise:g})"
    return AffineStrategy(alpha, beta, shift, eta, name)


def simulate_strategy(params: ModelParams, strategy: AffineStrategy, cfg: SimConfig,
                      sign_tol: Optional[float] = None, backend: Optional[str] = None,
                      num_threads: Optional[int] = None) -> PathEnsemble:
    """Run an affine trade rule through the discrete state recursion.

    In finite mode the last trade is replaced by a full close-out.  With
    ``sign_tol`` set, steps whose post-trade position is within the
    tolerance are tallied for the trade-sign rule.
    """
    cfg.validate()
    kern = _backend.get_backend(backend)
    N, dt, g = cfg.n_steps, cfg.dt, params.gamma
    arrays = [np.array(v, dtype=float) for v in (strategy.alpha, strategy.beta, strategy.shift, strategy.eta)]
    if any(v.shape != (N + 1,) for v in arrays):
        raise ValueError(f"strategy arrays must have length {N + 1} to match the grid")
    alpha, beta, shift, eta = arrays
    t = cfg.grid()
    dc = derived(params, t)
    rho, lam, sig = (_bcast(v, t.shape) for v in (dc.rho, dc.lam, dc.sigma))
    w = (1.0 - dt * params.phi) ** np.arange(N + 1)
    if cfg.mode == FINITE:
        alpha[N], beta[N], shift[N], eta[N] = 1.0, 0.0, 0.0, 0.0
        sign_last = N - 2
    else:
        w[N] = 0.0
        sign_last = N - 1
    tol = -1.0 if sign_tol is None else float(sign_tol)
    out = kern.strategy_paths(
        int(cfg.seed), int(cfg.path_offset), int(cfg.n_paths), float(params.x0), float(params.y0),
        float(g), float(dt), _c(alpha), _c(beta), _c(shift), _c(eta), _c(rho), _c(sig * math.sqrt(dt)),
        _c(w), _c(lam * dt), tol, int(sign_last), int(cfg.record_every), _threads(num_threads))
    if np.any(out["blown_up"]) or not np.all(np.isfinite(out["cost"])):
        raise SimulationError("non-finite state encountered in the strategy simulation")
    return PathEnsemble(
        cfg=cfg, phi=params.phi, gamma=g, t=t[::cfg.record_every], p=out["P"], x=out["X"], y=out["Y"],
        costs=out["cost"], n_qualify=out["n_qualify"], n_agree=out["n_agree"],
        kind=strategy.name, backend=_backend.backend_name(kern))


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    n_paths: int
    horizon: float
    mode: str

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths,
                "horizon": self.horizon, "mode": self.mode}


def estimate_cost(ensemble: PathEnsemble, params: Optional[ModelParams] = None) -> CostEstimate:
    """Sample mean and standard error of the per-path discounted cost."""
    c = np.asarray(ensemble.costs, dtype=float)
    n = len(c)
    mean = math.fsum(c) / n
    var = math.fsum((c - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return CostEstimate(mean, math.sqrt(var / n), n, ensemble.cfg.T, ensemble.cfg.mode)


def recompute_costs(ensemble: PathEnsemble, params: ModelParams) -> np.ndarray:
    """Per-path costs rebuilt from fully recorded paths (reference implementation)."""
    cfg = ensemble.cfg
    if cfg.record_every != 1:
        raise ValueError("recompute_costs needs every step recorded")
    N, dt, g = cfg.n_steps, cfg.dt, params.gamma
    t = cfg.grid()
    lam = _bcast(params.lam(t), t.shape)
    x_prev = np.concatenate([np.full((cfg.n_paths, 1), params.x0), ensemble.x[:, :-1]], axis=1)
    y_pre = g * (ensemble.p - x_prev)
    y_pre[:, 0] = params.y0
    xi = x_prev - ensemble.x
    w = (1.0 - dt * params.phi) ** np.arange(N + 1)
    if cfg.mode == INFINITE:
        w[N] = 0.0
    terms = w * (y_pre * xi + 0.5 * g * xi * xi + lam * dt * ensemble.x ** 2)
    return np.array([math.fsum(row) for row in terms])


def feedback_residual(ensemble: PathEnsemble) -> float:
    """Largest |I^A (x, y) + I^B| over every simulated node and path."""
    if ensemble.max_residual is None:
        raise ValueError("feedback residual is only tracked for optimal ensembles")
    return float(np.max(ensemble.max_residual))


def moment_estimates(ensemble: PathEnsemble, t: float) -> tuple[float, float, float, float]:
    """Sample mean and variance of X_t with their standard errors."""
    x = ensemble.x[:, ensemble.index_of(t)]
    n = len(x)
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - mean) ** 4))
    se_var = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    return mean, math.sqrt(var / n), var, se_var


def closed_form_moments(params: ModelParams, abar_inf: float, t) -> tuple:
    """Mean and variance of the optimal position X_t under stationary coefficients."""
    if not params.constant_rho_lambda:
        raise ValueError("closed-form moments require constant rho and lambda")
    t = np.asarray(t, dtype=float)
    rho, lam, g = params.rho.value, params.lam.value, params.gamma
    a = g * rho + lam + 0.5 * params.phi * g
    coef = 1.0 - (lam + rho * abar_inf) / a
    kappa = rho * (lam + rho * abar_inf) / a
    p0 = params.x0 + params.y0 / g
    mean = coef * p0 * np.exp(-kappa * t)
    sig = params.sigma
    if isinstance(sig, Constant):
        s2, psi = sig.value ** 2, 0.0
    elif isinstance(sig, DampedExponential):
        s2, psi = sig.base ** 2, sig.decay
    else:
        raise ValueError("closed-form moments need constant or damped-exponential sigma")
    # coef^2 s2/g^2 * exp(-2 psi t) * int_0^t exp(-2(kappa - psi)(t - s)) ds
    r = 2.0 * (kappa - psi)
    if r == 0.0:
        integral = t
    else:
        integral = -np.expm1(-r * t) / r
    var = coef ** 2 * s2 / g ** 2 * np.exp(-2.0 * psi * t) * integral
    if var.ndim == 0:
        return float(mean), float(var)
    return mean, var
