"""Backward coefficient equations, stationary limits and the quadratic value.

With deterministic coefficients every martingale integrand is zero and the
backward system collapses to ODEs solved on a uniform grid:

    dA/ds = phi*A - lam + (rho*A + lam)**2 / a,          A(T) = gamma/2
    dB/ds = (phi/2 + (lam + rho*A)*rho/a) * B - (2/gamma)*sigma*exp(-phi*s/2)*Z_A
    C(t)  = int_t^T h(s) ds

with h(s) = exp(-phi*s)*sigma^2*(2A - gamma)/(2 gamma^2) - rho^2 B^2/(4a)
+ exp(-phi*s/2)*sigma*Z_B/gamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, quad

from .model import Constant, DampedExponential, ModelParams, Table, derived

RANGE_TOL = 1e-9
ROOT_TOL = 1e-10
ZERO_TOL = 1e-12


class SolverError(RuntimeError):
    """A numerical routine produced a result outside its valid range."""


def _require_horizon(T: float, steps: int) -> None:
    if not (math.isfinite(T) and T > 0):
        raise ValueError("T must be positive")
    if int(steps) != steps or steps < 2:
        raise ValueError("steps must be an integer >= 2")


def abar_driver(params: ModelParams, s, abar):
    """Right-hand side of dA/ds, vectorised over ``s`` and ``abar``."""
    dc = derived(params, s)
    return params.phi * abar - dc.lam + (dc.rho * abar + dc.lam) ** 2 / dc.a


def solve_abar_finite(params: ModelParams, T: float, steps: int,
                      terminal_value: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the Riccati equation backward from ``T`` with classical RK4.

    Returns ``(t, abar)`` on the uniform grid ``linspace(0, T, steps + 1)``.
    ``terminal_value`` replaces gamma/2 at ``T`` (used to start the flow at
    its stationary point).
    """
    _require_horizon(T, steps)
    steps = int(steps)
    t = np.linspace(0.0, T, steps + 1)
    h = T / steps
    upper = 0.5 * params.gamma
    phi = params.phi
    # coefficients at nodes and midpoints, as plain floats for the scalar loop
    nodes = derived(params, t)
    mids = derived(params, t[1:] - 0.5 * h)
    rho_n, lam_n, a_n = (np.broadcast_to(v, t.shape).tolist() for v in (nodes.rho, nodes.lam, nodes.a))
    rho_m, lam_m, a_m = (np.broadcast_to(v, (steps,)).tolist() for v in (mids.rho, mids.lam, mids.a))

    def f(y, rho, lam, a):
        return phi * y - lam + (rho * y + lam) ** 2 / a

    abar = np.empty(steps + 1)
    abar[steps] = upper if terminal_value is None else float(terminal_value)
    y = float(abar[steps])
    for i in range(steps, 0, -1):
        rm, lm, am = rho_m[i - 1], lam_m[i - 1], a_m[i - 1]
        k1 = f(y, rho_n[i], lam_n[i], a_n[i])
        k2 = f(y - 0.5 * h * k1, rm, lm, am)
        k3 = f(y - 0.5 * h * k2, rm, lm, am)
        k4 = f(y - h * k3, rho_n[i - 1], lam_n[i - 1], a_n[i - 1])
        y = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (-RANGE_TOL <= y <= upper + RANGE_TOL):
            raise SolverError(
                f"Riccati solution left [0, gamma/2] at t={t[i - 1]:.6g} (value {y!r}); refine steps")
        abar[i - 1] = y
    return t, abar


def solve_bbar_finite(params: ModelParams, t: np.ndarray, abar: np.ndarray,
                      z_abar: Optional[np.ndarray] = None) -> np.ndarray:
    """Integrate the linear equation for B backward from B(T) = 0.

    ``z_abar`` is the martingale integrand of A; it is zero for deterministic
    coefficients, in which case the result must vanish identically.
    """
    t = np.asarray(t, dtype=float)
    abar = np.asarray(abar, dtype=float)
    if t.shape != abar.shape:
        raise ValueError("abar must live on the same grid as t")
    z = np.zeros_like(t) if z_abar is None else np.asarray(z_abar, dtype=float)
    gamma, phi = params.gamma, params.phi
    hs = np.diff(t)
    s_mid = t[1:] - 0.5 * hs
    a_mid = 0.5 * (abar[1:] + abar[:-1])
    z_mid = 0.5 * (z[1:] + z[:-1])

    def pieces(s, a_val, z_val):
        # B' = rate * B - force
        dc = derived(params, s)
        rate = 0.5 * phi + (dc.lam + dc.rho * a_val) * dc.rho / dc.a
        force = 2.0 / gamma * dc.sigma * np.exp(-0.5 * phi * s) * z_val
        return (np.broadcast_to(rate, np.shape(s)).tolist(),
                np.broadcast_to(force, np.shape(s)).tolist())

    r_n, f_n = pieces(t, abar, z)
    r_m, f_m = pieces(s_mid, a_mid, z_mid)
    bbar = np.empty_like(t)
    bbar[-1] = 0.0
    y = 0.0
    for i in range(len(t) - 1, 0, -1):
        h = hs[i - 1]
        rm, fm = r_m[i - 1], f_m[i - 1]
        k1 = r_n[i] * y - f_n[i]
        k2 = rm * (y - 0.5 * h * k1) - fm
        k3 = rm * (y - 0.5 * h * k2) - fm
        k4 = r_n[i - 1] * (y - h * k3) - f_n[i - 1]
        y = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bbar[i - 1] = y
    if not np.any(z) and np.max(np.abs(bbar)) > ZERO_TOL:
        raise SolverError("B should vanish with zero forcing; driver wiring is broken")
    return bbar


def c_integrand(params: ModelParams, s, abar, bbar, z_bbar=0.0):
    """h(s), the integrand whose tail integral gives C."""
    dc = derived(params, s)
    g = params.gamma
    return (np.exp(-params.phi * s) * dc.sigma ** 2 * (2.0 * abar - g) / (2.0 * g * g)
            - dc.rho ** 2 * bbar ** 2 / (4.0 * dc.a)
            + np.exp(-0.5 * params.phi * s) * dc.sigma * z_bbar / g)


def solve_c_finite(params: ModelParams, t: np.ndarray, abar: np.ndarray, bbar: np.ndarray,
                   z_bbar: Optional[np.ndarray] = None) -> np.ndarray:
    """C(t_i) = int_{t_i}^T h(s) ds by composite Simpson on the grid."""
    t = np.asarray(t, dtype=float)
    z = 0.0 if z_bbar is None else np.asarray(z_bbar, dtype=float)
    h = c_integrand(params, t, np.asarray(abar, dtype=float), np.asarray(bbar, dtype=float), z)
    if not np.all(np.isfinite(h)):
        raise SolverError("non-finite integrand in the C quadrature")
    cum = cumulative_simpson(h, x=t, initial=0.0)
    cval = cum[-1] - cum
    cval[-1] = 0.0
    return cval


@dataclass(frozen=True)
class ValueCoefficients:
    params: ModelParams
    T: float
    t: np.ndarray
    abar: np.ndarray
    bbar: np.ndarray
    cval: np.ndarray
    z_abar: np.ndarray
    z_bbar: np.ndarray
    z_c: np.ndarray
    a: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    @property
    def coef(self) -> np.ndarray:
        return 1.0 - (self.params.lam(self.t) + self.params.rho(self.t) * self.abar) / self.a

    @property
    def kappa(self) -> np.ndarray:
        rho = self.params.rho(self.t)
        return rho * (self.params.lam(self.t) + rho * self.abar) / self.a

    def at(self, i: int) -> "AssembledValue":
        return assemble_value(self.abar[i], self.bbar[i], self.cval[i], self.params.gamma)

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["t", "abar", "bbar", "c", "a", "coef", "kappa"]
        data = np.column_stack([self.t, self.abar, self.bbar, self.cval, self.a, self.coef, self.kappa])
        return cols, data

    def summary(self) -> dict:
        return {
            "horizon": self.T,
            "grid_size": len(self.t),
            "steps": self.steps,
            "terminal_residuals": {
                "abar": float(self.abar[-1] - 0.5 * self.params.gamma),
                "bbar": float(self.bbar[-1]),
                "c": float(self.cval[-1]),
            },
            "abar_0": float(self.abar[0]),
            "c_0": float(self.cval[0]),
        }


def solve_finite(params: ModelParams, T: float, steps: int,
                 terminal_value: Optional[float] = None) -> ValueCoefficients:
    """Solve the full backward system on ``[0, T]``."""
    t, abar = solve_abar_finite(params, T, steps, terminal_value)
    zeros = np.zeros_like(t)
    bbar = solve_bbar_finite(params, t, abar, zeros)
    cval = solve_c_finite(params, t, abar, bbar, zeros)
    a = np.asarray(derived(params, t).a, dtype=float) * np.ones_like(t)
    return ValueCoefficients(params, float(T), t, abar, bbar, cval,
                             zeros.copy(), zeros.copy(), zeros.copy(), a)


def _constant_rho_lam(params: ModelParams) -> tuple[float, float]:
    if not params.constant_rho_lambda:
        raise ValueError("stationary solution requires constant rho and lambda")
    return float(params.rho.value), float(params.lam.value)


def solve_abar_infinite(params: ModelParams) -> float:
    """Root of b x^2 + c x + d = 0 lying in [0, gamma/2].

    Uses -2d / (c + sqrt(c^2 - 4bd)), which equals the larger root for b > 0
    and reduces to -d/c when rho = 0.
    """
    _constant_rho_lam(params)
    dc = derived(params, 0.0)
    b, c, d = float(dc.b), float(dc.c), float(dc.d)
    disc = c * c - 4.0 * b * d
    if disc < 0:
        raise SolverError("negative discriminant in the stationary equation")
    root = -2.0 * d / (c + math.sqrt(disc))
    if not (-ROOT_TOL <= root <= 0.5 * params.gamma + ROOT_TOL):
        raise SolverError(f"stationary root {root!r} outside [0, gamma/2]")
    scale = max(1.0, abs(b) * root * root, abs(c * root), abs(d))
    if abs(b * root * root + c * root + d) > 1e-12 * scale:
        raise SolverError("stationary residual too large")
    return root


def solve_c_infinite(params: ModelParams, abar_inf: float) -> Callable:
    """Return t -> int_t^inf h(s) ds for the stationary coefficient."""
    _constant_rho_lam(params)
    g, phi = params.gamma, params.phi
    k = (2.0 * abar_inf - g) / (2.0 * g * g)
    sig = params.sigma
    if isinstance(sig, Constant):
        amp, rate = sig.value ** 2 * k, phi

        def c_fn(t):
            return amp / rate * np.exp(-rate * np.asarray(t, dtype=float))
        return c_fn
    if isinstance(sig, DampedExponential):
        amp, rate = sig.base ** 2 * k, phi + 2.0 * sig.decay

        def c_fn(t):
            return amp / rate * np.exp(-rate * np.asarray(t, dtype=float))
        return c_fn
    if isinstance(sig, Table):
        t_last = float(sig.times[-1])
        tail_amp = sig.values[-1] ** 2 * k / phi
        breaks = list(sig.times)

        def h(s):
            return math.exp(-phi * s) * sig(s) ** 2 * k

        def scalar(t):
            t = float(t)
            if t >= t_last:
                return tail_amp * math.exp(-phi * t)
            pts = [p for p in breaks if t < p < t_last]
            val, _ = quad(h, t, t_last, points=pts or None, limit=200, epsabs=1e-14, epsrel=1e-12)
            return val + tail_amp * math.exp(-phi * t_last)

        def c_fn(t):
            if np.ndim(t) == 0:
                return scalar(t)
            return np.array([scalar(x) for x in np.ravel(t)]).reshape(np.shape(t))
        return c_fn
    raise TypeError(f"unsupported sigma kind {type(sig).__name__}")


@dataclass(frozen=True)
class InfiniteHorizonSolution:
    params: ModelParams
    abar_inf: float
    a: float
    coef: float
    kappa: float
    c_fn: Callable = field(repr=False)
    bbar_inf: float = 0.0

    def c(self, t):
        return self.c_fn(t)

    def summary(self) -> dict:
        return {
            "abar_inf": self.abar_inf,
            "bbar_inf": self.bbar_inf,
            "c_0": float(self.c(0.0)),
            "a": self.a,
            "coef": self.coef,
            "kappa": self.kappa,
        }


def solve_infinite(params: ModelParams) -> InfiniteHorizonSolution:
    abar = solve_abar_infinite(params)
    dc = derived(params, 0.0)
    rho, lam, a = float(dc.rho), float(dc.lam), float(dc.a)
    return InfiniteHorizonSolution(
        params=params, abar_inf=abar, a=a,
        coef=1.0 - (lam + rho * abar) / a,
        kappa=rho * (lam + rho * abar) / a,
        c_fn=solve_c_infinite(params, abar),
    )


@dataclass(frozen=True)
class AssembledValue:
    A: np.ndarray
    B: np.ndarray
    C: float


def assemble_value(abar: float, bbar: float, cval: float, gamma: float) -> AssembledValue:
    """Full quadratic value coefficients from (A, B, C) scalars."""
    a12 = abar / gamma
    A = np.array([[abar, a12], [a12, (2.0 * abar - gamma) / (2.0 * gamma * gamma)]])
    B = np.array([bbar, bbar / gamma])
    return AssembledValue(A, B, float(cval))


def value_function(av: AssembledValue, state) -> float:
    """x^T A x + B^T x + C for the discounted state (x, y)."""
    x = np.asarray(state, dtype=float)
    return float(x @ av.A @ x + av.B @ x + av.C)


@dataclass(frozen=True)
class FeedbackCoefficients:
    i_a: np.ndarray      # I^A, shape (2,) or (2, n)
    i_b: np.ndarray      # I^B
    a: np.ndarray
    ia_over_a: np.ndarray
    ib_over_a: np.ndarray
    coef: np.ndarray
    kappa: np.ndarray


def feedback_coefficients(params: ModelParams, abar, bbar, t=0.0) -> FeedbackCoefficients:
    """Jump-rule coefficients, retained fraction and mean-reversion rate."""
    dc = derived(params, t)
    abar = np.asarray(abar, dtype=float)
    bbar = np.asarray(bbar, dtype=float)
    rho, lam, a = dc.rho, dc.lam, dc.a
    g, phi = params.gamma, params.phi
    i_a = np.array([-rho * abar - lam, -rho / g * abar + rho + 0.5 * phi])
    i_b = -0.5 * rho * bbar
    return FeedbackCoefficients(
        i_a=i_a, i_b=i_b, a=a,
        ia_over_a=i_a / a, ib_over_a=i_b / a,
        coef=1.0 - (lam + rho * abar) / a,
        kappa=rho * (lam + rho * abar) / a,
    )
