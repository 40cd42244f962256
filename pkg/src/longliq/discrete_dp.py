"""Discrete-time dynamic program on the trading grid t_n = n*dt.

The state is the discounted pair (x, y) = (1 - dt*phi)^(n/2) * (X, Y) with
the value ansatz V_n(s) = s^T A_n s + B_n^T s + C_n.  The recursion is exact
for the discrete model; its dt -> 0 limit is the Riccati system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import ModelParams, derived
from .riccati import ValueCoefficients

RELATION_TOL = 1e-8


class DPError(RuntimeError):
    pass


@dataclass(frozen=True)
class DPConfig:
    params: ModelParams
    T: float
    dt: float

    @property
    def n_steps(self) -> int:
        n = self.T / self.dt
        return int(round(n))

    def validate(self) -> None:
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(f"T/dt must be a positive integer, got {n}")
        if self.dt * self.params.phi > 0.5:
            raise ValueError("dt*phi must not exceed 0.5")


def structural(params: ModelParams, n: int, dt: float) -> dict:
    """Transition matrices of the discounted discrete model at step ``n``."""
    t = n * dt
    dc = derived(params, t)
    disc = 1.0 - dt * params.phi
    sq = math.sqrt(disc)
    rho, lam, sig = float(dc.rho), float(dc.lam), float(dc.sigma)
    return {
        "A": sq * np.diag([1.0, 1.0 - dt * rho]),
        "B": sq * np.array([-1.0, (1.0 - dt * rho) * params.gamma]),
        "D": disc ** ((n + 1) / 2.0) * np.array([0.0, sig]),
        "Q": np.array([[lam * dt, 0.0], [0.0, 0.0]]),
        "L": np.array([0.0, 1.0]),
        "R": 0.5 * params.gamma,
        "lam": lam,
    }


@dataclass(frozen=True)
class DiscreteDPResult:
    """Backward arrays over n = 0..N.

    ``a``, ``I_A`` and ``I_B`` are undefined at n = N (close-out step) and
    hold NaN there.
    """

    cfg: DPConfig
    t: np.ndarray
    A: np.ndarray       # (N+1, 2, 2)
    B: np.ndarray       # (N+1, 2)
    C: np.ndarray       # (N+1,)
    a: np.ndarray       # (N+1,)
    I_A: np.ndarray     # (N+1, 2)
    I_B: np.ndarray     # (N+1,)

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def dt(self) -> float:
        return self.cfg.dt

    def relation_residuals(self) -> np.ndarray:
        """Max abs residual of the three coefficient relations at each node."""
        g = self.cfg.params.gamma
        lam = np.broadcast_to(self.cfg.params.lam(self.t), self.t.shape)
        r1 = self.A[:, 0, 0] - g * self.A[:, 0, 1] - self.dt * lam
        r2 = self.A[:, 0, 1] - g * self.A[:, 1, 1] - 0.5
        r3 = self.B[:, 0] - g * self.B[:, 1]
        return np.max(np.abs(np.vstack([r1, r2, r3])), axis=0)

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["n", "t", "A11", "A12", "A22", "B1", "B2", "C", "a_n"]
        data = np.column_stack([np.arange(self.N + 1), self.t, self.A[:, 0, 0], self.A[:, 0, 1],
                                self.A[:, 1, 1], self.B[:, 0], self.B[:, 1], self.C, self.a])
        return cols, data

    @classmethod
    def from_ode(cls, coeffs: ValueCoefficients, dt: float) -> "DiscreteDPResult":
        """Sample a continuous solution onto a DP grid (comparison test hook)."""
        cfg = DPConfig(coeffs.params, coeffs.T, dt)
        idx = _aligned_indices(cfg, coeffs)
        g = coeffs.params.gamma
        ab, bb = coeffs.abar[idx], coeffs.bbar[idx]
        A = np.empty((len(idx), 2, 2))
        A[:, 0, 0] = ab
        A[:, 0, 1] = A[:, 1, 0] = ab / g
        A[:, 1, 1] = (2 * ab - g) / (2 * g * g)
        B = np.column_stack([bb, bb / g])
        nan = np.full(len(idx), np.nan)
        return cls(cfg, coeffs.t[idx], A, B, coeffs.cval[idx].copy(), nan, np.full((len(idx), 2), np.nan), nan)


def dp_backward(cfg: DPConfig) -> DiscreteDPResult:
    cfg.validate()
    params, dt, N = cfg.params, cfg.dt, cfg.n_steps
    g = params.gamma
    A = np.empty((N + 1, 2, 2))
    B = np.zeros((N + 1, 2))
    C = np.zeros(N + 1)
    a = np.full(N + 1, np.nan)
    I_A = np.full((N + 1, 2), np.nan)
    I_B = np.full(N + 1, np.nan)
    lam_N = float(params.lam(N * dt))
    A[N] = [[0.5 * g + lam_N * dt, 0.5], [0.5, 0.0]]
    # deterministic coefficients: E_n[A_{n+1} eps] = 0, E_n[A_{n+1} eps^2] = A_{n+1} dt
    mean_eps, var_eps = 0.0, dt
    for n in range(N - 1, -1, -1):
        m = structural(params, n, dt)
        Am, Bm, Dm, Q, L, R = m["A"], m["B"], m["D"], m["Q"], m["L"], m["R"]
        An, Bn = A[n + 1], B[n + 1]
        an = R + Bm @ An @ Bm
        if not an > 0:
            raise DPError(f"a_n = {an!r} is not positive at n={n}")
        # linear term of E_n[V_{n+1}]; the mean-noise part vanishes in scope
        lin = Bn + 2.0 * mean_eps * (An @ Dm)
        ia = 0.5 * L + Bm @ An @ Am
        ib = 0.5 * lin @ Bm
        A[n] = Q + Am.T @ An @ Am - np.outer(ia, ia) / an
        A[n] = 0.5 * (A[n] + A[n].T)
        B[n] = -2.0 * ib * ia / an + lin @ Am
        C[n] = -ib * ib / an + var_eps * (Dm @ An @ Dm) + mean_eps * (Bn @ Dm) + C[n + 1]
        a[n], I_A[n], I_B[n] = an, ia, ib
    res = DiscreteDPResult(cfg, np.arange(N + 1) * dt, A, B, C, a, I_A, I_B)
    drift = res.relation_residuals().max()
    if drift > RELATION_TOL:
        raise DPError(f"coefficient relations drifted by {drift:.3e}")
    return res


def dp_optimal_trade(dp: DiscreteDPResult, n: int, state) -> float:
    """Optimal trade at step ``n`` in the discounted units of ``state``."""
    if not 0 <= n <= dp.N:
        raise IndexError(f"n must lie in [0, {dp.N}]")
    s = np.asarray(state, dtype=float)
    if n == dp.N:
        return float(s[0])
    return float(-(dp.I_A[n] @ s + dp.I_B[n]) / dp.a[n])


def dp_value(dp: DiscreteDPResult, n: int, state) -> float:
    if not 0 <= n <= dp.N:
        raise IndexError(f"n must lie in [0, {dp.N}]")
    s = np.asarray(state, dtype=float)
    return float(s @ dp.A[n] @ s + dp.B[n] @ s + dp.C[n])


def _aligned_indices(cfg: DPConfig, coeffs: ValueCoefficients) -> np.ndarray:
    if abs(cfg.T - coeffs.T) > 1e-12 * max(1.0, cfg.T):
        raise ValueError("DP and ODE horizons differ")
    h = coeffs.T / coeffs.steps
    ratio = cfg.dt / h
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise ValueError(f"DP step {cfg.dt} is not a multiple of the ODE step {h}")
    return np.arange(cfg.n_steps + 1) * k


@dataclass(frozen=True)
class DPErrorReport:
    dts: np.ndarray
    a11_err: np.ndarray
    c_err: np.ndarray
    order: float


def dp_vs_ode_error(dps: Union[DiscreteDPResult, Sequence[DiscreteDPResult]],
                    coeffs: ValueCoefficients) -> DPErrorReport:
    """Sup-norm gaps of A11 and C over aligned nodes, plus the fitted order.

    The order is the log-log slope of the A11 gap against dt; it is NaN when
    fewer than two step sizes (or a zero gap) make it undefined.
    """
    if isinstance(dps, DiscreteDPResult):
        dps = [dps]
    dts, e_a, e_c = [], [], []
    for dp in dps:
        idx = _aligned_indices(dp.cfg, coeffs)
        dts.append(dp.dt)
        e_a.append(float(np.max(np.abs(dp.A[:, 0, 0] - coeffs.abar[idx]))))
        e_c.append(float(np.max(np.abs(dp.C - coeffs.cval[idx]))))
    dts, e_a, e_c = np.array(dts), np.array(e_a), np.array(e_c)
    order = float("nan")
    if len(dts) >= 2 and np.all(e_a > 0):
        order = float(np.polyfit(np.log(dts), np.log(e_a), 1)[0])
    return DPErrorReport(dts, e_a, e_c, order)
