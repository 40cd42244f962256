"""Model parameters, deterministic coefficient functions and derived quantities.

All coefficient processes are deterministic functions of time.  Every
function here accepts scalars or numpy arrays of times.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

ArrayLike = Union[float, np.ndarray]


class ParameterError(ValueError):
    """Raised when a parameter set violates a model invariant."""


@dataclass(frozen=True)
class Constant:
    value: float
    kind: str = field(default="constant", init=False)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        if np.ndim(t) == 0:
            return float(self.value)
        return np.full(np.shape(t), float(self.value))

    def knots(self) -> np.ndarray:
        return np.zeros(0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class DampedExponential:
    """``base * exp(-decay * t)`` with ``decay >= 0``."""

    base: float
    decay: float
    kind: str = field(default="damped_exponential", init=False)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        out = self.base * np.exp(-self.decay * np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def knots(self) -> np.ndarray:
        return np.zeros(0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base": self.base, "decay": self.decay}


@dataclass(frozen=True)
class Table:
    """Piecewise-linear interpolation through ``(t, value)`` knots.

    Values are held constant before the first and after the last knot.
    """

    times: tuple
    values: tuple
    kind: str = field(default="table", init=False)

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) == 0:
            raise ParameterError("table needs matching, non-empty times and values")

    @classmethod
    def from_pairs(cls, pairs) -> "Table":
        pairs = [tuple(map(float, p)) for p in pairs]
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def __call__(self, t: ArrayLike) -> ArrayLike:
        out = np.interp(np.asarray(t, dtype=float), self.times, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def knots(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "table": [[a, b] for a, b in zip(self.times, self.values)]}


CoefficientFn = Union[Constant, DampedExponential, Table]


def coefficient_from_spec(spec: Any) -> CoefficientFn:
    """Build a coefficient function from a number or a ``{kind: ...}`` mapping."""
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ParameterError(f"cannot interpret coefficient {spec!r}")
    kind = spec["kind"].lower()
    if kind == "constant":
        return Constant(float(spec["value"]))
    if kind in ("damped_exponential", "damped", "dampedexponential"):
        return DampedExponential(float(spec["base"]), float(spec["decay"]))
    if kind == "table":
        return Table.from_pairs(spec["table"])
    raise ParameterError(f"unknown coefficient kind {spec['kind']!r}")


@dataclass(frozen=True)
class ModelParams:
    """Market, impact and preference parameters.

    ``gamma`` is the price impact, ``phi`` the discount rate, ``rho`` the
    resilience, ``lam`` the risk aversion and ``sigma`` the external-flow
    intensity.  ``x0`` is the initial position and ``y0`` the initial price
    deviation.
    """

    gamma: float
    phi: float
    rho: CoefficientFn
    lam: CoefficientFn
    sigma: CoefficientFn
    x0: float
    y0: float = 0.0

    def replace(self, **changes) -> "ModelParams":
        data = {k: getattr(self, k) for k in ("gamma", "phi", "rho", "lam", "sigma", "x0", "y0")}
        for key, val in changes.items():
            if key in ("rho", "lam", "sigma") and not callable(val):
                val = coefficient_from_spec(val)
            data[key] = val
        return ModelParams(**data)

    @property
    def constant_rho_lambda(self) -> bool:
        return isinstance(self.rho, Constant) and isinstance(self.lam, Constant)

    def knots(self) -> np.ndarray:
        return np.unique(np.concatenate([c.knots() for c in (self.rho, self.lam, self.sigma)]))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "phi": self.phi,
            "x0": self.x0,
            "y0": self.y0,
            "rho": self.rho.to_dict(),
            "lambda": self.lam.to_dict(),
            "sigma": self.sigma.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        missing = [k for k in ("gamma", "phi", "x0", "rho", "sigma") if k not in data]
        if "lambda" not in data and "lam" not in data:
            missing.append("lambda")
        if missing:
            raise ParameterError(f"missing parameter(s): {', '.join(missing)}")
        return cls(
            gamma=float(data["gamma"]),
            phi=float(data["phi"]),
            rho=coefficient_from_spec(data["rho"]),
            lam=coefficient_from_spec(data.get("lambda", data.get("lam"))),
            sigma=coefficient_from_spec(data["sigma"]),
            x0=float(data["x0"]),
            y0=float(data.get("y0", 0.0)),
        )


def load_params(path) -> ModelParams:
    """Read parameters from a TOML or JSON document."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = tomllib.loads(text.decode("utf-8"))
    return ModelParams.from_dict(data)


def figure1_params(damped: bool = False) -> ModelParams:
    """Parameter set of the long-run position figure (constant or damped flow)."""
    sigma = DampedExponential(0.25, 0.2) if damped else Constant(0.25)
    return ModelParams(gamma=0.5, phi=0.2, rho=Constant(0.7), lam=Constant(0.1),
                       sigma=sigma, x0=5.0, y0=0.0)


@dataclass(frozen=True)
class DerivedCoefficients:
    rho: ArrayLike
    lam: ArrayLike
    sigma: ArrayLike
    a: ArrayLike
    b: ArrayLike
    c: ArrayLike
    d: ArrayLike


def normalizer(params: ModelParams, t: ArrayLike) -> ArrayLike:
    """a(t) = gamma*rho + lambda + phi*gamma/2."""
    return params.gamma * params.rho(t) + params.lam(t) + 0.5 * params.phi * params.gamma


def derived(params: ModelParams, t: ArrayLike) -> DerivedCoefficients:
    """Vectorised evaluation of (rho, lambda, sigma, a, b, c, d) at ``t``."""
    rho, lam, sig = params.rho(t), params.lam(t), params.sigma(t)
    a = params.gamma * rho + lam + 0.5 * params.phi * params.gamma
    return DerivedCoefficients(
        rho=rho, lam=lam, sigma=sig, a=a,
        b=rho * rho / a,
        c=2.0 * lam * rho / a + params.phi,
        d=lam * lam / a - lam,
    )


def eval_coefficients(params: ModelParams, t: float) -> DerivedCoefficients:
    """Coefficients at a single time ``t >= 0``."""
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return derived(params, t)


def _sample_times(params: ModelParams) -> np.ndarray:
    knots = params.knots()
    horizon = max(100.0, float(knots.max()) if knots.size else 0.0)
    return np.unique(np.concatenate([np.linspace(0.0, horizon, 2001), knots]))


def validate_params(params: ModelParams) -> list[str]:
    """Return every violated invariant as a message; empty means valid."""
    issues = []
    try:
        if not (math.isfinite(params.gamma) and params.gamma > 0):
            issues.append("gamma must be positive")
        if not (math.isfinite(params.phi) and params.phi > 0):
            issues.append("phi must be positive")
        if not math.isfinite(params.x0):
            issues.append("x0 must be finite")
        if not math.isfinite(params.y0):
            issues.append("y0 must be finite")
        for name, fn in (("rho", params.rho), ("lambda", params.lam), ("sigma", params.sigma)):
            if isinstance(fn, Table):
                times = np.asarray(fn.times, dtype=float)
                if np.any(np.diff(times) <= 0):
                    issues.append(f"{name} table times must be strictly increasing")
                if not np.all(np.isfinite(fn.values)) or not np.all(np.isfinite(times)):
                    issues.append(f"{name} table must be finite")
            if isinstance(fn, DampedExponential) and not fn.decay >= 0:
                issues.append(f"{name} decay must be nonnegative")
        ts = _sample_times(params)
        lam = np.asarray(params.lam(ts), dtype=float)
        rho = np.asarray(params.rho(ts), dtype=float)
        sig = np.asarray(params.sigma(ts), dtype=float)
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(rho)) and np.all(np.isfinite(sig))):
            issues.append("coefficients must be finite")
        if np.any(lam < 0):
            issues.append("lambda must be nonnegative")
        if np.any(rho < 0):
            issues.append("rho must be nonnegative")
        if params.gamma > 0 and params.phi > 0:
            a = params.gamma * rho + lam + 0.5 * params.phi * params.gamma
            if np.any(~(a > 0)):
                issues.append("a(t) = gamma*rho + lambda + phi*gamma/2 must be positive")
    except Exception as exc:  # never raise from a validation report
        issues.append(f"parameters could not be evaluated: {exc}")
    return issues
