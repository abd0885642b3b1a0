"""Correlation kernels for generalized Bernoulli processes.

A kernel is a function f_n on the positive integers, evaluated at integer
lags x with a scale parameter n, that drives the dependence structure of a
stationary binary sequence.  Joint probabilities of "1"s factorize over
consecutive gaps via products of kernel values, so a usable kernel must map
into (0, 1), decrease, have a non-decreasing ratio f_n(x+1)/f_n(x), and
dominate pairs: f_n(2) > f_n(1)^2.

Five parametric families are provided:

    tempered_power       c * exp(-lam*x/n) * x**(alpha-1)
    exponential          c * exp(-lam*x/n)
    pure_power           c * x**(alpha-1)
    shifted_exponential  p + c * exp(-x)
    shifted_power        p + c * x**(alpha-1)

The shifted families ignore n.  Power-type evaluation happens in log space
(exp(log c - lam*x/n + (alpha-1)*log x)) so that very large lags underflow
gracefully instead of rounding through subnormals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidKernelError",
    "Kernel",
    "TemperedPowerKernel",
    "ExponentialKernel",
    "PurePowerKernel",
    "ShiftedExponentialKernel",
    "ShiftedPowerKernel",
    "AssumptionReport",
    "check_assumption",
    "kernel_from_dict",
]


class InvalidKernelError(ValueError):
    """Kernel parameters outside their admissible domain."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidKernelError(msg)


@dataclass(frozen=True)
class Kernel:
    """Base class; subclasses define the families listed in the module docstring."""

    #: exponent used when scaling partial sums of the process, n**alpha_scale
    alpha_scale: float = 1.0

    def log_value(self, x, n: int):
        raise NotImplementedError

    def value(self, x, n: int = 1):
        """Evaluate f_n(x) for integer lags x >= 1 (scalar or array)."""
        x_arr = np.asarray(x)
        if np.any(x_arr < 1):
            raise ValueError("kernel lags must be >= 1")
        if n < 1:
            raise ValueError("scale n must be >= 1")
        out = np.exp(self.log_value(x_arr, n))
        return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out

    def values(self, n: int, max_x: int) -> np.ndarray:
        """f_n evaluated at 1..max_x; entry [0] is a placeholder for lag 0."""
        v = np.empty(max_x + 1)
        v[0] = np.nan
        v[1:] = self.value(np.arange(1, max_x + 1), n)
        return v

    def validate_for_horizon(self, T: float) -> None:
        """Extra domain checks that depend on the intended window horizon."""

    def name(self) -> str:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TemperedPowerKernel(Kernel):
    """f_n(x) = c * exp(-lam*x/n) * x**(alpha-1).

    Admissible parameters satisfy c in (0, 2**(alpha-1)), alpha in (0, 1],
    and, for a window with horizon T, lam > (alpha-1)/T.  Construction only
    enforces c in (0, 1) and the alpha range so that out-of-bound values of
    c can still be fed to check_assumption, which reports the sharp pair
    condition f(2) > f(1)**2 (equivalent to c < 2**(alpha-1) when lam = 0);
    windows and samplers reject inadmissible kernels through that check.
    """

    c: float = 0.5
    alpha: float = 0.5
    lam: float = 0.0

    def __post_init__(self):
        _require(0.0 < self.alpha <= 1.0, "alpha must lie in (0, 1]")
        _require(0.0 < self.c < 1.0, "c must lie in (0, 1)")
        object.__setattr__(self, "alpha_scale", self.alpha)

    def validate_for_horizon(self, T: float) -> None:
        _require(self.lam > (self.alpha - 1.0) / T,
                 "lam must exceed (alpha-1)/T for horizon T")

    def log_value(self, x, n):
        return math.log(self.c) - self.lam * np.asarray(x, dtype=float) / n \
            + (self.alpha - 1.0) * np.log(x)

    def name(self):
        return "tempered_power"

    def to_dict(self):
        return {"variant": self.name(), "c": self.c, "alpha": self.alpha,
                "lam": self.lam}


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """f_n(x) = c * exp(-lam*x/n) with c in (0, 1] and lam > 0.

    c = 1 is the freezing boundary: f(2) = f(1)**2 exactly, gaps larger than
    one carry zero probability, and once a "0" occurs every later entry is
    "0".  Windows require the strict pair condition and therefore c < 1;
    the start-anchored process is well defined at c = 1.
    """

    c: float = 0.5
    lam: float = 1.0

    def __post_init__(self):
        _require(0.0 < self.c <= 1.0, "c must lie in (0, 1]")
        _require(self.lam > 0.0, "lam must be positive")
        object.__setattr__(self, "alpha_scale", 1.0)

    def log_value(self, x, n):
        return math.log(self.c) - self.lam * np.asarray(x, dtype=float) / n

    def name(self):
        return "exponential"

    def to_dict(self):
        return {"variant": self.name(), "c": self.c, "lam": self.lam}


@dataclass(frozen=True)
class PurePowerKernel(Kernel):
    """f_n(x) = c * x**(alpha-1) with alpha < 1; n is ignored.

    Admissible parameters satisfy c < 2**(alpha-1); as with the tempered
    family, construction enforces only c in (0, 1) so check_assumption can
    report the sharp bound.
    """

    c: float = 0.4
    alpha: float = 0.5

    def __post_init__(self):
        _require(self.alpha < 1.0, "alpha must be < 1")
        _require(0.0 < self.c < 1.0, "c must lie in (0, 1)")
        object.__setattr__(self, "alpha_scale", self.alpha)

    def log_value(self, x, n):
        return math.log(self.c) + (self.alpha - 1.0) * np.log(x)

    def name(self):
        return "pure_power"

    def to_dict(self):
        return {"variant": self.name(), "c": self.c, "alpha": self.alpha}


def _shifted_exponential_c_bound(p: float) -> float:
    # Larger root of the quadratic that enforces f(2) > f(1)^2 for p + c*e^{-x}.
    e1 = math.exp(-1.0)
    e2 = math.exp(-2.0)
    disc = (e2 - 2.0 * p * e1) ** 2 - 4.0 * e2 * p * (p - 1.0)
    root = ((e2 - 2.0 * p * e1) + math.sqrt(disc)) / (2.0 * e2)
    return min(1.0 - p, root)


@dataclass(frozen=True)
class ShiftedExponentialKernel(Kernel):
    """f_n(x) = p + c * exp(-x) with p in (0, 1); no n-scaling.

    c must stay below min(1-p, root of the pair-dominance quadratic); the
    bound is open.
    """

    p: float = 0.2
    c: float = 0.1

    def __post_init__(self):
        _require(0.0 < self.p < 1.0, "p must lie in (0, 1)")
        _require(0.0 < self.c < _shifted_exponential_c_bound(self.p),
                 "c must lie below min(1-p, pair-dominance bound)")
        object.__setattr__(self, "alpha_scale", 1.0)

    def log_value(self, x, n):
        return np.log(self.p + self.c * np.exp(-np.asarray(x, dtype=float)))

    def name(self):
        return "shifted_exponential"

    def to_dict(self):
        return {"variant": self.name(), "p": self.p, "c": self.c}


def _shifted_power_c_bound(p: float, alpha: float) -> float:
    g = 2.0 ** (alpha - 1.0)
    disc = (g - 2.0 * p) ** 2 - 4.0 * p * (p - 1.0)
    root = 0.5 * ((g - 2.0 * p) + math.sqrt(disc))
    return min(1.0 - p, root)


@dataclass(frozen=True)
class ShiftedPowerKernel(Kernel):
    """f_n(x) = p + c * x**(alpha-1) with p in (0, 1) and alpha < 1; no n-scaling."""

    p: float = 0.2
    c: float = 0.1
    alpha: float = 0.5

    def __post_init__(self):
        _require(0.0 < self.p < 1.0, "p must lie in (0, 1)")
        _require(self.alpha < 1.0, "alpha must be < 1")
        _require(0.0 < self.c < _shifted_power_c_bound(self.p, self.alpha),
                 "c must lie below min(1-p, pair-dominance bound)")
        object.__setattr__(self, "alpha_scale", self.alpha)

    def log_value(self, x, n):
        x = np.asarray(x, dtype=float)
        return np.log(self.p + self.c * x ** (self.alpha - 1.0))

    def name(self):
        return "shifted_power"

    def to_dict(self):
        return {"variant": self.name(), "p": self.p, "c": self.c,
                "alpha": self.alpha}


@dataclass(frozen=True)
class AssumptionReport:
    """Result of checking the admissibility conditions on a finite lag range.

    Failures are recorded, not raised: a report with overall False is a
    legitimate answer about an inadmissible kernel.
    """

    decreasing: bool
    ratio_nondecreasing: bool
    pair_dominance: bool
    max_x: int

    @property
    def passed(self) -> bool:
        return self.decreasing and self.ratio_nondecreasing and self.pair_dominance


def check_assumption(kernel: Kernel, n: int, max_x: int | None = None,
                     T: float | None = None) -> AssumptionReport:
    """Check, on lags [1, max_x]: (a) f_n decreasing, (b) f_n(x+1)/f_n(x)
    non-decreasing, (c) f_n(2) > f_n(1)**2.

    max_x defaults to max(floor(n*T), 1000) when T is given, else 1000.
    Ratios are compared with a 1-ulp slack so exactly-geometric kernels
    (constant ratio) pass condition (b).
    """
    if max_x is None:
        max_x = max(int(math.floor(n * T)), 1000) if T is not None else 1000
    if max_x < 3:
        raise ValueError("max_x must be >= 3")
    logs = kernel.log_value(np.arange(1, max_x + 1), n)
    dlog = np.diff(logs)            # log f(x+1) - log f(x)
    decreasing = bool(np.all(dlog < 0.0)) and bool(np.all(logs < 0.0))
    slack = 64.0 * np.finfo(float).eps
    ratio_nondecreasing = bool(np.all(np.diff(dlog) >= -slack))
    pair_dominance = bool(logs[1] > 2.0 * logs[0])
    return AssumptionReport(decreasing, ratio_nondecreasing, pair_dominance, max_x)


_VARIANTS = {
    "tempered_power": TemperedPowerKernel,
    "exponential": ExponentialKernel,
    "pure_power": PurePowerKernel,
    "shifted_exponential": ShiftedExponentialKernel,
    "shifted_power": ShiftedPowerKernel,
}


def kernel_from_dict(d: dict) -> Kernel:
    """Build a kernel from {"variant": name, <named parameters>}."""
    d = dict(d)
    variant = d.pop("variant", None)
    if variant not in _VARIANTS:
        raise InvalidKernelError(f"unknown kernel variant: {variant!r}")
    try:
        return _VARIANTS[variant](**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise InvalidKernelError(str(exc)) from exc
