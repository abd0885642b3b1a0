"""Exact finite-n law of the generalized Bernoulli process.

The process is a stationary binary sequence xi_1..xi_N on a window of
N = floor(n*T) slots.  Joint probabilities of "1"s factorize over gaps,

    P(xi_{i_1} = ... = xi_{i_k} = 1) = b*fT * prod_j f_n(i_{j+1} - i_j),

with fT = f_n(N), and events involving "0"s follow by inclusion-exclusion.
This module provides the gap-product functional L, the alternating-sum
functional D, joint probabilities, a brute-force enumeration over all 2^N
patterns (the ground-truth oracle for everything else), the closed-form
pair correlation, the law of the start-anchored variant, and exact moments
of the scaled partial-sum walk.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Iterable, Sequence

import numpy as np

from .kernels import Kernel, check_assumption

__all__ = [
    "InvalidWindowError",
    "PositivityViolationError",
    "WindowSpec",
    "JointEvent",
    "L_value",
    "D_value",
    "joint_prob",
    "ProbabilityTable",
    "enumerate_distribution",
    "pair_correlation",
    "star_joint_prob",
    "exact_walk_moment",
    "stirling2",
]

#: relative threshold: alternating sums this far below zero are numerical
#: noise and clamp to 0; anything lower signals an inadmissible kernel.
NEG_CLAMP_REL = 1e-14

ENUMERATION_MAX_N = 16
MAX_EXCLUDED = 22
FAST_CONV_THRESHOLD = 20_000


class InvalidWindowError(ValueError):
    """Window parameters violate the admissibility conditions."""


class PositivityViolationError(ArithmeticError):
    """An inclusion-exclusion sum came out significantly negative."""


@dataclass(frozen=True)
class WindowSpec:
    """A finite window of the process: kernel, scale n, horizon T, level b.

    Derived: N = floor(n*T) slots and fT = f_n(N).  Construction validates
    N >= 2, b*fT in (0, 1), the horizon condition on the kernel, and the
    admissibility conditions on lags [1, N].
    """

    kernel: Kernel
    n: int
    T: float
    b: float
    N: int = field(init=False)
    fT: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidWindowError("n must be a positive integer")
        if self.T <= 0.0:
            raise InvalidWindowError("T must be positive")
        if not 0.0 < self.b <= 1.0:
            raise InvalidWindowError("b must lie in (0, 1]")
        N = int(math.floor(self.n * self.T))
        if N < 2:
            raise InvalidWindowError("window needs floor(n*T) >= 2")
        self.kernel.validate_for_horizon(self.T)
        fT = self.kernel.value(N, self.n)
        if not 0.0 < self.b * fT < 1.0:
            raise InvalidWindowError("b*f_n(N) must lie in (0, 1)")
        report = check_assumption(self.kernel, self.n, max_x=max(N, 3))
        if not report.passed:
            raise InvalidWindowError(
                f"kernel fails admissibility on [1, {max(N, 3)}]: {report}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "fT", fT)

    @property
    def marginal(self) -> float:
        """P(xi_i = 1) = b * f_n(N), identical for every slot."""
        return self.b * self.fT

    def kernel_values(self) -> np.ndarray:
        """f_n at lags 1..N (index 0 unused)."""
        return self.kernel.values(self.n, self.N)


@dataclass(frozen=True)
class JointEvent:
    """Ones at indices B and zeros at indices F, disjoint subsets of [1, N]."""

    B: tuple
    F: tuple

    def __init__(self, B: Iterable[int] = (), F: Iterable[int] = ()):
        B = tuple(sorted(set(int(i) for i in B)))
        F = tuple(sorted(set(int(i) for i in F)))
        if set(B) & set(F):
            raise ValueError("B and F must be disjoint")
        if (B and B[0] < 1) or (F and F[0] < 1):
            raise ValueError("indices must be >= 1")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "F", F)

    def validate_window(self, window: WindowSpec) -> None:
        top = max(self.B[-1] if self.B else 0, self.F[-1] if self.F else 0)
        if top > window.N:
            raise ValueError(f"event index {top} exceeds window size {window.N}")


def _sorted_tuple(values: Iterable[int]) -> tuple:
    return tuple(sorted(set(int(v) for v in values)))


def L_value(window: WindowSpec, B: Iterable[int]) -> float:
    """Gap-product functional: product of f_n over consecutive gaps of B.

    Conventions: 1 for singletons, 1/(b*fT) for the empty set.
    """
    B = _sorted_tuple(B)
    return _make_L(window)(B)


def _make_L(window: WindowSpec) -> Callable[[tuple], float]:
    f = window.kernel_values()
    empty = 1.0 / window.marginal

    def L(B: tuple) -> float:
        if not B:
            return empty
        gaps = np.diff(B)
        return float(np.prod(f[gaps])) if gaps.size else 1.0

    return L


def _make_star_L(kernel: Kernel, n: int, max_lag: int) -> Callable[[tuple], float]:
    f = kernel.values(n, max_lag)

    def L(B: tuple) -> float:
        if not B:
            raise ValueError("start-anchored gap products never see an empty set")
        gaps = np.diff(B)
        return float(np.prod(f[gaps])) if gaps.size else 1.0

    return L


def _D_recursive(L: Callable[[tuple], float], B: tuple, F: tuple, memo: dict) -> float:
    """Alternating sum over subsets of F via the max-element recursion

        D(B, F) = D(B, F \\ {i}) - D(B + {i}, F \\ {i}),  i = max F,

    memoized on (B, F); subproblems are shared across conditional queries.
    """
    if not F:
        return L(B)
    key = (B, F)
    hit = memo.get(key)
    if hit is not None:
        return hit
    i = F[-1]
    F2 = F[:-1]
    B_list = list(B)
    insort(B_list, i)
    val = _D_recursive(L, B, F2, memo) - _D_recursive(L, tuple(B_list), F2, memo)
    memo[key] = val
    return val


def _clamp_negative(value: float, scale: float, context: str) -> float:
    eps = NEG_CLAMP_REL * abs(scale)
    if value < -eps:
        raise PositivityViolationError(
            f"{context}: value {value:.6e} below -{eps:.6e}; "
            "kernel admissibility breach or numeric breakdown")
    return 0.0 if value < 0.0 else value


def D_value(window: WindowSpec, B: Iterable[int], F: Iterable[int]) -> float:
    """Inclusion-exclusion functional D(B, F) >= 0.

    Values in [-eps, 0) with eps = 1e-14 * L(B) clamp to 0; anything lower
    raises PositivityViolationError.  Cost is at most 2^|F|; |F| <= 22.
    """
    B = _sorted_tuple(B)
    F = _sorted_tuple(F)
    if set(B) & set(F):
        raise ValueError("B and F must be disjoint")
    if len(F) > MAX_EXCLUDED:
        raise ValueError(f"|F| = {len(F)} exceeds limit {MAX_EXCLUDED}")
    L = _make_L(window)
    raw = _D_recursive(L, B, F, {})
    return _clamp_negative(raw, L(B), "D_value") if raw < 0.0 else raw


def joint_prob(window: WindowSpec, event: JointEvent) -> float:
    """P(ones exactly on event.B, zeros on event.F) = b*fT * D(B, F)."""
    event.validate_window(window)
    d = D_value(window, event.B, event.F)
    return min(window.marginal * d, 1.0)


def star_joint_prob(kernel: Kernel, n: int, B: Iterable[int],
                    F: Iterable[int]) -> float:
    """Joint law of the start-anchored process: condition on a "1" at slot 0.

    Equals D evaluated on the shifted sets {1} + (B+1), F+1; the window
    prefactor cancels, so the value depends on neither T nor b.
    """
    B = _sorted_tuple(B)
    F = _sorted_tuple(F)
    if set(B) & set(F):
        raise ValueError("B and F must be disjoint")
    if len(F) > MAX_EXCLUDED:
        raise ValueError(f"|F| = {len(F)} exceeds limit {MAX_EXCLUDED}")
    B_shift = (1,) + tuple(i + 1 for i in B)
    F_shift = tuple(i + 1 for i in F)
    top = max(B_shift[-1], F_shift[-1] if F_shift else 0)
    L = _make_star_L(kernel, n, top)
    raw = _D_recursive(L, B_shift, F_shift, {})
    val = _clamp_negative(raw, L(B_shift), "star_joint_prob") if raw < 0.0 else raw
    return min(val, 1.0)


class ProbabilityTable:
    """Exact probabilities of all 2^N patterns of a window.

    Row r encodes the pattern whose slot i holds a one iff bit (N - i) of r
    is set, i.e. the N-digit binary expansion of r read left to right is
    xi_1 .. xi_N.
    """

    def __init__(self, window: WindowSpec, probs: np.ndarray):
        self.window = window
        self.N = window.N
        self.probs = probs

    def pattern_string(self, r: int) -> str:
        return format(r, f"0{self.N}b")

    def ones_of(self, r: int) -> tuple:
        return tuple(i for i in range(1, self.N + 1) if (r >> (self.N - i)) & 1)

    def total(self) -> float:
        return float(self.probs.sum())

    def prob_of_event(self, B: Iterable[int], F: Iterable[int]) -> float:
        """Marginalize the table onto the event {ones on B, zeros on F}."""
        B = _sorted_tuple(B)
        F = _sorted_tuple(F)
        r = np.arange(self.probs.size)
        mask = np.ones(self.probs.size, dtype=bool)
        for i in B:
            mask &= ((r >> (self.N - i)) & 1).astype(bool)
        for i in F:
            mask &= ~((r >> (self.N - i)) & 1).astype(bool)
        return float(self.probs[mask].sum())

    def marginal(self, i: int) -> float:
        return self.prob_of_event((i,), ())

    def correlation(self, i: int, j: int) -> float:
        p = self.marginal(i)
        pij = self.prob_of_event((i, j), ())
        return (pij - p * p) / (p * (1.0 - p))

    def moment_of_sum(self, k: int, upto: int | None = None) -> float:
        """E[(xi_1 + ... + xi_upto)^k] straight off the table."""
        upto = self.N if upto is None else upto
        r = np.arange(self.probs.size)
        counts = np.zeros(self.probs.size)
        for i in range(1, upto + 1):
            counts += (r >> (self.N - i)) & 1
        return float(np.dot(counts ** k, self.probs))

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("pattern,probability\n")
            for r, p in enumerate(self.probs):
                fh.write(f"{self.pattern_string(r)},{p:.17g}\n")


def enumerate_distribution(window: WindowSpec) -> ProbabilityTable:
    """Ground-truth table of all 2^N pattern probabilities, N <= 16.

    Each entry is the alternating sum b*fT * D(B, F) for the pattern's
    partition (B, F) of [1, N].  Because gap products are Markovian in the
    last "1", the alternating sum telescopes into a signed transfer
    recursion over slots, giving O(N^2) work per pattern instead of 2^|F|;
    the result is the same sum reorganized (agreement with joint_prob is
    enforced by tests).  Negative entries clamp exactly like D_value.
    """
    N = window.N
    if N > ENUMERATION_MAX_N:
        raise ValueError(
            f"enumeration over 2^{N} patterns refused (limit N = {ENUMERATION_MAX_N})")
    f = window.kernel_values()
    bfT = window.marginal
    size = 1 << N
    r = np.arange(size)

    # E: signed weight of "no slot included yet"; A[:, j]: signed weight of
    # chains whose last included slot is j.  Ones are forced in, zeros enter
    # optionally with sign -1; consecutive inclusions pick up f(gap).
    E = np.ones(size)
    A = np.zeros((size, N + 1))
    for i in range(1, N + 1):
        if i == 1:
            inc = E.copy()
        else:
            inc = E + A[:, 1:i] @ f[i - 1:0:-1]
        bit = ((r >> (N - i)) & 1).astype(bool)
        A[bit, 1:i] = 0.0
        A[bit, i] = inc[bit]
        E[bit] = 0.0
        A[~bit, i] = -inc[~bit]
    probs = E + bfT * A.sum(axis=1)

    # per-pattern clamp scale: 1e-14 * b*fT * L(B)
    log_L = np.zeros(size)
    last = np.zeros(size, dtype=np.int64)
    logf = np.log(f[1:])
    for i in range(1, N + 1):
        bit = ((r >> (N - i)) & 1).astype(bool)
        chained = bit & (last > 0)
        log_L[chained] += logf[i - 1 - last[chained]]
        last[bit] = i
    scale = np.where(last > 0, bfT * np.exp(log_L), 1.0)
    eps = NEG_CLAMP_REL * scale
    bad = probs < -eps
    if np.any(bad):
        worst = int(np.argmin(probs + eps))
        raise PositivityViolationError(
            f"pattern {format(worst, f'0{N}b')}: probability {probs[worst]:.6e} "
            f"below -{eps[worst]:.6e}")
    np.clip(probs, 0.0, None, out=probs)
    return ProbabilityTable(window, probs)


def pair_correlation(window: WindowSpec, k: int) -> float:
    """corr(xi_i, xi_{i+k}) = (f_n(k) - b*fT) / (1 - b*fT) for any lag k >= 1."""
    if not 1 <= k <= window.N - 1:
        raise ValueError(f"lag k must lie in [1, {window.N - 1}]")
    m = window.marginal
    return (window.kernel.value(k, window.n) - m) / (1.0 - m)


_STIRLING_CACHE: dict = {}


def stirling2(k: int, m: int) -> int:
    """Stirling number of the second kind S(k, m)."""
    if m < 0 or m > k:
        return 0
    if k == m:
        return 1
    if m == 0:
        return 0
    key = (k, m)
    if key not in _STIRLING_CACHE:
        _STIRLING_CACHE[key] = m * stirling2(k - 1, m) + stirling2(k - 1, m - 1)
    return _STIRLING_CACHE[key]


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size + b.size > FAST_CONV_THRESHOLD:
        from scipy.signal import fftconvolve
        return fftconvolve(a, b)
    return np.convolve(a, b)


def exact_walk_moment(window: WindowSpec, t: float, k: int) -> float:
    """Exact E[(sum_{i <= floor(n t)} xi_i)^k] / n**(alpha*k), k <= 8.

    Expands the power of the sum over ordered index tuples; the count of
    surjections onto m+1 ordered slots is (m+1)! S(k, m+1) with S the
    Stirling number of the second kind, and the ordered-tuple sums collapse
    to discrete self-convolutions of the kernel:

        M*b*fT + sum_{m=1}^{k-1} (m+1)! S(k, m+1) b*fT
                    sum_{j=m}^{M-1} (M - j) f^{*m}[j],

    with M = floor(n t).  alpha is the kernel's scaling exponent (1 for the
    exponential families).  Convolutions run directly below ~2e4 points and
    via FFT above.
    """
    if not 1 <= k <= 8:
        raise ValueError("moment order k must lie in [1, 8]")
    if not 0.0 < t <= window.T:
        raise ValueError("t must lie in (0, T]")
    M = int(math.floor(window.n * t))
    if M < 1:
        raise ValueError("floor(n*t) must be >= 1")
    bfT = window.marginal
    total = M * bfT
    if k >= 2 and M >= 2:
        f = window.kernel.values(window.n, M - 1)[1:]  # f(1) .. f(M-1)
        weights = (M - np.arange(1, M)).astype(float)  # (M - j) for j = 1..M-1
        conv = f  # conv[idx] = f^{*m}[idx + 1]
        for m in range(1, k):
            coeff = factorial(m + 1) * stirling2(k, m + 1)
            if coeff:
                total += coeff * bfT * float(np.dot(weights[m - 1:], conv[m - 1:]))
            if m < k - 1:
                # convolve shifts support by one slot; re-align to j = idx + 1
                conv = np.concatenate(([0.0], _convolve(conv, f)))[:M - 1]
    alpha = window.kernel.alpha_scale
    return total / float(window.n) ** (alpha * k)
