"""Special functions: Mittag-Leffler family, Wright M, incomplete gamma,
and the stable / inverse-stable subordinator densities.

All series are summed in float64 with Kahan compensation and a running
cancellation monitor.  When alternating terms have destroyed more digits
than the requested tolerance allows, evaluation is retried once in mpmath
at a working precision sized from the observed term growth (capped at 300
digits); inputs needing more raise AccuracyError carrying the partial
value.  Validated input regions were calibrated against the
arbitrary-precision oracle in tools/calibrate_specfun_domains.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AccuracyError",
    "SeriesControl",
    "DEFAULT_CONTROL",
    "gamma_reciprocal",
    "log_gamma_reciprocal",
    "mittag_leffler",
    "ml_three_param",
    "wright_m",
    "wright_m_log_bound",
    "stable_pdf_g",
    "inverse_stable_pdf_h",
    "lower_incomplete_gamma",
    "reg_lower_gamma",
]

_EPS = np.finfo(float).eps
_MP_DPS_CAP = 300
#: absolute floor: Wright M values provably below this return exactly 0.0
WRIGHT_FLOOR = 1e-45


class AccuracyError(ArithmeticError):
    """Requested tolerance is unreachable; .partial holds the best value."""

    def __init__(self, msg: str, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class SeriesControl:
    """Stopping rule for series evaluation."""

    tol: float = 1e-12
    max_terms: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.tol <= 1e-6:
            raise ValueError("tol must lie in (0, 1e-6]")
        if self.max_terms < 100:
            raise ValueError("max_terms must be >= 100")


DEFAULT_CONTROL = SeriesControl()


def log_gamma_reciprocal(x: float) -> tuple:
    """(log |1/Gamma(x)|, sign) for any real x; sign 0 at the poles.

    Negative arguments go through the reflection formula
    1/Gamma(x) = Gamma(1-x) * sin(pi*x) / pi.
    """
    if x > 0.0:
        return -math.lgamma(x), 1.0
    if x == math.floor(x):
        return -math.inf, 0.0
    s = math.sin(math.pi * x)
    return (math.lgamma(1.0 - x) + math.log(abs(s)) - math.log(math.pi),
            math.copysign(1.0, s))


def gamma_reciprocal(x: float) -> float:
    """1/Gamma(x) for any real x, 0 at the poles (entire function)."""
    log_abs, sign = log_gamma_reciprocal(x)
    if sign == 0.0 or log_abs < -745.0:
        return 0.0
    if log_abs > 709.0:
        raise OverflowError(f"1/Gamma({x}) overflows")
    return sign * math.exp(log_abs)


def _kahan_sum(coeff_fn, z, ctl: SeriesControl):
    """sum_k coeff_fn(k) * z^k with compensation and a cancellation monitor.

    Returns (value, max_abs_term, n_terms, converged).  Overflowing powers
    (|z|^k beyond float range) end the pass as non-converged so the caller
    escalates precision instead of accumulating NaNs.
    """
    total = 0.0 + 0.0j if isinstance(z, complex) else 0.0
    comp = type(total)(0)
    power = type(total)(1)
    max_term = 0.0
    small_run = 0
    for k in range(ctl.max_terms):
        term = coeff_fn(k) * power
        mag = abs(term)
        if not math.isfinite(mag):
            return total, max_term, k, False
        if mag > max_term:
            max_term = mag
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        power = power * z
        # coefficients may vanish periodically (gamma poles), so demand two
        # consecutive small terms past the peak before declaring convergence
        if mag <= ctl.tol * abs(total) and mag < max_term:
            small_run += 1
            if k > 3 and small_run >= 2:
                return total, max_term, k + 1, True
        else:
            small_run = 0
        if not np.isfinite(abs(power)):
            return total, max_term, k + 1, False
    return total, max_term, ctl.max_terms, False


def _needs_escalation(value, max_term, ctl: SeriesControl, n_terms: int = 0) -> bool:
    # rounding noise grows ~ n_terms * eps * peak: gamma arguments formed in
    # double precision drift off poles proportionally to k
    noise = max_term * _EPS * (8.0 + 0.5 * n_terms)
    return noise > ctl.tol * max(abs(value), 1e-300)


_MP_COEFF_CACHE: dict = {}


def _mp_coeffs(key, builder, upto: int) -> list:
    """Lazily extended list of series coefficients as mpmath numbers.

    Coefficients are computed once per (family, parameters) at full ladder
    precision and reused across evaluations, so quadrature sweeps at fixed
    parameters do not pay the high-precision gamma cost per point.
    """
    import mpmath as mp
    cache = _MP_COEFF_CACHE.setdefault(key, [])
    if len(cache) < upto:
        with mp.workdps(_MP_DPS_CAP + 20):
            for k in range(len(cache), upto):
                cache.append(builder(k, mp))
    return cache


def _mp_series(key, builder, z, dps: int, max_terms: int, tol: float):
    import mpmath as mp
    with mp.workdps(min(dps, _MP_DPS_CAP)):
        zm = mp.mpc(z) if isinstance(z, complex) else mp.mpf(z)
        total = mp.mpf(0)
        power = mp.mpf(1)
        max_term = mp.mpf(0)
        small_run = 0
        coeffs = _mp_coeffs(key, builder, 64)
        for k in range(max_terms):
            if k >= len(coeffs):
                coeffs = _mp_coeffs(key, builder, 2 * len(coeffs))
            term = coeffs[k] * power
            total += term
            power *= zm
            mag = abs(term)
            if mag > max_term:
                max_term = mag
            if mag <= tol * abs(total) and mag < max_term:
                small_run += 1
                if k > 3 and small_run >= 2:
                    break
            else:
                small_run = 0
        else:
            return None
        if isinstance(z, complex):
            return complex(total)
        return float(total)


def _escalation_dps(max_term: float, value) -> int:
    mag = abs(value)
    if not math.isfinite(mag):
        mag = 0.0
    if not math.isfinite(max_term):
        max_term = 0.0
    lost = math.log10(max_term / max(mag, 1e-20)) if max_term > 0 else 0.0
    return int(30 + max(lost, 0.0))


def _log10_peak_term(absz: float, log_coeff_fn, k_cap: int = 20_000) -> float:
    """Analytic bound on log10(max_k |coeff_k| * |z|^k), scanned in log space.

    Used when the float pass aborted on overflow, where the observed peak
    underestimates the true one.
    """
    if absz <= 0.0:
        return 0.0
    best = -math.inf
    k = 1
    while k <= k_cap:
        val = k * math.log10(absz) + log_coeff_fn(k)
        if val > best:
            best = val
        k = max(k + 1, int(k * 1.25))
    return max(best, 0.0)


def _z_cap(alpha: float) -> float:
    return 30.0 if alpha >= 0.3 else 5.0


def _ml_series_value(alpha, beta, gamma_p, z, ctl):
    """Shared engine for the two- and three-parameter Mittag-Leffler series;
    gamma_p = 1 gives the plain family."""
    poch = [1.0]  # Gamma(gamma_p + k) / (k! Gamma(gamma_p)), built iteratively

    def coeff(k: int) -> float:
        while len(poch) <= k:
            i = len(poch) - 1
            poch.append(poch[-1] * (gamma_p + i) / (i + 1.0))
        return poch[k] * gamma_reciprocal(alpha * k + beta)

    value, max_term, n_terms, ok = _kahan_sum(coeff, z, ctl)
    if ok and not _needs_escalation(value, max_term, ctl, n_terms):
        return value
    if not (math.isfinite(abs(value)) if isinstance(value, complex)
            else math.isfinite(value)):
        value = 0.0

    def log_coeff(k: int) -> float:
        return (math.lgamma(gamma_p + k) - math.lgamma(gamma_p)
                - math.lgamma(k + 1.0) - math.lgamma(alpha * k + beta)) / math.log(10.0)

    peak = _log10_peak_term(abs(z), log_coeff)
    dps = max(_escalation_dps(max_term, value), int(30 + peak + 20))
    if dps > _MP_DPS_CAP:
        raise AccuracyError(
            f"Mittag-Leffler series needs ~{dps} digits (> {_MP_DPS_CAP})",
            partial=value)

    def coeff_mp(k, mp):
        # form the gamma argument at working precision: near-pole distances
        # are destroyed by double rounding
        num = mp.gamma(mp.mpf(gamma_p) + k) / (mp.gamma(gamma_p) * mp.factorial(k))
        return num * mp.rgamma(mp.mpf(alpha) * k + mp.mpf(beta))

    key = ("ml", alpha, beta, gamma_p)
    result = _mp_series(key, coeff_mp, z, dps, ctl.max_terms, ctl.tol)
    if result is None:
        raise AccuracyError(
            f"Mittag-Leffler series did not converge in {ctl.max_terms} terms",
            partial=value)
    return result


def mittag_leffler(alpha: float, beta: float, z, ctl: SeriesControl = DEFAULT_CONTROL):
    """E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha*k + beta).

    alpha in (0, 1], beta > 0; z real or complex with |z| inside the
    validated region (30 for alpha >= 0.3, 5 below).  Scalars return
    scalars; array z is evaluated elementwise.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    cap = _z_cap(alpha)
    if np.isscalar(z) or np.ndim(z) == 0:
        zc = complex(z)
        if abs(zc) > cap:
            raise ValueError(f"|z| = {abs(zc):.3g} outside validated region "
                             f"(|z| <= {cap:g} for alpha = {alpha:g})")
        zin = zc if (isinstance(z, complex) or zc.imag != 0.0) else float(zc.real)
        return _ml_series_value(alpha, beta, 1.0, zin, ctl)
    arr = np.asarray(z)
    out = np.empty(arr.shape, dtype=complex if np.iscomplexobj(arr) else float)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = mittag_leffler(alpha, beta, flat_in[i].item(), ctl)
    return out


def ml_three_param(alpha: float, beta: float, gamma_p: float, z,
                   ctl: SeriesControl = DEFAULT_CONTROL):
    """E^{gamma}_{alpha,beta}(z) with Gamma(gamma+k)/(k! Gamma(gamma))
    coefficients; reduces to mittag_leffler at gamma = 1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if beta <= 0.0 or gamma_p <= 0.0:
        raise ValueError("beta and gamma must be positive")
    zc = complex(z)
    if abs(zc) > _z_cap(alpha):
        raise ValueError("z outside validated region")
    zin = zc if (isinstance(z, complex) or zc.imag != 0.0) else float(zc.real)
    return _ml_series_value(alpha, beta, gamma_p, zin, ctl)


def _wright_float_pass(alpha: float, x: float, ctl: SeriesControl):
    """Alternating Wright M series with terms assembled in log space, so the
    reciprocal-gamma growth and the 1/k! decay never overflow separately."""
    log_x = math.log(x)
    total = 0.0
    comp = 0.0
    max_term = 0.0
    small_run = 0
    for k in range(ctl.max_terms):
        la, sign = log_gamma_reciprocal(-alpha * k + 1.0 - alpha)
        if sign == 0.0:
            mag = 0.0
            term = 0.0
        else:
            lt = la - math.lgamma(k + 1.0) + k * log_x
            if lt > 700.0:
                return total, math.inf, k, False
            mag = math.exp(lt) if lt > -745.0 else 0.0
            term = sign * mag * (1.0 if k % 2 == 0 else -1.0)
        if mag > max_term:
            max_term = mag
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if mag <= ctl.tol * abs(total) and mag < max_term:
            small_run += 1
            if k > 3 and small_run >= 2:
                return total, max_term, k + 1, True
        else:
            small_run = 0
    return total, max_term, ctl.max_terms, False


def wright_m_log_bound(alpha: float, x: float) -> float:
    """Leading exponential decay rate of M_alpha: the value is
    O(exp(-(1-alpha) * (alpha^alpha * x)^(1/(1-alpha))))."""
    if x <= 0.0:
        return 0.0
    return (1.0 - alpha) * (alpha ** alpha * x) ** (1.0 / (1.0 - alpha))


def wright_m(alpha: float, x, ctl: SeriesControl = DEFAULT_CONTROL):
    """Wright M function M_alpha(x) = sum_k (-x)^k / (k! Gamma(-alpha*k + 1 - alpha)).

    alpha in (0, 1), x >= 0.  M_alpha is the density in x of the inverse
    alpha-stable subordinator at t = 1.  Deep-tail arguments whose value is
    provably below WRIGHT_FLOOR (1e-45) return exactly 0.0.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if np.isscalar(x) or np.ndim(x) == 0:
        xf = float(x)
        if xf < 0.0:
            raise ValueError("x must be non-negative")
        if wright_m_log_bound(alpha, xf) > 115.0:  # e^-115 ~ 1e-50 < floor
            return 0.0
        if xf == 0.0:
            return gamma_reciprocal(1.0 - alpha)
        value, max_term, n_terms, ok = _wright_float_pass(alpha, xf, ctl)
        if ok and not _needs_escalation(value, max_term, ctl, n_terms):
            return max(value, 0.0)
        if not math.isfinite(value):
            value = 0.0

        def log_coeff(k: int) -> float:
            # |1/Gamma(-alpha k + 1 - alpha)| <= Gamma(alpha k + alpha) / pi
            return (math.lgamma(alpha * k + alpha) - math.log(math.pi)
                    - math.lgamma(k + 1.0)) / math.log(10.0)

        peak = _log10_peak_term(xf, log_coeff)
        dps = max(_escalation_dps(max_term, max(abs(value), WRIGHT_FLOOR)),
                  int(30 + peak + wright_m_log_bound(alpha, xf) / math.log(10.0) + 20))
        if dps > _MP_DPS_CAP:
            raise AccuracyError(
                f"Wright M series needs ~{dps} digits (> {_MP_DPS_CAP})",
                partial=value)

        def coeff_mp(k, mp):
            a = mp.mpf(alpha)
            return mp.rgamma(-a * k + 1 - a) / mp.factorial(k)

        result = _mp_series(("wright", alpha), coeff_mp, -xf, dps,
                            ctl.max_terms, ctl.tol)
        if result is None:
            raise AccuracyError("Wright M series did not converge", partial=value)
        return max(result, 0.0)
    arr = np.asarray(x, dtype=float)
    out = np.empty(arr.shape)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = wright_m(alpha, float(flat_in[i]), ctl)
    return out


def inverse_stable_pdf_h(alpha: float, x, t: float,
                         ctl: SeriesControl = DEFAULT_CONTROL):
    """Density h(x, t) = t^(-alpha) M_alpha(x t^(-alpha)) of the inverse
    alpha-stable subordinator at time t, as a function of x >= 0."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    scale = t ** (-alpha)
    return scale * wright_m(alpha, np.multiply(x, scale), ctl)


def stable_pdf_g(alpha: float, t, x: float,
                 ctl: SeriesControl = DEFAULT_CONTROL):
    """Density g(t, x) in t of the alpha-stable subordinator at time x > 0,
    defined by the Laplace transform int_0^inf e^{-s t} g(t, x) dt = e^{-x s^alpha}.

    Evaluated through the inverse-stable density: g(t, x) = (x*alpha/t) h(x, t).
    """
    if x <= 0.0:
        raise ValueError("x must be positive")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("t must be non-negative")
    if np.isscalar(t) or np.ndim(t) == 0:
        tf = float(t)
        if tf == 0.0:
            return 0.0
        return x * alpha / tf * inverse_stable_pdf_h(alpha, x, tf, ctl)
    out = np.zeros(t_arr.shape)
    flat_t, flat_out = t_arr.ravel(), out.ravel()
    for i in range(flat_t.size):
        tf = float(flat_t[i])
        flat_out[i] = 0.0 if tf == 0.0 else x * alpha / tf * inverse_stable_pdf_h(alpha, x, tf, ctl)
    return out


_FPMIN = 1e-290


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a),
    by series for x < a + 1 and by continued fraction otherwise."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    log_front = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # series: P = x^a e^-x / Gamma(a) * sum_n x^n / (a (a+1) ... (a+n))
        ap = a
        total = 1.0 / a
        delta = total
        for _ in range(10_000):
            ap += 1.0
            delta *= x / ap
            total += delta
            if abs(delta) < abs(total) * 1e-16:
                break
        return min(math.exp(log_front) * total, 1.0) if log_front > -745 else 0.0
    # Lentz continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(log_front) * h if log_front > -745 else 0.0
    return min(max(1.0 - q, 0.0), 1.0)


def lower_incomplete_gamma(a: float, x: float) -> float:
    """Unregularized gamma(a, x) = int_0^x e^-u u^(a-1) du, a in (0, 170]."""
    if a > 170.0:
        raise ValueError("a too large for unregularized values; use reg_lower_gamma")
    return reg_lower_gamma(a, x) * math.gamma(a)
