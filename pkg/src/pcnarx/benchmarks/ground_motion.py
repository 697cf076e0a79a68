"""Modulated, filtered white-noise ground motions with a time-varying filter.

The acceleration is ``x(t) = q(t, alpha) * w(t)`` where ``w`` is white noise
passed through a damped-oscillator impulse response whose frequency drifts
linearly in time, normalized to unit variance at every instant, and
``q(t) = a1 * t**(a2 - 1) * exp(-a3 * t)`` shapes intensity and duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import integrate, optimize, special

G = 9.81
# E[int x^2 dt] in (m/s^2)^2 s per unit of Arias intensity given in s.g
ARIAS_TO_ENERGY = 2.0 * G**2 / math.pi
# filter frequencies are floored here (rad/s) so a steep negative slope cannot
# turn the impulse response into a growing exponential
OMEGA_FLOOR = 2.0 * math.pi * 0.1

_LOWER_SHAPE = 1e-2
_UPPER_SHAPE = 1e6


class ParameterInfeasibleError(ValueError):
    """No modulation function matches the requested duration measures."""


class FilterValidityError(ValueError):
    """The filter damping ratio is outside (0, 1)."""


def _gamma_quantiles(shape: float):
    return (
        special.gammaincinv(shape, 0.05),
        special.gammaincinv(shape, 0.45),
        special.gammaincinv(shape, 0.95),
    )


def _duration_ratio(shape: float) -> float:
    g05, g45, g95 = _gamma_quantiles(shape)
    return (g95 - g05) / g45


def modulation_alpha(I_a: float, D_5_95: float, t_mid: float, energy_per_arias: float = ARIAS_TO_ENERGY):
    """Modulation parameters ``(a1, a2, a3)`` from Arias intensity and timing.

    The cumulative energy of ``q**2`` is a regularized incomplete gamma
    function with shape ``2 a2 - 1`` and rate ``2 a3``; its 45 % instant must
    equal ``t_mid`` and its 5-95 % interval ``D_5_95``. The shape solves a
    one-dimensional root problem on the duration/t_mid ratio, the rate
    follows from ``t_mid``, and ``a1`` scales the total energy.
    """
    if not (I_a > 0 and D_5_95 > 0 and t_mid > 0):
        raise ParameterInfeasibleError("I_a, D_5_95 and t_mid must be positive")
    target = D_5_95 / t_mid

    def f(log_shape):
        return _duration_ratio(math.exp(log_shape)) - target

    lo, hi = math.log(_LOWER_SHAPE), math.log(_UPPER_SHAPE)
    f_lo, f_hi = f(lo), f(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise ParameterInfeasibleError(
            f"no gamma-type envelope has D_5_95/t_mid = {target:.4g}"
        )
    log_shape = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    shape = math.exp(log_shape)
    rate = special.gammaincinv(shape, 0.45) / t_mid
    alpha2 = 0.5 * (shape + 1.0)
    alpha3 = 0.5 * rate
    energy = energy_per_arias * I_a
    # int_0^inf t^(shape-1) exp(-rate t) dt = Gamma(shape) / rate^shape
    log_norm = special.gammaln(shape) - shape * math.log(rate)
    alpha1 = math.sqrt(energy * math.exp(-log_norm))
    return alpha1, alpha2, alpha3


def modulation(t, alpha) -> np.ndarray:
    a1, a2, a3 = alpha
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = a1 * np.power(t, a2 - 1.0) * np.exp(-a3 * t)
    return np.where(t > 0, q, 0.0 if a2 > 1 else np.inf)


def energy_fractions(t, alpha) -> np.ndarray:
    """Fraction of the total ``int q^2`` accumulated by time ``t``."""
    _, a2, a3 = alpha
    return special.gammainc(2 * a2 - 1, 2 * a3 * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class GroundMotionParams:
    """Physical ground-motion parameters (frequencies in rad/s, rad/s^2)."""

    I_a: float
    D_5_95: float
    t_mid: float
    omega_mid: float
    omega_prime: float
    zeta_f: float
    energy_per_arias: float = ARIAS_TO_ENERGY

    def __post_init__(self):
        if not 0 < self.zeta_f < 1:
            raise FilterValidityError(f"filter damping must lie in (0, 1), got {self.zeta_f}")
        if not (self.D_5_95 > 0 and self.t_mid > 0 and self.I_a > 0):
            raise ParameterInfeasibleError("I_a, D_5_95 and t_mid must be positive")

    @classmethod
    def from_hz(cls, I_a, D_5_95, t_mid, f_mid, f_prime, zeta_f, **kw) -> "GroundMotionParams":
        return cls(I_a, D_5_95, t_mid, 2 * math.pi * f_mid, 2 * math.pi * f_prime, zeta_f, **kw)

    @property
    def alpha(self):
        return modulation_alpha(self.I_a, self.D_5_95, self.t_mid, self.energy_per_arias)

    def filter_frequency(self, tau) -> np.ndarray:
        w = self.omega_mid + self.omega_prime * (np.asarray(tau, dtype=float) - self.t_mid)
        return np.maximum(w, OMEGA_FLOOR)


def impulse_response(lag, omega_f, zeta_f):
    lag = np.asarray(lag, dtype=float)
    sq = math.sqrt(1.0 - zeta_f**2)
    h = omega_f / sq * np.exp(-zeta_f * omega_f * lag) * np.sin(omega_f * sq * lag)
    return np.where(lag > 0, h, 0.0)


def filter_weights(p: GroundMotionParams, dt: float, k: int) -> np.ndarray:
    """Normalized weights ``s_i(t_k)``, i = 0..k, of the impulses at ``t_i = i dt``.

    Their squares sum to one whenever any impulse has reached ``t_k``.
    """
    ti = np.arange(k + 1) * dt
    h = impulse_response(k * dt - ti, p.filter_frequency(ti), p.zeta_f)
    norm = math.sqrt(float(np.sum(h * h)))
    return h / norm if norm > 0 else h


@numba.njit(cache=True)
def _unit_process(omega_f, zeta, dt, U, cutoff):
    n = U.size
    num = np.zeros(n)
    den = np.zeros(n)
    sq = np.sqrt(1.0 - zeta * zeta)
    for i in range(n):
        wf = omega_f[i]
        amp = wf / sq
        decay = np.exp(-zeta * wf * dt)
        zr = decay * np.cos(wf * sq * dt)
        zi = decay * np.sin(wf * sq * dt)
        wr = zr
        wi = zi
        ui = U[i]
        for k in range(i + 1, n):
            hv = amp * wi
            num[k] += hv * ui
            den[k] += hv * hv
            wr, wi = wr * zr - wi * zi, wr * zi + wi * zr
            if wr * wr + wi * wi < cutoff:
                break
    out = np.zeros(n)
    for k in range(n):
        if den[k] > 0.0:
            out[k] = num[k] / np.sqrt(den[k])
    return out


def unit_process(p: GroundMotionParams, dt: float, U, cutoff: float = 1e-24) -> np.ndarray:
    """Filtered white noise normalized to unit variance on the grid ``i * dt``.

    ``U`` holds one standard normal impulse per grid instant. Impulse responses
    are dropped once their envelope falls below ``sqrt(cutoff)`` of the peak.
    """
    U = np.ascontiguousarray(U, dtype=float)
    omega_f = np.ascontiguousarray(p.filter_frequency(np.arange(U.size) * dt))
    return _unit_process(omega_f, p.zeta_f, float(dt), U, cutoff)


def synthesize_ground_motion(
    p: GroundMotionParams, dt: float, duration: float, seed, return_unit: bool = False
):
    """Ground acceleration sampled at ``t = 0, dt, ..., duration``.

    ``seed`` may be anything accepted by ``numpy.random.default_rng``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(duration / dt)) + 1
    rng = np.random.default_rng(seed)
    U = rng.standard_normal(n)
    w = unit_process(p, dt, U)
    t = np.arange(n) * dt
    q = modulation(t, p.alpha)
    x = np.zeros(n)
    live = w != 0.0  # q may be infinite at t = 0, where no impulse has arrived yet
    x[live] = q[live] * w[live]
    return (x, w) if return_unit else x


def arias_energy(x, dt: float) -> float:
    """``int x^2 dt`` by the trapezoidal rule."""
    x = np.asarray(x, dtype=float)
    return float(integrate.trapezoid(x * x, dx=dt))
