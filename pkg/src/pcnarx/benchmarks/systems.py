"""Right-hand sides of the quarter-car, Duffing and Bouc-Wen benchmarks.

All functions share the integrator signature ``rhs(t, state, params, xs, dt_x)``.
"""

import numba
import numpy as np

from .integrator import OdeSystem, interp_excitation


@numba.njit(cache=True)
def quarter_car_rhs(t, s, p, xs, dt_x):
    # p = (k_s, k_u, m_s, m_u, c, A, omega); road profile z = A sin(omega t)
    ks, ku, ms, mu, c, amp, omega = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    z = amp * np.sin(omega * t)
    force = ks * (s[0] - s[1]) ** 3 + c * (s[2] - s[3])
    out = np.empty(4)
    out[0] = s[2]
    out[1] = s[3]
    out[2] = -force / ms
    out[3] = (force + ku * (z - s[1])) / mu
    return out


@numba.njit(cache=True)
def duffing_rhs(t, s, p, xs, dt_x):
    # p = (epsilon, zeta, omega); ground acceleration from xs
    eps, zeta, omega = p[0], p[1], p[2]
    x = interp_excitation(t, xs, dt_x)
    out = np.empty(2)
    out[0] = s[1]
    out[1] = -x - 2.0 * zeta * omega * s[1] - omega**2 * (s[0] + eps * s[0] ** 3)
    return out


@numba.njit(cache=True)
def boucwen_rhs(t, s, p, xs, dt_x):
    # p = (omega, alpha, zeta, rho, gamma, n, beta); state = (y, v, z)
    omega, alpha, zeta, rho, gamma, n, beta = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    x = interp_excitation(t, xs, dt_x)
    v = s[1]
    z = s[2]
    az = abs(z)
    az_nm1 = 1.0 if n == 1.0 else az ** (n - 1.0)
    out = np.empty(3)
    out[0] = v
    out[1] = -x - 2.0 * zeta * omega * v - omega**2 * (rho * s[0] + (1.0 - rho) * z)
    out[2] = gamma * v - alpha * abs(v) * az_nm1 * z - beta * v * az**n
    return out


QUARTER_CAR = OdeSystem("quarter_car", 4, quarter_car_rhs, lambda X: X[:, 0], smooth_excitation=True)
DUFFING = OdeSystem("duffing", 2, duffing_rhs, lambda X: X[:, 0])
BOUCWEN = OdeSystem("boucwen", 3, boucwen_rhs, lambda X: X[:, 1])

# deterministic parameters of the oscillators
DUFFING_ZETA = 0.02
DUFFING_OMEGA = 5.97
BOUCWEN_FIXED = {"zeta": 0.02, "rho": 0.0, "gamma": 1.0, "n": 1.0, "beta": 0.0}


def duffing_params(epsilon: float) -> np.ndarray:
    return np.array([epsilon, DUFFING_ZETA, DUFFING_OMEGA])


def boucwen_params(omega: float, alpha: float) -> np.ndarray:
    f = BOUCWEN_FIXED
    return np.array([omega, alpha, f["zeta"], f["rho"], f["gamma"], f["n"], f["beta"]])
