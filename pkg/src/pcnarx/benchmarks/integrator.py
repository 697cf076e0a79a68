"""Embedded Runge-Kutta 4(5) (Dormand-Prince) with dense output on a uniform grid.

The stepping core is plain Python so it can run any right-hand side; when the
right-hand side is a numba-compiled function the same core is compiled too.
Right-hand sides have the signature ``rhs(t, state, params, xs, dt_x)`` where
``xs`` is an excitation sampled with step ``dt_x`` (possibly empty).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

# Dormand-Prince 5(4) tableau and the 4th-order continuous extension.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

OK = 0
STEP_UNDERFLOW = 1
NON_FINITE = 2


class StiffnessError(RuntimeError):
    """Step size underflow: the problem is too stiff for an explicit method."""

    def __init__(self, t: float):
        super().__init__(f"step size underflow at t = {t:.6g} s")
        self.t = t


def _dopri_core(rhs, y0, params, xs, dt_x, dt, n_out, rtol, atol, h_max, clip_to_grid):
    n = y0.size
    out = np.empty((n_out, n))
    out[0] = y0
    K = np.empty((7, n))
    t = 0.0
    y = y0.copy()
    t_end = dt * (n_out - 1)
    K[0] = rhs(t, y, params, xs, dt_x)

    # initial step (Hairer, Norsett & Wanner II.4)
    scale = atol + np.abs(y) * rtol
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((K[0] / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_end)
    y1 = y + h0 * K[0]
    f1 = rhs(t + h0, y1, params, xs, dt_x)
    d2 = np.sqrt(np.mean(((f1 - K[0]) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100 * h0, h1, h_max)

    factor = 1.0
    next_out = 1
    while next_out < n_out:
        min_step = 16.0 * 2.220446049250313e-16 * max(abs(t), 1.0)
        if h < min_step:
            return out, STEP_UNDERFLOW, t
        if clip_to_grid:
            # never step across an excitation sample: the input is only piecewise linear
            k_next = np.floor(t / dt_x * (1 + 1e-12)) + 1.0
            h = min(h, k_next * dt_x - t)
        h = min(h, t_end - t)
        accepted = False
        while not accepted:
            if h < min_step:
                return out, STEP_UNDERFLOW, t
            for s in range(1, 6):
                dy = np.zeros(n)
                for j in range(s):
                    dy += _A[s, j] * K[j]
                K[s] = rhs(t + _C[s] * h, y + h * dy, params, xs, dt_x)
            y_new = y.copy()
            for j in range(6):
                y_new += h * _B[j] * K[j]
            K[6] = rhs(t + h, y_new, params, xs, dt_x)
            err = np.zeros(n)
            for j in range(7):
                err += _E[j] * K[j]
            err *= h
            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            en = np.sqrt(np.mean((err / scale) ** 2))
            if not np.isfinite(en):
                if not np.all(np.isfinite(y_new)) and h <= min_step * 2:
                    return out, NON_FINITE, t
                h *= 0.2
                continue
            if en <= 1.0:
                accepted = True
                factor = 10.0 if en == 0 else min(10.0, 0.9 * en**-0.2)
            else:
                h *= max(0.2, 0.9 * en**-0.2)
        t_new = t + h
        # dense output on grid points inside (t, t_new]
        while next_out < n_out and next_out * dt <= t_new + 1e-12 * dt:
            theta = (next_out * dt - t) / h
            if theta >= 1.0:
                out[next_out] = y_new
            else:
                for i in range(n):
                    acc = 0.0
                    for j in range(7):
                        kj = K[j, i]
                        acc += kj * (
                            _P[j, 0] * theta
                            + _P[j, 1] * theta**2
                            + _P[j, 2] * theta**3
                            + _P[j, 3] * theta**4
                        )
                    out[next_out, i] = y[i] + h * acc
            next_out += 1
        t = t_new
        y = y_new
        K[0] = K[6]
        h = min(h * factor, h_max)
    return out, OK, t


_dopri_jit = numba.njit(cache=True)(_dopri_core)


def _select_core(rhs):
    if isinstance(rhs, numba.core.registry.CPUDispatcher):
        return _dopri_jit
    return _dopri_core


@dataclass(frozen=True)
class OdeSystem:
    """A first-order ODE ``state' = rhs(t, state, params, excitation)``.

    ``output`` maps the state trajectory (n_out, dim) to the recorded channels.
    ``smooth_excitation`` tells the integrator the input is analytic in time, so
    steps may straddle excitation samples.
    """

    name: str
    dim: int
    rhs: Callable
    output: Callable = None
    smooth_excitation: bool = False


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0


def integrate_rk45(
    system: OdeSystem,
    params,
    y0,
    dt: float,
    duration: float,
    excitation=None,
    rtol: float = 1e-3,
    atol: float = 1e-6,
    h_max: float | None = None,
) -> Trajectory:
    """Integrate ``system`` from rest state ``y0`` and sample on ``t = k * dt``.

    ``excitation`` is the input sampled on the same grid (linear in between).
    """
    if not rtol > 0:
        raise ValueError("rtol must be positive")
    if not dt > 0 or not duration > 0:
        raise ValueError("dt and duration must be positive")
    n_out = int(round(duration / dt)) + 1
    xs = np.zeros(0) if excitation is None else np.ascontiguousarray(excitation, dtype=float)
    if xs.size and xs.size < n_out:
        raise ValueError("excitation shorter than the output grid")
    y0 = np.ascontiguousarray(y0, dtype=float)
    if y0.size != system.dim:
        raise ValueError(f"{system.name} expects a state of size {system.dim}")
    params = np.ascontiguousarray(params, dtype=float)
    clip = bool(xs.size) and not system.smooth_excitation
    core = _select_core(system.rhs)
    out, status, t_fail = core(
        system.rhs, y0, params, xs, float(dt), float(dt), n_out, float(rtol), float(atol),
        float(h_max if h_max is not None else duration), clip,
    )
    if status != OK:
        raise StiffnessError(t_fail)
    return Trajectory(np.arange(n_out) * dt, out)


@numba.njit(cache=True, inline="always")
def interp_excitation(t, xs, dt_x):
    """Linear interpolation of a uniformly sampled input (held at the ends)."""
    n = xs.size
    if n == 0:
        return 0.0
    s = t / dt_x
    k = int(np.floor(s))
    if k < 0:
        return xs[0]
    if k >= n - 1:
        return xs[n - 1]
    w = s - k
    return (1.0 - w) * xs[k] + w * xs[k + 1]
