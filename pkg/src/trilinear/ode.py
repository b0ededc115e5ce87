"""Adaptive Dormand-Prince 5(4) integration with dense output and event detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th- and embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: weights(theta) = _P @ [theta, theta^2, theta^3, theta^4]
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

OK, UNPHYSICAL, STEP_FAILURE = "ok", "unphysical", "step-failure"


@dataclass
class Trajectory:
    """States on a time grid; ``states`` has shape (n_variables, n_times).

    ``status[j]`` is ``"ok"``, ``"unphysical"`` (a physicality predicate
    failed at or before that time) or ``"step-failure"`` (the integrator
    stopped before reaching that time; the state column is NaN).
    """

    times: np.ndarray
    states: np.ndarray
    status: list[str]
    events: dict[str, float] = field(default_factory=dict)
    message: str = ""
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def completed(self) -> bool:
        return STEP_FAILURE not in self.status


def _rms(x: np.ndarray) -> float:
    return math.sqrt(float(np.mean(np.abs(x) ** 2))) if x.size else 0.0


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: Sequence[complex] | np.ndarray,
    grid: Sequence[float] | np.ndarray,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    first_step: float | None = None,
    max_step: float = math.inf,
    min_step: float = 1e-14,
    max_steps: int = 1_000_000,
    physical: Callable[[np.ndarray], bool] | None = None,
) -> Trajectory:
    """Integrate dy/dt = rhs(t, y) from grid[0] and report y at every grid time.

    The step size follows a PI controller on the embedded error estimate
    (scaled by ``atol + rtol*|y|``); states between steps come from the
    4th-order continuous extension.  If ``physical`` is given, the first
    grid time where it returns False is recorded as the ``"unphysical"``
    event and later times are marked unphysical (integration continues).
    A step-size underflow or step-count overrun truncates the trajectory.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    t_grid = np.asarray(grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-D sequence")
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    n_times = t_grid.size
    out = np.full((y.size, n_times), np.nan, dtype=y.dtype)
    status = [STEP_FAILURE] * n_times
    events: dict[str, float] = {}
    out[:, 0] = y
    status[0] = OK
    t, t_end = float(t_grid[0]), float(t_grid[-1])
    bad = False
    if physical is not None and not physical(y):
        bad = True
        events["unphysical"] = t
        status[0] = UNPHYSICAL

    k = np.empty((7, y.size), dtype=y.dtype)
    k[0] = rhs(t, y)
    span = t_end - t
    if first_step is None:
        scale = atol + rtol * np.abs(y)
        d0, d1 = _rms(y / scale), _rms(k[0] / scale)
        h = 1e-6 * span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, span)
    else:
        h = first_step
    beta = 0.04
    expo = 0.2 - 0.75 * beta
    err_prev = 1e-4
    next_idx = 1
    n_steps = n_rejected = 0
    message = "completed"

    while next_idx < n_times:
        if n_steps + n_rejected >= max_steps:
            message = f"step budget exhausted at t={t:.6g}"
            break
        h = min(h, max_step, t_end - t)
        if h < min_step * max(1.0, abs(t)):
            message = f"step size underflow at t={t:.6g}"
            break
        for s in range(1, 7):
            k[s] = rhs(t + _C[s] * h, y + h * (_A[s] @ k[:s]))
        y_new = y + h * (_B @ k)
        k_last = k[6]  # FSAL: stage 7 is evaluated at y_new
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / scale)
        if not np.isfinite(err):
            n_rejected += 1
            h *= 0.2
            continue
        if err <= 1.0:
            t_new = t + h
            while next_idx < n_times and t_grid[next_idx] <= t_new * (1 + 1e-15):
                theta = (t_grid[next_idx] - t) / h
                weights = _P @ np.array([theta, theta**2, theta**3, theta**4])
                y_dense = y_new if theta == 1.0 else y + h * (weights @ k)
                out[:, next_idx] = y_dense
                if physical is not None and not bad and not physical(y_dense):
                    bad = True
                    events["unphysical"] = float(t_grid[next_idx])
                status[next_idx] = UNPHYSICAL if bad else OK
                next_idx += 1
            t, y = t_new, y_new
            k[0] = k_last
            n_steps += 1
            factor = 0.9 * (max(err, 1e-10) ** -expo) * (err_prev**beta)
            h *= min(5.0, max(0.2, factor))
            err_prev = max(err, 1e-4)
        else:
            n_rejected += 1
            h *= max(0.2, 0.9 * err**-0.2)

    return Trajectory(t_grid, out, status, events, message, n_steps, n_rejected)


def detect_event(
    traj_or_times,
    values: np.ndarray | Callable[[np.ndarray], np.ndarray] | None = None,
    level: float = 0.0,
) -> float | None:
    """First time a sampled signal crosses ``level``, by linear interpolation.

    Accepts either ``(times, values)`` or a Trajectory with ``values`` a
    callable mapping its state matrix to a 1-D series.  Returns ``None`` if
    the signal never reaches ``level``.  A sample exactly at the level
    counts as the crossing.
    """
    if isinstance(traj_or_times, Trajectory):
        times = traj_or_times.times
        series = values(traj_or_times.states) if callable(values) else np.asarray(values)
    else:
        times = np.asarray(traj_or_times, dtype=float)
        series = np.asarray(values, dtype=float)
    g = np.asarray(series, dtype=float) - level
    valid = np.isfinite(g)
    if not valid.any():
        return None
    sign0 = np.sign(g[valid][0])
    if sign0 == 0:
        return float(times[valid][0])
    for j in range(1, len(g)):
        if not (valid[j] and valid[j - 1]):
            continue
        if g[j] == 0:
            return float(times[j])
        if np.sign(g[j]) != sign0:
            t0, t1 = times[j - 1], times[j]
            return float(t0 + (t1 - t0) * g[j - 1] / (g[j - 1] - g[j]))
    return None
