"""Spray-flow geodesics on the conic domain and F-lengths of admissible curves.

Geodesics solve ``x'' + 2 G(x, x') = 0`` with classical fixed-step RK4. A
step that would leave the chart or the cone is retried at half the step, up
to ten times. If it still fails, the exit time is located by bisection and
the integration stops with the matching status.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .conic_kropina import DOMAIN_EPS, ConicMetric
from .exceptions import ChartDomainError, InputError, OutsideConicDomainError

MAX_HALVINGS = 10
EXIT_TOL = 1e-8
START_MARGIN = 1e-8

COMPLETED = "completed"
LEFT_DOMAIN = "left_domain"
LEFT_CHART = "left_chart"


@dataclass
class GeodesicResult:
    """Sampled trajectory.

    ``t[k]``, ``x[k]``, ``y[k]`` and ``f_values[k]`` describe the k-th
    accepted sample. ``t_exit`` is set only when the guard stopped the run.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    f_values: np.ndarray
    status: str
    t_exit: Optional[float]
    f_length: float

    @property
    def samples(self) -> list:
        return list(zip(self.t.tolist(), self.x, self.y))

    @property
    def f_drift(self) -> float:
        """Max relative deviation of ``F`` from its initial value."""
        f0 = self.f_values[0]
        return float(np.max(np.abs(self.f_values - f0)) / abs(f0))

    def status_label(self) -> str:
        if self.t_exit is None:
            return self.status
        return f"{self.status}({self.t_exit:.17g})"

    def to_csv(self) -> str:
        return samples_to_csv(self.t, self.x, self.y, self.f_values)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def samples_to_csv(t, x, y, f_values) -> str:
    """CSV with columns ``t, x1..xn, y1..yn, F`` at 17 significant digits."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["F"])
    for tk, xk, yk, fk in zip(t, x, y, f_values):
        w.writerow([_fmt(tk)] + [_fmt(v) for v in xk] + [_fmt(v) for v in yk] + [_fmt(fk)])
    return buf.getvalue()


def _stage(metric: ConicMetric, x: np.ndarray, y: np.ndarray):
    """``(y, -2G)`` or ``None`` when ``(x, y)`` is outside the chart or the cone."""
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and metric.valid_points(x)):
        return None
    G, ratio = metric._spray_and_ratio(x, y)
    if not ratio > DOMAIN_EPS:
        return None
    return y, -2.0 * G


def _rk4(metric: ConicMetric, x: np.ndarray, y: np.ndarray, dt: float):
    """One RK4 step; ``None`` if any stage or the endpoint is inadmissible."""
    stages = []
    xs, ys = x, y
    for c in (0.0, 0.5, 0.5, 1.0):
        if stages:
            kx, ky = stages[-1]
            xs, ys = x + c * dt * kx, y + c * dt * ky
        st = _stage(metric, xs, ys)
        if st is None:
            return None, xs, ys
        stages.append(st)
    (k1x, k1y), (k2x, k2y), (k3x, k3y), (k4x, k4y) = stages
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    yn = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
    if not metric.contains(xn, yn):
        return None, xn, yn
    return (xn, yn), xn, yn


def _exit_kind(metric: ConicMetric, xs: np.ndarray) -> str:
    return LEFT_DOMAIN if bool(np.all(metric.valid_points(xs))) else LEFT_CHART


def integrate(metric: ConicMetric, x0, y0, t_max: float, dt: float) -> GeodesicResult:
    """Integrate the geodesic through ``(x0, y0)`` on ``[0, t_max]``.

    Raises:
        InputError: for non-positive ``dt``/``t_max`` or an initial condition
            outside the chart or the cone.
    """
    if not dt > 0 or not t_max > 0:
        raise InputError("dt and t_max must be positive")
    x = np.asarray(x0, dtype=float).copy()
    y = np.asarray(y0, dtype=float).copy()
    if x.shape != (metric.dim,) or y.shape != (metric.dim,):
        raise InputError(f"x0 and y0 must be {metric.dim}-vectors")
    if not (np.all(metric.valid_points(x)) and metric.domain_ratio(x, y) > START_MARGIN):
        raise InputError("initial condition outside the conic domain")

    ts, xs, ys = [0.0], [x], [y]
    t = 0.0
    status, t_exit = COMPLETED, None
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    for k in range(n_steps):
        h = min(dt, t_max - t) if k == n_steps - 1 else dt
        accepted = None
        trial = h
        bad = None
        for attempt in range(MAX_HALVINGS + 1):
            if attempt:
                trial *= 0.5
            accepted, bx, _ = _rk4(metric, x, y, trial)
            if accepted is not None:
                break
            bad = bx
        if accepted is None:
            # the smallest failed step brackets the exit: bisect on step length
            lo, hi = 0.0, trial
            while hi - lo > EXIT_TOL:
                mid = 0.5 * (lo + hi)
                ok, bx, _ = _rk4(metric, x, y, mid)
                if ok is None:
                    hi, bad = mid, bx
                else:
                    lo = mid
            status, t_exit = _exit_kind(metric, bad), t + hi
            if lo > 0.0:
                x, y = _rk4(metric, x, y, lo)[0]
                t += lo
                ts.append(t)
                xs.append(x)
                ys.append(y)
            break
        x, y = accepted
        t += trial
        ts.append(t)
        xs.append(x)
        ys.append(y)
        if trial < h:
            # finish the nominal step at the reduced size before moving on
            remaining = h - trial
            while remaining > 1e-15:
                step = min(trial, remaining)
                nxt = _rk4(metric, x, y, step)[0]
                if nxt is None:
                    break
                x, y = nxt
                t += step
                remaining -= step
                ts.append(t)
                xs.append(x)
                ys.append(y)

    t_arr = np.array(ts)
    x_arr = np.array(xs)
    y_arr = np.array(ys)
    f_vals = np.asarray(metric._F(x_arr, y_arr), dtype=float)
    return GeodesicResult(t_arr, x_arr, y_arr, f_vals, status, t_exit, _trapezoid(t_arr, f_vals))


def _trapezoid(t: np.ndarray, f: np.ndarray) -> float:
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))


def f_length(metric: ConicMetric, samples: Iterable[Sequence]) -> float:
    """Composite-trapezoid F-length ``int F(c(t), c'(t)) dt`` of sampled ``(t, x, y)``.

    Corners are allowed: consecutive samples may carry unrelated velocities.

    Raises:
        InputError: if any sample is outside the conic domain or ``t`` decreases.
    """
    rows = list(samples)
    if not rows:
        raise InputError("no samples")
    t = np.array([float(r[0]) for r in rows])
    x = np.array([np.asarray(r[1], dtype=float) for r in rows])
    y = np.array([np.asarray(r[2], dtype=float) for r in rows])
    if np.any(np.diff(t) < 0):
        raise InputError("sample times must be non-decreasing")
    try:
        f = np.atleast_1d(metric.F(x, y))
    except (OutsideConicDomainError, ChartDomainError) as exc:
        raise InputError(f"inadmissible sample: {exc}") from exc
    return _trapezoid(t, f)
