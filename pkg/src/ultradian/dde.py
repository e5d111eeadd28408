"""Fixed-step integrator for systems with constant discrete delays.

Classical RK4 steps on a uniform grid; every delayed lookup is served by
cubic Hermite interpolation of the stored node values and node derivatives.
With ``dt <= min(delays) / 4`` a delayed time never falls inside the step
being computed, so the method of steps is handled implicitly.

The right-hand side has the signature ``rhs(t, y, ylag, args, out)``:

* ``y``    -- state at ``t``, shape ``(dim,)``
* ``ylag`` -- ``ylag[j]`` is the state at ``t - delays[j]``, shape ``(n_delays, dim)``
* ``args`` -- 1-D float array of parameters, passed through untouched
* ``out``  -- array of shape ``(dim,)`` to write the derivative into

A numba-jitted ``rhs`` runs the compiled kernel; any other callable runs the
same algorithm in plain Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

__all__ = [
    "BlowUpError",
    "HistorySegment",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "sample",
]


class BlowUpError(FloatingPointError):
    """The state became non-finite during integration."""

    def __init__(self, t: float):
        super().__init__(f"non-finite state at t = {t:.6g}")
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.05
    span: float = 1000.0
    interpolation: str = "cubic-hermite"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.span > 0:
            raise ValueError(f"span must be positive, got {self.span}")
        if self.interpolation != "cubic-hermite":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.span / self.dt - 1e-9))

    def check_delays(self, delays: Sequence[float]) -> None:
        if min(delays) <= 0:
            raise ValueError("all delays must be positive")
        if self.dt > min(delays) / 4 * (1 + 1e-12):
            raise ValueError(
                f"dt = {self.dt} exceeds min(delays)/4 = {min(delays) / 4}")


@dataclass(frozen=True)
class HistorySegment:
    """Node values and derivatives on a uniform grid over ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    values: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must be < t_end")
        if self.values.shape[0] < 2 or self.values.shape != self.derivs.shape:
            raise ValueError("need >= 2 nodes with matching derivative array")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / (self.n_nodes - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_nodes)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_start) or np.any(t > self.t_end):
            raise ValueError(f"t outside [{self.t_start}, {self.t_end}]")
        out = _hermite_eval(np.atleast_1d(t), self.t_start, self.h, self.values, self.derivs)
        return out[0] if t.ndim == 0 else out


def _hermite_eval(t, t0, h, y, f):
    """Vectorised cubic Hermite evaluation on a uniform grid."""
    x = (t - t0) / h
    j = np.clip(np.floor(x).astype(np.int64), 0, y.shape[0] - 2)
    s = (x - j)[..., None]
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    out = h00 * y[j] + h10 * h * f[j] + h01 * y[j + 1] + h11 * h * f[j + 1]
    # node queries return the stored value bit-for-bit
    exact = (s[..., 0] == 0.0)
    if np.any(exact):
        out[exact] = y[j[exact]]
    return out


@dataclass(frozen=True)
class Trajectory:
    """Dense solution on ``[-history_span, span]``.

    ``history`` covers the initial-history window and ends at ``t = 0``;
    forward nodes are stored contiguously in ``values``/``derivs`` at
    ``t = i * dt``.  The two parts share the node at ``t = 0`` but keep
    separate derivatives there (the solution is generally only C0 at 0).
    """

    history: HistorySegment
    dt: float
    values: np.ndarray
    derivs: np.ndarray
    delays: tuple
    history_spec: object = field(default=None, compare=False)

    @property
    def span(self) -> float:
        return self.dt * (self.values.shape[0] - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def segments(self, length: float | None = None) -> list[HistorySegment]:
        """Forward solution cut into contiguous segments.

        The default cut is the method-of-steps interval ``min(delays)``.
        """
        if length is None:
            length = min(self.delays)
        per = max(1, int(round(length / self.dt)))
        n = self.values.shape[0] - 1
        out = []
        for a in range(0, n, per):
            b = min(a + per, n)
            out.append(HistorySegment(a * self.dt, b * self.dt,
                                      self.values[a:b + 1], self.derivs[a:b + 1]))
        return out

    def __call__(self, t):
        return sample(self, t)


def sample(trajectory: Trajectory, t):
    """Interpolated state at time(s) ``t``; exact at grid nodes."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    lo = trajectory.history.t_start
    hi = trajectory.span
    if np.any(t < lo) or np.any(t > hi * (1 + 1e-14)):
        raise ValueError(f"t outside trajectory span [{lo}, {hi}]")
    out = np.empty(t.shape + (trajectory.dim,))
    neg = t < 0
    if np.any(neg):
        out[neg] = trajectory.history(t[neg])
    if np.any(~neg):
        out[~neg] = _hermite_eval(t[~neg], 0.0, trajectory.dt,
                                  trajectory.values, trajectory.derivs)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def _stage_weights(delays, dt):
    """Interval offsets and Hermite weights for every (delay, stage) pair.

    Query times are ``(i + c) * dt - delay`` with ``c`` in (0, 1/2, 1), so the
    interval index relative to ``i`` and the position inside it are fixed.
    """
    nd = delays.shape[0]
    jo = np.empty((nd, 3), dtype=np.int64)
    w = np.empty((nd, 3, 4))
    for q in range(nd):
        for c, frac in enumerate((0.0, 0.5, 1.0)):
            x = frac - delays[q] / dt
            r = round(x)
            if abs(x - r) < 1e-9:
                x = float(r)
            j = math.floor(x)
            s = x - j
            jo[q, c] = j
            s2 = s * s
            s3 = s2 * s
            w[q, c, 0] = 2.0 * s3 - 3.0 * s2 + 1.0
            w[q, c, 1] = (s3 - 2.0 * s2 + s) * dt
            w[q, c, 2] = -2.0 * s3 + 3.0 * s2
            w[q, c, 3] = (s3 - s2) * dt
    return jo, w


def _rk4(rhs, args, jo, w, hy, hf, dt, n_steps):
    # Y/F hold history nodes 0..m followed by forward nodes, so the node at
    # t = i * dt sits at row r = m + i.  Row m carries the forward derivative;
    # the last history interval uses hf[m] instead.
    m = hy.shape[0] - 1
    dim = hy.shape[1]
    nd = jo.shape[0]
    Y = np.empty((m + n_steps + 1, dim))
    F = np.empty((m + n_steps + 1, dim))
    Y[:m + 1] = hy
    F[:m] = hf[:m]
    lag = np.empty((3, nd, dim))
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)

    for i in range(n_steps + 1):
        r = m + i
        # delayed states for the node, midpoint and end of step i; with
        # dt <= min(delays)/4 they only touch rows filled before row r
        for c in range(3):
            for q in range(nd):
                j = r + jo[q, c]
                if j < 0:
                    raise ValueError("delayed lookup before start of history")
                if j + 1 >= r:
                    raise ValueError("delayed lookup beyond computed solution")
                w0 = w[q, c, 0]
                w1 = w[q, c, 1]
                w2 = w[q, c, 2]
                w3 = w[q, c, 3]
                for d in range(dim):
                    fj1 = hf[m, d] if j == m - 1 else F[j + 1, d]
                    lag[c, q, d] = (w0 * Y[j, d] + w1 * F[j, d]
                                    + w2 * Y[j + 1, d] + w3 * fj1)

        t = i * dt
        rhs(t, Y[r], lag[0], args, k1)
        for d in range(dim):
            F[r, d] = k1[d]
            if not math.isfinite(Y[r, d]) or not math.isfinite(k1[d]):
                return Y, F, i
        if i == n_steps:
            break

        th = t + 0.5 * dt
        for d in range(dim):
            tmp[d] = Y[r, d] + 0.5 * dt * k1[d]
        rhs(th, tmp, lag[1], args, k2)
        for d in range(dim):
            tmp[d] = Y[r, d] + 0.5 * dt * k2[d]
        rhs(th, tmp, lag[1], args, k3)
        for d in range(dim):
            tmp[d] = Y[r, d] + dt * k3[d]
        rhs(t + dt, tmp, lag[2], args, k4)
        for d in range(dim):
            Y[r + 1, d] = Y[r, d] + dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
    return Y, F, n_steps + 1


_rk4_py = _rk4
_rk4_jit = numba.njit(cache=True)(_rk4)


def _is_jitted(fn) -> bool:
    return isinstance(fn, numba.core.registry.CPUDispatcher)


def _build_history(history, dim_hint, m: int, dt: float):
    """History nodes on ``t = (i - m) * dt`` for ``i = 0..m``."""
    t = (np.arange(m + 1) - m) * dt
    if callable(history):
        vals = np.array([np.atleast_1d(np.asarray(history(ti), dtype=float)) for ti in t])
        # central differences; the history callable is arbitrary, so no
        # analytic derivative is assumed
        eps = 1e-6 * max(1.0, dt)
        fp = np.array([np.atleast_1d(np.asarray(history(ti + eps), dtype=float)) for ti in t])
        fm = np.array([np.atleast_1d(np.asarray(history(ti - eps), dtype=float)) for ti in t])
        ders = (fp - fm) / (2 * eps)
    else:
        c = np.atleast_1d(np.asarray(history, dtype=float))
        vals = np.tile(c, (m + 1, 1))
        ders = np.zeros_like(vals)
    return vals, ders


def integrate(rhs: Callable, delays: Sequence[float], history, config: IntegratorConfig,
              args: np.ndarray | None = None) -> Trajectory:
    """Integrate a delay system over ``[0, config.span]``.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y, ylag, args, out)``; see the module docstring.
    delays : sequence of float
        Constant positive delays.
    history : array_like or callable
        Constant state vector, or ``history(t)`` defined on ``[-max(delays), 0]``.
    config : IntegratorConfig
    args : ndarray, optional
        Parameter vector handed to ``rhs``.

    Raises
    ------
    BlowUpError
        If the state becomes non-finite; carries the time of blow-up.
    """
    delays_arr = np.asarray(delays, dtype=float)
    if delays_arr.ndim != 1 or delays_arr.size == 0:
        raise ValueError("delays must be a non-empty 1-D sequence")
    config.check_delays(delays_arr)
    dt = config.dt
    m = int(math.ceil(delays_arr.max() / dt - 1e-9))
    hy, hf = _build_history(history, None, m, dt)
    if not np.all(np.isfinite(hy)):
        raise ValueError("initial history is not finite")
    args = np.zeros(0) if args is None else np.ascontiguousarray(args, dtype=float)
    n = config.n_steps

    jo, w = _stage_weights(delays_arr, dt)
    kernel = _rk4_jit if _is_jitted(rhs) else _rk4_py
    Y, F, n_ok = kernel(rhs, args, jo, w, hy, hf, dt, n)
    if n_ok <= n:
        raise BlowUpError(n_ok * dt)
    y, f = Y[m:], F[m:]

    hist = HistorySegment(-m * dt, 0.0, hy, hf)
    return Trajectory(hist, dt, y, f, tuple(float(x) for x in delays_arr), history)
