"""Glucose infusion protocols: constant rate and smooth periodic on-off pulses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit

__all__ = ["InfusionProtocol", "sigmoid", "infusion_rate", "CONSTANT", "ON_OFF"]

CONSTANT = "constant"
ON_OFF = "on-off"

_KIND_CODE = {CONSTANT: 0.0, ON_OFF: 1.0}


def sigmoid(y, k=100.0):
    """Smooth step ``1 / (1 + exp(-k y))``; overflow-safe for large ``|k y|``."""
    return expit(k * np.asarray(y, dtype=float))


@dataclass(frozen=True)
class InfusionProtocol:
    """Glucose input ``G_in(t)`` in mg dl^-1 min^-1.

    For ``kind == "on-off"`` the rate is ``G_max`` during a pulse of length
    ``t_in`` at the start of every period ``T_in`` (shifted by the lag
    ``sigma``) and zero in between, with sigmoidal edges of steepness ``k``.
    """

    kind: str = CONSTANT
    G_max: float = 0.0
    T_in: float = 0.0
    t_in: float = 0.0
    sigma: float = 0.0
    k: float = 100.0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if not self.G_max >= 0:
            raise ValueError(f"G_max must be >= 0, got {self.G_max}")
        if self.kind == ON_OFF:
            if not self.T_in > 0:
                raise ValueError("T_in must be positive")
            if not 0 < self.t_in <= self.T_in / 2 * (1 + 1e-12):
                raise ValueError(
                    f"need 0 < t_in <= T_in/2; got t_in={self.t_in}, T_in={self.T_in}")
            if not self.k > 0:
                raise ValueError("k must be positive")

    @classmethod
    def constant(cls, rate: float = 0.0) -> "InfusionProtocol":
        return cls(CONSTANT, G_max=float(rate))

    @classmethod
    def fasting(cls) -> "InfusionProtocol":
        return cls(CONSTANT, G_max=0.0)

    @classmethod
    def on_off(cls, G_max, T_in, t_in=None, sigma=0.0, k=100.0) -> "InfusionProtocol":
        if t_in is None:
            t_in = T_in / 2
        return cls(ON_OFF, float(G_max), float(T_in), float(t_in), float(sigma), float(k))

    @classmethod
    def from_mean(cls, G_bar, T_in, t_in, sigma=0.0, k=100.0) -> "InfusionProtocol":
        """On-off protocol with average rate ``G_bar`` over a period."""
        return cls.on_off(G_bar * T_in / t_in, T_in, t_in, sigma, k)

    @property
    def periodic(self) -> bool:
        return self.kind == ON_OFF

    @property
    def G_bar(self) -> float:
        """Average infusion rate of the idealised square pulse train."""
        if self.kind == CONSTANT:
            return self.G_max
        return self.G_max * self.t_in / self.T_in

    def as_args(self) -> np.ndarray:
        return np.array([_KIND_CODE[self.kind], self.G_max, self.T_in, self.t_in,
                         self.sigma, self.k])

    def __call__(self, t):
        return infusion_rate(t, self)


def infusion_rate(t, protocol: InfusionProtocol):
    """Infusion rate at time(s) ``t`` (minutes)."""
    t = np.asarray(t, dtype=float)
    if protocol.kind == CONSTANT:
        return np.full(t.shape, protocol.G_max) if t.ndim else float(protocol.G_max)
    w = 2 * np.pi / protocol.T_in
    s = t - protocol.sigma
    on = sigmoid(np.sin(w * s), protocol.k)
    off = sigmoid(np.sin(w * (s - protocol.t_in) - np.pi), protocol.k)
    out = protocol.G_max * on * off
    return out if t.ndim else float(out)


@numba.njit(cache=True)
def _h(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@numba.njit(cache=True)
def rate_kernel(t, kind, g_max, T_in, t_in, sigma, k):
    """Scalar compiled twin of :func:`infusion_rate` (protocol unpacked)."""
    if kind == 0.0:
        return g_max
    w = 2.0 * math.pi / T_in
    s = t - sigma
    return g_max * _h(k * math.sin(w * s)) * _h(k * math.sin(w * (s - t_in) - math.pi))
