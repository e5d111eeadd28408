"""Two-delay glucose-insulin feedback model.

State variables are plasma glucose ``G`` (mg/dl) and plasma insulin ``I``
(uU/ml).  The Hill pathways are written, as in the original compartment
model, on the glucose *content* of the distribution volume,
``G_mass = vol * G`` with ``vol = 10 * V_g`` dl, so that

    dG/dt = G_in - [f2(G_mass) + f3(G_mass) f4(I) - f5(I(t - tau_G))] / vol
    dI/dt = I_in + f1(G_mass(t - tau_I)) - d I

with ``G_in`` in mg dl^-1 min^-1.  The helpers ``f1`` ... ``f5`` take the
glucose mass (mg) and insulin (uU/ml) exactly as printed in the formulas.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .forcing import rate_kernel

__all__ = [
    "ModelParams",
    "Equilibrium",
    "NoEquilibriumError",
    "f1", "f2", "f3", "f4", "f5",
    "f_derivatives",
    "rhs",
    "equilibrium",
    "load_params",
    "PARAM_KEYS",
]


@dataclass(frozen=True)
class ModelParams:
    R_m: float = 210.0      # mU/min, max insulin secretion
    V_i: float = 11.0       # l
    V_g: float = 10.0       # l, glucose distribution volume
    E: float = 0.2          # l/min
    U_b: float = 72.0       # mg/min
    t_i: float = 100.0      # min
    C_3: float = 1000.0     # mg/l
    R_g: float = 180.0      # mg/min, max hepatic production
    U_0: float = 40.0       # mg/min
    V_p: float = 3.0        # l
    U_m: float = 940.0      # mg/min
    h_1: float = 2.0
    k_1: float = 6000.0
    h_2: float = 1.8
    k_2: float = 103.5
    h_4: float = 1.5
    k_4: float = 80.0
    h_5: float = -8.54
    k_5: float = 26.7
    d: float = 0.06         # 1/min
    tau_I: float = 5.0      # min
    tau_G: float = 20.0     # min

    def __post_init__(self):
        for name in ("V_i", "V_g", "E", "t_i", "C_3", "V_p", "k_1", "k_2",
                     "k_4", "k_5", "d", "tau_I", "tau_G"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if not self.U_m > self.U_0 >= 0:
            raise ValueError("need U_m > U_0 >= 0")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @property
    def delays(self) -> tuple[float, float]:
        return (self.tau_I, self.tau_G)

    @property
    def volume_dl(self) -> float:
        """Glucose distribution volume in dl (converts mg/dl to mg)."""
        return 10.0 * self.V_g

    @property
    def K_4(self) -> float:
        """Half-saturation insulin level of the insulin-dependent uptake."""
        return self.k_4 / (1.0 / self.V_i + 1.0 / (self.E * self.t_i))

    def as_args(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in _CONST_KEYS], dtype=float)


PARAM_KEYS = tuple(f.name for f in dataclasses.fields(ModelParams))
_CONST_KEYS = PARAM_KEYS[:-2]  # delays are handled by the integrator


def load_params(path, base: ModelParams | None = None) -> ModelParams:
    """Read a flat ``key = value`` override file; unknown keys are an error.

    Keys are the attribute names of :class:`ModelParams` (``R_m``, ``h_5``,
    ``tau_I`` ...).  Lines starting with ``#`` are comments.
    """
    text = Path(path).read_text()
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string("[model]\n" + text)
    return params_from_mapping(dict(cp["model"]), base)


def params_from_mapping(mapping, base: ModelParams | None = None) -> ModelParams:
    base = base or ModelParams()
    unknown = sorted(set(mapping) - set(PARAM_KEYS))
    if unknown:
        raise KeyError(f"unknown model parameter(s): {', '.join(unknown)}")
    return base.replace(**{k: float(v) for k, v in mapping.items()})


# ---------------------------------------------------------------------------
# Hill pathways
# ---------------------------------------------------------------------------

def _hill(x, h, K):
    """``x^h / (x^h + K^h)``, with the continuous limit at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        r = np.exp(h * (np.log(K) - np.log(np.maximum(x, 1e-300))))
        out = 1.0 / (1.0 + r)
    out = np.where(x < 1e-30, 0.0 if h > 0 else 1.0, out)
    return out if out.ndim else float(out)


def _dhill(x, h, K):
    # H (1 - H) written as r / (1 + r)^2 with r = (K/x)^h: no cancellation
    # when H is close to 1
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        r = np.exp(h * (np.log(K) - np.log(x)))
        out = np.where(np.isinf(r), 0.0, h * (r / (1.0 + r)) / (1.0 + r) / x)
    return out if out.ndim else float(out)


def _nonneg(x, what):
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"{what} must be non-negative")


def f1(G, p: ModelParams = ModelParams()):
    """Insulin secretion driven by glucose mass ``G`` (mg)."""
    _nonneg(G, "G")
    return p.R_m * _hill(G, p.h_1, p.V_g * p.k_1)


def f2(G, p: ModelParams = ModelParams()):
    """Insulin-independent glucose utilisation."""
    _nonneg(G, "G")
    return p.U_b * _hill(G, p.h_2, p.V_g * p.k_2)


def f3(G, p: ModelParams = ModelParams()):
    _nonneg(G, "G")
    return np.asarray(G, dtype=float) / (p.C_3 * p.V_g) * 1.0


def f4(I, p: ModelParams = ModelParams()):
    """Insulin-dependent utilisation factor, in ``[U_0, U_m)``."""
    _nonneg(I, "I")
    return p.U_0 + (p.U_m - p.U_0) * _hill(I, p.h_4, p.K_4)


def f5(I, p: ModelParams = ModelParams()):
    """Hepatic glucose production, decreasing in ``I``; ``f5(0) = R_g``."""
    _nonneg(I, "I")
    return p.R_g * _hill(I, p.h_5, p.V_p * p.k_5)


def f_derivatives(G, I, p: ModelParams = ModelParams()):
    """Analytic derivatives ``(f1'(G), f2'(G), f3'(G), f4'(I), f5'(I))``."""
    G = np.asarray(G, dtype=float)
    I = np.asarray(I, dtype=float)
    if np.any(G <= 0) or np.any(I <= 0):
        raise ValueError("derivatives need positive arguments")
    return (
        p.R_m * _dhill(G, p.h_1, p.V_g * p.k_1),
        p.U_b * _dhill(G, p.h_2, p.V_g * p.k_2),
        np.full(G.shape, 1.0 / (p.C_3 * p.V_g)) if G.ndim else 1.0 / (p.C_3 * p.V_g),
        (p.U_m - p.U_0) * _dhill(I, p.h_4, p.K_4),
        p.R_g * _dhill(I, p.h_5, p.V_p * p.k_5),
    )


def rhs(G, I, G_lag, I_lag, G_in=0.0, I_in=0.0, p: ModelParams = ModelParams()):
    """Vector field ``(dG/dt, dI/dt)``.

    ``G_lag`` is ``G(t - tau_I)`` and ``I_lag`` is ``I(t - tau_G)``; glucose
    in mg/dl, infusion rates per minute.
    """
    for v, name in ((G, "G"), (I, "I"), (G_lag, "G_lag"), (I_lag, "I_lag"),
                    (G_in, "G_in"), (I_in, "I_in")):
        _nonneg(v, name)
    vol = p.volume_dl
    Gm = vol * np.asarray(G, dtype=float)
    dG = G_in - (f2(Gm, p) + f3(Gm, p) * f4(I, p) - f5(I_lag, p)) / vol
    dI = I_in + f1(vol * np.asarray(G_lag, dtype=float), p) - p.d * I
    return dG, dI


# ---------------------------------------------------------------------------
# compiled vector field for the integrator
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _hill_k(x, h, K):
    if x < 1e-30:
        return 0.0 if h > 0.0 else 1.0
    r = (K / x) ** h
    return 1.0 / (1.0 + r)


@numba.njit(cache=True)
def rhs_kernel(t, y, lag, a, out):
    """Model right-hand side in integrator form.

    ``a`` holds the 20 model constants in :data:`PARAM_KEYS` order, then the
    protocol (kind, G_max, T_in, t_in, sigma, k) and the insulin rate I_in.
    ``lag[0]`` is the state at ``t - tau_I``, ``lag[1]`` at ``t - tau_G``.
    """
    R_m = a[0]; V_i = a[1]; V_g = a[2]; E = a[3]; U_b = a[4]; t_i = a[5]
    C_3 = a[6]; R_g = a[7]; U_0 = a[8]; V_p = a[9]; U_m = a[10]
    h_1 = a[11]; k_1 = a[12]; h_2 = a[13]; k_2 = a[14]; h_4 = a[15]
    k_4 = a[16]; h_5 = a[17]; k_5 = a[18]; d = a[19]
    vol = 10.0 * V_g
    g_in = rate_kernel(t, a[20], a[21], a[22], a[23], a[24], a[25])
    i_in = a[26]

    Gm = vol * y[0]
    I = y[1]
    K4 = k_4 / (1.0 / V_i + 1.0 / (E * t_i))
    uptake = (U_b * _hill_k(Gm, h_2, V_g * k_2)
              + Gm / (C_3 * V_g) * (U_0 + (U_m - U_0) * _hill_k(I, h_4, K4)))
    hepatic = R_g * _hill_k(lag[1, 1], h_5, V_p * k_5)
    out[0] = g_in - (uptake - hepatic) / vol
    out[1] = i_in + R_m * _hill_k(vol * lag[0, 0], h_1, V_g * k_1) - d * I


# ---------------------------------------------------------------------------
# equilibrium
# ---------------------------------------------------------------------------

class NoEquilibriumError(ValueError):
    """No sign change of the reduced balance equation on the search bracket."""


@dataclass(frozen=True)
class Equilibrium:
    G_star: float          # mg/dl
    I_star: float          # uU/ml
    G_in: float            # mg dl^-1 min^-1
    residual_G: float
    residual_I: float

    @property
    def state(self) -> np.ndarray:
        return np.array([self.G_star, self.I_star])


def _balance(g, G_in, p):
    """Reduced glucose balance ``F(g)`` with ``I = f1/d``, and ``F'(g)``."""
    vol = p.volume_dl
    Gm = vol * g
    I = f1(Gm, p) / p.d
    F = G_in - (f2(Gm, p) + f3(Gm, p) * f4(I, p) - f5(I, p)) / vol
    d1, d2, d3, d4, d5 = f_derivatives(Gm, max(I, 1e-300), p)
    dI = d1 * vol / p.d
    dF = -(d2 * vol + d3 * vol * f4(I, p) + f3(Gm, p) * d4 * dI - d5 * dI) / vol
    return F, dF


def equilibrium(p: ModelParams = ModelParams(), G_in: float = 0.0,
                bracket=(1e-6, 1e6), tol=1e-13) -> Equilibrium:
    """Steady state under constant glucose infusion ``G_in`` (mg dl^-1 min^-1).

    Safeguarded Newton on the reduced scalar balance: Newton steps are taken
    while they stay inside the current bracket, otherwise bisection.
    """
    if not G_in >= 0:
        raise ValueError("G_in must be >= 0")
    lo, hi = bracket
    f_lo, _ = _balance(lo, G_in, p)
    f_hi, _ = _balance(hi, G_in, p)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoEquilibriumError(
            f"no sign change of the glucose balance on [{lo}, {hi}] mg/dl")
    if f_lo > 0:            # keep F(lo) < 0 < F(hi) orientation
        lo, hi = hi, lo
    x = math.sqrt(bracket[0] * bracket[1])
    for _ in range(400):
        F, dF = _balance(x, G_in, p)
        if F == 0:
            break
        if F < 0:
            lo = x
        else:
            hi = x
        step = F / dF if dF != 0 else np.inf
        xn = x - step
        if not (min(lo, hi) < xn < max(lo, hi)):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * max(1.0, abs(x)):
            x = xn
            break
        x = xn
    I = f1(p.volume_dl * x, p) / p.d
    rG, _ = _balance(x, G_in, p)
    rI = f1(p.volume_dl * x, p) - p.d * I
    eq = Equilibrium(float(x), float(I), float(G_in), float(abs(rG)), float(abs(rI)))
    if not (eq.residual_G < 1e-10 and eq.residual_I < 1e-10):
        raise ArithmeticError(f"equilibrium not certified: {eq}")
    return eq
