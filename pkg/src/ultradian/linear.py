"""Linear stability of the equilibrium and the Hopf curve in the delay plane.

Linearising the model at ``(G*, I*)`` gives the characteristic function

    chi(lam) = lam^2 + a1 lam + a0 + b1 exp(-lam tau1) + b2 exp(-lam tau2)

with ``tau1 = tau_I`` and ``tau2 = tau_I + tau_G``.  Purely imaginary roots
``lam = i w`` trace a curve ``w -> (tau_I(w), tau_G(w))`` that separates
decaying from growing oscillations.  Writing ``P(w) = a0 - w^2 + i a1 w`` with
modulus ``A`` and ``theta = atan2(a1 w, w^2 - a0)``, the root condition is a
triangle with sides ``A``, ``b1``, ``b2``, which gives

    w tau1 = theta - arccos((A^2 + b1^2 - b2^2) / (2 b1 A)) + 2 pi k
    w tau2 = theta + arccos((A^2 + b2^2 - b1^2) / (2 b2 A)) + 2 pi l

so the curve exists for ``|b2 - b1| <= A(w) <= b1 + b2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import Equilibrium, ModelParams, equilibrium, f1, f3, f4, f_derivatives

__all__ = [
    "CharCoeffs",
    "HopfCurve",
    "OmegaBounds",
    "ExistenceError",
    "char_coeffs",
    "chi",
    "hopf_curve",
    "hopf_taus",
    "omega_bounds",
    "hopf_curve_approx",
    "hopf_tau_G_exact",
    "hopf_family",
    "diagonal_intercept",
    "write_curve_csv",
]

ARCCOS_TOL = 1e-12


class ExistenceError(ValueError):
    """The Hopf curve does not exist for these coefficients."""


@dataclass(frozen=True)
class CharCoeffs:
    alpha0: float
    alpha1: float
    beta1: float
    beta2: float
    equilibrium: Equilibrium | None = field(default=None, compare=False)

    def replace(self, **kw) -> "CharCoeffs":
        d = dict(alpha0=self.alpha0, alpha1=self.alpha1, beta1=self.beta1,
                 beta2=self.beta2, equilibrium=self.equilibrium)
        d.update(kw)
        return CharCoeffs(**d)

    @property
    def existence(self) -> bool:
        """Both inequalities that guarantee a Hopf curve at small ``b1``."""
        return self.alpha1 > self.alpha0 and self.beta2 > self.alpha0


def char_coeffs(params: ModelParams = ModelParams(), eq: Equilibrium | None = None) -> CharCoeffs:
    """Characteristic coefficients at a certified equilibrium.

    The pathway derivatives are taken with respect to glucose mass; the
    concentration scaling cancels in every coefficient.
    """
    if eq is None:
        eq = equilibrium(params)
    Gm = params.volume_dl * eq.G_star
    I = eq.I_star
    d1, d2, d3, d4, d5 = f_derivatives(Gm, I, params)
    d = params.d
    a = d2 + d3 * f4(I, params)
    alpha1 = float(a + d)
    alpha0 = float(a * d)
    beta1 = float(d1 * f3(Gm, params) * d4)
    beta2 = float(-d1 * d5)
    if abs(alpha0 - d * (alpha1 - d)) > 1e-12:
        raise AssertionError("alpha0 = d (alpha1 - d) violated")
    return CharCoeffs(alpha0, alpha1, beta1, beta2, eq)


def chi(lam, c: CharCoeffs, tau_I, tau_G):
    """Characteristic function; vectorised over ``lam`` and the delays."""
    lam = np.asarray(lam, dtype=complex)
    tau1 = np.asarray(tau_I, dtype=float)
    tau2 = tau1 + np.asarray(tau_G, dtype=float)
    return (lam * lam + c.alpha1 * lam + c.alpha0
            + c.beta1 * np.exp(-lam * tau1) + c.beta2 * np.exp(-lam * tau2))


# ---------------------------------------------------------------------------
# parametric curve
# ---------------------------------------------------------------------------

def _modulus(c: CharCoeffs, w):
    return np.hypot(c.alpha0 - w * w, c.alpha1 * w)


def _cosines(c: CharCoeffs, w):
    A = _modulus(c, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = (A * A + c.beta1 ** 2 - c.beta2 ** 2) / (2 * c.beta1 * A)
        c2 = (A * A + c.beta2 ** 2 - c.beta1 ** 2) / (2 * c.beta2 * A)
    return c1, c2


def _clamp(x):
    """Clamp to [-1, 1] inside the tolerance band; NaN outside it."""
    x = np.asarray(x, dtype=float)
    bad = (x < -1 - ARCCOS_TOL) | (x > 1 + ARCCOS_TOL) | ~np.isfinite(x)
    return np.where(bad, np.nan, np.clip(x, -1.0, 1.0))


def hopf_taus(c: CharCoeffs, w, branch=(0, 0)):
    """``(tau_I, tau_G)`` on the Hopf curve at frequency ``w``.

    Returns NaN where the curve does not exist.
    """
    w = np.asarray(w, dtype=float)
    k, l = branch
    theta = np.arctan2(c.alpha1 * w, w * w - c.alpha0)
    c1, c2 = _cosines(c, w)
    tau1 = (theta - np.arccos(_clamp(c1)) + 2 * np.pi * k) / w
    tau2 = (theta + np.arccos(_clamp(c2)) + 2 * np.pi * l) / w
    return tau1, tau2 - tau1


def _domain(c: CharCoeffs):
    """Frequency interval on which ``|b2 - b1| <= A(w) <= b1 + b2``.

    ``A^2`` is a quadratic in ``s = w^2``: ``s^2 + (a1^2 - 2 a0) s + a0^2``.
    """
    p = c.alpha1 ** 2 - 2 * c.alpha0

    def s_at(A):
        disc = p * p / 4 - c.alpha0 ** 2 + A * A
        if disc < 0:
            return None
        return -p / 2 + math.sqrt(disc)

    s_hi = s_at(c.beta1 + c.beta2)
    if s_hi is None or s_hi <= 0:
        raise ExistenceError("A(w) never reaches b1 + b2: no Hopf curve")
    s_lo = s_at(abs(c.beta2 - c.beta1))
    lo = math.sqrt(max(s_lo, 0.0)) if s_lo is not None else 0.0
    if p < 0:
        raise ExistenceError("A(w) is not monotone (a1^2 < 2 a0); unsupported")
    return lo, math.sqrt(s_hi)


@dataclass(frozen=True)
class HopfCurve:
    omega: np.ndarray
    tau_I: np.ndarray
    tau_G: np.ndarray
    residual: np.ndarray
    G_in: float
    branch: tuple = (0, 0)

    def __len__(self):
        return self.omega.size

    @property
    def period(self) -> np.ndarray:
        """Oscillation period at onset, minutes."""
        return 2 * np.pi / self.omega

    def side(self, tau_I: float, tau_G: float) -> int:
        """+1 if ``(tau_I, tau_G)`` lies beyond the curve (away from the origin)."""
        # the curve is a graph over the ray angle from the origin
        ang = np.arctan2(self.tau_G, self.tau_I)
        order = np.argsort(ang)
        a0 = math.atan2(tau_G, tau_I)
        if not ang.min() <= a0 <= ang.max():
            raise ValueError("point outside the angular range of the curve")
        r = np.interp(a0, ang[order], np.hypot(self.tau_I, self.tau_G)[order])
        return 1 if math.hypot(tau_I, tau_G) > r else -1


def hopf_curve(c: CharCoeffs, omega_grid=None, branch=(0, 0), n: int = 2000,
               tau_max: float = 500.0, refine: int = 6, G_in: float | None = None) -> HopfCurve:
    """Sample the Hopf curve, certified by direct substitution into ``chi``.

    With ``omega_grid=None`` the admissible frequency interval is sampled
    uniformly with ``n`` points and then refined where the curve moves fast.
    Samples with a negative delay, or a delay above ``tau_max``, are dropped;
    sign changes are located by root-finding so the curve ends exactly on the
    axes.
    """
    if omega_grid is None:
        lo, hi = _domain(c)
        lo = max(lo, hi * 1e-6)
        # locate the part of the domain with admissible delays, then sample it
        w = np.linspace(lo, hi, n)
        tI, tG = hopf_taus(c, w, branch)
        w, _, _ = _trim(c, w, tI, tG, branch, tau_max)
        if w.size >= 2:
            w = _refine(c, np.linspace(w[0], w[-1], n), branch, refine)
    else:
        w = np.unique(np.asarray(omega_grid, dtype=float))
        if np.any(w <= 0):
            raise ValueError("frequencies must be positive")
    tI, tG = hopf_taus(c, w, branch)
    ok = np.isfinite(tI) & np.isfinite(tG)
    w, tI, tG = w[ok], tI[ok], tG[ok]
    w, tI, tG = _trim(c, w, tI, tG, branch, tau_max)
    tI = np.where(np.abs(tI) < 1e-10, 0.0, tI)
    tG = np.where(np.abs(tG) < 1e-10, 0.0, tG)
    if w.size == 0:
        raise ExistenceError("no admissible sample with non-negative delays")
    res = np.abs(chi(1j * w, c, tI, tG))
    g_in = G_in if G_in is not None else (c.equilibrium.G_in if c.equilibrium else float("nan"))
    return HopfCurve(w, tI, tG, res, float(g_in), tuple(branch))


def _refine(c, w, branch, passes):
    for _ in range(passes):
        tI, tG = hopf_taus(c, w, branch)
        good = np.isfinite(tI) & np.isfinite(tG)
        step = np.hypot(np.diff(tI), np.diff(tG))
        span = np.nanmax(np.abs(np.concatenate([tI[good], tG[good]]))) if good.any() else 1.0
        span = min(span, 100.0)
        big = np.isfinite(step) & (step > span / 500)
        if not big.any():
            break
        w = np.sort(np.concatenate([w, 0.5 * (w[:-1][big] + w[1:][big])]))
    return w


def _trim(c, w, tI, tG, branch, tau_max):
    keep = (tI >= 0) & (tG >= 0) & (tI <= tau_max) & (tG <= tau_max)
    extra = []
    for j in range(w.size - 1):
        if keep[j] == keep[j + 1]:
            continue
        # locate where the failing constraint switches; the crossing
        # coordinate is set exactly on the boundary it crosses
        for which, target in ((0, 0.0), (1, 0.0), (0, tau_max), (1, tau_max)):
            def fn(x, which=which, target=target):
                return float(hopf_taus(c, x, branch)[which]) - target
            if np.sign(fn(w[j])) != np.sign(fn(w[j + 1])):
                x = brentq(fn, w[j], w[j + 1], xtol=1e-16, rtol=1e-15)
                ab = [float(v) for v in hopf_taus(c, x, branch)]
                ab[which] = target
                if min(ab) >= 0 and max(ab) <= tau_max:
                    extra.append((x, ab[0], ab[1]))
                break
    w = np.concatenate([w[keep], [e[0] for e in extra]])
    tI = np.concatenate([tI[keep], [e[1] for e in extra]])
    tG = np.concatenate([tG[keep], [e[2] for e in extra]])
    order = np.argsort(w)
    w, tI, tG = w[order], tI[order], tG[order]
    uniq = np.concatenate([[True], np.diff(w) > 0])
    return w[uniq], tI[uniq], tG[uniq]


# ---------------------------------------------------------------------------
# boundary frequencies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OmegaBounds:
    omega_I: float          # tau_I = 0 on the curve
    omega_G: float          # tau_G = 0 on the curve
    tau_I_at_omega_G: float
    tau_G_at_omega_I: float
    k_star: int
    l_star: int


def _positive_branch(phase, w):
    """Smallest integer ``k`` with ``(phase + 2 pi k) / w >= 0``."""
    k = math.ceil(-phase / (2 * math.pi) - 1e-15)
    return k, (phase + 2 * math.pi * k) / w


def omega_bounds(c: CharCoeffs) -> OmegaBounds:
    """Closed-form frequencies where the curve meets the delay axes."""
    a0, a1, b1, b2 = c.alpha0, c.alpha1, c.beta1, c.beta2
    half = a1 * a1 / 2
    rad_G = (a0 - half) ** 2 + (b1 + b2) ** 2 - a0 ** 2
    if rad_G < 0:
        raise ExistenceError("negative radicand for omega_G: b1 + b2 too small against a0")
    s_G = a0 - half + math.sqrt(rad_G)
    if s_G <= 0:
        raise ExistenceError("omega_G^2 <= 0: existence condition b1 + b2 > a0 violated")
    e = a0 + b1
    rad_I = (e - half) ** 2 + b2 ** 2 - e ** 2
    if rad_I < 0:
        raise ExistenceError("negative radicand for omega_I: b2 too small against a0 + b1")
    s_I = e - half + math.sqrt(rad_I)
    if s_I <= 0:
        raise ExistenceError("omega_I^2 <= 0: existence condition b2 > a0 + b1 violated")
    w_G, w_I = math.sqrt(s_G), math.sqrt(s_I)
    k, tau_I = _positive_branch(math.atan2(a1 * w_G, w_G ** 2 - a0), w_G)
    l, tau_G = _positive_branch(math.atan2(a1 * w_I, w_I ** 2 - e), w_I)
    return OmegaBounds(w_I, w_G, tau_I, tau_G, k, l)


# ---------------------------------------------------------------------------
# small-b1 approximation
# ---------------------------------------------------------------------------

def _omega0(c: CharCoeffs) -> float:
    half = c.alpha1 ** 2 / 2
    rad = (c.alpha0 - half) ** 2 + c.beta2 ** 2 - c.alpha0 ** 2
    s = c.alpha0 - half + math.sqrt(rad)
    if rad < 0 or s <= 0:
        raise ExistenceError("b2 <= a0: no zero-order Hopf frequency")
    return math.sqrt(s)


def _tau2(c: CharCoeffs, w, strict=True):
    theta = np.arctan2(c.alpha1 * w, w * w - c.alpha0)
    _, c2 = _cosines(c, w)
    c2 = _clamp(c2)
    if strict and np.any(np.isnan(c2)):
        raise ExistenceError("arccos argument outside [-1, 1] at the approximate frequency")
    return (theta + np.arccos(c2)) / w


def hopf_curve_approx(c: CharCoeffs, tau_I, order: str = "printed", strict: bool = True):
    """First-order estimate of ``tau_G`` on the Hopf curve for small ``b1``.

    ``w = w0 + b1 w1(tau_I)`` is inserted into the exact ``tau2`` expression.
    ``order="printed"`` uses ``w1 = w0 tau_I / (a1 - a0 + w0^2)``;
    ``order="consistent"`` uses the first-order term of the expansion of the
    root condition itself, and ``order="zero"`` drops ``w1``.  Where the
    estimated frequency leaves the admissible domain an
    :class:`ExistenceError` is raised, or NaN returned with ``strict=False``.
    """
    tau_I = np.asarray(tau_I, dtype=float)
    if np.any(tau_I < 0):
        raise ValueError("tau_I must be >= 0")
    w0 = _omega0(c)
    if order == "printed":
        w1 = w0 * tau_I / (c.alpha1 - c.alpha0 + w0 ** 2)
    elif order == "consistent":
        u = w0 ** 2 - c.alpha0
        w1 = ((u * np.cos(w0 * tau_I) + c.alpha1 * w0 * np.sin(w0 * tau_I))
              / (w0 * (2 * u + c.alpha1 ** 2)))
    elif order == "zero":
        w1 = np.zeros_like(tau_I)
    else:
        raise ValueError(f"unknown order {order!r}")
    if c.beta1 == 0:
        return _tau2(c, np.full_like(tau_I, w0), strict) - tau_I
    w = w0 + c.beta1 * w1
    return _tau2(c, w, strict) - tau_I


def omega1_bound(c: CharCoeffs, tau_I):
    """Upper bound ``tau_I / (2 sqrt(a1 - a0))`` on the printed ``w1``."""
    return np.asarray(tau_I, dtype=float) / (2 * math.sqrt(c.alpha1 - c.alpha0))


def hopf_tau_G_exact(c: CharCoeffs, tau_I: float, branch=(0, 0)) -> float:
    """``tau_G`` on the exact curve at given ``tau_I``, by root-finding in ``w``."""
    curve = hopf_curve(c, branch=branch)
    g = curve.tau_I - tau_I
    hit = np.nonzero(g == 0)[0]
    if hit.size:
        return float(curve.tau_G[hit[0]])
    idx = np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]
    if idx.size == 0:
        raise ValueError(f"tau_I = {tau_I} not reached by the curve")
    j = idx[0]
    w = brentq(lambda x: float(hopf_taus(c, x, branch)[0]) - tau_I,
               curve.omega[j], curve.omega[j + 1], xtol=1e-16, rtol=1e-15)
    return float(hopf_taus(c, w, branch)[1])


# ---------------------------------------------------------------------------
# families over constant infusion
# ---------------------------------------------------------------------------

def hopf_family(params: ModelParams, G_in_values, **kw) -> list[HopfCurve]:
    out = []
    for g in G_in_values:
        eq = equilibrium(params, float(g))
        out.append(hopf_curve(char_coeffs(params, eq), G_in=float(g), **kw))
    return out


def diagonal_intercept(curve: HopfCurve, ratio: float = 4.0) -> float:
    """Distance from the origin where the curve meets ``tau_G = ratio * tau_I``.

    Takes the crossing closest to the origin; linear interpolation between
    samples.
    """
    g = curve.tau_G - ratio * curve.tau_I
    idx = np.nonzero((g[:-1] == 0) | (np.sign(g[:-1]) != np.sign(g[1:])))[0]
    if idx.size == 0:
        raise ValueError("curve does not cross the diagonal")
    best = math.inf
    for j in idx:
        s = g[j] / (g[j] - g[j + 1]) if g[j] != g[j + 1] else 0.0
        ti = curve.tau_I[j] + s * (curve.tau_I[j + 1] - curve.tau_I[j])
        tg = curve.tau_G[j] + s * (curve.tau_G[j + 1] - curve.tau_G[j])
        best = min(best, math.hypot(ti, tg))
    return best


def write_curve_csv(curves, path, approx: dict | None = None) -> None:
    """One row per sample: omega, tau_I, tau_G, residual, G_in [, tau_G_approx]."""
    if isinstance(curves, HopfCurve):
        curves = [curves]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        head = ["omega", "tau_I", "tau_G", "residual", "G_in"]
        if approx is not None:
            head.append("tau_G_approx")
        wr.writerow(head)
        for cv in curves:
            extra = approx.get(cv.G_in) if approx is not None else None
            for j in range(len(cv)):
                row = [repr(float(cv.omega[j])), repr(float(cv.tau_I[j])),
                       repr(float(cv.tau_G[j])), repr(float(cv.residual[j])), repr(cv.G_in)]
                if approx is not None:
                    row.append("" if extra is None else repr(float(extra[j])))
                wr.writerow(row)
