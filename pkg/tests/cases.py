"""Shared runs (cached per session) and high-precision oracles for the tests."""

from functools import lru_cache

import mpmath

from ultradian.analysis import N_STROBE, classify, required_span
from ultradian.forcing import InfusionProtocol
from ultradian.model import ModelParams
from ultradian.simulation import DEFAULT_HISTORY, simulate

P = ModelParams()              # delays (5, 20)
ALT_HISTORY = (120.0, 10.0)


@lru_cache(maxsize=None)
def run(protocol=None, history=DEFAULT_HISTORY, n_strobe=N_STROBE, params=P):
    prot = protocol if protocol is not None else InfusionProtocol.fasting()
    tr = simulate(params, prot, span=required_span(prot, params.delays, n_strobe), history=history)
    return tr, classify(tr, prot, params.delays, n_strobe=n_strobe)


@lru_cache(maxsize=None)
def fasting_period() -> float:
    return run()[1].period


def fig1c():
    return InfusionProtocol.constant(1.35)


def fig1d(sigma=0.0):
    return InfusionProtocol.on_off(1.35, 60.0, 30.0, sigma)


def fig1e(sigma=0.0):
    return InfusionProtocol.on_off(24.3, 180.0, 5.0, sigma)


def one_to_one(sigma=0.0):
    T0 = fasting_period()
    return InfusionProtocol.on_off(1.0, T0, T0 / 2, sigma)


def harmonic(q, G_max=0.3, sigma=0.0):
    T = q * fasting_period()
    return InfusionProtocol.on_off(G_max, T, T / 2, sigma)


def _hill_mp(x, h, K):
    return 1 / (1 + (mpmath.mpf(K) / x) ** mpmath.mpf(h))


# f1..f5 written out for mpmath evaluation (mass units, as in the model module)
MP_PATHWAYS = (
    lambda x: P.R_m * _hill_mp(x, P.h_1, P.V_g * P.k_1),
    lambda x: P.U_b * _hill_mp(x, P.h_2, P.V_g * P.k_2),
    lambda x: x / (P.C_3 * P.V_g),
    lambda x: P.U_0 + (P.U_m - P.U_0) * _hill_mp(x, P.h_4, P.k_4 / (1 / P.V_i + 1 / (P.E * P.t_i))),
    lambda x: P.R_g * _hill_mp(x, P.h_5, P.V_p * P.k_5),
)
