"""Run the glucose-insulin model under an infusion protocol."""

from __future__ import annotations

import numpy as np

from .dde import IntegratorConfig, Trajectory, integrate
from .forcing import InfusionProtocol
from .model import ModelParams, rhs_kernel

__all__ = ["DEFAULT_HISTORY", "simulate", "kernel_args"]

#: constant initial history (G mg/dl, I uU/ml)
DEFAULT_HISTORY = (100.0, 20.0)


def kernel_args(params: ModelParams, protocol: InfusionProtocol, I_in: float = 0.0):
    return np.concatenate([params.as_args(), protocol.as_args(), [float(I_in)]])


def simulate(params: ModelParams = ModelParams(),
             protocol: InfusionProtocol | None = None,
             span: float = 5000.0,
             dt: float = 0.05,
             history=DEFAULT_HISTORY,
             I_in: float = 0.0) -> Trajectory:
    """Integrate the model over ``[0, span]`` minutes.

    ``history`` is a constant ``(G, I)`` pair or a callable returning one
    for ``t`` in ``[-max(tau_I, tau_G), 0]``.
    """
    if protocol is None:
        protocol = InfusionProtocol.fasting()
    if I_in < 0:
        raise ValueError("I_in must be >= 0")
    cfg = IntegratorConfig(dt=dt, span=span)
    return integrate(rhs_kernel, params.delays, history, cfg,
                     kernel_args(params, protocol, I_in))
