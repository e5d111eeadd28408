"""Post-processing of simulated trajectories.

Transient removal, peak extraction and classification of the long-term
response into steady, periodic (unforced), locked or quasi-periodic.

Locking labels: a locked response repeats after ``p`` forcing periods
(``p`` stroboscopic clusters) and shows ``q`` glucose peaks per repeat, so
``p * T_in ~ q * T_osc``.  The principal resonances at ``T_in ~ q * T0`` are
``p = 1``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import peak_prominences

from .dde import Trajectory, sample
from .forcing import InfusionProtocol

__all__ = [
    "AnalysisWindow",
    "ResponseSummary",
    "STEADY", "LOCKED", "QUASI_PERIODIC", "PERIODIC", "BOUNDARY",
    "FASTING_PERIOD_ESTIMATE",
    "post_transient",
    "transient_length",
    "required_span",
    "peaks",
    "strobe",
    "cluster_1d",
    "classify",
    "shift_residual",
    "amplitude_gain",
    "CSV_COLUMNS",
]

STEADY = "steady"
LOCKED = "locked"
QUASI_PERIODIC = "quasi-periodic"
PERIODIC = "periodic"
BOUNDARY = "boundary"

#: stands in for T_in when sizing the transient of an unforced run (min)
FASTING_PERIOD_ESTIMATE = 132.0

EPS = 1.0      # cluster gap, mg/dl
ETA = 0.5      # steady amplitude threshold, mg/dl
N_STROBE = 64


def _base_period(protocol: InfusionProtocol | None) -> float:
    if protocol is not None and protocol.periodic and protocol.G_max > 0:
        return protocol.T_in
    return FASTING_PERIOD_ESTIMATE


def transient_length(protocol: InfusionProtocol | None, delays) -> float:
    """``100 (tau_I + tau_G + T)`` with ``T = T_in``, or the fasting estimate."""
    return 100.0 * (sum(delays) + _base_period(protocol))


def required_span(protocol: InfusionProtocol | None, delays, n_strobe: int = N_STROBE) -> float:
    """Run length that leaves ``n_strobe`` forcing periods (plus one) after the transient."""
    return transient_length(protocol, delays) + (n_strobe + 1) * _base_period(protocol)


@dataclass(frozen=True)
class AnalysisWindow:
    """Nodes of a trajectory on ``[t_cut, t_end]``."""

    trajectory: Trajectory = field(repr=False)
    t_cut: float
    t_end: float
    i0: int

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.dt * np.arange(self.i0, self.trajectory.values.shape[0])

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values[self.i0:]

    @property
    def G(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def I(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def length(self) -> float:
        return self.t_end - self.t_cut


def post_transient(trajectory: Trajectory, protocol: InfusionProtocol | None, delays,
                   min_window: float | None = None, cut: float | None = None) -> AnalysisWindow:
    """Drop the transient and return the rest of the run.

    By default the remaining window must be at least as long as the cut
    (span >= 2x transient).  ``min_window`` lowers or raises that demand.
    """
    if cut is None:
        cut = transient_length(protocol, delays)
    need = cut if min_window is None else min_window
    if trajectory.span < cut + need - 1e-9:
        raise ValueError(
            f"span {trajectory.span:g} min too short: transient {cut:g} + window {need:g}")
    i0 = int(math.ceil(cut / trajectory.dt - 1e-9))
    return AnalysisWindow(trajectory, i0 * trajectory.dt, trajectory.span, i0)


def peaks(y, t=None, dt: float = 1.0, prominence: float | None = None) -> np.ndarray:
    """Local maxima as an ``(n, 2)`` array of ``(time, value)``.

    Three-point test with parabolic refinement; on a flat top the leftmost
    sample is reported unrefined.  ``prominence`` drops minor maxima.
    """
    y = np.asarray(y, dtype=float)
    if t is None:
        t = dt * np.arange(y.size)
    else:
        t = np.asarray(t, dtype=float)
        dt = t[1] - t[0] if t.size > 1 else dt
    n = y.size
    if n < 3:
        return np.empty((0, 2))
    # run-length collapse so plateaus behave like single samples
    change = np.concatenate([[True], y[1:] != y[:-1]])
    starts = np.nonzero(change)[0]
    ends = np.concatenate([starts[1:], [n]]) - 1
    v = y[starts]
    m = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    idx = np.nonzero(m)[0] + 1
    out = np.empty((idx.size, 2))
    for r, j in enumerate(idx):
        i = starts[j]
        if ends[j] == i:
            a, b, c = y[i - 1], y[i], y[i + 1]
            den = a - 2 * b + c
            s = 0.5 * (a - c) / den if den != 0 else 0.0
            out[r] = t[i] + s * dt, b - 0.25 * (a - c) * s
        else:
            out[r] = t[i], y[i]
    if prominence is not None and out.shape[0]:
        pos = starts[idx]
        prom = peak_prominences(y, pos, wlen=None)[0]
        out = out[prom >= prominence]
    return out


def strobe(trajectory: Trajectory, t0: float, period: float, n: int) -> np.ndarray:
    """Glucose at ``t0 + k * period``, ``k = 0..n-1``, sampled at exact times."""
    ts = t0 + period * np.arange(n)
    return sample(trajectory, ts)[:, 0]


def cluster_1d(x, gap: float):
    """Single-linkage clusters of scalar points split at gaps larger than ``gap``.

    Returns a list of ``(min, max)`` per cluster, in increasing order.
    """
    xs = np.sort(np.asarray(x, dtype=float))
    cuts = np.nonzero(np.diff(xs) > gap)[0]
    bounds = np.concatenate([[0], cuts + 1, [xs.size]])
    return [(xs[a], xs[b - 1]) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class ResponseSummary:
    label: str
    p: int | None
    q: int | None
    period: float | None            # min
    G_max: float
    G_min: float
    I_max: float
    I_min: float
    n_clusters: int | None
    dispersion: float | None        # largest within-cluster spread, mg/dl
    strobe_range: float | None      # spread of all stroboscopic samples
    t_cut: float
    t_end: float
    n_strobe: int | None
    flags: str = ""

    @property
    def amplitude(self) -> float:
        return self.G_max - self.G_min

    def as_row(self) -> dict:
        d = asdict(self)
        return {k: ("" if d[k] is None else d[k]) for k in CSV_COLUMNS}

    def report(self) -> str:
        lines = [f"classification : {self.label}"
                 + (f" (p={self.p}, q={self.q})" if self.p else "")]
        if self.period is not None:
            lines.append(f"period         : {self.period:.2f} min ({self.period / 60:.3f} h)")
        lines.append(f"G range        : {self.G_min:.3f} .. {self.G_max:.3f} mg/dl")
        lines.append(f"I range        : {self.I_min:.3f} .. {self.I_max:.3f} uU/ml")
        if self.n_clusters is not None:
            lines.append(f"strobe clusters: {self.n_clusters} (dispersion {self.dispersion:.3g},"
                         f" range {self.strobe_range:.3g}, N={self.n_strobe})")
        lines.append(f"window         : [{self.t_cut:g}, {self.t_end:g}] min")
        if self.flags:
            lines.append(f"flags          : {self.flags}")
        return "\n".join(lines)


CSV_COLUMNS = ("label", "p", "q", "period", "G_max", "G_min", "I_max", "I_min",
               "n_clusters", "dispersion", "strobe_range", "t_cut", "t_end", "n_strobe", "flags")


def _mean_spacing(pk) -> float | None:
    if pk.shape[0] < 2:
        return None
    return float((pk[-1, 0] - pk[0, 0]) / (pk.shape[0] - 1))


def classify(trajectory: Trajectory, protocol: InfusionProtocol | None, delays,
             eps: float = EPS, eta: float = ETA, n_strobe: int = N_STROBE,
             max_p: int = 8, cut: float | None = None,
             trend_tol: float = 0.02) -> ResponseSummary:
    """Classify the long-term response of a run.

    Forced runs are sampled once per forcing period from the end of the
    transient.  Locked needs at most ``max_p`` clusters, each narrower than
    ``eps / 2``; quasi-periodic needs clusters wider than ``2 eps`` and an
    overall spread above ``10 eps``.  Anything in between is ``boundary``.
    Unforced runs (including ``G_max = 0``) are steady or periodic, or
    boundary if the amplitude still drifts by more than ``trend_tol``
    between the first and last quarter of the window.
    """
    T = _base_period(protocol)
    win = post_transient(trajectory, protocol, delays, min_window=n_strobe * T, cut=cut)
    G, I = win.G, win.I
    base = dict(G_max=float(G.max()), G_min=float(G.min()), I_max=float(I.max()),
                I_min=float(I.min()), t_cut=win.t_cut, t_end=win.t_end)
    amp = base["G_max"] - base["G_min"]
    prom = max(eta, 0.1 * amp)
    pk = peaks(G, win.times, prominence=prom)

    if amp < eta:
        return ResponseSummary(STEADY, None, None, None, n_clusters=None, dispersion=None,
                               strobe_range=None, n_strobe=None, **base)
    if protocol is None or not protocol.periodic or protocol.G_max == 0:
        # unforced: a sustained oscillation must neither decay nor grow
        # across the window (slow convergence near the Hopf curve)
        q4 = max(1, G.size // 4)
        a_first = np.ptp(G[:q4])
        a_last = np.ptp(G[-q4:])
        ratio = a_last / a_first if a_first > 0 else math.inf
        if abs(ratio - 1.0) > trend_tol:
            return ResponseSummary(BOUNDARY, None, None, _mean_spacing(pk), n_clusters=None,
                                   dispersion=None, strobe_range=None, n_strobe=None,
                                   flags=f"amplitude-trend {ratio:.4f}", **base)
        return ResponseSummary(PERIODIC, None, None, _mean_spacing(pk), n_clusters=None,
                               dispersion=None, strobe_range=None, n_strobe=None, **base)

    T_in = protocol.T_in
    n = int(math.floor(win.length / T_in + 1e-9)) + 1
    n = max(n, n_strobe)
    xs = strobe(trajectory, win.t_cut, T_in, n)
    groups = cluster_1d(xs, eps)
    disp = max(b - a for a, b in groups)
    spread = float(xs.max() - xs.min())
    nc = len(groups)
    flags = []

    if nc <= max_p and disp < eps / 2:
        p = nc
        # q: prominent glucose peaks per response period of p * T_in
        n_rep = int(math.floor(win.length / (p * T_in) + 1e-9))
        t_hi = win.t_cut + n_rep * p * T_in
        cnt = int(np.count_nonzero(pk[:, 0] < t_hi)) if pk.shape[0] else 0
        qf = cnt / n_rep if n_rep else float("nan")
        q = int(round(qf)) if math.isfinite(qf) else None
        if q is None or abs(qf - q) > 0.1 or q == 0:
            flags.append(f"peak-count {qf:.3f}")
            q = None
        return ResponseSummary(LOCKED, p, q, p * T_in, n_clusters=nc, dispersion=disp,
                               strobe_range=spread, n_strobe=n, flags=";".join(flags), **base)

    if disp > 2 * eps and spread > 10 * eps:
        return ResponseSummary(QUASI_PERIODIC, None, None, _mean_spacing(pk), n_clusters=nc,
                               dispersion=disp, strobe_range=spread, n_strobe=n, **base)

    flags.append(f"dispersion {disp:.3g}" if disp >= eps / 2 else f"clusters {nc}")
    return ResponseSummary(BOUNDARY, None, None, _mean_spacing(pk), n_clusters=nc,
                           dispersion=disp, strobe_range=spread, n_strobe=n,
                           flags=";".join(flags), **base)


def shift_residual(trajectory: Trajectory, t_cut: float, shift: float, dt: float | None = None) -> float:
    """``max |G(t + shift) - G(t)|`` over ``t`` in ``[t_cut, span - shift]``."""
    dt = trajectory.dt if dt is None else dt
    t = np.arange(t_cut, trajectory.span - shift, dt)
    if t.size == 0:
        raise ValueError("window shorter than the shift")
    return float(np.max(np.abs(sample(trajectory, t + shift)[:, 0] - sample(trajectory, t)[:, 0])))


def amplitude_gain(summary: ResponseSummary, baseline: ResponseSummary,
                   measure: str = "peak_to_peak") -> float:
    """Glucose amplitude relative to a fasting baseline.

    ``peak_to_peak`` compares ``G_max - G_min``; ``maximum`` compares ``G_max``.
    """
    if baseline.label == STEADY:
        raise ValueError("baseline is steady: amplitude gain undefined")
    if measure == "peak_to_peak":
        return summary.amplitude / baseline.amplitude
    if measure == "maximum":
        return summary.G_max / baseline.G_max
    raise ValueError(f"unknown measure {measure!r}")


def summaries_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    wr.writeheader()
    for s in rows:
        wr.writerow(s.as_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
