"""Grid experiments over protocol or delay parameters.

Every cell is an independent simulation followed by :func:`classify`; cells
are evaluated in any order (optionally in worker processes) and gathered in
row-major order, so the output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import __version__
from .analysis import (
    LOCKED, PERIODIC, ResponseSummary, classify, required_span,
)
from .forcing import InfusionProtocol
from .model import ModelParams
from .simulation import DEFAULT_HISTORY, simulate

__all__ = [
    "Axis",
    "GridSpec",
    "Cell",
    "FieldMap",
    "fasting_period",
    "run_grid",
    "resonance_map",
    "duration_map",
    "fasting_field_map",
    "isocurves",
    "locked_regions",
    "tongue_roots",
    "CSV_COLUMNS",
]

RESONANCE = "resonance"
DURATION = "duration"
FASTING = "fasting"


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"axis {self.name}: need count >= 2")
        if not self.hi > self.lo:
            raise ValueError(f"axis {self.name}: need hi > lo")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)


@dataclass(frozen=True)
class GridSpec:
    """Two swept axes plus everything held fixed.

    ``kind`` selects the cell experiment: ``resonance`` sweeps (T_in, G_max)
    with ``t_in = T_in / 2``; ``duration`` sweeps (t_in, G_bar) at fixed
    ``T_in``; ``fasting`` sweeps (tau_I, tau_G) without infusion.
    """

    kind: str
    x: Axis
    y: Axis
    params: ModelParams = ModelParams()
    T_in: float | None = None           # duration maps only
    dt: float = 0.05
    n_strobe: int = 64
    eps: float = 1.0
    eta: float = 0.5
    history: tuple = DEFAULT_HISTORY

    def __post_init__(self):
        if self.kind not in (RESONANCE, DURATION, FASTING):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.kind == DURATION:
            if self.T_in is None or self.T_in <= 0:
                raise ValueError("duration map needs T_in > 0")
            if self.x.hi > self.T_in / 2 or self.x.lo <= 0:
                raise ValueError("duration map needs 0 < t_in <= T_in / 2")
            if self.y.lo < 0:
                raise ValueError("G_bar must be >= 0")
        if self.kind == RESONANCE:
            if self.x.lo <= 0 or self.y.lo < 0:
                raise ValueError("resonance map needs T_in > 0 and G_max >= 0")
        if self.kind == FASTING:
            if min(self.x.lo, self.y.lo) < 4 * self.dt:
                raise ValueError("delays must be >= 4 dt")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["history"] = list(self.history)
        return d

    def digest(self) -> str:
        blob = json.dumps({"spec": self.to_dict(), "version": __version__}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Cell:
    ix: int
    iy: int
    x: float
    y: float
    summary: ResponseSummary | None
    error: str | None = None
    G_max_rate: float | None = None     # infusion amplitude actually used


def fasting_period(params: ModelParams = ModelParams(), dt: float = 0.05,
                   history=DEFAULT_HISTORY) -> float:
    """Period of the unforced oscillation (min), measured by simulation."""
    s = _run_cell((FASTING, params, None, params.tau_I, params.tau_G, dt, 64, 1.0, 0.5, history))
    if s[0] is None or s[0].label != PERIODIC:
        raise ValueError(f"no sustained fasting oscillation at delays {params.delays}")
    return s[0].period


def _run_cell(task):
    kind, params, T_in, x, y, dt, n_strobe, eps, eta, history = task
    try:
        rate = None
        if kind == FASTING:
            params = params.replace(tau_I=float(x), tau_G=float(y))
            prot = InfusionProtocol.fasting()
        elif kind == RESONANCE:
            prot = InfusionProtocol.on_off(float(y), float(x), float(x) / 2)
            rate = prot.G_max
        else:
            prot = InfusionProtocol.from_mean(float(y), T_in, float(x))
            rate = prot.G_max
        span = required_span(prot, params.delays, n_strobe)
        tr = simulate(params, prot, span=span, dt=dt, history=history)
        s = classify(tr, prot, params.delays, eps=eps, eta=eta, n_strobe=n_strobe)
        return s, None, rate
    except Exception as exc:        # recorded per cell; the sweep goes on
        return None, f"{type(exc).__name__}: {exc}", None


@dataclass(frozen=True)
class FieldMap:
    spec: GridSpec
    cells: tuple
    provenance: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.y.count, self.spec.x.count)

    def cell(self, ix: int, iy: int) -> Cell:
        return self.cells[iy * self.spec.x.count + ix]

    def nearest(self, x: float, y: float) -> Cell:
        ix = int(np.argmin(np.abs(self.spec.x.values - x)))
        iy = int(np.argmin(np.abs(self.spec.y.values - y)))
        return self.cell(ix, iy)

    def field(self, name: str) -> np.ndarray:
        """Scalar field of shape ``(ny, nx)``; NaN where absent.

        ``period`` is only reported for periodic (unforced) or locked cells.
        """
        out = np.full(self.shape, np.nan)
        for c in self.cells:
            s = c.summary
            if s is None:
                continue
            if name == "period":
                v = s.period if s.label in (PERIODIC, LOCKED) else None
            else:
                v = getattr(s, name)
            if v is not None:
                out[c.iy, c.ix] = v
        return out

    def labels(self) -> np.ndarray:
        out = np.empty(self.shape, dtype=object)
        for c in self.cells:
            out[c.iy, c.ix] = "failed" if c.summary is None else c.summary.label
        return out

    def pq(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.zeros(self.shape, dtype=int)
        q = np.zeros(self.shape, dtype=int)
        for c in self.cells:
            if c.summary is not None and c.summary.label == LOCKED:
                p[c.iy, c.ix] = c.summary.p or 0
                q[c.iy, c.ix] = c.summary.q or 0
        return p, q

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([self.spec.x.name, self.spec.y.name] + list(CSV_COLUMNS))
        for c in self.cells:
            s = c.summary
            if s is None:
                row = ["failed", "", "", "", "", "", c.error or ""]
            else:
                row = [s.label, _fmt(s.p), _fmt(s.q), _fmt(s.period), _fmt(s.G_max),
                       _fmt(s.G_min), s.flags]
            wr.writerow([_fmt(c.x), _fmt(c.y)] + row + [_fmt(c.G_max_rate)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_svg(self, path, field_name: str = "G_max", cell_px: int = 8) -> str:
        svg = heatmap_svg(self, field_name, cell_px)
        with open(path, "w") as fh:
            fh.write(svg)
        return svg


CSV_COLUMNS = ("classification", "p", "q", "period_min", "g_max", "g_min", "flags", "infusion_max")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_grid(spec: GridSpec, workers: int = 1, T0: float | None = None) -> FieldMap:
    xs, ys = spec.x.values, spec.y.values
    tasks = [(spec.kind, spec.params, spec.T_in, float(x), float(y), spec.dt, spec.n_strobe,
              spec.eps, spec.eta, tuple(spec.history))
             for y in ys for x in xs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_run_cell(t) for t in tasks]
    cells = []
    for k, (s, err, rate) in enumerate(results):
        iy, ix = divmod(k, xs.size)
        cells.append(Cell(ix, iy, float(xs[ix]), float(ys[iy]), s, err, rate))
    prov = {"config_sha256": spec.digest(), "version": __version__}
    if T0 is not None:
        prov["T0"] = T0
    return FieldMap(spec, tuple(cells), prov)


def resonance_map(params: ModelParams = ModelParams(), T_in_range=(30.0, 420.0),
                  G_max_range=(0.0, 2.5), resolution=(64, 64), workers: int = 1,
                  **kw) -> FieldMap:
    """Response over (T_in, G_max) with half-period pulses."""
    spec = GridSpec(RESONANCE, Axis("T_in", *T_in_range, resolution[0]),
                    Axis("G_max", *G_max_range, resolution[1]), params, **kw)
    T0 = fasting_period(params, spec.dt, spec.history)
    return run_grid(spec, workers, T0=T0)


def duration_map(params: ModelParams = ModelParams(), t_in_range=(5.0, 68.0),
                 G_bar_range=(0.0, 1.575), T_in: float = 180.0, resolution=(64, 64),
                 workers: int = 1, **kw) -> FieldMap:
    """Response over (t_in, G_bar) at fixed T_in; ``G_max = G_bar T_in / t_in``."""
    spec = GridSpec(DURATION, Axis("t_in", *t_in_range, resolution[0]),
                    Axis("G_bar", *G_bar_range, resolution[1]), params, T_in=T_in, **kw)
    return run_grid(spec, workers)


def fasting_field_map(params: ModelParams = ModelParams(), tau_I_range=(0.5, 20.0),
                      tau_G_range=(1.5, 60.0), resolution=(40, 40), workers: int = 1,
                      **kw) -> FieldMap:
    """Unforced response over the delay plane."""
    spec = GridSpec(FASTING, Axis("tau_I", *tau_I_range, resolution[0]),
                    Axis("tau_G", *tau_G_range, resolution[1]), params, **kw)
    return run_grid(spec, workers)


# ---------------------------------------------------------------------------
# locked regions
# ---------------------------------------------------------------------------

def locked_regions(fm: FieldMap, p: int = 1):
    """Connected (4-neighbour) regions of cells locked with ``p`` clusters.

    Cells join a region only if they share the same ``q``, so tongues that
    touch at large amplitude stay separate.  Returns ``(label_array, list of
    region dicts)``; each region records its cell indices and ``q``.
    """
    pa, qa = fm.pq()
    mask = pa == p
    lab = np.zeros(mask.shape, dtype=int)
    regions = []
    for q in np.unique(qa[mask]):
        sub, n = ndimage.label(mask & (qa == q))
        for r in range(1, n + 1):
            iy, ix = np.nonzero(sub == r)
            rid = len(regions) + 1
            lab[iy, ix] = rid
            regions.append({"id": rid, "iy": iy, "ix": ix, "q": int(q) if q > 0 else None,
                            "size": iy.size})
    return lab, regions


def tongue_roots(fm: FieldMap, p: int = 1, min_size: int = 1):
    """Root of every locked region: mean x over its lowest y-row.

    Rows with ``y = 0`` are unforced and excluded by construction.
    """
    xs, ys = fm.spec.x.values, fm.spec.y.values
    _, regions = locked_regions(fm, p)
    out = []
    for r in regions:
        if r["size"] < min_size:
            continue
        low = r["iy"].min()
        sel = r["iy"] == low
        out.append({"q": r["q"], "root_x": float(xs[r["ix"][sel]].mean()),
                    "root_y": float(ys[low]), "size": r["size"], "id": r["id"]})
    out.sort(key=lambda d: d["root_x"])
    return out


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

def isocurves(fm_or_field, levels, x=None, y=None):
    """Marching-squares level sets.

    Accepts a :class:`FieldMap` plus a field name via ``levels`` as
    ``(name, levels)``, or a plain array ``Z[iy, ix]`` with axis vectors.
    Squares touching a NaN corner are skipped.  Returns ``{level: [polyline]}``
    with polylines as ``(n, 2)`` arrays of ``(x, y)``.
    """
    if isinstance(fm_or_field, FieldMap):
        name, levels = levels
        Z = fm_or_field.field(name)
        x, y = fm_or_field.spec.x.values, fm_or_field.spec.y.values
    else:
        Z = np.asarray(fm_or_field, dtype=float)
        x = np.arange(Z.shape[1], dtype=float) if x is None else np.asarray(x, dtype=float)
        y = np.arange(Z.shape[0], dtype=float) if y is None else np.asarray(y, dtype=float)
    return {float(c): _contour(Z, x, y, float(c)) for c in np.atleast_1d(levels)}


def _contour(Z, x, y, c):
    ny, nx = Z.shape
    finite = Z[np.isfinite(Z)]
    if finite.size == 0 or not finite.min() < c < finite.max():
        return []
    above = Z >= c

    def point(edge):
        kind, i, j = edge           # 'h': (i,j)-(i,j+1) along x; 'v': (i,j)-(i+1,j) along y
        if kind == "h":
            z0, z1 = Z[i, j], Z[i, j + 1]
            s = (c - z0) / (z1 - z0)
            return (x[j] + s * (x[j + 1] - x[j]), y[i])
        z0, z1 = Z[i, j], Z[i + 1, j]
        s = (c - z0) / (z1 - z0)
        return (x[j], y[i] + s * (y[i + 1] - y[i]))

    segs = []
    for i in range(ny - 1):
        for j in range(nx - 1):
            q = Z[i:i + 2, j:j + 2]
            if not np.all(np.isfinite(q)):
                continue
            a = above[i:i + 2, j:j + 2]
            if a.all() or not a.any():
                continue
            # edges in cyclic order: bottom, right, top, left
            edges = [("h", i, j), ("v", i, j + 1), ("h", i + 1, j), ("v", i, j)]
            corners = [a[0, 0], a[0, 1], a[1, 1], a[1, 0]]
            cut = [e for k, e in enumerate(edges) if corners[k] != corners[(k + 1) % 4]]
            if len(cut) == 2:
                segs.append((cut[0], cut[1]))
            else:
                # saddle: if the centre sides with corner 0, corners 0 and 2
                # connect and the curves cut off corners 1 and 3
                if (q.mean() >= c) == corners[0]:
                    segs += [(edges[0], edges[1]), (edges[2], edges[3])]
                else:
                    segs += [(edges[3], edges[0]), (edges[1], edges[2])]
    return _stitch(segs, point)


def _stitch(segs, point):
    adj = {}
    for k, (a, b) in enumerate(segs):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(len(segs), dtype=bool)
    lines = []

    def walk(start_edge, k):
        path = [start_edge]
        e = start_edge
        while k is not None:
            used[k] = True
            a, b = segs[k]
            e = b if a == e else a
            path.append(e)
            nxt = [m for m in adj[e] if not used[m]]
            k = nxt[0] if nxt else None
        return path

    # open chains first (edges seen once), then closed loops
    for e, ks in adj.items():
        if len(ks) == 1 and not used[ks[0]]:
            lines.append(walk(e, ks[0]))
    for k in range(len(segs)):
        if not used[k]:
            lines.append(walk(segs[k][0], k))
    return [np.array([point(e) for e in path]) for path in lines]


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def _blue_white(t: float) -> str:
    """Linear map 0 -> (0, 40, 160) blue, 1 -> white."""
    r = round(0 + t * 255)
    g = round(40 + t * 215)
    b = round(160 + t * 95)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(fm: FieldMap, field_name: str = "G_max", cell_px: int = 8) -> str:
    """Heatmap with a linear blue (minimum) to white (maximum) scale.

    Failed or absent cells are grey; locked cells carry a small dot.  Row 0
    (smallest y) is drawn at the bottom.
    """
    Z = fm.field(field_name)
    ny, nx = Z.shape
    lo, hi = np.nanmin(Z), np.nanmax(Z)
    span = hi - lo if hi > lo else 1.0
    labels = fm.labels()
    W, H = nx * cell_px, ny * cell_px
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 160}" height="{H + 40}">']
    for iy in range(ny):
        for ix in range(nx):
            v = Z[iy, ix]
            col = "#999999" if not math.isfinite(v) else _blue_white((v - lo) / span)
            px, py = ix * cell_px, (ny - 1 - iy) * cell_px
            out.append(f'<rect x="{px}" y="{py}" width="{cell_px}" height="{cell_px}" fill="{col}"/>')
            if labels[iy, ix] == LOCKED:
                out.append(f'<circle cx="{px + cell_px / 2}" cy="{py + cell_px / 2}" '
                           f'r="{cell_px / 6}" fill="#000000"/>')
    out.append(f'<text x="{W + 10}" y="20" font-size="12">{field_name}</text>')
    out.append(f'<text x="{W + 10}" y="40" font-size="12">white = {hi:.4g}</text>')
    out.append(f'<text x="{W + 10}" y="60" font-size="12">blue = {lo:.4g}</text>')
    out.append(f'<text x="0" y="{H + 20}" font-size="12">x: {fm.spec.x.name} '
               f'[{fm.spec.x.lo:g}, {fm.spec.x.hi:g}]; y: {fm.spec.y.name} '
               f'[{fm.spec.y.lo:g}, {fm.spec.y.hi:g}]</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
