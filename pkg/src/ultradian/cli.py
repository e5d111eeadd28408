"""Command-line front end.

    python -m ultradian simulate --preset fig1b --out runs/fig1b
    python -m ultradian hopf --preset fig3 --out runs/fig3
    python -m ultradian sweep --preset fig5 --workers 4 --out runs/fig5

Settings come from a preset, then the ``--config`` file, then ``--set
section.key=value`` flags; later sources win.  Exit codes: 0 ok, 1 runtime failure, 2 invalid configuration,
3 a certification (equilibrium or Hopf residual) failed.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import classify, required_span, summaries_to_csv
from .forcing import InfusionProtocol
from .linear import (
    char_coeffs, hopf_curve, hopf_curve_approx, omega_bounds, write_curve_csv, diagonal_intercept,
    ExistenceError,
)
from .model import PARAM_KEYS, ModelParams, equilibrium, params_from_mapping, NoEquilibriumError
from .simulation import simulate
from .sweep import duration_map, fasting_field_map, resonance_map

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_CERT = 0, 1, 2, 3

SCHEMA = {
    "model": set(PARAM_KEYS),
    "protocol": {"kind", "g_max", "t_period", "t_on", "sigma", "k"},
    "integrator": {"dt", "span", "history_G", "history_I"},
    "analysis": {"eps", "eta", "n_strobe"},
    "hopf": {"g_in", "approx", "approx_order", "branch_k", "branch_l", "n", "tau_max"},
    "sweep": {"kind", "x_min", "x_max", "x_count", "y_min", "y_max", "y_count", "t_period"},
    "output": {"stride", "svg", "svg_field"},
}

DEFAULTS = {
    "protocol": {"kind": "constant", "g_max": "0", "t_period": "0", "t_on": "0",
                 "sigma": "0", "k": "100"},
    "integrator": {"dt": "0.05", "span": "auto", "history_G": "100", "history_I": "20"},
    "analysis": {"eps": "1.0", "eta": "0.5", "n_strobe": "64"},
    "hopf": {"g_in": "0", "approx": "no", "approx_order": "printed", "branch_k": "0",
             "branch_l": "0", "n": "2000", "tau_max": "500"},
    "sweep": {"kind": "resonance", "x_min": "30", "x_max": "420", "x_count": "64",
              "y_min": "0", "y_max": "2.5", "y_count": "64", "t_period": "180"},
    "output": {"stride": "20", "svg": "yes", "svg_field": "G_max"},
}

PRESETS = {
    "fig1b": {"protocol": {"kind": "constant", "g_max": "0"}},
    "fig1c": {"protocol": {"kind": "constant", "g_max": "1.35"}},
    "fig1d": {"protocol": {"kind": "on-off", "g_max": "1.35", "t_period": "60", "t_on": "30"}},
    "fig1e": {"protocol": {"kind": "on-off", "g_max": "24.3", "t_period": "180", "t_on": "5"}},
    "fig2": {"sweep": {"kind": "fasting", "x_min": "0.5", "x_max": "20", "x_count": "40",
                       "y_min": "1.5", "y_max": "60", "y_count": "40"},
             "output": {"svg_field": "period"}},
    "fig3": {"hopf": {"g_in": "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3,1.4,1.5,1.6",
                      "approx": "yes"}},
    "fig4": {"sweep": {"kind": "resonance", "x_min": "30", "x_max": "420", "x_count": "64",
                       "y_min": "0", "y_max": "2.5", "y_count": "64"}},
    "fig5": {"sweep": {"kind": "duration", "x_min": "5", "x_max": "68", "x_count": "64",
                       "y_min": "0", "y_max": "1.575", "y_count": "64", "t_period": "180"}},
}


class ConfigError(ValueError):
    pass


def _check_keys(sections: dict):
    for sec, keys in sections.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in keys:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        lhs, sep, value = item.partition("=")
        sec, dot, key = lhs.strip().partition(".")
        if not sep or not dot or not sec or not key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out.setdefault(sec, {})[key] = value.strip()
    return out


def load_config(preset: str | None, path: str | None, overrides=None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        cp.read_dict(PRESETS[preset])
    if path is not None:
        user = configparser.ConfigParser(comment_prefixes=("#", ";"))
        user.optionxform = str
        try:
            with open(path) as fh:
                user.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        _check_keys({sec: list(user[sec]) for sec in user.sections()})
        cp.read_dict({s: dict(user[s]) for s in user.sections()})
    flags = _parse_overrides(overrides)
    _check_keys(flags)
    cp.read_dict(flags)
    return cp


def _float(cp, sec, key):
    try:
        return float(cp[sec][key])
    except ValueError as exc:
        raise ConfigError(f"{sec}.{key}: not a number ({cp[sec][key]!r})") from exc


def _int(cp, sec, key):
    v = _float(cp, sec, key)
    if v != int(v):
        raise ConfigError(f"{sec}.{key}: expected an integer")
    return int(v)


def _bool(cp, sec, key):
    try:
        return cp.getboolean(sec, key)
    except ValueError as exc:
        raise ConfigError(f"{sec}.{key}: expected yes/no") from exc


def params_of(cp) -> ModelParams:
    try:
        return params_from_mapping(dict(cp["model"]) if cp.has_section("model") else {})
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def protocol_of(cp) -> InfusionProtocol:
    kind = cp["protocol"]["kind"]
    try:
        if kind == "constant":
            return InfusionProtocol.constant(_float(cp, "protocol", "g_max"))
        return InfusionProtocol(kind, _float(cp, "protocol", "g_max"),
                                _float(cp, "protocol", "t_period"), _float(cp, "protocol", "t_on"),
                                _float(cp, "protocol", "sigma"), _float(cp, "protocol", "k"))
    except ValueError as exc:
        raise ConfigError(f"protocol: {exc}") from exc


def _span(cp, protocol, params):
    raw = cp["integrator"]["span"]
    if raw == "auto":
        return required_span(protocol, params.delays, _int(cp, "analysis", "n_strobe"))
    return _float(cp, "integrator", "span")


class Output:
    """Output directory with a manifest of content hashes."""

    def __init__(self, root, cp, command):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.command = command
        with open(self.root / "effective_config.ini", "w") as fh:
            cp.write(fh)
        self.add("effective_config.ini")

    def path(self, name) -> Path:
        return self.root / name

    def add(self, name):
        self.files[name] = hashlib.sha256(self.path(name).read_bytes()).hexdigest()

    def write_text(self, name, text):
        self.path(name).write_text(text)
        self.add(name)

    def close(self, status):
        manifest = {"version": __version__, "command": self.command, "status": status,
                    "files": self.files}
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_and_classify(cp, params, protocol):
    dt = _float(cp, "integrator", "dt")
    hist = (_float(cp, "integrator", "history_G"), _float(cp, "integrator", "history_I"))
    tr = simulate(params, protocol, span=_span(cp, protocol, params), dt=dt, history=hist)
    s = classify(tr, protocol, params.delays, eps=_float(cp, "analysis", "eps"),
                 eta=_float(cp, "analysis", "eta"), n_strobe=_int(cp, "analysis", "n_strobe"))
    return tr, s


def cmd_simulate(cp, out: Output, args, series=True) -> int:
    params, protocol = params_of(cp), protocol_of(cp)
    tr, s = _run_and_classify(cp, params, protocol)
    if series:
        stride = _int(cp, "output", "stride")
        t = tr.times[::stride]
        y = tr.values[::stride]
        rate = np.atleast_1d(protocol(t))
        if rate.size == 1:
            rate = np.full(t.size, float(rate[0]))
        with open(out.path("timeseries.csv"), "w") as fh:
            fh.write("t,G,I,G_in_rate\n")
            for row in zip(t, y[:, 0], y[:, 1], rate):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        out.add("timeseries.csv")
    out.write_text("summary.csv", summaries_to_csv([s]))
    out.write_text("summary.txt", s.report() + "\n")
    print(s.report())
    return EXIT_OK


def cmd_classify(cp, out, args) -> int:
    return cmd_simulate(cp, out, args, series=False)


def cmd_equilibrium(cp, out, args) -> int:
    params = params_of(cp)
    g_in = _float(cp, "protocol", "g_max") if cp["protocol"]["kind"] == "constant" else 0.0
    eq = equilibrium(params, g_in)
    c = char_coeffs(params, eq)
    rows = {"G_in": g_in, "G_star": eq.G_star, "I_star": eq.I_star, "residual_G": eq.residual_G,
            "residual_I": eq.residual_I, "alpha0": c.alpha0, "alpha1": c.alpha1,
            "beta1": c.beta1, "beta2": c.beta2}
    try:
        b = omega_bounds(c)
        rows.update(omega_I=b.omega_I, omega_G=b.omega_G, tau_I_at_omega_G=b.tau_I_at_omega_G,
                    tau_G_at_omega_I=b.tau_G_at_omega_I)
    except ExistenceError as exc:
        print(f"omega bounds: {exc}")
    out.write_text("equilibrium.csv", ",".join(rows) + "\n"
                   + ",".join(repr(float(v)) for v in rows.values()) + "\n")
    for k, v in rows.items():
        print(f"{k:18s} {v:.10g}")
    ok = max(abs(eq.residual_G), abs(eq.residual_I)) < 1e-10
    return EXIT_OK if ok else EXIT_CERT


def cmd_hopf(cp, out, args) -> int:
    params = params_of(cp)
    try:
        g_list = [float(v) for v in cp["hopf"]["g_in"].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"hopf.g_in: {exc}") from exc
    branch = (_int(cp, "hopf", "branch_k"), _int(cp, "hopf", "branch_l"))
    want_approx = _bool(cp, "hopf", "approx")
    order = cp["hopf"]["approx_order"]
    curves, approx, status = [], {}, EXIT_OK
    print(f"{'G_in':>6} {'samples':>8} {'max_residual':>13} {'diag_dist':>10} {'approx_gap':>11}")
    for g in g_list:
        eq = equilibrium(params, g)
        c = char_coeffs(params, eq)
        cv = hopf_curve(c, branch=branch, n=_int(cp, "hopf", "n"),
                        tau_max=_float(cp, "hopf", "tau_max"), G_in=g)
        curves.append(cv)
        gap = ""
        if want_approx:
            a = hopf_curve_approx(c, cv.tau_I, order=order, strict=False)
            approx[g] = a
            d = np.abs(a - cv.tau_G)
            gap = f"{np.nanmax(d):.4g}" if np.isfinite(d).any() else "n/a"
        try:
            dist = f"{diagonal_intercept(cv):.4f}"
        except ValueError:
            dist = "none"
        res = float(cv.residual.max())
        if not res < 1e-9:
            status = EXIT_CERT
        print(f"{g:6.2f} {len(cv):8d} {res:13.3e} {dist:>10} {gap:>11}")
    write_curve_csv(curves, out.path("hopf.csv"), approx if want_approx else None)
    out.add("hopf.csv")
    return status


def cmd_sweep(cp, out, args) -> int:
    params = params_of(cp)
    kind = cp["sweep"]["kind"]
    xr = (_float(cp, "sweep", "x_min"), _float(cp, "sweep", "x_max"))
    yr = (_float(cp, "sweep", "y_min"), _float(cp, "sweep", "y_max"))
    res = (_int(cp, "sweep", "x_count"), _int(cp, "sweep", "y_count"))
    kw = dict(dt=_float(cp, "integrator", "dt"), n_strobe=_int(cp, "analysis", "n_strobe"),
              eps=_float(cp, "analysis", "eps"), eta=_float(cp, "analysis", "eta"),
              history=(_float(cp, "integrator", "history_G"), _float(cp, "integrator", "history_I")))
    try:
        if kind == "resonance":
            fm = resonance_map(params, xr, yr, res, workers=args.workers, **kw)
        elif kind == "duration":
            fm = duration_map(params, xr, yr, _float(cp, "sweep", "t_period"), res,
                              workers=args.workers, **kw)
        elif kind == "fasting":
            fm = fasting_field_map(params, xr, yr, res, workers=args.workers, **kw)
        else:
            raise ConfigError(f"sweep.kind: unknown kind {kind!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"sweep: {exc}") from exc
    fm.to_csv(out.path("fieldmap.csv"))
    out.add("fieldmap.csv")
    (out.path("provenance.json")).write_text(json.dumps(fm.provenance, indent=2, sort_keys=True) + "\n")
    out.add("provenance.json")
    if _bool(cp, "output", "svg"):
        fm.to_svg(out.path("fieldmap.svg"), cp["output"]["svg_field"])
        out.add("fieldmap.svg")
    failed = sum(c.summary is None for c in fm.cells)
    counts = Counter(fm.labels().ravel())
    print("cells:", ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    if "T0" in fm.provenance:
        print(f"T0 = {fm.provenance['T0']:.2f} min ({fm.provenance['T0'] / 60:.3f} h)")
    if args.preset == "fig4":
        c = fm.nearest(60.0, 1.35)
        print(f"fig1d protocol, nearest cell (T_in={c.x:.1f}, G_max={c.y:.3f}):",
              c.summary.label if c.summary else "failed")
    if args.preset == "fig5":
        for t_in in (30.0, 60.0):
            c = fm.nearest(t_in, 0.4)
            print(f"t_in={c.x:g}, G_bar={c.y:g}: max G = "
                  + (f"{c.summary.G_max:.1f} mg/dl" if c.summary else "failed"))
        c = fm.nearest(5.0, 0.675)
        print(f"fig1e protocol (t_in={c.x:g}, G_bar={c.y:g}):",
              c.summary.label if c.summary else "failed")
    if failed:
        print(f"{failed} cell(s) failed; see the flags column")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "equilibrium": cmd_equilibrium,
    "hopf": cmd_hopf,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ultradian", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [model], [protocol], ... sections")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", default=None, help="output directory (default: runs/<command>)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None,
                       help="reserved; every computation is deterministic")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cp = load_config(args.preset, args.config, args.set)
        params_of(cp)
        protocol_of(cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Output(args.out or f"runs/{args.command}", cp, args.command)
    try:
        status = COMMANDS[args.command](cp, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except (NoEquilibriumError, ExistenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_CERT
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    out.close(status)
    return status
