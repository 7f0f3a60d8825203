"""Command-line front end.

Subcommands mirror the library surface: ``runpoly`` (run-structure
polynomials as exact JSON), ``worldfun`` (geodesic-distance expansions vs
reference values, CSV), ``modes`` / ``wick`` (adiabatic modes and the
renormalized squared field), ``solve`` (the backreaction fixed point),
``spectrum`` and ``bispectrum`` (induced fluctuations).  A line-oriented
``key = value`` config file may supply any flag; explicit flags win.
Output is deterministic byte-for-byte for identical configurations: floats
are printed with 17 significant digits and JSON keys are sorted.  Exit
codes: 0 success, 1 numerical failure (JSON diagnostics on stderr), 2 usage
errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import fluct, geodesy, modes, runcomb, sceq
from .numerics import QuadratureError


def _fmt(x):
    return "%.17g" % float(x)


def _parse_floats(text):
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Option tables (shared between argparse and the config file)
# ---------------------------------------------------------------------------

OPTIONS = {
    "runpoly": {
        "kind": (str, None, True, "atomic | circular | linear | valley"),
        "n": (int, None, True, "index of the polynomial"),
        "out": (str, "-", False, "output path ('-' = stdout)"),
    },
    "worldfun": {
        "metric": (str, None, True,
                   "minkowski | flrw-cosmological | flrw-conformal | desitter"),
        "order": (int, 6, False, "expansion order (2..6 for references)"),
        "a": (float, 1.0, False, "scale factor at the base point"),
        "hubble": (str, "", False,
                   "comma list: rate and its derivatives at the base point"),
        "hubble-const": (float, 1.0, False, "expansion rate (desitter)"),
        "tau0": (float, -1.0, False, "base conformal time (desitter)"),
        "dx-list": (str, None, True, "semicolon-separated dt,dx,dy,dz rows"),
        "out": (str, "-", False, "output path"),
    },
    "modes": {
        "background": (str, None, True, "static | powerlaw | desitter | tabulated"),
        "mass": (float, 1.0, False, "field mass"),
        "power": (float, 2.0, False, "power-law exponent"),
        "hubble-const": (float, 1.0, False, "expansion rate (desitter)"),
        "a0": (float, 1.0, False, "scale factor at tau0 (static)"),
        "tau0": (float, None, False, "initial conformal time"),
        "tau": (float, None, True, "evaluation time (> tau0)"),
        "k-list": (str, None, True, "comma list of momenta"),
        "tol": (float, 1e-10, False, "mode truncation tolerance"),
        "table": (str, "", False, "CSV of tau,a,aprime rows (tabulated)"),
        "grid-n": (int, 257, False, "internal grid points"),
        "out": (str, "-", False, "output path"),
    },
    "wick": {
        "background": (str, None, True, "static | powerlaw | desitter | tabulated"),
        "mass": (float, 1.0, False, "field mass"),
        "power": (float, 2.0, False, "power-law exponent"),
        "hubble-const": (float, 1.0, False, "expansion rate (desitter)"),
        "a0": (float, 1.0, False, "scale factor at tau0 (static)"),
        "tau0": (float, None, False, "initial conformal time"),
        "tau": (float, None, True, "evaluation time"),
        "lam": (float, 0.0, False, "renormalization length (0 = default)"),
        "tol": (float, 1e-9, False, "target accuracy"),
        "table": (str, "", False, "CSV of tau,a,aprime rows (tabulated)"),
        "grid-n": (int, 257, False, "internal grid points"),
        "out": (str, "-", False, "output path"),
    },
    "solve": {
        "m": (float, 0.0, False, "field mass"),
        "lambda": (float, 0.0, False, "cosmological constant"),
        "tau0": (float, None, True, "initial conformal time"),
        "a0": (float, 1.0, False, "initial scale factor"),
        "h0": (float, 0.0, False, "initial Hubble rate"),
        "tau-max": (float, None, True, "extension target"),
        "window": (float, 0.0, False, "first window length (0 = auto)"),
        "grid-n": (int, 256, False, "grid points per window"),
        "tol": (float, 1e-8, False, "iteration delta tolerance"),
        "radiation": (float, 0.0, False, "classical radiation offset"),
        "out": (str, "-", False, "JSON report path"),
        "csv": (str, "", False, "optional CSV path for the trajectory"),
    },
    "spectrum": {
        "m": (float, None, True, "field mass"),
        "hubble": (float, 1.0, False, "background expansion rate"),
        "tau-list": (str, "", False, "comma list of conformal times (< 0)"),
        "k-list": (str, "", False, "comma list of momenta"),
        "ktau-list": (str, "", False, "comma list of k*tau (< 0): rescaled profile"),
        "tol": (float, 1e-6, False, "quadrature tolerance"),
        "emit-fig": (bool, False, False, "emit (|ktau|, profile/C) columns"),
        "out": (str, "-", False, "output path"),
    },
    "bispectrum": {
        "m": (float, None, True, "field mass"),
        "hubble": (float, 1.0, False, "background expansion rate"),
        "tau": (float, None, True, "conformal time (< 0)"),
        "k1": (float, None, True, "first momentum magnitude"),
        "k2": (float, None, True, "second momentum magnitude"),
        "k3": (float, None, True, "third momentum magnitude"),
        "radial": (int, 48, False, "radial nodes"),
        "angular": (int, 32, False, "angular nodes"),
        "azimuthal": (int, 32, False, "azimuthal nodes"),
        "out": (str, "-", False, "output path"),
    },
}

GLOBAL_OPTIONS = {
    "config": (str, "", False, "key = value file supplying any flag"),
    "threads": (int, 0, False,
                "parallel grid evaluation (0 = machine; SCG_THREADS mirrors)"),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="scgw",
        description="semiclassical gravity workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table in OPTIONS.items():
        p = sub.add_parser(name, help=f"{name} computation")
        for key, (typ, default, required, help_text) in {**table, **GLOBAL_OPTIONS}.items():
            flag = "--" + key
            if typ is bool:
                p.add_argument(flag, action="store_true", default=None,
                               help=help_text)
            else:
                p.add_argument(flag, type=typ, default=None,
                               help=f"{help_text}"
                                    + (f" (default {default})" if not required else " (required)"))
    return parser


def _load_config(path, table):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("_", "-")
            value = value.strip()
            if key not in table and key not in GLOBAL_OPTIONS:
                raise UsageError(f"{path}:{lineno}: unknown key '{key}'")
            typ = (table.get(key) or GLOBAL_OPTIONS[key])[0]
            try:
                values[key] = (value.lower() in ("1", "true", "yes")
                               if typ is bool else typ(value))
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for '{key}': {exc}")
    return values


def _resolve(args, command):
    """Flags override config-file values override defaults; required keys
    must be present somewhere."""
    table = OPTIONS[command]
    merged = {}
    config_path = getattr(args, "config", None)
    file_values = _load_config(config_path, table) if config_path else {}
    for key, (typ, default, required, _) in {**table, **GLOBAL_OPTIONS}.items():
        attr = key.replace("-", "_")
        flag_value = getattr(args, attr, None)
        if flag_value is not None:
            merged[key] = flag_value
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            if required:
                raise UsageError(f"missing required option --{key}")
            merged[key] = default
    if not merged.get("threads"):
        merged["threads"] = int(os.environ.get("SCG_THREADS", "0") or 0) or (os.cpu_count() or 1)
    return merged


def _emit(text, path):
    if path in ("-", "", None):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_runpoly(opt):
    kind, n = opt["kind"], opt["n"]
    builders = {
        "atomic": runcomb.atomic_poly,
        "circular": runcomb.circular_poly,
        "linear": runcomb.linear_poly,
        "valley": runcomb.valley_poly,
    }
    if kind not in builders:
        raise UsageError(f"unknown kind '{kind}'")
    poly = builders[kind](n)
    rows = [{"partition": list(part.parts), "coeff": str(coeff)}
            for part, coeff in poly.sorted_terms()]
    _emit(json.dumps(rows, sort_keys=True, indent=1) + "\n", opt["out"])
    return 0


def _background_for(opt):
    name = opt["background"]
    if name == "static":
        return modes.static_background(opt["a0"], opt["tau0"] if opt["tau0"] is not None else 0.0,
                                       opt["mass"])
    if name == "powerlaw":
        return modes.powerlaw_background(opt["power"],
                                         opt["tau0"] if opt["tau0"] is not None else 1.0,
                                         opt["mass"])
    if name == "desitter":
        return modes.desitter_background(opt["hubble-const"],
                                         opt["tau0"] if opt["tau0"] is not None else -1.0,
                                         opt["mass"])
    if name == "tabulated":
        if not opt["table"]:
            raise UsageError("tabulated background needs --table")
        data = np.loadtxt(opt["table"], delimiter=",", skiprows=1)
        return modes.tabulated_background(data[:, 0], data[:, 1], data[:, 2],
                                          opt["mass"])
    raise UsageError(f"unknown background '{name}'")


def _cmd_modes(opt):
    bg = _background_for(opt)
    ks = _parse_floats(opt["k-list"])
    taus = np.linspace(bg.tau0, opt["tau"], opt["grid-n"])
    lines = ["k,re_chi,im_chi,re_dchi,im_dchi,wronskian_residual"]
    for k in ks:
        entry = modes.mode(bg, k, taus, tol=opt["tol"])
        chi, dchi = entry.chi[-1], entry.dchi[-1]
        lines.append(",".join([_fmt(k), _fmt(chi.real), _fmt(chi.imag),
                               _fmt(dchi.real), _fmt(dchi.imag),
                               _fmt(float(entry.wronskian_residual()[-1]))]))
    _emit("\n".join(lines) + "\n", opt["out"])
    return 0


def _cmd_wick(opt):
    bg = _background_for(opt)
    taus = np.linspace(bg.tau0, opt["tau"], opt["grid-n"])
    lam = opt["lam"] if opt["lam"] > 0 else None
    result = modes.wick_square_profile(bg, taus, lam=lam, tol=opt["tol"])
    payload = {
        "background": bg.label,
        "mass": bg.mass,
        "tau": opt["tau"],
        "value": result.values[-1],
        "error_estimate": result.error,
        "k_split": result.k_star,
    }
    _emit(json.dumps(payload, sort_keys=True, indent=1, default=float) + "\n",
          opt["out"])
    return 0


def _metric_jet_for(opt):
    name = opt["metric"]
    order = max(opt["order"] - 2, 2)
    hubs = _parse_floats(opt["hubble"]) if opt["hubble"] else []
    hubs = (hubs + [0.0] * 4)[:4]
    if name == "minkowski":
        return geodesy.minkowski_jet(order=order), None
    if name == "flrw-cosmological":
        jet = geodesy.flrw_cosmological_jet(opt["a"], hubs, order=order)
        return jet, ("cosmological", hubs, opt["a"])
    if name == "flrw-conformal":
        jet = geodesy.flrw_conformal_jet(opt["a"], hubs, order=order)
        return jet, ("conformal", hubs, opt["a"])
    if name == "desitter":
        jet = geodesy.desitter_conformal_jet(opt["hubble-const"], opt["tau0"],
                                             order=order)
        return jet, ("desitter", opt["hubble-const"], opt["tau0"])
    raise UsageError(f"unknown metric '{name}'")


def _cmd_worldfun(opt):
    jet, ref_info = _metric_jet_for(opt)
    coeffs = geodesy.sigma_coeffs(jet, opt["order"])
    rows = ["dt,dx,dy,dz,sigma_truncated,sigma_reference"]
    for chunk in opt["dx-list"].split(";"):
        dx = [float(t) for t in chunk.split(",")]
        if len(dx) != 4:
            raise UsageError("each dx row needs 4 components")
        val = geodesy.sigma_eval(coeffs, dx)
        if ref_info is None:
            ref = 0.5 * (-dx[0] ** 2 + dx[1] ** 2 + dx[2] ** 2 + dx[3] ** 2)
        elif ref_info[0] == "desitter":
            hub, tau0 = ref_info[1], ref_info[2]
            pair = geodesy.DeSitterPair(tau0, (0.0, 0.0, 0.0),
                                        tau0 + dx[0], tuple(dx[1:]), hub)
            ref = geodesy.desitter_sigma(geodesy.desitter_Z(pair), hub)
        else:
            chart, hubs, a = ref_info
            ref = geodesy.flrw_sigma_reference(chart, hubs, a, dx,
                                               min(opt["order"], 6))
        rows.append(",".join(_fmt(v) for v in dx) + f",{_fmt(val)},{_fmt(ref)}")
    _emit("\n".join(rows) + "\n", opt["out"])
    return 0


def _cmd_solve(opt):
    params = sceq.SolverParams(mass=opt["m"], lam=opt["lambda"],
                               grid_n=opt["grid-n"], tol=opt["tol"],
                               radiation_offset=opt["radiation"])
    tau0, tau_max = opt["tau0"], opt["tau-max"]
    window = opt["window"]
    if window <= 0:
        scale = max(abs(opt["h0"]), abs(params.lam) ** 0.25, 1.0)
        window = min(0.25 / (opt["a0"] * scale), (tau_max - tau0))
    report = sceq.solve_local(tau0, opt["a0"], opt["h0"], tau0 + window, params)
    if report.termination == "converged" and report.taus[-1] < tau_max:
        report = sceq.extend_maximal(report, tau_max, params)
    constraint = sceq.constraint_check(tau0, opt["a0"], opt["h0"], params)
    payload = {
        "termination": report.termination,
        "iterations": report.iterations,
        "residual": report.residual,
        "constraint_residual": constraint,
        "tau_end": report.taus[-1],
        "windows": report.windows,
        "wick_error": report.wick_error,
        "deltas": report.deltas,
        "contraction_ratios": report.ratios,
        "renormalization": sceq.RENORM_CONSTANTS,
    }
    _emit(json.dumps(payload, sort_keys=True, indent=1, default=float) + "\n",
          opt["out"])
    if opt["csv"]:
        lines = ["tau,H,a,wick_square,residual"]
        res_prof = getattr(report, "residual_profile", None)
        for i, t in enumerate(report.taus):
            res = res_prof[i] if res_prof is not None else report.residual
            lines.append(",".join([_fmt(t), _fmt(report.H[i]), _fmt(report.a[i]),
                                   _fmt(report.wick[i]), _fmt(res)]))
        _emit("\n".join(lines) + "\n", opt["csv"])
    return 0 if report.termination in ("converged", "reached_tau_max",
                                       "hit_hc", "a_diverging") else 1


def _cmd_spectrum(opt):
    params = fluct.FluctParams(mass=opt["m"], hubble=opt["hubble"],
                               tol=opt["tol"])
    jobs = []
    if opt["ktau-list"]:
        for x in _parse_floats(opt["ktau-list"]):
            jobs.append((x, 1.0))
    else:
        if not (opt["tau-list"] and opt["k-list"]):
            raise UsageError("need --ktau-list or both --tau-list and --k-list")
        for t in _parse_floats(opt["tau-list"]):
            for k in _parse_floats(opt["k-list"]):
                jobs.append((t, k))

    def one(job):
        t, k = job
        p0 = fluct.power_spectrum_P0(t, k, params)
        return t, k, p0, k ** 3 * p0

    results = _parallel_map(one, jobs, opt["threads"])
    if opt["emit-fig"]:
        c = params.hz_constant()
        lines = ["abs_ktau,profile_over_C"]
        for t, k, p0, k3p0 in results:
            lines.append(f"{_fmt(abs(t * k))},{_fmt(k3p0 / c)}")
    else:
        lines = ["tau,k,P0,k3P0"]
        for t, k, p0, k3p0 in results:
            lines.append(",".join(_fmt(v) for v in (t, k, p0, k3p0)))
    _emit("\n".join(lines) + "\n", opt["out"])
    return 0


def _cmd_bispectrum(opt):
    params = fluct.FluctParams(mass=opt["m"], hubble=opt["hubble"],
                               b0_radial=opt["radial"], b0_angular=opt["angular"],
                               b0_azimuthal=opt["azimuthal"])
    value, err = fluct.bispectrum_B0(opt["tau"], (opt["k1"], opt["k2"], opt["k3"]),
                                     params, with_error=True)
    lines = ["k1,k2,k3,tau,B0,err_est",
             ",".join(_fmt(v) for v in (opt["k1"], opt["k2"], opt["k3"],
                                        opt["tau"], value, err))]
    _emit("\n".join(lines) + "\n", opt["out"])
    return 0


def _parallel_map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


COMMANDS = {
    "runpoly": _cmd_runpoly,
    "worldfun": _cmd_worldfun,
    "modes": _cmd_modes,
    "wick": _cmd_wick,
    "solve": _cmd_solve,
    "spectrum": _cmd_spectrum,
    "bispectrum": _cmd_bispectrum,
}


def dispatch(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opt = _resolve(args, args.command)
        return COMMANDS[args.command](opt)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    except (QuadratureError, sceq.RegularityError, modes.MinimizationError,
            ValueError, ArithmeticError) as exc:
        sys.stderr.write(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
        }, sort_keys=True) + "\n")
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
