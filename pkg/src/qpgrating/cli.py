"""Command-line front end.

Every subcommand reads its numeric parameters from, in increasing priority,
built-in defaults, an optional INI-style ``--config`` file (section named
after the subcommand, plus an optional ``[profile]`` section) and command-line
flags. All inputs are parsed and validated before anything is computed or
written.

Exit status: 0 success, 2 usage error, 3 invalid input, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from .errors import GratingError, NumericalError, ValidationError
from .profile import GratingProfile, parse_number

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4


def _float(text):
    return float(parse_number(str(text)))


def _int(text):
    try:
        return int(str(text).strip())
    except ValueError:
        raise ValidationError(f"expected an integer, got {text!r}") from None


def _floats(text):
    items = [t for t in str(text).replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ValidationError("empty list")
    return [_float(t) for t in items]


def _str(text):
    return str(text).strip()


def _strip(text):
    key, _, val = str(text).partition("=")
    if key.strip() != "h" or not val:
        raise ValidationError(f"--strip expects h=VALUE, got {text!r}")
    return _float(val)


# parameter name -> (converter, default, help); None default = required unless noted
COMMON = {"workers": (_int, None, "worker threads (default: logical cores)")}
WAVE = {"k": (_float, None, "wavenumber"), "theta": (_float, None, "incident angle (rad)")}
SOLVER = {
    "modes": (_int, 16, "Rayleigh truncation N (orders -N..N)"),
    "collocation": (_int, 0, "collocation points (0: twice the mode count)"),
    "tol": (_float, 1e-6, "boundary-residual tolerance"),
    "drop_below": (_float, 1e-14, "omit table rows with |A_n| at or below this"),
}
PROFILE = {"profile": (_str, "", "profile description file (or [profile] config section)")}
CELL = {
    "strip": (_strip, None, "straight strip of width h, written h=VALUE"),
    "lower": (_str, "", "lower wall profile file"),
    "upper": (_str, "", "upper wall profile file"),
    "fourier_order": (_int, 8, "Fourier index range P of the cell basis"),
    "poly_count": (_int, 20, "transverse basis size Q"),
}

SPECS = {
    "solve": {**WAVE, **SOLVER, **PROFILE, **COMMON},
    "multi-solve": {"k": WAVE["k"], "angles": (_floats, None, "comma-separated angles"),
                    **SOLVER, **PROFILE, **COMMON},
    "dispersion": {**CELL, "bands": (_int, 6, "number of bands J"),
                   "grid": (_int, 21, "alpha samples in (-1/2, 1/2]"), **COMMON},
    "mu-eig": {**CELL, "k": WAVE["k"],
               "method": (_str, "pencil", "pencil, dispersion or both"),
               "bands": (_int, 12, "bands used by the dispersion route"),
               "grid": (_int, 41, "alpha samples used by the dispersion route"),
               "tol": (_float, 1e-8, "imaginary-part threshold for real eigenvalues"),
               **COMMON},
    "retrieve": {**WAVE, "input": (_str, None, "intensity file (rows or dense grid)"),
                 "period": (_float, 2 * np.pi, "grating period L"),
                 "profile_max": (_float, None, "maximum height of the grating"),
                 "rcond": (_float, 3e-9, "relative singular-value cutoff of the fit"),
                 "tol": (_float, 1e-3, "rank-one defect cap"), **COMMON},
    "estimate-period": {**WAVE, "input": (_str, None, "CSV of x1, re_u, im_u on one line"),
                        "candidate_max": (_float, None, "largest period considered"),
                        "tol": (_float, 1e-6, "relative integer-multiple tolerance"),
                        **COMMON},
    "invert": {"k": WAVE["k"], "angles": (_floats, None, "comma-separated angles"),
               "target": (_str, "", "profile that generates synthetic data"),
               "data": (_str, "", "CSV of angle, x1, re_u, im_u measured at --height"),
               "init": (_str, "", "initial profile file (default: flat at 0)"),
               "height": (_float, None, "measurement line x2 = height"),
               "points": (_int, 40, "synthetic samples per angle on one period"),
               "dof": (_int, 1, "Fourier degree of the reconstruction"),
               "regularization": (_float, 1e-10, "Tikhonov weight"),
               "max_iter": (_int, 40, "iteration cap"),
               "tol": (_float, 1e-20, "misfit stopping threshold"),
               "modes": SOLVER["modes"], "period": (_float, 2 * np.pi, "grating period"),
               **COMMON},
    "fixture": {"nx1": (_int, 64, "field grid columns"), "nx2": (_int, 32, "field grid rows"),
                **COMMON},
}

OPTIONAL = {"strip", "profile_max", "workers"}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qpgrating",
        description="Diffraction gratings: forward solves, waveguide spectra, phase retrieval.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in SPECS.items():
        p = sub.add_parser(name)
        if name == "fixture":
            p.add_argument("which", choices=["counterexample"])
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR", default=".")
        for key, (_, default, help_) in spec.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=help_ + (f" [{default}]" if default not in (None, "") else ""))
    return parser


def _read_config(path, command):
    cfg = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from None
    allowed = {command, "profile"}
    for section in cfg.sections():
        if section not in allowed:
            raise ValidationError(f"unknown config section [{section}] for {command}")
    values = dict(cfg[command]) if cfg.has_section(command) else {}
    profile = None
    if cfg.has_section("profile"):
        profile = "\n".join(f"{k} = {v}" for k, v in cfg["profile"].items())
    return values, profile


def _resolve(command, args):
    spec = SPECS[command]
    raw, profile_text = {}, None
    if args.config:
        raw, profile_text = _read_config(args.config, command)
        unknown = sorted(set(raw) - set(spec))
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for key in spec:
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    params = {}
    for key, (conv, default, _) in spec.items():
        if key in raw:
            params[key] = conv(raw[key])
        elif default is None and key not in OPTIONAL:
            raise ValidationError(f"missing required parameter {key!r}")
        else:
            params[key] = default
    if "workers" in params and params["workers"] is None:
        params["workers"] = os.cpu_count() or 1
    if params.get("workers") is not None and params["workers"] < 1:
        raise ValidationError("workers must be at least 1")
    return params, profile_text


def _load_profile(path, inline=None, required=True):
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read profile {path}: {exc}") from None
        return GratingProfile.from_text(text)
    if inline is not None:
        return GratingProfile.from_text(inline)
    if required:
        raise ValidationError("a profile is required (--profile or [profile] section)")
    return None


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None


def _collocation(params):
    from .forward import CollocationConfig

    return CollocationConfig(params["modes"], params["collocation"] or None, params["tol"])


def _cell(params):
    from .waveguide import WaveguideCell

    kw = {"fourier_order": params["fourier_order"], "poly_count": params["poly_count"]}
    if params["strip"] is not None:
        if params["lower"] or params["upper"]:
            raise ValidationError("give either --strip or --lower/--upper, not both")
        return WaveguideCell.strip(params["strip"], **kw), {"strip_h": params["strip"]}
    if not (params["lower"] and params["upper"]):
        raise ValidationError("waveguide needs --strip h=VALUE or both --lower and --upper")
    lower, upper = _load_profile(params["lower"]), _load_profile(params["upper"])
    return WaveguideCell(lower, upper, **kw), {"lower": params["lower"], "upper": params["upper"]}


def _header(params, skip=()):
    out = {}
    for k, v in params.items():
        if k in skip or v in (None, ""):
            continue
        out[k] = list(v) if isinstance(v, (list, tuple)) else v
    return out


class _Writer:
    """Collects outputs and writes them only once every computation succeeded."""

    def __init__(self, out):
        self.out = Path(out)
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def flush(self):
        self.out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.out / name).write_text(text)
        return sorted(self.files)


# -- subcommands ---------------------------------------------------------------

def _cmd_solve(params, profile_text, w):
    from .forward import solve_dirichlet
    from .rayleigh import PlaneWave

    prof = _load_profile(params["profile"], profile_text)
    wave = PlaneWave(params["k"], params["theta"])
    cfg = _collocation(params)
    sol = solve_dirichlet(prof, wave, cfg)
    head = _header(params, skip=("profile", "workers"))
    head["profile"] = " ".join(prof.to_text().split("\n")).strip()
    w.add("coefficients.csv", qio.coefficient_table(sol.expansion, head, params["drop_below"]))
    w.add("solution.json", qio.dumps(qio.solution_document(sol, head, params["drop_below"])))


def _cmd_multi_solve(params, profile_text, w):
    from .forward import solve_multi_angle
    from .rayleigh import PlaneWave

    prof = _load_profile(params["profile"], profile_text)
    for a in params["angles"]:
        PlaneWave(params["k"], a)
    cfg = _collocation(params)
    sols = solve_multi_angle(prof, params["k"], params["angles"], cfg, params["workers"])
    head = _header(params, skip=("profile", "workers"))
    summary = []
    for i, (a, sol) in enumerate(zip(params["angles"], sols)):
        if isinstance(sol, GratingError):
            summary.append({"theta": a, "error": type(sol).__name__, "message": str(sol)})
            continue
        name = f"coefficients_{i:03d}.csv"
        w.add(name, qio.coefficient_table(sol.expansion, {**head, "theta": a},
                                          params["drop_below"]))
        summary.append({"theta": a, "file": name,
                        **qio.solution_document(sol)["diagnostics"]})
    w.add("summary.json", qio.dumps({"parameters": head, "solves": summary}))
    failed = [s for s in summary if "error" in s]
    if failed and len(failed) == len(summary):
        raise NumericalError("every solve in the batch failed")


def _cmd_dispersion(params, profile_text, w):
    from .waveguide import default_alpha_grid, dispersion_sweep

    cell, desc = _cell(params)
    if params["grid"] < 1 or params["bands"] < 1:
        raise ValidationError("grid and bands must be positive")
    curve = dispersion_sweep(cell, default_alpha_grid(params["grid"]), params["bands"],
                             params["workers"])
    head = {**desc, **_header(params, skip=("strip", "lower", "upper", "workers"))}
    w.add("dispersion.csv", qio.dispersion_table(curve, head))


def _cmd_mu_eig(params, profile_text, w):
    from .waveguide import (assemble_pencil, default_alpha_grid, dispersion_sweep,
                            mu_eigenvalues, mu_from_dispersion)

    if params["method"] not in ("pencil", "dispersion", "both"):
        raise ValidationError("method must be pencil, dispersion or both")
    if not params["k"] > 0:
        raise ValidationError("wavenumber must be positive")
    cell, desc = _cell(params)
    head = {**desc, **_header(params, skip=("strip", "lower", "upper", "workers"))}
    if params["method"] in ("pencil", "both"):
        spec = mu_eigenvalues(assemble_pencil(cell, params["k"]), imag_tol=params["tol"])
        w.add("mu.json", qio.dumps(qio.mu_document(spec.k, spec.real_eigs, spec.residuals,
                                                   spec.complex_eigs, head,
                                                   spec.multiplicities)))
    if params["method"] in ("dispersion", "both"):
        curve = dispersion_sweep(cell, default_alpha_grid(params["grid"]), params["bands"],
                                 params["workers"])
        mus = mu_from_dispersion(curve, params["k"])
        w.add("mu_dispersion.json", qio.dumps(qio.mu_document(params["k"], mus, params=head)))


def _cmd_retrieve(params, profile_text, w):
    import warnings

    from .rayleigh import PlaneWave
    from .retrieval import PhaselessSamples, catalog_frequencies, retrieve_coefficients

    wave = PlaneWave(params["k"], params["theta"])
    x1, x2, vals = qio.read_intensity(_read_text(params["input"]))
    samples = PhaselessSamples(x1, x2, vals, wave, params["period"], params["profile_max"])
    clearance = None
    if params["profile_max"] is not None:
        clearance = float(x2.min() - params["profile_max"])
    catalog = catalog_frequencies(wave.k, wave.theta, params["period"], clearance=clearance)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = retrieve_coefficients(samples, catalog, defect_cap=params["tol"],
                                    rcond=params["rcond"])
    head = _header(params, skip=("workers",))
    w.add("retrieval.json", qio.dumps(qio.retrieval_document(res, head)))


def _cmd_estimate_period(params, profile_text, w):
    from .rayleigh import PlaneWave
    from .retrieval import estimate_period

    PlaneWave(params["k"], params["theta"])
    _, body = qio._split_preamble(_read_text(params["input"]))
    rows = [r.split(",") for r in body]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError:
        raise ValidationError("line data must be numeric x1, re_u, im_u rows") from None
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError("line data must have columns x1, re_u, im_u")
    est = estimate_period(data[:, 0], data[:, 1] + 1j * data[:, 2], params["k"],
                          params["theta"], params["candidate_max"], tol=params["tol"])
    doc = {"parameters": _header(params, skip=("workers",)), "periods": [float(p) for p in est.periods],
           "degenerate": bool(est.degenerate),
           "frequencies": [float(f) for f in est.frequencies],
           "amplitudes": [qio._cplx(a) for a in est.amplitudes]}
    w.add("periods.json", qio.dumps(doc))


def _cmd_invert(params, profile_text, w):
    from .inverse import DataSet, InversionConfig, reconstruct
    from .forward import CollocationConfig

    if bool(params["target"]) == bool(params["data"]):
        raise ValidationError("give exactly one of --target (synthetic) or --data")
    solver = CollocationConfig(params["modes"])
    cfg = InversionConfig(dof=params["dof"], regularization=params["regularization"],
                          max_iter=params["max_iter"], tol=params["tol"], solver=solver,
                          workers=params["workers"])
    init = _load_profile(params["init"], required=False) or GratingProfile.flat(
        0.0, params["period"])
    if params["target"]:
        target = _load_profile(params["target"])
        x1 = np.arange(params["points"]) * target.period / params["points"]
        data = DataSet.synthesize(target, params["k"], params["angles"], x1, params["height"],
                                  solver, params["workers"])
    else:
        raw = np.loadtxt(params["data"], delimiter=",", comments="#", ndmin=2,
                         skiprows=_header_rows(params["data"]))
        angles = params["angles"]
        blocks = [raw[np.isclose(raw[:, 0], a)] for a in angles]
        if any(len(b) == 0 for b in blocks) or len({len(b) for b in blocks}) != 1:
            raise ValidationError("data must hold the same x1 samples for every angle")
        x1 = blocks[0][:, 1]
        vals = np.array([b[:, 2] + 1j * b[:, 3] for b in blocks])
        data = DataSet(params["k"], angles, x1, params["height"], vals, params["period"])
    res = reconstruct(data, init, cfg)
    head = _header(params, skip=("workers",))
    w.add("reconstruction.json", qio.dumps(qio.reconstruction_document(res, head, False)))
    w.add("timing.json", qio.dumps({"wall_clock_s": res.elapsed}))


def _header_rows(path):
    text = _read_text(path)
    for i, line in enumerate(text.splitlines()):
        if line.startswith("#") or not line.strip():
            continue
        try:
            float(line.split(",")[0])
            return 0
        except ValueError:
            return 1
    return 0


def _cmd_fixture(params, profile_text, w):
    from .forward import counterexample_fixture, counterexample_total_field

    if params["nx1"] < 1 or params["nx2"] < 1:
        raise ValidationError("grid sizes must be positive")
    fx = counterexample_fixture()
    h = fx.expansion1.reference_height
    head = {"k": fx.wave.k, "theta": fx.wave.theta, "reference_height": h}
    w.add("coefficients_L2pi.csv", qio.coefficient_table(fx.expansion1, {**head, "period": 2 * np.pi},
                                                         1e-300))
    w.add("coefficients_L4pi.csv", qio.coefficient_table(fx.expansion2, {**head, "period": 4 * np.pi},
                                                         1e-300))
    for name, curve in (("curve_L2pi.csv", fx.profile1), ("curve_L4pi.csv", fx.profile2)):
        rows = "".join(f"{x!r},{y!r}\n" for x, y in curve.vertices)
        w.add(name, qio._preamble({"period": curve.period}) + "x1,x2\n" + rows)
    x1 = np.linspace(0, 4 * np.pi, params["nx1"], endpoint=False)
    x2 = np.linspace(min(fx.profile1.fmin, fx.profile2.fmin), h + 2 * np.pi, params["nx2"])
    X1, X2 = np.meshgrid(x1, x2)
    w.add("field_grid.csv", qio.field_grid(x1, x2, counterexample_total_field(X1, X2),
                                           {**head, "field": "total"}))


COMMANDS = {
    "solve": _cmd_solve, "multi-solve": _cmd_multi_solve, "dispersion": _cmd_dispersion,
    "mu-eig": _cmd_mu_eig, "retrieve": _cmd_retrieve, "estimate-period": _cmd_estimate_period,
    "invert": _cmd_invert, "fixture": _cmd_fixture,
}


def run(argv=None):
    """Execute one subcommand; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        params, profile_text = _resolve(args.command, args)
        w = _Writer(args.out)
        COMMANDS[args.command](params, profile_text, w)
        for name in w.flush():
            print(Path(args.out) / name)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
