"""Text serialisation: coefficient / dispersion tables, JSON reports, intensity grids.

Tables are CSV with optional ``# key = value`` preamble lines recording the
parameters that produced them, followed by a mandatory header row. Floats are
written with ``repr`` so files round-trip exactly and identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import ValidationError
from .rayleigh import PlaneWave, RayleighExpansion

COEFF_HEADER = ["n", "re_A", "im_A", "alpha_n", "re_beta_n", "im_beta_n", "propagating",
                "anomalous"]


def _num(x):
    return repr(float(x))


def _preamble(params):
    return "".join(f"# {k} = {_plain(v)}\n" for k, v in (params or {}).items())


def _plain(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_plain(x) for x in v)
    return str(v)


def _split_preamble(text):
    params, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            if "=" in line:
                key, val = line[1:].split("=", 1)
                params[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    return params, body


def coefficient_rows(expansion: RayleighExpansion, tol=0.0):
    """Table rows: the incident wave (index ``inc``), then orders with ``|A_n| > tol``."""
    g = expansion.grid
    beta_inc = -np.sqrt(g.k ** 2 - g.alpha0 ** 2)
    rows = [["inc", 1.0, 0.0, float(g.alpha0), float(beta_inc), 0.0, 1, 0]]
    for i, n in enumerate(g.n):
        a = expansion.coeffs[i]
        if abs(a) <= tol:
            continue
        b = g.beta[i]
        rows.append([int(n), float(a.real), float(a.imag), float(g.alpha[i]), float(b.real),
                     float(b.imag), int(g.propagating[i]), int(g.anomalous[i])])
    return rows


def coefficient_table(expansion: RayleighExpansion, params=None, tol=0.0):
    """CSV coefficient table with header row and optional parameter preamble."""
    buf = io.StringIO()
    buf.write(_preamble(params))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COEFF_HEADER)
    for r in coefficient_rows(expansion, tol):
        w.writerow([_num(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def read_coefficient_table(text):
    """Parse a coefficient table into ``(params, {n: A_n}, incident_row)``."""
    params, body = _split_preamble(text)
    rows = list(csv.reader(body))
    if not rows or [c.strip() for c in rows[0]] != COEFF_HEADER:
        raise ValidationError("coefficient table header missing or malformed")
    coeffs, inc = {}, None
    for r in rows[1:]:
        r = [c.strip() for c in r]
        if len(r) != len(COEFF_HEADER):
            raise ValidationError(f"bad coefficient row {r!r}")
        if r[0] == "inc":
            inc = r
            continue
        coeffs[int(r[0])] = complex(float(r[1]), float(r[2]))
    return params, coeffs, inc


def expansion_from_table(text, k, theta, period):
    _, coeffs, _ = read_coefficient_table(text)
    return RayleighExpansion.from_dict(PlaneWave(k, theta), period, coeffs)


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


def solution_document(solution, params=None, tol=0.0):
    """JSON-ready dict: parameters, coefficient table rows and a diagnostics block."""
    return {
        "parameters": dict(params or {}),
        "columns": COEFF_HEADER,
        "coefficients": coefficient_rows(solution.expansion, tol),
        "diagnostics": {
            "residual": float(solution.residual),
            "energy_defect": _finite(solution.energy_defect),
            "condition": float(solution.condition),
            "valid": bool(solution.valid),
        },
    }


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else None


def dispersion_table(curve, params=None):
    buf = io.StringIO()
    buf.write(_preamble(params))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha"] + [f"K_{j + 1}" for j in range(curve.J)])
    for a, row in zip(curve.alpha_grid, curve.bands):
        w.writerow([_num(a)] + [_num(v) for v in row])
    return buf.getvalue()


def read_dispersion_table(text):
    """Return ``(params, alpha, bands)``."""
    params, body = _split_preamble(text)
    rows = list(csv.reader(body))
    head = [c.strip() for c in rows[0]]
    if not head or head[0] != "alpha" or any(h != f"K_{j}" for j, h in enumerate(head[1:], 1)):
        raise ValidationError("dispersion table header must be alpha, K_1, ..., K_J")
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    return params, data[:, 0], data[:, 1:]


def mu_document(k, real_mu, residuals=(), complex_mu=(), params=None, multiplicities=None):
    doc = {
        "k": float(k),
        "real_mu": [float(m) for m in real_mu],
        "residuals": [float(r) for r in residuals],
        "complex_mu": [_cplx(z) for z in complex_mu],
    }
    if multiplicities is not None:
        doc["multiplicities"] = [int(m) for m in multiplicities]
    if params:
        doc["parameters"] = dict(params)
    return doc


def retrieval_document(result, params=None):
    g = result.expansion.grid
    return {
        "parameters": dict(params or {}),
        "coefficients": {str(int(n)): _cplx(a) for n, a in zip(g.n, result.expansion.coeffs)},
        "resolved": [int(n) for n in g.n[result.resolved]],
        "rank_one_defect": float(result.rank_one_defect),
        "fit_residual": float(result.fit_residual),
        "reference_height": float(result.reference_height),
        "excluded_angle": bool(result.excluded_angle),
        "unique": bool(result.unique),
        "collisions": {str(n): [[str(a), str(b)] for a, b in members]
                       for n, members in result.collisions.items()},
    }


def reconstruction_document(result, params=None, include_time=True):
    doc = {
        "parameters": dict(params or {}),
        "initial": _profile_dict(result.initial),
        "final": _profile_dict(result.profile),
        "misfit_history": [float(f) for f in result.history],
        "steps": [{k: (float(v) if isinstance(v, (float, np.floating)) else v)
                   for k, v in s.items()} for s in result.steps],
        "converged": bool(result.converged),
        "per_angle": [{k: _finite(v) for k, v in d.items()} for d in result.diagnostics],
    }
    if include_time:
        doc["wall_clock_s"] = float(result.elapsed)
    return doc


def _profile_dict(p):
    return {"period": float(p.period), "offset": float(p.offset),
            "cos": [float(c) for c in p.cos], "sin": [float(s) for s in p.sin]}


def dumps(doc):
    """Deterministic JSON text."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- intensity ingestion ---------------------------------------------------------

def read_intensity(text):
    """Parse intensity data into ``(x1, x2, values)`` with values shaped ``(nx2, nx1)``.

    Accepts either comma-separated ``x1, x2, intensity`` rows (an optional
    header row is skipped) or a dense block whose first line is
    ``nx1 nx2 x1min x1max x2min x2max`` followed by ``nx2`` lines of ``nx1``
    whitespace-separated values (x1 and x2 grids inclusive of both ends).
    """
    _, body = _split_preamble(text)
    if not body:
        raise ValidationError("empty intensity file")
    first = body[0].split()
    if "," not in body[0] and len(first) == 6:
        try:
            nx1, nx2 = int(first[0]), int(first[1])
            lims = [float(v) for v in first[2:]]
        except ValueError:
            raise ValidationError("malformed dense-grid header") from None
        vals = np.array([[float(v) for v in line.split()] for line in body[1:]])
        if vals.shape != (nx2, nx1):
            raise ValidationError(f"dense grid is {vals.shape}, header says {(nx2, nx1)}")
        x1 = np.linspace(lims[0], lims[1], nx1)
        x2 = np.linspace(lims[2], lims[3], nx2)
        return x1, x2, vals
    rows = list(csv.reader(body))
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    data = np.array([[float(c) for c in r] for r in rows])
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError("intensity rows must be x1, x2, intensity")
    x1 = np.unique(data[:, 0])
    x2 = np.unique(data[:, 1])
    if len(data) != x1.size * x2.size:
        raise ValidationError("rows do not form a complete tensor grid")
    v = np.full((x2.size, x1.size), np.nan)
    v[np.searchsorted(x2, data[:, 1]), np.searchsorted(x1, data[:, 0])] = data[:, 2]
    if np.isnan(v).any():
        raise ValidationError("duplicate grid rows")
    return x1, x2, v


def intensity_rows(x1, x2, values, params=None):
    buf = io.StringIO()
    buf.write(_preamble(params))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "intensity"])
    for j, b in enumerate(x2):
        for i, a in enumerate(x1):
            w.writerow([_num(a), _num(b), _num(values[j, i])])
    return buf.getvalue()


def field_grid(x1, x2, values, params=None):
    """CSV ``x1, x2, re_u, im_u`` rows of a complex field on a tensor grid."""
    buf = io.StringIO()
    buf.write(_preamble(params))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "re_u", "im_u"])
    for j, b in enumerate(x2):
        for i, a in enumerate(x1):
            z = values[j, i]
            w.writerow([_num(a), _num(b), _num(z.real), _num(z.imag)])
    return buf.getvalue()
