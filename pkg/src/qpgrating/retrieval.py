"""Phase retrieval of Rayleigh coefficients from near-field intensity, and
period estimation from phased line data.

Above the grating the total field is ``u = sum_m A_m e_m`` over the orders
and the incident index ``inc`` (``A_inc = 1``), so

    |u|^2 = sum_{m,n} A_m conj(A_n) exp(i (alpha_m - alpha_n) x1
                                        + i (beta_m - conj(beta_n)) x2).

Fitting the intensity on this exponential dictionary recovers the products
``A_m conj(A_n)`` class by class; the cross terms with the incident wave give
``A_n`` directly whenever the class of ``(n, inc)`` holds nothing else, which
is the case unless ``k sin(theta) L / pi`` is an integer.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, signal

from .errors import (ExcludedAngleWarning, FrequenciesIncommensurate, NyquistViolated,
                     RankOneDefectHigh, ValidationError)
from .rayleigh import ModeGrid, PlaneWave, RayleighExpansion, beta_branch, _check_period

INC = "inc"
# evanescent orders whose amplitude factor exp(-|beta| * clearance) is below
# exp(-EVANESCENT_CUTOFF) cannot be seen in the data
EVANESCENT_CUTOFF = 23.0
# orders whose amplitude factor exp(-Im beta_n h) at the lowest data row is
# below this are carried by the fit but not claimed as recovered
RESOLVED_VISIBILITY = 1e-6


def is_excluded_angle(k, theta, L, tol=1e-9):
    """True when ``k sin(theta) L / pi`` is an integer (within `tol`)."""
    r = k * math.sin(theta) * L / math.pi
    return abs(r - round(r)) < tol


def check_alpha_collision(k, theta, L, window, tol=1e-10):
    """Whether some ``alpha_n`` in ``window=(lo, hi)`` (or ``alpha_inc``) equals ``-alpha_inc``."""
    PlaneWave(k, theta)
    _check_period(L)
    alpha = k * math.sin(theta)
    n = np.arange(window[0], window[1] + 1)
    alphas = np.concatenate([alpha + 2 * np.pi * n / L, [alpha]])
    return bool(np.any(np.abs(alphas + alpha) < tol * k))


@dataclass(frozen=True, eq=False)
class FrequencyCatalog:
    """Pairwise intensity frequencies of a Rayleigh field.

    Attributes
    ----------
    modes : list
        Mode labels, integers of the window followed by ``"inc"``.
    pairs : ndarray, shape (P, 2)
        Positions ``(m, n)`` into `modes` of each catalogued product.
    freq_x1, freq_x2 : ndarray
        ``alpha_m - alpha_n`` (real) and ``beta_m - conj(beta_n)`` (complex).
    classes : list of list of int
        Partition of pair indices into equal-frequency classes.
    """

    k: float
    theta: float
    period: float
    N: int
    modes: list
    alpha: np.ndarray
    beta: np.ndarray
    pairs: np.ndarray
    freq_x1: np.ndarray
    freq_x2: np.ndarray
    classes: list
    class_of: np.ndarray
    excluded_angle: bool
    near_collisions: list = field(default_factory=list)
    clearance: float | None = None

    @property
    def inc(self):
        return len(self.modes) - 1

    def pair_index(self, m, n):
        """Index of the pair with labels ``(m, n)`` (``"inc"`` allowed)."""
        pm = self.modes.index(m)
        pn = self.modes.index(n)
        hit = np.flatnonzero((self.pairs[:, 0] == pm) & (self.pairs[:, 1] == pn))
        if hit.size == 0:
            raise KeyError((m, n))
        return int(hit[0])

    def frequency(self, m, n):
        i = self.pair_index(m, n)
        return self.freq_x1[i], self.freq_x2[i]

    def reference_class(self, n):
        """Labels of all pairs sharing the frequency of ``(n, inc)``."""
        cls = self.classes[self.class_of[self.pair_index(n, INC)]]
        return [(self.modes[self.pairs[i, 0]], self.modes[self.pairs[i, 1]]) for i in cls]

    def reference_singletons(self):
        """Map order -> whether its ``(n, inc)`` class is a singleton."""
        out = {}
        for n in self.modes[:-1]:
            try:
                i = self.pair_index(n, INC)
            except KeyError:
                continue
            out[n] = len(self.classes[self.class_of[i]]) == 1
        return out


def _group(keys, tol):
    """Partition rows of `keys` (real, shape (P, 3)) into classes of equal rows within `tol`."""
    P = len(keys)
    order = np.lexsort(keys.T[::-1])
    parent = np.arange(P)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(P):
        i = order[a]
        for b in range(a + 1, P):
            j = order[b]
            if keys[j, 0] - keys[i, 0] > tol:
                break
            if np.all(np.abs(keys[j] - keys[i]) <= tol):
                parent[find(j)] = find(i)
    roots = np.array([find(i) for i in range(P)])
    labels, class_of = np.unique(roots, return_inverse=True)
    classes = [[] for _ in labels]
    for i, c in enumerate(class_of):
        classes[c].append(i)
    return classes, class_of


def catalog_frequencies(k, theta, L, N=None, clearance=None, tol=1e-10, near_tol=1e-4,
                        cutoff=EVANESCENT_CUTOFF):
    """Build the frequency catalog for orders ``[-N, N]`` plus the incident wave.

    Parameters
    ----------
    N : int, optional
        Window half-width. When omitted it is the smallest window holding every
        order with ``|beta_n| * clearance < cutoff`` (propagating orders plus
        two if `clearance` is also omitted).
    clearance : float, optional
        Height of the lowest data row above the profile maximum. Pairs whose
        decay ``Im(beta_m - conj beta_n) * clearance`` reaches `cutoff` are
        left out of the catalog.
    """
    wave = PlaneWave(k, theta)
    _check_period(L)
    alpha0 = wave.alpha
    if N is None:
        N = 0
        while True:
            a = alpha0 + 2 * np.pi * np.array([N + 1, -(N + 1)]) / L
            b = np.sqrt(np.maximum(a * a - k * k, 0))
            if clearance is None:
                if np.all(np.abs(a) > k) and N >= 2 + int(k * L / (2 * np.pi)) + 1:
                    break
            elif np.all(np.abs(a) > k) and np.all(b * clearance >= cutoff):
                break
            N += 1
    grid = ModeGrid.for_wave(wave, L, N)
    modes = [int(n) for n in grid.n] + [INC]
    alpha = np.concatenate([grid.alpha, [alpha0]])
    beta = np.concatenate([grid.beta, [wave.beta_inc + 0j]])
    M = len(modes)
    pm, pn = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    pm, pn = pm.ravel(), pn.ravel()
    fx1 = alpha[pm] - alpha[pn]
    fx2 = beta[pm] - np.conj(beta[pn])
    if clearance is not None:
        keep = fx2.imag * clearance < cutoff
        pm, pn, fx1, fx2 = pm[keep], pn[keep], fx1[keep], fx2[keep]
    keys = np.column_stack([fx1, fx2.real, fx2.imag])
    classes, class_of = _group(keys, tol * k)
    near = []
    if near_tol:
        # reference pairs whose frequency sits close to (but is not) another class
        reps = np.array([c[0] for c in classes])
        rk = keys[reps]
        for ci, c in enumerate(classes):
            if not any(pn[i] == M - 1 and pm[i] != M - 1 for i in c):
                continue
            dist = np.max(np.abs(rk - rk[ci]), axis=1)
            dist[ci] = np.inf
            j = int(np.argmin(dist))
            if dist[j] < near_tol * k:
                near.append((ci, j, float(dist[j])))
    return FrequencyCatalog(float(k), float(theta), float(L), N, modes, alpha, beta,
                            np.column_stack([pm, pn]), fx1, fx2, classes, class_of,
                            is_excluded_angle(k, theta, L), near, clearance)


@dataclass(frozen=True, eq=False)
class PhaselessSamples:
    """Intensity ``|u|^2`` on the tensor grid ``x1 x x2`` (values shaped ``(len(x2), len(x1))``)."""

    x1: np.ndarray
    x2: np.ndarray
    intensity: np.ndarray
    wave: PlaneWave
    period: float | None = None
    profile_max: float | None = None

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=float)
        x2 = np.asarray(self.x2, dtype=float)
        v = np.asarray(self.intensity, dtype=float)
        if v.shape != (x2.size, x1.size):
            raise ValidationError("intensity must be shaped (len(x2), len(x1))")
        if np.any(v < 0):
            raise ValidationError("intensities must be non-negative")
        if self.profile_max is not None and x2.min() <= self.profile_max:
            raise ValidationError("samples must lie strictly above the profile")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "intensity", v)

    @classmethod
    def from_field(cls, field, wave, x1, x2, period=None, profile_max=None):
        """Sample ``|field(x1, x2)|^2`` on the tensor grid."""
        X1, X2 = np.meshgrid(x1, x2)
        return cls(x1, x2, np.abs(field(X1, X2)) ** 2, wave, period, profile_max)

    @classmethod
    def from_rows(cls, rows, wave, period=None, profile_max=None):
        """From ``(x1, x2, intensity)`` rows covering a full tensor grid."""
        rows = np.asarray(rows, dtype=float)
        x1 = np.unique(rows[:, 0])
        x2 = np.unique(rows[:, 1])
        if len(rows) != x1.size * x2.size:
            raise ValidationError("rows do not form a complete tensor grid")
        v = np.full((x2.size, x1.size), np.nan)
        v[np.searchsorted(x2, rows[:, 1]), np.searchsorted(x1, rows[:, 0])] = rows[:, 2]
        if np.isnan(v).any():
            raise ValidationError("duplicate grid rows")
        return cls(x1, x2, v, wave, period, profile_max)


@dataclass(frozen=True, eq=False)
class RetrievalResult:
    expansion: RayleighExpansion
    rank_one_defect: float
    excluded_angle: bool
    collisions: dict
    fit_residual: float
    reference_height: float
    class_values: np.ndarray = field(repr=False, default=None)
    visibility: np.ndarray = field(repr=False, default=None)

    @property
    def coefficients(self):
        return self.expansion.as_dict()

    @property
    def resolved(self):
        """Mask over the window of orders visible above :data:`RESOLVED_VISIBILITY`."""
        return self.visibility >= RESOLVED_VISIBILITY

    @property
    def unique(self):
        return not self.excluded_angle and not self.collisions


def _nyquist(samples, catalog):
    for axis, coords, freqs in (("x1", samples.x1, np.abs(catalog.freq_x1)),
                                ("x2", samples.x2, np.abs(catalog.freq_x2.real))):
        if coords.size < 2:
            raise NyquistViolated(f"need at least two samples along {axis}")
        step = np.max(np.diff(np.sort(coords)))
        fmax = freqs.max()
        if fmax * step >= np.pi:
            raise NyquistViolated(f"{axis} spacing {step:.3g} does not resolve frequency {fmax:.3g}")
    span = np.ptp(samples.x1)
    step = np.min(np.diff(np.sort(samples.x1)))
    if span + step < catalog.period * (1 - 1e-9):
        raise NyquistViolated("x1 samples must cover at least one period")


def _polish(samples, catalog, coeffs, h):
    N = catalog.N
    n = np.arange(-N, N + 1)
    alpha, beta = catalog.alpha[:-1], catalog.beta[:-1]
    X1, X2 = np.meshgrid(samples.x1, samples.x2)
    x1, x2 = X1.ravel(), X2.ravel()
    E = np.exp(1j * np.outer(x1, alpha) + 1j * np.outer(x2 - h, beta))
    wave = samples.wave
    inc = wave(x1, x2)
    data = samples.intensity.ravel()
    a0 = coeffs * np.exp(1j * beta * h)
    m = n.size

    def field(p):
        return inc + E @ (p[:m] + 1j * p[m:])

    def resid(p):
        return np.abs(field(p)) ** 2 - data

    def jac(p):
        g = np.conj(field(p))[:, None] * E
        return np.hstack([2 * g.real, -2 * g.imag])

    out = optimize.least_squares(resid, np.concatenate([a0.real, a0.imag]), jac=jac,
                                 method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    a = out.x[:m] + 1j * out.x[m:]
    if np.linalg.norm(out.fun) > np.linalg.norm(resid(np.concatenate([a0.real, a0.imag]))):
        return coeffs
    return a * np.exp(-1j * beta * h)


def retrieve_coefficients(samples: PhaselessSamples, catalog: FrequencyCatalog,
                          defect_cap=1e-3, rcond=3e-9, polish=True) -> RetrievalResult:
    """Fit the intensity on the catalog dictionary and read off ``A_n = c(n, inc)``.

    Dictionary atoms are referenced to the lowest sample row ``h`` so their
    scale is O(1); the rank-one defect compares fitted class values with the
    products of the recovered coefficients at that same reference.

    Products of two evanescent orders on opposite sides of the spectrum have
    nearly equal decay rates, so the dictionary is numerically rank deficient;
    singular values below ``rcond`` (relative, column-normalised) are dropped.
    Deep evanescent coefficients are therefore only determined up to their
    visibility ``exp(-Im beta_n h)`` in the data.

    With ``polish`` the linear estimate seeds a Gauss-Newton fit of the
    single-field model ``|u_inc + sum A_n e_n|^2`` to the same data, which
    removes the redundant product unknowns (skipped at excluded angles, where
    the answer is not unique anyway).
    """
    if samples.period is not None and not math.isclose(samples.period, catalog.period):
        raise ValidationError("sample period and catalog period differ")
    _nyquist(samples, catalog)
    if catalog.excluded_angle:
        warnings.warn("k sin(theta) L / pi is an integer: coefficients are not unique",
                      ExcludedAngleWarning, stacklevel=2)
    h = samples.x2.min()
    reps = np.array([c[0] for c in catalog.classes])
    f1 = catalog.freq_x1[reps]
    f2 = catalog.freq_x2[reps]
    X1, X2 = np.meshgrid(samples.x1, samples.x2)
    x1, x2 = X1.ravel(), X2.ravel()
    A = np.exp(1j * np.outer(x1, f1) + 1j * np.outer(x2 - h, f2))
    scale = np.linalg.norm(A, axis=0)
    data = samples.intensity.ravel()
    sol, *_ = linalg.lstsq(A / scale, data.astype(complex), cond=rcond, lapack_driver="gelsd")
    c_ref = sol / scale
    fit_residual = float(np.linalg.norm(A @ c_ref - data) / np.linalg.norm(data))

    N = catalog.N
    coeffs = np.zeros(2 * N + 1, dtype=complex)
    collisions = {}
    for n in catalog.modes[:-1]:
        try:
            i = catalog.pair_index(n, INC)
        except KeyError:
            continue
        cls = catalog.class_of[i]
        coeffs[n + N] = c_ref[cls] * np.exp(-1j * catalog.freq_x2[i] * h)
        if len(catalog.classes[cls]) > 1:
            collisions[n] = catalog.reference_class(n)

    if polish and not catalog.excluded_angle:
        coeffs = _polish(samples, catalog, coeffs, h)

    amp = np.concatenate([coeffs, [1.0]])
    pm, pn = catalog.pairs[:, 0], catalog.pairs[:, 1]
    prod = amp[pm] * np.conj(amp[pn]) * np.exp(1j * catalog.freq_x2 * h)
    pred = np.zeros(len(catalog.classes), dtype=complex)
    np.add.at(pred, catalog.class_of, prod)
    grid = ModeGrid.for_wave(samples.wave, catalog.period, N)
    visibility = np.exp(-grid.beta.imag * h)
    # classes built only from resolved orders; products of invisible orders
    # are the near-collinear atoms the truncated fit leaves undetermined
    seen = np.concatenate([visibility >= RESOLVED_VISIBILITY, [True]])
    bad = np.zeros(len(catalog.classes), dtype=bool)
    np.logical_or.at(bad, catalog.class_of, ~(seen[pm] & seen[pn]))
    keep = ~bad
    defect = float(np.linalg.norm((c_ref - pred)[keep]) / np.linalg.norm(c_ref[keep]))
    result = RetrievalResult(RayleighExpansion(grid, coeffs, False, h), defect,
                             catalog.excluded_angle, collisions, fit_residual, h, c_ref,
                             visibility)
    if defect > defect_cap and not catalog.excluded_angle:
        raise RankOneDefectHigh(f"rank-one defect {defect:.3g} exceeds {defect_cap:.3g}")
    return result


def measurement_rows(h, depth, count, rows="chebyshev"):
    """Heights ``x2`` of a phaseless measurement grid over ``[h, h + depth]``."""
    j = np.arange(count)
    if rows == "chebyshev":
        return h + depth * (1 - np.cos(np.pi * j / (count - 1))) / 2
    if rows == "uniform":
        return h + j * depth / count
    raise ValidationError(f"unknown row spacing {rows!r}")


def roundtrip(profile, wave, config=None, clearance=2.0, nx1=64, nx2=64, depth=None,
              rows="chebyshev"):
    """Forward solve, synthesise ``|u|^2`` above the profile, retrieve, compare.

    Returns a dict with ``coefficient_error`` (max of ``|A_n - A_n_true|`` over
    the resolved orders), ``coefficient_error_all`` (over the whole window),
    ``field_error`` (every order weighted by ``|exp(i beta_n h)|``, i.e. the
    mismatch of each mode at the lowest data row),
    ``phase_error`` over propagating orders, and the retrieval diagnostics.
    When the angle is excluded no discrepancy is claimed.

    Rows default to Chebyshev spacing over ``[h, h + depth]``; clustering rows
    near ``h`` conditions the fast-decaying evanescent atoms better than an
    equispaced grid of the same size.
    """
    from .forward import CollocationConfig, solve_dirichlet

    config = CollocationConfig() if config is None else config
    L = profile.period
    if is_excluded_angle(wave.k, wave.theta, L):
        return {"excluded_angle": True, "unique": False}
    sol = solve_dirichlet(profile, wave, config)
    h = profile.fmax + clearance
    depth = 2 * (2 * np.pi / wave.k) if depth is None else depth
    x1 = np.arange(nx1) * L / nx1
    x2 = measurement_rows(h, depth, nx2, rows)
    total = sol.expansion.with_incident()
    samples = PhaselessSamples.from_field(total, wave, x1, x2, L, profile.fmax)
    catalog = catalog_frequencies(wave.k, wave.theta, L, clearance=clearance)
    res = retrieve_coefficients(samples, catalog)
    N = catalog.N
    true = np.array([sol.expansion.coefficient(n) if abs(n) <= sol.expansion.grid.N else 0
                     for n in range(-N, N + 1)])
    got = res.expansion.coeffs
    grid = res.expansion.grid
    err = np.abs(got - true)
    prop = grid.propagating & (np.abs(true) > 1e-12)
    phase = np.angle(got[prop] / true[prop]) if prop.any() else np.zeros(0)
    return {
        "excluded_angle": False,
        "unique": res.unique,
        "coefficient_error": float(np.max(err[res.resolved])),
        "coefficient_error_all": float(np.max(err)),
        "field_error": float(np.max(err * res.visibility)),
        "propagating_error": float(np.max(np.abs(got - true)[grid.propagating])),
        "phase_error": float(np.max(np.abs(phase))) if phase.size else 0.0,
        "rank_one_defect": res.rank_one_defect,
        "fit_residual": res.fit_residual,
        "window": N,
        "solution": sol,
        "retrieval": res,
    }


# -- period estimation -----------------------------------------------------------

@dataclass(frozen=True)
class PeriodEstimate:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    periods: np.ndarray
    degenerate: bool


def _refine_frequencies(x, v, freqs):
    """Variable-projection least squares for ``v ~ sum_j a_j exp(i w_j x)``.

    Returns frequencies, amplitudes and the standard error of each frequency
    (residual variance times the diagonal of the inverse normal matrix).
    """
    def resid(w):
        E = np.exp(1j * np.outer(x, w))
        a, *_ = np.linalg.lstsq(E, v, rcond=None)
        r = E @ a - v
        return np.concatenate([r.real, r.imag])

    out = optimize.least_squares(resid, freqs, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    w = out.x
    E = np.exp(1j * np.outer(x, w))
    a, *_ = np.linalg.lstsq(E, v, rcond=None)
    dof = max(out.fun.size - w.size, 1)
    var = 2 * out.cost / dof
    cov = np.linalg.pinv(out.jac.T @ out.jac)
    return w, a, np.sqrt(np.maximum(var * np.diag(cov), 0))


def estimate_period(x1, values, k, theta, candidate_max, rel_threshold=1e-4, tol=1e-6,
                    pad=8):
    """Periods compatible with phased line data ``u^s(x1, h)``.

    The demodulated trace ``exp(-i alpha x1) u^s`` is a sum of harmonics
    ``2 pi n / L``. Peaks of its zero-padded Blackman-Harris periodogram above
    `rel_threshold` of the strongest one seed a joint least-squares frequency
    fit; a period L is returned when every non-zero frequency is an integer
    multiple of ``2 pi / L`` within `tol` (relative) or five standard errors of
    its fitted value, whichever is larger, and is then re-estimated from all
    harmonics by weighted least squares. Data holding only the zero
    frequency is flagged ``degenerate``: every period fits.
    """
    x = np.asarray(x1, dtype=float)
    v = np.asarray(values, dtype=complex) * np.exp(-1j * k * np.sin(theta) * x)
    if np.ptp(x) < candidate_max * (1 - 1e-9):
        raise ValidationError("samples must span at least candidate_max")
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-9):
        raise ValidationError("period estimation needs equispaced samples")
    dx = dx[0]
    n = x.size
    nfft = pad * n
    mag = np.abs(np.fft.fft(v * signal.windows.blackmanharris(n), nfft))
    w_grid = 2 * np.pi * np.fft.fftfreq(nfft, dx)
    local = (mag >= np.roll(mag, 1)) & (mag >= np.roll(mag, -1)) & (mag > rel_threshold * mag.max())
    peaks = sorted(np.flatnonzero(local), key=lambda i: -mag[i])
    width = 4 * (2 * np.pi / (n * dx))          # main-lobe half-width
    chosen = []
    for i in peaks:
        if all(abs(w_grid[i] - w_grid[j]) > width for j in chosen):
            chosen.append(i)
    w0 = w_grid[chosen]
    w, a, err = _refine_frequencies(x, v, w0)
    strong = np.abs(a) > 1e-3 * rel_threshold * np.abs(a).max()
    w, a, err = w[strong], a[strong], err[strong]
    order = np.argsort(w)
    w, a, err = w[order], a[order], err[order]
    scale = np.abs(w).max() if w.size else 1.0
    nz = np.abs(w) > np.maximum(tol * max(scale, 1.0), 5 * err)
    nonzero, nerr = w[nz], err[nz]
    if nonzero.size == 0:
        return PeriodEstimate(w, a, np.zeros(0), True)
    # the base harmonic is taken from the best-determined frequency
    j = np.argmin(nerr / np.abs(nonzero))
    periods = []
    base = abs(nonzero[j])
    span = candidate_max * (1 + tol + 5 * nerr[j] / base)
    wt = 1 / np.maximum(nerr, 1e-300) ** 2
    for q in range(1, 1 + int(span * base / (2 * np.pi))):
        L = 2 * np.pi * q / base
        r = nonzero * L / (2 * np.pi)
        # weak harmonics carry larger frequency errors: allow five standard errors
        slack = np.maximum(tol * np.maximum(1.0, np.abs(r)), 5 * nerr * L / (2 * np.pi))
        m = np.round(r)
        if np.all(np.abs(r - m) < slack) and np.all(m != 0):
            # weighted fit of omega_j = 2 pi m_j / L over all harmonics
            periods.append(2 * np.pi * np.sum(wt * m * m) / np.sum(wt * m * nonzero))
    if not periods:
        raise FrequenciesIncommensurate("no period up to candidate_max fits all detected frequencies")
    return PeriodEstimate(w, a, np.array(periods), False)
