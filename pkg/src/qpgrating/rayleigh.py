"""Mode arithmetic and Rayleigh-series evaluation above a periodic grating.

Conventions: the incident wave is ``exp(i k x.d)`` with ``d = (sin t, -cos t)``
and amplitude 1. Scattered modes are ``exp(i alpha_n x1 + i beta_n x2)`` with
``alpha_n = k sin t + 2 pi n / L`` and ``beta_n`` on the upward branch (real and
non-negative for propagating orders, positive imaginary for evanescent ones).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AnomalousSpecularOrder, BelowReferenceHeightWarning, ValidationError

# |k^2 - alpha_n^2| below ANOMALY_RTOL * k^2 counts as a Rayleigh anomaly.
ANOMALY_RTOL = 1e-12


def _check_wave(k, theta):
    if not np.isfinite(k) or k <= 0:
        raise ValidationError(f"wavenumber must be positive, got {k!r}")
    if not (-np.pi / 2 < theta < np.pi / 2):
        raise ValidationError(f"incident angle must lie in (-pi/2, pi/2), got {theta!r}")


def _check_period(L):
    if not np.isfinite(L) or L <= 0:
        raise ValidationError(f"period must be positive, got {L!r}")


def beta_branch(k, alpha):
    """Vertical wavenumbers for horizontal wavenumbers `alpha` (array-valued).

    Uses the two-case formula rather than a complex square root so the branch
    is fixed exactly; near-grazing orders are snapped to ``beta = 0``.
    """
    alpha = np.asarray(alpha, dtype=float)
    gap = k * k - alpha * alpha
    beta = np.where(gap >= 0, np.sqrt(np.abs(gap)) + 0j, 1j * np.sqrt(np.abs(gap)))
    beta = np.where(np.abs(gap) < ANOMALY_RTOL * k * k, 0j, beta)
    return beta


def mode_params(k, theta, L, n):
    """Return ``(alpha_n, beta_n)`` for order `n`."""
    _check_wave(k, theta)
    _check_period(L)
    alpha_n = k * np.sin(theta) + 2 * np.pi * n / L
    beta_n = complex(beta_branch(k, alpha_n))
    return float(alpha_n), beta_n


@dataclass(frozen=True)
class PlaneWave:
    """Incident plane wave with unit amplitude."""

    k: float
    theta: float

    def __post_init__(self):
        _check_wave(self.k, self.theta)

    @property
    def alpha(self):
        return self.k * np.sin(self.theta)

    @property
    def beta_inc(self):
        return -self.k * np.cos(self.theta)

    @property
    def A_inc(self):
        return 1.0 + 0j

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return np.exp(1j * self.alpha * x1 + 1j * self.beta_inc * x2)


@dataclass(frozen=True)
class ModeGrid:
    """Mode parameters over the symmetric window ``[-N, N]``."""

    k: float
    alpha0: float
    period: float
    N: int

    def __post_init__(self):
        if self.k <= 0:
            raise ValidationError("wavenumber must be positive")
        _check_period(self.period)
        if self.N < 0 or int(self.N) != self.N:
            raise ValidationError("window half-width must be a non-negative integer")

    @classmethod
    def for_wave(cls, wave: PlaneWave, period, N):
        return cls(wave.k, wave.alpha, period, int(N))

    @property
    def n(self):
        return np.arange(-self.N, self.N + 1)

    @property
    def alpha(self):
        return self.alpha0 + 2 * np.pi * self.n / self.period

    @property
    def beta(self):
        return beta_branch(self.k, self.alpha)

    @property
    def propagating(self):
        return np.abs(self.alpha) <= self.k * (1 + ANOMALY_RTOL)

    @property
    def anomalous(self):
        return np.abs(self.k**2 - self.alpha**2) < ANOMALY_RTOL * self.k**2

    def index(self, n):
        """Array position of order `n`."""
        if abs(n) > self.N:
            raise KeyError(n)
        return int(n) + self.N


def propagating_set(k, theta, L, window):
    """Propagating orders and Rayleigh-anomaly orders within ``window=(lo, hi)``.

    Returns two sorted lists of integers.
    """
    _check_wave(k, theta)
    _check_period(L)
    lo, hi = window
    n = np.arange(lo, hi + 1)
    alpha = k * np.sin(theta) + 2 * np.pi * n / L
    gap = k * k - alpha * alpha
    anomalous = np.abs(gap) < ANOMALY_RTOL * k * k
    propagating = (gap >= 0) | anomalous
    return n[propagating].tolist(), n[anomalous].tolist()


@dataclass(frozen=True)
class FieldSamples:
    points: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValidationError("points and values must have equal length")


@dataclass(frozen=True, eq=False)
class RayleighExpansion:
    """Truncated Rayleigh series.

    Parameters
    ----------
    grid : ModeGrid
    coeffs : ndarray
        Complex amplitudes ``A_n`` ordered as ``grid.n``.
    includes_incident : bool
        Whether the unit incident wave is part of the represented field.
    reference_height : float
        Lowest height where the series is claimed to be valid.
    """

    grid: ModeGrid
    coeffs: np.ndarray
    includes_incident: bool = False
    reference_height: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (2 * self.grid.N + 1,):
            raise ValidationError("coefficient vector does not match the mode window")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_dict(cls, wave: PlaneWave, period, coeffs: dict, N=None,
                  includes_incident=False, reference_height=0.0):
        if N is None:
            N = max((abs(int(n)) for n in coeffs), default=0)
        grid = ModeGrid.for_wave(wave, period, N)
        c = np.zeros(2 * N + 1, dtype=complex)
        for n, a in coeffs.items():
            c[grid.index(n)] = a
        return cls(grid, c, includes_incident, reference_height)

    @property
    def wave(self):
        theta = np.arcsin(np.clip(self.grid.alpha0 / self.grid.k, -1, 1))
        return PlaneWave(self.grid.k, theta)

    def coefficient(self, n):
        return self.coeffs[self.grid.index(n)]

    def as_dict(self, tol=0.0):
        return {int(n): a for n, a in zip(self.grid.n, self.coeffs) if abs(a) > tol}

    def with_incident(self, flag=True):
        return RayleighExpansion(self.grid, self.coeffs, flag, self.reference_height)

    def __call__(self, x1, x2, warn=True):
        """Evaluate the truncated series at broadcastable coordinates."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if warn and np.any(x2 < self.reference_height):
            warnings.warn("evaluating a Rayleigh series below its reference height",
                          BelowReferenceHeightWarning, stacklevel=2)
        g = self.grid
        shape = np.broadcast(x1, x2).shape
        x1f = np.broadcast_to(x1, shape).ravel()
        x2f = np.broadcast_to(x2, shape).ravel()
        phase = np.exp(1j * np.outer(x1f, g.alpha) + 1j * np.outer(x2f, g.beta))
        out = phase @ self.coeffs
        if self.includes_incident:
            k = g.k
            beta_inc = -np.sqrt(k * k - g.alpha0 * g.alpha0)
            out = out + np.exp(1j * g.alpha0 * x1f + 1j * beta_inc * x2f)
        return out.reshape(shape)


def evaluate_field(expansion: RayleighExpansion, points, allow_below=False) -> FieldSamples:
    """Sum the truncated series at ``points`` (shape ``(P, 2)``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    values = expansion(pts[:, 0], pts[:, 1], warn=not allow_below)
    meta = {"k": expansion.grid.k, "alpha": expansion.grid.alpha0,
            "period": expansion.grid.period, "includes_incident": expansion.includes_incident}
    return FieldSamples(pts, values, meta)


def tail_majorant(expansion: RayleighExpansion):
    """Default bound on ``|A_n exp(i beta_n h0)|`` for orders outside the window.

    The in-window L2 mean of the scattered trace at the reference height
    (Parseval); adequate once the window already holds the bulk of the field.
    """
    g = expansion.grid
    trace = expansion.coeffs * np.exp(1j * g.beta * expansion.reference_height)
    return float(np.sqrt(np.sum(np.abs(trace) ** 2)))


def tail_bound(expansion: RayleighExpansion, h, coeff_bound=None):
    """Upper bound on the modes outside the window at any height ``>= h``.

    Parameters
    ----------
    coeff_bound : float, optional
        Uniform bound ``M`` on ``|A_n exp(i beta_n h0)|`` for out-of-window
        orders, ``h0`` the reference height. Defaults to :func:`tail_majorant`.

    Notes
    -----
    Each side uses ``Im beta_n >= Im beta_edge + j * 2 pi / L`` for the j-th
    order past the edge, giving the geometric sum
    ``M exp(-b_edge dh) / (1 - exp(-2 pi dh / L))``.
    """
    h0 = expansion.reference_height
    if h <= h0:
        raise ValidationError("tail bound needs h above the reference height")
    M = tail_majorant(expansion) if coeff_bound is None else float(coeff_bound)
    if M == 0:
        return 0.0
    g = expansion.grid
    dh = h - h0
    ratio = np.exp(-2 * np.pi * dh / g.period)
    total = 0.0
    for edge in (g.N + 1, -(g.N + 1)):
        a = g.alpha0 + 2 * np.pi * edge / g.period
        b = np.sqrt(max(a * a - g.k * g.k, 0.0))
        if abs(a) <= g.k:
            # propagating orders outside the window: no decay guarantee
            return np.inf
        total += np.exp(-b * dh) / (1 - ratio)
    return M * total


def truncation_for_tolerance(k, theta, L, margin, tol=1e-10, n_max=4096):
    """Smallest N whose unit-majorant tail bound at height margin is below `tol`."""
    wave = PlaneWave(k, theta)
    for N in range(0, n_max):
        exp = RayleighExpansion(ModeGrid.for_wave(wave, L, N), np.zeros(2 * N + 1))
        if tail_bound(exp, margin, coeff_bound=1.0) < tol:
            return N
    raise ValidationError("no truncation below n_max meets the tolerance")


def energy_balance(expansion: RayleighExpansion):
    """Efficiencies ``(beta_n / beta_0) |A_n|^2`` and the defect ``|sum - 1|``.

    Grazing orders carry no flux and get efficiency 0.
    """
    g = expansion.grid
    if g.anomalous[g.index(0)]:
        raise AnomalousSpecularOrder("beta_0 = 0: specular order is grazing")
    beta0 = float(g.beta[g.index(0)].real)
    eff = {}
    beta = g.beta
    for i, n in enumerate(g.n):
        if g.propagating[i]:
            eff[int(n)] = 0.0 if g.anomalous[i] else float(beta[i].real / beta0 * abs(expansion.coeffs[i]) ** 2)
    defect = abs(sum(eff.values()) - 1.0)
    return eff, defect


def quasiperiodicity_defect(sampler, L, alpha, probes):
    """``max |u(x1 + L, x2) - exp(i alpha L) u(x1, x2)|`` over probe points."""
    p = np.atleast_2d(np.asarray(probes, dtype=float))
    u0 = np.asarray(sampler(p[:, 0], p[:, 1]))
    u1 = np.asarray(sampler(p[:, 0] + L, p[:, 1]))
    return float(np.max(np.abs(u1 - np.exp(1j * alpha * L) * u0)))
