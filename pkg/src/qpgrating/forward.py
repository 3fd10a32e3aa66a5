"""Dirichlet diffraction by graph gratings via Rayleigh-mode collocation.

The scattered field is sought as a truncated Rayleigh series and the
Dirichlet condition is imposed in the least-squares sense at equispaced
points of one period of the profile. This relies on the Rayleigh hypothesis,
so every solve is policed by a conditioning check and a dense boundary
residual.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (AnomalousSpecularOrder, GratingError, IllConditioned, ResidualExceeded,
                     ValidationError)
from .profile import GratingProfile
from .rayleigh import ModeGrid, PlaneWave, RayleighExpansion, energy_balance


@dataclass(frozen=True)
class CollocationConfig:
    """Discretisation and acceptance parameters of a forward solve.

    ``collocation_count`` defaults to twice the number of modes.
    """

    mode_count: int = 16
    collocation_count: int | None = None
    residual_tolerance: float = 1e-6
    condition_cap: float = 1e12
    dense_factor: int = 4

    def __post_init__(self):
        if self.mode_count < 0:
            raise ValidationError("mode_count must be non-negative")
        if self.collocation_count is None:
            object.__setattr__(self, "collocation_count", 2 * (2 * self.mode_count + 1))
        if self.collocation_count < 2 * self.mode_count + 1:
            raise ValidationError("need at least as many collocation points as modes")
        if self.dense_factor < 4:
            raise ValidationError("dense residual check needs at least 4x oversampling")

    @property
    def oversampling(self):
        return self.collocation_count / (2 * self.mode_count + 1)


@dataclass(frozen=True, eq=False)
class ForwardSolution:
    expansion: RayleighExpansion
    residual: float
    energy_defect: float
    condition: float
    wave: PlaneWave
    valid: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def diagnostics(self):
        return {"residual": self.residual, "energy_defect": self.energy_defect,
                "condition": self.condition}


def _assemble(profile, wave, grid, M):
    x = np.arange(M) * profile.period / M
    y = profile(x)
    G = np.exp(1j * np.outer(x, grid.alpha) + 1j * np.outer(y, grid.beta))
    rhs = -wave(x, y)
    return G, rhs


def boundary_residual(solution: ForwardSolution, profile, wave=None, dense_count=None):
    """Sup of ``|u^i + u^s|`` over equispaced points on one period of the curve."""
    wave = solution.wave if wave is None else wave
    if dense_count is None:
        dense_count = 4 * len(solution.expansion.coeffs) * 2
    x = np.linspace(0, profile.period, dense_count, endpoint=False)
    y = profile(x)
    u = wave(x, y) + solution.expansion(x, y, warn=False)
    return float(np.max(np.abs(u)))


def solve_dirichlet(profile: GratingProfile, wave: PlaneWave, config=CollocationConfig(),
                    amplitude=1.0, check=True) -> ForwardSolution:
    """Rayleigh coefficients of the scattered field for a Dirichlet graph grating.

    Parameters
    ----------
    amplitude : complex
        Incident amplitude; the unit default is the package convention.
    check : bool
        Raise :class:`ResidualExceeded` when the dense residual misses the
        tolerance. With ``check=False`` the solution is returned flagged invalid.
    """
    N = config.mode_count
    grid = ModeGrid.for_wave(wave, profile.period, N)
    G, rhs = _assemble(profile, wave, grid, config.collocation_count)
    rhs = amplitude * rhs
    scale = np.linalg.norm(G, axis=0)
    Gs = G / scale
    coef, _, _, sv = linalg.lstsq(Gs, rhs, lapack_driver="gelsd")
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > config.condition_cap:
        raise IllConditioned(f"collocation matrix condition {cond:.3g} exceeds cap "
                             f"{config.condition_cap:.3g}")
    coef = coef / scale
    expansion = RayleighExpansion(grid, coef, False, profile.fmax)
    try:
        _, defect = energy_balance(RayleighExpansion(grid, coef / amplitude))
    except AnomalousSpecularOrder:
        defect = math.nan
    dense = config.dense_factor * config.collocation_count
    x = np.linspace(0, profile.period, dense, endpoint=False)
    y = profile(x)
    res = float(np.max(np.abs(amplitude * wave(x, y) + expansion(x, y, warn=False))))
    valid = res < config.residual_tolerance * max(1.0, abs(amplitude))
    sol = ForwardSolution(expansion, res, defect, cond, wave, valid)
    if check and not valid:
        raise ResidualExceeded(f"boundary residual {res:.3g} above tolerance "
                               f"{config.residual_tolerance:.3g}")
    return sol


def solve_multi_angle(profile, k, angles, config=CollocationConfig(), workers=1):
    """One solve per angle, in input order.

    Failures are returned in place of the solution instead of aborting the batch.
    """
    angles = [float(a) for a in angles]
    if len(set(angles)) != len(angles):
        raise ValidationError("incident angles must be pairwise distinct")
    waves = [PlaneWave(k, a) for a in angles]

    def one(wave):
        try:
            return solve_dirichlet(profile, wave, config)
        except GratingError as exc:
            return exc

    if workers <= 1:
        return [one(w) for w in waves]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, waves))


# -- closed-form counterexample ------------------------------------------------

SQ3 = math.sqrt(3.0)


def counterexample_total_field(x1, x2):
    """``2 cos(x1 + sqrt3 x2) - 2 cos(2 x1)``: total field for k = 2, theta = -pi/6."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return 2 * np.cos(x1 + SQ3 * x2) - 2 * np.cos(2 * x1) + 0j


@dataclass(frozen=True, eq=False)
class PolygonalCurve:
    """Periodic piecewise-linear graph through ``vertices`` (one period, closed by repetition)."""

    vertices: np.ndarray
    period: float

    def __call__(self, x1):
        v = self.vertices
        xs = np.concatenate([v[:, 0], [v[0, 0] + self.period]])
        ys = np.concatenate([v[:, 1], [v[0, 1]]])
        x = np.asarray(x1, dtype=float)
        xr = v[0, 0] + np.mod(x - v[0, 0], self.period)
        return np.interp(xr, xs, ys)

    @property
    def fmax(self):
        return float(self.vertices[:, 1].max())

    @property
    def fmin(self):
        return float(self.vertices[:, 1].min())

    def sample(self, count, periods=1, rng=None):
        """Points on the curve: uniform abscissae, or random ones if `rng` is given."""
        span = periods * self.period
        if rng is None:
            x = np.linspace(0, span, count, endpoint=False)
        else:
            x = rng.uniform(0, span, count)
        x = x + self.vertices[0, 0]
        return np.column_stack([x, self(x)])


def grid_vertex(m, n):
    """Intersection of ``3 x1 + sqrt3 x2 = 2 m pi`` and ``-x1 + sqrt3 x2 = 2 n pi``."""
    x1 = (m - n) * math.pi / 2
    return x1, (2 * n * math.pi + x1) / SQ3


def _zigzag(runs):
    # runs: +r climbs r grid cells along the shallow family (n fixed, m += r),
    # -r drops r cells along the steep family (m fixed, n -= r)
    m = n = 0
    verts = [grid_vertex(0, 0)]
    for r in runs[:-1]:
        if r > 0:
            m += r
        else:
            n += r
        verts.append(grid_vertex(m, n))
    return np.array(verts)


@dataclass(frozen=True, eq=False)
class CounterexampleFixture:
    profile1: PolygonalCurve
    profile2: PolygonalCurve
    wave: PlaneWave
    expansion1: RayleighExpansion
    expansion2: RayleighExpansion


def counterexample_fixture() -> CounterexampleFixture:
    """Two zigzag gratings (minimal periods 2 pi and 4 pi) sharing one scattered field."""
    wave = PlaneWave(2.0, -math.pi / 6)
    c1 = PolygonalCurve(_zigzag([3, -1]), 2 * math.pi)
    c2 = PolygonalCurve(_zigzag([2, -1, 4, -1]), 4 * math.pi)
    h = max(c1.fmax, c2.fmax)
    e1 = RayleighExpansion.from_dict(wave, 2 * math.pi, {2: 1, -1: -1, 3: -1}, N=3,
                                     reference_height=h)
    e2 = RayleighExpansion.from_dict(wave, 4 * math.pi, {4: 1, -2: -1, 6: -1}, N=6,
                                     reference_height=h)
    return CounterexampleFixture(c1, c2, wave, e1, e2)
