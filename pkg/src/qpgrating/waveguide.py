"""Closed periodic waveguide between two graphs: dispersion bands and mu-eigenvalues.

The cell ``{0 < x1 < 2 pi, f1(x1) < x2 < f2(x1)}`` is mapped to the rectangle
``(x1, t) in [0, 2 pi] x [0, 1]`` by ``x2 = f1 + t (f2 - f1)``. Trial functions
are ``exp(i p x1) phi_q(t)`` with ``|p| <= P`` and ``phi_q`` the Legendre
Dirichlet combinations ``L_q - L_{q+2}`` on ``s = 2 t - 1``.

Three k-independent Galerkin matrices are assembled once per cell::

    stiffness[i, j] = int grad phi_j . conj(grad phi_i)
    mass[i, j]      = int phi_j conj(phi_i)
    d1[i, j]        = int d1 phi_j conj(phi_i)     (anti-Hermitian part kept)

from which both the Bloch eigenproblem
``(stiffness - 2 i a d1 + a^2 mass) w = K mass w`` and the quadratic pencil
``stiffness + mu (-2 i k d1) + (mu^2 - 1) k^2 mass`` follow.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg, optimize
from scipy.interpolate import CubicSpline

from .errors import (BandRangeExceeded, CurvesIntersect, LinearizationSingular, ResolutionTooLow,
                     ValidationError)
from .profile import GratingProfile

TWO_PI = 2 * math.pi


def _dirichlet_legendre(Q, s):
    """Values and s-derivatives of ``L_q(s) - L_{q+2}(s)``, ``q = 0..Q-1``."""
    vals = np.empty((len(s), Q))
    ders = np.empty((len(s), Q))
    for q in range(Q):
        c = np.zeros(q + 3)
        c[q] = 1.0
        c[q + 2] = -1.0
        vals[:, q] = legendre.legval(s, c)
        ders[:, q] = legendre.legval(s, legendre.legder(c))
    return vals, ders


@dataclass(frozen=True, eq=False)
class WaveguideCell:
    """One 2 pi-periodic cell between ``lower`` and ``upper``.

    Parameters
    ----------
    fourier_order : int
        Highest Fourier index P in x1 (``2P + 1`` functions).
    poly_count : int
        Number of Legendre-Dirichlet functions Q across the guide.
    """

    lower: GratingProfile
    upper: GratingProfile
    fourier_order: int = 8
    poly_count: int = 20
    x1_quadrature: int | None = None

    def __post_init__(self):
        for prof in (self.lower, self.upper):
            if not math.isclose(prof.period, TWO_PI, rel_tol=1e-12):
                raise ValidationError("waveguide profiles must have period 2 pi")
        if 2 * self.fourier_order + 1 < 3 or self.poly_count < 3:
            raise ResolutionTooLow("need at least 3 basis functions per direction")
        x = np.linspace(0, TWO_PI, 512, endpoint=False)
        gap = self.upper(x) - self.lower(x)
        if gap.min() <= 0:
            raise CurvesIntersect(f"profiles touch or cross (min gap {gap.min():.3g})")

    @classmethod
    def strip(cls, h, **kw):
        return cls(GratingProfile.flat(0.0), GratingProfile.flat(h), **kw)

    @property
    def dimension(self):
        return (2 * self.fourier_order + 1) * self.poly_count

    @property
    def fourier_indices(self):
        return np.arange(-self.fourier_order, self.fourier_order + 1)

    def refined(self, factor=2):
        return WaveguideCell(self.lower, self.upper, factor * self.fourier_order,
                             factor * self.poly_count)

    @cached_property
    def operators(self):
        """``(stiffness, mass, d1)`` Galerkin matrices, basis index ``p * Q + q``."""
        P, Q = self.fourier_order, self.poly_count
        deg = max(self.lower.degree, self.upper.degree)
        n1 = self.x1_quadrature or 4 * (2 * P + 1) + 16 * (deg + 1)
        x1 = np.arange(n1) * TWO_PI / n1
        s, ws = legendre.leggauss(Q + 8)
        t = (s + 1) / 2
        wt = ws / 2

        f1, f2 = self.lower(x1), self.upper(x1)
        df1, df2 = self.lower.derivative(x1), self.upper.derivative(x1)
        d = f2 - f1
        dd = df2 - df1

        p = self.fourier_indices
        E = np.exp(1j * np.outer(x1, p))                # (n1, 2P+1)
        S, dS = _dirichlet_legendre(Q, s)               # (nt, Q)
        dS = 2 * dS                                     # d/dt

        # values on the (x1, t) grid, basis flattened as (p, q)
        phi = np.einsum("jp,lq->jlpq", E, S)
        phi_x = np.einsum("jp,lq->jlpq", 1j * p * E, S)
        phi_t = np.einsum("jp,lq->jlpq", E, dS)
        shear = -(df1[:, None] + t[None, :] * dd[:, None]) / d[:, None]   # dt/dx1
        d1 = phi_x + shear[:, :, None, None] * phi_t
        d2 = phi_t / d[:, None, None, None]
        w = (TWO_PI / n1) * np.outer(d, wt)             # Jacobian-weighted quadrature
        nb = len(p) * Q
        rows = n1 * len(t)
        sw = np.sqrt(w).reshape(rows, 1)
        Phi = sw * phi.reshape(rows, nb)
        D1 = sw * d1.reshape(rows, nb)
        D2 = sw * d2.reshape(rows, nb)
        stiff = D1.conj().T @ D1 + D2.conj().T @ D2
        mass = Phi.conj().T @ Phi
        g1 = Phi.conj().T @ D1
        g1 = (g1 - g1.conj().T) / 2
        stiff = (stiff + stiff.conj().T) / 2
        mass = (mass + mass.conj().T) / 2
        return stiff, mass, g1

    def bloch_matrix(self, alpha):
        stiff, mass, g1 = self.operators
        return stiff - 2j * alpha * g1 + alpha**2 * mass

    def bands_at(self, alpha, J):
        """Lowest J eigenvalues K of the alpha-quasi-periodic Dirichlet Laplacian."""
        if J > self.dimension:
            raise ResolutionTooLow("more bands requested than basis functions")
        _, mass, _ = self.operators
        return linalg.eigh(self.bloch_matrix(alpha), mass, eigvals_only=True,
                           subset_by_index=[0, J - 1])


@dataclass(frozen=True, eq=False)
class QuadraticPencil:
    """``I + mu B + (mu^2 - 1) C`` in coordinates orthonormal for the H inner product.

    ``galerkin`` keeps the raw ``(stiffness, first_order, mass_k2)`` matrices
    so that ``stiffness + mu first_order + (mu^2 - 1) mass_k2`` is the same pencil
    in the trial basis.
    """

    B: np.ndarray
    C: np.ndarray
    k: float
    cell: WaveguideCell | None = None
    galerkin: tuple | None = None

    @property
    def dimension(self):
        return self.B.shape[0]

    def __call__(self, mu):
        return np.eye(self.dimension) + mu * self.B + (mu * mu - 1) * self.C


def assemble_pencil(cell: WaveguideCell, k) -> QuadraticPencil:
    if not k > 0:
        raise ValidationError("wavenumber must be positive")
    stiff, mass, g1 = cell.operators
    Bg = -2j * k * g1
    Cg = k * k * mass
    L = linalg.cholesky(stiff, lower=True)

    def congruence(X):
        Y = linalg.solve_triangular(L, X, lower=True)
        Y = linalg.solve_triangular(L, Y.conj().T, lower=True).conj().T
        return (Y + Y.conj().T) / 2

    return QuadraticPencil(congruence(Bg), congruence(Cg), float(k), cell, (stiff, Bg, Cg))


@dataclass(frozen=True)
class MuSpectrum:
    k: float
    real_eigs: np.ndarray
    multiplicities: np.ndarray
    residuals: np.ndarray
    complex_eigs: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)


def _cluster(values, radius):
    """Group complex values lying within `radius` of a neighbour (single linkage)."""
    order = np.argsort(values.real)
    groups = []
    for i in order:
        for g in groups:
            if np.min(np.abs(values[g] - values[i])) < radius:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def mu_eigenvalues(pencil: QuadraticPencil, imag_tol=1e-8, merge_tol=1e-6,
                   near_real=1e-4, res_tol=1e-8) -> MuSpectrum:
    """mu-eigenvalues in (-1, 1) via the first companion linearisation.

    Near-defective real eigenvalues split into pairs ``mu +- delta`` of size
    ``sqrt(eps)``; values within `merge_tol` are merged before the realness test
    on their mean, and the algebraic multiplicity is the group size.
    Tangential roots perturbed into conjugate pairs with ``|Im mu| < near_real``
    are kept when the pencil is singular at ``Re mu`` to within `res_tol`.
    Values within `merge_tol` of +-1 are treated as lying on the boundary.
    """
    n = pencil.dimension
    B, C = pencil.B, pencil.C
    cmin = linalg.eigvalsh(C, subset_by_index=[0, 0])[0]
    cmax = linalg.eigvalsh(C, subset_by_index=[n - 1, n - 1])[0]
    if cmin <= 1e3 * np.finfo(float).eps * max(cmax, 1.0) * n:
        raise LinearizationSingular(f"mass block numerically singular (min eig {cmin:.3g})")
    I = np.eye(n)
    Z = np.zeros((n, n))
    lhs = np.block([[Z, I], [-(I - C), -B]])
    rhs = np.block([[I, Z], [Z, C]])
    vals = linalg.eigvals(lhs, rhs)
    vals = vals[np.isfinite(vals)]

    def residual(mu):
        lam, vec = linalg.eigh(pencil(mu))
        i = np.argmin(np.abs(lam))
        return abs(lam[i]), vec[:, i]

    found, complex_ = [], []
    for g in _cluster(vals, merge_tol):
        m = vals[g].mean()
        inside = abs(m.real) < 1 - merge_tol
        if inside and abs(m.imag) < imag_tol:
            found.append((m.real, len(g)))
        elif inside and abs(m.imag) < near_real and residual(m.real)[0] < res_tol:
            # a band touching k^2 at an extremum gives a double root; discretisation
            # error delta lifts it to a conjugate pair at +- i sqrt(delta)
            found.append((m.real, len(g)))
        else:
            complex_.extend(vals[g])
    # conjugate halves promoted above sit within merge_tol of each other
    found.sort()
    real, mult = [], []
    for mu, c in found:
        if real and abs(mu - real[-1]) < merge_tol:
            real[-1] = (real[-1] * mult[-1] + mu * c) / (mult[-1] + c)
            mult[-1] += c
        else:
            real.append(mu)
            mult.append(c)
    real = np.array(real)
    mult = np.array(mult, dtype=int)
    residuals, vectors = [], []
    for mu in real:
        r, v = residual(mu)
        residuals.append(r)
        vectors.append(v)
    vectors = np.array(vectors).T if vectors else np.zeros((n, 0))
    return MuSpectrum(pencil.k, real, mult, np.array(residuals), np.array(complex_), vectors)


@dataclass(frozen=True, eq=False)
class DispersionCurve:
    """Sorted band values ``bands[i, j] = K_{j+1}(alpha_grid[i])``."""

    alpha_grid: np.ndarray
    bands: np.ndarray
    cell: WaveguideCell | None = None

    def __post_init__(self):
        a = np.asarray(self.alpha_grid, dtype=float)
        b = np.asarray(self.bands, dtype=float)
        if b.ndim != 2 or b.shape[0] != a.size:
            raise ValidationError("bands must have one row per alpha sample")
        object.__setattr__(self, "alpha_grid", a)
        object.__setattr__(self, "bands", b)

    @property
    def J(self):
        return self.bands.shape[1]


def default_alpha_grid(count=21):
    """``count`` equispaced samples of (-1/2, 1/2], right end included."""
    return -0.5 + np.arange(1, count + 1) / count


def dispersion_sweep(cell: WaveguideCell, alpha_grid, J, workers=1) -> DispersionCurve:
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if J < 1:
        raise ValidationError("need at least one band")
    if np.any(alpha_grid <= -0.5) or np.any(alpha_grid > 0.5):
        raise ValidationError("alpha samples must lie in (-1/2, 1/2]")
    cell.operators  # assemble once before any fan-out
    if workers <= 1:
        rows = [cell.bands_at(a, J) for a in alpha_grid]
    else:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda a: cell.bands_at(a, J), alpha_grid))
    return DispersionCurve(alpha_grid, np.array(rows), cell)


def strip_dispersion(h, alpha, n, m):
    """``(alpha + n)^2 + (m pi / h)^2`` for the straight strip of width h."""
    if m <= 0:
        raise ValidationError("transverse index m must be positive")
    if h <= 0:
        raise ValidationError("strip width must be positive")
    return (alpha + n) ** 2 + (m * math.pi / h) ** 2


def flat_band_scan(curve: DispersionCurve, tol=1e-4):
    """Per-band variation ``max - min`` over the grid; bands below `tol` are flagged."""
    if curve.alpha_grid.size < 11:
        raise ValidationError("flat-band scan needs at least 11 alpha samples")
    variation = curve.bands.max(axis=0) - curve.bands.min(axis=0)
    flagged = [int(j) for j in np.flatnonzero(variation < tol)]
    return {"variation": variation, "flagged": flagged, "tol": tol}


def _wrap(alpha):
    """Representative of alpha modulo 1 in (-1/2, 1/2]."""
    r = alpha - np.floor(alpha + 0.5)
    return np.where(r <= -0.5, r + 1, r)


def mu_from_dispersion(curve: DispersionCurve, k, tol=1e-9, merge_tol=1e-6):
    """mu in (-1, 1) with ``K_j(mu k) = k^2`` for some band j.

    The sampled bands give brackets; roots are then polished on the cell's
    own eigenvalue function when the curve carries its cell, otherwise on a
    periodic cubic interpolant of the samples. Tangential roots (band extrema
    touching ``k^2``) are found by bounded minimisation around sampled extrema.
    """
    if not k > 0:
        raise ValidationError("wavenumber must be positive")
    k2 = k * k
    top = curve.bands[:, -1].min()
    if k2 >= top:
        raise BandRangeExceeded(f"k^2 = {k2:.6g} reaches the top sampled band (min {top:.6g})")

    a0 = curve.alpha_grid
    # nodes: sampled alphas shifted by integers, covering [-k, k]
    shifts = np.arange(-math.ceil(k) - 1, math.ceil(k) + 2)
    nodes = np.concatenate([a0 + s for s in shifts])
    src = np.tile(np.arange(a0.size), shifts.size)
    keep = (nodes > -k) & (nodes < k)
    order = np.argsort(nodes[keep])
    inner, src = nodes[keep][order], src[keep][order]
    nodes = np.concatenate([[-k], inner, [k]])
    roots = []

    for j in range(curve.J):
        if curve.bands[:, j].min() > k2 + 1e-8 * k2:
            continue
        if curve.cell is not None:
            def K(a, j=j):
                return curve.cell.bands_at(float(_wrap(a)), j + 1)[j]
        else:
            order = np.argsort(a0)
            xs = np.concatenate([a0[order], [a0[order][0] + 1]])
            ys = np.concatenate([curve.bands[order, j], [curve.bands[order][0, j]]])
            spline = CubicSpline(xs, ys, bc_type="periodic")

            def K(a, spline=spline, lo=xs[0]):
                return float(spline(lo + np.mod(a - lo, 1.0)))

        def g(a, K=K):
            return K(a) - k2

        gv = np.concatenate([[g(-k)], curve.bands[src, j] - k2, [g(k)]])
        for i in range(len(nodes) - 1):
            if gv[i] == 0 and 0 < i:
                roots.append(nodes[i])
            elif gv[i] * gv[i + 1] < 0:
                roots.append(optimize.brentq(g, nodes[i], nodes[i + 1], xtol=1e-14, rtol=1e-14))
        # extrema that may touch (or dip through, unseen by samples) the level k^2
        for i in range(1, len(nodes) - 1):
            lo, hi = nodes[i - 1], nodes[i + 1]
            for sign in (1, -1):
                if sign * gv[i] > 0 and sign * gv[i] <= sign * gv[i - 1] and \
                        sign * gv[i] <= sign * gv[i + 1]:
                    res = optimize.minimize_scalar(lambda a: sign * g(a), bounds=(lo, hi),
                                                   method="bounded",
                                                   options={"xatol": 1e-12})
                    ext = sign * res.fun
                    if abs(ext) <= tol * max(k2, 1.0):
                        roots.append(res.x)
                    elif sign * ext < 0:
                        for a, b in ((lo, res.x), (res.x, hi)):
                            if g(a) * g(b) < 0:
                                roots.append(optimize.brentq(g, a, b, xtol=1e-14))
    mus = np.sort(np.array(roots) / k)
    # roots within merge_tol of +-1 are boundary values, not interior eigenvalues
    mus = mus[np.abs(mus) < 1 - merge_tol]
    if mus.size == 0:
        return mus
    merged = [[mus[0]]]
    for m in mus[1:]:
        if m - merged[-1][-1] < merge_tol:
            merged[-1].append(m)
        else:
            merged.append([m])
    return np.array([np.mean(g) for g in merged])
