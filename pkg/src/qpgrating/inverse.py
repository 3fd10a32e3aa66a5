"""Multi-angle profile reconstruction from phased near-field data.

The unknowns are the Fourier coefficients of the profile. Misfit is the sum of
squared total-field mismatches on a measurement segment above the grating,
plus a Tikhonov term; minimisation is Levenberg-Marquardt with a
central-difference Jacobian.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, ValidationError
from .forward import CollocationConfig, solve_dirichlet
from .profile import GratingProfile
from .rayleigh import PlaneWave


@dataclass(frozen=True)
class InversionConfig:
    """Discretisation and step control of a reconstruction.

    Parameters
    ----------
    dof : int
        Fourier degree D of the reconstructed profile (``2D + 1`` unknowns).
    regularization : float
        Tikhonov weight on the squared coefficient vector.
    max_iter : int
    damping, damping_up, damping_down : float
        Initial Levenberg-Marquardt parameter and its update factors.
    tol : float
        Stop once the misfit drops below this value.
    grad_tol : float
        Stop once the misfit gradient norm drops below this value.
    step_tol : float
        Stop once an accepted step is this small relative to the parameters.
    pred_tol : float
        Stop once the predicted misfit decrease of a trial step falls below
        this fraction of the misfit.
    stall_window : int
        Consecutive rejected trial steps tolerated before :class:`Diverged`.
    fd_step : float
        Relative central-difference step.
    """

    dof: int = 1
    regularization: float = 1e-10
    max_iter: int = 40
    damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.3
    tol: float = 1e-20
    grad_tol: float = 1e-9
    step_tol: float = 1e-12
    pred_tol: float = 1e-13
    stall_window: int = 8
    fd_step: float = 1e-6
    solver: CollocationConfig = field(default_factory=CollocationConfig)
    workers: int = 1

    def __post_init__(self):
        if self.dof < 0:
            raise ValidationError("dof must be non-negative")
        if self.dof > self.solver.mode_count:
            raise ValidationError("dof may not exceed the forward-solver mode count")
        if self.regularization < 0 or self.damping < 0:
            raise ValidationError("weights must be non-negative")
        if self.damping_up <= 1 or not 0 < self.damping_down < 1:
            raise ValidationError("damping factors must satisfy up > 1 > down > 0")
        if self.max_iter < 0 or self.stall_window < 1:
            raise ValidationError("iteration limits must be positive")


@dataclass(frozen=True, eq=False)
class DataSet:
    """Phased total-field samples on the segment ``x2 = height`` for several angles.

    ``values`` is shaped ``(len(angles), len(x1))``.
    """

    k: float
    angles: tuple
    x1: np.ndarray
    height: float
    values: np.ndarray
    period: float = 2 * np.pi

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        if len(set(angles)) != len(angles):
            raise ValidationError("incident angles must be pairwise distinct")
        for a in angles:
            PlaneWave(self.k, a)
        x1 = np.asarray(self.x1, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (len(angles), x1.size):
            raise ValidationError("values must be shaped (angles, points)")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "values", v)

    @classmethod
    def synthesize(cls, profile: GratingProfile, k, angles, x1, height,
                   config=CollocationConfig(), workers=1):
        """Data generated by the forward solver for `profile`."""
        if height <= profile.fmax:
            raise ValidationError("measurement segment must lie above the profile")
        fields, _ = _model(profile, k, angles, np.asarray(x1, float), height, config, workers)
        return cls(k, angles, x1, height, fields, profile.period)

    @property
    def waves(self):
        return [PlaneWave(self.k, a) for a in self.angles]


def _model(profile, k, angles, x1, height, config, workers=1):
    x2 = np.full_like(x1, height)

    def one(theta):
        sol = solve_dirichlet(profile, PlaneWave(k, theta), config, check=False)
        return sol.expansion.with_incident()(x1, x2, warn=False), sol.diagnostics

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, angles))
    else:
        out = [one(a) for a in angles]
    return np.array([u for u, _ in out]), [d for _, d in out]


def _residual(params, data, config):
    prof = GratingProfile.from_params(data.period, params, config.dof)
    u, diag = _model(prof, data.k, data.angles, data.x1, data.height, config.solver,
                     config.workers)
    r = (u - data.values).ravel()
    reg = np.sqrt(config.regularization) * np.asarray(params, float)
    return np.concatenate([r.real, r.imag, reg]), diag


def _fd_steps(params, rel):
    return rel * np.maximum(np.abs(params), 1.0)


def misfit(profile: GratingProfile, data: DataSet, config=InversionConfig()):
    """Return ``(value, gradient)`` with respect to ``profile.params(config.dof)``.

    value = sum over angles and points of ``|u_model - u_data|^2`` plus
    ``regularization * |p|^2``; the gradient is a central difference with
    step ``fd_step * max(|p_j|, 1)``.
    """
    p = profile.params(config.dof)

    def value(q):
        r, _ = _residual(q, data, config)
        return float(r @ r)

    f0 = value(p)
    steps = _fd_steps(p, config.fd_step)
    grad = np.empty_like(p)
    for j, s in enumerate(steps):
        e = np.zeros_like(p)
        e[j] = s
        grad[j] = (value(p + e) - value(p - e)) / (2 * s)
    return f0, grad


def _jacobian(p, data, config):
    steps = _fd_steps(p, config.fd_step)
    cols = []
    for j, s in enumerate(steps):
        e = np.zeros_like(p)
        e[j] = s
        rp, _ = _residual(p + e, data, config)
        rm, _ = _residual(p - e, data, config)
        cols.append((rp - rm) / (2 * s))
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    profile: GratingProfile
    initial: GratingProfile
    history: list
    steps: list
    converged: bool
    elapsed: float
    diagnostics: list

    @property
    def iterations(self):
        """Number of accepted steps."""
        return len(self.history) - 1


def reconstruct(data: DataSet, init: GratingProfile, config=InversionConfig()):
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of the profile to `data`.

    Deterministic for identical inputs. Accepted steps strictly decrease the
    misfit; `history` holds the misfit after each accepted step (entry 0 is the
    initial value) and `steps` one record per trial step.

    Raises
    ------
    Diverged
        When `stall_window` consecutive trial steps fail to decrease the misfit
        before any stopping criterion is met.
    """
    if not np.isclose(init.period, data.period):
        raise ValidationError("initial profile period differs from the data period")
    if init.fmax >= data.height:
        raise ValidationError("initial profile reaches the measurement segment")
    t0 = time.perf_counter()
    p = init.params(config.dof)
    r, diag = _residual(p, data, config)
    f = float(r @ r)
    history, steps = [f], []
    lam = config.damping
    rejected = 0
    converged = f <= config.tol
    it = 0
    while not converged and it < config.max_iter:
        J = _jacobian(p, data, config)
        g = J.T @ r
        if 2 * np.linalg.norm(g) <= config.grad_tol:
            converged = True
            break
        H = J.T @ J
        while True:
            A = H + lam * np.diag(np.maximum(np.diag(H), 1e-300))
            try:
                dp = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                dp = -np.linalg.lstsq(A, g, rcond=None)[0]
            # predicted decrease of the local quadratic model; below rounding of f
            # no step can make progress, so the iterate is stationary to working precision
            pred = -2 * g @ dp - dp @ H @ dp
            if pred <= config.pred_tol * f:
                converged = True
                break
            trial = p + dp
            ok = GratingProfile.from_params(data.period, trial, config.dof).fmax < data.height
            if ok:
                rt, dt = _residual(trial, data, config)
                ft = float(rt @ rt)
            else:
                ft = np.inf
            accepted = ft < f
            steps.append({"iteration": it, "damping": lam, "step_norm": float(np.linalg.norm(dp)),
                          "misfit": ft, "accepted": bool(accepted)})
            if accepted:
                small = np.linalg.norm(dp) <= config.step_tol * (1 + np.linalg.norm(p))
                p, r, f, diag = trial, rt, ft, dt
                history.append(f)
                lam *= config.damping_down
                rejected = 0
                converged = f <= config.tol or small
                break
            lam *= config.damping_up
            rejected += 1
            if rejected >= config.stall_window:
                raise Diverged(f"misfit failed to decrease over {rejected} trial steps")
        if converged:
            break
        it += 1
    prof = GratingProfile.from_params(data.period, p, config.dof)
    return ReconstructionResult(prof, init, history, steps, converged,
                                time.perf_counter() - t0, diag)


def linear_independence_gram(profile: GratingProfile, angles, segment, sample_count, k,
                             config=CollocationConfig()):
    """Smallest singular value of the row-normalised Gram matrix of total fields.

    Parameters
    ----------
    segment : tuple
        ``(x1_start, x1_end, height)`` of a horizontal segment above the profile.
    sample_count : int
        Points P on the segment; must be at least the number of angles.
    """
    a, b, h = segment
    angles = [float(t) for t in angles]
    if sample_count < len(angles):
        raise ValidationError("need at least as many samples as angles")
    if h <= profile.fmax:
        raise ValidationError("segment must lie above the profile")
    x1 = np.linspace(a, b, sample_count)
    U = np.array([solve_dirichlet(profile, PlaneWave(k, t), config).expansion.with_incident()(
        x1, np.full_like(x1, h)) for t in angles])
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    G = U @ U.conj().T
    return float(np.linalg.svd(G, compute_uv=False).min())
