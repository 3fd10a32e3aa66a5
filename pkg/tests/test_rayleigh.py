import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpgrating.errors import AnomalousSpecularOrder, BelowReferenceHeightWarning, ValidationError
from qpgrating.rayleigh import (ModeGrid, PlaneWave, RayleighExpansion, beta_branch,
                                energy_balance, evaluate_field, mode_params, propagating_set,
                                quasiperiodicity_defect, tail_bound, truncation_for_tolerance)
from qpgrating.forward import counterexample_fixture, counterexample_total_field

SQ3 = math.sqrt(3)
ks = st.floats(0.1, 10)
thetas = st.floats(-1.5, 1.5)
periods = st.floats(0.5, 20)


# -- mode_params ---------------------------------------------------------------

def test_mode_params_counterexample_orders():
    a, b = mode_params(2, -math.pi / 6, 2 * math.pi, 2)
    assert a == pytest.approx(1, abs=1e-14) and b == pytest.approx(SQ3, abs=1e-14)
    a, b = mode_params(2, -math.pi / 6, 2 * math.pi, -1)
    assert a == pytest.approx(-2, abs=1e-14) and b == 0


def test_mode_params_normal_incidence_and_evanescent():
    a, b = mode_params(1.7, 0.0, 3.0, 0)
    assert a == 0 and b == 1.7
    a, b = mode_params(1, 0, 2 * math.pi, 2)
    assert a == 2 and b == pytest.approx(1j * SQ3, abs=1e-15)
    assert b.real == 0


@pytest.mark.parametrize("args", [(0, 0.1, 1, 0), (-1, 0.1, 1, 0), (1, math.pi / 2, 1, 0),
                                  (1, -2.0, 1, 0), (1, 0.1, 0, 0), (1, 0.1, -3, 0)])
def test_mode_params_rejects(args):
    with pytest.raises(ValidationError):
        mode_params(*args)


@settings(max_examples=200, deadline=None)
@given(ks, thetas, periods, st.integers(-40, 40))
def test_beta_branch_and_dispersion(k, theta, L, n):
    a, b = mode_params(k, theta, L, n)
    assert b.real >= 0 and b.imag >= 0
    assert b.real == 0 or b.imag == 0
    assert abs(a * a + b * b - k * k) <= 1e-12 * max(k * k, a * a)


@settings(max_examples=100, deadline=None)
@given(ks, thetas, periods)
def test_finitely_many_real_betas(k, theta, L):
    g = ModeGrid.for_wave(PlaneWave(k, theta), L, 200)
    assert np.all(g.alpha == PlaneWave(k, theta).alpha + 2 * np.pi * g.n / L)
    assert np.count_nonzero(g.beta.imag == 0) <= math.ceil(k * L / math.pi) + 1


def test_anomaly_snaps_to_zero():
    # rounding leaves k^2 - alpha^2 ~ 1e-16, which a plain sqrt turns into ~1e-8
    assert beta_branch(2.0, 2 * math.sin(-math.pi / 6) - 1.0) == 0


# -- PlaneWave -------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(ks, thetas)
def test_plane_wave_invariants(k, theta):
    w = PlaneWave(k, theta)
    assert abs(w.alpha ** 2 + w.beta_inc ** 2 - k * k) < 1e-12 * k * k
    assert w.beta_inc < 0
    assert w.A_inc == 1


# -- propagating_set -----------------------------------------------------------------

def test_propagating_set_examples():
    prop, anom = propagating_set(2, -math.pi / 6, 2 * math.pi, (-5, 5))
    assert prop == [-1, 0, 1, 2, 3] and anom == [-1, 3]
    assert propagating_set(0.5, 0, 2 * math.pi, (-5, 5)) == ([0], [])
    assert propagating_set(1, 0, 2 * math.pi, (-5, 5))[1] == [-1, 1]


# -- evaluate_field --------------------------------------------------------------------

def test_counterexample_expansion_reproduces_closed_form():
    fx = counterexample_fixture()
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-10, 10, 200), rng.uniform(3, 8, 200)])
    total = fx.expansion1.with_incident()
    got = evaluate_field(total, pts).values
    want = counterexample_total_field(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(got - want)) < 1e-12


def test_flat_mirror_vanishes_on_mirror():
    e = RayleighExpansion.from_dict(PlaneWave(1.3, 0.4), 2 * math.pi, {0: -1}, N=3,
                                    includes_incident=True)
    x = np.linspace(-5, 5, 50)
    assert np.max(np.abs(e(x, np.zeros_like(x)))) < 1e-15


def test_single_evanescent_mode_decay():
    w = PlaneWave(1.0, 0.2)
    e = RayleighExpansion.from_dict(w, 2 * math.pi, {3: 0.7 - 0.2j})
    b = e.grid.beta[e.grid.index(3)]
    assert b.real == 0 and b.imag > 0
    v1, v2 = abs(e(0.3, 1.0)), abs(e(0.3, 2.5))
    assert v2 == pytest.approx(v1 * math.exp(-b.imag * 1.5), rel=1e-13)


def test_below_reference_height_warns():
    e = RayleighExpansion.from_dict(PlaneWave(1.0, 0.2), 2 * math.pi, {0: -1},
                                    reference_height=1.0)
    with pytest.warns(BelowReferenceHeightWarning):
        evaluate_field(e, [[0.0, 0.5]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evaluate_field(e, [[0.0, 0.5]], allow_below=True)
        evaluate_field(e, [[0.0, 1.5]])


@settings(max_examples=50, deadline=None)
@given(ks, thetas, st.integers(-5, 5), st.complex_numbers(max_magnitude=10, allow_nan=False,
                                                          allow_infinity=False))
def test_single_mode_equals_exponential(k, theta, n, a):
    w = PlaneWave(k, theta)
    e = RayleighExpansion.from_dict(w, 2.5, {n: a}, N=6)
    x1, x2 = np.array([0.1, 1.7, -3.0]), np.array([0.0, 0.4, 1.1])
    an, bn = mode_params(k, theta, 2.5, n)
    want = a * np.exp(1j * an * x1 + 1j * bn * x2)
    assert np.allclose(e(x1, x2, warn=False), want, rtol=1e-12, atol=1e-12 * abs(a))


def test_field_samples_metadata_and_lengths():
    e = RayleighExpansion.from_dict(PlaneWave(1.0, 0.2), 2 * math.pi, {0: -1})
    s = evaluate_field(e, [[0, 1], [1, 2], [2, 3]])
    assert len(s.points) == len(s.values) == 3
    assert s.metadata["k"] == 1.0


# -- tail_bound ------------------------------------------------------------------------

def test_tail_bound_zero_when_no_tail():
    e = RayleighExpansion.from_dict(PlaneWave(1.0, 0.2), 2 * math.pi, {0: -1, 2: 0.1}, N=6)
    assert tail_bound(e, 1.0, coeff_bound=0.0) == 0.0


def test_tail_bound_dominates_brute_force_geometric_tail():
    k, theta, L, N, r = 1.2, 0.3, 2 * math.pi, 6, 0.6
    w = PlaneWave(k, theta)
    big = 4 * N
    coeffs = {n: r ** abs(n) for n in range(-big, big + 1)}
    inner = RayleighExpansion.from_dict(w, L, {n: c for n, c in coeffs.items() if abs(n) <= N},
                                        N=N, reference_height=0.0)
    g = ModeGrid.for_wave(w, L, big)
    out = np.abs(g.n) > N
    M = max(coeffs[int(n)] for n in g.n[out])
    prev = np.inf
    for h in (0.2, 0.5, 1.0, 2.0):
        direct = np.sum(np.abs(np.array([coeffs[int(n)] for n in g.n[out]])
                               * np.exp(1j * g.beta[out] * h)))
        bound = tail_bound(inner, h, coeff_bound=M)
        # closed-form geometric sum with the exact edge decay
        b_edge = [math.sqrt((w.alpha + 2 * math.pi * e / L) ** 2 - k * k) for e in (N + 1, -N - 1)]
        closed = M * sum(math.exp(-b * h) for b in b_edge) / (1 - math.exp(-2 * math.pi * h / L))
        assert direct <= bound * (1 + 1e-12)
        assert bound == pytest.approx(closed, rel=1e-12)
        assert bound <= prev
        prev = bound


def test_tail_bound_default_majorant_and_rejections():
    w = PlaneWave(1.0, 0.2)
    e = RayleighExpansion.from_dict(w, 2 * math.pi, {0: -1, 1: 0.2}, N=4, reference_height=1.0)
    assert 0 < tail_bound(e, 2.0) < tail_bound(e, 1.5)
    with pytest.raises(ValidationError):
        tail_bound(e, 1.0)
    small = RayleighExpansion.from_dict(w, 2 * math.pi, {0: -1}, N=0)
    assert tail_bound(small, 1.0) == np.inf    # order +-1 still propagate


def test_truncation_for_tolerance():
    N = truncation_for_tolerance(1.5, 0.3, 2 * math.pi, 1.0, tol=1e-10)
    w = PlaneWave(1.5, 0.3)
    e = RayleighExpansion(ModeGrid.for_wave(w, 2 * math.pi, N), np.zeros(2 * N + 1))
    assert tail_bound(e, 1.0, coeff_bound=1.0) < 1e-10
    e1 = RayleighExpansion(ModeGrid.for_wave(w, 2 * math.pi, N - 1), np.zeros(2 * N - 1))
    assert tail_bound(e1, 1.0, coeff_bound=1.0) >= 1e-10


# -- energy_balance -----------------------------------------------------------------------

def test_energy_flat_mirror():
    e = RayleighExpansion.from_dict(PlaneWave(1.3, 0.4), 2 * math.pi, {0: -1})
    eff, defect = energy_balance(e)
    assert eff[0] == pytest.approx(1, abs=1e-15) and defect < 1e-15


def test_energy_counterexample():
    fx = counterexample_fixture()
    eff, defect = energy_balance(fx.expansion1)
    assert eff[2] == pytest.approx(1, abs=1e-14)
    assert eff[-1] == 0 and eff[3] == 0
    assert defect < 1e-14


def test_energy_half_amplitude():
    e = RayleighExpansion.from_dict(PlaneWave(1.3, 0.4), 2 * math.pi, {0: -0.5})
    assert energy_balance(e)[1] == pytest.approx(0.75, abs=1e-15)


def test_energy_rejects_grazing_specular_order():
    # alpha_0 = k sin(theta) = k only at grazing, so use a grid built directly
    g = ModeGrid(1.0, 1.0, 2 * math.pi, 2)
    with pytest.raises(AnomalousSpecularOrder):
        energy_balance(RayleighExpansion(g, np.zeros(5)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_energy_defect_phase_invariant(phi):
    fx = counterexample_fixture()
    e = fx.expansion1
    rot = RayleighExpansion(e.grid, e.coeffs * np.exp(1j * phi))
    assert energy_balance(rot)[1] == pytest.approx(energy_balance(e)[1], abs=1e-14)


# -- quasi-periodicity ------------------------------------------------------------------------

def test_quasiperiodicity_defects():
    rng = np.random.default_rng(1)
    probes = rng.uniform(0, 5, (50, 2)) + [0, 3]
    w = PlaneWave(1.4, 0.25)
    assert quasiperiodicity_defect(w, 2.2, w.alpha, probes) < 1e-13
    e = RayleighExpansion(ModeGrid.for_wave(w, 2.2, 5), rng.normal(size=11) + 1j * rng.normal(size=11))
    assert quasiperiodicity_defect(lambda a, b: e(a, b, warn=False), 2.2, w.alpha, probes) < 1e-12
    for L in (2 * math.pi, 4 * math.pi):
        assert quasiperiodicity_defect(counterexample_total_field, L, -1.0, probes) < 1e-12
