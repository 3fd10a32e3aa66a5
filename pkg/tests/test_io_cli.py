import json
import math

import numpy as np
import pytest

from qpgrating import io as qio
from qpgrating.cli import run
from qpgrating.errors import ValidationError
from qpgrating.forward import counterexample_fixture, solve_dirichlet
from qpgrating.profile import GratingProfile
from qpgrating.rayleigh import PlaneWave
from qpgrating.waveguide import strip_dispersion

TWO_PI = 2 * math.pi
FLAT = "period = 2*pi\noffset = 0\n"
SINE = "period = 2*pi\nsin[1] = 0.1\n"


def files(d):
    return sorted(p.name for p in d.iterdir()) if d.exists() else []


# -- tables ------------------------------------------------------------------------------------

def test_coefficient_table_roundtrip(sinusoid):
    sol = solve_dirichlet(sinusoid, PlaneWave(1.5, 0.3))
    text = qio.coefficient_table(sol.expansion, {"k": 1.5, "theta": 0.3})
    params, coeffs, inc = qio.read_coefficient_table(text)
    assert params == {"k": "1.5", "theta": "0.3"}
    assert inc[0] == "inc" and float(inc[1]) == 1.0
    for n, a in coeffs.items():
        assert a == sol.expansion.coefficient(n)
    back = qio.expansion_from_table(text, 1.5, 0.3, TWO_PI)
    assert np.array_equal(back.coeffs, sol.expansion.coeffs)
    with pytest.raises(ValidationError):
        qio.read_coefficient_table("n,A\n0,1\n")


def test_solution_document_is_strict_json(sinusoid):
    sol = solve_dirichlet(sinusoid, PlaneWave(1.5, 0.3))
    doc = json.loads(qio.dumps(qio.solution_document(sol, {"k": 1.5})))
    assert set(doc["diagnostics"]) == {"residual", "energy_defect", "condition", "valid"}
    assert doc["columns"] == qio.COEFF_HEADER


def test_intensity_formats_agree():
    x1 = np.linspace(0, 1, 4)
    x2 = np.linspace(2, 3, 3)
    v = np.arange(12.0).reshape(3, 4) / 7
    rows = qio.intensity_rows(x1, x2, v, {"k": 1.0})
    dense = "4 3 0 1 2 3\n" + "\n".join(" ".join(repr(float(t)) for t in r) for r in v) + "\n"
    for text in (rows, dense):
        a, b, w = qio.read_intensity(text)
        assert np.allclose(a, x1) and np.allclose(b, x2) and np.array_equal(w, v)
    with pytest.raises(ValidationError):
        qio.read_intensity("4 3 0 1 2 3\n1 2 3\n")
    with pytest.raises(ValidationError):
        qio.read_intensity("x1,x2,intensity\n0,0,1\n1,0,1\n0,1,1\n")


def test_dispersion_table_roundtrip():
    from qpgrating.waveguide import DispersionCurve
    g = np.array([0.1, 0.2])
    c = DispersionCurve(g, np.array([[1.0, 2.0], [1.5, 2.5]]))
    params, a, b = qio.read_dispersion_table(qio.dispersion_table(c, {"strip_h": 3.0}))
    assert params == {"strip_h": "3.0"} and np.array_equal(a, g) and np.array_equal(b, c.bands)


# -- CLI ---------------------------------------------------------------------------------------

def test_fixture_command(tmp_path):
    out = tmp_path / "fx"
    assert run(["fixture", "counterexample", "--out", str(out), "--nx1", "16", "--nx2", "8"]) == 0
    assert files(out) == ["coefficients_L2pi.csv", "coefficients_L4pi.csv", "curve_L2pi.csv",
                          "curve_L4pi.csv", "field_grid.csv"]
    fx = counterexample_fixture()
    _, c2, _ = qio.read_coefficient_table((out / "coefficients_L2pi.csv").read_text())
    _, c4, _ = qio.read_coefficient_table((out / "coefficients_L4pi.csv").read_text())
    assert c2 == {n: complex(a) for n, a in fx.expansion1.as_dict(1e-15).items()}
    assert sorted(c4) == [-2, 4, 6]
    text = (out / "field_grid.csv").read_text()
    assert text.startswith("# k = 2.0\n") and "x1,x2,re_u,im_u" in text


def test_solve_flat_single_row(tmp_path):
    prof = tmp_path / "flat.txt"
    prof.write_text(FLAT)
    out = tmp_path / "o"
    assert run(["solve", "--profile", str(prof), "--k", "1", "--theta", "0.3",
                "--out", str(out)]) == 0
    params, coeffs, inc = qio.read_coefficient_table((out / "coefficients.csv").read_text())
    assert list(coeffs) == [0] and abs(coeffs[0] + 1) < 1e-10
    assert params["k"] == "1.0" and "period" in params["profile"]
    doc = json.loads((out / "solution.json").read_text())
    assert doc["diagnostics"]["valid"]


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[solve]\nk = 1.5\ntheta = 0.3\nmodes = 12\n\n[profile]\n" + SINE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", "--config", str(cfg), "--out", str(a)]) == 0
    assert run(["solve", "--config", str(cfg), "--theta", "0.2", "--out", str(b)]) == 0
    pa, _, _ = qio.read_coefficient_table((a / "coefficients.csv").read_text())
    pb, _, _ = qio.read_coefficient_table((b / "coefficients.csv").read_text())
    assert pa["theta"] == "0.3" and pb["theta"] == "0.2" and pa["modes"] == "12"


def test_dispersion_command_matches_oracle(tmp_path):
    out = tmp_path / "d"
    assert run(["dispersion", "--strip", "h=pi", "--bands", "6", "--grid", "21",
                "--fourier-order", "6", "--poly-count", "12", "--out", str(out)]) == 0
    params, alpha, bands = qio.read_dispersion_table((out / "dispersion.csv").read_text())
    assert float(params["strip_h"]) == math.pi and alpha.size == 21
    for a, row in zip(alpha, bands):
        exact = sorted(strip_dispersion(math.pi, a, n, m) for n in range(-6, 7) for m in (1, 2, 3))
        assert np.max(np.abs(row - exact[:6]) / row) < 1e-6


def test_mu_eig_command(tmp_path):
    out = tmp_path / "m"
    assert run(["mu-eig", "--strip", "h=pi", "--k", "2", "--fourier-order", "5",
                "--poly-count", "10", "--method", "both", "--bands", "12", "--grid", "21",
                "--out", str(out)]) == 0
    a = json.loads((out / "mu.json").read_text())["real_mu"]
    b = json.loads((out / "mu_dispersion.json").read_text())["real_mu"]
    assert len(a) == len(b) == 11 and np.max(np.abs(np.array(a) - b)) < 1e-5


def test_retrieve_and_estimate_period_commands(tmp_path, sinusoid):
    from qpgrating.retrieval import measurement_rows
    wave = PlaneWave(1.5, 0.3)
    sol = solve_dirichlet(sinusoid, wave)
    u = sol.expansion.with_incident()
    x1 = np.arange(64) * TWO_PI / 64
    x2 = measurement_rows(2.1, 2 * TWO_PI / 1.5, 64)
    X1, X2 = np.meshgrid(x1, x2)
    data = tmp_path / "i.csv"
    data.write_text(qio.intensity_rows(x1, x2, np.abs(u(X1, X2)) ** 2))
    out = tmp_path / "r"
    assert run(["retrieve", "--input", str(data), "--k", "1.5", "--theta", "0.3",
                "--profile-max", "0.1", "--out", str(out)]) == 0
    doc = json.loads((out / "retrieval.json").read_text())
    got = complex(*doc["coefficients"]["0"])
    assert abs(got - sol.expansion.coefficient(0)) < 1e-8 and doc["unique"]

    fx = counterexample_fixture()
    xs = np.arange(1024) * (16 * math.pi / 1024)
    line = fx.expansion1(xs, np.full_like(xs, fx.expansion1.reference_height))
    ld = tmp_path / "line.csv"
    ld.write_text("x1,re_u,im_u\n" + "".join(f"{float(a)!r},{float(z.real)!r},{float(z.imag)!r}\n"
                                             for a, z in zip(xs, line)))
    out2 = tmp_path / "p"
    assert run(["estimate-period", "--input", str(ld), "--k", "2", "--theta=-pi/6",
                "--candidate-max", "4*pi", "--out", str(out2)]) == 0
    per = json.loads((out2 / "periods.json").read_text())["periods"]
    assert np.allclose(per, [TWO_PI, 4 * math.pi])


def test_invert_command_reproducible(tmp_path):
    prof = tmp_path / "t.txt"
    prof.write_text(SINE)
    args = ["invert", "--target", str(prof), "--k", "1.5", "--angles=-0.6,-0.2,0.3,0.7",
            "--height", "0.5", "--modes", "12", "--workers", "2"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    ra = (a / "reconstruction.json").read_bytes()
    assert ra == (b / "reconstruction.json").read_bytes()
    doc = json.loads(ra)
    assert abs(doc["final"]["sin"][0] - 0.1) < 1e-3 and doc["converged"]
    assert "wall_clock_s" in json.loads((a / "timing.json").read_text())


def test_byte_identical_solves(tmp_path):
    prof = tmp_path / "s.txt"
    prof.write_text(SINE)
    outs = []
    for tag in "ab":
        d = tmp_path / tag
        assert run(["multi-solve", "--profile", str(prof), "--k", "1.5", "--angles",
                    "0.1,0.4,-0.3", "--workers", "3", "--out", str(d)]) == 0
        outs.append({n: (d / n).read_bytes() for n in files(d)})
    assert outs[0] == outs[1] and len(outs[0]) == 4


@pytest.mark.parametrize("argv, code", [
    (["nonsense"], 2),
    (["solve", "--k", "1", "--theta", "0"], 3),                              # no profile
    (["solve", "--profile", "/nonexistent", "--k", "1", "--theta", "0"], 3),
    (["solve", "--k", "x", "--theta", "0"], 3),
    (["dispersion", "--strip", "w=2"], 3),
    (["mu-eig", "--strip", "h=pi", "--k", "2", "--method", "magic"], 3),
    (["invert", "--k", "1", "--angles", "0.1,0.1", "--height", "1", "--target", "x", "--data", "y"], 3),
])
def test_exit_codes_and_no_partial_output(tmp_path, argv, code):
    out = tmp_path / "never"
    assert run(argv + ["--out", str(out)]) == code
    assert not out.exists()


def test_unknown_config_entries_rejected(tmp_path):
    for text in ("[solve]\nk = 1\ncolour = red\n", "[dispersion]\nbands = 2\n"):
        cfg = tmp_path / "c.ini"
        cfg.write_text(text)
        assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    assert not (tmp_path / "x").exists()


def test_numerical_failure_exit(tmp_path):
    prof = tmp_path / "deep.txt"
    prof.write_text("period = 2*pi\nsin[1] = 1.5\n")
    out = tmp_path / "n"
    assert run(["solve", "--profile", str(prof), "--k", "2.5", "--theta", "0.2", "--modes", "24",
                "--out", str(out)]) == 4
    assert not out.exists()
