import csv
import math
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tev import cli
from tev.assembly import RefractionField
from tev.mesh import Domain
from tev.multigrid import MultigridError
from tev.report import (ConfigError, RunConfig, build_bundle, convergence_order,
                        emit_outputs, fmt, parse_config, parse_config_text, run_experiment)

SQUARE16_K1 = [1.880051827, 1.879621633, 1.879593109, 1.879591295, 1.879591180, 1.879591166]
LSHAPE16_K1 = [1.4850654, 1.4802424, 1.4780404, 1.4770116, 1.4765288]


def richardson(values, h0):
    """Errors against the finest value, finest point excluded."""
    hs = [h0 / 2 ** m for m in range(len(values))]
    return [(h, abs(k - values[-1])) for h, k in zip(hs[:-1], values[:-1])]


# ---------------------------------------------------------------- config

def test_parse_example():
    c = parse_config_text("domain=unit_square n=16 coarse_div=8 levels=6 q=4 shift=3")
    assert (c.domain, c.refraction, c.coarse_divisions, c.levels, c.q, c.shift) == \
        (Domain.UNIT_SQUARE, RefractionField(16), 8, 6, 4, 3)


def test_parse_affine():
    c = parse_config_text("n=affine 8 1 -1")
    assert c.refraction == RefractionField(8, 1, -1)
    assert c.refraction.minimum(c.domain) == 7.0
    corners = Domain.UNIT_SQUARE.corners
    assert np.max(c.refraction.n(corners[:, 0], corners[:, 1])) == 9.0


@pytest.mark.parametrize("text", ["n=0.5", "n=1", "levels=0", "q=0", "colour=blue",
                                  "n=affine 8 1", "levels=two", "quad_order=11",
                                  "domain=disk", "q=1 q=2", "garbage"])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_parse_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# n = 4 complex pair\ndomain = unit_square\nn = 4\ncoarse_div = 16\n"
                 "levels = 3\nq = 2\nshift = 17+10i\ntol = 1e-11\nreference = 4.27+1.14j\n")
    c = parse_config(p)
    assert c.shift == 17 + 10j and c.tol == 1e-11 and c.reference == (4.27 + 1.14j,)
    c = parse_config(p, levels=2, shift_im=-10.0, n=RefractionField.affine(8, 1, -1))
    assert c.levels == 2 and c.shift == 17 - 10j and not c.refraction.is_constant
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigError):
        parse_config(p, bogus=1)


# ---------------------------------------------------------------- orders

def test_order_synthetic():
    h = [2.0 ** -m for m in range(1, 6)]
    assert convergence_order([(x, x ** 4) for x in h]) == pytest.approx(4.0, abs=1e-10)
    with pytest.raises(ValueError):
        convergence_order([(0.1, 1e-4), (0.05, 0.0), (0.025, 1e-6)])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 6), st.floats(1e-3, 1e3))
def test_order_power_law(p, c):
    h = [0.3 / 2 ** m for m in range(4)]
    assert convergence_order([(x, c * x ** p) for x in h]) == pytest.approx(p, abs=1e-9)


def test_order_uses_finest_points():
    data = [(0.4, 1.0), (0.2, 2 ** -4), (0.1, 2 ** -8), (0.05, 2 ** -12)]
    assert convergence_order(data) == pytest.approx(4.0)
    assert convergence_order([(0.4, 123.0)] + data[1:]) == pytest.approx(
        convergence_order(data))


def test_order_square_reference_column():
    # finest-as-reference over 10-digit values; the last error is only ~14 ulps
    # of the printed precision, which pulls the fit below 4
    slope = convergence_order(richardson(SQUARE16_K1, math.sqrt(2) / 8))
    assert 3.3 <= slope <= 4.3
    e = [abs(k - SQUARE16_K1[-1]) for k in SQUARE16_K1[:4]]
    assert all(14 < a / b < 18 for a, b in zip(e[:2], e[1:3]))


def test_order_lshape_reference_column():
    slope = convergence_order(richardson(LSHAPE16_K1, math.sqrt(2) / 8))
    assert 1.0 < slope < 2.0
    d = np.abs(np.diff(LSHAPE16_K1))
    assert np.allclose(d[:-1] / d[1:], 2.1, atol=0.25)


# ---------------------------------------------------------------- outputs

def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    return RunConfig(Domain.UNIT_SQUARE, RefractionField(16), 4, 3, 2, 3.0,
                     out=tmp_path_factory.mktemp("run"))


@pytest.fixture(scope="module")
def small_bundle(small_config):
    return run_experiment(small_config)


def test_output_files(small_config, small_bundle):
    out = small_config.out
    eig = read_csv(out / "eigenvalues.csv")
    assert eig[0] == ["level", "h", "j", "k_re", "k_im", "residual", "seconds"]
    assert len(eig) == 1 + 3 * 2
    assert read_csv(out / "errors.csv")[0] == ["h", "j", "abs_error"]
    assert len(read_csv(out / "errors.csv")) == 1 + 2 * 2
    assert read_csv(out / "orders.csv")[0] == ["j", "slope"]
    diag = read_csv(out / "diagnostics.csv")
    assert diag[0] == ["level", "min_diagonal", "max_off_diagonal", "violated"]
    assert len(diag) == 4 and all(float(r[1]) > 1e-3 for r in diag[1:])


def test_ten_significant_digits(small_config):
    assert fmt(math.sqrt(2) / 8) == "0.1767766953"
    assert fmt(1.8800518273) == "1.880051827"
    for row in read_csv(small_config.out / "eigenvalues.csv")[1:]:
        for cell in row[3:5]:
            digits = cell.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(digits) <= 10


def test_k_convention(small_bundle):
    for s in small_bundle.states:
        assert np.all(s.k.real >= 0)
        assert np.allclose(s.k ** 2, s.values, rtol=1e-12, atol=0)


def test_errors_recomputable(small_config):
    eig = read_csv(small_config.out / "eigenvalues.csv")[1:]
    errs = read_csv(small_config.out / "errors.csv")[1:]
    k = {}
    for level, h, j, kr, ki, *_ in eig:
        k.setdefault(int(j), []).append((h, complex(float(kr), float(ki))))
    expect = []
    for j, rows in sorted(k.items()):
        ref = rows[-1][1]
        expect += [[h, str(j), fmt(abs(v - ref))] for h, v in rows[:-1]]
    assert errs == expect


def test_svg(small_config, small_bundle):
    text = (small_config.out / "errors_loglog.svg").read_text()
    root = ET.fromstring(text)
    ns = {"s": "http://www.w3.org/2000/svg"}
    lines = root.findall("s:polyline", ns)
    assert len(lines) == 2
    labels = [t.text for t in root.findall("s:text", ns)]
    assert "log₁₀(h)" in labels and "log₁₀(error)" in labels
    for pl in lines:
        assert len(pl.get("points").split()) == 2


def strip_seconds(rows):
    return [r[:-1] for r in rows]


def test_deterministic(small_config, small_bundle, tmp_path):
    import dataclasses
    again = dataclasses.replace(small_config, out=tmp_path)
    run_experiment(again)
    for name in ("errors.csv", "orders.csv", "diagnostics.csv", "errors_loglog.svg"):
        assert (tmp_path / name).read_bytes() == (small_config.out / name).read_bytes()
    assert strip_seconds(read_csv(tmp_path / "eigenvalues.csv")) == \
        strip_seconds(read_csv(small_config.out / "eigenvalues.csv"))


def test_single_level_bundle(tmp_path):
    config = RunConfig(Domain.UNIT_SQUARE, RefractionField(16), 8, 1, 1, 3.0, out=tmp_path)
    bundle = run_experiment(config)
    assert len(bundle.states) == 1 and bundle.states[0].info["method"] == "arnoldi"
    assert len(read_csv(tmp_path / "eigenvalues.csv")) == 2
    for name in ("errors.csv", "orders.csv"):
        assert len(read_csv(tmp_path / name)) == 1
    assert "<polyline" in (tmp_path / "errors_loglog.svg").read_text()


def test_external_reference(small_bundle):
    ref = (1.879591166, 2.444236099)
    b = build_bundle(small_bundle.states, reference=ref)
    assert len(b.errors) == 3 * 2
    assert all(e > 0 for _, _, e in b.errors)


# ---------------------------------------------------------------- CLI

def test_cli_success(tmp_path, capsys):
    code = cli.main(["run", "--domain", "unit_square", "--n", "16", "--coarse-div", "4",
                     "--levels", "2", "--q", "1", "--shift-re", "3", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "eigenvalues.csv").exists()
    assert "level 2" in capsys.readouterr().out


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("domain=l_shape\nn=16\ncoarse_div=2\nlevels=2\nq=1\nshift=2\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["run", "--config", str(cfg), "--n-affine", "2", "1", "0",
                     "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("argv", [["run", "--n", "0.5"], ["run", "--levels", "0"],
                                  ["run", "--config", "/nonexistent.cfg"],
                                  ["run", "--q", "x"], ["walk"]])
def test_cli_config_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as err:
        code = cli.main(argv + ["--out", str(tmp_path)] if argv[0] == "run" else argv)
        raise SystemExit(code)
    assert err.value.code == 1


def test_cli_solver_failure(tmp_path, monkeypatch):
    import tev.report as report

    def fail(config, **kw):
        raise MultigridError("forced failure", [])

    monkeypatch.setattr(report, "run_multigrid", fail)
    assert cli.main(["run", "--coarse-div", "2", "--out", str(tmp_path)]) == 2
    assert (tmp_path / "eigenvalues.csv").exists()     # partial outputs flushed


def test_cli_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tev", "run", "--n", "0.5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1 and "config error" in proc.stderr
