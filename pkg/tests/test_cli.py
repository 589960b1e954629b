import json

import numpy as np
import pytest
from scipy.special import betaln

from hypxray.cli import main
from hypxray.dataspace import GeodesicGrid, Sinogram
from hypxray.fiber import IttTensor, ScalarField, TTComponent
from hypxray.forward import ipq_closed
from hypxray.io import (
    InputError,
    RunConfig,
    UnknownPhantom,
    load_tensor,
    make_phantom,
    read_sinogram,
    save_tensor,
    tensor_from_spec,
    tensor_to_spec,
    write_sinogram,
)

SMALL = {"n_beta": 32, "n_a": 48, "n_theta": 128, "n_r": 10, "n_phi": 16, "n_max": 12, "p_max": 6}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


# ---------------------------------------------------------------------------
# file formats


def test_spec_round_trip(tmp_path):
    f = IttTensor(4, ScalarField.gaussian_bump(0.1 - 0.2j, 0.4, 2.0),
                  (TTComponent(2, [1.0, 2j], [0.5]), TTComponent(4, [0.0, 1.0], [1j])))
    save_tensor(f, tmp_path / "f.json")
    g = load_tensor(tmp_path / "f.json")
    assert tensor_to_spec(g) == tensor_to_spec(f)
    assert g.f0(0.3) == pytest.approx(f.f0(0.3))


@pytest.mark.parametrize("bad", [
    {"rank": 3, "f0": {"profile": "zero"}, "components": []},
    {"rank": 2, "f0": {"profile": "zero"}, "components": [{"k": 2, "plus": [[1, 0]], "minus": []}]},
    {"rank": 2, "f0": {"profile": "mystery"}, "components": []},
    {"rank": 2, "f0": {"profile": "power_x"}, "components": []},
    {"rank": 2, "components": []},
])
def test_spec_rejects_bad_input(bad):
    with pytest.raises(InputError):
        tensor_from_spec(bad)


def test_sinogram_round_trip_is_bit_exact(tmp_path):
    grid = GeodesicGrid(8, 12)
    sino = Sinogram(grid, ipq_closed(1, 2, grid.geodesics) * (1 + 1e-9j), "even")
    write_sinogram(sino, tmp_path / "h.csv", {"note": "x"})
    back = read_sinogram(tmp_path / "h.csv")
    np.testing.assert_array_equal(back.values, sino.values)
    assert back.grid == grid
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "beta,a,weight,re,im"


def test_sinogram_reader_checks_header(tmp_path):
    grid = GeodesicGrid(4, 4)
    write_sinogram(Sinogram(grid, np.zeros((4, 4)), "even"), tmp_path / "h.csv")
    text = (tmp_path / "h.csv").read_text().replace("beta,a", "b,a", 1)
    (tmp_path / "h.csv").write_text(text)
    with pytest.raises(InputError):
        read_sinogram(tmp_path / "h.csv")


def test_config_validation():
    assert RunConfig.from_dict({"n_a": 8}).grid == GeodesicGrid(64, 8)
    with pytest.raises(InputError):
        RunConfig(n_a=0)
    with pytest.raises(InputError):
        RunConfig(rel_tol=1.5)
    with pytest.raises(InputError):
        RunConfig.from_dict({"bogus": 1})


def test_phantom_catalog():
    f = make_phantom("tt-monomial", k=1, p=0)
    assert f.rank == 2 and f.component(1).plus.tolist() == [1.0]
    assert not np.any(f.component(1).minus)
    assert make_phantom("power-x", alpha=1).f0.profile["alpha"] == 1.0
    mixed = make_phantom("mixed-rank4")
    assert mixed.component(2).plus.tolist() == [0.0, 1.0]
    assert mixed.component(1).minus.tolist() == [1.0, -1.0]
    with pytest.raises(UnknownPhantom):
        make_phantom("teapot")
    with pytest.raises(InputError):
        make_phantom("power-x", beta=2)


# ---------------------------------------------------------------------------
# command line


def test_phantom_verb(tmp_path):
    out = tmp_path / "p.json"
    assert run("phantom", "tt-monomial", "--param", "k=1", "--param", "p=0", "--out", out) == 0
    spec = json.loads(out.read_text())
    assert spec["rank"] == 2
    assert spec["components"] == [{"k": 1, "plus": [[1.0, 0.0]], "minus": [[0.0, 0.0]]}]
    assert run("phantom", "teapot", "--out", out) == 2


def test_forward_power_weight_columns(tmp_path, config):
    spec = tmp_path / "px.json"
    run("phantom", "power-x", "--param", "alpha=1", "--out", spec)
    assert run("forward", spec, "--config", config, "--out", tmp_path / "px.csv") == 0
    sino = read_sinogram(tmp_path / "px.csv")
    a = sino.grid.mesh[1]
    np.testing.assert_allclose(sino.values, np.exp(betaln(0.5, 0.5)) / np.sqrt(1 + a**2), rtol=1e-12)
    side = json.loads((tmp_path / "px.csv.json").read_text())
    assert len(side["spec_sha256"]) == 64 and side["grid"]["n_a"] == SMALL["n_a"]


def test_forward_zero_and_monomial(tmp_path, config):
    run("phantom", "zero", "--param", "rank=2", "--out", tmp_path / "z.json")
    run("forward", tmp_path / "z.json", "--config", config, "--out", tmp_path / "z.csv")
    assert not np.any(read_sinogram(tmp_path / "z.csv").values)
    run("phantom", "tt-monomial", "--out", tmp_path / "m.json")
    run("forward", tmp_path / "m.json", "--config", config, "--out", tmp_path / "m.csv")
    sino = read_sinogram(tmp_path / "m.csv")
    np.testing.assert_allclose(sino.values, ipq_closed(0, 2, sino.grid.geodesics))


def test_forward_is_deterministic(tmp_path, config):
    run("phantom", "rank2-mixed", "--out", tmp_path / "r.json")
    run("forward", tmp_path / "r.json", "--config", config, "--out", tmp_path / "a.csv")
    run("forward", tmp_path / "r.json", "--config", config, "--out", tmp_path / "b.csv", "--workers", 2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.fixture
def mixed_sinogram(tmp_path, config):
    run("phantom", "rank2-mixed", "--out", tmp_path / "r.json")
    run("forward", tmp_path / "r.json", "--config", config, "--out", tmp_path / "r.csv")
    return tmp_path / "r.csv"


def test_reconstruct_xray_round_trip(tmp_path, config, mixed_sinogram):
    out = tmp_path / "rec.json"
    assert run("reconstruct", mixed_sinogram, "--rank", 2, "--config", config, "--out", out) == 0
    report = json.loads(out.read_text())
    plus = np.array([complex(*v) for v in report["components"][0]["plus"]])
    np.testing.assert_allclose(plus[:2], [1.0, 0.5], atol=1e-4)
    recovered = load_tensor(tmp_path / "rec.spec.json")
    truth = make_phantom("rank2-mixed")
    z = np.array([0.0, 0.2 + 0.1j, -0.4j])
    assert np.max(np.abs(recovered.f0(z) - truth.f0(z))) < 0.05


def test_reconstruct_normal_agrees(tmp_path, config, mixed_sinogram):
    out = tmp_path / "rec.json"
    assert run("reconstruct", mixed_sinogram, "--rank", 2, "--method", "normal", "--config", config,
               "--out", out) == 0
    report = json.loads(out.read_text())
    plus = np.array([complex(*v) for v in report["components"][0]["plus"]])
    np.testing.assert_allclose(plus[:2], [1.0, 0.5], atol=2e-3)
    assert report["method"] == "normal"


def test_reconstruct_wrong_rank_fails(tmp_path, config, mixed_sinogram, capsys):
    assert run("reconstruct", mixed_sinogram, "--rank", 0, "--config", config, "--out", tmp_path / "x.json") == 1
    assert "above declared rank" in capsys.readouterr().err
    assert run("reconstruct", mixed_sinogram, "--rank", 3, "--config", config) == 2


def test_rangecheck_verb(tmp_path, config, mixed_sinogram):
    assert run("rangecheck", mixed_sinogram, "--rank", 2, "--config", config, "--out", tmp_path / "rc.json") == 0
    assert json.loads((tmp_path / "rc.json").read_text())["passed"]
    assert run("rangecheck", mixed_sinogram, "--rank", 0, "--config", config) == 1


def test_rangecheck_rejects_noise(tmp_path):
    grid = GeodesicGrid(32, 48)
    rng = np.random.default_rng(7)
    spectrum = np.fft.fft(rng.standard_normal((32, 48)), axis=0)
    spectrum[16] = 0.0
    noise = Sinogram(grid, np.fft.ifft(spectrum, axis=0)).symmetrized()
    write_sinogram(noise, tmp_path / "n.csv")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_beta": 32, "n_a": 48}))
    assert run("rangecheck", tmp_path / "n.csv", "--rank", 2, "--config", cfg, "--out", tmp_path / "n.json") == 1
    conditions = json.loads((tmp_path / "n.json").read_text())["conditions"]
    assert not conditions["tt_decay"] and not conditions["scalar_decay"]


def test_selftest_filter_and_coarse_grid(tmp_path, capsys):
    assert run("selftest", "--filter", "orthogonality", "--out", tmp_path / "s.json") == 0
    results = json.loads((tmp_path / "s.json").read_text())["results"]
    assert [r["name"] for r in results] == ["orthonormality"]
    coarse = tmp_path / "coarse.json"
    coarse.write_text(json.dumps({"n_a": 8}))
    assert run("selftest", "--filter", "orthogonality", "--config", coarse) == 1
    assert "FAIL" in capsys.readouterr().out


def test_input_errors_exit_two(tmp_path):
    assert run("forward", tmp_path / "missing.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_q": 1}))
    assert run("selftest", "--config", bad) == 2
    assert run("selftest", "--filter", "no-such-check") == 2
