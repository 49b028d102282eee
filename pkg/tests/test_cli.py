import csv
import hashlib
import json
import math

import numpy as np
import pytest

from dcsweep.cli import default_reconstruct_config, default_sweep_config, main
from dcsweep.errors import ConfigurationError
from dcsweep.grid import GridDims
from dcsweep.surfaces import gen_surface, load_surface, surface_to_csv


def _write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _tiny_sweep(surfaces=None, **kw):
    cfg = default_sweep_config()
    cfg.update(surfaces=surfaces or [{"kind": "peak_valley", "size": 8}],
               grid={"lambdas": [1e-3, 1e-1], "deltas": [1.0, 5.0]}, trials=2,
               dcs={"outer_iters": 2, "max_iter": 100})
    cfg.update(kw)
    return cfg


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# --- surfaces ---------------------------------------------------------------

def test_sphere_heights():
    z = gen_surface("sphere", GridDims(32, 32)).as_array()
    assert z[16, 16] == pytest.approx(12.8, abs=1e-9)
    assert z[0, 0] == z[0, -1] == z[-1, 0] == z[-1, -1] == 0.0


@pytest.mark.parametrize("kind", ["sphere", "ramp_peak", "peak_valley"])
def test_generation_is_deterministic(kind):
    a = gen_surface(kind, GridDims(16, 32)).z
    assert a.tobytes() == gen_surface(kind, GridDims(16, 32)).z.tobytes()


def test_peak_valley_balances():
    z = gen_surface("peak_valley", GridDims(32, 32)).z
    assert abs(z.sum()) <= 0.01 * np.abs(z).sum()


def test_unknown_kind():
    with pytest.raises(ConfigurationError):
        gen_surface("torus", GridDims(8, 8))


def test_load_csv_zeros(tmp_path):
    p = tmp_path / "z.csv"
    p.write_text("0,0,0,0\n" * 4)
    s = load_surface(p)
    assert s.dims.shape == (4, 4) and not np.any(s.z)


def test_load_pgm_rescales(tmp_path):
    p = tmp_path / "w.pgm"
    p.write_bytes(b"P5\n# white\n4 2\n255\n" + bytes([255] * 8))
    s = load_surface(p)
    assert s.dims.shape == (2, 4)
    np.testing.assert_array_equal(s.z, 1.0)


def test_load_pgm_16bit_round_trip(tmp_path):
    out = tmp_path / "s.pgm"
    assert main(["gen-surface", "--kind", "ramp_peak", "--size", "16", "--out", str(out)]) == 0
    s = load_surface(out)
    assert s.z.min() == 0.0 and s.z.max() == 1.0
    ref = gen_surface("ramp_peak", GridDims(16, 16)).z
    ref = (ref - ref.min()) / (ref.max() - ref.min())
    assert np.max(np.abs(s.z - ref)) <= 1.0 / 65535


def test_load_malformed_inputs(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2,3,4\n1,2,3,4\n1,2,3\n1,2,3,4\n")
    with pytest.raises(ConfigurationError, match="row 3"):
        load_surface(p)
    p.write_text("1,2\n1,x\n")
    with pytest.raises(ConfigurationError, match="row 2"):
        load_surface(p)
    p.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(ConfigurationError, match="power of two"):
        load_surface(p)
    p.write_text("1,nan\n1,2\n")
    with pytest.raises(ConfigurationError, match="non-finite"):
        load_surface(p)
    q = tmp_path / "short.pgm"
    q.write_bytes(b"P5 4 4 255\n" + bytes(10))
    with pytest.raises(ConfigurationError, match="byte"):
        load_surface(q)


def test_gen_surface_stdout(capsys):
    assert main(["gen-surface", "--kind", "sphere", "--rows", "4", "--cols", "8"]) == 0
    text = capsys.readouterr().out
    assert text == surface_to_csv(gen_surface("sphere", GridDims(4, 8)).as_array())


def test_csv_round_trip_is_exact(tmp_path):
    z = gen_surface("ramp_peak", GridDims(8, 8))
    p = tmp_path / "r.csv"
    p.write_text(surface_to_csv(z.as_array()))
    assert load_surface(p).z.tobytes() == z.z.tobytes()


# --- config handling --------------------------------------------------------

def test_empty_surfaces_exit_2(tmp_path, capsys):
    cfg = _write_json(tmp_path / "c.json", _tiny_sweep() | {"surfaces": []})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "surfaces" in capsys.readouterr().err


@pytest.mark.parametrize("patch,field", [
    ({"trails": 2}, "trails"),
    ({"grid": {"lambdas": [1.0, 0.1]}}, "lambdas"),
    ({"noise": {"kind": "pink"}}, "noise kind"),
    ({"dcs": {"iters": 5}}, "dcs"),
    ({"base_seed": -1}, "seed"),
])
def test_bad_configs_exit_2(tmp_path, capsys, patch, field):
    cfg = _write_json(tmp_path / "c.json", _tiny_sweep() | patch)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_missing_and_invalid_config_files(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["reconstruct", "--config", str(bad)]) == 2


def test_print_default_config(capsys):
    assert main(["print-default-config"]) == 0
    assert json.loads(capsys.readouterr().out) == default_sweep_config()
    assert main(["print-default-config", "reconstruct"]) == 0
    assert json.loads(capsys.readouterr().out) == default_reconstruct_config()


def test_default_configs_parse_and_match_protocol():
    d = default_sweep_config()
    assert d["trials"] == 10 and d["m_ratio"] == 0.5
    assert len(d["grid"]["lambdas"]) * len(d["grid"]["deltas"]) == 35


# --- sweep ------------------------------------------------------------------

def test_sweep_outputs(tmp_path, capsys):
    cfg = _write_json(tmp_path / "c.json", _tiny_sweep(
        noise=[{"kind": "gaussian"}, {"kind": "salt_pepper"}]))
    out = tmp_path / "o"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    summary = capsys.readouterr().out.splitlines()
    assert [line.split(",")[:2] for line in summary] == [
        ["Peak-valley", "gaussian"], ["Peak-valley", "salt_pepper"]]
    assert set(_files(out)) == {
        "Peak-valley/cells.csv", "Peak-valley/result_gaussian.json",
        "Peak-valley/result_salt_pepper.json", "Peak-valley/heatmap_gaussian.dat",
        "Peak-valley/heatmap_salt_pepper.dat", "optimal.csv", "manifest.json"}

    rows = list(csv.DictReader((out / "Peak-valley" / "cells.csv").open()))
    assert len(rows) == 8
    result = json.loads((out / "Peak-valley" / "result_gaussian.json").read_text())
    for row, rec in zip(rows[:4], result["records"]):
        assert float(row["lambda"]) == rec["lambda"]
        assert float(row["mean_snr_db"]) == pytest.approx(rec["mean_snr_db"], rel=1e-12)
        assert int(row["trials"]) == 2 and int(row["failures"]) == 0

    opt = list(csv.DictReader((out / "optimal.csv").open()))
    assert [r["noise"] for r in opt] == ["gaussian", "salt_pepper"]
    lam, delta, snr = summary[0].split(",")[2:]
    assert (float(lam), float(delta)) == (result["best"]["lambda_star"], result["best"]["delta_star"])
    assert float(snr) == result["best"]["mean_snr_db"]

    heat = (out / "Peak-valley" / "heatmap_gaussian.dat").read_text().splitlines()
    data = [line.split() for line in heat if not line.startswith("#")]
    assert len(data) == 4 and all(len(d) == 3 for d in data)

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == hashlib.sha256((tmp_path / "c.json").read_bytes()).hexdigest()
    assert len(manifest["outputs"]) == 6
    assert not [p for p in out.rglob(".*")]


def test_sweep_is_reproducible_and_hash_tracks_bytes(tmp_path):
    cfg_path = tmp_path / "c.json"
    _write_json(cfg_path, _tiny_sweep())
    for name in ("a", "b"):
        assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / name),
                     "--workers", "1"]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    ma, mb = json.loads(a.pop("manifest.json")), json.loads(b.pop("manifest.json"))
    assert a == b
    assert ma["config_hash"] == mb["config_hash"]

    cfg_path.write_text(cfg_path.read_text() + " ")
    assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / "c"),
                 "--workers", "1"]) == 0
    mc = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert mc["config_hash"] != ma["config_hash"]
    assert _files(tmp_path / "c").keys() - {"manifest.json"} == a.keys()


def test_seed_override_changes_results(tmp_path):
    cfg = _write_json(tmp_path / "c.json", _tiny_sweep())
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1"])
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "1", "--seed", "9"])
    ra = (tmp_path / "a" / "Peak-valley" / "cells.csv").read_bytes()
    rb = (tmp_path / "b" / "Peak-valley" / "cells.csv").read_bytes()
    assert ra != rb
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed_override"] == 9


@pytest.mark.slow
def test_default_config_on_16x16(tmp_path):
    cfg = default_sweep_config()
    for s in cfg["surfaces"]:
        s["size"] = 16
    cfg["trials"] = 2
    path = _write_json(tmp_path / "c.json", cfg)
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    for label in ("Ramp-peak", "Sphere", "Peak-valley"):
        rows = list(csv.DictReader((tmp_path / "o" / label / "cells.csv").open()))
        assert len(rows) == 35
    assert len((tmp_path / "o" / "optimal.csv").read_text().splitlines()) == 4


# --- reconstruct ------------------------------------------------------------

def _recon_cfg(**kw):
    cfg = default_reconstruct_config()
    cfg["surface"] = {"kind": "sphere", "size": 16}
    cfg.update(kw)
    return cfg


def test_reconstruct_noiseless_sphere(tmp_path):
    cfg = _write_json(tmp_path / "c.json", _recon_cfg(
        **{"lambda": 1e-6, "delta": 2.0, "m_ratio": 1.0, "noise": {"kind": "none"},
           "dcs": {"outer_iters": 30, "max_iter": 5000, "tol": 1e-12}}))
    out = tmp_path / "o"
    assert main(["reconstruct", "--config", cfg, "--out", str(out)]) == 0
    score = json.loads((out / "score.json").read_text())
    assert score["snr_surface_db"] == "inf" or score["snr_surface_db"] >= 40.0
    surf = np.loadtxt(out / "surface.csv", delimiter=",")
    ref = np.loadtxt(out / "reference.csv", delimiter=",")
    assert surf.shape == ref.shape == (16, 16)
    assert np.sqrt(np.mean((surf - ref) ** 2)) == pytest.approx(score["rmse"], rel=1e-9)
    trace = list(csv.DictReader((out / "trace.csv").open()))
    assert len(trace) == score["outer_iterations"]
    assert {"t", "constraint_norm", "objective"} <= set(trace[0])


def test_reconstruct_huge_lambda_gives_zero_db(tmp_path):
    cfg = _recon_cfg(**{"lambda": 10.0, "noise": {"kind": "gaussian"}})
    cfg["surface"] = {"kind": "peak_valley", "size": 16}
    path = _write_json(tmp_path / "c.json", cfg)
    assert main(["reconstruct", "--config", path, "--out", str(tmp_path / "o")]) == 0
    zx = np.loadtxt(tmp_path / "o" / "zx.csv", delimiter=",")
    zy = np.loadtxt(tmp_path / "o" / "zy.csv", delimiter=",")
    assert not np.any(zx) and not np.any(zy)
    score = json.loads((tmp_path / "o" / "score.json").read_text())
    assert score["snr_surface_db"] == 0.0


def test_reconstruct_is_byte_identical(tmp_path):
    path = _write_json(tmp_path / "c.json", _recon_cfg(dcs={"outer_iters": 3, "max_iter": 200}))
    for name in ("a", "b"):
        assert main(["reconstruct", "--config", path, "--out", str(tmp_path / name)]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b
    assert set(a) == {"surface.csv", "reference.csv", "zx.csv", "zy.csv", "score.json",
                      "trace.csv"}


def test_reconstruct_from_file(tmp_path):
    src = tmp_path / "s.csv"
    assert main(["gen-surface", "--kind", "ramp_peak", "--size", "8", "--out", str(src)]) == 0
    cfg = _recon_cfg(surface={"path": str(src), "label": "mine"}, dcs={"outer_iters": 2})
    path = _write_json(tmp_path / "c.json", cfg)
    assert main(["reconstruct", "--config", path, "--out", str(tmp_path / "o")]) == 0
    score = json.loads((tmp_path / "o" / "score.json").read_text())
    assert score["surface"] == "mine" and score["n"] == 64
    assert math.isfinite(score["snr_surface_db"])


def test_reconstruct_flat_surface_is_config_error(tmp_path):
    src = tmp_path / "flat.csv"
    src.write_text("1,1\n1,1\n")
    path = _write_json(tmp_path / "c.json", _recon_cfg(surface={"path": str(src)}))
    assert main(["reconstruct", "--config", path, "--out", str(tmp_path / "o")]) == 2
