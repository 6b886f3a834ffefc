import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sqgda import io
from sqgda.cli import main
from sqgda.errors import ConfigurationError, InvalidInputError


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def files_on_disk(d):
    return sorted(str(p.relative_to(d)) for p in d.rglob("*") if p.is_file())


# --------------------------------------------------------------- config


def test_config_defaults_and_types():
    cfg = io.parse_config_text("grid.nx = 48\nsweep.mus = 1, 2.5\ntwin.linear_only = yes  # trailing comment\n")
    assert cfg["grid.nx"] == 48 and cfg["grid.ny"] == 48
    assert cfg["sweep.mus"] == (1.0, 2.5) and cfg["twin.linear_only"] is True
    assert cfg["sweep.gammas"] == (cfg["params.gamma"],)


@pytest.mark.parametrize(
    "text, match",
    [
        ("grid.nq = 4", "grid.nq"),
        ("grid.nx = 4\ngrid.nx = 8", "duplicate"),
        ("grid.nx = four", "grid.nx"),
        ("just words", "key = value"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigurationError, match=match):
        io.parse_config_text(text)


def test_load_config_hash(tmp_path):
    p = write_cfg(tmp_path, "grid.nx = 32\n")
    _, h1 = io.load_config(p)
    _, h2 = io.load_config(p)
    assert h1 == h2 and len(h1) == 64


# ---------------------------------------------------------------- files


@settings(max_examples=30, deadline=None)
@given(
    values=arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(allow_nan=False)),
    t=st.floats(0, 1e6),
)
def test_snapshot_round_trip_bit_exact(tmp_path_factory, values, t):
    p = tmp_path_factory.mktemp("snap") / "s.sqgf"
    io.write_snapshot(p, values, t, 0.01, 1.5)
    s = io.read_snapshot(p)
    assert s.values.tobytes() == np.ascontiguousarray(values).tobytes()
    assert (s.time, s.kappa, s.gamma, s.nx, s.ny) == (t, 0.01, 1.5, values.shape[1], values.shape[0])


def test_snapshot_rejects_corruption(tmp_path):
    p = io.write_snapshot(tmp_path / "a.sqgf", np.zeros((4, 4)), 0.0, 1.0, 1.0)
    data = p.read_bytes()
    (tmp_path / "b.sqgf").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "c.sqgf").write_bytes(data[:-8])
    for name in ("b.sqgf", "c.sqgf"):
        with pytest.raises(InvalidInputError):
            io.read_snapshot(tmp_path / name)
    with pytest.raises(InvalidInputError):
        io.write_snapshot(tmp_path / "d.sqgf", np.zeros(3), 0, 1, 1)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(allow_nan=False))
def test_csv_floats_round_trip(v):
    assert float(io.format_value(v)) == v


def test_csv_formatting(tmp_path):
    p = io.write_csv(tmp_path / "x.csv", ["a", "b", "c"], [{"a": 1, "b": 0.1, "c": True}, (2, math.inf, False)])
    assert p.read_text() == "a,b,c\n1,0.10000000000000001,true\n2,inf,false\n"
    cols, rows = io.read_csv(p)
    assert cols == ["a", "b", "c"] and rows[1] == ["2", "inf", "false"]


def test_manifest_lists_itself(tmp_path):
    m = io.RunManifest("simulate", {"a": (1, 2), "b": math.inf}, "abc", 0, tmp_path)
    m.add(tmp_path / "x.csv")
    doc = io.read_manifest(m.finish())
    assert doc["files"] == ["manifest.json", "x.csv"] and doc["status"] == "ok"
    assert doc["config"] == {"a": [1, 2], "b": "inf"}


# ------------------------------------------------------------------ CLI

SMALL = """grid.nx = 32
params.kappa = 0.05
forcing.amplitude = 0.1
forcing.kx = 2
forcing.ky = 1
obs.n = 8
twin.t_spin = 2
twin.t_assim = 2
output.cadence = 0.1
"""


def test_simulate_outputs_and_manifest(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, SMALL + "simulate.t_end = 1\noutput.snapshot_every = 0.5\n")
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    doc = io.read_manifest(out / "manifest.json")
    assert doc["status"] == "ok" and doc["files"] == files_on_disk(out)
    assert {"series.csv", "snapshot_00000.sqgf", "snapshot_00002.sqgf"} <= set(doc["files"])
    s = io.read_snapshot(out / "snapshot_00002.sqgf")
    assert abs(s.time - 1.0) < 1e-12 and s.kappa == 0.05


def test_twin_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["twin", "--config", cfg, "--out", str(tmp_path / d), "--seed", "7"]) == 0
    for name in ("twin_series.csv", "twin_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cols, _ = io.read_csv(tmp_path / "a" / "twin_series.csv")
    assert cols == ["t", "err_l2", "err_hsigma", "err_hminushalf", "err_streamgrad", "theta_l2", "eta_l2"]
    assert io.read_manifest(tmp_path / "a" / "manifest.json")["files"] == files_on_disk(tmp_path / "a")


def test_gamma_out_of_range_exits_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL + "params.gamma = 3\n")
    assert main(["twin", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "(0, 2]" in capsys.readouterr().err
    doc = io.read_manifest(tmp_path / "o" / "manifest.json")
    assert doc["status"] == "failed" and "(0, 2]" in doc["failure"]


def test_unknown_key_exits_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL + "twin.bogus = 1\n")
    assert main(["twin", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "twin.bogus" in capsys.readouterr().err
    assert io.read_manifest(tmp_path / "o" / "manifest.json")["status"] == "failed"


def test_divergence_exits_2(tmp_path, capsys):
    text = SMALL.replace("params.kappa = 0.05", "params.kappa = 0.001").replace("amplitude = 0.1", "amplitude = 20")
    cfg = write_cfg(tmp_path, text + "twin.dt = 0.5\nsimulate.t_end = 50\n")
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "last good time" in err
    doc = io.read_manifest(out / "manifest.json")
    assert doc["status"] == "failed" and doc["files"] == files_on_disk(out) and "series.csv" in doc["files"]


def test_io_failure_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["simulate", "--config", cfg, "--out", str(blocker / "sub")]) == 3
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 3


def test_grid_info_writes_nothing(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_cfg(tmp_path, "grid.nx = 16\n")
    assert main(["grid-info", "--config", cfg]) == 0
    assert "dealias" in capsys.readouterr().out
    assert files_on_disk(tmp_path) == ["run.cfg"]


def test_props_rough_modal_commutators(tmp_path):
    cfg = write_cfg(tmp_path, "grid.nx = 128\nobs.kind = rough_modal\nprops.n_fields = 2\n")
    assert main(["props", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    cols, rows = io.read_csv(tmp_path / "o" / "properties.csv")
    i, ip, il = cols.index("property_id"), cols.index("pass"), cols.index("lhs")
    comm = [r for r in rows if r[i].startswith("2.2")]
    assert comm and all(r[ip] == "true" and float(r[il]) <= 1e-10 for r in comm)


def test_stream_diag_with_slices(tmp_path):
    cfg = write_cfg(tmp_path, "grid.nx = 32\nstream.n_fields = 5\nstream.export_z = 0, 0.5\n")
    out = tmp_path / "o"
    assert main(["stream-diag", "--config", cfg, "--out", str(out)]) == 0
    cols, rows = io.read_csv(out / "stream_diag.csv")
    assert len(rows) == 5 and all(float(r[cols.index("rel_diff")]) <= 1e-5 for r in rows)
    assert io.read_snapshot(out / "slice_0001.sqgf").time == 0.5
    assert json.loads((out / "manifest.json").read_text())["files"] == files_on_disk(out)


def test_negative_seed_rejected(tmp_path):
    assert main(["twin", "--config", write_cfg(tmp_path, SMALL), "--seed", "-1"]) == 1
