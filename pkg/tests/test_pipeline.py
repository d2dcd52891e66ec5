import json
import struct

import numpy as np
import pytest

from greencheb.chebcore import ChebSeries
from greencheb.cli import main
from greencheb.errors import CorruptContainer, VersionMismatch, ZeroExactNorm, ZeroResponseNorm
from greencheb.manifold import SveModel
from greencheb.pipeline import (
    FORMAT_VERSION,
    HEADER,
    build_report,
    load_dataset,
    load_model,
    load_networks,
    read_container,
    relative_error,
    save_dataset,
    save_model,
    test_error as mean_test_error,
    write_container,
)
from greencheb.problems import ProblemSpec, make_dataset
from greencheb.quasimatrix import Quasimatrix
from greencheb.ratnet import AdfSpec, RatNet, TrainData, loss


def sep_model(theta=0.0, c=1.0, H=None):
    """Rank-one model of ``c sin(pi x) sin(pi s)`` on the unit square."""
    from greencheb.chebcore import build_adaptive

    f = build_adaptive(lambda t: np.sqrt(2) * np.sin(np.pi * t), (0, 1))
    Q = Quasimatrix((0, 1), f.coeffs[:, None])
    return SveModel(Q, [0.5 * c], Q, H, theta)


def sep_exact(x, s):
    return np.sin(np.pi * x) * np.sin(np.pi * s)


def test_relative_error_examples():
    assert relative_error(sep_model(), sep_exact) <= 1e-9
    assert abs(relative_error(sep_model(c=1.3), sep_exact) - 0.3) <= 1e-9
    with pytest.raises(ZeroExactNorm):
        relative_error(sep_model(), lambda x, s: 0.0 * x * s)


def test_test_error_examples():
    ds = make_dataset(ProblemSpec("poisson"), n_samples=5, seed=0)
    zero = SveModel(Quasimatrix.empty((0, 1)), [], Quasimatrix.empty((0, 1)), None)
    assert mean_test_error(zero, ds) == pytest.approx(100.0, abs=1e-12)
    # a model whose homogeneous part is the one response and whose kernel vanishes
    one = make_dataset(ProblemSpec("poisson"), n_samples=1, seed=0)
    H = ChebSeries(ProblemSpec("poisson").domain, np.array([0.5, -0.2, 0.1]))
    one.U[:, 0] = H(one.x)
    exact = SveModel(Quasimatrix.empty((0, 1)), [], Quasimatrix.empty((0, 1)), H)
    assert mean_test_error(exact, one) <= 1e-12
    bad = make_dataset(ProblemSpec("poisson"), n_samples=2, seed=0)
    bad.U[:, 1] = 0.0
    with pytest.raises(ZeroResponseNorm):
        mean_test_error(zero, bad)


def test_model_roundtrip_bitwise(tmp_path, rng):
    m = sep_model(theta=2.5)
    net = RatNet(2, 1, width=5, depth=2, seed=1)
    save_model(tmp_path / "m.gcm", m, {"G": net}, {"note": "x"})
    back = load_model(tmp_path / "m.gcm")
    x, s = rng.uniform(0, 1, (2, 50))
    assert np.array_equal(back(x, s), m(x, s))
    assert back.theta == 2.5
    nets = load_networks(tmp_path / "m.gcm")
    z = rng.uniform(0, 1, (10, 2))
    import torch

    with torch.no_grad():
        assert torch.equal(nets["G"](torch.tensor(z)), net(torch.tensor(z)))


def test_dataset_roundtrip(tmp_path):
    ds = make_dataset(ProblemSpec("airy", 3.0), n_samples=6, seed=2, zeta=0.1)
    save_dataset(tmp_path / "d.gds", ds)
    back = load_dataset(tmp_path / "d.gds")
    for k in ("x", "s", "F", "U", "U_clean", "train_idx", "val_idx"):
        assert np.array_equal(getattr(back, k), getattr(ds, k))
    assert back.problem == ds.problem and back.zeta == ds.zeta


def test_truncated_and_corrupt(tmp_path):
    p = tmp_path / "m.gcm"
    save_model(p, sep_model())
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(CorruptContainer):
        load_model(p)
    p.write_bytes(raw[:10])
    with pytest.raises(CorruptContainer):
        load_model(p)
    flipped = bytearray(raw)
    flipped[-1] ^= 1
    p.write_bytes(bytes(flipped))
    with pytest.raises(CorruptContainer):
        load_model(p)
    p.write_bytes(raw)
    with pytest.raises(CorruptContainer):
        load_dataset(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "m.gcm"
    save_model(p, sep_model())
    raw = bytearray(p.read_bytes())
    struct.pack_into("<I", raw, 8, FORMAT_VERSION + 1)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_model(p)


def test_container_layout(tmp_path):
    p = tmp_path / "c.bin"
    write_container(p, "thing", {"a": 1}, {"v": np.arange(3.0)})
    raw = p.read_bytes()
    magic, version, _, mlen = HEADER.unpack_from(raw)
    assert magic == b"GRNCHEB\0" and mlen % 8 == 0
    assert np.array_equal(np.frombuffer(raw[HEADER.size + mlen :], "<f8"), [0.0, 1.0, 2.0])
    man, blocks = read_container(p, "thing")
    assert man["meta"] == {"a": 1}


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_generate_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run_cli(capsys, "generate", "--problem", "poisson", "--n", 100, "--seed", 7, "--out", tmp_path / f"{name}.gds")
        assert code == 0
    assert (tmp_path / "a.gds").read_bytes() == (tmp_path / "b.gds").read_bytes()
    assert json.loads(out)["n_train"] == 95


def test_cli_dataset_loss_matches_memory(tmp_path, capsys):
    run_cli(capsys, "generate", "--problem", "poisson", "--n", 12, "--seed", 3, "--out", tmp_path / "d.gds")
    mem = make_dataset(ProblemSpec("poisson"), n_samples=12, seed=3)
    disk = load_dataset(tmp_path / "d.gds")
    netG = RatNet(2, 1, width=6, depth=2, lo=[0, 0], hi=[1, 1], seed=2)
    netH = RatNet(1, 1, width=6, depth=2, lo=[0], hi=[1], seed=3)
    adf = AdfSpec((0, 1), (0, 1))
    a = loss(TrainData(mem.x, mem.s, mem.F, mem.U), netG, netH, adf)
    b = loss(TrainData(disk.x, disk.s, disk.F, disk.U), netG, netH, adf)
    assert a == b


def test_cli_sve_and_evaluate(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "sve", "--problem", "poisson", "--out", tmp_path / "p.gcm")
    assert code == 0
    sig = json.loads(out)["sigma_head"]
    assert np.allclose(sig, 1 / (np.pi * np.arange(1, 6)) ** 2, rtol=5e-3)
    code, out, _ = run_cli(capsys, "evaluate", "--model", tmp_path / "p.gcm", "--exact", "poisson")
    # the kink on the diagonal caps the exact kernel's SVE accuracy near 1e-3
    assert code == 0 and json.loads(out)["relative_error"] <= 2e-3


def test_cli_train_interpolate_report_deterministic(tmp_path, capsys):
    paths = []
    for th in (1.0, 2.0):
        d = tmp_path / f"d{th}.gds"
        run_cli(capsys, "generate", "--problem", "advection_diffusion", "--theta", th, "--n", 8, "--nx", 60, "--ns", 60,
                "--seed", 1, "--out", d)
        for rep in ("a", "b"):
            code, _, err = run_cli(capsys, "train", "--data", d, "--epochs", 5, "--nodes", 16, "--tol", 1e-6,
                                   "--rank-cap", 24, "--out", tmp_path / f"m{th}{rep}.gcm")
            assert code == 0, err
        assert (tmp_path / f"m{th}a.gcm").read_bytes() == (tmp_path / f"m{th}b.gcm").read_bytes()
        assert (tmp_path / f"m{th}a.gcm.loss.csv").exists()
        paths.append(tmp_path / f"m{th}a.gcm")
    for rep in ("a", "b"):
        code, out, err = run_cli(capsys, "interpolate", "--models", *paths, "--theta", 1.5, "--out", tmp_path / f"i{rep}.gcm")
        assert code == 0, err
    assert (tmp_path / "ia.gcm").read_bytes() == (tmp_path / "ib.gcm").read_bytes()
    prov = json.loads((tmp_path / "ia.gcm.json").read_text())
    assert prov["base_theta"] == 1.0 and len(prov["library"]) == 2
    code, out, _ = run_cli(capsys, "report", "--models", paths[0], "--data", tmp_path / "d1.0.gds",
                           "--exact", "advection_diffusion", "--out", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    row = rep["models"][0]
    direct = build_report([paths[0]], [tmp_path / "d1.0.gds"], "advection_diffusion")["models"][0]
    assert row["relative_error"] == direct["relative_error"]
    assert row["tests"][0]["test_error_pct"] == direct["tests"][0]["test_error_pct"]


def test_cli_verify_orders(capsys):
    code, out, _ = run_cli(capsys, "verify-orders", "--seed", 1)
    r = json.loads(out)
    assert code == 0 and r["retraction_ok"] and r["projection_ok"]


def test_cli_errors(tmp_path, capsys):
    code, _, err = run_cli(capsys, "generate", "--problem", "poisson")
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run_cli(capsys, "generate", "--problem", "nope", "--out", tmp_path / "x.gds")
    assert code == 1 and "error" in json.loads(err)
    (tmp_path / "bad.gcm").write_bytes(b"junk")
    code, _, err = run_cli(capsys, "evaluate", "--model", tmp_path / "bad.gcm")
    assert code == 1 and json.loads(err)["error"] == CorruptContainer.code
    code, _, err = run_cli(capsys, "sve", "--problem", "airy", "--theta", 1, "--out", tmp_path / "a.gcm")
    assert code == 2
