import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

import monarchconv.dft as dft_mod
import monarchconv.plan as plan_mod
from monarchconv.cli import BENCH_HEADER, main, parse_lengths
from monarchconv.tensor_io import read_tensor, write_tensor


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_parse_lengths():
    assert parse_lengths("256..4096") == [256, 512, 1024, 2048, 4096]
    assert parse_lengths("16,64..128") == [16, 64, 128]


@pytest.mark.parametrize("bad", ["100", "64..32", "x", ""])
def test_bad_lengths_are_usage_errors(bad):
    assert run("plan", "--n", bad)[0] == 2


def test_verify_fft_passes():
    code, text = run("verify", "--suite", "fft")
    assert code == 0
    assert "seed=0" in text
    assert all(line.startswith("PASS") for line in text.splitlines()[1:])
    worst = float(text.splitlines()[1].split("worst=")[1].split()[0])
    assert worst <= 1e-9


def test_verify_conv_range():
    code, text = run("verify", "--suite", "conv", "--n", "256..4096")
    assert code == 0, text


def test_verify_catches_flipped_twiddles(monkeypatch):
    original = dft_mod.twiddle_grid

    def flipped(n1, n2, direction=dft_mod.FORWARD):
        other = dft_mod.INVERSE if direction == dft_mod.FORWARD else dft_mod.FORWARD
        return original(n1, n2, other)

    monkeypatch.setattr(plan_mod, "twiddle_grid", flipped)
    code, text = run("verify", "--suite", "fft", "--n", "16..64", "--seed", "7")
    assert code == 1
    assert "FAIL" in text
    assert "first failure: n=16 p=2 seed=7" in text


def test_plan_examples():
    code, text = run("plan", "--n", "256", "--profile", "a100")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["n", "cost_p2", "cost_p3", "cost_p4", "selected", "factors"]
    assert rows[0]["selected"] == "2"
    _, text = run("plan", "--n", "4096..32768")
    assert {r["selected"] for r in csv.DictReader(io.StringIO(text))} == {"3"}
    _, text = run("plan", "--n", "1048576", "--format", "json")
    assert json.loads(text)["rows"][0]["selected"] == 4


def test_plan_profile_file(tmp_path):
    path = tmp_path / "slow.txt"
    path.write_text("mu=16\ntau_g=1e12\ntau_m=1e12\nsigma_h=1e12\nsigma_s=1e12\n")
    assert run("plan", "--n", "4096", "--profile", str(path))[0] == 0
    assert run("plan", "--n", "4096", "--profile", "tpu")[0] == 2


def test_bench_rows_and_header():
    code, text = run("bench", "--n", "4096", "--p", "2,3", "--reps", "5")
    assert code == 0
    lines = text.splitlines()
    assert lines[0].split(",") == BENCH_HEADER
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 2
    assert [r["p"] for r in rows] == ["2", "3"]
    assert all(float(r["median_s"]) > 0 and r["status"] == "ok" for r in rows)
    again = run("bench", "--n", "4096", "--p", "2,3", "--reps", "5")[1]
    assert again.splitlines()[0] == lines[0]


def test_bench_check_and_oracle():
    code, text = run("bench", "--n", "1024", "--p", "3", "--reps", "3", "--check", "--oracle",
                     "--gated", "--mode", "causal", "--real", "--precision", "real-64")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["op"] for r in rows] == ["direct_conv", "monarch_conv"]
    assert float(rows[1]["max_abs_err"]) < 1e-8


def test_bench_pattern_reduces_tiles():
    code, text = run("bench", "--pattern", "dims=16,16,16,16;keep=8,8,16,16", "--n", "65536", "--reps", "3")
    assert code == 0
    dense, sparse = list(csv.DictReader(io.StringIO(text)))
    assert dense["op"] == "monarch_conv" and sparse["op"] == "monarch_conv_sparse"
    assert int(sparse["tiles"]) < int(dense["tiles"])


def test_bench_memory_cap_skips():
    code, text = run("bench", "--n", "65536", "--p", "3", "--reps", "3", "--mem-cap", "0.0001")
    assert code == 0
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["status"].startswith("skipped") and row["median_s"] == ""


def test_bench_usage_errors():
    assert run("bench", "--reps", "2")[0] == 2
    assert run("bench", "--p", "5")[0] == 2
    assert run("bench", "--bogus")[0] == 2


@pytest.fixture
def files(tmp_path, rng):
    u = rng.standard_normal((1, 2, 1024))
    k = rng.standard_normal((2, 1024))
    write_tensor(tmp_path / "u", u)
    write_tensor(tmp_path / "k", k)
    return tmp_path, u, k


def test_conv_check(files):
    path, u, k = files
    code, text = run("conv", str(path / "u"), str(path / "k"), "--out", str(path / "y"), "--check")
    assert code == 0
    err = float(text.strip().split("=")[1])
    assert err <= 1e-8
    np.testing.assert_allclose(read_tensor(path / "y"), dft_mod.direct_conv(u, k), atol=1e-9)


def test_conv_delta_kernel(files):
    path, u, _ = files
    delta = np.zeros((2, 1024))
    delta[:, 0] = 1
    write_tensor(path / "d", delta)
    assert run("conv", str(path / "u"), str(path / "d"), "--out", str(path / "y"))[0] == 0
    np.testing.assert_allclose(read_tensor(path / "y"), u, atol=1e-12)


def test_conv_causal_budget(files):
    path, u, _ = files
    write_tensor(path / "long", np.ones((2, 1025)))
    code, _ = run("conv", str(path / "u"), str(path / "long"), "--out", str(path / "y"), "--mode", "causal")
    assert code == 2
    assert not (path / "y").exists()


def test_conv_causal_budget_message(files, capsys):
    path, _, _ = files
    write_tensor(path / "long", np.ones((2, 1025)))
    main(["conv", str(path / "u"), str(path / "long"), "--out", str(path / "y"), "--mode", "causal"])
    assert "kernel exceeds causal budget" in capsys.readouterr().err


def test_conv_gated_and_pattern(files, rng):
    path, u, k = files
    v, w = rng.standard_normal((2,) + u.shape)
    write_tensor(path / "v", v)
    write_tensor(path / "w", w)
    code, _ = run("conv", str(path / "u"), str(path / "k"), "--out", str(path / "y"),
                  "--gated", str(path / "v"), str(path / "w"), "--threads", "2")
    assert code == 0
    assert dft_mod.relative_error(read_tensor(path / "y"), v * dft_mod.direct_conv(u * w, k)) <= 1e-8
    code, _ = run("conv", str(path / "u"), str(path / "k"), "--out", str(path / "s"),
                  "--pattern", "dims=4,4,8,8;keep=4,4,8,8", "--check")
    assert code == 0
    assert dft_mod.relative_error(read_tensor(path / "s"), dft_mod.direct_conv(u, k)) <= 1e-8


def test_conv_flag_conflicts(files):
    path, _, _ = files
    base = [str(path / "u"), str(path / "k"), "--out", str(path / "y")]
    assert run("conv", *base, "--pattern", "dims=4,4,8,8;keep=4,4,8,8", "--real")[0] == 2
    assert run("conv", *base, "--pattern", "dims=4,4,4,16;keep=1,1,1,1")[0] == 2
    assert run("conv", *base, "--gated", str(path / "u"), str(path / "missing"))[0] == 2
    assert run("conv", str(path / "nope"), str(path / "k"), "--out", str(path / "y"))[0] == 2
    assert not (path / "y").exists()


def test_conv_threads_bit_identical(tmp_path, rng):
    u = rng.standard_normal((8, 16, 2048))
    k = rng.standard_normal((16, 2048))
    write_tensor(tmp_path / "u", u)
    write_tensor(tmp_path / "k", k)
    for t in ("1", "4"):
        assert run("conv", str(tmp_path / "u"), str(tmp_path / "k"), "--out", str(tmp_path / t), "--threads", t)[0] == 0
    assert (tmp_path / "1").read_bytes() == (tmp_path / "4").read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "monarchconv", "plan", "--n", "256"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("n,cost_p2")
