import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monarchconv.plan import (
    A100,
    CostModelParams,
    build_plan,
    cost,
    factorize,
    gamma,
    load_profile,
    omega,
    parse_profile,
    select_order,
)


@pytest.mark.parametrize(
    "n,p,expected",
    [(4096, 2, [64, 64]), (4096, 3, [16, 16, 16]), (8192, 3, [32, 16, 16]), (2**16, 4, [16, 16, 16, 16]), (32, 4, [4, 2, 2, 2])],
)
def test_factorize(n, p, expected):
    assert list(factorize(n, p)) == expected


@given(st.integers(4, 24), st.sampled_from([2, 3, 4]))
def test_factorize_properties(e, p):
    f = factorize(2**e, p)
    assert int(np.prod(f)) == 2**e and len(f) == p
    assert list(f) == sorted(f, reverse=True)
    assert max(f) <= 2 * min(f)


def test_factorize_rejects():
    with pytest.raises(ValueError):
        factorize(12, 2)
    with pytest.raises(ValueError):
        factorize(4, 3)


def test_build_plan_shapes():
    plan = build_plan(4096, 3)
    assert plan.factors == (16, 16, 16)
    assert [m.shape for m in plan.forward_matrices] == [(16, 16)] * 3
    assert [t.shape for t in plan.forward_twiddles] == [(16, 256), (16, 16)]
    real = build_plan(4096, 3, real_input=True)
    assert real.fft_size == 2048 and int(np.prod(real.factors)) == 2048


def test_layout_is_permutation():
    plan = build_plan(64, 3)
    assert sorted(plan.layout) == list(range(64))
    np.testing.assert_array_equal(plan.layout[plan.position], np.arange(64))
    x = np.arange(64.0)
    np.testing.assert_array_equal(plan.to_flat(plan.to_plan(x)), x)


def test_build_plan_rejects():
    with pytest.raises(ValueError):
        build_plan(100, 2)
    with pytest.raises(ValueError):
        build_plan(64, 5)
    with pytest.raises(ValueError):
        build_plan(64, 2, factors=(4, 4))
    with pytest.raises(ValueError):
        build_plan(64, 2, precision="half")


def test_gamma_threshold():
    assert gamma(8) == A100.tau_g
    assert gamma(16) == A100.tau_m


def test_omega_sram_residence():
    # whole 4096-point sequence is 16 KiB, resident in SRAM
    assert omega(1, (64, 64), 4096) == A100.sigma_s
    # a 2^20-point sequence is 4 MiB: first stage streams from HBM, later ones fit
    f = factorize(2**20, 4)
    assert omega(1, f, 2**20) == A100.sigma_h
    assert omega(2, f, 2**20) == A100.sigma_s


def test_cost_frozen_value():
    c = cost(4096, 2)
    assert c.flop_seconds == pytest.approx(16 * 4096 * 64 * 2 / A100.tau_m, rel=1e-12)
    assert c.flop_seconds == pytest.approx(3.5849e-8, rel=1e-4)
    assert c.io_seconds == pytest.approx(2 * 4 * 4096 / A100.sigma_s)
    assert c.seconds == pytest.approx(c.flop_seconds + c.io_seconds)


def test_cost_scales_linearly_in_batch():
    one = cost(2**14, 3).seconds
    assert cost(2**14, 3, b=4, h=3).seconds == pytest.approx(12 * one)


@pytest.mark.parametrize("n,p", [(256, 2), (1024, 2), (4096, 3), (8192, 3), (16384, 3), (32768, 3), (2**20, 4), (2**21, 4), (2**22, 4)])
def test_crossovers(n, p):
    assert select_order(n) == p


def test_selection_non_decreasing():
    picks = [select_order(2**e) for e in range(8, 23)]
    assert picks == sorted(picks)


def test_p4_bump_at_sram_boundary():
    # p=4 pays for small factors (below mu) until the length is large
    assert cost(4096, 4).seconds > cost(4096, 3).seconds
    assert cost(2**20, 4).seconds < cost(2**20, 3).seconds


def test_parse_profile(tmp_path):
    text = "# desk\nmu=16\ntau_g=1e12\ntau_m=2e12\nsigma_h=1e11\nsigma_s = 1e12  # fast\n"
    params = parse_profile(text)
    assert params.tau_m == 2e12 and params.sram_budget == A100.sram_budget
    path = tmp_path / "p.txt"
    path.write_text(text)
    assert load_profile(str(path)) == params
    assert load_profile("a100") is A100


def test_profile_errors():
    with pytest.raises(ValueError, match="unknown profile"):
        load_profile("no-such-gpu")
    with pytest.raises(ValueError):
        parse_profile("mu=16\nbogus=3\n")
    with pytest.raises(ValueError, match="missing"):
        parse_profile("mu=16\n")
    with pytest.raises(ValueError):
        CostModelParams(mu=16, tau_g=-1, tau_m=1, sigma_h=1, sigma_s=1)


def test_select_order_rejects_small():
    with pytest.raises(ValueError):
        select_order(8)


def test_p3_bump_when_sequences_leave_sram():
    # extrapolate the p=3 trend from 2^14 -> 2^15 and compare with 2^16
    c14, c15, c16 = (cost(2**e, 3).seconds for e in (14, 15, 16))
    assert c16 > c15 * (c15 / c14)
    st16 = cost(2**16, 3).per_stage
    assert st16[0].bandwidth == A100.sigma_h and cost(2**15, 3).per_stage[0].bandwidth == A100.sigma_s


def test_per_stage_sums_to_totals():
    c = cost(2**18, 4, b=2, h=3)
    assert sum(s.flop_seconds for s in c.per_stage) == pytest.approx(c.flop_seconds)
    assert sum(s.io_seconds for s in c.per_stage) == pytest.approx(c.io_seconds)
    assert c.seconds >= 0
