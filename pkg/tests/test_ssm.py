import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from oracles import naive_scan
from octaseg.ssm import (CFEB, LSA, CrossScan2D, FAZMambaBlock, RVMambaBlock, SelectiveScan, VSS2D,
                         circle_mask, selective_scan)
from octaseg.ssm.ss2d import fold_directions, unfold_directions
from octaseg.blocks import count_params
from octaseg.vmaf import VMAF

MODES = ("fused", "loop", "assoc")


def _random_case(rng, bsz, length, dim, n):
    u = rng.normal(size=(bsz, length, dim))
    delta = rng.uniform(0.01, 1.0, size=(bsz, length, dim))
    A = -rng.uniform(0.1, 2.0, size=(dim, n))
    B = rng.normal(size=(bsz, length, n))
    C = rng.normal(size=(bsz, length, n))
    D = rng.normal(size=dim)
    return u, delta, A, B, C, D


@pytest.mark.parametrize("mode", MODES)
def test_hand_evaluated_recurrence(mode):
    # exp(delta*A) = 0.5, so h = [1, 1.5, 1.75]
    one = torch.ones(1, 3, 1, dtype=torch.float64)
    y = selective_scan(one, one, torch.tensor([[-math.log(2)]], dtype=torch.float64),
                       one, one, torch.zeros(1, dtype=torch.float64), mode=mode)
    assert torch.allclose(y.flatten(), torch.tensor([1.0, 1.5, 1.75], dtype=torch.float64), atol=1e-12)


@pytest.mark.parametrize("mode", MODES)
def test_zero_input_projection_is_skip(mode):
    u = torch.randn(2, 7, 3, dtype=torch.float64)
    y = selective_scan(u, torch.rand_like(u), -torch.rand(3, 4, dtype=torch.float64),
                       torch.zeros(2, 7, 4, dtype=torch.float64), torch.randn(2, 7, 4, dtype=torch.float64),
                       torch.ones(3, dtype=torch.float64), mode=mode)
    assert torch.equal(y, u)


@pytest.mark.parametrize("mode", MODES)
def test_vanishing_step(mode):
    x = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64).reshape(1, 3, 1)
    one = torch.ones(1, 3, 1, dtype=torch.float64)
    y = selective_scan(x, torch.full_like(x, 1e-9), -torch.ones(1, 1, dtype=torch.float64), one, one,
                       torch.zeros(1, dtype=torch.float64), mode=mode)
    assert y.abs().max() < 1e-6


@pytest.mark.parametrize("mode", MODES)
def test_causality(mode):
    rng = np.random.default_rng(3)
    args = [torch.from_numpy(a) for a in _random_case(rng, 1, 6, 2, 3)]
    y0 = selective_scan(*args, mode=mode)
    args[0] = args[0].clone()
    args[0][:, 2:] = torch.randn(1, 4, 2, dtype=torch.float64)
    y1 = selective_scan(*args, mode=mode)
    assert torch.equal(y0[:, :2], y1[:, :2])
    assert not torch.equal(y0[:, 2:], y1[:, 2:])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), length=st.integers(1, 40), dim=st.integers(1, 6),
       n=st.integers(1, 8), mode=st.sampled_from(MODES))
def test_matches_naive_loop(seed, length, dim, n, mode):
    case = _random_case(np.random.default_rng(seed), 2, length, dim, n)
    expected = naive_scan(*case)
    got = selective_scan(*(torch.from_numpy(a) for a in case), mode=mode).numpy()
    np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-9)


def test_float32_inputs_supported():
    case = [torch.from_numpy(a).float() for a in _random_case(np.random.default_rng(0), 2, 16, 3, 4)]
    a = selective_scan(*case, mode="fused")
    b = selective_scan(*case, mode="loop")
    assert a.dtype == torch.float32
    assert torch.allclose(a, b, atol=1e-5)


def test_unknown_mode():
    case = [torch.from_numpy(a) for a in _random_case(np.random.default_rng(0), 1, 2, 1, 1)]
    with pytest.raises(ValueError):
        selective_scan(*case, mode="cuda")


@pytest.mark.parametrize("mode", MODES)
def test_scan_gradcheck(mode):
    case = [torch.from_numpy(a).requires_grad_() for a in _random_case(np.random.default_rng(7), 1, 5, 2, 3)]
    assert torch.autograd.gradcheck(lambda *t: selective_scan(*t, mode=mode), case, eps=1e-6, atol=1e-8, rtol=1e-5)


def test_module_gradcheck_wrt_A_log(f64):
    m = SelectiveScan(3, d_state=4)
    assert m.A_log.dtype == torch.float64
    u = torch.randn(1, 6, 3)

    def f(a_log):
        m.A_log.data = a_log
        delta, B, C = m.project(u)
        return selective_scan(u, delta, -torch.exp(a_log), B, C, m.D)

    a = m.A_log.detach().clone().requires_grad_()
    assert torch.autograd.gradcheck(f, (a,), eps=1e-6, atol=1e-8, rtol=1e-5)


def test_selective_scan_module_init():
    m = SelectiveScan(32, d_state=16)
    assert m.dt_rank == 2
    assert (m.A < 0).all()
    assert torch.allclose(m.A[0], -torch.arange(1.0, 17.0))
    delta, B, C = m.project(torch.randn(2, 10, 32))
    assert (delta > 0).all() and B.shape == C.shape == (2, 10, 16)


# ---------------------------------------------------------------- cross-scan

def test_unfold_fold_round_trip():
    x = torch.randn(2, 3, 4, 5)
    seqs = unfold_directions(x)
    assert all(s.shape == (2, 20, 3) for s in seqs)
    folded = fold_directions(seqs, 4, 5)
    assert torch.allclose(folded.transpose(1, 2).reshape(2, 3, 4, 5), 4 * x)


def test_cross_scan_single_pixel():
    m = CrossScan2D(4, d_state=3)
    x = torch.randn(2, 4, 1, 1)
    y = m(x)
    z = torch.nn.functional.silu(m.dwconv(x)).flatten(2).transpose(1, 2)
    single = sum(scan(z) for scan in m.scans)
    assert torch.allclose(y.flatten(2).transpose(1, 2), m.norm(single), atol=1e-6)


def test_cross_scan_rotation_equivariance():
    m = CrossScan2D(3, d_state=4, mode="fused").double()
    with torch.no_grad():
        for scan in m.scans[1:]:
            scan.load_state_dict(m.scans[0].state_dict())
        k = torch.randn(3, 1, 3, 3, dtype=torch.float64)
        m.dwconv.weight.copy_((k + k.flip(2, 3)) / 2)  # symmetric under 180 degree rotation
    x = torch.randn(1, 3, 5, 5, dtype=torch.float64)
    rot = lambda t: torch.rot90(t, 2, (2, 3))
    assert torch.allclose(m(rot(x)), rot(m(x)), atol=1e-10)


def test_cross_scan_shape():
    assert CrossScan2D(16, 4)(torch.randn(2, 16, 8, 8)).shape == (2, 16, 8, 8)


def test_vss2d_identity_at_init():
    m = VSS2D(8, d_state=4)
    x = torch.randn(2, 8, 6, 6)
    assert torch.equal(m(x), x)


def test_vss2d_unit_gate(monkeypatch):
    m = VSS2D(8, d_state=4)
    torch.nn.init.normal_(m.proj_out.weight)
    monkeypatch.setattr(m, "gate", lambda x: torch.ones_like(m.proj_gate(x)))
    x = torch.randn(1, 8, 5, 5)
    assert torch.allclose(m(x), m.proj_out(m.scan(m.proj_in(x))) + x)


def test_vss2d_gate_adds_params():
    plain = count_params(VSS2D(16, 4, use_vmaf_gate=False))
    gated = count_params(VSS2D(16, 4, use_vmaf_gate=True))
    assert gated - plain == count_params(VMAF(16)) > 0


# ---------------------------------------------------------------- LSA / CFEB

def test_lsa_zero_conv():
    x = torch.randn(2, 4, 7, 7)
    assert torch.allclose(LSA(4)(x), 1.5 * x)


def test_lsa_gradient_through_gate():
    m = LSA(4)
    torch.nn.init.normal_(m.conv.weight)
    x = torch.randn(1, 4, 6, 6)
    m(x).square().sum().backward()
    assert m.conv.weight.grad.abs().sum() > 0
    assert m(x).shape == x.shape


def test_circle_mask_geometry():
    mask = circle_mask(64, 64)
    assert mask[32, 32] == 1 and mask[32, 48] == 1 and mask[32, 49] == 0
    ii, jj = np.mgrid[0:64, 0:64]
    expected = ((ii - 32) ** 2 + (jj - 32) ** 2 <= 16 ** 2).sum()
    assert int(mask.sum()) == expected
    assert abs(expected - math.pi * 256) / (math.pi * 256) <= 0.04


def test_cfeb_zero_conv_identity():
    m = CFEB(8)
    torch.nn.init.zeros_(m.conv.weight)
    x = torch.randn(1, 8, 16, 16)
    assert torch.equal(m(x), x)


def test_cfeb_residual_scale():
    m = CFEB(8)
    x = torch.randn(2, 8, 16, 16)
    assert torch.allclose(m(x) - x, 0.3 * m.features(x), atol=1e-6)


def test_cfeb_mask_doubles_inside_disc():
    m, plain = CFEB(8, use_mask=True), CFEB(8, use_mask=False)
    plain.load_state_dict(m.state_dict())
    x = torch.randn(1, 8, 16, 16)
    ratio = m.features(x) / plain.features(x)
    disc = circle_mask(16, 16).bool()
    assert torch.allclose(ratio[..., disc], torch.tensor(2.0))
    assert torch.allclose(ratio[..., ~disc], torch.tensor(1.0))


# ---------------------------------------------------------------- Mamba blocks

@pytest.mark.parametrize("factory", [RVMambaBlock, FAZMambaBlock])
def test_block_shape(factory):
    x = torch.randn(2, 8, 12, 12)
    assert factory(8, d_state=4).forward(x).shape == x.shape


def test_block_param_relation():
    c = 16
    rv = count_params(RVMambaBlock(c, d_state=4))
    faz = count_params(FAZMambaBlock(c, d_state=4, cfeb=True))
    assert faz == rv - count_params(VMAF(c)) + count_params(CFEB(c))
    assert count_params(FAZMambaBlock(c, d_state=4, cfeb=False)) == rv - count_params(VMAF(c))


@pytest.mark.parametrize("factory,kw", [(RVMambaBlock, {}), (FAZMambaBlock, {"cfeb": True}),
                                        (RVMambaBlock, {"hdfe": False, "vmaf": False})])
def test_block_identity_after_reset(factory, kw):
    m = factory(8, d_state=4, **kw)
    with torch.no_grad():
        for p in m.parameters():
            p.add_(0.05 * torch.randn_like(p))
    x = torch.randn(1, 8, 10, 10)
    assert not torch.equal(m(x), x)
    m.reset_to_identity()
    assert torch.equal(m(x), x)


def test_bad_kind():
    from octaseg.ssm import MambaBlock
    with pytest.raises(ValueError):
        MambaBlock(8, kind="other")
