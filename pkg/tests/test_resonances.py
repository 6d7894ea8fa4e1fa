import math

import numpy as np
import pytest

from lossy_cavity import resonances as rs
from lossy_cavity.optical_stack import ConstantPermittivity as C
from lossy_cavity.optical_stack import LayerStack, LorentzPermittivity, StackResponse
from lossy_cavity.resonances import (
    BranchJumpError,
    ConvergenceError,
    find_resonance,
    find_resonances,
    io_coefficients,
    leading_order_linewidth,
    lossless_guess,
    loss_budget,
    mirror_loss_sum,
    validate_high_q,
)
from oracles import mp_root

STACKS = {
    "metal": LayerStack(1.0, 0.1, C(1.0), C(-100.0), C(1.0)),
    "metal_abs": LayerStack(1.0, 0.1, C(1.0), C(-100.0, 0.5), C(1.0)),
    "dielectric": LayerStack(1.0, 0.01, C(2.0, 1e-4), C(900.0, 2.0), C(1.0)),
}


@pytest.mark.parametrize("name", list(STACKS))
@pytest.mark.parametrize("k", [1, 2, 4])
def test_root_matches_high_precision_oracle(name, k):
    s = STACKS[name]
    r = find_resonance(s, k)
    n1, n2, n3 = (s.index(j, 1.0) for j in (1, 2, 3))
    ref = mp_root(n1, n2, n3, s.d, s.l, r.Omega_k)
    assert abs(r.Omega_k - ref) < 1e-12 * abs(ref)
    assert r.gamma_k > 0
    assert r.residual < 1e-12


@pytest.mark.parametrize("name", ["metal", "dielectric"])
def test_root_matches_dense_scan(name):
    s = STACKS[name]
    r = find_resonance(s, 2)
    fsr = math.pi / s.index(1, r.omega_k).real
    w = np.linspace(r.omega_k - 0.3 * fsr, r.omega_k + 0.3 * fsr, 20001)
    D = np.array([abs(StackResponse(s, x).D1) for x in w])
    i = int(np.argmin(D))
    assert abs(w[i] - r.omega_k) < max(r.gamma_k, 2 * (w[1] - w[0]))
    # the dip depth is set by the linewidth: |D1(omega_k)| ~ Gamma n1 l
    assert D[i] == pytest.approx(r.gamma_k * s.index(1, r.omega_k).real * s.l, rel=0.05)


def test_modes_ordered_and_spaced():
    roots = find_resonances(STACKS["metal"], range(1, 5))
    w = np.array([r.omega_k for r in roots])
    assert np.all(np.diff(w) > 0)
    assert np.allclose(np.diff(w), math.pi, rtol=0.05)


def test_lossless_guess_constant_medium():
    s = LayerStack(1.0, 0.1, C(2.25), C(-100.0), C(1.0))
    assert lossless_guess(s, 3) == pytest.approx(3 * math.pi / 1.5, rel=1e-15)
    with pytest.raises(ValueError):
        lossless_guess(s, 0)


def test_unresolvable_linewidth_rejected():
    # transmission through this mirror at k = 6 is below double precision
    with pytest.raises(ConvergenceError):
        find_resonance(STACKS["metal"], 6)


def test_linewidth_leading_order_metal():
    s = STACKS["metal"]
    for k in (2, 4):
        r = find_resonance(s, k)
        assert leading_order_linewidth(s, r.omega_k) == pytest.approx(r.gamma_k, rel=1e-4)


def test_dispersive_cavity_medium():
    s = LayerStack(1.0, 0.1, LorentzPermittivity(0.5, 30.0, 0.5), C(-100.0), C(1.0))
    r = find_resonance(s, 2)
    assert r.residual < 1e-12 and r.gamma_k > 0


def test_convergence_failure_reported(monkeypatch):
    monkeypatch.setattr(rs, "_d1", lambda stack, w: 1.0 + 0j)
    monkeypatch.setattr(rs, "_root_map", lambda *a: (complex(math.nan), 0.0))
    with pytest.raises(ConvergenceError):
        find_resonance(STACKS["metal"], 1)


def test_branch_jump_reported(monkeypatch):
    s = STACKS["metal"]
    real = rs.lossless_guess
    monkeypatch.setattr(rs, "lossless_guess", lambda stack, k, **kw: real(stack, k + 1, **kw) + 0.0)
    monkeypatch.setattr(rs, "_newton", lambda stack, w, steps, tol: (complex(real(stack, 1)) - 1e-3j, True))
    with pytest.raises(BranchJumpError):
        find_resonance(s, 1, polish=True)


def test_loss_budget_lossless_has_no_absorption():
    b = loss_budget(STACKS["metal"], find_resonance(STACKS["metal"], 3))
    assert b.gamma_abs == 0.0
    assert b.residual < 1e-3


def test_loss_budget_absorbing_mirror():
    s = STACKS["metal_abs"]
    b = loss_budget(s, find_resonance(s, 3))
    assert b.gamma_plus > 0 and b.gamma_minus > 0 and b.gamma_cav == 0
    assert b.residual < 1e-3
    assert b.gamma_total == pytest.approx(b.gamma_rad + b.gamma_abs)


def test_mirror_loss_closed_form():
    s = STACKS["metal_abs"]
    for w in (3.0, 6.1, 9.2):
        c = io_coefficients(s, w)
        assert mirror_loss_sum(s, w) == pytest.approx(abs(c.A_plus) ** 2 + abs(c.A_minus) ** 2, rel=1e-10)


def test_lossless_mirror_output_coefficients():
    s = LayerStack(1.0, 0.1, C(1.0), C(-60.0), C(1.0))
    c = io_coefficients(s, 4.4)
    assert abs(c.T + c.T_o) < 1e-14
    assert abs(c.R_o) ** 2 + abs(c.T_o) ** 2 == pytest.approx(1.0, abs=1e-14)
    assert c.A_plus == 0 and c.A_minus == 0 and c.A_cav == 0


def test_absorbing_cavity_channel():
    s = LayerStack(1.0, 0.1, C(1.0, 1e-4), C(-100.0), C(1.0))
    r = find_resonance(s, 2)
    b = loss_budget(s, r)
    lossless = find_resonance(LayerStack(1.0, 0.1, C(1.0), C(-100.0), C(1.0)), 2)
    # the medium adds its own channel on top of the mirror's radiative width
    assert b.gamma_cav == pytest.approx(r.gamma_k - lossless.gamma_k, rel=1e-5)


def test_channel_lookup():
    c = io_coefficients(STACKS["metal_abs"], 3.0)
    assert c.channel("in") == (c.T, c.R_o)
    assert c.channel("cav") == (c.A_cav, 0)
    with pytest.raises(KeyError):
        c.channel("bogus")


def test_high_q_validation():
    roots = find_resonances(STACKS["metal"], range(1, 5))
    ratios, ok = validate_high_q(roots)
    assert ok and len(ratios) == 4
    bad = find_resonances(LayerStack(1.0, 0.0, C(1.0), C(1.0), C(4.0)), range(1, 4))
    _, ok = validate_high_q(bad)
    assert not ok
    with pytest.raises(ValueError):
        validate_high_q(roots[:1])
