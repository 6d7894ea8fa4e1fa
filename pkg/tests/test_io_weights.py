import cmath
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from lossy_cavity import io_weights as iw
from lossy_cavity.io_weights import (
    ModeBand,
    ModeWeights,
    QuadratureError,
    asymptotic_weights,
    channel_kernel_G,
    chi,
    eta_asymptotic_quadrature,
    eta_of_t,
    expm1_ratio,
    filter_F,
    interference_terms,
    kernel_upsilon,
    make_band,
    output_rate,
    weights_for_mode,
    weights_of_t,
    zeta_of_t,
)
from lossy_cavity.optical_stack import ConstantPermittivity as C
from lossy_cavity.optical_stack import LayerStack
from lossy_cavity.resonances import find_resonance, io_coefficients, loss_budget
from oracles import mp_upsilon

# moderate finesse keeps brute-force oracles affordable
LOW_Q = LayerStack(1.0, 0.04, C(1.0, 2e-3), C(-100.0, 1.0), C(1.0))
HIGH_Q = LayerStack(1.0, 0.2, C(1.0), C(-100.0, 4e-4), C(1.0))


def _setup(stack, k=1):
    r = find_resonance(stack, k)
    b = loss_budget(stack, r)
    c = io_coefficients(stack, r.omega_k)
    return r, b, c


@pytest.mark.parametrize("x", [0.0, 1e-9, 1e-4 + 1e-5j, 0.3 - 0.2j, 5.0 + 1j])
@pytest.mark.parametrize("tau", [0.1, 3.0, 40.0])
def test_expm1_ratio_matches_mpmath(x, tau):
    got = expm1_ratio(x, tau)
    with mpmath.workdps(40):
        xm = mpmath.mpc(x)
        ref = 1j * tau if x == 0 else (mpmath.expm1(1j * xm * tau)) / xm
    assert abs(got - complex(ref)) < 1e-14 * max(1.0, abs(complex(ref)))


def test_expm1_ratio_continuous_at_series_switch():
    tau = 2.0
    x0 = iw.SERIES_SWITCH / tau
    xs = np.array([x0 * (1 - 1e-9), x0 * (1 + 1e-9)])
    got = expm1_ratio(xs, tau)
    with mpmath.workdps(40):
        ref = [complex(mpmath.expm1(1j * mpmath.mpf(x) * tau) / mpmath.mpf(x)) for x in xs]
    assert np.max(np.abs(got - ref)) < 1e-15


def test_band_validation():
    with pytest.raises(ValueError):
        ModeBand(1, 3.0, 0.01, 1.0, t0=1.0, t=0.5)
    with pytest.raises(ValueError):
        ModeBand(1, 3.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ModeBand(1, 3.0, 0.01, -1.0)
    with pytest.raises(ValueError):
        ModeBand(1, 3.0, 0.01, 1.0, omega_lo=3.5)
    b = ModeBand(1, 3.0, 0.01, 20.0, t=4.0, t0=1.0)
    assert b.theta == 3.0 and b.tau == 23.0 and b.a == 3.0 + 0.005j
    assert b.at(9.0).t == 9.0
    assert b.coarse_grained
    assert not ModeBand(1, 3.0, 0.01, 1.0, omega_lo=2.9, omega_hi=3.1).coarse_grained


def test_make_band_defaults():
    r, b, _ = _setup(LOW_Q)
    band = make_band(LOW_Q, r, 5.0)
    assert band.Gamma == b.gamma_total
    assert band.dt == pytest.approx(iw.COARSE_GRAIN / math.pi)


def test_filter_matches_defining_expression():
    r, b, c = _setup(LOW_Q)
    band = make_band(LOW_Q, r, 3.0 / b.gamma_total, t0=0.5)
    Oc = band.Omega.conjugate()
    pre = 1j / math.sqrt(2 * math.pi) * cmath.sqrt(1 / (2 * c.n1.conjugate() * c.l)) * c.T_o.conjugate()
    for w in (r.omega_k - 0.3, r.omega_k, r.omega_k + 0.01):
        T = band.t + band.dt - band.t0
        ref = pre * cmath.exp(1j * w * band.theta) * (cmath.exp(-1j * (w - Oc) * T) - 1) / (w - Oc)
        assert abs(filter_F(band, c, w) - ref) < 1e-12 * abs(ref)


# Gamma tau ~ 1e-7 at t = 0: the oscillatory tails carry about 1% of the weight
THIN_LOSSLESS = LayerStack(1.0, 0.05, C(1.0), C(-100.0), C(1.0))


@pytest.mark.parametrize("stack, k", [(LOW_Q, 1), (THIN_LOSSLESS, 4)], ids=["low_q", "tiny_gamma_tau"])
def test_eta_growth_closed_form(stack, k):
    # int |e^{i(a-w)tau} - 1|^2 / |w - a|^2 dw = (2 pi / Gamma)(1 - e^{-Gamma tau})
    r, b, c = _setup(stack, k)
    G = b.gamma_total
    eta_inf = output_rate(c) / G
    for tg in (0.0, 0.5, 2.0, 10.0):
        band = make_band(stack, r, tg / G, budget=b)
        ref = eta_inf * -math.expm1(-G * band.tau) * (2 * math.pi * abs(iw._cF(c)) ** 2 / G) / eta_inf
        assert eta_of_t(band, c) == pytest.approx(ref, rel=1e-9)
    assert 2 * math.pi * abs(iw._cF(c)) ** 2 / G == pytest.approx(eta_inf, rel=1e-12)


def test_eta_asymptotic_quadrature():
    r, b, c = _setup(HIGH_Q)
    band = make_band(HIGH_Q, r, 0.0, budget=b)
    assert eta_asymptotic_quadrature(band, c) == pytest.approx(output_rate(c) / b.gamma_total, rel=1e-10)


@pytest.mark.parametrize("dw, dwp", [(0.01, -0.02), (0.0, 0.003), (-0.2, 0.2), (0.05, 0.05)])
def test_upsilon_matches_mpmath(dw, dwp):
    r, b, c = _setup(LOW_Q)
    band = make_band(LOW_Q, r, 4.0 / b.gamma_total, t0=0.3, budget=b)
    w, wp = r.omega_k + dw, r.omega_k + dwp
    # the defining expression has a removable singularity at w == wp
    offset = 1e-25 if dw == dwp else 0
    ref = mp_upsilon(c.n1, c.l, band.Omega, band.dt, band.t, band.t0, w, wp, offset=offset)
    got = kernel_upsilon(band, c, w, wp)
    assert abs(got - ref) < 1e-9 * abs(ref)


def test_channel_kernel_parts():
    r, b, c = _setup(LOW_Q)
    band = make_band(LOW_Q, r, 2.0 / b.gamma_total, budget=b)
    w, wp = r.omega_k + 0.01, r.omega_k - 0.004
    for s in iw.CHANNELS:
        X, Y = c.channel(s)
        g = channel_kernel_G(band, c, s, w, wp)
        assert g.smooth == pytest.approx(c.T_o.conjugate() * X.conjugate() * kernel_upsilon(band, c, w, wp))
        assert g.delta_weight == pytest.approx(Y.conjugate() * cmath.exp(1j * wp * band.theta))


def _chi_oracle(band, c, sigma, eta, wp):
    """Inner frequency integral of F(w) G*(w, w') done numerically, plus the delta term."""
    w0, half = band.omega_k, 0.5 * band.Gamma

    def f(u, part):
        w = w0 + half * u
        v = filter_F(band, c, w) * np.conj(channel_kernel_G(band, c, sigma, w, wp).smooth) * half
        return v.real if part == 0 else v.imag

    total = 0j
    edges = [-4000.0, -400.0, -40.0, -4.0, 0.0, 4.0, 40.0, 400.0, 4000.0]
    up = (wp - w0) / half
    for lo, hi in zip(edges[:-1], edges[1:]):
        pts = [up] if lo < up < hi else None
        re = integrate.quad(f, lo, hi, args=(0,), points=pts, limit=400, epsabs=1e-13)[0]
        im = integrate.quad(f, lo, hi, args=(1,), points=pts, limit=400, epsabs=1e-13)[0]
        total += re + 1j * im
    delta = np.conj(channel_kernel_G(band, c, sigma, wp, wp).delta_weight) * filter_F(band, c, wp)
    return (total + delta) / math.sqrt(eta)


@pytest.mark.parametrize("sigma", ["in", "cav", "plus"])
@pytest.mark.parametrize("du", [0.0, 1.5, -7.0])
def test_chi_matches_inner_integral(sigma, du):
    r, b, c = _setup(LOW_Q)
    G = b.gamma_total
    band = make_band(LOW_Q, r, 1.0 / G, budget=b)
    eta = eta_of_t(band, c)
    wp = r.omega_k + 0.5 * G * du
    got = chi(band, c, sigma, wp, eta=eta)
    ref = _chi_oracle(band, c, sigma, eta, wp)
    # tails beyond 4000 half-widths are cut from the oracle
    assert abs(got - ref) < 2e-3 * max(abs(ref), 1e-3 * abs(chi(band, c, sigma, r.omega_k, eta=eta)))


@pytest.mark.parametrize("stack", [LOW_Q, HIGH_Q], ids=["low_q", "high_q"])
def test_sum_rule_by_quadrature(stack):
    r, b, c = _setup(stack)
    w = weights_of_t(make_band(stack, r, 20.0 / b.gamma_total, budget=b), c)
    assert w.eta > 0 and all(z >= -1e-12 for z in w.zetas.values())
    tol = 1e-6 if stack is HIGH_Q else 1e-2
    assert w.sum_rule_residual < tol


@pytest.mark.parametrize("k", [3, 4])
def test_sum_rule_at_start_of_observation(k):
    r, b, c = _setup(THIN_LOSSLESS, k)
    w = weights_of_t(make_band(THIN_LOSSLESS, r, 0.0, budget=b), c)
    assert w.sum_rule_residual < 1e-4


def test_weights_grow_towards_closed_forms():
    r, b, c = _setup(HIGH_Q)
    G = b.gamma_total
    etas = [weights_of_t(make_band(HIGH_Q, r, tg / G, budget=b), c).eta for tg in (0, 1, 2, 5, 10, 20)]
    assert all(x <= y for x, y in zip(etas, etas[1:]))
    w_inf = asymptotic_weights(c, b)
    assert etas[-1] == pytest.approx(w_inf.eta, abs=1e-8)
    assert w_inf.sum_rule_residual < 1e-10


def test_asymptotic_structure():
    r, b, c = _setup(HIGH_Q)
    w = asymptotic_weights(c, b)
    assert w.at == math.inf
    assert w.eta == pytest.approx(output_rate(c) / b.gamma_total)
    assert w.zeta_cav == 0.0
    cross = interference_terms(c, b.gamma_total)
    assert set(cross) == {"in", "plus", "minus"}
    assert w.zeta_in == pytest.approx(output_rate(c) * b.gamma_rad / b.gamma_total**2 + abs(c.R_o) ** 2 + cross["in"])


def test_weights_for_mode_dispatch():
    r, b, c = _setup(HIGH_Q)
    assert weights_for_mode(HIGH_Q, r) == asymptotic_weights(c, b)
    wt = weights_for_mode(HIGH_Q, r, t=20.0 / b.gamma_total)
    assert wt.at == pytest.approx(20.0 / b.gamma_total)


def test_zeta_errors():
    r, b, c = _setup(HIGH_Q)
    band = make_band(HIGH_Q, r, 1.0 / b.gamma_total, budget=b)
    with pytest.raises(ValueError):
        zeta_of_t(band, c, "outside")
    with pytest.raises(ValueError):
        zeta_of_t(band, c, "in", eta=0.0)
    # lossless cavity medium: the cav channel is absent
    assert zeta_of_t(band, c, "cav", eta=0.5) == 0.0


def test_quadrature_error_on_unphysical_weights(monkeypatch):
    r, b, c = _setup(HIGH_Q)
    band = make_band(HIGH_Q, r, 1.0 / b.gamma_total, budget=b)
    monkeypatch.setattr(iw, "eta_of_t", lambda band, coeffs: 1.2)
    with pytest.raises(QuadratureError):
        weights_of_t(band, c)


def test_mode_weights_container():
    w = ModeWeights(0.5, 0.2, 0.1, 0.1, 0.1)
    assert w.total == pytest.approx(1.0)
    assert w.sum_rule_residual < 1e-15
    assert list(w.zetas) == ["in", "cav", "plus", "minus"]
