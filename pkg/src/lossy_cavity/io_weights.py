"""Mode filter function, channel kernels and the weights of the extracted output mode.

Time arguments: ``theta = t - t0`` and ``tau = t + dt - t0``. The complex
pole ``a = conj(Omega_k) = omega_k + i Gamma / 2`` sits in the upper half plane.

Frequency integrals run over the band ``[omega_lo, omega_hi]``; the default
band is the whole real line, which is the usual extension of the mode
interval for a Lorentzian of width ``Gamma`` much smaller than the mode
spacing. The inner integral defining the channel amplitudes ``chi`` is done
in closed form on the real line (residues), so a finite band only truncates
the outer integral.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .optical_stack import LayerStack
from .resonances import IoCoefficients, LossBudget, Resonance, io_coefficients, loss_budget

__all__ = [
    "CHANNELS",
    "ModeBand",
    "ModeWeights",
    "KernelParts",
    "QuadratureError",
    "make_band",
    "expm1_ratio",
    "filter_F",
    "eta_of_t",
    "eta_asymptotic_quadrature",
    "kernel_upsilon",
    "channel_kernel_G",
    "chi",
    "zeta_of_t",
    "weights_of_t",
    "asymptotic_weights",
    "interference_terms",
    "output_rate",
    "weights_for_mode",
]

CHANNELS = ("in", "cav", "plus", "minus")

# |x tau| below this uses the Taylor form of (exp(i x tau) - 1) / x
SERIES_SWITCH = 1e-2
COARSE_GRAIN = 50.0
# half-width, in units of Gamma/2 (or of 1/tau if wider), integrated without splitting
CORE_WIDTH = 50.0
# tolerated excursion of a quadrature weight outside [0, 1]
WEIGHT_TOL = 1e-6


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeBand:
    """One resonance viewed through a finite observation window.

    ``Gamma`` is the linewidth used in the pole ``Omega = omega_k - i Gamma/2``.
    """

    k: int
    omega_k: float
    Gamma: float
    dt: float
    t0: float = 0.0
    t: float = 0.0
    omega_lo: float = -math.inf
    omega_hi: float = math.inf

    def __post_init__(self):
        if self.t < self.t0:
            raise ValueError("observation time precedes preparation time")
        if self.dt < 0:
            raise ValueError("dt must be non-negative")
        if not self.Gamma > 0:
            raise ValueError("weights need a finite linewidth")
        if not self.omega_lo < self.omega_k < self.omega_hi:
            raise ValueError("band must contain the resonance")

    @property
    def Omega(self) -> complex:
        return complex(self.omega_k, -0.5 * self.Gamma)

    @property
    def a(self) -> complex:
        return complex(self.omega_k, 0.5 * self.Gamma)

    @property
    def theta(self) -> float:
        return self.t - self.t0

    @property
    def tau(self) -> float:
        return self.t + self.dt - self.t0

    def at(self, t: float) -> "ModeBand":
        return replace(self, t=t)

    @property
    def coarse_grained(self) -> bool:
        width = self.omega_hi - self.omega_lo
        return math.isinf(width) or self.dt * width >= COARSE_GRAIN


@dataclass(frozen=True)
class ModeWeights:
    eta: float
    zeta_in: float
    zeta_cav: float
    zeta_plus: float
    zeta_minus: float
    at: float = math.inf  # observation time, inf for the closed forms

    @property
    def zetas(self) -> dict:
        return {"in": self.zeta_in, "cav": self.zeta_cav, "plus": self.zeta_plus, "minus": self.zeta_minus}

    @property
    def total(self) -> float:
        return self.eta + self.zeta_in + self.zeta_cav + self.zeta_plus + self.zeta_minus

    @property
    def sum_rule_residual(self) -> float:
        return abs(self.total - 1.0)


@dataclass(frozen=True)
class KernelParts:
    """``G(w, w') = smooth + delta_weight * delta(w - w')``."""

    smooth: complex
    delta_weight: complex


def make_band(
    stack: LayerStack,
    res: Resonance,
    t: float,
    t0: float = 0.0,
    dt: Optional[float] = None,
    budget: Optional[LossBudget] = None,
    band: Optional[tuple[float, float]] = None,
) -> ModeBand:
    """Band for mode ``res`` with ``Gamma = gamma_rad + gamma_abs``.

    The channel-rate sum is used rather than the root's imaginary part: the
    two agree to leading order, and only the former keeps the weights
    normalized. ``dt`` defaults to ``50 / spacing``.
    """
    if budget is None:
        budget = loss_budget(stack, res)
    spacing = math.pi / (stack.l * stack.index(1, res.omega_k).real)
    if dt is None:
        dt = COARSE_GRAIN / spacing
    lo, hi = band if band is not None else (-math.inf, math.inf)
    return ModeBand(res.k, res.omega_k, budget.gamma_total, dt, t0, t, lo, hi)


def expm1_ratio(x, tau: float):
    """``(exp(i x tau) - 1) / x`` for complex ``x``, with the Taylor form near ``x = 0``."""
    x = np.asarray(x, dtype=complex)
    z = 1j * x * tau
    small = np.abs(z) < SERIES_SWITCH
    out = np.empty_like(z)
    zs = z[small]
    # (e^z - 1)/z = sum z^n/(n+1)!, six terms
    ser = 1 + zs / 2 + zs**2 / 6 + zs**3 / 24 + zs**4 / 120 + zs**5 / 720
    out[small] = 1j * tau * ser
    xb = x[~small]
    out[~small] = np.expm1(z[~small]) / xb
    return out if out.ndim else complex(out)


def _K(coeffs: IoCoefficients) -> complex:
    return cmath.sqrt(1.0 / (2.0 * coeffs.n1.conjugate() * coeffs.l))


def _cF(coeffs: IoCoefficients) -> complex:
    return 1j / math.sqrt(2 * math.pi) * _K(coeffs) * coeffs.T_o.conjugate()


def filter_F(band: ModeBand, coeffs: IoCoefficients, omega):
    """Mode filter ``F(omega, t)``; vectorized over ``omega``."""
    w = np.asarray(omega, dtype=float)
    val = -_cF(coeffs) * np.exp(1j * w * band.theta) * expm1_ratio(band.a - w, band.tau)
    return val if np.ndim(val) else complex(val)


# |alpha(w) + beta(w) e^{-i w tau}|^2 integrated over the band.
# Near the line the combined amplitude ``direct`` is integrated as it stands;
# alpha and beta cancel there when Gamma * tau is small. Outside, the
# oscillating cross term goes to QUADPACK's Fourier-weight routines.
def _split_integral(
    band: ModeBand, alpha: Callable, beta: Callable, direct: Callable, epsabs: float, epsrel: float
) -> float:
    # QUADPACK flags roundoff once the requested tolerance nears the phase
    # precision of w0 * tau; the values are still usable at that level.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _split_integral_raw(band, alpha, beta, direct, epsabs, epsrel)


def _split_integral_raw(band, alpha, beta, direct, epsabs, epsrel) -> float:
    w0, half = band.omega_k, 0.5 * band.Gamma
    lo = (band.omega_lo - w0) / half
    hi = (band.omega_hi - w0) / half
    wv = band.tau * half  # oscillation frequency in the scaled variable
    opts = dict(epsabs=epsabs, epsrel=epsrel, limit=500)

    # central region: many oscillations only once |u| wv >> 1
    U = CORE_WIDTH * max(1.0, 1.0 / wv) if wv > 0 else math.inf
    c_lo, c_hi = max(lo, -U), min(hi, U)
    # decade cuts keep the adaptive rule from missing structure on a wide core
    decades = [5.0 * 10.0**j for j in range(int(math.log10(max(min(-c_lo, c_hi, 1e300), 5.0) / 5.0)) + 2)]
    cuts = sorted({c for d in decades for c in (-d, d) if c_lo < c < c_hi} | ({0.0} if c_lo < 0 < c_hi else set()))
    total = _quad_line(lambda u: abs(direct(w0 + half * u)) ** 2 * half, c_lo, c_hi, cuts=cuts, **opts)
    if lo < -U:
        total += _tail(band, alpha, beta, -U, lo, wv, opts)
    if hi > U:
        total += _tail(band, alpha, beta, U, hi, wv, opts)
    return total


def _tail(band, alpha, beta, start, end, wv, opts) -> float:
    """Integral from ``|start|`` outward to ``end`` (either side) in the scaled variable."""
    w0, half = band.omega_k, 0.5 * band.Gamma
    sgn = 1.0 if end > start else -1.0
    ph = cmath.exp(1j * wv * start) * cmath.exp(1j * w0 * band.tau)

    # integrate in the phase y = wv v so the weight has unit frequency whatever wv is
    jac = half / wv

    def smooth(y):
        w = w0 + half * (start + sgn * y / wv)
        return (abs(alpha(w)) ** 2 + abs(beta(w)) ** 2) * jac

    def cross(y):
        # g(u) e^{i wv u} with u = start + sgn v; the sign goes into the sine weight
        w = w0 + half * (start + sgn * y / wv)
        return alpha(w) * np.conj(beta(w)) * ph * jac

    length = abs(end - start) * wv
    y0 = abs(start) * wv  # decay scale of the integrand in y
    cuts = [c for c in (y0, 10 * y0, 100 * y0) if c < length]
    total = _quad_line(smooth, 0.0, length, cuts=cuts, **opts) if math.isfinite(length) else (
        _quad_line(smooth, 0.0, 100 * y0, cuts=[y0, 10 * y0], **opts)
        + integrate.quad(smooth, 100 * y0, np.inf, epsabs=opts["epsabs"], epsrel=opts["epsrel"], limit=opts["limit"])[0]
    )
    re = lambda y: cross(y).real  # noqa: E731
    im = lambda y: cross(y).imag  # noqa: E731
    c = _quad_weighted(re, length, "cos", 1.0, opts)
    s = _quad_weighted(im, length, "sin", 1.0, opts)
    return total + 2 * (c - sgn * s)


def _quad_line(f, lo, hi, cuts, epsabs, epsrel, limit):
    edges = [lo] + list(cuts) + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
        total += val
    return total


def _quad_weighted(f, length, kind, wv, opts):
    # int_0^length f(v) w(wv v) dv: QAWF for the infinite case, QAWO otherwise
    if math.isinf(length):
        val, _ = integrate.quad(f, 0.0, np.inf, weight=kind, wvar=wv, limlst=200, epsabs=opts["epsabs"])
        return val
    val, _ = integrate.quad(f, 0.0, length, weight=kind, wvar=wv, **opts)
    return val


def _F_parts(band: ModeBand, coeffs: IoCoefficients):
    cF, a, tau = _cF(coeffs), band.a, band.tau
    ea = cmath.exp(1j * a * tau)
    return (lambda w: -cF / (w - a)), (lambda w: cF * ea / (w - a))


def eta_of_t(band: ModeBand, coeffs: IoCoefficients, epsabs: float = 1e-13, epsrel: float = 1e-10) -> float:
    """``eta(t) = int |F(w, t)|^2 dw`` over the band, by quadrature."""
    if band.tau == 0:
        return 0.0
    al, be = _F_parts(band, coeffs)
    return _split_integral(band, al, be, lambda w: filter_F(band, coeffs, w), epsabs, epsrel)


def eta_asymptotic_quadrature(band: ModeBand, coeffs: IoCoefficients, epsabs: float = 1e-14, epsrel: float = 1e-12) -> float:
    """Long-time limit of ``eta`` by integrating the limiting Lorentzian ``|F|^2``."""
    pref = abs(_cF(coeffs)) ** 2
    w0, half = band.omega_k, 0.5 * band.Gamma
    lo = (band.omega_lo - w0) / half
    hi = (band.omega_hi - w0) / half
    # |F|^2 -> pref / |w - a|^2, scaled variable u = (w - w0)/half
    cuts = [c for c in (-50.0, -5.0, 0.0, 5.0, 50.0) if lo < c < hi]
    return _quad_line(lambda u: pref / (half * (u * u + 1.0)), lo, hi, cuts=cuts, epsabs=epsabs, epsrel=epsrel, limit=500)


def kernel_upsilon(band: ModeBand, coeffs: IoCoefficients, omega, omega_p):
    """Smooth kernel ``upsilon(w, w', t)`` shared by all channel kernels."""
    w = np.asarray(omega, dtype=float)
    wp = np.asarray(omega_p, dtype=float)
    a, tau = band.a, band.tau
    K2 = _K(coeffs) ** 2
    br = np.exp(1j * a * tau) * expm1_ratio(wp - a, tau) - np.exp(1j * wp * tau) * expm1_ratio(w - wp, tau)
    val = K2 / (2 * math.pi) * np.exp(-1j * w * band.dt) / (w - a) * br
    return val if np.ndim(val) else complex(val)


def channel_kernel_G(band: ModeBand, coeffs: IoCoefficients, sigma: str, omega, omega_p) -> KernelParts:
    """``G_sigma(w, w', t)`` split into its smooth part and the weight of ``delta(w - w')``."""
    X, Y = coeffs.channel(sigma)
    smooth = coeffs.T_o.conjugate() * X.conjugate() * kernel_upsilon(band, coeffs, omega, omega_p)
    delta = Y.conjugate() * np.exp(1j * np.asarray(omega_p, dtype=float) * band.theta)
    if not np.ndim(delta):
        delta = complex(delta)
    return KernelParts(smooth, delta)


def _chi_parts(band: ModeBand, coeffs: IoCoefficients, sigma: str, eta: float):
    X, Y = coeffs.channel(sigma)
    a, tau, G = band.a, band.tau, band.Gamma
    ab = a.conjugate()
    K = _K(coeffs)
    cF = _cF(coeffs)
    C = -abs(K) ** 2 * K.conjugate() * coeffs.T_o.conjugate() / math.sqrt(2 * math.pi) * coeffs.T_o * X
    ea = cmath.exp(1j * a * tau)
    decay = math.exp(-G * tau)
    s = 1.0 / math.sqrt(eta)

    def alpha(w):
        Ra = 1.0 / ((1j * G) * (a - w))
        Rb = 1.0 / ((-1j * G) * (ab - w))
        return s * (C * (decay * Rb + Ra) - Y * cF / (w - a))

    def beta(w):
        Q = 1.0 / ((w - a) * (w - ab))
        return s * ea * (C * Q + Y * cF / (w - a))

    return alpha, beta


def _exp_rem(z):
    """``(exp(z) - 1 - z) / z`` with its Taylor form for small ``|z|``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    out = np.empty_like(z)
    zs = z[small]
    out[small] = zs * (1 / 2 + zs * (1 / 6 + zs * (1 / 24 + zs * (1 / 120 + zs * (1 / 720 + zs / 5040)))))
    zb = z[~small]
    out[~small] = (np.expm1(zb) - zb) / zb
    return out


def _chi_direct(band: ModeBand, coeffs: IoCoefficients, sigma: str, eta: float) -> Callable:
    """``alpha + beta e^{-i w tau}`` regrouped so that nothing cancels near the line."""
    X, Y = coeffs.channel(sigma)
    a, tau, G = band.a, band.tau, band.Gamma
    K = _K(coeffs)
    cF = _cF(coeffs)
    C = -abs(K) ** 2 * K.conjugate() * coeffs.T_o.conjugate() / math.sqrt(2 * math.pi) * coeffs.T_o * X
    g_decay = complex(_exp_rem(-G * tau)[()])
    s = 1.0 / math.sqrt(eta)

    def direct(w):
        x = a - np.asarray(w, dtype=float)
        S = 1j * tau * (_exp_rem(1j * x * tau) - g_decay) / (x - 1j * G)
        val = s * (C * S - Y * cF * expm1_ratio(x, tau))
        return val if np.ndim(val) else complex(val)

    return direct


def chi(band: ModeBand, coeffs: IoCoefficients, sigma: str, omega, eta: Optional[float] = None):
    """Amplitude of channel ``sigma`` in the extracted output mode at ``omega``.

    Overlap of the normalized filter ``F / sqrt(eta)`` with the conjugated
    channel kernel; the delta part contributes ``Y e^{-i w theta} F(w)``.
    """
    if eta is None:
        eta = eta_of_t(band, coeffs)
    al, be = _chi_parts(band, coeffs, sigma, eta)
    w = np.asarray(omega, dtype=float)
    val = al(w) + be(w) * np.exp(-1j * w * band.tau)
    return val if np.ndim(val) else complex(val)


def zeta_of_t(
    band: ModeBand,
    coeffs: IoCoefficients,
    sigma: str,
    eta: Optional[float] = None,
    epsabs: float = 1e-13,
    epsrel: float = 1e-10,
) -> float:
    """``zeta_sigma(t) = int |chi_sigma(w, t)|^2 dw`` by quadrature."""
    if sigma not in CHANNELS:
        raise ValueError(f"unknown channel {sigma!r}")
    if eta is None:
        eta = eta_of_t(band, coeffs)
    if not eta > 0:
        raise ValueError("extraction efficiency is zero; the output mode is undefined")
    X, Y = coeffs.channel(sigma)
    if X == 0 and Y == 0:
        return 0.0
    al, be = _chi_parts(band, coeffs, sigma, eta)
    return _split_integral(band, al, be, _chi_direct(band, coeffs, sigma, eta), epsabs, epsrel)


def weights_of_t(band: ModeBand, coeffs: IoCoefficients, tol: float = WEIGHT_TOL) -> ModeWeights:
    """All weights at ``band.t``; raises QuadratureError if any leaves ``[0, 1]`` by more than ``tol``."""
    eta = eta_of_t(band, coeffs)
    z = {s: zeta_of_t(band, coeffs, s, eta=eta) for s in CHANNELS}
    w = ModeWeights(eta, z["in"], z["cav"], z["plus"], z["minus"], at=band.t)
    vals = [w.eta, *w.zetas.values()]
    if not all(math.isfinite(v) and -tol <= v <= 1 + tol for v in vals):
        raise QuadratureError(f"mode {band.k}: weights outside [0, 1] at t = {band.t:.6g}: {w}")
    return w


def interference_terms(coeffs: IoCoefficients, Gamma: float) -> dict:
    """``2 Re[c Y X* T_o* / (2 n1* l Gamma)]`` per channel, the cross terms of the closed forms."""
    K2 = 1.0 / (2.0 * coeffs.n1.conjugate() * coeffs.l)
    out = {}
    for s in ("in", "plus", "minus"):
        X, Y = coeffs.channel(s)
        out[s] = 2.0 * (K2 * Y * X.conjugate() * coeffs.T_o.conjugate() / Gamma).real
    return out


def asymptotic_weights(coeffs: IoCoefficients, budget: LossBudget, Gamma: Optional[float] = None) -> ModeWeights:
    """Long-time weights in closed form, coefficients taken at ``omega_k``.

    ``Gamma`` defaults to the channel-rate sum ``gamma_rad + gamma_abs``.
    """
    G = budget.gamma_total if Gamma is None else Gamma
    g_o = coeffs.rate_unit * abs(coeffs.T_o) ** 2
    cross = interference_terms(coeffs, G)
    eta = g_o / G
    z_in = g_o * budget.gamma_rad / G**2 + abs(coeffs.R_o) ** 2 + cross["in"]
    z_p = g_o * budget.gamma_plus / G**2 + abs(coeffs.A_o_plus) ** 2 + cross["plus"]
    z_m = g_o * budget.gamma_minus / G**2 + abs(coeffs.A_o_minus) ** 2 + cross["minus"]
    z_cav = g_o * budget.gamma_cav / G**2
    return ModeWeights(eta, z_in, z_cav, z_p, z_m)


def output_rate(coeffs: IoCoefficients) -> float:
    """Rate ``c |T_o|^2 / (2 |n1| l)`` into the outgoing field."""
    return coeffs.rate_unit * abs(coeffs.T_o) ** 2


def weights_for_mode(stack: LayerStack, res: Resonance, t: Optional[float] = None, **band_kw) -> ModeWeights:
    """Closed forms (``t=None``) or quadrature at time ``t`` for one resonance."""
    coeffs = io_coefficients(stack, res.omega_k)
    budget = loss_budget(stack, res)
    if t is None:
        return asymptotic_weights(coeffs, budget)
    return weights_of_t(make_band(stack, res, t, budget=budget, **band_kw), coeffs)
