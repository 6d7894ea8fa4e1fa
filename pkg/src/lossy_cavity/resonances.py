"""Complex cavity resonances, input-output coefficients and the linewidth budget."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .optical_stack import LayerStack, StackError, StackResponse

__all__ = [
    "Resonance",
    "LossBudget",
    "IoCoefficients",
    "ConvergenceError",
    "BranchJumpError",
    "lossless_guess",
    "find_resonance",
    "find_resonances",
    "leading_order_linewidth",
    "io_coefficients",
    "loss_budget",
    "validate_high_q",
    "mirror_loss_sum",
]


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, last: Optional[complex] = None):
        super().__init__(msg)
        self.last = last


class BranchJumpError(RuntimeError):
    pass


@dataclass(frozen=True)
class Resonance:
    k: int
    omega_k: float
    gamma_k: float
    Omega_k: complex
    iterations: int
    converged: bool
    residual: float  # |D1(Omega_k)|


@dataclass(frozen=True)
class LossBudget:
    gamma_rad: float
    gamma_cav: float
    gamma_plus: float
    gamma_minus: float
    Gamma: float  # linewidth from the root of D1
    residual: float  # |Gamma - gamma_rad - gamma_abs| / Gamma

    @property
    def gamma_abs(self) -> float:
        return self.gamma_cav + self.gamma_plus + self.gamma_minus

    @property
    def gamma_total(self) -> float:
        """Sum of channel rates; the linewidth that makes the channel algebra unitary."""
        return self.gamma_rad + self.gamma_abs


@dataclass(frozen=True)
class IoCoefficients:
    omega: float
    l: float
    n1: complex
    n3: complex
    T: complex
    A_cav: complex
    A_plus: complex
    A_minus: complex
    inv_alpha_cav: float
    inv_alpha_plus: float
    inv_alpha_minus: float
    T_o: complex
    R_o: complex
    A_o_plus: complex
    A_o_minus: complex

    # 1/alpha is what enters every coefficient; alpha itself diverges without loss
    @property
    def alpha_cav(self) -> float:
        return 1.0 / self.inv_alpha_cav if self.inv_alpha_cav else math.inf

    @property
    def alpha_plus(self) -> float:
        return 1.0 / self.inv_alpha_plus if self.inv_alpha_plus else math.inf

    @property
    def alpha_minus(self) -> float:
        return 1.0 / self.inv_alpha_minus if self.inv_alpha_minus else math.inf

    @property
    def rate_unit(self) -> float:
        """``c / (2 |n1| l)``; times ``|coefficient|^2`` gives a rate."""
        return 0.5 / (abs(self.n1) * self.l)

    def channel(self, name: str) -> tuple[complex, complex]:
        """``(X, Y)``: the cavity-side and direct output coefficients of a noise channel."""
        return {
            "in": (self.T, self.R_o),
            "cav": (self.A_cav, 0j),
            "plus": (self.A_plus, self.A_o_plus),
            "minus": (self.A_minus, self.A_o_minus),
        }[name]


def lossless_guess(stack: LayerStack, k: int, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Solve ``Re n1(w) * w * l = k pi`` by fixed-point iteration."""
    if k < 1:
        raise ValueError("mode index starts at 1")
    target = k * math.pi / stack.l
    w = target / stack.index(1, target).real
    for _ in range(max_iter):
        w_new = target / stack.index(1, w).real
        if abs(w_new - w) <= tol * w:
            return w_new
        w = w_new
    return w


def _r13(stack: LayerStack, omega: complex) -> complex:
    if stack.mirror_response is not None:
        return complex(stack.mirror_response(omega)[0])
    return StackResponse(stack, omega).r13


def _d1(stack: LayerStack, omega: complex) -> complex:
    n1 = stack.index(1, omega)
    return 1.0 + _r13(stack, omega) * cmath.exp(2j * n1 * omega * stack.l)


def _root_map(stack: LayerStack, Omega: complex, m: int, phase_ref: Optional[float]) -> tuple[complex, float]:
    """One step of ``Omega = [(2m+1) pi - phi + i ln|r13|] / (2 n1 l)``."""
    n1 = stack.index(1, Omega)
    r = _r13(stack, Omega)
    if r == 0:
        raise ConvergenceError("r13 vanished; no cavity resonance", Omega)
    phi = math.atan2(r.imag, r.real)
    if phase_ref is not None:
        phi += 2 * math.pi * round((phase_ref - phi) / (2 * math.pi))
    a = (2 * m + 1) * math.pi - phi
    return (a + 1j * math.log(abs(r))) / (2 * n1 * stack.l), phi


def find_resonance(
    stack: LayerStack,
    k: int,
    tol: float = 1e-12,
    max_iter: int = 200,
    polish: bool = True,
) -> Resonance:
    """Complex root ``Omega_k = omega_k - i Gamma_k / 2`` of ``D1``.

    Fixed-point iteration on the explicit real/imaginary maps, then up to five
    Newton steps on ``D1`` itself. Falls back to Newton from the lossless guess
    if the map does not contract.
    """
    w0 = lossless_guess(stack, k)
    fsr = math.pi / (stack.l * stack.index(1, w0).real)

    # branch index m: closest real part to the lossless guess
    n1 = stack.index(1, w0)
    r = _r13(stack, w0)
    phi0 = math.atan2(r.imag, r.real) % (2 * math.pi)
    m = round((2 * n1.real * w0 * stack.l + phi0 - math.pi) / (2 * math.pi))

    Omega = complex(w0)
    phase = phi0
    converged = False
    iters = 0
    try:
        for iters in range(1, max_iter + 1):
            new, phase = _root_map(stack, Omega, m, phase)
            if not cmath.isfinite(new):
                raise ConvergenceError("fixed-point map left the finite range", Omega)
            step = abs(new - Omega)
            Omega = new
            if step <= tol * abs(Omega):
                converged = True
                break
    except (ArithmeticError, ValueError, StackError):
        converged = False

    if polish or not converged:
        if not converged:
            Omega = complex(w0)
        Omega, ok = _newton(stack, Omega, steps=5 if converged else 60, tol=tol)
        converged = converged or ok
    res = abs(_d1(stack, Omega))
    if not converged and res > 1e-10:
        raise ConvergenceError(f"mode {k}: no convergence after {max_iter} iterations", Omega)
    if not -Omega.imag > 0:
        raise ConvergenceError(f"mode {k}: linewidth below floating-point resolution at omega = {Omega.real:.6g}", Omega)
    if abs(Omega.real - w0) > 0.5 * fsr:
        raise BranchJumpError(f"mode {k}: root at {Omega.real:.6g} is off its guess {w0:.6g}")
    return Resonance(k, Omega.real, -2.0 * Omega.imag, Omega, iters, converged, res)


def _newton(stack: LayerStack, Omega: complex, steps: int, tol: float) -> tuple[complex, bool]:
    for _ in range(steps):
        f = _d1(stack, Omega)
        if f == 0:
            return Omega, True
        h = 1e-6 * max(abs(Omega), 1.0)
        df = (_d1(stack, Omega + h) - _d1(stack, Omega - h)) / (2 * h)
        step = f / df
        # damp steps larger than a tenth of the free spectral range
        lim = 0.1 * math.pi / stack.l
        if abs(step) > lim:
            step *= lim / abs(step)
        Omega -= step
        if abs(step) <= tol * abs(Omega):
            return Omega, True
    return Omega, abs(_d1(stack, Omega)) < 1e-12


def find_resonances(stack: LayerStack, ks: Sequence[int], **kw) -> list[Resonance]:
    return [find_resonance(stack, k, **kw) for k in ks]


def leading_order_linewidth(stack: LayerStack, omega: float) -> float:
    """``c (1 - |r13|^2) / (2 n1 l)`` at real ``omega``."""
    n1 = stack.index(1, omega)
    return (1.0 - abs(_r13(stack, omega)) ** 2) / (2.0 * n1.real * stack.l)


def io_coefficients(stack: LayerStack, omega: float) -> IoCoefficients:
    """Input-output coefficient set at real frequency ``omega``.

    The ``1/alpha`` factors are computed as ``sqrt(bracket)/prefactor``;
    both brackets are non-negative, so vanishing absorption gives exactly
    zero absorption amplitudes instead of ``inf * 0``.
    """
    omega = float(np.real(omega))
    if not omega > 0:
        raise ValueError("frequency must be positive")
    s = StackResponse(stack, omega)
    l = stack.l
    n1, n3 = s.n1, s.n3
    sq1 = cmath.sqrt(n1)
    e1 = s.e1

    b1 = s.beta1
    br_cav = n1.real * math.sinh(2 * b1.imag * l) - n1.imag * math.sin(2 * b1.real * l)
    inv_a_cav = math.sqrt(max(br_cav, 0.0)) / (2 * math.sqrt(2) * abs(n1))
    A_cav = -4j * sq1 * inv_a_cav

    T = -s.t31 * cmath.sqrt(n1 * n3.real) / abs(n3) * e1
    T_o = s.t13 * e1 / sq1

    if s.has_plate:
        n2, b2, d = s.n2, s.beta2, stack.d
        inv_a = {}
        for sgn in (1, -1):
            br = n2.real * math.sinh(b2.imag * d) + sgn * n2.imag * math.sin(b2.real * d)
            inv_a[sgn] = math.sqrt(max(br, 0.0)) * math.exp(-b2.imag * d / 2) / abs(n2)
        A = {sgn: -s.t21 * sq1 / s.D2p * (s.r23 * s.e2 + sgn) * e1 * inv_a[sgn] for sgn in (1, -1)}
        Ao = {sgn: s.t23 / s.D2p * (1 + sgn * s.r21 * s.e2) * inv_a[sgn] for sgn in (1, -1)}
        R_o = s.r31
    else:
        # coating given only through (r13, t13): mirror-internal channels unknown
        nan = complex(math.nan, math.nan)
        inv_a = {1: math.nan, -1: math.nan}
        A = Ao = {1: nan, -1: nan}
        R_o = nan

    return IoCoefficients(
        omega=omega, l=l, n1=n1, n3=n3, T=T, A_cav=A_cav, A_plus=A[1], A_minus=A[-1],
        inv_alpha_cav=inv_a_cav, inv_alpha_plus=inv_a[1], inv_alpha_minus=inv_a[-1],
        T_o=T_o, R_o=R_o, A_o_plus=Ao[1], A_o_minus=Ao[-1],
    )


def mirror_loss_sum(stack: LayerStack, omega: float) -> float:
    """Closed form of ``|A_+|^2 + |A_-|^2`` written in terms of ``D2'`` and ``r23``."""
    s = StackResponse(stack, omega)
    s.require_plate()
    n1, n2, d = s.n1, s.n2, stack.d
    b2 = s.beta2
    bi, br = b2.imag * d, b2.real * d
    pre = 4 * abs(n1) / (abs(s.D2p) ** 2 * abs(n1 + n2) ** 2) * math.exp(-bi)
    x = s.r23 * cmath.exp(1j * b2 * d)
    brk = n2.real * (math.exp(bi) - math.exp(-bi)) * (1 + abs(s.r23) ** 2 * math.exp(-2 * bi)) - 1j * n2.imag * (
        cmath.exp(1j * br) - cmath.exp(-1j * br)
    ) * (x + x.conjugate())
    return (pre * brk).real


def loss_budget(stack: LayerStack, res: Resonance) -> LossBudget:
    """Channel rates ``c |X|^2 / (2 |n1| l)`` at ``omega_k`` and the linewidth-identity residual."""
    c = io_coefficients(stack, res.omega_k)
    u = c.rate_unit
    g_rad = u * abs(c.T) ** 2
    g_cav = u * abs(c.A_cav) ** 2
    g_p = u * abs(c.A_plus) ** 2
    g_m = u * abs(c.A_minus) ** 2
    G = res.gamma_k
    resid = abs(G - g_rad - g_cav - g_p - g_m) / G if G > 0 else abs(g_rad + g_cav + g_p + g_m)
    return LossBudget(g_rad, g_cav, g_p, g_m, G, resid)


def validate_high_q(resonances: Sequence[Resonance], threshold: float = 0.01) -> tuple[list[float], bool]:
    """``Gamma_k / delta_omega_k`` with central spacings inside and one-sided ones at the ends."""
    if len(resonances) < 2:
        raise ValueError("need at least two consecutive resonances")
    w = [r.omega_k for r in resonances]
    ratios = []
    for i, r in enumerate(resonances):
        if i == 0:
            dw = w[1] - w[0]
        elif i == len(w) - 1:
            dw = w[-1] - w[-2]
        else:
            dw = 0.5 * (w[i + 1] - w[i - 1])
        ratios.append(r.gamma_k / dw)
    return ratios, all(x < threshold for x in ratios)
