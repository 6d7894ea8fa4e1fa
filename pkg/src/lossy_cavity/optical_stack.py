"""Planar four-layer cavity: permittivities, propagation constants and Fresnel coefficients.

Layer 0 is a perfect mirror, layer 1 the cavity (thickness ``l``), layer 2 the
coupling mirror (thickness ``d``) and layer 3 the semi-infinite outside.
Units: ``c = 1``; frequencies are angular frequencies in units of ``c / l``
when ``l = 1``.

Positions inside each layer use shifted local frames: ``0 < z < l`` in layer
1, ``0 < z < d`` in layer 2 and ``0 < z`` in layer 3.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "ConstantPermittivity",
    "LorentzPermittivity",
    "PermittivityModel",
    "LayerStack",
    "FresnelPair",
    "StackError",
    "PoleProximityError",
    "SingularInterfaceError",
    "refractive_index",
    "fresnel_interface",
    "fresnel_composite",
    "StackResponse",
    "stack_response",
    "cavity_denominators",
    "verify_layer_identities",
]

# |denominator| below this fraction of its terms is treated as a pole hit.
POLE_RTOL = 1e-14

MIRROR, CAVITY, COUPLER, OUTSIDE = 0, 1, 2, 3


class StackError(ValueError):
    """Invalid stack geometry or material data."""


class PoleProximityError(ArithmeticError):
    """A recursion denominator vanished (resonance pole on the real axis)."""


class SingularInterfaceError(ArithmeticError):
    """Interface with beta_i + beta_j = 0."""


@dataclass(frozen=True)
class ConstantPermittivity:
    """Frequency-independent permittivity ``real + 1j * imag``.

    Not Kramers-Kronig consistent over all frequencies; it is a narrowband
    evaluation valid near one resonance, which reports flag via ``narrowband``.
    """

    real: float
    imag: float = 0.0
    narrowband: bool = field(default=True, init=False)

    def __post_init__(self):
        if not np.isfinite(self.real) or not np.isfinite(self.imag):
            raise StackError("permittivity must be finite")
        if self.imag < 0:
            raise StackError(f"passivity violated: imag(eps) = {self.imag} < 0")

    def __call__(self, omega: complex) -> complex:
        return complex(self.real, self.imag)


@dataclass(frozen=True)
class LorentzPermittivity:
    """Single Lorentz oscillator ``1 + f w0^2 / (w0^2 - w^2 - i g w)``.

    Accepts complex ``omega`` (analytic continuation of the same formula),
    which is how resonance poles below the real axis are evaluated.
    """

    strength: float
    resonance: float
    damping: float
    narrowband: bool = field(default=False, init=False)

    def __post_init__(self):
        if self.strength < 0 or self.damping < 0 or self.resonance <= 0:
            raise StackError("Lorentz model needs strength >= 0, damping >= 0, resonance > 0")

    def __call__(self, omega: complex) -> complex:
        w0sq = self.resonance**2
        return 1.0 + self.strength * w0sq / (w0sq - omega * omega - 1j * self.damping * omega)


PermittivityModel = Union[ConstantPermittivity, LorentzPermittivity]

# Optional user-supplied coupling-mirror response: omega -> (r13, t13).
MirrorResponse = Callable[[complex], "tuple[complex, complex]"]


@dataclass(frozen=True)
class LayerStack:
    """Geometry and materials of the cavity.

    Parameters
    ----------
    l : float
        Cavity length (layer 1).
    d : float
        Coupling-mirror thickness (layer 2); ``d = 0`` removes the plate.
    eps1, eps2, eps3 : PermittivityModel
        Permittivities of cavity medium, mirror plate and outside.
    mirror_response : callable, optional
        Replaces the slab model for ``r13``/``t13`` (e.g. a multilayer coating
        given as a fitted or tabulated function). Quantities that need the
        plate's internal fields (mirror absorption channels, ``r31``) are then
        unavailable.
    """

    l: float = 1.0
    d: float = 0.0
    eps1: PermittivityModel = ConstantPermittivity(1.0)
    eps2: PermittivityModel = ConstantPermittivity(1.0)
    eps3: PermittivityModel = ConstantPermittivity(1.0)
    mirror_response: Optional[MirrorResponse] = None

    def __post_init__(self):
        if not self.l > 0:
            raise StackError(f"cavity length must be positive, got {self.l}")
        if not self.d >= 0:
            raise StackError(f"mirror thickness must be non-negative, got {self.d}")

    def thickness(self, j: int) -> float:
        return {CAVITY: self.l, COUPLER: self.d}.get(j, 0.0)

    def permittivity(self, j: int) -> PermittivityModel:
        if j not in (1, 2, 3):
            raise StackError(f"layer {j} has no permittivity model")
        return (self.eps1, self.eps2, self.eps3)[j - 1]

    def index(self, j: int, omega: complex) -> complex:
        return _sqrt_passive(self.permittivity(j)(omega))

    def beta(self, j: int, omega: complex) -> complex:
        """Propagation constant ``n_j(omega) * omega``; infinite for the mirror."""
        if j == MIRROR:
            return complex(np.inf)
        return self.index(j, omega) * omega

    @property
    def narrowband(self) -> bool:
        return any(m.narrowband for m in (self.eps1, self.eps2, self.eps3))


def _sqrt_passive(eps: complex) -> complex:
    n = cmath.sqrt(eps)
    # principal root of eps = -1 - 0j lands at -1j; both parts must be >= 0
    if n.real < 0 or (n.real == 0 and n.imag < 0):
        n = -n
    return n


def refractive_index(model: PermittivityModel, omega: float) -> tuple[complex, complex]:
    """Refractive index ``n`` and propagation constant ``beta = n omega`` at real ``omega``.

    The root is chosen with ``n' >= 0`` and ``n'' >= 0``.
    """
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    eps = model(omega)
    if eps.imag < 0:
        raise StackError(f"passivity violated at omega={omega}: eps = {eps}")
    n = _sqrt_passive(eps)
    return n, n * omega


@dataclass(frozen=True)
class FresnelPair:
    r: complex
    t: complex
    i: Optional[int] = None
    j: Optional[int] = None


def fresnel_interface(beta_i: complex, beta_j: complex) -> FresnelPair:
    """Single-interface reflection/transmission for a wave in ``i`` hitting ``j``."""
    if cmath.isinf(beta_j) and cmath.isinf(beta_i):
        raise SingularInterfaceError("both sides are perfect mirrors")
    if cmath.isinf(beta_j):
        return FresnelPair(-1.0 + 0j, 0j)
    if cmath.isinf(beta_i):
        return FresnelPair(1.0 + 0j, 2.0 + 0j)
    s = beta_i + beta_j
    if abs(s) <= POLE_RTOL * (abs(beta_i) + abs(beta_j)):
        raise SingularInterfaceError(f"beta_i + beta_j = 0 (beta_i={beta_i})")
    r = (beta_i - beta_j) / s
    return FresnelPair(r, 1.0 + r)


def _combine(pij: FresnelPair, pji: FresnelPair, pjk: FresnelPair, beta_j: complex, d_j: float) -> FresnelPair:
    """Compose ``i -> j -> k`` through layer ``j`` of thickness ``d_j``."""
    ph = cmath.exp(1j * beta_j * d_j)
    loop = pji.r * pjk.r * ph * ph
    den = 1.0 - loop
    if abs(den) <= POLE_RTOL * (1.0 + abs(loop)):
        raise PoleProximityError(f"recursion denominator vanished (|den| = {abs(den):.3e})")
    det = pij.t * pji.t - pij.r * pji.r
    r = (pij.r + det * pjk.r * ph * ph) / den
    t = pij.t * pjk.t * ph / den
    return FresnelPair(r, t)


def _layers_between(i: int, k: int) -> range:
    lo, hi = min(i, k), max(i, k)
    return range(lo + 1, hi)


def _composite(stack: LayerStack, i: int, k: int, omega: complex, pivot: Optional[int], memo: dict) -> FresnelPair:
    key = (i, k, pivot)
    if key in memo:
        return memo[key]
    if i == k:
        out = FresnelPair(0j, 1.0 + 0j)
    elif abs(i - k) == 1:
        out = fresnel_interface(stack.beta(i, omega), stack.beta(k, omega))
    else:
        inner = _layers_between(i, k)
        j = inner[0] if i < k else inner[-1]
        if pivot is not None:
            if pivot not in inner:
                raise ValueError(f"pivot {pivot} not strictly between layers {i} and {k}")
            j = pivot
        pij = _composite(stack, i, j, omega, None, memo)
        pji = _composite(stack, j, i, omega, None, memo)
        pjk = _composite(stack, j, k, omega, None, memo)
        out = _combine(pij, pji, pjk, stack.beta(j, omega), stack.thickness(j))
    out = FresnelPair(out.r, out.t, i, k)
    memo[key] = out
    return out


def fresnel_composite(stack: LayerStack, i: int, k: int, omega: complex, pivot: Optional[int] = None) -> FresnelPair:
    """Reflection/transmission of the layered system seen from layer ``i`` towards ``k``.

    ``pivot`` selects the intermediate layer used in the last recursion step;
    every admissible choice gives the same result.
    """
    if i == k:
        raise ValueError("composite coefficients need two distinct layers")
    for j in (i, k):
        if j not in (0, 1, 2, 3):
            raise ValueError(f"no layer {j}")
    if stack.mirror_response is not None and {i, k} & {COUPLER}:
        raise StackError("layer 2 is not modelled when a mirror_response is supplied")
    if stack.mirror_response is not None and {i, k} == {CAVITY, OUTSIDE}:
        r13, t13 = stack.mirror_response(omega)
        if (i, k) == (CAVITY, OUTSIDE):
            return FresnelPair(complex(r13), complex(t13), i, k)
        raise StackError("r31 is not defined by a mirror_response")
    return _composite(stack, i, k, omega, pivot, {})


class StackResponse:
    """All coefficients of one stack at one frequency, computed once.

    Attribute names follow the usual ``r_ik`` convention: ``r13`` is the
    reflection seen from the cavity, ``t31`` transmission from outside into
    the cavity, and so on. ``D1, D2, D2p`` are the cavity denominators.
    """

    def __init__(self, stack: LayerStack, omega: complex):
        self.stack = stack
        self.omega = omega
        self.n1 = stack.index(1, omega)
        self.n3 = stack.index(3, omega)
        self.beta1 = self.n1 * omega
        self.beta3 = self.n3 * omega
        l = stack.l
        self.e1 = cmath.exp(1j * self.beta1 * l)

        if stack.mirror_response is not None:
            r13, t13 = stack.mirror_response(omega)
            self.r13, self.t13 = complex(r13), complex(t13)
            self.t31 = self.beta3 / self.beta1 * self.t13
            self.has_plate = False
        else:
            memo: dict = {}
            c = lambda i, k: _composite(stack, i, k, omega, None, memo)  # noqa: E731
            self.n2 = stack.index(2, omega)
            self.beta2 = self.n2 * omega
            self.e2 = cmath.exp(1j * self.beta2 * stack.d)
            self.r13, self.t13 = c(1, 3).r, c(1, 3).t
            self.r31, self.t31 = c(3, 1).r, c(3, 1).t
            self.r21, self.t21 = c(2, 1).r, c(2, 1).t
            self.r12, self.t12 = c(1, 2).r, c(1, 2).t
            self.r23, self.t23 = c(2, 3).r, c(2, 3).t
            self.r32, self.t32 = c(3, 2).r, c(3, 2).t
            self.has_plate = True
            self._c = c
            self.D2p = 1.0 - self.r21 * self.r23 * self.e2**2
        self.D1 = 1.0 + self.r13 * self.e1**2

    # whole-system quantities: these share the pole of D1, so compute on demand
    @cached_property
    def r20(self) -> complex:
        return self._c(2, 0).r

    @cached_property
    def r30(self) -> complex:
        return self._c(3, 0).r

    @cached_property
    def t03(self) -> complex:
        return self._c(0, 3).t

    @cached_property
    def D2(self) -> complex:
        return 1.0 - self.r20 * self.r23 * self.e2**2

    def require_plate(self):
        if not self.has_plate:
            raise StackError("this quantity needs the slab model of the coupling mirror")


def stack_response(stack: LayerStack, omega: complex) -> StackResponse:
    return StackResponse(stack, omega)


def cavity_denominators(stack: LayerStack, omega: complex) -> tuple[complex, complex, complex]:
    """``(D1, D2, D2')`` at ``omega``; ``D1`` vanishes at the cavity resonances."""
    resp = StackResponse(stack, omega)
    resp.require_plate()
    return resp.D1, resp.D2, resp.D2p


def verify_layer_identities(stack: LayerStack, omega: complex) -> dict:
    """Residuals of the single-interface, recursion and cavity identities.

    Keys
    ----
    interface : max |t_ij t_ji - r_ij r_ji - 1| over adjacent pairs
    plus, minus : the two sign branches of the D2/D2' identity
    r30 : |r30 - r31 + t13 t31 e^{2 i beta1 l} / D1|
    pivot : max relative spread of r_{3/0}, t_{0/3} over admissible pivots
    max : largest of the above
    """
    resp = StackResponse(stack, omega)
    resp.require_plate()

    interface = 0.0
    for i, j in ((1, 2), (2, 3)):
        a = fresnel_interface(stack.beta(i, omega), stack.beta(j, omega))
        b = fresnel_interface(stack.beta(j, omega), stack.beta(i, omega))
        interface = max(interface, abs(a.t * b.t - a.r * b.r - 1.0))

    e1sq = resp.e1**2
    out = {"interface": interface}
    for name, sgn in (("plus", 1.0), ("minus", -1.0)):
        lhs = (1 + sgn * resp.r20 * resp.e2) / resp.D2 - (1 + sgn * resp.r21 * resp.e2) / resp.D2p
        rhs = -sgn * resp.t13 / (resp.D1 * resp.D2p) * resp.t21 / resp.t23 * (1 + sgn * resp.r23 * resp.e2) * e1sq
        out[name] = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))

    lhs = resp.r30 - resp.r31
    rhs = -resp.t13 * resp.t31 / resp.D1 * e1sq
    out["r30"] = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))

    spread = 0.0
    for i, k in ((3, 0), (0, 3)):
        vals = [fresnel_composite(stack, i, k, omega, pivot=j) for j in (1, 2)]
        for attr in ("r", "t"):
            a, b = getattr(vals[0], attr), getattr(vals[1], attr)
            spread = max(spread, abs(a - b) / max(abs(a), abs(b), 1e-300))
    out["pivot"] = spread
    out["max"] = max(out.values())
    return out
