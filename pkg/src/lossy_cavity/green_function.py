"""Scalar Green function of the layered cavity and numerical checks of its defining relations.

``G`` solves ``d^2 G/dz^2 + omega^2 eps(z) G = -delta(z - z')`` (``c = 1``)
with a node at the perfect mirror and outgoing waves in layer 3. Positions
are layer-local: ``0 < z < l`` in layer 1, ``0 < z < d`` in layer 2,
``z > 0`` in layer 3.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .optical_stack import LayerStack, StackError, fresnel_composite

__all__ = [
    "LayerBoundaryError",
    "wave_amplitudes",
    "green",
    "helmholtz_residual",
    "absorption_identity",
    "absorption_identity_residual",
]


class LayerBoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class _Layer:
    beta: complex
    thickness: float
    r_right: complex  # r_{j/3}
    r_left: complex  # r_{j/0}
    t_from_mirror: complex  # t_{0/j}
    t_from_outside: complex  # t_{3/j}
    D: complex


class _GreenData:
    """Coefficients entering G at one frequency."""

    def __init__(self, stack: LayerStack, omega: complex):
        if stack.mirror_response is not None:
            raise StackError("the Green function needs the slab model of the coupling mirror")
        self.stack = stack
        self.omega = omega
        comp = lambda i, k: fresnel_composite(stack, i, k, omega)  # noqa: E731
        self.layers = {}
        for j in (1, 2, 3):
            beta = stack.beta(j, omega)
            dj = stack.thickness(j)
            r_right = comp(j, 3).r if j != 3 else 0j
            r_left = comp(j, 0).r
            t0 = comp(0, j).t
            t3 = comp(3, j).t if j != 3 else 1.0 + 0j
            D = 1.0 - r_left * r_right * cmath.exp(2j * beta * dj)
            self.layers[j] = _Layer(beta, dj, r_right, r_left, t0, t3, D)
        self.t03 = self.layers[3].t_from_mirror
        self.beta3 = self.layers[3].beta

    def check(self, j: int, z: float):
        if j not in self.layers:
            raise LayerBoundaryError(f"no field layer {j}")
        L = self.layers[j]
        if z < 0 or (j != 3 and z > L.thickness):
            raise LayerBoundaryError(f"z = {z} outside layer {j}")

    def right(self, j: int, z):
        L = self.layers[j]
        u = z - L.thickness
        return np.exp(1j * L.beta * u) + L.r_right * np.exp(-1j * L.beta * u)

    def left(self, j: int, z):
        L = self.layers[j]
        return np.exp(-1j * L.beta * z) + L.r_left * np.exp(1j * L.beta * z)

    def xi(self, j: int, jp: int) -> complex:
        a, b = self.layers[j], self.layers[jp]
        return (
            a.t_from_mirror * cmath.exp(1j * a.beta * a.thickness) / a.D
            * b.t_from_outside * cmath.exp(1j * b.beta * b.thickness) / b.D
            / (self.beta3 * self.t03)
        )

    def G(self, j: int, z, jp: int, zp):
        """Vectorized in ``z`` (or ``zp``) with fixed layers."""
        z = np.asarray(z, dtype=float)
        zp = np.asarray(zp, dtype=float)
        if j > jp:
            return 0.5j * self.right(j, z) * self.xi(j, jp) * self.left(jp, zp)
        if j < jp:
            return 0.5j * self.left(j, z) * self.xi(jp, j) * self.right(jp, zp)
        x = self.xi(j, j)
        return np.where(
            z >= zp,
            0.5j * self.right(j, z) * x * self.left(j, zp),
            0.5j * self.left(j, z) * x * self.right(j, zp),
        )


def wave_amplitudes(stack: LayerStack, j: int, z: float, omega: complex) -> tuple[complex, complex]:
    """Right- and left-travelling unit waves of layer ``j`` at ``z``, including their reflections."""
    g = _GreenData(stack, omega)
    g.check(j, z)
    return complex(g.right(j, z)), complex(g.left(j, z))


def green(stack: LayerStack, j: int, z: float, jp: int, zp: float, omega: complex) -> complex:
    """``G(z, z', omega)`` for ``z`` in layer ``j`` and ``z'`` in layer ``jp``."""
    g = _GreenData(stack, omega)
    g.check(j, z)
    g.check(jp, zp)
    return complex(g.G(j, z, jp, zp))


def helmholtz_residual(
    stack: LayerStack, j: int, z: float, jp: int, zp: float, omega: complex, h: Optional[float] = None
) -> float:
    """``|G'' + omega^2 eps_j G|`` with a central second difference of step ``h``."""
    if h is None:
        h = 1e-4 * stack.l
    g = _GreenData(stack, omega)
    g.check(jp, zp)
    for zz in (z - h, z + h):
        g.check(j, zz)
    if j == jp and (z - h) <= zp <= (z + h):
        raise LayerBoundaryError("stencil crosses the source point")
    vals = g.G(j, np.array([z - h, z, z + h]), jp, zp)
    d2 = (vals[0] - 2 * vals[1] + vals[2]) / h**2
    eps = stack.permittivity(j)(omega)
    return abs(d2 + omega**2 * eps * vals[1])


def _cquad(f, a, b, points, epsrel):
    pts = [p for p in points if a < p < b]
    # absolute floor relative to the integrand size, so a vanishing part does not stall
    size = max(abs(f(a)), abs(f(0.5 * (a + b))), abs(f(b))) * (b - a)
    kw = dict(epsabs=1e-14 * size, epsrel=epsrel, limit=400)
    if pts:
        kw["points"] = pts
    re, _ = integrate.quad(lambda x: f(x).real, a, b, **kw)
    im, _ = integrate.quad(lambda x: f(x).imag, a, b, **kw)
    return complex(re, im)


def absorption_identity(stack: LayerStack, z1: float, z2: float, omega: float, epsrel: float = 1e-12) -> tuple[float, complex]:
    """Both sides of ``Im G(z1, z2) = omega^2 int eps''(x) G(z1, x) G*(z2, x) dx``.

    ``z1, z2`` lie in the cavity layer. Layers 1 and 2 are integrated by
    adaptive quadrature; the semi-infinite outside layer in closed form,
    ``omega^2 eps3'' a1 a2* / (2 beta3'')``, whose value at ``eps3'' = 0``
    is the outgoing-flux term ``omega n3' a1 a2*``.
    """
    g = _GreenData(stack, omega)
    g.check(1, z1)
    g.check(1, z2)
    lhs = complex(g.G(1, z1, 1, z2)).imag
    rhs = 0j
    for j in (1, 2):
        e2 = stack.permittivity(j)(omega).imag
        if e2 == 0:
            continue
        thick = stack.thickness(j)

        def f(x, j=j):
            return g.G(1, z1, j, x) * np.conj(g.G(1, z2, j, x))

        pts = (z1, z2) if j == 1 else ()
        rhs += omega**2 * e2 * _cquad(f, 0.0, thick, pts, epsrel)
    # G(z, x) = a e^{i beta3 x} in layer 3
    a1 = complex(g.G(1, z1, 3, 0.0))
    a2 = complex(g.G(1, z2, 3, 0.0))
    n3 = stack.index(3, omega)
    rhs += omega * n3.real * a1 * a2.conjugate()
    return lhs, rhs


def absorption_identity_residual(stack: LayerStack, z1: float, z2: float, omega: float, epsrel: float = 1e-12) -> float:
    """Relative mismatch of the absorption identity."""
    lhs, rhs = absorption_identity(stack, z1, z2, omega, epsrel)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale
