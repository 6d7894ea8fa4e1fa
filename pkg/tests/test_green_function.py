import cmath

import numpy as np
import pytest

from lossy_cavity.green_function import (
    LayerBoundaryError,
    absorption_identity,
    absorption_identity_residual,
    green,
    helmholtz_residual,
    wave_amplitudes,
)
from lossy_cavity.optical_stack import ConstantPermittivity as C
from lossy_cavity.optical_stack import LayerStack, StackError

EPS = 2.25 + 0.1j
HOMOGENEOUS = LayerStack(1.0, 0.4, C(EPS.real, EPS.imag), C(EPS.real, EPS.imag), C(EPS.real, EPS.imag))


def _global(stack, j, z):
    return z + {1: 0.0, 2: stack.l, 3: stack.l + stack.d}[j]


def image_solution(x, xp, omega):
    """Half space bounded by a perfect mirror, uniform medium: source minus mirror image."""
    beta = cmath.sqrt(EPS) * omega
    return 0.5j / beta * (cmath.exp(1j * beta * abs(x - xp)) - cmath.exp(1j * beta * (x + xp)))


@pytest.mark.parametrize("j, z, jp, zp", [(1, 0.3, 1, 0.7), (1, 0.9, 2, 0.1), (3, 0.5, 1, 0.2), (2, 0.35, 3, 1.2)])
@pytest.mark.parametrize("omega", [1.3, 4.7])
def test_uniform_medium_matches_image_solution(j, z, jp, zp, omega):
    g = green(HOMOGENEOUS, j, z, jp, zp, omega)
    ref = image_solution(_global(HOMOGENEOUS, j, z), _global(HOMOGENEOUS, jp, zp), omega)
    assert abs(g - ref) < 1e-13 * max(1, abs(ref))


def test_node_at_perfect_mirror(dielectric_absorbing):
    assert abs(green(dielectric_absorbing, 1, 0.0, 1, 0.4, 2.1)) < 1e-15


@pytest.mark.parametrize("src", [(1, 0.4), (2, 0.02), (3, 0.8)])
def test_continuity_across_interfaces(dielectric_absorbing, src):
    s, w = dielectric_absorbing, 2.1
    h = 1e-7
    pairs = [((1, s.l), (2, 0.0)), ((2, s.d), (3, 0.0))]
    for (ja, za), (jb, zb) in pairs:
        if (ja, za) == src or (jb, zb) == src:
            continue
        ga, gb = green(s, ja, za, *src, w), green(s, jb, zb, *src, w)
        assert abs(ga - gb) < 1e-13 * max(1, abs(ga))
        # one-sided derivatives agree too (non-magnetic layers)
        da = (ga - green(s, ja, za - h, *src, w)) / h
        db = (green(s, jb, zb + h, *src, w) - gb) / h
        assert abs(da - db) < 1e-5 * max(1, abs(da))


def test_derivative_jump_at_source(dielectric_absorbing):
    s, w, zp, h = dielectric_absorbing, 1.7, 0.45, 1e-6
    up = (green(s, 1, zp + 2 * h, 1, zp, w) - green(s, 1, zp + h, 1, zp, w)) / h
    dn = (green(s, 1, zp - h, 1, zp, w) - green(s, 1, zp - 2 * h, 1, zp, w)) / h
    assert abs((up - dn) - (-1.0)) < 1e-4


@pytest.mark.parametrize("a, b", [((1, 0.2), (1, 0.8)), ((1, 0.6), (2, 0.03)), ((2, 0.01), (3, 0.4)), ((1, 0.1), (3, 2.0))])
def test_reciprocity(dielectric_absorbing, a, b):
    g1 = green(dielectric_absorbing, *a, *b, 3.3)
    g2 = green(dielectric_absorbing, *b, *a, 3.3)
    assert abs(g1 - g2) < 1e-14 * max(1, abs(g1))


def test_helmholtz_residual_second_order(dielectric_absorbing):
    args = (dielectric_absorbing, 1, 0.7, 1, 0.3, 2.2)
    r1 = helmholtz_residual(*args, h=1e-3)
    r2 = helmholtz_residual(*args, h=5e-4)
    assert r1 / r2 == pytest.approx(4.0, abs=0.05)
    assert helmholtz_residual(*args) < 1e-6


def test_helmholtz_in_other_layers(dielectric_absorbing):
    assert helmholtz_residual(dielectric_absorbing, 2, 0.025, 1, 0.3, 2.2, h=1e-4) < 1e-5
    assert helmholtz_residual(dielectric_absorbing, 3, 1.0, 1, 0.3, 2.2, h=1e-4) < 1e-5


def test_stencil_and_layer_checks(dielectric_absorbing):
    s = dielectric_absorbing
    with pytest.raises(LayerBoundaryError):
        helmholtz_residual(s, 1, 0.3, 1, 0.3, 2.0, h=1e-3)
    with pytest.raises(LayerBoundaryError):
        helmholtz_residual(s, 2, 0.0, 1, 0.3, 2.0, h=1e-3)
    with pytest.raises(LayerBoundaryError):
        green(s, 1, 1.5, 1, 0.3, 2.0)
    with pytest.raises(LayerBoundaryError):
        green(s, 4, 0.1, 1, 0.3, 2.0)


def test_wave_amplitudes_reflect_off_mirror(dielectric_absorbing):
    right, left = wave_amplitudes(dielectric_absorbing, 1, 0.0, 2.0)
    # left-travelling solution vanishes at the perfect mirror
    assert abs(left) < 1e-15
    assert np.isfinite(right)


@pytest.mark.parametrize("omega", [1.1, 2.5, 4.0])
@pytest.mark.parametrize("z1, z2", [(0.2, 0.7), (0.5, 0.5), (0.9, 0.05)])
def test_absorption_identity(dielectric_absorbing, omega, z1, z2):
    assert absorption_identity_residual(dielectric_absorbing, z1, z2, omega) < 1e-9


def test_absorption_identity_lossless_is_radiation_only():
    s = LayerStack(1.0, 0.1, C(2.0), C(6.0), C(1.0))
    lhs, rhs = absorption_identity(s, 0.3, 0.6, 2.0)
    assert abs(lhs - rhs) < 1e-13 * abs(lhs)


def test_mirror_hook_not_supported():
    s = LayerStack(1.0, 0.0, mirror_response=lambda w: (-0.9, 0.3))
    with pytest.raises(StackError):
        green(s, 1, 0.2, 1, 0.5, 1.0)
