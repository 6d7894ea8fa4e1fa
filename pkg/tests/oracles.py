"""Independent reference implementations used only by the tests."""

import cmath
import math

import mpmath
import numpy as np


def tmm_reflection(n_in, layers, n_out, omega):
    """Characteristic-matrix reflection and transmission at normal incidence.

    ``layers`` is a list of ``(n, d)``; ``n_out = inf`` is a perfect mirror.
    Time dependence ``exp(-i omega t)``, fields ``exp(i n omega z)``.
    """
    M = np.eye(2, dtype=complex)
    for n, d in layers:
        delta = n * omega * d
        c, s = cmath.cos(delta), cmath.sin(delta)
        M = M @ np.array([[c, -1j * s / n], [-1j * n * s, c]])
    if math.isinf(abs(n_out)):
        num = M[0, 1] * n_in - M[1, 1]
        den = M[0, 1] * n_in + M[1, 1]
        return num / den, 0j
    b = M[0, 0] + M[0, 1] * n_out
    c = M[1, 0] + M[1, 1] * n_out
    return (b * n_in - c) / (b * n_in + c), 2 * n_in / (b * n_in + c)


def airy_r13(n1, n2, n3, d, omega, dps=40):
    """``r13`` of a single slab in mpmath precision (for complex ``omega``)."""
    with mpmath.workdps(dps):
        w = mpmath.mpc(omega)
        n1, n2, n3 = (mpmath.mpc(x) for x in (n1, n2, n3))
        r12 = (n1 - n2) / (n1 + n2)
        r23 = (n2 - n3) / (n2 + n3)
        ph = mpmath.exp(2j * n2 * w * d)
        return (r12 + r23 * ph) / (1 + r12 * r23 * ph)


def mp_root(n1, n2, n3, d, l, guess, dps=40):
    """Root of ``1 + r13 exp(2 i n1 Omega l)`` with mpmath's secant solver."""
    with mpmath.workdps(dps):
        f = lambda W: 1 + airy_r13(n1, n2, n3, d, W, dps) * mpmath.exp(2j * mpmath.mpc(n1) * W * l)  # noqa: E731
        return complex(mpmath.findroot(f, mpmath.mpc(guess)))


def mp_upsilon(n1, l, Omega, dt, t, t0, w, wp, dps=40, offset=0):
    """Smooth kernel written term by term as in its defining expression.

    ``offset`` is added to ``wp`` at working precision to step off the removable singularity at w == wp.
    """
    with mpmath.workdps(dps):
        w, wp = mpmath.mpf(w), mpmath.mpf(wp) + mpmath.mpf(offset)
        Oc = mpmath.conj(mpmath.mpc(Omega))
        T = mpmath.mpf(t) + dt - t0
        pre = 1 / (2 * mpmath.pi) / (2 * mpmath.conj(mpmath.mpc(n1)) * l)
        first = (mpmath.exp(1j * wp * T) - mpmath.exp(1j * Oc * T)) / (wp - Oc)
        second = (mpmath.exp(1j * w * T) - mpmath.exp(1j * wp * T)) / (w - wp)
        return complex(pre * mpmath.exp(-1j * w * dt) / (w - Oc) * (first - second))


def loss_oracle_fock1_wigner_origin(eta):
    """Single photon through a pure-loss channel: rho = eta |1><1| + (1-eta) |0><0|."""
    # W_n(0) = (2/pi) (-1)^n
    return (2 / math.pi) * (eta * -1 + (1 - eta) * 1)
