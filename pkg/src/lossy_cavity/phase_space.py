"""Quantum-state input-output map in phase space.

Convention: ``alpha = x + i p``; the vacuum Wigner function is
``(2/pi) exp(-2|alpha|^2)``, i.e. quadrature variance 1/4. An s-ordered
Gaussian has covariance ``Sigma_W - (s/4) I``. Characteristic functions are
``C(beta; s) = int P(alpha; s) exp(beta alpha* - beta* alpha) d^2 alpha``,
which for a Gaussian is ``exp(i k.mu - k.Sigma.k / 2)`` with
``k = 2 (Im beta, -Re beta)``.

The output state is assembled in the characteristic-function domain: each
input enters as ``C_i(sqrt(w_i) beta; s_i)``, Gaussian inputs and the
``exp(-xi |beta|^2 / 2)`` smoothing in closed form, sampled inputs through
an exact discrete Fourier sum at the scaled frequencies. The product is
transformed back on a zero-padded grid.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special

from .io_weights import ModeWeights

__all__ = [
    "LOSS_CHANNELS",
    "GaussianState",
    "GridState",
    "PhaseSpaceState",
    "ChannelEnsemble",
    "TransformUndefinedError",
    "WindowTooSmallError",
    "vacuum",
    "coherent",
    "thermal",
    "squeezed",
    "fock_function",
    "fock_grid",
    "thermal_wigner",
    "default_window",
    "grid_axis",
    "sample",
    "xi_s",
    "xi_wigner",
    "characteristic",
    "characteristic_out",
    "p_out_transform",
    "wigner_out_thermal",
    "gaussian_propagate",
    "extraction_report",
    "fidelity",
    "write_grid_csv",
    "read_grid_csv",
    "write_grid_binary",
    "read_grid_binary",
]

LOSS_CHANNELS = ("cav", "plus", "minus")
LEAKAGE_TOL = 5e-3


class TransformUndefinedError(ValueError):
    """Negative smoothing width: the requested output order is not reachable."""


class WindowTooSmallError(RuntimeError):
    def __init__(self, msg: str, suggested_window: float):
        super().__init__(msg)
        self.suggested_window = suggested_window


@dataclass(frozen=True)
class GaussianState:
    """Gaussian phase-space function of order ``s``: mean ``x + i p`` and 2x2 covariance."""

    mean: complex
    cov: np.ndarray
    s_order: float = 0.0

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        object.__setattr__(self, "cov", cov)
        if self.s_order > 1:
            raise ValueError("orders above 1 are not supported")

    @property
    def wigner_cov(self) -> np.ndarray:
        return self.cov + 0.25 * self.s_order * np.eye(2)

    @property
    def physical(self) -> bool:
        """Uncertainty relation for one mode: positive Wigner covariance with ``det >= 1/16``."""
        cov = self.wigner_cov
        return bool(np.linalg.eigvalsh(cov).min() > 0 and np.linalg.det(cov) >= 1 / 16 - 1e-9)

    def to_order(self, s: float) -> "GaussianState":
        return GaussianState(self.mean, self.cov + 0.25 * (self.s_order - s) * np.eye(2), s)

    def __call__(self, alpha):
        """Value of the phase-space function; needs a positive-definite covariance."""
        a = np.asarray(alpha, dtype=complex)
        dx = a.real - self.mean.real
        dp = a.imag - self.mean.imag
        det = np.linalg.det(self.cov)
        if det <= 0:
            raise ValueError("covariance is not positive definite at this order")
        inv = np.linalg.inv(self.cov)
        q = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dp + inv[1, 1] * dp * dp
        return np.exp(-0.5 * q) / (2 * math.pi * math.sqrt(det))


@dataclass(frozen=True)
class GridState:
    """Sampled phase-space function on ``[-A, A)^2``.

    ``values[i, j]`` is the value at ``x_i + i p_j`` with ``x_i = (i - N/2) h``
    and ``h = 2A / N``.
    """

    values: np.ndarray
    window: float
    s_order: float = 0.0
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("grid must be square")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2 * self.window / self.n

    @property
    def axis(self) -> np.ndarray:
        return grid_axis(self.window, self.n)

    @property
    def norm(self) -> float:
        return float(self.values.sum() * self.h**2)

    def value_at_origin(self) -> float:
        i = self.n // 2
        return float(self.values[i, i])


PhaseSpaceState = Union[GaussianState, GridState]


@dataclass(frozen=True)
class ChannelEnsemble:
    """Occupations of the three loss channels and the state of the incoming field."""

    n_bar: Mapping[str, float] = field(default_factory=lambda: {c: 0.0 for c in LOSS_CHANNELS})
    input_state: Optional[PhaseSpaceState] = None  # None means vacuum

    def __post_init__(self):
        nb = {c: float(self.n_bar.get(c, 0.0)) for c in LOSS_CHANNELS}
        if any(v < 0 for v in nb.values()):
            raise ValueError("thermal occupations must be non-negative")
        object.__setattr__(self, "n_bar", nb)

    @property
    def input(self) -> PhaseSpaceState:
        return vacuum() if self.input_state is None else self.input_state


# -- state constructors ------------------------------------------------------


def vacuum(s: float = 0.0) -> GaussianState:
    return GaussianState(0j, 0.25 * np.eye(2), 0.0).to_order(s)


def coherent(alpha0: complex, s: float = 0.0) -> GaussianState:
    return GaussianState(complex(alpha0), 0.25 * np.eye(2), 0.0).to_order(s)


def thermal(n_bar: float, s: float = 0.0) -> GaussianState:
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    return GaussianState(0j, 0.25 * (2 * n_bar + 1) * np.eye(2), 0.0).to_order(s)


def squeezed(r: float, phi: float = 0.0, alpha0: complex = 0j, s: float = 0.0) -> GaussianState:
    """Squeezed vacuum (displaced by ``alpha0``); the narrow quadrature is at angle ``phi/2``."""
    c, sn = math.cos(phi / 2), math.sin(phi / 2)
    R = np.array([[c, -sn], [sn, c]])
    cov = 0.25 * R @ np.diag([math.exp(-2 * r), math.exp(2 * r)]) @ R.T
    return GaussianState(complex(alpha0), cov, 0.0).to_order(s)


def fock_function(n: int, alpha, s: float = 0.0):
    """Phase-space function of the number state ``|n>`` at order ``s < 1``."""
    if not 0 <= n <= 10:
        raise ValueError("number states are tabulated for n <= 10")
    if s >= 1:
        raise ValueError("number states have no regular P function")
    r2 = np.abs(np.asarray(alpha, dtype=complex)) ** 2
    if s == -1:
        return np.exp(-r2) * r2**n / (math.pi * math.factorial(n))
    q = (s + 1) / (s - 1)
    return 2 / (math.pi * (1 - s)) * q**n * special.eval_laguerre(n, 4 * r2 / (1 - s * s)) * np.exp(-2 * r2 / (1 - s))


def grid_axis(window: float, n: int) -> np.ndarray:
    h = 2 * window / n
    return (np.arange(n) - n // 2) * h


def default_window(max_amplitude: float = 0.0, max_n_bar: float = 0.0) -> float:
    return 5.0 * (1.0 + max_amplitude + math.sqrt(max_n_bar))


def sample(state, window: float, n: int = 256, s: Optional[float] = None, label: str = "") -> GridState:
    """Sample a Gaussian state (or a callable of ``alpha``) onto a grid."""
    x = grid_axis(window, n)
    alpha = x[:, None] + 1j * x[None, :]
    if isinstance(state, GaussianState):
        st = state if s is None else state.to_order(s)
        return GridState(st(alpha), window, st.s_order, label)
    return GridState(np.real(state(alpha)), window, 0.0 if s is None else s, label)


def fock_grid(n_photons: int, window: float, n: int = 256, s: float = 0.0) -> GridState:
    return sample(lambda a: fock_function(n_photons, a, s), window, n, s=s, label=f"fock{n_photons}")


def thermal_wigner(n_bar: float, alpha):
    """Wigner function of a thermal state with mean occupation ``n_bar``."""
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    w = 1 + 2 * n_bar
    return 2 / (math.pi * w) * np.exp(-2 * np.abs(np.asarray(alpha)) ** 2 / w)


# -- orders and smoothing ----------------------------------------------------


def xi_s(weights: ModeWeights, s: float, s_prime: float, s_sigma: Mapping[str, float]) -> tuple[float, bool]:
    """Smoothing width ``eta s' + sum zeta_sigma s_sigma - s`` and whether it is the delta limit.

    Raises TransformUndefinedError for a negative width.
    """
    z = weights.zetas
    xi = weights.eta * s_prime + sum(z[c] * s_sigma.get(c, 0.0) for c in z) - s
    if xi < -1e-12:
        raise TransformUndefinedError(
            f"xi = {xi:.3g} < 0 for output order s={s}, cavity order s'={s_prime}, channel orders {dict(s_sigma)}"
        )
    xi = max(xi, 0.0)
    return xi, xi <= 1e-12


def xi_wigner(weights: ModeWeights, n_bar: Mapping[str, float]) -> float:
    """Wigner-order smoothing width with thermal loss channels."""
    z = weights.zetas
    return 1.0 - weights.eta - weights.zeta_in + 2.0 * sum(n_bar.get(c, 0.0) * z[c] for c in LOSS_CHANNELS)


# -- characteristic functions -------------------------------------------------

WEIGHT_ATOL = 1e-9


def _weight(w: float) -> float:
    """Channel weight with quadrature roundoff below zero clipped."""
    if w < -WEIGHT_ATOL:
        raise ValueError(f"negative channel weight {w:.3g}")
    return max(w, 0.0)


def _kvec(beta):
    b = np.asarray(beta, dtype=complex)
    return 2 * b.imag, -2 * b.real


def characteristic(state: PhaseSpaceState, beta):
    """``C(beta; s)`` at the state's own order."""
    kx, kp = _kvec(beta)
    if isinstance(state, GaussianState):
        S = state.cov
        quad = S[0, 0] * kx * kx + 2 * S[0, 1] * kx * kp + S[1, 1] * kp * kp
        return np.exp(1j * (kx * state.mean.real + kp * state.mean.imag) - 0.5 * quad)
    x = state.axis
    ex = np.exp(1j * np.multiply.outer(np.atleast_1d(kx), x))
    ep = np.exp(1j * np.multiply.outer(np.atleast_1d(kp), x))
    val = np.einsum("ki,ij,kj->k", ex, state.values, ep) * state.h**2
    return val.reshape(np.shape(kx)) if np.ndim(kx) else complex(val[0])


def _grid_char_on_mesh(state: GridState, kx: np.ndarray, kp: np.ndarray, scale: float) -> np.ndarray:
    """``C(sqrt(w) beta)`` on the outer-product mesh ``kx x kp`` (separable Fourier sum)."""
    x = state.axis
    Ex = np.exp(1j * scale * np.multiply.outer(kx, x))
    Ep = np.exp(1j * scale * np.multiply.outer(kp, x))
    return Ex @ state.values @ Ep.T * state.h**2


def _state_order(state: Optional[PhaseSpaceState]) -> float:
    return 0.0 if state is None else state.s_order


def _channel_states(channels: ChannelEnsemble, s_sigma: Mapping[str, float], explicit: Optional[Mapping[str, PhaseSpaceState]]):
    """Loss-channel states: explicit ones where given, thermal Gaussians at order ``s_sigma`` otherwise."""
    out = {}
    for c in LOSS_CHANNELS:
        if explicit and c in explicit:
            out[c] = explicit[c]
        else:
            out[c] = thermal(channels.n_bar[c], s_sigma.get(c, 0.0))
    return out


def characteristic_out(
    beta,
    cavity: PhaseSpaceState,
    weights: ModeWeights,
    channels: Optional[ChannelEnsemble] = None,
    s: float = 0.0,
    loss_states: Optional[Mapping[str, PhaseSpaceState]] = None,
):
    """Output characteristic function in order ``s`` as the product over all inputs."""
    channels = channels or ChannelEnsemble()
    states = {"in": channels.input, **_channel_states(channels, {}, loss_states)}
    s_sigma = {c: states[c].s_order for c in states}
    xi, _ = xi_s(weights, s, cavity.s_order, s_sigma)
    b = np.asarray(beta, dtype=complex)
    out = np.exp(-0.5 * xi * np.abs(b) ** 2) * characteristic(cavity, math.sqrt(_weight(weights.eta)) * b)
    z = weights.zetas
    for c, st in states.items():
        if _weight(z[c]) != 0:
            out = out * characteristic(st, math.sqrt(_weight(z[c])) * b)
    return out


# -- the transform ------------------------------------------------------------


def _combine(parts, xi: float, window: float, n: int, s: float, check_leakage: bool = True) -> PhaseSpaceState:
    """Inverse transform of ``exp(-xi|b|^2/2) prod C_i(sqrt(w_i) b)`` onto an ``n x n`` grid.

    ``parts`` is a list of ``(weight, state)``; Gaussians and the smoothing are
    merged analytically. If nothing is sampled the result stays Gaussian.
    """
    mean = 0j
    cov = 0.25 * xi * np.eye(2)
    grids = []
    for w, st in parts:
        w = _weight(w)
        if w == 0:
            continue
        if isinstance(st, GaussianState):
            mean += math.sqrt(w) * st.mean
            cov = cov + w * st.cov
        else:
            grids.append((w, st))
    if not grids:
        return GaussianState(mean, cov, s)

    # zero-padded reciprocal grid: period 2 * (2 window)
    h = 2 * window / n
    m = 2 * n
    k = 2 * math.pi * np.fft.fftfreq(m, d=h)
    kx, kp = k, k
    C = np.ones((m, m), dtype=complex)
    c0 = 1.0
    for w, st in grids:
        C *= _grid_char_on_mesh(st, kx, kp, math.sqrt(w))
        c0 *= st.norm
    KX, KP = np.meshgrid(kx, kp, indexing="ij")
    quad = cov[0, 0] * KX * KX + 2 * cov[0, 1] * KX * KP + cov[1, 1] * KP * KP
    if np.linalg.eigvalsh(cov).min() < -1e-12:
        raise TransformUndefinedError("combined Gaussian factor has negative width at this order")
    C *= np.exp(1j * (KX * mean.real + KP * mean.imag) - 0.5 * quad)

    # P(x) = (1/(2 pi)^2) sum_k C(k) e^{-i k x} dk^2 on x_i = (i - n/2) h, i < m
    xs = (np.arange(m) - n // 2) * h
    phase = np.exp(-1j * np.multiply.outer(xs, k))  # m x m
    P = (phase @ C @ phase.T).real * (k[1] - k[0]) ** 2 / (2 * math.pi) ** 2
    P = P[:n, :n]
    out = GridState(P, window, s)
    if check_leakage:
        lost = abs(c0 - out.norm)
        if lost > LEAKAGE_TOL * max(abs(c0), 1e-300):
            raise WindowTooSmallError(
                f"{lost / abs(c0):.2%} of the norm falls outside the window +-{window:g}", 1.5 * window
            )
    return out


def p_out_transform(
    cavity: PhaseSpaceState,
    weights: ModeWeights,
    channels: Optional[ChannelEnsemble] = None,
    s: float = 0.0,
    loss_states: Optional[Mapping[str, PhaseSpaceState]] = None,
    window: Optional[float] = None,
    n: int = 256,
) -> PhaseSpaceState:
    """Output phase-space function of order ``s``.

    Each input function is rescaled, ``P(alpha) -> P(alpha / sqrt(w)) / w``,
    the rescaled functions are convolved, and the result is smoothed with
    ``(2 / (pi xi)) exp(-2|alpha|^2 / xi)``; ``xi = 0`` is the plain
    convolution. Loss channels are thermal (occupations from ``channels``)
    at Wigner order unless ``loss_states`` supplies other states.
    """
    channels = channels or ChannelEnsemble()
    states = {"in": channels.input, **_channel_states(channels, {}, loss_states)}
    s_sigma = {c: st.s_order for c, st in states.items()}
    xi, _ = xi_s(weights, s, cavity.s_order, s_sigma)
    if window is None:
        window = _auto_window(cavity, states)
    z = weights.zetas
    parts = [(weights.eta, cavity)] + [(z[c], states[c]) for c in states]
    return _combine(parts, xi, window, n, s)


def _auto_window(cavity, states) -> float:
    amp, nb = 0.0, 0.0
    for st in [cavity, *states.values()]:
        if isinstance(st, GridState):
            return st.window
        amp = max(amp, abs(st.mean))
        nb = max(nb, 4 * np.linalg.eigvalsh(st.wigner_cov).max() - 1)
    return default_window(amp, max(nb, 0.0) / 2)


def wigner_out_thermal(
    cavity: PhaseSpaceState,
    weights: ModeWeights,
    n_bar: Mapping[str, float],
    input_state: Optional[PhaseSpaceState] = None,
    window: Optional[float] = None,
    n: int = 256,
) -> PhaseSpaceState:
    """Output Wigner function with thermal loss channels folded into one Gaussian of width ``xi^W``."""
    inp = vacuum() if input_state is None else input_state
    for st in (cavity, inp):
        if st.s_order != 0:
            raise ValueError("Wigner-order inputs required")
    xiw = xi_wigner(weights, n_bar)
    if xiw < -1e-12:
        raise TransformUndefinedError(f"xi^W = {xiw:.3g} < 0")
    xiw = max(xiw, 0.0)
    if window is None:
        window = _auto_window(cavity, {"in": inp})
    return _combine([(weights.eta, cavity), (weights.zeta_in, inp)], xiw, window, n, 0.0)


def gaussian_propagate(
    cavity: GaussianState,
    weights: ModeWeights,
    n_bar: Optional[Mapping[str, float]] = None,
    input_state: Optional[GaussianState] = None,
    s: float = 0.0,
) -> GaussianState:
    """Closed-form output for Gaussian inputs and thermal loss channels (returned at order ``s``)."""
    n_bar = n_bar or {}
    inp = vacuum() if input_state is None else input_state
    z = weights.zetas
    mean = math.sqrt(weights.eta) * cavity.mean + math.sqrt(weights.zeta_in) * inp.mean
    cov = weights.eta * cavity.wigner_cov + weights.zeta_in * inp.wigner_cov
    for c in LOSS_CHANNELS:
        cov = cov + z[c] * 0.25 * (2 * n_bar.get(c, 0.0) + 1) * np.eye(2)
    return GaussianState(mean, cov, 0.0).to_order(s)


def extraction_report(weights: ModeWeights, n_bar: Optional[Mapping[str, float]] = None) -> dict:
    """Figures of merit for state extraction; ``inf`` where a denominator vanishes."""
    n_bar = n_bar or {}
    z = weights.zetas
    eta = weights.eta
    thermal_sum = 2.0 * sum(n_bar.get(c, 0.0) * z[c] for c in LOSS_CHANNELS)

    def ratio(a, b):
        return a / b if b > 1e-15 else math.inf

    den = 1.0 - eta - weights.zeta_in + thermal_sum
    loss = 1.0 - eta
    return {
        "merit_vacuum": ratio(eta, loss),
        "merit_thermal": ratio(eta, loss + thermal_sum),
        "input_weight": ratio(weights.zeta_in, den),
        "cavity_weight": ratio(eta, den),
        "input_suppression": ratio(weights.zeta_in, loss**2) if loss > 1e-15 else 1.0,
        "thermal_width": den,
    }


def fidelity(a: PhaseSpaceState, b: PhaseSpaceState) -> float:
    """Overlap ``pi int W_a W_b``; equals the fidelity when one state is pure."""
    for st in (a, b):
        if st.s_order != 0:
            raise ValueError("fidelity needs Wigner functions")
    if isinstance(a, GaussianState) and isinstance(b, GaussianState):
        S = a.cov + b.cov
        d = np.array([a.mean.real - b.mean.real, a.mean.imag - b.mean.imag])
        return float(math.pi / (2 * math.pi * math.sqrt(np.linalg.det(S))) * math.exp(-0.5 * d @ np.linalg.solve(S, d)))
    if isinstance(a, GaussianState):
        a, b = b, a
    if isinstance(b, GaussianState):
        b = sample(b, a.window, a.n)
    if b.window != a.window or b.n != a.n:
        raise ValueError("grids differ; resample first")
    for st in (a, b):
        if abs(st.norm - 1.0) > LEAKAGE_TOL:
            raise WindowTooSmallError("state not contained in the window", 1.5 * st.window)
    return float(math.pi * np.sum(a.values * b.values) * a.h**2)


# -- serialization --------------------------------------------------------------

_MAGIC = b"PSGRID1\x00"


def write_grid_csv(state: GridState, path: Union[str, Path]) -> None:
    """Header comments (window, resolution, order), then one row per ``x`` index."""
    path = Path(path)
    with path.open("w") as f:
        f.write(f"# window={state.window!r}\n# resolution={state.n}\n# s_order={state.s_order!r}\n")
        f.write("# rows: x index, columns: p index, x_i = (i - N/2) * 2 * window / N\n")
        np.savetxt(f, state.values, delimiter=",", fmt="%.17g")


def read_grid_csv(path: Union[str, Path]) -> GridState:
    meta = {}
    with Path(path).open() as f:
        for line in f:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
    vals = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    n = int(meta["resolution"])
    if vals.shape != (n, n):
        raise ValueError(f"expected {n}x{n} values, found {vals.shape}")
    return GridState(vals, float(meta["window"]), float(meta["s_order"]))


def write_grid_binary(state: GridState, path: Union[str, Path]) -> None:
    """Magic, ``uint32`` rows and columns, ``float64`` window and order, then values (little-endian, row-major)."""
    with Path(path).open("wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIdd", state.n, state.n, state.window, state.s_order))
        f.write(np.ascontiguousarray(state.values, dtype="<f8").tobytes())


def read_grid_binary(path: Union[str, Path]) -> GridState:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError("not a phase-space grid file")
    rows, cols, window, s = struct.unpack_from("<IIdd", data, 8)
    off = 8 + struct.calcsize("<IIdd")
    vals = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
    return GridState(vals.copy(), window, s)
