"""Command-line front end.

Subcommands ``resonances``, ``weights``, ``extract`` and ``verify`` read a
JSON run configuration (see ``CONFIG_SCHEMA``), write CSV/JSON results to the
output directory and return

* 0 on success,
* 2 for configuration errors (schema, bounds, unreadable files, grid window),
* 3 for solver failures (root finding, quadrature),
* 4 for physics-validity failures (negative smoothing width, high-Q
  violation, failed verification checks).

Internally ``c = 1`` and ``l = 1``. Lengths may be given in units of ``l``
(``"unit": "l"``) or in metres (``"unit": "m"``, then the cavity length must
be in metres too); frequencies in ``c/l`` or, with ``c`` given, in rad/s.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import green_function as gf
from . import io_weights as iw
from . import phase_space as ps
from . import resonances as rs
from .optical_stack import (
    ConstantPermittivity,
    LayerStack,
    LorentzPermittivity,
    PoleProximityError,
    StackError,
    verify_layer_identities,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PHYSICS = 0, 2, 3, 4

_quantity = {
    "type": "object",
    "required": ["value", "unit"],
    "additionalProperties": False,
    "properties": {"value": {"type": "number"}, "unit": {"type": "string"}},
}
_length = {**_quantity, "properties": {"value": {"type": "number", "minimum": 0}, "unit": {"enum": ["l", "m"]}}}
_frequency = {**_quantity, "properties": {"value": {"type": "number", "minimum": 0}, "unit": {"enum": ["c/l", "rad/s"]}}}

_permittivity = {
    "oneOf": [
        {
            "type": "object",
            "required": ["model", "real"],
            "additionalProperties": False,
            "properties": {
                "model": {"const": "constant"},
                "real": {"type": "number"},
                "imag": {"type": "number", "minimum": 0},
            },
        },
        {
            "type": "object",
            "required": ["model", "strength", "resonance", "damping"],
            "additionalProperties": False,
            "properties": {
                "model": {"const": "lorentz"},
                "strength": {"type": "number", "minimum": 0},
                "resonance": _frequency,
                "damping": _frequency,
            },
        },
    ]
}

_complex = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

_state = {
    "oneOf": [
        {"type": "object", "required": ["type"], "additionalProperties": False, "properties": {"type": {"const": "vacuum"}}},
        {
            "type": "object",
            "required": ["type", "alpha"],
            "additionalProperties": False,
            "properties": {"type": {"const": "coherent"}, "alpha": _complex},
        },
        {
            "type": "object",
            "required": ["type", "n_bar"],
            "additionalProperties": False,
            "properties": {"type": {"const": "thermal"}, "n_bar": {"type": "number", "minimum": 0}},
        },
        {
            "type": "object",
            "required": ["type", "r"],
            "additionalProperties": False,
            "properties": {
                "type": {"const": "squeezed"},
                "r": {"type": "number", "minimum": 0},
                "phi": {"type": "number"},
                "alpha": _complex,
            },
        },
        {
            "type": "object",
            "required": ["type", "n"],
            "additionalProperties": False,
            "properties": {"type": {"const": "fock"}, "n": {"type": "integer", "minimum": 0, "maximum": 10}},
        },
        {
            "type": "object",
            "required": ["type", "path"],
            "additionalProperties": False,
            "properties": {"type": {"const": "grid"}, "path": {"type": "string"}},
        },
    ]
}

_k_spec = {
    "oneOf": [
        {"type": "integer", "minimum": 1},
        {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        {"type": "string", "pattern": r"^\s*\d+\s*(-\s*\d+\s*)?(,\s*\d+\s*(-\s*\d+\s*)?)*$"},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lossy-cavity run configuration",
    "type": "object",
    "required": ["stack"],
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "stack": {
            "type": "object",
            "required": ["l", "d", "eps1", "eps2", "eps3"],
            "additionalProperties": False,
            "properties": {
                "l": _length,
                "d": _length,
                "eps1": _permittivity,
                "eps2": _permittivity,
                "eps3": _permittivity,
            },
        },
        "modes": {"type": "object", "additionalProperties": False, "properties": {"k": _k_spec}},
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_over_gamma": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "dt_factor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "channels": {
            "type": "object",
            "additionalProperties": False,
            "properties": {c: {"type": "number", "minimum": 0} for c in ("n_bar_cav", "n_bar_plus", "n_bar_minus")},
        },
        "cavity_state": _state,
        "input_state": _state,
        "output_order": {"type": "number", "maximum": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": "number", "exclusiveMinimum": 0},
                "resolution": {"type": "integer", "minimum": 16, "maximum": 2048},
                "format": {"enum": ["binary", "csv", "both"]},
            },
        },
        "high_q_threshold": {"type": "number", "exclusiveMinimum": 0},
        "output": {"type": "object", "additionalProperties": False, "properties": {"directory": {"type": "string"}}},
    },
}

_row = {"type": "object", "additionalProperties": {"type": ["number", "string", "integer", "boolean", "null"]}}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lossy-cavity command result",
    "type": "object",
    "required": ["command", "units", "rows", "status"],
    "properties": {
        "command": {"enum": ["resonances", "weights", "extract", "verify"]},
        "units": {"type": "object"},
        "rows": {"type": "array", "items": _row},
        "status": {"enum": ["ok", "solver_failure", "physics_failure"]},
        "extra": {"type": "object"},
    },
}


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------


def parse_k(spec) -> list[int]:
    """``3``, ``[1, 4]`` or ``"1-5,8"`` to a sorted list of mode indices."""
    if isinstance(spec, int):
        out = {spec}
    elif isinstance(spec, list):
        out = set(spec)
    else:
        out = set()
        for part in str(spec).split(","):
            try:
                bounds = [int(x) for x in part.split("-")]
            except ValueError:
                raise ConfigError(f"bad mode index {part.strip()!r}") from None
            if len(bounds) > 2 or bounds[-1] < bounds[0]:
                raise ConfigError(f"bad mode range {part.strip()!r}")
            out.update(range(bounds[0], bounds[-1] + 1))
    if not out or min(out) < 1:
        raise ConfigError("mode indices must be positive")
    return sorted(out)


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc


def _length_scale(cfg: dict) -> float:
    """Cavity length in the config's length unit (1 for ``l`` units, metres otherwise)."""
    lq = cfg["stack"]["l"]
    if lq["value"] <= 0:
        raise ConfigError("cavity length must be positive")
    return lq["value"] if lq["unit"] == "m" else 1.0


def _to_l(q: dict, scale: float) -> float:
    if q["unit"] == "l":
        return q["value"]
    if scale == 1.0:
        raise ConfigError("lengths in m need the cavity length in m")
    return q["value"] / scale


def _to_freq(q: dict, cfg: dict, scale: float) -> float:
    if q["unit"] == "c/l":
        return q["value"]
    if "c" not in cfg or scale == 1.0:
        raise ConfigError("frequencies in rad/s need 'c' and the cavity length in m")
    return q["value"] * scale / cfg["c"]


def _permittivity_model(spec: dict, cfg: dict, scale: float):
    if spec["model"] == "constant":
        return ConstantPermittivity(spec["real"], spec.get("imag", 0.0))
    return LorentzPermittivity(spec["strength"], _to_freq(spec["resonance"], cfg, scale), _to_freq(spec["damping"], cfg, scale))


def build_stack(cfg: dict) -> LayerStack:
    scale = _length_scale(cfg)
    st = cfg["stack"]
    try:
        return LayerStack(
            l=1.0,
            d=_to_l(st["d"], scale),
            eps1=_permittivity_model(st["eps1"], cfg, scale),
            eps2=_permittivity_model(st["eps2"], cfg, scale),
            eps3=_permittivity_model(st["eps3"], cfg, scale),
        )
    except StackError as exc:
        raise ConfigError(str(exc)) from exc


def units_block(cfg: dict) -> dict:
    scale = _length_scale(cfg)
    out = {"length": "l", "frequency": "c/l", "time": "l/c"}
    if cfg["stack"]["l"]["unit"] == "m" and "c" in cfg:
        out["l_in_m"] = scale
        out["c_over_l_in_rad_per_s"] = cfg["c"] / scale
    return out


def build_state(spec: Optional[dict], cfg: dict, window: float, n: int) -> ps.PhaseSpaceState:
    if spec is None or spec["type"] == "vacuum":
        return ps.vacuum()
    kind = spec["type"]
    if kind == "coherent":
        return ps.coherent(complex(*spec["alpha"]))
    if kind == "thermal":
        return ps.thermal(spec["n_bar"])
    if kind == "squeezed":
        return ps.squeezed(spec["r"], spec.get("phi", 0.0), complex(*spec.get("alpha", (0.0, 0.0))))
    if kind == "fock":
        return ps.fock_grid(spec["n"], window, n)
    path = Path(cfg.get("_base", ".")) / spec["path"]
    try:
        return ps.read_grid_csv(path) if path.suffix == ".csv" else ps.read_grid_binary(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read grid state {path}: {exc}") from exc


def _state_scale(spec: Optional[dict]) -> tuple[float, float]:
    """Largest amplitude and occupation implied by a state spec (for the default window)."""
    if spec is None:
        return 0.0, 0.0
    kind = spec["type"]
    if kind == "coherent":
        return abs(complex(*spec["alpha"])), 0.0
    if kind == "thermal":
        return 0.0, spec["n_bar"]
    if kind == "squeezed":
        return abs(complex(*spec.get("alpha", (0.0, 0.0)))), math.sinh(spec["r"]) ** 2
    if kind == "fock":
        return 0.0, float(spec["n"])
    return 0.0, 0.0


def channel_occupations(cfg: dict) -> dict:
    ch = cfg.get("channels", {})
    return {c: float(ch.get(f"n_bar_{c}", 0.0)) for c in ps.LOSS_CHANNELS}


def grid_settings(cfg: dict) -> tuple[float, int, str]:
    g = cfg.get("grid", {})
    n = int(g.get("resolution", 256))
    fmt = g.get("format", "binary")
    if "window" in g:
        return float(g["window"]), n, fmt
    amp, nb = 0.0, max(channel_occupations(cfg).values())
    for key in ("cavity_state", "input_state"):
        a, m = _state_scale(cfg.get(key))
        amp, nb = max(amp, a), max(nb, m)
    return ps.default_window(amp, nb), n, fmt


# -- output helpers ----------------------------------------------------------


def write_outputs(out_dir: Path, name: str, header: Sequence[str], columns: Sequence[str], rows: list[dict], result: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    (out_dir / f"{name}.csv").write_text(buf.getvalue())
    result = _strict_json(result)
    jsonschema.validate(result, RESULT_SCHEMA)
    (out_dir / f"{name}.json").write_text(json.dumps(result, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _strict_json(v):
    """Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``."""
    if isinstance(v, dict):
        return {k: _strict_json(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_strict_json(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# -- commands ----------------------------------------------------------------

_SOLVER_ERRORS = (rs.ConvergenceError, rs.BranchJumpError, iw.QuadratureError, PoleProximityError)


def _modes(cfg: dict, args) -> list[int]:
    if args.k is not None:
        return parse_k(args.k)
    return parse_k(cfg.get("modes", {}).get("k", 1))


def _fsr(stack: LayerStack, omega: float) -> float:
    return math.pi / (stack.l * stack.index(1, omega).real)


def cmd_resonances(cfg: dict, args) -> int:
    stack = build_stack(cfg)
    thr = cfg.get("high_q_threshold", 0.01)
    rows, failed, violated = [], False, False
    for k in _modes(cfg, args):
        try:
            r = rs.find_resonance(stack, k)
            b = rs.loss_budget(stack, r)
        except _SOLVER_ERRORS as exc:
            rows.append({"k": k, "status": f"solver failure: {exc}"})
            failed = True
            continue
        ratio = r.gamma_k / _fsr(stack, r.omega_k)
        ok = ratio < thr
        violated |= not ok
        rows.append({
            "k": k, "omega_k": r.omega_k, "Gamma_k": r.gamma_k,
            "gamma_rad": b.gamma_rad, "gamma_cav": b.gamma_cav, "gamma_plus": b.gamma_plus,
            "gamma_minus": b.gamma_minus, "gamma_abs": b.gamma_abs, "identity_residual": b.residual,
            "D1_residual": r.residual, "Gamma_over_spacing": ratio,
            "status": "ok" if ok else "high-Q violated",
        })
    columns = ["k", "omega_k", "Gamma_k", "gamma_rad", "gamma_cav", "gamma_plus", "gamma_minus", "gamma_abs",
               "identity_residual", "D1_residual", "Gamma_over_spacing", "status"]
    header = [
        "Omega_k = omega_k - i Gamma_k/2 solves D1 = 1 + r13 exp(2 i n1 Omega l) = 0",
        "gamma_X = c |X|^2 / (2 |n1| l) for X = T (rad), A_cav, A_+, A_- at omega_k",
        "identity_residual = |Gamma_k - gamma_rad - gamma_abs| / Gamma_k",
        "Gamma_over_spacing uses the spacing pi c / (n1' l)",
        f"frequencies in c/l; high-Q threshold {thr}",
    ]
    status = "solver_failure" if failed else ("physics_failure" if violated else "ok")
    result = {"command": "resonances", "units": units_block(cfg), "rows": rows, "status": status}
    out = Path(args.out)
    write_outputs(out, "resonances", header, columns, rows, result)
    _log(args, f"resonances: {len(rows)} mode(s) -> {out / 'resonances.csv'} [{status}]")
    return EXIT_SOLVER if failed else (EXIT_PHYSICS if violated else EXIT_OK)


def _mode_setup(stack: LayerStack, k: int):
    r = rs.find_resonance(stack, k)
    b = rs.loss_budget(stack, r)
    c = rs.io_coefficients(stack, r.omega_k)
    return r, b, c


def _weights_at(stack, r, b, c, t_gamma: float, dt_factor: Optional[float]) -> iw.ModeWeights:
    G = b.gamma_total
    dt = None if dt_factor is None else dt_factor / _fsr(stack, r.omega_k)
    band = iw.make_band(stack, r, t_gamma / G, dt=dt, budget=b)
    return iw.weights_of_t(band, c)


def cmd_weights(cfg: dict, args) -> int:
    stack = build_stack(cfg)
    tcfg = cfg.get("time", {})
    t_list = tcfg.get("t_over_gamma", [0.0, 1.0, 2.0, 5.0, 10.0, 20.0])
    dt_factor = tcfg.get("dt_factor")
    rows, extra, failed = [], {}, False
    for k in _modes(cfg, args):
        try:
            r, b, c = _mode_setup(stack, k)
            for tg in t_list:
                w = _weights_at(stack, r, b, c, tg, dt_factor)
                rows.append(_weight_row(k, tg, w.at, w))
            w = iw.asymptotic_weights(c, b)
            rows.append(_weight_row(k, math.inf, math.inf, w))
            extra[str(k)] = {
                "Gamma": b.gamma_total,
                "gamma_rad_out": iw.output_rate(c),
                "interference_terms": iw.interference_terms(c, b.gamma_total),
            }
        except _SOLVER_ERRORS as exc:
            rows.append({"k": k, "status": f"solver failure: {exc}"})
            failed = True
    columns = ["k", "t_over_gamma", "t", "eta", "zeta_in", "zeta_cav", "zeta_plus", "zeta_minus", "sum_rule", "status"]
    header = [
        "eta(t) = int |F(w, t)|^2 dw; zeta_s(t) = int |chi_s(w, t)|^2 dw by quadrature",
        "rows with t = inf: closed forms eta = gamma_rad_out / Gamma and the matching zeta_s",
        "Gamma = gamma_rad + gamma_abs; t in units of 1/Gamma and l/c",
        "sum_rule = eta + zeta_in + zeta_cav + zeta_plus + zeta_minus",
    ]
    status = "solver_failure" if failed else "ok"
    result = {"command": "weights", "units": units_block(cfg), "rows": rows, "status": status, "extra": extra}
    out = Path(args.out)
    write_outputs(out, "weights", header, columns, rows, result)
    _log(args, f"weights: {len(rows)} row(s) -> {out / 'weights.csv'} [{status}]")
    return EXIT_SOLVER if failed else EXIT_OK


def _weight_row(k, tg, t, w: iw.ModeWeights) -> dict:
    return {
        "k": k, "t_over_gamma": tg, "t": t, "eta": w.eta, "zeta_in": w.zeta_in, "zeta_cav": w.zeta_cav,
        "zeta_plus": w.zeta_plus, "zeta_minus": w.zeta_minus, "sum_rule": w.total, "status": "ok",
    }


def _pure_reference(spec: Optional[dict]) -> bool:
    return spec is None or spec["type"] in ("vacuum", "coherent", "squeezed", "fock")


def cmd_extract(cfg: dict, args) -> int:
    stack = build_stack(cfg)
    window, n, fmt = grid_settings(cfg)
    s_out = float(cfg.get("output_order", 0.0))
    n_bar = channel_occupations(cfg)
    cavity = build_state(cfg.get("cavity_state"), cfg, window, n)
    inp = build_state(cfg.get("input_state"), cfg, window, n)
    window, n = _common_grid(cfg, window, n, cavity, inp)
    cavity = build_state(cfg.get("cavity_state"), cfg, window, n)
    inp = build_state(cfg.get("input_state"), cfg, window, n)
    channels = ps.ChannelEnsemble(n_bar, inp)
    tcfg = cfg.get("time", {})
    t_list = list(tcfg.get("t_over_gamma", [1.0, 5.0, 20.0])) + [math.inf]
    dt_factor = tcfg.get("dt_factor")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, extra = [], {}
    for k in _modes(cfg, args):
        try:
            r, b, c = _mode_setup(stack, k)
            for tg in t_list:
                w = iw.asymptotic_weights(c, b) if math.isinf(tg) else _weights_at(stack, r, b, c, tg, dt_factor)
                state = ps.p_out_transform(cavity, w, channels, s=s_out, window=window, n=n)
                grid = state if isinstance(state, ps.GridState) else ps.sample(state, window, n)
                tag = "inf" if math.isinf(tg) else f"{tg:g}"
                files = _write_grid(out, f"state_k{k}_t{tag}", grid, fmt)
                row = {"k": k, "t_over_gamma": tg, "eta": w.eta, "sum_rule": w.total, "file": files[0]}
                if s_out == 0.0:
                    row["fidelity"] = ps.fidelity(state, cavity)
                    row["W_out_origin"] = grid.value_at_origin()
                row.update(ps.extraction_report(w, n_bar))
                rows.append(row)
            extra[str(k)] = {"report_t_inf": ps.extraction_report(iw.asymptotic_weights(c, b), n_bar)}
        except _SOLVER_ERRORS as exc:
            rows.append({"k": k, "status": f"solver failure: {exc}"})
            result = {"command": "extract", "units": units_block(cfg), "rows": rows, "status": "solver_failure"}
            write_outputs(out, "extract", [], list(rows[0].keys()), rows, result)
            return EXIT_SOLVER
    extra["fidelity_exact"] = _pure_reference(cfg.get("cavity_state"))
    columns = ["k", "t_over_gamma", "eta", "sum_rule", "fidelity", "W_out_origin", "merit_vacuum", "merit_thermal",
               "input_weight", "cavity_weight", "input_suppression", "thermal_width", "file"]
    header = [
        "output state: P_out(alpha; s) from the scaled convolution of the cavity, input and loss-channel states,",
        "smoothed by (2/(pi xi)) exp(-2|alpha|^2/xi), xi = eta s' + sum zeta_s s_s - s",
        "fidelity = pi int W_out W_cavity (exact when the cavity state is pure)",
        "merit_vacuum = eta/(1-eta); merit_thermal = eta/(1-eta+2 sum n zeta)",
        "input/cavity weights: zeta_in/den, eta/den with den = 1-eta-zeta_in+2 sum n zeta",
        "input_suppression = zeta_in/(1-eta)^2",
    ]
    result = {"command": "extract", "units": units_block(cfg), "rows": rows, "status": "ok", "extra": extra}
    write_outputs(out, "extract", header, columns, rows, result)
    _log(args, f"extract: {len(rows)} state(s) -> {out} [ok]")
    return EXIT_OK


def _common_grid(cfg: dict, window: float, n: int, *states) -> tuple[float, int]:
    """Window and resolution of grid states read from files; they must agree with each other and the config."""
    files = [st for spec, st in zip((cfg.get("cavity_state"), cfg.get("input_state")), states)
             if spec is not None and spec["type"] == "grid"]
    if not files:
        return window, n
    ref = files[0]
    explicit = cfg.get("grid", {})
    for st in files[1:]:
        if (st.window, st.n) != (ref.window, ref.n):
            raise ConfigError("grid state files use different windows or resolutions")
    if explicit.get("window", ref.window) != ref.window or explicit.get("resolution", ref.n) != ref.n:
        raise ConfigError(f"grid settings differ from the state file (window {ref.window:g}, resolution {ref.n})")
    return ref.window, ref.n


def _write_grid(out: Path, stem: str, grid: ps.GridState, fmt: str) -> list[str]:
    files = []
    if fmt in ("binary", "both"):
        ps.write_grid_binary(grid, out / f"{stem}.bin")
        files.append(f"{stem}.bin")
    if fmt in ("csv", "both"):
        ps.write_grid_csv(grid, out / f"{stem}.csv")
        files.append(f"{stem}.csv")
    return files


def verification_checks(stack: LayerStack, ks: Sequence[int]) -> list[dict]:
    """Identity and residual checks on one stack; each entry has name, value, threshold, passed."""
    checks = []

    def add(name, value, thr):
        checks.append({"name": name, "value": float(value), "threshold": thr, "passed": bool(value < thr)})

    roots = [rs.find_resonance(stack, k) for k in ks]
    w_lo, w_hi = 0.5 * roots[0].omega_k, roots[-1].omega_k + _fsr(stack, roots[-1].omega_k)
    rng = np.random.default_rng(0)
    worst = 0.0
    for w in np.sort(rng.uniform(w_lo, w_hi, 25)):
        try:
            worst = max(worst, verify_layer_identities(stack, float(w))["max"])
        except PoleProximityError:
            continue
    add("fresnel_identities", worst, 1e-11)

    for r in roots:
        add(f"D1_at_root_k{r.k}", r.residual, 1e-10)
        b = rs.loss_budget(stack, r)
        add(f"rate_identity_k{r.k}", b.residual, 1e-3)
        w = iw.asymptotic_weights(rs.io_coefficients(stack, r.omega_k), b)
        add(f"sum_rule_closed_form_k{r.k}", w.sum_rule_residual, 1e-6)

    # Green-function checks between resonances, where G is well conditioned
    w = roots[0].omega_k + 0.25 * _fsr(stack, roots[0].omega_k)
    d = stack.d
    z1, z2 = 0.31 * stack.l, 0.67 * stack.l
    recip = [abs(gf.green(stack, 1, z1, 1, z2, w) - gf.green(stack, 1, z2, 1, z1, w))]
    if d > 0:
        recip.append(abs(gf.green(stack, 1, z1, 2, 0.5 * d, w) - gf.green(stack, 2, 0.5 * d, 1, z1, w)))
    recip.append(abs(gf.green(stack, 1, z1, 3, 0.4, w) - gf.green(stack, 3, 0.4, 1, z1, w)))
    scale = abs(gf.green(stack, 1, z1, 1, z2, w))
    add("green_reciprocity", max(recip) / max(scale, 1e-300), 1e-12)

    h = 1e-3 * stack.l
    e1 = gf.helmholtz_residual(stack, 1, z2, 1, z1, w, h=h)
    e2 = gf.helmholtz_residual(stack, 1, z2, 1, z1, w, h=h / 2)
    ratio = e1 / e2 if e2 > 0 else 4.0
    add("helmholtz_order2_ratio_deviation", abs(ratio - 4.0), 0.3)

    absorbing = any(stack.permittivity(j)(w).imag > 0 for j in (1, 2, 3))
    if absorbing:
        # measured against |G|: between sharp resonances Im G is a tiny fraction of |G|
        lhs, rhs = gf.absorption_identity(stack, z1, z2, w)
        add("absorption_identity", abs(lhs - rhs) / max(scale, abs(lhs), 1e-300), 1e-8)
    return checks


def cmd_verify(cfg: dict, args) -> int:
    stack = build_stack(cfg)
    try:
        checks = verification_checks(stack, _modes(cfg, args))
    except _SOLVER_ERRORS as exc:
        rows = [{"name": "solver", "value": None, "threshold": None, "passed": False, "message": str(exc)}]
        result = {"command": "verify", "units": units_block(cfg), "rows": rows, "status": "solver_failure"}
        write_outputs(Path(args.out), "verify", [], ["name", "passed", "message"], rows, result)
        return EXIT_SOLVER
    ok = all(c["passed"] for c in checks)
    status = "ok" if ok else "physics_failure"
    result = {"command": "verify", "units": units_block(cfg), "rows": checks, "status": status}
    header = ["relative residuals of the stack identities, root, rate identity, sum rule and Green function"]
    write_outputs(Path(args.out), "verify", header, ["name", "value", "threshold", "passed"], checks, result)
    for c in checks:
        _log(args, f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (< {c['threshold']:g})")
    return EXIT_OK if ok else EXIT_PHYSICS


COMMANDS = {"resonances": cmd_resonances, "weights": cmd_weights, "extract": cmd_extract, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lossy-cavity", description="Lossy planar cavity: resonances, loss budget, input-output weights and output states.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__ or name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default from config or ./out)")
        sp.add_argument("--k", default=None, help="mode index or range, e.g. 3 or 1-5")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is None:
            args.out = cfg.get("output", {}).get("directory", "out")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ps.WindowTooSmallError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ps.TransformUndefinedError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
