"""Command-line driver.

    qbm2ho <command> --config run.yaml --out outdir [--stride n] [--format csv|json]

Commands: coeffs, evolve, entangle, uncertainty, decohere, oracle.
Exit codes: 0 success, 1 comparison above threshold, 2 bad configuration,
3 numerical failure.  Each run writes ``<command>.csv`` (or ``.json``) and a
``<command>_summary.json`` sidecar into the output directory.
"""
import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import analysis, coefficients, dynamics, elementary, kernels, oracle, propagator
from .dynamics import GaussianState, MarkovConstants, Ordering, SystemConfig
from .errors import (ConfigError, NumericalError, RangeError, ResourceError,
                     UnsupportedModel, UnsupportedOperation)

SCHEMA_VERSION = 1

_SCHEMA = {
    "schema_version": None,
    "system": {"M", "Omega", "kappa", "k", "hbar", "kB"},
    "bath": {"kind", "gamma", "cutoff", "T", "modes", "n_modes", "omega_max",
             "Omega_r", "drag"},
    "grid": {"t_max", "dt", "output_stride"},
    "initial_state": {"ordering", "mean", "cov", "widths", "delta"},
    "superposition": {"L0", "P0", "delta", "s"},
    "options": {"ordering", "horizon", "lattice", "threshold", "compare", "substeps"},
}
_BATH_KINDS = ("ohmic", "ohmic_sampled", "discrete", "markov", "none")


class _Fail(Exception):
    def __init__(self, code, msg, diagnostics=None):
        super().__init__(msg)
        self.code = code
        self.diagnostics = diagnostics or {}


@dataclass
class RunConfig:
    system: SystemConfig
    bath: dict
    grid: dict
    initial_state: dict = field(default_factory=dict)
    superposition: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def as_dict(self):
        s = self.system
        return {"schema_version": SCHEMA_VERSION,
                "system": {"M": s.M, "Omega": s.Omega, "kappa": s.kappa, "k": s.k,
                           "hbar": s.hbar, "kB": s.kB},
                "bath": dict(self.bath), "grid": dict(self.grid),
                "initial_state": dict(self.initial_state),
                "superposition": dict(self.superposition), "options": dict(self.options)}


def _num(sec, d, key, default=None, lo=None, strict=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{sec}.{key}: required")
        return default
    try:
        v = float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{sec}.{key}: expected a number, got {d[key]!r}")
    if not np.isfinite(v):
        raise ConfigError(f"{sec}.{key}: must be finite")
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(f"{sec}.{key}: must be {'>' if strict else '>='} {lo}")
    return v


def parse_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    for k, v in raw.items():
        if k not in _SCHEMA:
            raise ConfigError(f"{k}: unknown key")
        allowed = _SCHEMA[k]
        if allowed is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"{k}: must be a mapping")
            for kk in v:
                if kk not in allowed:
                    raise ConfigError(f"{k}.{kk}: unknown key")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}")
    sy = raw.get("system", {})
    system = SystemConfig(M=_num("system", sy, "M", lo=0, strict=True),
                          Omega=_num("system", sy, "Omega", lo=0),
                          kappa=_num("system", sy, "kappa", 0.0),
                          k=int(sy.get("k", 2)),
                          hbar=_num("system", sy, "hbar", 1.0, lo=0, strict=True),
                          kB=_num("system", sy, "kB", 1.0, lo=0, strict=True))
    b = dict(raw.get("bath", {}))
    kind = b.get("kind", "none")
    if kind not in _BATH_KINDS:
        raise ConfigError(f"bath.kind: one of {', '.join(_BATH_KINDS)}")
    bath = {"kind": kind, "T": _num("bath", b, "T", 0.0, lo=0)}
    if kind in ("ohmic", "ohmic_sampled", "markov"):
        bath["gamma"] = _num("bath", b, "gamma", lo=0)
    if kind in ("ohmic", "ohmic_sampled"):
        bath["cutoff"] = _num("bath", b, "cutoff", lo=0, strict=True)
    if kind == "ohmic_sampled":
        bath["n_modes"] = int(_num("bath", b, "n_modes", lo=1))
        if "omega_max" in b:
            bath["omega_max"] = _num("bath", b, "omega_max", lo=0, strict=True)
    if kind == "discrete":
        modes = np.asarray(b.get("modes", []), float).reshape(-1, 3)
        if np.any(modes[:, :2] <= 0):
            raise ConfigError("bath.modes: masses and frequencies must be > 0")
        bath["modes"] = modes.tolist()
    if kind == "markov":
        bath["Omega_r"] = _num("bath", b, "Omega_r", system.Omega, lo=0)
        bath["drag"] = bool(b.get("drag", True))
    g = raw.get("grid", {})
    grid = {"t_max": _num("grid", g, "t_max", lo=0, strict=True),
            "dt": _num("grid", g, "dt", lo=0, strict=True),
            "output_stride": int(_num("grid", g, "output_stride", 1.0, lo=1))}
    if grid["dt"] > grid["t_max"]:
        raise ConfigError("grid.dt: must not exceed grid.t_max")
    ini = dict(raw.get("initial_state", {}))
    if "ordering" in ini and ini["ordering"] not in ("lab", "cmrel"):
        raise ConfigError("initial_state.ordering: lab or cmrel")
    if "widths" in ini:
        w = ini["widths"]
        if not isinstance(w, dict) or set(w) != {"a", "b", "c", "d"}:
            raise ConfigError("initial_state.widths: need exactly a, b, c, d")
        for k in "abcd":
            _num("initial_state.widths", w, k, lo=0, strict=True)
    if "delta" in ini:
        _num("initial_state", ini, "delta", lo=0, strict=True)
    sup = dict(raw.get("superposition", {}))
    if sup:
        _num("superposition", sup, "delta", lo=0, strict=True)
        if len(sup.get("s", [])) != 4:
            raise ConfigError("superposition.s: need four amplitudes")
    opts = dict(raw.get("options", {}))
    if "ordering" in opts and opts["ordering"] not in ("lab", "cmrel"):
        raise ConfigError("options.ordering: lab or cmrel")
    return RunConfig(system, bath, grid, ini, sup, opts)


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config: YAML error: {e}")
    return parse_config(raw)


# ---------------------------------------------------------------- builders

def spectral_density(rc):
    b, M1 = rc.bath, rc.system.M1
    kind = b["kind"]
    if kind == "ohmic":
        if b["gamma"] == 0:
            return kernels.SpectralDensity.discrete([], [], [])
        return kernels.SpectralDensity.ohmic(M1, b["gamma"], b["cutoff"])
    if kind == "ohmic_sampled":
        return finite_bath(rc).spectral_density()
    if kind == "discrete":
        m = np.asarray(b["modes"], float).reshape(-1, 3)
        return kernels.SpectralDensity.discrete(m[:, 0], m[:, 1], m[:, 2])
    if kind == "none":
        return kernels.SpectralDensity.discrete([], [], [])
    raise ConfigError("bath.kind: markov baths have no kernels")


def finite_bath(rc):
    b = rc.bath
    if b["kind"] == "ohmic_sampled":
        if b["gamma"] == 0:
            raise ConfigError("bath.gamma: must be > 0 for a sampled bath")
        sd = kernels.SpectralDensity.ohmic(rc.system.M1, b["gamma"], b["cutoff"])
        return oracle.discretize_ohmic(sd, b["n_modes"], b.get("omega_max"))
    if b["kind"] == "discrete":
        m = np.asarray(b["modes"], float).reshape(-1, 3)
        if len(m) == 0:
            raise ConfigError("bath.modes: empty")
        return oracle.FiniteBath(m[:, 0], m[:, 1], m[:, 2])
    raise ConfigError("bath.kind: the oracle needs ohmic_sampled or discrete")


def kernel_table(rc):
    s = rc.system
    return kernels.tabulate_kernels(spectral_density(rc), rc.bath["T"], rc.grid["t_max"],
                                    rc.grid["dt"], s.hbar, s.kB)


def initial_state(rc):
    ini, s = rc.initial_state, rc.system
    if "widths" in ini:
        w = {k: float(v) for k, v in ini["widths"].items()}
        st = dynamics.product_cm_rel_state(w["a"], w["b"], w["c"], w["d"],
                                           ini.get("mean", (0, 0, 0, 0)), s.hbar)
    elif "delta" in ini:
        if s.Omega <= 0:
            raise ConfigError("initial_state.delta: needs system.Omega > 0")
        cov = analysis.weak_damping_state(s.Omega, float(ini["delta"]), s.M, s.hbar)
        st = GaussianState(Ordering.CMREL, np.asarray(ini.get("mean", (0, 0, 0, 0)), float),
                           cov, s.hbar)
    elif "cov" in ini:
        order = Ordering.LAB if ini.get("ordering", "lab") == "lab" else Ordering.CMREL
        st = GaussianState(order, np.asarray(ini.get("mean", (0, 0, 0, 0)), float),
                           np.asarray(ini["cov"], float), s.hbar)
    else:
        raise ConfigError("initial_state: give widths, delta, or cov")
    return st.validate()


def markov_constants(rc, weak_damping=False):
    b, s = rc.bath, rc.system
    g, T = b["gamma"], b["T"]
    if weak_damping:
        # damping rate of the variances is gamma; diffusion at the shifted frequency
        if not g < 2 * s.Omega:
            raise ConfigError("bath.gamma: weak damping needs gamma < 2 Omega")
        Wp = np.sqrt(s.Omega ** 2 - g ** 2 / 4)
        x = s.hbar * Wp / (2 * s.kB * T) if T > 0 else np.inf
        coth = 1.0 / np.tanh(x) if np.isfinite(x) else 1.0
        return MarkovConstants(b["Omega_r"], 0.5 * g, 0.0, g * s.M1 * s.hbar * Wp / 2 * coth)
    G, Dl, Sg = coefficients.markov_limit_constants(s.M1, g, T, s.kB)
    return MarkovConstants(b["Omega_r"], G if b["drag"] else 0.0, Dl, Sg)


def output_times(rc, stride):
    dt, tm = rc.grid["dt"], rc.grid["t_max"]
    n = int(round(tm / dt))
    return dt * np.arange(0, n + 1, stride)


def _coefs_for(rc, weak_damping=False):
    if rc.bath["kind"] == "markov":
        return markov_constants(rc, weak_damping)
    kt = kernel_table(rc)
    return coefficients.coefficient_trajectory(kt, rc.system.M, rc.system.Omega)


def _ordering(rc, override=None):
    o = override or rc.options.get("ordering", "lab")
    return Ordering.LAB if o == "lab" else Ordering.CMREL


# ---------------------------------------------------------------- commands

def cmd_coeffs(rc, stride):
    kt = kernel_table(rc)
    tr = coefficients.coefficient_trajectory(kt, rc.system.M, rc.system.Omega, stride=stride)
    header = ["t", "dOmega2", "Gamma", "Delta", "Sigma"]
    summary = {"final": dict(zip(header, map(float, list(tr.rows())[-1]))),
               "convention_tag": tr.convention_tag, "diagnostics": tr.diagnostics}
    return header, tr.rows(), summary


def _traj_output(traj):
    return traj.header(), traj.rows()


def cmd_evolve(rc, stride, ordering=None):
    st = initial_state(rc)
    coefs = _coefs_for(rc)
    times = output_times(rc, stride)
    tr = dynamics.evolve(st, rc.system, coefs, times, _ordering(rc, ordering),
                         int(rc.options.get("substeps", 1)))
    rs = min(dynamics.rs_min_eig(c, rc.system.hbar) for c in tr.to(Ordering.LAB).cov)
    summary = {"final_mean": tr.mean[-1].tolist(), "final_cov": tr.cov[-1].tolist(),
               "ordering": tr.ordering.value, "rs_min_eig": rs}
    h, rows = _traj_output(tr)
    return h, rows, summary


def cmd_entangle(rc, stride):
    s, b = rc.system, rc.bath
    if b["kind"] != "markov":
        raise ConfigError("bath.kind: entangle runs the Markov example (kind: markov)")
    if "widths" not in rc.initial_state:
        raise ConfigError("initial_state.widths: required for entangle")
    w = {k: float(v) for k, v in rc.initial_state["widths"].items()}
    D = 2 * s.M1 * b["gamma"] * s.kB * b["T"]
    st = initial_state(rc)
    times = output_times(rc, stride)
    tr = dynamics.evolve(st, s, markov_constants(rc), times, Ordering.LAB)
    reports = analysis.duan_series(tr, s.M, D)
    t_dent = None
    if s.Omega == 0 and s.kappa == 0 and not b["drag"]:
        t_dent = analysis.disentanglement_time(w["a"], w["b"], w["c"], w["d"], s.M,
                                               b["gamma"], b["T"], s.hbar, s.kB)
    cross = next((float(t) for t, r in zip(times, reports) if r.separable), None)
    rows = ([t, r.variance_u, r.variance_v, r.lhs, int(r.separable)]
            for t, r in zip(times, reports))
    summary = {"t_dent": t_dent, "first_separable_time": cross, "D": D,
               "output_step": float(times[1] - times[0]) if len(times) > 1 else None}
    return ["t", "var_u", "var_v", "lhs", "separable"], rows, summary


def cmd_uncertainty(rc, stride):
    s, b = rc.system, rc.bath
    st = initial_state(rc)
    times = output_times(rc, stride)
    coefs = _coefs_for(rc, weak_damping=True)
    tr = dynamics.evolve(st, s, coefs, times, Ordering.CMREL)
    U, Ulab, ok = analysis.uncertainty_product(tr)
    delta = rc.initial_state.get("delta")
    g = b.get("gamma", 0.0)
    if delta is not None and s.Omega > 0 and g < 2 * s.Omega and b["T"] > 0:
        fc, fr = analysis.closed_form_fcm_frel(s.Omega, g, b["T"], float(delta), times,
                                               s.hbar, s.kB)
    else:
        fc = fr = np.full(len(times), np.nan)
    rows = ([t, u, ul, int(k), c, r] for t, u, ul, k, c, r in zip(times, U, Ulab, ok, fc, fr))
    prod = fc * fr
    rel = np.abs(U / prod - 1) if np.all(np.isfinite(prod)) else None
    summary = {"U0": float(U[0]), "bound_ok_all": bool(ok.all()),
               "max_rel_dev_closed_form": None if rel is None else float(rel.max())}
    return ["t", "U", "U_lab", "bound_ok", "f_cm", "f_rel"], rows, summary


def cmd_decohere(rc, stride):
    s = rc.system
    if abs(s.M - 1) > 1e-12 or abs(s.hbar - 1) > 1e-12:
        raise ConfigError("system: decohere works in M = hbar = 1 units")
    if s.kappa != 0:
        raise ConfigError("system.kappa: decohere needs kappa = 0")
    sup = rc.superposition
    if not sup:
        raise ConfigError("superposition: required for decohere")
    amps = [complex(*a) if isinstance(a, (list, tuple)) else complex(a) for a in sup["s"]]
    spec = propagator.SuperpositionSpec(float(sup["L0"]), float(sup["P0"]),
                                        float(sup["delta"]), tuple(amps)).normalized()
    t = float(rc.options.get("horizon", rc.grid["t_max"]))
    kt = kernel_table(rc)
    ef = elementary.build_elementary(kt, s.M, s.Omega, t)
    pd = propagator.build_propagator(ef, kt)
    lat = rc.options.get("lattice", {"x_min": -5.0, "x_max": 5.0, "n": 41})
    x = np.linspace(float(lat["x_min"]), float(lat["x_max"]), int(lat["n"]))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel(), X1.ravel(), X2.ravel()], 1)
    rho = propagator.evolve_superposition(pd, spec, pts)
    dx = x[1] - x[0]
    line = propagator.evolve_superposition(pd, spec, np.stack([x, x, x, x], 1))
    vis = analysis.fringe_visibility(line.real, x, L0=spec.L0)
    rows = ([*p, r.real, r.imag] for p, r in zip(pts, rho))
    summary = {"horizon": t, "trace": float(rho.real.sum() * dx * dx),
               "visibility": vis.value, "flat": vis.flat,
               "b": pd.b.tolist(), "a11": pd.a11, "a12": pd.a12, "a22": pd.a22}
    return ["x1", "x2", "y1", "y2", "re", "im"], rows, summary


def cmd_oracle(rc, stride, compare=False, threshold=None):
    s = rc.system
    bath = finite_bath(rc)
    st = initial_state(rc)
    times = output_times(rc, stride)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ex = oracle.evolve_exact(bath, s, st, rc.bath["T"], times, Ordering.CMREL)
    summary = {"t_rec": bath.t_rec, "n_modes": bath.n, "provenance": bath.provenance,
               "recurrence_warning": ex.meta.get("recurrence_warning")}
    compare = compare or bool(rc.options.get("compare", False))
    if not compare:
        h, rows = _traj_output(ex)
        return h, rows, summary
    kt = kernels.tabulate_kernels(bath.spectral_density(), rc.bath["T"], rc.grid["t_max"],
                                  rc.grid["dt"], s.hbar, s.kB)
    tr = coefficients.coefficient_trajectory(kt, s.M, s.Omega)
    ms = dynamics.evolve(st, s, tr, times, Ordering.CMREL)
    rep = oracle.compare_master_vs_oracle(ms, ex)
    thr = float(threshold if threshold is not None else rc.options.get("threshold", 2e-2))
    summary.update(rep.as_dict())
    summary["threshold"] = thr
    summary["passed"] = bool(rep.max_rel_err <= thr)
    return ["t", "rel_err"], ([t, e] for t, e in zip(rep.t, rep.rel_err)), summary


COMMANDS = {"coeffs": cmd_coeffs, "evolve": cmd_evolve, "entangle": cmd_entangle,
            "uncertainty": cmd_uncertainty, "decohere": cmd_decohere, "oracle": cmd_oracle}


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_rows(path, header, rows, fmt):
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")
        else:
            fh.write('{"columns": ' + json.dumps(header) + ', "rows": [\n')
            first = True
            for r in rows:
                fh.write(("" if first else ",\n") + json.dumps(_jsonable(list(r))))
                first = False
            fh.write("\n]}\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(argv=None):
    p = argparse.ArgumentParser(prog="qbm2ho", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--compare", action="store_true")
    p.add_argument("--ordering", choices=("lab", "cmrel"), default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    a = p.parse_args(argv)
    os.makedirs(a.out, exist_ok=True)
    err_path = os.path.join(a.out, f"{a.command}_error.json")
    try:
        try:
            rc = load_config(a.config)
            stride = a.stride if a.stride is not None else rc.grid["output_stride"]
            if stride < 1:
                raise ConfigError("--stride: must be >= 1")
            kw = {}
            if a.command == "evolve":
                kw["ordering"] = a.ordering
            if a.command == "oracle":
                kw.update(compare=a.compare, threshold=a.threshold)
            header, rows, summary = COMMANDS[a.command](rc, stride, **kw)
            write_rows(os.path.join(a.out, f"{a.command}.{a.format}"), header, rows, a.format)
        except (ConfigError, UnsupportedModel, UnsupportedOperation) as e:
            raise _Fail(2, str(e))
        except (NumericalError, RangeError, ResourceError, np.linalg.LinAlgError) as e:
            raise _Fail(3, str(e), getattr(e, "diagnostics", {}))
    except _Fail as f:
        _write_json(err_path, {"error": str(f), "exit_code": f.code, "diagnostics": f.diagnostics})
        print(f"qbm2ho {a.command}: {f}", file=sys.stderr)
        return f.code
    summary["config"] = rc.as_dict()
    _write_json(os.path.join(a.out, f"{a.command}_summary.json"), summary)
    if a.command == "oracle" and "passed" in summary and not summary["passed"]:
        print(f"max relative error {summary['max_rel_err']:.3g} above threshold "
              f"{summary['threshold']:.3g}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
