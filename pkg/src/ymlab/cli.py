"""Command-line entry point: configuration, reproducible runs and data files.

Every command writes into ``--out``:

* ``<command>.csv``   data table, first line ``# schema_version: N``
* ``<command>.json``  summary
* ``plot_<command>.py`` plain-text matplotlib script that reads the CSV
* ``config.txt``      resolved flat configuration
* ``manifest.json``   config hash, version, per-suite pass/fail, checksums
* ``timing.json``     wall time (kept out of the manifest so that reruns are
  byte-identical)

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

SCHEMA_VERSION = 1
THREADS_ENV = "YMLAB_NUM_THREADS"


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


# ------------------------------------------------------------------- config

# key -> (type, default). Units are carried by the key suffix:
#   _y        length in similarity coordinates
#   _simtime  rescaled time tau
#   _phystime physical time t
#   _count / _nodes  integers, _rel relative tolerance, _flag 0 or 1
_SCHEMA: Dict[str, tuple] = {
    "n": (int, 5),
    "seed": (int, 0),
    "out_dir": (str, "ymlab-out"),
    "grid_K_nodes": (int, 96),
    "grid_R_max_y": (float, 20.0),
    "grid_stretch_ratio": (float, 0.1),
    "spectral_modes_count": (int, 10),
    "spectral_sym_tol_rel": (float, 1e-6),
    "flow_data": (str, "auto"),
    "flow_eps_amplitude": (float, 1e-3),
    "flow_tau_end_simtime": (str, "auto"),
    "flow_tol_rel": (float, 1e-10),
    "flow_samples_count": (int, 201),
    "flow_fit_window_simtime": (str, "auto"),
    "flow_t_stop_gap_phystime": (float, 1e-5),
    "flow_curvature_cap_per_length2": (float, 1e10),
    "picard_horizon_simtime": (str, "auto"),
    "picard_dt_simtime": (float, 0.05),
    "picard_tol_rel": (float, 1e-12),
    "picard_eps_list_amplitude": (str, "1e-2,3e-3,1e-3"),
    "picard_check_window_simtime": (float, 4.0),
    "identity_points_count": (int, 100),
    "identity_radius_y": (float, 10.0),
    "inject_corrupt_constant_flag": (int, 0),
    "fuzz_pairs_count": (int, 100000),
    "kato_points_count": (int, 1000),
    "kato_step_y": (float, 1e-2),
    "cert_R_list_y": (str, "10,20,40"),
    "cert_fd_step_y": (float, 1e-3),
}

_TOLERANCE_KEYS = ("spectral_sym_tol_rel", "flow_tol_rel", "picard_tol_rel",
                   "flow_t_stop_gap_phystime", "kato_step_y", "cert_fd_step_y",
                   "picard_dt_simtime", "flow_eps_amplitude")

_FLOW_DATA = {
    "flow-rescaled": ("picard", "positive", "g"),
    "flow-blowup": ("soliton", "picard", "naive"),
}


def _parse_value(key: str, raw: str):
    typ = _SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if typ is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    return raw


def _float_list(key: str, raw: str) -> List[float]:
    try:
        vals = [float(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


@dataclass
class RunConfig:
    values: Dict[str, object] = field(default_factory=lambda: {k: d for k, (_, d) in _SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, raw) if isinstance(raw, str) else _SCHEMA[key][0](raw)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg.set(k, v)
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def validate(self, command: Optional[str] = None) -> "RunConfig":
        v = self.values
        if not 5 <= v["n"] <= 9:
            raise ConfigError(f"n must lie in 5..9, got {v['n']}")
        if v["grid_K_nodes"] < 64:
            raise ConfigError(f"grid_K_nodes must be >= 64, got {v['grid_K_nodes']}")
        if v["grid_K_nodes"] > 1024:
            raise ConfigError("grid_K_nodes above 1024 is outside the supported range")
        if v["grid_R_max_y"] < 20:
            raise ConfigError(f"grid_R_max_y must be >= 20, got {v['grid_R_max_y']}")
        if not 0 < v["grid_stretch_ratio"] <= 1:
            raise ConfigError("grid_stretch_ratio must lie in (0, 1]")
        for k in _TOLERANCE_KEYS:
            if not v[k] > 0:
                raise ConfigError(f"{k} must be positive")
        if not 2 <= v["spectral_modes_count"] <= v["grid_K_nodes"]:
            raise ConfigError("spectral_modes_count must lie in 2..grid_K_nodes")
        if v["inject_corrupt_constant_flag"] not in (0, 1):
            raise ConfigError("inject_corrupt_constant_flag must be 0 or 1")
        if v["flow_samples_count"] < 11:
            raise ConfigError("flow_samples_count must be >= 11")
        if not v["picard_check_window_simtime"] > 0:
            raise ConfigError("picard_check_window_simtime must be positive")
        for k in ("flow_tau_end_simtime", "picard_horizon_simtime"):
            if v[k] != "auto":
                val = _float_list(k, v[k])
                if len(val) != 1 or not val[0] > 0:
                    raise ConfigError(f"{k} must be 'auto' or a positive number")
        for k in ("identity_points_count", "fuzz_pairs_count", "kato_points_count"):
            if v[k] < 1:
                raise ConfigError(f"{k} must be >= 1")
        if not 0 < v["flow_t_stop_gap_phystime"] < 1:
            raise ConfigError("flow_t_stop_gap_phystime must lie in (0, 1)")
        eps = _float_list("picard_eps_list_amplitude", v["picard_eps_list_amplitude"])
        if any(e <= 0 for e in eps):
            raise ConfigError("picard_eps_list_amplitude entries must be positive")
        Rs = _float_list("cert_R_list_y", v["cert_R_list_y"])
        if any(R <= 0 for R in Rs):
            raise ConfigError("cert_R_list_y entries must be positive")
        if v["flow_fit_window_simtime"] != "auto":
            w = _float_list("flow_fit_window_simtime", v["flow_fit_window_simtime"])
            if len(w) != 2 or not 0 <= w[0] < w[1]:
                raise ConfigError("flow_fit_window_simtime must be 'auto' or 'lo,hi' with lo < hi")
        if command in _FLOW_DATA and v["flow_data"] != "auto" and v["flow_data"] not in _FLOW_DATA[command]:
            raise ConfigError(f"flow_data for {command} must be one of {_FLOW_DATA[command]}")
        return self

    def canonical_text(self) -> str:
        """Sorted key = value lines; the output directory is not part of a run's identity."""
        lines = []
        for k in sorted(self.values):
            if k == "out_dir":
                continue
            val = self.values[k]
            lines.append(f"{k} = {float(val)!r}" if isinstance(val, float) else f"{k} = {val}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


# ------------------------------------------------------------------ writers


def _num(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else x
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(header: List[str], rows: List[list]) -> str:
    out = [f"# schema_version: {SCHEMA_VERSION}", ",".join(header)]
    for row in rows:
        out.append(",".join(v if isinstance(v, str) else _num(v) for v in row))
    return "\n".join(out) + "\n"


_PLOT_TEMPLATE = '''"""Plot {csv} (written by ymlab {command})."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
with open(path) as fh:
    lines = [ln for ln in fh if not ln.startswith("#")]
rows = list(csv.DictReader(lines))


def col(name):
    return [float(r[name]) for r in rows]


fig, ax = plt.subplots()
{body}
ax.legend()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''

_PLOT_BODIES = {
    "verify-identities": ('ax.bar(range(len(rows)), col("max_residual"), tick_label=[r["suite"] for r in rows],'
                          ' label="max residual")\nax.set_yscale("log")'),
    "spectrum": ('ax.plot(col("j"), col("lambda_j"), "o-", label="lambda_j")\n'
                 'ax.plot(col("j"), col("farfield_slope"), "s--", label="far-field slope")\nax.set_xlabel("j")'),
    "flow-rescaled": ('ax.semilogy(col("tau"), col("norm_rho"), label="norm_rho")\nax.set_xlabel("tau")'),
    "picard": ('ax.semilogy(col("tau"), col("norm_rho"), ".", ms=2, label="norm_rho")\nax.set_xlabel("tau")'),
    "flow-blowup": ('ax.plot(col("tau"), col("ratio"), label="(1-t) sup|F|")\nax.set_xlabel("tau = -log(1-t)")'),
    "certify-nonequivariant": ('for rd in sorted({r["reading"] for r in rows}):\n'
                               '    sel = [r for r in rows if r["reading"] == rd]\n'
                               '    ax.loglog([float(r["R"]) for r in sel], [abs(float(r["margin"])) + 1e-300 for r in sel],'
                               ' "o-", label=rd)\nax.set_xlabel("R")'),
    "kato-fuzz": ('ax.bar(range(len(rows)), col("min_margin"), tick_label=[r["suite"] + r["n"] for r in rows],'
                  ' label="min margin")'),
}


@dataclass
class CommandResult:
    header: List[str]
    rows: List[list]
    summary: dict
    suites: Dict[str, bool]
    diagnostics: Dict[str, bool] = field(default_factory=dict)


def _artifact_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "0+unknown"


def write_outputs(command: str, cfg: RunConfig, res: CommandResult, out: Path, wall: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    files = {
        f"{stem}.csv": _csv_text(res.header, res.rows),
        f"{stem}.json": _dump_json(res.summary),
        f"plot_{stem}.py": _PLOT_TEMPLATE.format(csv=f"{stem}.csv", command=command,
                                                 body=_PLOT_BODIES[command]),
        "config.txt": cfg.canonical_text(),
    }
    inventory = {}
    for name, text in sorted(files.items()):
        data = text.encode()
        (out / name).write_bytes(data)
        inventory[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "command": command,
        "artifact_version": _artifact_version(),
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.values.items() if k != "out_dir"},
        "config_hash": cfg.hash(),
        "suites": res.suites,
        "diagnostics": res.diagnostics,
        "passed": all(res.suites.values()),
        "files": inventory,
        "wall_time_file": "timing.json",
    }
    (out / "manifest.json").write_text(_dump_json(manifest))
    (out / "timing.json").write_text(_dump_json({"wall_time_s": wall}))
    return manifest


# ------------------------------------------------------------ shared helpers


def _params(cfg: RunConfig):
    from .soliton import constants

    p = constants(cfg["n"])
    if cfg["inject_corrupt_constant_flag"]:
        p = p.perturbed(da=1e-3)
    return p


def _grid(cfg: RunConfig):
    from .equivariant import RadialGrid

    return RadialGrid(cfg["grid_K_nodes"], cfg["grid_R_max_y"], cfg["grid_stretch_ratio"])


def _operator_and_basis(cfg: RunConfig, grid=None):
    from .equivariant import reduce_L, spectrum

    grid = grid or _grid(cfg)
    op = reduce_L(grid, _params(cfg))
    basis = spectrum(op, cfg["spectral_modes_count"], cfg["spectral_sym_tol_rel"])
    return op, basis


def _random_points(rng, count: int, n: int, radius: float) -> np.ndarray:
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / n)


def _rel(a, b) -> float:
    return float(np.sqrt(np.sum((a - b) ** 2)) / max(np.sqrt(np.sum(b**2)), 1e-300))


def _mode_rows(trace, ratio) -> list:
    rows = []
    for k in range(trace.tau.size):
        rows.append([trace.tau[k], trace.norm_rho[k], *trace.modes[k], ratio[k]])
    return rows


# ------------------------------------------------------- verify-identities


def cmd_verify_identities(cfg: RunConfig) -> CommandResult:
    from . import operators as O
    from . import soliton as S

    n = cfg["n"]
    p = _params(cfg)
    rng = np.random.default_rng(cfg["seed"])
    pts = _random_points(rng, cfg["identity_points_count"], n, cfg["identity_radius_y"])
    tiers = {"soliton_residual": 1e-9, "eigenpair_g": 1e-8, "eigenpair_F": 1e-8,
             "flow_identity": 1e-9, "conjugation": 1e-8, "chain_rule": 1e-9}
    worst = dict.fromkeys(tiers, 0.0)
    fields = [O.random_analytic_field(n, rng) for _ in range(len(pts))]
    taus = rng.uniform(0.0, 3.0, size=len(pts))
    for y, u_field, tau in zip(pts, fields, taus):
        worst["soliton_residual"] = max(worst["soliton_residual"],
                                        float(np.sqrt(np.sum(S.soliton_residual(y, p) ** 2))))
        g = S.eigenfunction_g(y, p)
        worst["eigenpair_g"] = max(worst["eigenpair_g"], _rel(O.linearized_L(g, y, p), g.value))
        for alpha in range(1, n + 1):
            Fa = S.eigenfunction_F(alpha, y, p)
            if np.sum(Fa.value**2) > 0:
                worst["eigenpair_F"] = max(worst["eigenpair_F"],
                                           _rel(O.linearized_L(Fa, y, p), 0.5 * Fa.value))
        u = u_field(y)
        B = S.W_jet(y, p).truncated() + u
        lhs = O.rescaled_rhs(B, u, y)
        rhs = O.linearized_L(u, y, p) + O.nonlinear_N(u, y, p)
        worst["flow_identity"] = max(worst["flow_identity"], float(np.abs(lhs - rhs).max()))
        # conjugation: A(e^{-|y|^2/8} u) = -e^{-|y|^2/8} L(u)
        s = float(y @ y)
        f0 = np.exp(-s / 8)
        f1 = -y / 4 * f0
        f2 = (-np.eye(n) / 4 + np.outer(y, y) / 16) * f0
        from .jets import scalar_times_jet

        phi = scalar_times_jet(f0, f1, f2, u)
        worst["conjugation"] = max(worst["conjugation"],
                                   _rel(O.schrodinger_A(phi, y, p), -f0 * O.linearized_L(u, y, p)))
        chain = O.rescaled_rhs_via_physical(B, u, y, tau)
        worst["chain_rule"] = max(worst["chain_rule"], float(np.abs(chain - lhs).max()))
    rows, suites = [], {}
    for name, tol in tiers.items():
        ok = bool(worst[name] < tol)
        suites[name] = ok
        rows.append([name, n, worst[name], tol, "1" if ok else "0"])
    summary = {"n": n, "points": len(pts), "max_residual": worst, "tolerance": tiers,
               "corrupted_constant": bool(cfg["inject_corrupt_constant_flag"]),
               "failing": [k for k, v in suites.items() if not v]}
    return CommandResult(["suite", "n", "max_residual", "tolerance", "passed"], rows, summary, suites)


# ---------------------------------------------------------------- spectrum


def cmd_spectrum(cfg: RunConfig) -> CommandResult:
    from .analysis import growth_check
    from .equivariant import cosine, g_profile

    grid = _grid(cfg)
    op, basis = _operator_and_basis(cfg, grid)
    fine_op, fine = _operator_and_basis(cfg, grid.refined(2))
    lam, lam_f = basis.eigenvalues, fine.eigenvalues
    rows, growth = [], {}
    for j in range(1, lam.size + 1):
        gr = growth_check(basis.mode(j), lam[j - 1])
        growth[f"growth_mode_{j}"] = gr.ok
        rows.append([j, lam[j - 1], gr.slope, abs(lam[j - 1] - lam_f[j - 1])])
    cos = abs(cosine(g_profile(fine.grid, op.params), fine.mode(1)))
    unstable = float(np.min(np.abs(lam_f + 1.0)))
    suites = {
        "symmetry": basis.symmetry_residual <= cfg["spectral_sym_tol_rel"],
        "gram": basis.gram_residual <= 1e-8,
        "eigenvalue_minus_one": unstable < 1e-3,
        "g_cosine": cos > 0.999,
        "refinement": bool(np.all(np.abs(lam - lam_f) < 1e-3)),
    }
    summary = {"n": cfg["n"], "I": basis.split_index, "lambda_next": basis.lambda_next,
               "eigenvalues": lam, "eigenvalues_refined": lam_f,
               "symmetry_residual": basis.symmetry_residual, "gram_residual": basis.gram_residual,
               "g_cosine_refined": cos, "distance_to_minus_one": unstable,
               "growth_bound_ok": growth, "growth_window_y": [grid.R_max / 4, grid.R_max]}
    return CommandResult(["j", "lambda_j", "farfield_slope", "refinement_delta"], rows, summary,
                         suites, growth)


# ------------------------------------------------------------ rescaled flow


def _positive_data(basis, eps: float):
    I = basis.split_index
    return (basis.mode(I + 1) * 0.8 + basis.mode(I + 2) * 0.6) * eps


def _picard_horizon(cfg: RunConfig, basis) -> float:
    """Horizon with e^{-lambda_{I+1} (T - tau_check)} < 1e-10 unless set explicitly."""
    if cfg["picard_horizon_simtime"] != "auto":
        return float(cfg["picard_horizon_simtime"])
    T = cfg["picard_check_window_simtime"] + math.log(1e10) / basis.lambda_next
    return cfg["picard_dt_simtime"] * math.ceil(T / cfg["picard_dt_simtime"])


def _decay_schedule(cfg: RunConfig, basis) -> tuple:
    """(tau_end, fit window) for decaying data.

    The window opens once the next positive mode is damped by e^{-7} relative
    to the slowest one and spans four e-foldings of the slowest mode.
    """
    lam = basis.eigenvalues
    I = basis.split_index
    start = 7.0 / (lam[I + 1] - lam[I])
    end = start + 4.0 / lam[I]
    if cfg["flow_tau_end_simtime"] != "auto":
        end = float(cfg["flow_tau_end_simtime"])
        start = min(start, 0.5 * end)
    return end, (start, end)


def _linear_prediction(basis, v0, positive_only: bool) -> float:
    c = basis.coefficients(v0.values)
    lam = basis.eigenvalues
    keep = np.abs(c) > 1e-6 * np.abs(c).max()
    if positive_only:
        keep &= lam > 0
    return float(lam[keep].min())


def cmd_flow_rescaled(cfg: RunConfig) -> CommandResult:
    from .equivariant import g_profile, weighted_norm
    from .flow import decay_fit, evolve_rescaled, picard_construct

    data = cfg["flow_data"] if cfg["flow_data"] != "auto" else "picard"
    grid = _grid(cfg)
    op, basis = _operator_and_basis(cfg, grid)
    eps = cfg["flow_eps_amplitude"]
    summary = {"n": cfg["n"], "data": data, "eps": eps, "lambda_next": basis.lambda_next,
               "I": basis.split_index}
    if data == "g":
        # 3.5 e-foldings of growth; eps = 1e-3 ends near 3e-2, still linear
        tau_end = 4.0 if cfg["flow_tau_end_simtime"] == "auto" else float(cfg["flow_tau_end_simtime"])
        window = (0.0, min(3.5, tau_end))
        gp = g_profile(grid, op.params)
        v0 = gp * (eps / weighted_norm(gp))
    else:
        tau_end, window = _decay_schedule(cfg, basis)
        v0 = _positive_data(basis, eps)
        if data == "picard":
            res = picard_construct(v0, op, basis, T=_picard_horizon(cfg, basis),
                                   dt=cfg["picard_dt_simtime"], tol=cfg["picard_tol_rel"])
            v0 = res.initial_profile(grid, cfg["n"])
            summary["contraction_factors"] = res.report.contraction_factors
    samples = np.linspace(0.0, tau_end, cfg["flow_samples_count"])
    trace = evolve_rescaled(v0, op, tau_end, samples=samples, basis=basis, rtol=cfg["flow_tol_rel"])
    pred = _linear_prediction(basis, v0, positive_only=data != "g")
    I = basis.split_index
    unstable_share = np.sqrt(np.sum(trace.modes[:, :I] ** 2, axis=1)) / trace.norm_rho
    cut = False
    if cfg["flow_fit_window_simtime"] != "auto":
        window = tuple(_float_list("flow_fit_window_simtime", cfg["flow_fit_window_simtime"]))
    elif data == "picard":
        # round-off in the unstable coordinates grows like e^tau; stop the fit
        # before it reaches 1e-3 of the decaying solution
        late = (trace.tau > window[0]) & (unstable_share > 1e-3)
        if np.any(late):
            window = (window[0], float(trace.tau[np.argmax(late)]))
            cut = True
    series = trace.modes[:, 0] if data == "g" else trace.norm_rho
    fit = decay_fit(trace.tau, series, window)
    ratio = trace.norm_rho * np.exp(pred * trace.tau) / trace.norm_rho[0]
    summary.update({"tau_end_simtime": tau_end, "fitted_delta": fit.rate, "fit_ci95": [fit.ci_low, fit.ci_high],
                    "fit_reliable": fit.reliable, "fit_efoldings": fit.efoldings,
                    "fit_window_simtime": list(window), "window_cut_by_instability": cut,
                    "linear_prediction": pred, "final_norm_rho": trace.norm_rho[-1],
                    "max_unstable_share_in_window": float(unstable_share[(trace.tau >= window[0])
                                                                         & (trace.tau <= window[1])].max())})
    checks = {"fit_reliable": fit.reliable,
              "rate_matches_prediction": abs(fit.rate - pred) <= 0.05 * abs(pred)}
    if data != "g":
        # the upper end is checked within the 95% confidence interval of the fit
        checks["rate_in_range"] = 0.0 < fit.rate and fit.ci_low <= basis.lambda_next
    # uncorrected positive data is a negative control: the unstable mode is
    # seeded at order eps^2, so its checks are reported, not enforced
    suites, diagnostics = (({"integration_completed": True}, checks) if data == "positive"
                           else (checks, {}))
    header = ["tau", "norm_rho"] + [f"mode_{j}" for j in range(1, basis.eigenvalues.size + 1)] + ["ratio"]
    return CommandResult(header, _mode_rows(trace, ratio), summary, suites, diagnostics)


# ---------------------------------------------------------------- Picard


def cmd_picard(cfg: RunConfig) -> CommandResult:
    from .equivariant import radial_weight
    from .flow import evolve_rescaled, picard_construct

    grid = _grid(cfg)
    n = cfg["n"]
    op, basis = _operator_and_basis(cfg, grid)
    w = radial_weight(grid, n)
    eps_list = _float_list("picard_eps_list_amplitude", cfg["picard_eps_list_amplitude"])
    runs, rows = [], []
    lam_next = basis.lambda_next
    J = basis.eigenvalues.size
    for eps in eps_list:
        res = picard_construct(_positive_data(basis, eps), op, basis, T=_picard_horizon(cfg, basis),
                               dt=cfg["picard_dt_simtime"], tol=cfg["picard_tol_rel"])
        rep = res.report
        sel = res.tau <= cfg["picard_check_window_simtime"] + 1e-12
        tr = evolve_rescaled(res.initial_profile(grid, n), op, float(res.tau[sel][-1]),
                             samples=res.tau[sel], rtol=cfg["flow_tol_rel"])
        d = tr.profiles - res.profiles[sel]
        norms = np.sqrt(np.einsum("mk,k,mk->m", res.profiles, w, res.profiles))
        mismatch = float(np.sqrt(np.max(np.einsum("mk,k,mk->m", d, w, d))) / norms.max())
        runs.append({"eps": eps, "iterations": rep.iterations, "converged": rep.converged,
                     "contraction_factors": rep.contraction_factors,
                     "contraction_factor": max(rep.contraction_factors) if rep.contraction_factors else 0.0,
                     "correction_norm": rep.correction_norm, "projection_residual": rep.projection_residual,
                     "reevolution_mismatch": mismatch})
        coeffs = res.modes.coeffs
        ratio = norms * np.exp(lam_next * res.tau) / norms[0]
        for k in range(res.tau.size):
            rows.append([res.tau[k], norms[k], *coeffs[k, :J], ratio[k], eps])
    if len(eps_list) >= 2:
        slope = float(np.polyfit(np.log(eps_list), np.log([r["correction_norm"] for r in runs]), 1)[0])
    else:
        slope = float("nan")
    suites = {
        "contraction": all(r["converged"] and r["contraction_factor"] < 1 for r in runs),
        "projection": all(r["projection_residual"] < 1e-10 for r in runs),
        "reevolution": all(r["reevolution_mismatch"] < 1e-5 for r in runs),
    }
    if len(eps_list) >= 2:
        suites["quadratic_correction"] = abs(slope - 2.0) <= 0.1
    summary = {"n": n, "I": basis.split_index, "lambda_next": lam_next, "runs": runs,
               "correction_slope": slope,
               "contraction_factor": max(r["contraction_factor"] for r in runs),
               "check_window_simtime": cfg["picard_check_window_simtime"],
               "horizon_simtime": _picard_horizon(cfg, basis)}
    header = ["tau", "norm_rho"] + [f"mode_{j}" for j in range(1, J + 1)] + ["ratio", "eps"]
    return CommandResult(header, rows, summary, suites)


# --------------------------------------------------------------- blowup


def cmd_flow_blowup(cfg: RunConfig) -> CommandResult:
    from .equivariant import RadialProfile, radial_weight, w_profile
    from .flow import evolve_unrescaled, picard_construct, unrescaled_to_rescaled

    data = cfg["flow_data"] if cfg["flow_data"] != "auto" else "soliton"
    grid = _grid(cfg)
    n = cfg["n"]
    p = _params(cfg)
    op, basis = _operator_and_basis(cfg, grid)
    eps = cfg["flow_eps_amplitude"]
    h0 = w_profile(grid, p)
    if data in ("picard", "naive"):
        res = picard_construct(_positive_data(basis, eps), op, basis, T=_picard_horizon(cfg, basis),
                               dt=cfg["picard_dt_simtime"], tol=cfg["picard_tol_rel"])
        h0 = h0 + res.initial_profile(grid, n)
        if data == "naive":
            h0 = h0 + basis.mode(1) * eps
    tr = evolve_unrescaled(h0, params=p, stop_gap=cfg["flow_t_stop_gap_phystime"],
                           curvature_cap=cfg["flow_curvature_cap_per_length2"], rtol=cfg["flow_tol_rel"],
                           samples=cfg["flow_samples_count"])
    w = radial_weight(grid, n)
    rows = []
    J = basis.eigenvalues.size
    for k in range(tr.tau.size):
        tau, y, v = unrescaled_to_rescaled(tr, k, grid, p)
        full = np.zeros(grid.K)
        full[: v.size] = v
        norm = float(np.sqrt(np.sum(w * full**2)))
        c = basis.coefficients(RadialProfile(grid, full, n).values)
        rows.append([tau, norm, *c, tr.ratio[k], tr.time[k], tr.curvature_sup[k]])
    gap = 1.0 - tr.time
    window = gap >= 1e-4
    r = tr.ratio[window]
    spread = float((r.max() - r.min()) / r[0])
    summary = {"n": n, "data": data, "eps": eps if data != "soliton" else 0.0,
               "t_final": tr.info["t_final"], "gap_final": tr.info["gap_final"],
               "sup_curvature_final": tr.info["sup_final"], "stopped_by": tr.info["stopped_by"],
               "ratio_initial": tr.ratio[0], "ratio_min": tr.ratio.min(), "ratio_max": tr.ratio.max(),
               "ratio_spread_to_gap_1e-4": spread, "type_I_bounds": [tr.ratio.min(), tr.ratio.max()]}
    suites = {"integration_completed": tr.info["stopped_by"] in ("gap", "curvature")}
    diagnostics = {}
    if data in ("soliton", "picard"):
        suites["blowup_at_t_1"] = tr.info["stopped_by"] == "gap" and tr.info["gap_final"] <= 2 * cfg["flow_t_stop_gap_phystime"]
        suites["ratio_constant_1pct"] = spread <= 0.01
        suites["curvature_exceeds_1e6"] = tr.info["sup_final"] > 1e6
    else:
        diagnostics["blowup_before_t_1"] = tr.info["t_final"] < 1.0 - 1e-3
        diagnostics["ratio_constant_1pct"] = spread <= 0.01
    header = (["tau", "norm_rho"] + [f"mode_{j}" for j in range(1, J + 1)]
              + ["ratio", "t", "sup_curvature"])
    return CommandResult(header, rows, summary, suites, diagnostics)


# ---------------------------------------------------------- certificate


def cmd_certify(cfg: RunConfig) -> CommandResult:
    from .analysis import certify_nonequivariant
    from .soliton import curvature_F23_at

    n = cfg["n"]
    p = _params(cfg)
    Rs = _float_list("cert_R_list_y", cfg["cert_R_list_y"])
    rows, certs = [], {}
    for reading in ("point", "shell"):
        for R in Rs:
            c = certify_nonequivariant(R, n, reading, cfg["cert_fd_step_y"])
            certs[(reading, R)] = c
            rows.append([R, c.minus_side, c.plus_side, c.margin, reading, c.exact_minus])
    exact_err = max(abs(certs[("point", R)].minus_side - curvature_F23_at(R, p)) for R in Rs)
    exact_spot = {R: curvature_F23_at(R, p) for R in (5.0, 10.0, 50.0)}
    point = [certs[("point", R)] for R in Rs]
    margins = np.array([c.margin for c in point])
    worst = int(np.argmin(margins))
    suites = {"exact_formula": exact_err < 1e-10, "point_margin_positive": bool(np.all(margins > 0))}
    slope = float("nan")
    if len(Rs) >= 2 and np.all(margins > 0):
        slope = float(np.polyfit(np.log(Rs), np.log(margins), 1)[0])
        suites["margin_R_minus_2"] = abs(slope + 2.0) <= 0.1
    shell = np.array([certs[("shell", R)].margin for R in Rs])
    summary = {"n": n, "samples": len(Rs), "min_margin": float(margins[worst]),
               "worst_point": {"R": Rs[worst], "x": [-Rs[worst]] + [0.0] * (n - 1)},
               "margin_loglog_slope": slope, "scaled_margins": [c.scaled_margin for c in point],
               "exact_formula_error": exact_err, "exact_F23": exact_spot,
               "shell_reading": {"min_margin": float(shell.min()), "passes": bool(np.all(shell > 0))}}
    diagnostics = {"shell_reading_passes": bool(np.all(shell > 0))}
    return CommandResult(["R", "lhs", "rhs", "margin", "reading", "exact_lhs"], rows, summary,
                         suites, diagnostics)


# -------------------------------------------------------------- Kato fuzz


def cmd_kato_fuzz(cfg: RunConfig) -> CommandResult:
    from . import operators as O
    from . import soliton as S
    from .analysis import check_ecker, check_kato, kato_tolerance, matrix_inequality_fuzz
    from .liealg import random_so

    n = cfg["n"]
    p = _params(cfg)
    rng = np.random.default_rng(cfg["seed"])
    mi, pair = matrix_inequality_fuzz(n, cfg["fuzz_pairs_count"], rng)
    h = cfg["kato_step_y"]
    count = cfg["kato_points_count"]
    worst_k, worst_pt, used = np.inf, None, 0
    for i in range(count):
        field_ = (lambda z: S.W_jet(z, p)) if i % 2 == 0 else O.random_analytic_field(n, rng)
        y = rng.normal(size=n) * 2.0
        s = check_kato(field_, y, h)
        if s is None:
            continue
        used += 1
        marg = s.gap + kato_tolerance(h, max(1.0, abs(s.lhs), abs(s.rhs)))
        if s.gap < worst_k:
            worst_k, worst_pt = s.gap, {"y": y, "field": "W" if i % 2 == 0 else "random", "margin_with_tol": marg}
    M = random_so(n, rng)
    rank1_gaps = []
    for _ in range(8):
        y = rng.normal(size=n)
        s = check_kato(_rank_one_field(M, n), y, h)
        if s is not None:
            rank1_gaps.append(abs(s.gap) / max(1.0, abs(s.lhs)))
    rank1 = max(rank1_gaps) if rank1_gaps else float("nan")
    eck = check_ecker(lambda r: np.exp(-r * r / 8), lambda r: -r / 4 * np.exp(-r * r / 8), n)
    eck2 = check_ecker(lambda r: 1.0 / (1.0 + r * r), lambda r: -2 * r / (1.0 + r * r) ** 2, n)
    kato_tol = kato_tolerance(h)
    suites = {"matrix_inequality": mi >= -1e-12,
              "kato": used >= min(count, 1000) * 0.9 and worst_k >= -kato_tol,
              "kato_rank_one_equality": rank1 <= kato_tol,
              "ecker": eck.holds and eck2.holds}
    rows = [["matrix_inequality", str(n), cfg["fuzz_pairs_count"], mi, -1e-12, "1" if suites["matrix_inequality"] else "0"],
            ["kato", str(n), used, worst_k, -kato_tol, "1" if suites["kato"] else "0"],
            ["kato_rank_one", str(n), len(rank1_gaps), -rank1, -kato_tol, "1" if suites["kato_rank_one_equality"] else "0"],
            ["ecker", str(n), 2, min(eck.rhs - eck.lhs, eck2.rhs - eck2.lhs), 0.0, "1" if suites["ecker"] else "0"]]
    summary = {"n": n, "samples": {"matrix_inequality": cfg["fuzz_pairs_count"], "kato": used},
               "min_margin": {"matrix_inequality": mi, "kato": worst_k},
               "worst_point": {"matrix_inequality": {"A": pair[0], "B": pair[1]} if pair is not None else None,
                               "kato": worst_pt},
               "kato_rank_one_max_rel_gap": rank1, "kato_tolerance": kato_tol,
               "ecker": [{"lhs": eck.lhs, "rhs": eck.rhs}, {"lhs": eck2.lhs, "rhs": eck2.rhs}]}
    return CommandResult(["suite", "n", "samples", "min_margin", "tolerance", "passed"], rows, summary, suites)


def _rank_one_field(M: np.ndarray, n: int) -> Callable:
    """u_j(y) = e^{-|y|^2/4} M for every j: a single-matrix field."""
    from .jets import OneFormJet, scalar_times_jet

    const = OneFormJet(np.stack([M] * n), np.zeros((n, n, n, n)), np.zeros((n, n, n, n, n)))

    def field_(z):
        f0 = np.exp(-(z @ z) / 4)
        return scalar_times_jet(f0, -z / 2 * f0, (-np.eye(n) / 2 + np.outer(z, z) / 4) * f0, const)

    return field_


COMMANDS: Dict[str, Callable[[RunConfig], CommandResult]] = {
    "verify-identities": cmd_verify_identities,
    "spectrum": cmd_spectrum,
    "flow-rescaled": cmd_flow_rescaled,
    "flow-blowup": cmd_flow_blowup,
    "picard": cmd_picard,
    "certify-nonequivariant": cmd_certify,
    "kato-fuzz": cmd_kato_fuzz,
}

_HELP = {
    "verify-identities": "pointwise residuals of the closed-form identities",
    "spectrum": "eigenvalues and modes of the reduced equivariant operator",
    "flow-rescaled": "perturbed run in similarity variables with a decay-rate fit",
    "flow-blowup": "physical-time run towards the singular time",
    "picard": "fixed point on the stable manifold for several amplitudes",
    "certify-nonequivariant": "antipodal curvature gap showing a non-equivariant datum",
    "kato-fuzz": "inequality suites on random samples",
}


# ---------------------------------------------------------------- driver


def _apply_threads() -> None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    from threadpoolctl import threadpool_limits

    threadpool_limits(k)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ymlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", type=Path, help="flat key = value file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--n", type=int, help="dimension, 5..9")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
        if name == "verify-identities":
            sp.add_argument("--corrupt-constant", action="store_true",
                            help="shift the soliton constant a by 1e-3 (negative control)")
        if name in _FLOW_DATA:
            sp.add_argument("--data", choices=_FLOW_DATA[name])
            sp.add_argument("--eps", type=float)
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--out", type=Path)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v)
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.n is not None:
        cfg.set("n", args.n)
    if args.out is not None:
        cfg.set("out_dir", str(args.out))
    if getattr(args, "corrupt_constant", False):
        cfg.set("inject_corrupt_constant_flag", 1)
    if getattr(args, "data", None):
        cfg.set("flow_data", args.data)
    if getattr(args, "eps", None) is not None:
        cfg.set("flow_eps_amplitude", args.eps)
    return cfg.validate(args.command)


def _config_from_manifest(path: Path, out: Optional[Path]):
    try:
        man = json.loads(path.read_text())
        command = man["command"]
        values = man["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if command not in COMMANDS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    cfg = RunConfig()
    for k, v in values.items():
        cfg.set(k, v)
    cfg.set("out_dir", str(out) if out is not None else str(path.parent))
    return command, cfg.validate(command)


_NUMERICAL_ERRORS = (ArithmeticError, np.linalg.LinAlgError, RuntimeError, ValueError)


def run(command: str, cfg: RunConfig) -> dict:
    """Execute one command and write its outputs; returns the manifest."""
    t0 = time.perf_counter()
    res = COMMANDS[command](cfg)
    return write_outputs(command, cfg, res, Path(cfg["out_dir"]), time.perf_counter() - t0)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        _apply_threads()
        if args.command == "replay":
            command, cfg = _config_from_manifest(args.manifest, args.out)
        else:
            command, cfg = args.command, resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        man = run(command, cfg)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure in {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    failed = [k for k, ok in man["suites"].items() if not ok]
    for k, ok in man["suites"].items():
        print(f"{command}: {k}: {'PASS' if ok else 'FAIL'}")
    if failed:
        print(f"{command}: failing checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
