"""Command-line front end.

Every command reads a strict JSON config (unknown keys are rejected) and
writes its CSV files, a gnuplot script per CSV and ``manifest.json`` into the
output directory.  Exit codes: 0 success, 1 usage or config error, 2 the
parameters fall outside the proved stability regimes.
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import operator
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__, functionals, simulate, spectral, sweep
from .discretization import GeneratorPair, Mesh, assemble, initial_state, unpack
from .params import (
    InfeasibleParameters,
    SystemParams,
    XiPolicy,
    classify_case,
    domain_constants,
    exploratory_xi,
    poincare_constant,
    resolve_xi,
    trace_constant,
)

log = logging.getLogger("kvdelay")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2

DEFAULT_OUT = "kvdelay-out"
DEFAULT_SNAPSHOTS = 50


class ConfigError(Exception):
    """Malformed or inconsistent configuration; maps to exit code 1."""


class UsageError(Exception):
    pass


# -- safe expression evaluation ---------------------------------------------

_FUNCS: dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "arctan": np.arctan, "minimum": np.minimum, "maximum": np.maximum,
}
_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class Expression:
    """Arithmetic expression in named variables, evaluated with numpy.

    Only numbers, the listed variables, + - * / ** and a small set of
    elementwise functions are accepted.
    """

    def __init__(self, source: str, variables: Sequence[str], where: str):
        self.source = source
        self.where = where
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"{where}: cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"{self.where}: only numeric constants are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables:
                raise ConfigError(
                    f"{self.where}: unknown name {node.id!r}; allowed: {', '.join(self.variables)}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"{self.where}: operator not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                raise ConfigError(f"{self.where}: operator not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"{self.where}: allowed functions are {', '.join(sorted(_FUNCS))}")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"{self.where}: unsupported syntax {type(node).__name__}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        return _FUNCS[node.func.id](*[self._eval(a, env) for a in node.args])

    def __call__(self, shape_like: np.ndarray, **env) -> np.ndarray:
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        out = np.broadcast_to(np.asarray(out, dtype=float), np.shape(shape_like)).copy()
        if not np.all(np.isfinite(out)):
            raise ConfigError(f"{self.where}: expression {self.source!r} is not finite on the mesh")
        return out


# -- config -----------------------------------------------------------------

_SCHEMA: dict[str, Any] = {
    "params": {"alpha", "mu1", "mu2", "tau", "length", "xi"},
    "mesh": {"n_cells", "n_rho", "lumped"},
    "time": {"dt", "t_end", "theta", "snapshot_every"},
    "initial": {"u0", "u1", "f0"},
    "sweep": {"axes", "per_point", "fixed"},
    "xi_policy": None,
    "exploratory": None,
    "epsilon": None,
    "fit_window": None,
    "spectrum_cap": None,
    "outputs": None,
    "seed": None,
}
_AXIS_KEYS = {"name", "min", "max", "count", "scale"}

DEFAULT_INITIAL = {"u0": "sin(pi*x/(2*L))", "u1": "0", "f0": "0"}


def _number(value, where: str, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {json.dumps(value)}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


@dataclass
class RunConfig:
    raw: dict
    path: Optional[str] = None
    seed: int = 0
    outputs: Optional[str] = None
    xi_policy: XiPolicy = XiPolicy.MIDPOINT
    exploratory: bool = False
    epsilon: Optional[float] = None
    fit_window: Optional[tuple[float, float]] = None
    spectrum_cap: int = spectral.DENSE_CAP
    params_raw: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, path: Optional[str] = None) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path or 'config'}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(raw, path)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, path)

    @classmethod
    def from_dict(cls, raw: Any, path: Optional[str] = None) -> "RunConfig":
        _keys(raw, set(_SCHEMA), "config")
        for name, allowed in _SCHEMA.items():
            if allowed is not None and name in raw:
                _keys(raw[name], allowed, name)
        cfg = cls(raw=raw, path=path)
        params = raw.get("params", {})
        for k, v in params.items():
            if v is not None or k != "xi":
                _number(v, f"params.{k}")
        cfg.params_raw = {k: v for k, v in params.items() if v is not None}
        if "seed" in raw:
            cfg.seed = _number(raw["seed"], "seed", integer=True)
        if "outputs" in raw:
            if not isinstance(raw["outputs"], str):
                raise ConfigError("outputs: expected a directory path string")
            cfg.outputs = raw["outputs"]
        if "xi_policy" in raw:
            try:
                cfg.xi_policy = XiPolicy(raw["xi_policy"])
            except ValueError:
                raise ConfigError(
                    f"xi_policy: expected one of {', '.join(p.value for p in XiPolicy)}") from None
        if "exploratory" in raw:
            if not isinstance(raw["exploratory"], bool):
                raise ConfigError("exploratory: expected true or false")
            cfg.exploratory = raw["exploratory"]
        if raw.get("epsilon") is not None:
            cfg.epsilon = _number(raw["epsilon"], "epsilon")
            if not cfg.epsilon > 0:
                raise ConfigError("epsilon: must be positive")
        if raw.get("fit_window") is not None:
            fw = raw["fit_window"]
            if not isinstance(fw, list) or len(fw) != 2:
                raise ConfigError("fit_window: expected [t_start, t_end]")
            a, b = (_number(v, "fit_window") for v in fw)
            if not 0 <= a < b:
                raise ConfigError("fit_window: need 0 <= t_start < t_end")
            cfg.fit_window = (a, b)
        if "spectrum_cap" in raw:
            cfg.spectrum_cap = _number(raw["spectrum_cap"], "spectrum_cap", integer=True)
            if cfg.spectrum_cap < 1:
                raise ConfigError("spectrum_cap: must be >= 1")
        return cfg

    # builders; each raises ConfigError naming the offending section

    def system_params(self) -> SystemParams:
        p = dict(self.params_raw)
        missing = sorted({"alpha", "mu1", "mu2", "tau"} - set(p))
        if missing:
            raise ConfigError(f"params: missing {', '.join(missing)}")
        try:
            return SystemParams(**p)
        except ValueError as exc:
            raise ConfigError(f"params: {exc}") from None

    def length(self) -> float:
        L = self.params_raw.get("length", 1.0)
        if not L > 0:
            raise ConfigError("params.length: must be positive")
        return float(L)

    def mesh(self) -> Mesh:
        m = self.raw.get("mesh")
        if m is None:
            raise ConfigError("mesh: section is required")
        for k in ("n_cells", "n_rho"):
            if k not in m:
                raise ConfigError(f"mesh.{k}: required")
        lumped = m.get("lumped", False)
        if not isinstance(lumped, bool):
            raise ConfigError("mesh.lumped: expected true or false")
        try:
            return Mesh(_number(m["n_cells"], "mesh.n_cells", True), _number(m["n_rho"], "mesh.n_rho", True),
                        self.length(), lumped)
        except ValueError as exc:
            raise ConfigError(f"mesh: {exc}") from None

    def time_grid(self, tau: float, n_rho: int) -> simulate.TimeGrid:
        t = self.raw.get("time")
        if t is None or "t_end" not in t:
            raise ConfigError("time.t_end: required")
        theta = _number(t.get("theta", 0.5), "time.theta")
        t_end = _number(t["t_end"], "time.t_end")
        try:
            if "dt" in t:
                return simulate.TimeGrid(_number(t["dt"], "time.dt"), t_end, theta)
            return simulate.TimeGrid.default_for(tau, n_rho, t_end, theta)
        except ValueError as exc:
            raise ConfigError(f"time: {exc}") from None

    def snapshot_every(self, n_steps: int) -> int:
        t = self.raw.get("time", {})
        if "snapshot_every" in t:
            k = _number(t["snapshot_every"], "time.snapshot_every", integer=True)
            if k < 1:
                raise ConfigError("time.snapshot_every: must be >= 1")
            return k
        return max(1, n_steps // DEFAULT_SNAPSHOTS)

    def initial_expressions(self) -> dict[str, Expression]:
        init = {**DEFAULT_INITIAL, **self.raw.get("initial", {})}
        out = {}
        for k, names in (("u0", ("x", "L", "tau", "pi")), ("u1", ("x", "L", "tau", "pi")),
                         ("f0", ("x", "s", "L", "tau", "pi"))):
            src = init[k]
            if isinstance(src, (int, float)) and not isinstance(src, bool):
                src = repr(float(src))
            if not isinstance(src, str):
                raise ConfigError(f"initial.{k}: expected an expression string or a number")
            out[k] = Expression(src, names, f"initial.{k}")
        return out

    def sweep_plan(self, mesh: Mesh) -> sweep.SweepPlan:
        s = self.raw.get("sweep")
        if s is None:
            raise ConfigError("sweep: section is required for the sweep command")
        axes_raw = s.get("axes", [])
        if not isinstance(axes_raw, list):
            raise ConfigError("sweep.axes: expected a list")
        axes = []
        for i, a in enumerate(axes_raw):
            where = f"sweep.axes[{i}]"
            _keys(a, _AXIS_KEYS, where)
            for k in ("name", "min", "max", "count"):
                if k not in a:
                    raise ConfigError(f"{where}.{k}: required")
            try:
                axes.append(sweep.Axis(a["name"], _number(a["min"], f"{where}.min"),
                                       _number(a["max"], f"{where}.max"),
                                       _number(a["count"], f"{where}.count", True), a.get("scale", "linear")))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        fixed = dict(s.get("fixed", {}))
        for k, v in fixed.items():
            _number(v, f"sweep.fixed.{k}")
        for k, v in self.params_raw.items():
            if k != "xi":
                fixed.setdefault(k, v)
        names = {a.name for a in axes}
        fixed = {k: v for k, v in fixed.items() if k not in names}
        fixed.setdefault("length", mesh.length)
        t = self.raw.get("time", {})
        try:
            return sweep.SweepPlan(
                axes=tuple(axes), fixed=fixed, mesh=mesh, per_point=s.get("per_point", "spectrum"),
                t_end=_number(t.get("t_end", 20.0), "time.t_end"),
                dt=_number(t["dt"], "time.dt") if "dt" in t else None,
                theta=_number(t.get("theta", 0.5), "time.theta"),
                xi_policy=self.xi_policy, spectrum_cap=self.spectrum_cap,
            )
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from None


# -- output helpers ----------------------------------------------------------


def _f(x) -> str:
    return repr(float(x))


class Output:
    """Output directory with a record of the files written."""

    def __init__(self, directory: str):
        self.dir = Path(directory)
        self.files: list[str] = []
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {directory}: {exc.strerror}") from None
        if not os.access(self.dir, os.W_OK):
            raise UsageError(f"output directory {directory} is not writable")

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc.strerror}") from None
        if name not in self.files:
            self.files.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def manifest(self, command: str, cfg: Optional[RunConfig], seed: int, resolved: dict) -> None:
        self.write_json("manifest.json", {
            "tool": "kvdelay",
            "version": __version__,
            "command": command,
            "seed": seed,
            "config_path": cfg.path if cfg else None,
            "config": cfg.raw if cfg else None,
            "resolved": resolved,
            "files": sorted(self.files) + ["manifest.json"],
        })


def _csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def _gp_header(title: str, csv_name: str, png: str) -> str:
    return (
        f"# gnuplot script for {csv_name}\n"
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set terminal pngcairo size 900,600\n"
        f"set output '{png}'\n"
        f"set title '{title}'\n"
    )


ENERGY_GP = (
    "set xlabel 't'\n"
    "set ylabel 'energy'\n"
    "set logscale y\n"
    "plot 'energy.csv' using 1:2 with lines title 'E', \\\n"
    "     '' using 1:4 with lines title 'L'\n"
)

STATES_GP = (
    "set xlabel 'node index'\n"
    "set ylabel 'u'\n"
    "plot 'states.csv' using 3:(strcol(2) eq 'u' ? $4 : NaN) with points pt 7 ps 0.3 title 'u snapshots'\n"
)

EIG_GP = (
    "set xlabel 'Re'\n"
    "set ylabel 'Im'\n"
    "set xzeroaxis\n"
    "set yzeroaxis\n"
    "plot 'eigenvalues.csv' using 1:2 with points pt 7 ps 0.5 title 'eigenvalues'\n"
)

CONSTANTS_GP = (
    "set xlabel 'n_cells'\n"
    "set logscale xy\n"
    "plot 'constants.csv' using 1:4 with linespoints title 'B error', \\\n"
    "     '' using 1:5 with linespoints title 'C error'\n"
)


def _sweep_gp(axes: Sequence[sweep.Axis]) -> str:
    if len(axes) >= 2:
        a, b = axes[0].name, axes[1].name
        return (
            f"set xlabel '{a}'\n"
            f"set ylabel '{b}'\n"
            "set palette defined (-1 'blue', 0 'white', 1 'red')\n"
            "set cblabel 'abscissa'\n"
            f"plot 'sweep.csv' using '{a}':'{b}':'abscissa' with points pt 5 ps 1.5 palette title 'abscissa'\n"
        )
    a = axes[0].name if axes else "alpha"
    return (
        f"set xlabel '{a}'\n"
        "set ylabel 'abscissa'\n"
        f"plot 'sweep.csv' using '{a}':'abscissa' with linespoints title 'abscissa'\n"
    )


# -- shared steps ------------------------------------------------------------


def _resolve(cfg: RunConfig, params: SystemParams, n_cells: int):
    """(params with xi, verdict, constants); raises InfeasibleParameters."""
    consts = domain_constants(params.length, n_cells)
    try:
        p, verdict = resolve_xi(params, consts, cfg.xi_policy)
    except InfeasibleParameters:
        if not cfg.exploratory:
            raise
        verdict = classify_case(params, consts)
        xi = params.xi if params.xi is not None else exploratory_xi(params)
        log.warning("parameters are %s; continuing in exploratory mode with xi=%g",
                    verdict.case_tag.value, xi)
        p = params.with_xi(xi)
    return p, verdict, consts


def _verdict_dict(verdict, consts) -> dict:
    return {
        "case": verdict.case_tag.value,
        "xi_low": verdict.xi_low,
        "xi_high": verdict.xi_high,
        "xi_high_strict": verdict.xi_high_strict,
        "chosen_xi": verdict.chosen_xi,
        "B": consts.trace_B,
        "C": consts.poincare_C,
    }


# -- commands ----------------------------------------------------------------


def cmd_check(cfg: RunConfig, out: Optional[Output], seed: int) -> int:
    params = cfg.system_params()
    mesh_raw = cfg.raw.get("mesh")
    n_cells = cfg.mesh().n_cells if mesh_raw else 200
    consts = domain_constants(params.length, n_cells)
    verdict = classify_case(params, consts)
    code = EXIT_OK
    try:
        _, verdict = resolve_xi(params, consts, cfg.xi_policy)
    except InfeasibleParameters as exc:
        code = EXIT_INFEASIBLE
        reason = str(exc)
    bracket = ")" if verdict.xi_high_strict else "]"
    print(f"case:      {verdict.case_tag.value}")
    print(f"xi range:  [{verdict.xi_low:.6g}, {verdict.xi_high:.6g}{bracket}")
    print(f"chosen xi: {'-' if verdict.chosen_xi is None else format(verdict.chosen_xi, '.6g')}")
    print(f"B:         {consts.trace_B:.6f}")
    print(f"C(Omega):  {consts.poincare_C:.6f}")
    if code != EXIT_OK:
        print(f"verdict:   infeasible ({reason})")
    report = _verdict_dict(verdict, consts)
    report["feasible"] = code == EXIT_OK
    report["n_cells"] = n_cells
    if code == EXIT_OK and mesh_raw:
        pair = assemble(params.with_xi(verdict.chosen_xi), cfg.mesh())
        cert = spectral.dissipativity_certificate(pair, n_samples=100, seed=seed)
        report["dissipativity_sampled_max"] = cert.sampled_max
        report["dissipativity_exact_max"] = cert.exact_max
        print(f"max <AV,V>_G / |V|^2: {cert.exact_max:.3e}")
    print(json.dumps(report, sort_keys=True))
    if out is not None:
        out.write_json("check.json", report)
        out.manifest("check", cfg, seed, report)
    return code


def _zero_or_fit(traj, window):
    try:
        fit = functionals.fit_decay(traj.times, traj.energy, window)
        return {"gamma_hat": fit.gamma_hat, "C_hat": fit.C_hat, "r_squared": fit.r_squared,
                "window": list(fit.window)}
    except ValueError as exc:
        log.warning("decay fit skipped: %s", exc)
        return {"gamma_hat": None, "C_hat": None, "r_squared": None,
                "window": list(window) if window else None, "note": str(exc)}


def _choose_epsilon(cfg: RunConfig, pair: GeneratorPair, traj) -> tuple[float, Optional[float], Optional[float], str]:
    if cfg.epsilon is not None:
        return cfg.epsilon, None, None, "config"
    try:
        ch = functionals.epsilon_search(pair, pair.params, pair.mesh, traj)
        return ch.epsilon, ch.beta1, ch.beta2, "search"
    except functionals.NoAdmissibleEpsilon as exc:
        eps = min(functionals.EPSILON_GRID)
        log.warning("%s; writing L with epsilon=%g", exc, eps)
        return eps, None, None, "fallback"


def cmd_simulate(cfg: RunConfig, out: Output, seed: int) -> int:
    base = cfg.system_params()
    mesh = cfg.mesh()
    params, verdict, consts = _resolve(cfg, base, mesh.n_cells)
    grid = cfg.time_grid(params.tau, mesh.n_rho)
    ex = cfg.initial_expressions()
    L, tau = mesh.length, params.tau
    try:
        s0 = initial_state(
            lambda x: ex["u0"](x, x=x, L=L, tau=tau, pi=math.pi),
            lambda x: ex["u1"](x, x=x, L=L, tau=tau, pi=math.pi),
            lambda x, s: ex["f0"](s, x=x, s=s, L=L, tau=tau, pi=math.pi),
            mesh, tau,
        )
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None
    pair = assemble(params, mesh)
    traj = simulate.integrate(s0, pair, grid, stride=cfg.snapshot_every(grid.n_steps))
    eps, beta1, beta2, eps_source = _choose_epsilon(cfg, pair, traj)
    lyap = traj.lyapunov(eps)
    res = np.full_like(traj.energy, np.nan)
    if traj.times.shape[0] >= 3:
        res[1:-1] = traj.residuals()
    rows = ((_f(t), _f(e), _f(e1), _f(l), _f(r))
            for t, e, e1, l, r in zip(traj.times, traj.energy, traj.energy1, lyap, res))
    out.write("energy.csv", _csv(("t", "E", "E1", "L", "dE_residual"), rows))
    out.write("energy.gp", _gp_header("energy", "energy.csv", "energy.png") + ENERGY_GP)

    def state_rows():
        for step, vec in zip(traj.snapshot_steps, traj.snapshots):
            t = _f(traj.times[step])
            st = unpack(vec, mesh)
            for name, arr in (("u", st.u), ("v", st.v), ("z", st.z[1:])):
                for i, val in enumerate(arr, start=1):
                    yield (t, name, str(i), _f(val))

    out.write("states.csv", _csv(("t", "field", "index", "value"), state_rows()))
    out.write("states.gp", _gp_header("displacement snapshots", "states.csv", "states.png") + STATES_GP)

    window = cfg.fit_window or (grid.t_end / 10.0, grid.t_end)
    fit = _zero_or_fit(traj, window)
    fit.update({"epsilon": eps, "epsilon_source": eps_source, "beta1": beta1, "beta2": beta2})
    out.write_json("fit.json", fit)
    print(json.dumps({"fit": fit}, sort_keys=True))
    resolved = _verdict_dict(verdict, consts)
    resolved.update({"xi": params.xi, "epsilon": eps, "backend": traj.backend,
                     "dt": grid.dt, "n_steps": grid.n_steps, "theta": grid.theta})
    out.manifest("simulate", cfg, seed, resolved)
    return EXIT_OK


def _load_matrix(path: str) -> np.ndarray:
    try:
        A = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--debug-matrix {path}: {exc}") from None
    if A.shape[0] != A.shape[1]:
        raise ConfigError(f"--debug-matrix {path}: matrix is {A.shape[0]}x{A.shape[1]}, not square")
    return A


def cmd_spectrum(cfg: Optional[RunConfig], out: Output, seed: int, debug_matrix: Optional[str] = None) -> int:
    resolved: dict = {}
    cap = cfg.spectrum_cap if cfg else spectral.DENSE_CAP
    if debug_matrix:
        pair = GeneratorPair.from_matrix(_load_matrix(debug_matrix))
        resolved["debug_matrix"] = debug_matrix
    else:
        base = cfg.system_params()
        mesh = cfg.mesh()
        params, verdict, consts = _resolve(cfg, base, mesh.n_cells)
        pair = assemble(params, mesh)
        resolved = _verdict_dict(verdict, consts)
        resolved["xi"] = params.xi
    try:
        rep = spectral.spectrum(pair, cap)
    except spectral.DimensionTooLarge as exc:
        raise ConfigError(str(exc)) from None
    rows = ((_f(z.real), _f(z.imag)) for z in rep.eigenvalues)
    out.write("eigenvalues.csv", _csv(("re", "im"), rows))
    out.write("eigenvalues.gp", _gp_header("generator spectrum", "eigenvalues.csv", "eigenvalues.png") + EIG_GP)
    print(f"abscissa {_f(rep.abscissa)}")
    resolved.update({"abscissa": rep.abscissa, "n_unstable": rep.n_unstable, "dimension": pair.size})
    out.manifest("spectrum", cfg, seed, resolved)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Output, seed: int, threads: int) -> int:
    mesh = cfg.mesh()
    plan = cfg.sweep_plan(mesh)
    records = sweep.run_sweep(plan, threads=threads)
    out.write("sweep.csv", sweep.records_to_csv(records))
    out.write("sweep.gp", _gp_header("spectral abscissa", "sweep.csv", "sweep.png") + _sweep_gp(plan.axes))
    bad = sweep.feasibility_violations(records)
    errors = [r for r in records if r.error]
    mono = sweep.monotonicity_violations(records, "alpha") if any(a.name == "alpha" for a in plan.axes) else []
    resolved = {
        "points": len(records),
        "feasible": sum(r.feasible for r in records),
        "point_errors": [{"index": r.index, "error": r.error} for r in errors],
        "abscissa_violations": len(bad),
        "alpha_monotonicity_breaks": len(mono),
    }
    if bad:
        dump = [{"index": r.index, "params": vars(r.params), "case": r.verdict.case_tag.value,
                 "abscissa": r.abscissa} for r in bad]
        out.write_json("violations.json", dump)
        for d in dump:
            print(f"feasible point with positive abscissa: {json.dumps(d, sort_keys=True)}", file=sys.stderr)
    print(f"{len(records)} points, {resolved['feasible']} feasible, "
          f"{len(errors)} errors, {len(bad)} abscissa violations")
    out.manifest("sweep", cfg, seed, resolved)
    return EXIT_INFEASIBLE if bad else EXIT_OK


def cmd_constants(cfg: RunConfig, out: Optional[Output], seed: int) -> int:
    L = cfg.length()
    n_max = cfg.mesh().n_cells if cfg.raw.get("mesh") else 200
    sizes = []
    n = n_max
    while n >= 4 and len(sizes) < 6:
        sizes.append(n)
        n //= 2
    sizes.reverse()
    B_exact, C_exact = math.sqrt(L), 2.0 * L / math.pi
    print(f"{'n_cells':>8} {'B':>12} {'C':>12} {'|B-sqrt(L)|':>14} {'|C-2L/pi|':>14}")
    rows = []
    for n in sizes:
        B, C = trace_constant(L, n), poincare_constant(L, n)
        rows.append((n, B, C, abs(B - B_exact), abs(C - C_exact)))
        print(f"{n:>8d} {B:>12.8f} {C:>12.8f} {abs(B - B_exact):>14.3e} {abs(C - C_exact):>14.3e}")
    print(f"B = {_f(rows[-1][1])}")
    print(f"C = {_f(rows[-1][2])}")
    if out is not None:
        out.write("constants.csv", _csv(("n_cells", "B", "C", "B_error", "C_error"),
                                        ((str(r[0]),) + tuple(_f(v) for v in r[1:]) for r in rows)))
        out.write("constants.gp", _gp_header("domain constants", "constants.csv", "constants.png") + CONSTANTS_GP)
        out.manifest("constants", cfg, seed, {"length": L, "B": rows[-1][1], "C": rows[-1][2]})
    return EXIT_OK


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides 'outputs')")
    common.add_argument("--seed", type=int, help="seed recorded in the manifest (overrides 'seed')")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kvdelay", description="Damped wave equation with boundary delay: "
                     "stability checks, simulation, spectra and sweeps.")
    parser.add_argument("--version", action="version", version=f"kvdelay {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    sub.add_parser("check", parents=[common], help="classify parameters and print the xi interval")
    sub.add_parser("simulate", parents=[common], help="run the time integration")
    sp = sub.add_parser("spectrum", parents=[common], help="eigenvalues of the discrete generator")
    sp.add_argument("--debug-matrix", metavar="CSV",
                    help="analyze a square matrix from CSV instead of the assembled generator")
    sub.add_parser("sweep", parents=[common], help="abscissa/decay map over a parameter grid")
    sub.add_parser("constants", parents=[common], help="trace and Poincare constants with refinement table")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        debug_matrix = getattr(args, "debug_matrix", None)
        if args.config is None and not debug_matrix:
            raise UsageError("--config is required")
        cfg = RunConfig.from_file(args.config) if args.config else None
        seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
        out_dir = args.out or (cfg.outputs if cfg else None)
        if args.command in ("check", "constants"):
            out = Output(out_dir) if out_dir else None
            fn = cmd_check if args.command == "check" else cmd_constants
            return fn(cfg, out, seed)
        out = Output(out_dir or DEFAULT_OUT)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, seed)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, out, seed, debug_matrix)
        return cmd_sweep(cfg, out, seed, args.threads)
    except (ConfigError, UsageError) as exc:
        print(f"kvdelay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleParameters as exc:
        print(f"kvdelay: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
