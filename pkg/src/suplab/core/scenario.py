"""Scenario files and their spot-check validation.

A scenario is line-oriented plain text, one ``section.key = value`` per
line; ``#`` starts a comment. Every key has a typed default, so the
effective configuration is always complete and can be echoed back in
canonical form (``Scenario.dumps``) to reproduce a run exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ScenarioError, SuplabError
from .coefficients import PorousMedia, coefficient_model
from .functions import boundary_data, integrand, lyapunov_function
from .grid import SpatialGrid, make_grid
from .jump_kernel import jump_kernel
from .laws import GaussianLaw, UniformLaw
from .rng import RngStream

# kind, default
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "grid": {"x_min": ("float", -6.0), "x_max": ("float", 6.0), "n_cells": ("int", 1200)},
    "time": {"T": ("float", 0.5), "dt": ("float", 1e-4), "theta": ("float", 1.0),
             "save_every": ("int", 0)},
    "coeffs": {"model": ("str", "constant"), "a0": ("float", 1.0), "b0": ("float", 0.0),
               "theta": ("float", 1.0), "mean": ("float", 0.0), "beta": ("str", "cubic"),
               "D": ("str", "zero"), "b": ("str", "one"), "allow_degenerate": ("bool", False),
               "mismatch_b0": ("float", 1.0)},
    "init": {"law": ("str", "gaussian"), "mean": ("float", 0.0), "var": ("float", 0.25),
             "a": ("float", -1.0), "b": ("float", 1.0)},
    "sde": {"N": ("int", 100_000), "dt": ("float", 1e-3), "bandwidth": ("float", 0.0),
            "seed": ("int", 0), "replicate": ("int", 0)},
    "dirichlet": {"xl": ("float", -1.0), "xr": ("float", 1.0), "T": ("float", 1.0),
                  "F": ("str", "right_indicator"), "n_paths": ("int", 20_000),
                  "dt": ("float", 1e-3), "pde_dt": ("float", 1e-3),
                  "probe_s": ("floats", (0.0, 0.5)), "probe_x": ("floats", (-0.5, 0.0, 0.5)),
                  "bias": ("float", 0.01), "rep_F": ("str", "x2"), "rep_n": ("int", 20_000)},
    "lyapunov": {"V": ("str", "log1p_sq"), "delta": ("float", 2.0), "eps": ("float", 2.0),
                 "x0": ("float", 0.0), "T": ("float", 1.0), "n_paths": ("int", 20_000),
                 "dt": ("float", 1e-3), "seeds": ("int", 1),
                 "checkpoints": ("floats", (0.25, 0.5, 1.0))},
    "jumps": {"kernel": ("str", "none"), "c": ("float", 1.0), "c0": ("float", 0.5),
              "c1": ("float", 1.0), "q": ("str", "gaussian"), "qpar": ("floats", (0.0, 0.1)),
              "lam": ("float", 0.0), "n_paths": ("int", 20_000), "dt": ("float", 1e-3),
              "t": ("float", 1.0), "psi": ("strs", ("one", "increment", "sq_increment")),
              "alpha": ("float", 1.0), "f": ("str", "gauss_bump"), "x0": ("float", 0.0),
              "T_max": ("float", 10.0), "depth": ("int", 3), "res_paths": ("int", 5_000)},
    "capacity": {"G": ("intervals", ((0.9, 1.0),)), "alpha": ("float", 1.0),
                 "T_max": ("float", 10.0), "n_paths": ("int", 20_000), "dt": ("float", 1e-3)},
    "checks": {"times": ("floats", (0.25, 0.5)), "flow_s": ("float", 0.0),
               "flow_r": ("float", 0.25), "flow_t": ("float", 0.25),
               "domination_nu": ("str", "right_half"), "domination_c": ("float", 2.0),
               "energy_h": ("str", "one"), "energy_levels": ("int", 3)},
}

SECTION_ORDER = tuple(SCHEMA)


def _parse_value(kind, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "str":
            if not raw:
                raise ValueError("empty")
            return raw
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "strs":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if kind == "intervals":
            out = []
            for part in raw.split(","):
                lo, hi = part.split(":")
                out.append((float(lo), float(hi)))
            return tuple(out)
    except ValueError as exc:
        raise ScenarioError(key, f"cannot read {raw!r} as {kind}") from exc
    raise AssertionError(kind)


def _format_value(kind, v) -> str:
    if kind in ("float",):
        return repr(float(v))
    if kind == "bool":
        return "true" if v else "false"
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "strs":
        return ", ".join(v)
    if kind == "intervals":
        return ", ".join(f"{lo!r}:{hi!r}" for lo, hi in v)
    return str(v)


@dataclass
class Scenario:
    """Effective configuration: every schema key with its value."""

    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __post_init__(self):
        for sec, keys in SCHEMA.items():
            for k, (_, d) in keys.items():
                self.values.setdefault(f"{sec}.{k}", d)

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name) -> dict:
        return {k: self.values[f"{name}.{k}"] for k in SCHEMA[name]}

    @classmethod
    def loads(cls, text: str, source="<string>") -> Scenario:
        vals = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"line {lineno}", f"expected 'section.key = value': {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            sec, _, name = key.partition(".")
            if sec not in SCHEMA or name not in SCHEMA[sec]:
                raise ScenarioError(key, "unknown key")
            if key in vals:
                raise ScenarioError(key, "given twice")
            vals[key] = _parse_value(SCHEMA[sec][name][0], raw, key)
        return cls(vals, source)

    @classmethod
    def load(cls, path) -> Scenario:
        with open(path) as fh:
            return cls.loads(fh.read(), str(path))

    def dumps(self) -> str:
        lines = []
        for sec in SECTION_ORDER:
            for k, (kind, _) in SCHEMA[sec].items():
                lines.append(f"{sec}.{k} = {_format_value(kind, self.values[f'{sec}.{k}'])}")
            lines.append("")
        return "\n".join(lines)

    # ---- typed views ------------------------------------------------------

    @property
    def grid(self) -> SpatialGrid:
        g = self.section("grid")
        try:
            return make_grid(g["x_min"], g["x_max"], g["n_cells"])
        except SuplabError as exc:
            raise ScenarioError("grid.n_cells", str(exc)) from exc

    @property
    def T(self) -> float:
        return self["time.T"]

    @property
    def dt(self) -> float:
        return self["time.dt"]

    @property
    def is_porous(self) -> bool:
        return self["coeffs.model"] == "porous"

    def coefficients(self, b0=None):
        c = self.section("coeffs")
        params = dict(a0=c["a0"], b0=c["b0"] if b0 is None else b0, theta=c["theta"],
                      mean=c["mean"], beta=c["beta"], D=c["D"], b=c["b"])
        try:
            return coefficient_model(c["model"], **params)
        except SuplabError as exc:
            raise ScenarioError("coeffs.model", str(exc)) from exc

    @property
    def init_law(self):
        i = self.section("init")
        try:
            if i["law"] == "gaussian":
                return GaussianLaw(i["mean"], i["var"])
            if i["law"] == "uniform":
                return UniformLaw(i["a"], i["b"])
        except ValueError as exc:
            raise ScenarioError("init.law", str(exc)) from exc
        raise ScenarioError("init.law", f"unknown law {i['law']!r}; known: gaussian, uniform")

    @property
    def rng(self) -> RngStream:
        return RngStream(self["sde.seed"], self["sde.replicate"])

    def jump_kernel(self):
        j = self.section("jumps")
        params = dict(c=j["c"], c0=j["c0"], c1=j["c1"], q=j["q"], qpar=tuple(j["qpar"]),
                      lam=j["lam"] or None)
        try:
            return jump_kernel(j["kernel"], **params)
        except SuplabError as exc:
            raise ScenarioError("jumps.kernel", str(exc)) from exc
        except ValueError as exc:
            raise ScenarioError("jumps.qpar", str(exc)) from exc


# --------------------------------------------------------------------------
# validation


@dataclass
class Condition:
    name: str
    passed: bool
    value: float  # the worst sampled value (or the constant reported)
    where: str
    key: str  # scenario key to blame on failure
    message: str = ""

    def line(self) -> str:
        v = "PASS" if self.passed else "FAIL"
        return f"validate {self.name} {v} value={self.value:.6g} at {self.where} {self.message}"


@dataclass
class ValidationReport:
    conditions: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def get(self, name) -> Condition | None:
        for c in self.conditions:
            if c.name == name:
                return c
        return None

    @property
    def failures(self) -> list:
        return [c for c in self.conditions if not c.passed]


N_TIME_SAMPLES = 11


def _catalog_conditions(sc: Scenario) -> list[Condition]:
    out = []
    checks = [
        ("coeffs.model", sc.coefficients),
        ("init.law", lambda: sc.init_law),
        ("jumps.kernel", sc.jump_kernel),
        ("dirichlet.F", lambda: boundary_data(sc["dirichlet.F"])),
        ("dirichlet.rep_F", lambda: boundary_data(sc["dirichlet.rep_F"])),
        ("lyapunov.V", lambda: lyapunov_function(sc["lyapunov.V"])),
        ("jumps.f", lambda: integrand(sc["jumps.f"])),
    ]
    for key, fn in checks:
        try:
            fn()
            out.append(Condition(f"catalog[{key}]", True, 0.0, key, key))
        except SuplabError as exc:
            out.append(Condition(f"catalog[{key}]", False, math.nan, key, key, str(exc)))
    from ..jumps import PSI_CATALOG
    from ..verify import H_CATALOG

    for key, ok in (("jumps.psi", all(p in PSI_CATALOG for p in sc["jumps.psi"])),
                    ("checks.energy_h", sc["checks.energy_h"] in H_CATALOG),
                    ("checks.domination_nu", sc["checks.domination_nu"] in DOMINATION_NU)):
        out.append(Condition(f"catalog[{key}]", ok, 0.0 if ok else math.nan, key, key,
                             "" if ok else "unknown catalog id"))
    return out


DOMINATION_NU = ("right_half", "narrow")


def _linear_conditions(sc: Scenario, coeffs, grid: SpatialGrid, times) -> list[Condition]:
    # centres and faces, so a degeneracy sitting on a face is seen
    x = np.sort(np.concatenate([grid.centers, grid.faces]))
    A = np.array([coeffs.a(t, x) for t in times])
    B = np.array([coeffs.b(t, x) for t in times])
    out = []
    # T1: uniform ellipticity a >= C > 0; C is reported as min a
    k, i = np.unravel_index(np.argmin(A), A.shape)
    C = float(A[k, i])
    ok = C > 0 or sc["coeffs.allow_degenerate"]
    msg = f"C={C:.6g}" + (" (degenerate, allowed by override)" if C <= 0 and ok else "")
    out.append(Condition("T1", ok, C, f"t={times[k]:.4g} x={x[i]:.4g}", "coeffs.model", msg))
    # T2: bounded coefficients on the sampled window
    m = float(max(np.abs(A).max(), np.abs(B).max()))
    out.append(Condition("T2", bool(np.isfinite(m)), m, "window", "coeffs.model",
                         "sup |a|, |b| on samples"))
    # T3: Lipschitz modulus of a in x (finite differences)
    lip = np.abs(np.diff(A, axis=1)) / np.diff(x)
    k, i = np.unravel_index(np.argmax(lip), lip.shape)
    out.append(Condition("T3", bool(np.isfinite(lip[k, i])), float(lip[k, i]),
                         f"t={times[k]:.4g} x={x[i]:.4g}", "coeffs.model",
                         "max |da/dx| on samples"))
    # T4: linear growth of the drift, sup |b| / (1 + |x|)
    g = np.abs(B) / (1.0 + np.abs(x))
    k, i = np.unravel_index(np.argmax(g), g.shape)
    out.append(Condition("T4", bool(np.isfinite(g[k, i])), float(g[k, i]),
                         f"t={times[k]:.4g} x={x[i]:.4g}", "coeffs.model",
                         "max |b|/(1+|x|) on samples"))
    if sc["time.theta"] == 0:
        from ..fpe import cfl_bound

        bound = cfl_bound(float(A.max()), grid.dx, float(np.abs(B).max()))
        out.append(Condition("CFL", sc.dt <= bound, sc.dt, f"bound={bound:.6g}", "time.dt",
                             "explicit scheme needs dt <= bound"))
    return out


def _porous_conditions(sc: Scenario, porous: PorousMedia, grid: SpatialGrid) -> list[Condition]:
    try:
        u0 = sc.init_law.density(grid)
    except SuplabError as exc:
        return [Condition("init", False, math.nan, "init", "init.var", str(exc))]
    r_max = 2.0 * float(u0.values.max())
    r = np.linspace(0.0, r_max, 1001)
    br = porous.beta_r(r)
    j = int(np.argmin(br))
    out = [Condition("H_beta1", bool(br[j] > 0 and np.all(np.isfinite(br))), float(br[j]),
                     f"r={r[j]:.4g}", "coeffs.beta",
                     f"min beta_r on [0, {r_max:.4g}], max {float(br.max()):.4g}")]
    a = porous.a_of_density(r)
    out.append(Condition("T1", bool(a.min() > 0 or sc["coeffs.allow_degenerate"]),
                         float(a.min()), f"r={r[int(np.argmin(a))]:.4g}", "coeffs.beta",
                         f"C={float(a.min()):.6g} for a = 2 beta(u)/u"))
    if sc["time.theta"] == 0:
        out.append(Condition("CFL", False, sc.dt, "porous", "time.theta",
                             "the porous solver is semi-implicit only"))
    return out


def validate_scenario(sc: Scenario) -> ValidationReport:
    """Spot-check the scenario: catalog ids, grid, ellipticity (T1),
    boundedness (T2), Lipschitz modulus (T3), drift growth (T4), the
    monotonicity of beta (porous) and the explicit CFL bound. Never raises
    for a failed condition; the report carries it."""
    conds = []
    try:
        grid = sc.grid
    except ScenarioError as exc:
        return ValidationReport([Condition("grid", False, math.nan, "grid", exc.key, str(exc))])
    for key in ("time.T", "time.dt", "sde.dt"):
        if not sc[key] > 0:
            conds.append(Condition("positive", False, sc[key], key, key, "must be > 0"))
    if sc["time.theta"] not in (0.0, 1.0):
        conds.append(Condition("theta", False, sc["time.theta"], "time.theta", "time.theta",
                               "theta must be 0 (explicit) or 1 (implicit)"))
    conds += _catalog_conditions(sc)
    if any(not c.passed for c in conds):
        return ValidationReport(conds)
    coeffs = sc.coefficients()
    if isinstance(coeffs, PorousMedia):
        conds += _porous_conditions(sc, coeffs, grid)
    else:
        times = np.linspace(0.0, sc.T, N_TIME_SAMPLES)
        conds += _linear_conditions(sc, coeffs, grid, times)
    return ValidationReport(conds)
