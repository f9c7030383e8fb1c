"""Scenario files: INI sections with dotted names for nesting, plus a tiny expression language.

Coefficient fields are numbers or expressions in ``x`` (and ``y`` in 2D) built
from ``+ - * / ^``, parentheses and ``sin cos exp ln abs min max``.  Matrix
fields list their entries separated by ``;`` (``a11; a12; a22`` in 2D).

Errors carry the field name and the line of the offending key so the CLI can
point at it.
"""

from __future__ import annotations

import ast
import configparser
import logging
import math
import operator
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, QGrowthError
from .mesh import Grid, build_interval_grid, build_planar_grid
from .operators import Ellipticity, LinearMember, MatrixField, OperatorSpec, ProblemSpec

logger = logging.getLogger(__name__)

MODES = ("solve", "branch", "homotopy-k", "eigen")


# ---------------------------------------------------------------------------
# Expressions


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log, "abs": np.abs,
          "min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}


class Expression:
    """Compiled arithmetic expression evaluated on node coordinates."""

    def __init__(self, text: str, variables=("x", "y"), name: str = "expression",
                 line: int | None = None):
        self.text = text.strip()
        self.variables = tuple(variables)
        self.name = name
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"cannot parse {self.text!r}: {exc.msg}", field=name,
                                     line=line) from None
        self._check(tree.body, line)
        self.tree = tree.body

    def _check(self, node, line):
        ok = True
        if isinstance(node, ast.BinOp):
            ok = type(node.op) in _BINOPS
            self._check(node.left, line)
            self._check(node.right, line)
        elif isinstance(node, ast.UnaryOp):
            ok = type(node.op) in _UNOPS
            self._check(node.operand, line)
        elif isinstance(node, ast.Call):
            ok = isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords
            if ok and node.func.id in ("min", "max"):
                ok = len(node.args) >= 2
            elif ok:
                ok = len(node.args) == 1
            for a in node.args:
                self._check(a, line)
        elif isinstance(node, ast.Name):
            ok = node.id in self.variables or node.id in _CONSTS
        elif isinstance(node, ast.Constant):
            ok = isinstance(node.value, (int, float)) and not isinstance(node.value, bool)
        else:
            ok = False
        if not ok:
            raise ConfigurationError(f"unsupported construct in {self.text!r}", field=self.name,
                                     line=line)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            args = [self._eval(a, env) for a in node.args]
            fn = _FUNCS[node.func.id]
            out = args[0]
            if node.func.id in ("min", "max"):
                for a in args[1:]:
                    out = fn(out, a)
                return out
            return fn(out)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        return float(node.value)

    def __call__(self, *coords):
        env = dict(zip(self.variables, coords))
        shape = np.shape(coords[0]) if coords else ()
        with np.errstate(all="ignore"):
            out = np.asarray(self._eval(self.tree, env), dtype=float)
        return np.broadcast_to(out, shape).copy() if shape else float(out)

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, ast.Name) and n.id in self.variables for n in ast.walk(self.tree))

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


# ---------------------------------------------------------------------------
# Reading


class _Source:
    """Parsed INI document with a key -> line index."""

    def __init__(self, text: str, origin: str):
        self.origin = origin
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source=origin)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigurationError(f"{origin}: {exc.message.splitlines()[0]}", line=line) from None
        self.lines: dict[tuple[str, str], int] = {}
        self.section_lines: dict[str, int] = {}
        section = None
        for no, raw in enumerate(text.splitlines(), start=1):
            s = raw.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                section = m.group(1).strip()
                self.section_lines[section] = no
            elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
                key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
                self.lines.setdefault((section, key), no)

    def has(self, section: str, key: str | None = None) -> bool:
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def line(self, section: str, key: str | None = None) -> int | None:
        if key is None:
            return self.section_lines.get(section)
        return self.lines.get((section, key), self.section_lines.get(section))

    def raw(self, section: str, key: str, default=None, required: bool = False):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            raise ConfigurationError(f"missing required field {section}.{key}",
                                     field=f"{section}.{key}", line=self.line(section))
        return default

    def num(self, section: str, key: str, default=None, required: bool = False, kind=float):
        val = self.raw(section, key, None, required)
        if val is None:
            return default
        try:
            out = Expression(val, (), f"{section}.{key}", self.line(section, key))()
            if kind is int and out != int(out):
                raise ValueError("expected an integer")
            return kind(out)
        except ConfigurationError:
            raise
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigurationError(f"{section}.{key} = {val!r} is not a number ({exc})",
                                     field=f"{section}.{key}", line=self.line(section, key)) from None

    def expr(self, section: str, key: str, variables, default: str | None = None,
             required: bool = False) -> Expression | None:
        val = self.raw(section, key, default, required)
        if val is None:
            return None
        return Expression(val, variables, f"{section}.{key}", self.line(section, key))

    def list_num(self, section: str, key: str, default=None):
        val = self.raw(section, key, None)
        if val is None:
            return default
        parts = [p for p in re.split(r"[,\s]+", val) if p]
        out = []
        for p in parts:
            try:
                out.append(float(Expression(p, (), f"{section}.{key}")()))
            except (ConfigurationError, ValueError, TypeError):
                raise ConfigurationError(f"{section}.{key}: {p!r} is not a number",
                                         field=f"{section}.{key}", line=self.line(section, key)) from None
        return out

    def fail(self, message: str, section: str, key: str | None = None):
        name = section if key is None else f"{section}.{key}"
        raise ConfigurationError(message, field=name, line=self.line(section, key))


# ---------------------------------------------------------------------------
# Scenario


@dataclass
class Scenario:
    """Validated scenario: the problem plus per-mode settings as plain dicts."""

    name: str
    mode: str
    problem: ProblemSpec
    expressions: dict[str, Expression]
    tol: float = 1e-8
    branch: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)
    homotopy: dict = field(default_factory=dict)
    eigen: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    source: str = ""
    text: str = ""

    @property
    def grid(self) -> Grid:
        return self.problem.grid


def _grid(src: _Source) -> Grid:
    domain = src.raw("grid", "domain", required=True)
    n = src.num("grid", "n", required=True, kind=int)
    try:
        if domain == "interval":
            return build_interval_grid(src.num("grid", "a", 0.0), src.num("grid", "b", 1.0), n)
        if domain in ("rectangle", "disk"):
            ext = src.list_num("grid", "extents")
            if ext is None:
                src.fail("missing required field grid.extents", "grid")
            return build_planar_grid(domain, tuple(ext), n)
    except ConfigurationError as exc:
        key = "n" if exc.field == "grid.n" else "domain"
        raise ConfigurationError(exc.args[0], field=exc.field or "grid",
                                 line=src.line("grid", key)) from None
    src.fail(f"unknown domain {domain!r}; expected interval, rectangle or disk", "grid", "domain")


def _matrix(src: _Source, section: str, key: str, grid: Grid, variables, default=None):
    """Constant or per-node symmetric matrix from ``;``-separated entries."""
    raw = src.raw(section, key, default)
    if raw is None:
        return None
    parts = [p.strip() for p in raw.split(";")]
    dim = grid.dim
    need = 1 if dim == 1 else 3
    if len(parts) == 1 and dim == 2:
        parts = [parts[0], "0", parts[0]]
    if len(parts) != need:
        src.fail(f"{section}.{key} needs {need} entries separated by ';'", section, key)
    ex = [Expression(p, variables, f"{section}.{key}", src.line(section, key)) for p in parts]
    if all(e.is_constant for e in ex):
        vals = [e() for e in ex]
        if dim == 1:
            return np.array([[vals[0]]])
        return np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
    cols = [grid.coords[:, k] for k in range(dim)]
    v = [e(*cols) for e in ex]
    if dim == 1:
        return v[0][:, None, None]
    return np.stack([np.stack([v[0], v[1]], -1), np.stack([v[1], v[2]], -1)], -2)


def _vector(src: _Source, section: str, key: str, grid: Grid, variables):
    raw = src.raw(section, key)
    if raw is None:
        return None
    parts = [p.strip() for p in raw.split(";")]
    if len(parts) != grid.dim:
        src.fail(f"{section}.{key} needs {grid.dim} entries separated by ';'", section, key)
    ex = [Expression(p, variables, f"{section}.{key}", src.line(section, key)) for p in parts]
    if all(e.is_constant for e in ex):
        return np.array([e() for e in ex])
    cols = [grid.coords[:, k] for k in range(grid.dim)]
    return np.column_stack([e(*cols) for e in ex])


def _scalar_field(src, section, key, grid, variables):
    e = src.expr(section, key, variables)
    if e is None:
        return None
    return e() if e.is_constant else grid.evaluate(e)


def _member(src: _Source, section: str, grid: Grid, variables) -> LinearMember:
    a = _matrix(src, section, "a", grid, variables)
    if a is None:
        src.fail(f"missing required field {section}.a", section)
    return LinearMember(a, _vector(src, section, "drift", grid, variables),
                        _scalar_field(src, section, "zero", grid, variables))


def _operator(src: _Source, grid: Grid, variables) -> OperatorSpec:
    kind = src.raw("operator", "kind", required=True)
    E = Ellipticity(src.num("operator", "lam_P", required=True),
                    src.num("operator", "Lam_P", required=True))
    b = src.num("operator", "b", 0.0)
    d = src.num("operator", "d", 0.0)
    stencil = src.raw("operator", "stencil", "eigen")
    sections = src.cp.sections()
    if kind == "isaacs":
        groups: dict[str, list] = {}
        for s in sections:
            m = re.fullmatch(r"operator\.group\.([^.]+)\.member\.([^.]+)", s)
            if m:
                groups.setdefault(m.group(1), []).append(_member(src, s, grid, variables))
        members = [groups[k] for k in sorted(groups)]
    elif kind in ("linear", "hjb_sup"):
        members = [_member(src, s, grid, variables) for s in sections
                   if re.fullmatch(r"operator\.member\.[^.]+", s)]
    else:
        members = []
    try:
        return OperatorSpec(kind, E, tuple(members), b, d, stencil)
    except QGrowthError as exc:
        src.fail(str(exc), "operator", "kind")


def _settings(src: _Source, section: str, spec: dict) -> dict:
    out = {}
    for key, (kind, default) in spec.items():
        if kind == "list":
            out[key] = src.list_num(section, key, default)
        elif kind == "str":
            out[key] = src.raw(section, key, default)
        elif kind == "bool":
            raw = src.raw(section, key)
            out[key] = default if raw is None else raw.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = src.num(section, key, default, kind=kind)
    unknown = set(src.cp.options(section)) - set(spec) if src.has(section) else set()
    for key in sorted(unknown):
        src.fail(f"unknown field {section}.{key}", section, key)
    return out


_BRANCH = {"lam_min": (float, 0.0), "lam_max": (float, 10.0), "ds": (float, 0.05),
           "norm_cap": (float, 100.0), "probe": ("list", None), "direction": (int, 1),
           "max_points": (int, 5000), "refine_n": (int, None)}
_UPPER = {"lambdas": ("list", None), "h_ref": (float, 1.0), "ds": (float, 0.05)}
_SOLVE = {"lam": (float, 0.0), "seeds": (int, 4), "seed_scale": (float, 1.0)}
_HOMOTOPY = {"lam": (float, None), "lam_fraction": (float, 0.5), "Lambda2": (float, None),
             "C0": (float, None), "ds": (float, 0.02), "k_max": (float, 1.0), "seeds": (int, 8)}
_EIGEN = {"weight": ("str", "c"), "richardson": ("bool", False)}
_BOUNDS = {"Lambda1": (float, None), "Lambda2": (float, None)}
_ORACLE = {"lambdas": ("list", None), "refine": (int, 4), "fold": ("bool", True)}


def load_scenario(path, tol: float | None = None) -> Scenario:
    """Read and validate a scenario file (or a bundled scenario name)."""
    p = resolve_scenario(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {p}: {exc.strerror}") from None
    return parse_scenario(text, str(p), tol)


def parse_scenario(text: str, origin: str = "<string>", tol: float | None = None,
                   overrides: dict[tuple[str, str], str] | None = None) -> Scenario:
    """Build a scenario from INI text; ``overrides`` maps (section, key) to replacement values."""
    src = _Source(text, origin)
    for (section, key), value in (overrides or {}).items():
        if not src.cp.has_section(section):
            src.cp.add_section(section)
        src.cp.set(section, key, str(value))
    name = src.raw("scenario", "name", Path(origin).stem)
    mode = src.raw("scenario", "mode", "branch")
    if mode not in MODES:
        src.fail(f"unknown mode {mode!r}; expected one of {MODES}", "scenario", "mode")
    grid = _grid(src)
    variables = ("x",) if grid.dim == 1 else ("x", "y")
    op = _operator(src, grid, variables)

    sec = "coefficients"
    mu1 = src.num(sec, "mu1", required=True)
    mu2 = src.num(sec, "mu2", mu1)
    M = _matrix(src, sec, "M", grid, variables, default=repr(mu1))
    exprs = {}
    for key in ("c", "h"):
        exprs[key] = src.expr(sec, key, variables, required=True)
    try:
        Mf = MatrixField(M, mu1, mu2)
        c_fn: Callable = exprs["c"]
        h_fn: Callable = exprs["h"]
        P = ProblemSpec.from_functions(grid, op, Mf, c_fn, h_fn, src.num(sec, "lam", 0.0),
                                       src.raw(sec, "quadratic_scheme", "fitted"))
    except ConfigurationError:
        raise
    except QGrowthError as exc:
        key = "mu1" if "mu1" in str(exc) else ("c" if "c must" in str(exc) else None)
        src.fail(str(exc), sec, key)
    base_tol = src.num("tolerances", "tol", 1e-8)
    return Scenario(
        name=name, mode=mode, problem=P, expressions=exprs,
        tol=float(tol) if tol is not None else base_tol,
        branch=_settings(src, "branch", _BRANCH),
        upper=_settings(src, "upper", _UPPER),
        solve=_settings(src, "solve", _SOLVE),
        homotopy=_settings(src, "homotopy", _HOMOTOPY),
        eigen=_settings(src, "eigen", _EIGEN),
        bounds=_settings(src, "bounds", _BOUNDS),
        oracle=_settings(src, "oracle", _ORACLE),
        source=origin,
        text=text,
    )


def with_resolution(sc: Scenario, n: int) -> Scenario:
    """The same scenario on a grid with ``n`` cells."""
    return parse_scenario(sc.text, sc.source, sc.tol, {("grid", "n"): str(int(n))})


def bundled_scenarios() -> list[str]:
    root = resources.files("qgrowth") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_scenario(path) -> Path:
    """A file path, or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    root = resources.files("qgrowth") / "scenarios"
    cand = root / f"{p.name}.ini" if not p.name.endswith(".ini") else root / p.name
    if cand.is_file():
        return Path(str(cand))
    raise ConfigurationError(f"scenario {path!s} not found (bundled: {', '.join(bundled_scenarios())})")


__all__ = ["Expression", "MODES", "Scenario", "bundled_scenarios", "load_scenario",
           "parse_scenario", "resolve_scenario", "with_resolution"]
