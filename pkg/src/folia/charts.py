"""Foliated charts: periodic boxes carrying a metric, a one-form and a level function.

A chart is the tuple (dimension m+1, periodic box, a(x), beta(x), f(x)) whose
level sets of f are the leaves.  Fields are given as closed-form expression
strings in a deliberately small language -- operators + - * / ^, functions
sin/cos/exp, variables x1..x4, numeric literals and pi -- that is parsed here
and differentiated symbolically, so every evaluator has analytic derivatives
to any order the geometry needs.

Charts can be loaded from a flat key = value definition file or from the
shipped presets.  All evaluators are vectorized over (P, dim) point arrays.
"""

from __future__ import annotations

import hashlib
import math
import re
from configparser import ConfigParser
from io import StringIO
from itertools import product

import numpy as np
import sympy as sp

# Expression variables are x1..x4 for charts up to dimension 4; higher-degree
# charts (used for the m > 3 formulas) may reference coordinates up to x6.
MAX_EXPR_VARS = 6
TWO_PI = 2.0 * math.pi

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")

_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}


class ExpressionError(ValueError):
    """Raised for anything outside the chart expression language."""


class ChartError(ValueError):
    """Raised for invalid chart definitions."""


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            if text[pos:].strip():
                raise ExpressionError(f"cannot tokenize {text[pos:]!r}")
            break
        pos = match.end()
        if match.group("num"):
            tokens.append(("num", match.group("num")))
        elif match.group("name"):
            tokens.append(("name", match.group("name")))
        else:
            tokens.append(("op", match.group("op")))
    tokens.append(("end", ""))
    return tokens


def parse_expression(text: str, dim: int) -> sp.Expr:
    """Parse one expression in the restricted chart grammar to sympy."""
    tokens = _tokenize(text)
    idx = 0

    def peek():
        return tokens[idx]

    def take(kind=None, value=None):
        nonlocal idx
        tok = tokens[idx]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind}, found {tok[1]!r} in {text!r}")
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1]!r} in {text!r}")
        idx += 1
        return tok

    def parse_sum():
        node = parse_term()
        while peek() == ("op", "+") or peek() == ("op", "-"):
            op = take("op")[1]
            rhs = parse_term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def parse_term():
        node = parse_unary()
        while peek() == ("op", "*") or peek() == ("op", "/"):
            op = take("op")[1]
            rhs = parse_unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def parse_unary():
        if peek() == ("op", "-"):
            take("op")
            return -parse_unary()
        if peek() == ("op", "+"):
            take("op")
            return parse_unary()
        return parse_power()

    def parse_power():
        base = parse_atom()
        if peek() == ("op", "^"):
            take("op")
            expo = parse_unary()
            return base ** expo
        return base

    def parse_atom():
        kind, value = peek()
        if kind == "num":
            take()
            return sp.Rational(value)
        if kind == "name":
            take()
            if value == "pi":
                return sp.pi
            if value in _FUNCTIONS:
                take("op", "(")
                arg = parse_sum()
                take("op", ")")
                return _FUNCTIONS[value](arg)
            var_match = re.fullmatch(r"x([1-9])", value)
            if var_match:
                k = int(var_match.group(1))
                if k > min(dim, MAX_EXPR_VARS):
                    raise ExpressionError(
                        f"variable {value} out of range (chart allows x1..x{min(dim, MAX_EXPR_VARS)})")
                return sp.Symbol(value)
            raise ExpressionError(f"unknown name {value!r} in {text!r}")
        if (kind, value) == ("op", "("):
            take()
            node = parse_sum()
            take("op", ")")
            return node
        raise ExpressionError(f"unexpected token {value!r} in {text!r}")

    node = parse_sum()
    take("end")
    return node


# ---------------------------------------------------------------------------
# chart definitions

_SCALAR_KEYS = {"name", "dimension", "delta", "resolution", "f", "preset"}
_A_KEY = re.compile(r"a_([1-9])([1-9])")
_BETA_KEY = re.compile(r"beta_([1-9])")
_PERIOD_KEY = re.compile(r"period_([1-9])")

DEFAULT_DELTA = 1e-6
DEFAULT_RESOLUTION = 24


def _check_definition_keys(definition: dict):
    for key in definition:
        if key in _SCALAR_KEYS:
            continue
        if _A_KEY.fullmatch(key) or _BETA_KEY.fullmatch(key) or _PERIOD_KEY.fullmatch(key):
            continue
        raise ChartError(f"unknown chart definition key {key!r}")


class FoliatedChart:
    """Periodic coordinate box with analytic field evaluators."""

    def __init__(self, definition: dict):
        _check_definition_keys(definition)
        if "f" not in definition:
            raise ChartError("chart definition needs a level function f")
        self.definition = {k: str(v) for k, v in definition.items()}
        self.name = self.definition.get("name", "unnamed")
        self.dim = int(self.definition.get("dimension", 3))
        if self.dim < 2:
            raise ChartError("charts need dimension >= 2")
        self.delta = float(self.definition.get("delta", DEFAULT_DELTA))
        self.resolution = int(self.definition.get("resolution", DEFAULT_RESOLUTION))
        self.periods = np.full(self.dim, TWO_PI)
        for key, value in self.definition.items():
            period = _PERIOD_KEY.fullmatch(key)
            if period:
                axis = int(period.group(1))
                if axis > self.dim:
                    raise ChartError(f"{key} exceeds chart dimension")
                self.periods[axis - 1] = float(value)

        self.syms = [sp.Symbol(f"x{i + 1}") for i in range(self.dim)]

        def expr(text):
            return parse_expression(text, self.dim)

        a_mat = sp.zeros(self.dim, self.dim)
        for i in range(self.dim):
            a_mat[i, i] = sp.Integer(1)
        for key, value in self.definition.items():
            match = _A_KEY.fullmatch(key)
            if match:
                i, j = int(match.group(1)) - 1, int(match.group(2)) - 1
                if i >= self.dim or j >= self.dim:
                    raise ChartError(f"{key} exceeds chart dimension")
                parsed = expr(value)
                a_mat[i, j] = parsed
                a_mat[j, i] = parsed
        self.a_exprs = a_mat

        beta = [sp.Integer(0)] * self.dim
        for key, value in self.definition.items():
            match = _BETA_KEY.fullmatch(key)
            if match:
                i = int(match.group(1)) - 1
                if i >= self.dim:
                    raise ChartError(f"{key} exceeds chart dimension")
                beta[i] = expr(value)
        self.beta_exprs = beta

        self.f_expr = expr(self.definition["f"])
        self._fn_cache: dict = {}

    # -- lambdified evaluation -------------------------------------------
    def _scalar_fn(self, key, expression):
        if key not in self._fn_cache:
            fn = sp.lambdify(self.syms, expression, modules="numpy")
            self._fn_cache[key] = fn
        return self._fn_cache[key]

    def _eval_scalar(self, key, expression, pts):
        fn = self._scalar_fn(key, expression)
        cols = [pts[:, i] for i in range(self.dim)]
        out = fn(*cols)
        return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],)).copy()

    def _derivative(self, key, expression, orders):
        dkey = (key, orders)
        if dkey not in self._fn_cache:
            deriv = expression
            for axis in orders:
                deriv = sp.diff(deriv, self.syms[axis])
            self._fn_cache[dkey] = deriv
        return self._fn_cache[dkey]

    def _eval_tensor(self, base_key, component_exprs, pts, order):
        """Evaluate all order-th partial derivatives of the given components.

        component_exprs: dict index-tuple -> expr.  Output shape is
        (P, *component_shape, dim^order).
        """
        npts = pts.shape[0]
        indices = list(component_exprs)
        comp_rank = len(indices[0])
        out_shape = (npts,) + (self.dim,) * (comp_rank + order)
        out = np.empty(out_shape)
        for comp in indices:
            base = component_exprs[comp]
            for orders in product(range(self.dim), repeat=order):
                deriv = self._derivative((base_key, comp), base, orders)
                vals = self._eval_scalar((base_key, comp, orders, "fn"), deriv, pts)
                out[(slice(None),) + comp + orders] = vals
        return out

    def eval_a(self, pts):
        comps = {(i, j): self.a_exprs[i, j] for i in range(self.dim) for j in range(self.dim)}
        return self._eval_tensor("a", comps, pts, 0)

    def eval_da(self, pts):
        comps = {(i, j): self.a_exprs[i, j] for i in range(self.dim) for j in range(self.dim)}
        return self._eval_tensor("a", comps, pts, 1)

    def eval_d2a(self, pts):
        comps = {(i, j): self.a_exprs[i, j] for i in range(self.dim) for j in range(self.dim)}
        return self._eval_tensor("a", comps, pts, 2)

    def eval_beta(self, pts):
        comps = {(i,): self.beta_exprs[i] for i in range(self.dim)}
        return self._eval_tensor("b", comps, pts, 0)

    def eval_dbeta(self, pts):
        comps = {(i,): self.beta_exprs[i] for i in range(self.dim)}
        return self._eval_tensor("b", comps, pts, 1)

    def eval_d2beta(self, pts):
        comps = {(i,): self.beta_exprs[i] for i in range(self.dim)}
        return self._eval_tensor("b", comps, pts, 2)

    def eval_f(self, pts):
        return self._eval_scalar(("f", "fn"), self.f_expr, pts)

    def eval_df(self, pts):
        return self._eval_tensor("f", {(): self.f_expr}, pts, 1)

    def eval_d2f(self, pts):
        return self._eval_tensor("f", {(): self.f_expr}, pts, 2)

    def eval_d3f(self, pts):
        return self._eval_tensor("f", {(): self.f_expr}, pts, 3)

    # -- grids --------------------------------------------------------------
    def grid(self, n: int) -> np.ndarray:
        """Uniform periodic grid, n points per axis, C-order linearization."""
        axes = [self.periods[i] * np.arange(n) / n for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def box_volume(self) -> float:
        return float(np.prod(self.periods))

    # -- identity and validation ---------------------------------------------
    def canonical_definition(self) -> str:
        lines = [f"{key} = {self.definition[key]}" for key in sorted(self.definition)]
        return "\n".join(lines)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_definition().encode()).hexdigest()

    def validate(self, n: int = 12, tol: float = 1e-10):
        """Regularity, tangency and periodicity checks on a probe grid."""
        pts = self.grid(n)
        a = self.eval_a(pts)
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise ChartError("metric field is not positive definite on the box") from exc
        df = self.eval_df(pts)
        ainv = np.linalg.inv(a)
        w = np.einsum("pij,pj->pi", ainv, df)
        wnorm2 = np.einsum("pi,pi->p", w, df)
        if np.min(wnorm2) <= tol:
            raise ChartError("df vanishes somewhere: the level sets do not foliate the box")
        normal = w / np.sqrt(wnorm2)[:, None]
        b = self.eval_beta(pts)
        beta_n = np.einsum("pi,pi->p", b, normal)
        if np.max(np.abs(beta_n)) > 1e-12:
            raise ChartError(
                f"beta(N) = {np.max(np.abs(beta_n)):.3e} != 0; the one-form must be "
                "tangent to the leaves")
        bnorm2 = np.einsum("pi,pij,pj->p", b, ainv, b)
        if np.max(bnorm2) >= (1.0 - self.delta) ** 2:
            raise ChartError("||beta||_a exceeds 1 - delta somewhere on the box")
        for axis in range(self.dim):
            shifted = pts.copy()
            shifted[:, axis] += self.periods[axis]
            for label, value, other in (
                    ("a", a, self.eval_a(shifted)),
                    ("beta", b, self.eval_beta(shifted)),
                    ("df", df, self.eval_df(shifted))):
                scale = 1.0 + np.abs(value).max()
                if np.abs(value - other).max() > tol * scale:
                    raise ChartError(f"field {label} is not periodic along axis {axis + 1}")
        return True


# ---------------------------------------------------------------------------
# presets and files

PRESETS: dict[str, dict] = {
    # parallel flat foliation: every shape field vanishes
    "flat-linear": {
        "name": "flat-linear",
        "dimension": 3,
        "f": "x3",
        "beta_2": "0.3",
    },
    # flat metric, sinusoidally tilted leaves, constant one-form (Berwald)
    "flat-sin": {
        "name": "flat-sin",
        "dimension": 3,
        "f": "x3 - 0.2*sin(x1)",
        "beta_2": "0.3",
    },
    # 2-dimensional warped torus, constant-norm one-form tangent to leaves
    "warped-torus": {
        "name": "warped-torus",
        "dimension": 2,
        "a_22": "(1 + 0.3*cos(x1))^2",
        "f": "x1",
        "beta_2": "0.3*(1 + 0.3*cos(x1))",
    },
    # warped metric, tilted leaves, varying-norm one-form: all terms active
    "tilted": {
        "name": "tilted",
        "dimension": 3,
        "a_22": "(1 + 0.2*cos(x1))^2",
        "f": "x3 - 0.2*sin(x1)",
        "beta_2": "0.25 + 0.1*cos(x2)*cos(x3)",
    },
    # non-flat Berwald chart: curvature without Cartan corrections
    "warped-berwald": {
        "name": "warped-berwald",
        "dimension": 3,
        "a_22": "(1 + 0.3*cos(x1))^2",
        "f": "x1",
        "beta_3": "0.3",
    },
    # non-flat Berwald chart with tilted leaves (curvature and Cartan terms)
    "berwald-tilted": {
        "name": "berwald-tilted",
        "dimension": 3,
        "a_22": "(1 + 0.3*cos(x1))^2",
        "f": "x1 - 0.2*sin(x2)",
        "beta_3": "0.3",
    },
    # four-dimensional flat Berwald chart whose leaves have rank-2 curvature,
    # so the sigma_2 and sigma_3 integrands are pointwise nontrivial
    "flat-sin-4d": {
        "name": "flat-sin-4d",
        "dimension": 4,
        "f": "x3 - 0.2*sin(x1) - 0.15*sin(x2)",
        "beta_4": "0.3",
        "resolution": 16,
    },
    # five-dimensional parallel foliation (leaf dimension 4)
    "flat-linear-5d": {
        "name": "flat-linear-5d",
        "dimension": 5,
        "f": "x5",
        "beta_2": "0.3",
        "resolution": 8,
    },
}


def chart_from_preset(name: str) -> FoliatedChart:
    if name not in PRESETS:
        raise ChartError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return FoliatedChart(dict(PRESETS[name]))


def chart_from_definition(definition: dict) -> FoliatedChart:
    definition = dict(definition)
    preset = definition.pop("preset", None)
    if preset is not None:
        base = dict(PRESETS.get(str(preset), {}))
        if not base:
            raise ChartError(f"unknown preset {preset!r}")
        base.update(definition)
        definition = base
    return FoliatedChart(definition)


def chart_from_file(path: str) -> FoliatedChart:
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, "r", encoding="utf-8") as handle:
        parser.read_string(handle.read())
    if parser.sections() != ["chart"]:
        raise ChartError(f"chart file must contain exactly one [chart] section, "
                         f"found {parser.sections()}")
    return chart_from_definition(dict(parser.items("chart")))


def chart_from_spec(spec: str) -> FoliatedChart:
    """Resolve a chart argument: preset name or path to a definition file."""
    if spec in PRESETS:
        return chart_from_preset(spec)
    return chart_from_file(spec)


def write_chart_file(chart: FoliatedChart, path: str):
    buf = StringIO()
    buf.write("[chart]\n")
    buf.write(chart.canonical_definition())
    buf.write("\n")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(buf.getvalue())
