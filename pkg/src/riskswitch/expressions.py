"""Tiny arithmetic expression grammar for model configuration files.

Grammar (whitelisted Python expression syntax):

* binary operators ``+  -  *  /  ^`` (``^`` is exponentiation),
* unary ``-``/``+``,
* functions ``exp(u)``, ``sqrt(u)``, ``abs(u)``, ``min(u, v)``, ``max(u, v)``
  (min/max are binary and apply elementwise),
* variables ``x1 .. xd`` (state coordinates), ``k`` (regime index, 0-based),
  ``xi`` (the control value),
* numeric literals.

Expressions are compiled once and evaluated with numpy broadcasting, so a
configured model satisfies the batch-first coefficient contract.

Model configuration files are JSON objects in one of two forms::

    {"builtin": "lq", "params": {"q": 0.1875, "controls": [1, 2]}}

    {"name": "custom", "dim": 1, "num_regimes": 2,
     "controls": [1.0, 2.0],
     "drift": ["-(1 + k) * xi * x1"],
     "diffusion": [["sqrt(2)"]],
     "rates": [["-1", "1"], ["1", "-1"]],
     "cost": "0.05 * (1 + k) * x1^2"}

``drift`` lists one expression per coordinate; ``diffusion`` is a dim x dim
nested list; ``rates`` is an N x N nested list (rows must sum to zero,
validated at assembly/validation time); ``cost`` is a single expression.
"""

import ast
import json

import numpy as np

from .model import SwitchingModel, make_builtin


class ExpressionError(ValueError):
    pass


_FUNCTIONS = {
    "exp": (np.exp, 1),
    "sqrt": (np.sqrt, 1),
    "abs": (np.abs, 1),
    "min": (np.minimum, 2),
    "max": (np.maximum, 2),
}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _validate(node, names):
    if isinstance(node, ast.Expression):
        _validate(node.body, names)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError("operator %s is not in the grammar" % type(node.op).__name__)
        _validate(node.left, names)
        _validate(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("unary %s is not in the grammar" % type(node.op).__name__)
        _validate(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError("only exp, sqrt, abs, min, max may be called")
        fn, arity = _FUNCTIONS[node.func.id]
        if len(node.args) != arity or node.keywords:
            raise ExpressionError(
                "%s takes exactly %d positional argument(s)" % (node.func.id, arity)
            )
        for a in node.args:
            _validate(a, names)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ExpressionError(
                "unknown variable %r (allowed: %s)" % (node.id, ", ".join(sorted(names)))
            )
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric literals are allowed")
    else:
        raise ExpressionError("syntax %s is not in the grammar" % type(node).__name__)


def compile_expression(source, dim):
    """Compile one grammar expression into ``fn(X, k, xi) -> (n,)``."""
    if not isinstance(source, str):
        raise ExpressionError("expression must be a string, got %r" % (source,))
    names = {"x%d" % (i + 1) for i in range(dim)} | {"k", "xi"}
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError("cannot parse expression %r: %s" % (source, exc)) from None
    _validate(tree, names)
    code = compile(tree, "<model-expression>", "eval")
    env_fns = {name: fn for name, (fn, _) in _FUNCTIONS.items()}

    def fn(X, k, xi):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        local = {"x%d" % (i + 1): X[:, i] for i in range(dim)}
        local["k"] = float(k)
        local["xi"] = float(xi)
        local.update(env_fns)
        out = eval(code, {"__builtins__": {}}, local)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    fn.source = source
    return fn


def model_from_spec(spec):
    """Build a SwitchingModel from a decoded configuration dictionary."""
    if not isinstance(spec, dict):
        raise ExpressionError("model configuration must be a JSON object")
    if "builtin" in spec:
        params = spec.get("params", {})
        if not isinstance(params, dict):
            raise ExpressionError("'params' must be an object")
        return make_builtin(spec["builtin"], **params)

    try:
        dim = int(spec["dim"])
        num_regimes = int(spec["num_regimes"])
        controls = [float(c) for c in spec["controls"]]
        drift_src = spec["drift"]
        diffusion_src = spec["diffusion"]
        rates_src = spec["rates"]
        cost_src = spec["cost"]
    except KeyError as exc:
        raise ExpressionError("model configuration is missing key %s" % exc) from None

    if len(drift_src) != dim:
        raise ExpressionError("drift must list %d expressions" % dim)
    if len(diffusion_src) != dim or any(len(row) != dim for row in diffusion_src):
        raise ExpressionError("diffusion must be a %dx%d nested list" % (dim, dim))
    if len(rates_src) != num_regimes or any(len(row) != num_regimes for row in rates_src):
        raise ExpressionError("rates must be a %dx%d nested list" % (num_regimes, num_regimes))

    drift_fns = [compile_expression(s, dim) for s in drift_src]
    diff_fns = [[compile_expression(s, dim) for s in row] for row in diffusion_src]
    rate_fns = [[compile_expression(s, dim) for s in row] for row in rates_src]
    cost_fn = compile_expression(cost_src, dim)

    def drift(X, k, xi):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([f(X, k, xi) for f in drift_fns], axis=1)

    def diffusion(X, k):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        out = np.empty((n, dim, dim))
        for i in range(dim):
            for j in range(dim):
                out[:, i, j] = diff_fns[i][j](X, k, 0.0)
        return out

    def rates(X, xi):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        out = np.empty((n, num_regimes, num_regimes))
        for i in range(num_regimes):
            for j in range(num_regimes):
                out[:, i, j] = rate_fns[i][j](X, 0, xi)
        return out

    def cost(X, k, xi):
        return cost_fn(X, k, xi)

    name = str(spec.get("name", "custom"))
    return SwitchingModel(
        name=name, dim=dim, num_regimes=num_regimes, controls=controls,
        drift=drift, diffusion=diffusion, rates=rates, cost=cost,
        params={"config": {k: v for k, v in spec.items()}},
    )


def load_model(path):
    """Load a model configuration from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ExpressionError("invalid JSON in %s: %s" % (path, exc)) from None
    return model_from_spec(spec)
