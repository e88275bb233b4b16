"""Symbolic expressions over the sampled node count ``N`` and cardinality ``V``.

Expressions are written in a tiny arithmetic language::

    0.5 * N        log(N)        min(V, 10)        floor(N / 3) + 1

Parsing goes through :mod:`ast` with a strict whitelist, so nothing outside
literals, ``N``/``V``, ``+ - * /`` and the functions below is ever evaluated.
``log`` is the natural logarithm.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

from .errors import DomainError, ValidationError

SYMBOLS = ("N", "V")

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_UNARYOPS = (ast.UAdd, ast.USub)
_FUNCTIONS = {"log": 1, "sqrt": 1, "floor": 1, "ceil": 1, "min": None, "max": None}


def _check(node: ast.AST, text: str) -> set[str]:
    """Validate the tree and return the symbols it references."""
    if isinstance(node, ast.Expression):
        return _check(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ValidationError(f"unsupported literal {node.value!r} in {text!r}")
        return set()
    if isinstance(node, ast.Name):
        if node.id not in SYMBOLS:
            raise ValidationError(f"unknown symbol {node.id!r} in {text!r}")
        return {node.id}
    if isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ValidationError(f"unsupported operator in {text!r}")
        return _check(node.left, text) | _check(node.right, text)
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARYOPS):
            raise ValidationError(f"unsupported operator in {text!r}")
        return _check(node.operand, text)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ValidationError(f"unsupported function call in {text!r}")
        if node.keywords:
            raise ValidationError(f"keyword arguments are not allowed in {text!r}")
        arity = _FUNCTIONS[node.func.id]
        if arity is not None and len(node.args) != arity:
            raise ValidationError(f"{node.func.id} takes {arity} argument(s) in {text!r}")
        if arity is None and not node.args:
            raise ValidationError(f"{node.func.id} needs at least one argument in {text!r}")
        used: set[str] = set()
        for arg in node.args:
            used |= _check(arg, text)
        return used
    raise ValidationError(f"unsupported syntax in expression {text!r}")


def _eval(node: ast.AST, env: dict[str, float]) -> float:
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if b == 0:
            raise DomainError("division by zero")
        return a / b
    assert isinstance(node, ast.Call)
    args = [_eval(a, env) for a in node.args]
    name = node.func.id
    if name == "log":
        if args[0] <= 0:
            raise DomainError(f"log of non-positive value {args[0]}")
        return math.log(args[0])
    if name == "sqrt":
        if args[0] < 0:
            raise DomainError(f"sqrt of negative value {args[0]}")
        return math.sqrt(args[0])
    if name == "floor":
        return float(math.floor(args[0]))
    if name == "ceil":
        return float(math.ceil(args[0]))
    if name == "min":
        return min(args)
    return max(args)


@dataclass(frozen=True)
class Expr:
    """A validated expression; ``text`` is kept verbatim for round-tripping."""

    text: str

    def __post_init__(self):
        tree = self._tree()
        object.__setattr__(self, "symbols", frozenset(_check(tree, self.text)))

    def _tree(self) -> ast.Expression:
        try:
            return ast.parse(self.text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ValidationError(f"malformed expression {self.text!r}: {exc.msg}") from None

    @classmethod
    def of(cls, value) -> "Expr":
        """Build from a number or an expression string."""
        if isinstance(value, Expr):
            return value
        if isinstance(value, bool):
            raise ValidationError(f"expected a number or expression, got {value!r}")
        if isinstance(value, (int, float)):
            if not math.isfinite(value):
                raise ValidationError(f"non-finite literal {value!r}")
            return cls(repr(value))
        if isinstance(value, str):
            return cls(value)
        raise ValidationError(f"expected a number or expression, got {type(value).__name__}")

    def __str__(self) -> str:
        return self.text


def resolve_expr(e: Expr | str | float, n: int, v: int | None = None) -> float:
    """Evaluate ``e`` at node count ``n`` and cardinality ``v``."""
    e = Expr.of(e)
    if n < 1:
        raise DomainError(f"N must be >= 1, got {n}")
    env = {"N": float(n)}
    if "V" in e.symbols:
        if v is None:
            raise DomainError(f"expression {e.text!r} uses V but no cardinality was given")
        if v < 2:
            raise DomainError(f"V must be >= 2, got {v}")
        env["V"] = float(v)
    value = _eval(e._tree(), env)
    if not math.isfinite(value):
        raise DomainError(f"expression {e.text!r} is not finite at N={n}, V={v}")
    return value


def resolve_count(e: Expr | str | float, n: int, v: int | None = None) -> int:
    """Integer-valued context: floor the value and reject negatives."""
    value = resolve_expr(e, n, v)
    count = math.floor(value)
    if count < 0:
        raise DomainError(f"expression {Expr.of(e).text!r} is negative ({value}) at N={n}, V={v}")
    return count
