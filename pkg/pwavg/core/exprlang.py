"""Scalar expression language for vector fields, switching functions and beta0.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Precedence is ``^`` > unary minus > ``* /`` > ``+ -``; ``^`` is right
associative, so ``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""

import builtins
import math
import re
from dataclasses import dataclass
from functools import singledispatch
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
    UnknownSymbolError,
)

Bindings = Mapping[str, float]

FUNCTIONS: Dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

# Binding strength used by the printer.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


# ---------------------------------------------------------------- AST

class Expr:
    """Base class of the immutable expression tree."""
    __slots__ = ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


ZERO = Num(0.0)
ONE = Num(1.0)


# ---------------------------------------------------------------- parsing

@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int


def _tokenize(source: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(source):
        char = source[pos]
        if char.isspace():
            pos += 1
            continue
        number = _NUMBER_RE.match(source, pos)
        if number:
            tokens.append(_Token("num", number.group(0), pos))
            pos = number.end()
            continue
        name = _NAME_RE.match(source, pos)
        if name:
            tokens.append(_Token("name", name.group(0), pos))
            pos = name.end()
            continue
        if char in "+-*/^()":
            tokens.append(_Token("op", char, pos))
            pos += 1
            continue
        raise ExprSyntaxError(f"unexpected character {char!r} at offset {pos}", offset=pos, source=source)
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    """Recursive-descent parser over the token list."""

    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.current
        self.index += 1
        return token

    def _error(self, expected: str) -> ExprSyntaxError:
        token = self.current
        found = "end of input" if token.kind == "end" else repr(token.text)
        return ExprSyntaxError(
            f"syntax error at offset {token.offset}: expected {expected}, found {found}",
            offset=token.offset, expected=expected, source=self.source,
        )

    def _accept(self, text: str) -> bool:
        if self.current.kind == "op" and self.current.text == text:
            self.index += 1
            return True
        return False

    def parse(self) -> Expr:
        expr = self._expr()
        if self.current.kind != "end":
            raise self._error("operator or end of input")
        return expr

    def _expr(self) -> Expr:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Expr:
        node = self._unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self._unary())
        if self._accept("+"):
            return self._unary()
        return self._power()

    def _power(self) -> Expr:
        base = self._primary()
        if self._accept("^"):
            return BinOp("^", base, self._unary())
        return base

    def _primary(self) -> Expr:
        token = self.current
        if token.kind == "num":
            self._advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(
                    f"number {token.text!r} at offset {token.offset} is out of range",
                    offset=token.offset, expected="finite number", source=self.source,
                )
            return Num(value)
        if token.kind == "name":
            self._advance()
            if self._accept("("):
                if token.text not in FUNCTIONS:
                    raise UnknownFunctionError(
                        f"unknown function {token.text!r} at offset {token.offset}",
                        offset=token.offset, name=token.text,
                    )
                arg = self._expr()
                if not self._accept(")"):
                    raise self._error('")"')
                return Call(token.text, arg)
            return Var(token.text)
        if self._accept("("):
            inner = self._expr()
            if not self._accept(")"):
                raise self._error('")"')
            return inner
        raise self._error("number, name or '('")


def parse(source: str) -> Expr:
    """Parse expression text into an Expr."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", offset=0, expected="expression", source=source or "")
    return _Parser(source).parse()


# ---------------------------------------------------------------- symbols

@singledispatch
def free_symbols(expr: Expr) -> FrozenSet[str]:
    raise TypeError(f"not an expression: {expr!r}")


@free_symbols.register
def _(expr: Num) -> FrozenSet[str]:
    return frozenset()


@free_symbols.register
def _(expr: Var) -> FrozenSet[str]:
    return frozenset((expr.name,))


@free_symbols.register
def _(expr: Neg) -> FrozenSet[str]:
    return free_symbols(expr.operand)


@free_symbols.register
def _(expr: BinOp) -> FrozenSet[str]:
    return free_symbols(expr.left) | free_symbols(expr.right)


@free_symbols.register
def _(expr: Call) -> FrozenSet[str]:
    return free_symbols(expr.arg)


def validate(expr: Expr, symbols: Iterable[str]) -> None:
    """Check that every variable of expr is a declared symbol."""
    unknown = sorted(free_symbols(expr) - set(symbols))
    if unknown:
        raise UnknownSymbolError(f"undeclared symbol(s) {', '.join(unknown)} in {to_source(expr)!r}", symbols=unknown)


# ---------------------------------------------------------------- evaluation

def _pow(base: float, exponent: float) -> float:
    return math.pow(base, exponent)


def _apply(op: str, left: float, right: float) -> float:
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        return left / right
    return _pow(left, right)


def evaluate(expr: Expr, env: Bindings) -> float:
    """Evaluate expr in IEEE double precision.

    Raises UnboundVariableError for missing bindings and ExprDomainError,
    naming the offending subexpression, for log/sqrt/pow of invalid arguments,
    division by zero and overflow.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise UnboundVariableError(f"unbound variable {expr.name!r}", name=expr.name) from None
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, BinOp):
        left = evaluate(expr.left, env)
        right = evaluate(expr.right, env)
        try:
            return _apply(expr.op, left, right)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExprDomainError(f"domain error in {to_source(expr)!r}: {exc}", to_source(expr)) from None
    if isinstance(expr, Call):
        arg = evaluate(expr.arg, env)
        try:
            return FUNCTIONS[expr.func](arg)
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(f"domain error in {to_source(expr)!r}: {exc}", to_source(expr)) from None
    raise TypeError(f"not an expression: {expr!r}")


# ``eval`` is the operation name in the expression-language docs.
eval = evaluate  # noqa: A001


# ---------------------------------------------------------------- differentiation

def _fold(node: Expr) -> Expr:
    """Constant-fold a node whose operands are all literals."""
    try:
        if isinstance(node, Neg) and isinstance(node.operand, Num):
            return Num(-node.operand.value)
        if isinstance(node, BinOp) and isinstance(node.left, Num) and isinstance(node.right, Num):
            value = _apply(node.op, node.left.value, node.right.value)
        elif isinstance(node, Call) and isinstance(node.arg, Num):
            value = FUNCTIONS[node.func](node.arg.value)
        else:
            return node
    except (ValueError, ZeroDivisionError, OverflowError):
        return node
    return Num(value) if math.isfinite(value) else node


def _add(a: Expr, b: Expr) -> Expr:
    return _fold(BinOp("+", a, b))


def _sub(a: Expr, b: Expr) -> Expr:
    return _fold(BinOp("-", a, b))


def _mul(a: Expr, b: Expr) -> Expr:
    return _fold(BinOp("*", a, b))


def _div(a: Expr, b: Expr) -> Expr:
    return _fold(BinOp("/", a, b))


def _power(a: Expr, b: Expr) -> Expr:
    return _fold(BinOp("^", a, b))


def _neg(a: Expr) -> Expr:
    return _fold(Neg(a))


def differentiate(expr: Expr, var: str) -> Expr:
    """Exact symbolic derivative of expr with respect to var.

    The result is not simplified beyond folding literal-only subtrees; a
    subtree that does not mention var differentiates to the zero literal.
    """
    if var not in free_symbols(expr):
        return ZERO
    if isinstance(expr, Var):
        return ONE
    if isinstance(expr, Neg):
        return _neg(differentiate(expr.operand, var))
    if isinstance(expr, Call):
        inner = differentiate(expr.arg, var)
        u = expr.arg
        if expr.func == "sin":
            outer = Call("cos", u)
        elif expr.func == "cos":
            outer = _neg(Call("sin", u))
        elif expr.func == "tan":
            outer = _div(ONE, _power(Call("cos", u), Num(2.0)))
        elif expr.func == "exp":
            outer = expr
        elif expr.func == "log":
            outer = _div(ONE, u)
        else:  # sqrt
            outer = _div(ONE, _mul(Num(2.0), expr))
        return _mul(outer, inner)
    assert isinstance(expr, BinOp)
    u, v = expr.left, expr.right
    du, dv = differentiate(u, var), differentiate(v, var)
    if expr.op == "+":
        return _add(du, dv)
    if expr.op == "-":
        return _sub(du, dv)
    if expr.op == "*":
        return _add(_mul(du, v), _mul(u, dv))
    if expr.op == "/":
        return _div(_sub(_mul(du, v), _mul(u, dv)), _power(v, Num(2.0)))
    # u ^ v
    if var not in free_symbols(v):
        exponent = _sub(v, ONE)
        return _mul(_mul(v, _power(u, exponent)), du)
    if var not in free_symbols(u):
        return _mul(_mul(expr, Call("log", u)), dv)
    return _mul(expr, _add(_mul(dv, Call("log", u)), _div(_mul(v, du), u)))


# ---------------------------------------------------------------- printing

def _precedence(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[expr.op]
    if isinstance(expr, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def _format_number(value: float) -> str:
    text = repr(float(value))
    return f"({text})" if value < 0 or text.startswith("-") else text


def to_source(expr: Expr) -> str:
    """Canonical printer; parse(to_source(e)) evaluates bit-identically to e."""
    if isinstance(expr, Num):
        return _format_number(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"
    if isinstance(expr, Neg):
        inner = to_source(expr.operand)
        if _precedence(expr.operand) < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    assert isinstance(expr, BinOp)
    prec = _precedence(expr)
    left, right = to_source(expr.left), to_source(expr.right)
    if _precedence(expr.left) < prec or (expr.op == "^" and _precedence(expr.left) <= prec):
        left = f"({left})"
    if _precedence(expr.right) < prec or (expr.op != "^" and _precedence(expr.right) == prec):
        right = f"({right})"
    return f"{left} {expr.op} {right}"


# ---------------------------------------------------------------- compilation

_SANDBOX = {
    "__builtins__": {},
    "_pow": _pow,
    "_sin": math.sin,
    "_cos": math.cos,
    "_tan": math.tan,
    "_exp": math.exp,
    "_log": math.log,
    "_sqrt": math.sqrt,
}


def _python_source(expr: Expr, names: Mapping[str, str]) -> str:
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return names[expr.name]
    if isinstance(expr, Neg):
        return f"(-{_python_source(expr.operand, names)})"
    if isinstance(expr, Call):
        return f"_{expr.func}({_python_source(expr.arg, names)})"
    assert isinstance(expr, BinOp)
    left, right = _python_source(expr.left, names), _python_source(expr.right, names)
    if expr.op == "^":
        return f"_pow({left}, {right})"
    return f"({left} {expr.op} {right})"


class CompiledVector:
    """A tuple of Exprs compiled into one Python callable.

    Called as ``f(t, x, eps)`` with x a state vector (or ``f(a)`` for
    manifold maps); returns a float ndarray. Constants are bound at compile
    time. On a domain error the tree-walking evaluator re-runs to name the
    offending subexpression.
    """

    def __init__(self, exprs: Sequence[Expr], layout: "SymbolLayout", constants: Optional[Mapping[str, float]] = None):
        self.exprs: Tuple[Expr, ...] = tuple(exprs)
        self.layout = layout
        self.constants = dict(constants or {})
        names = layout.python_names()
        namespace = dict(_SANDBOX)
        for key, value in self.constants.items():
            names[key] = f"_c_{key}"
            namespace[f"_c_{key}"] = float(value)
        for expr in self.exprs:
            validate(expr, names)
        body = ", ".join(_python_source(e, names) for e in self.exprs)
        source = f"lambda {layout.signature}: ({body}{',' if len(self.exprs) == 1 else ''})"
        self._func = builtins.eval(source, namespace)

    def __len__(self) -> int:
        return len(self.exprs)

    def __call__(self, *args) -> np.ndarray:
        # Plain floats keep math-module error semantics (numpy scalars return inf on 1/0).
        args = tuple(np.asarray(a, dtype=float).tolist() for a in args)
        try:
            return np.array(self._func(*args), dtype=float)
        except (ValueError, ZeroDivisionError, OverflowError):
            env = dict(self.constants)
            env.update(self.layout.bindings(*args))
            for expr in self.exprs:
                evaluate(expr, env)
            raise

    def scalar(self, *args) -> float:
        return float(self(*args)[0])


@dataclass(frozen=True)
class SymbolLayout:
    """How symbol names map onto positional callable arguments."""
    kind: str  # "state" for (t, x, eps); "manifold" for (a,)
    dimension: int

    @property
    def signature(self) -> str:
        return "t, x, eps" if self.kind == "state" else "a"

    def python_names(self) -> Dict[str, str]:
        if self.kind == "state":
            names = {"t": "t", "eps": "eps"}
            names.update({f"x{i + 1}": f"x[{i}]" for i in range(self.dimension)})
        else:
            names = {f"a{i + 1}": f"a[{i}]" for i in range(self.dimension)}
        return names

    def symbols(self) -> FrozenSet[str]:
        return frozenset(self.python_names())

    def bindings(self, *args) -> Dict[str, float]:
        if self.kind == "state":
            t, x, eps = args
            env = {"t": float(t), "eps": float(eps)}
            env.update({f"x{i + 1}": float(x[i]) for i in range(self.dimension)})
            return env
        (a,) = args
        return {f"a{i + 1}": float(a[i]) for i in range(self.dimension)}


def compile_vector(exprs: Sequence[Expr], layout: SymbolLayout, constants: Optional[Mapping[str, float]] = None) -> CompiledVector:
    return CompiledVector(exprs, layout, constants)


def compile_scalar(expr: Expr, layout: SymbolLayout, constants: Optional[Mapping[str, float]] = None) -> CompiledVector:
    return CompiledVector((expr,), layout, constants)


def parse_all(sources: Sequence[str]) -> Tuple[Expr, ...]:
    return tuple(parse(s) for s in sources)


ExprLike = Union[str, Expr]


def as_expr(value: ExprLike) -> Expr:
    return value if isinstance(value, Expr) else parse(value)
