"""Expression language for model functions.

Grammar (standard precedence, ^ binds tightest and is right-associative,
then unary minus, then * /, then + -):

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

Identifiers are the variables x1..xk and the function names sin, cos, tan,
exp, log, sqrt, tanh, atan (all twice differentiable on their domains).
Numbers are decimal literals with an optional exponent.

Evaluation is batched: an expression evaluates at a (k, d) matrix of points
in one pass, producing value, gradient and Hessian channels via the jets in
`gfbounds.dual`. Parsed trees are immutable, so evaluation is pure and safe
to run concurrently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dual import (
    UNARY_FUNCTIONS,
    EvalDomainError,
    Jet1,
    Jet2,
    check_domain,
    pow_constant_derivatives,
    pow_constant_value,
)


class ParseError(ValueError):
    """Syntax or name error; `position` is the 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based; source form is x{index+1}


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    lhs: "Node"
    rhs: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class ExprAst:
    """Parsed scalar expression over variables x1..x{arity}."""

    root: Node
    arity: int

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be >= 1")
        _validate_node(self.root, self.arity)


def _validate_node(node: Node, arity: int) -> None:
    if isinstance(node, Const):
        if not np.isfinite(node.value):
            raise ValueError("constant must be finite")
    elif isinstance(node, Var):
        if not 0 <= node.index < arity:
            raise ValueError(f"variable x{node.index + 1} out of range for arity {arity}")
    elif isinstance(node, Neg):
        _validate_node(node.arg, arity)
    elif isinstance(node, BinOp):
        if node.op not in "+-*/^":
            raise ValueError(f"unsupported operator {node.op!r}")
        _validate_node(node.lhs, arity)
        _validate_node(node.rhs, arity)
    elif isinstance(node, Call):
        if node.name not in UNARY_FUNCTIONS:
            raise ValueError(f"unsupported function {node.name!r}")
        _validate_node(node.arg, arity)
    else:
        raise TypeError(f"not an expression node: {node!r}")


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_VAR_RE = re.compile(r"^x(\d+)$")


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "ident" | "op" | "end"
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad_pos = pos + (len(source[pos:]) - len(stripped))
            raise ParseError(f"unexpected character {source[bad_pos]!r}", bad_pos)
        kind = match.lastgroup
        text = match.group(kind)
        tokens.append(_Token(kind, text, match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, arity: int):
        self.tokens = _tokenize(source)
        self.i = 0
        self.arity = arity

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}", tok.pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            node = BinOp("^", node, self.factor())
        return node

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            follow = self.peek()
            if follow.kind == "op" and follow.text == "(":
                if tok.text not in UNARY_FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.pos)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Call(tok.text, arg)
            var = _VAR_RE.match(tok.text)
            if var is None:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.pos)
            index = int(var.group(1))
            if not 1 <= index <= self.arity:
                raise ParseError(
                    f"variable x{index} out of range for arity {self.arity}", tok.pos
                )
            return Var(index - 1)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError("expected a number, variable or '('", tok.pos)


def parse_expr(source: str, arity: int) -> ExprAst:
    """Parse one scalar expression over variables x1..x{arity}."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    if arity < 1:
        raise ValueError("arity must be >= 1")
    return ExprAst(_Parser(source, arity).parse(), arity)


def to_source(ast: ExprAst) -> str:
    """Serialize to a fully parenthesized form that reparses to an
    identical tree."""
    return _format(ast.root)


def _format(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{_format(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_format(node.lhs)} {node.op} {_format(node.rhs)})"
    if isinstance(node, Call):
        return f"{node.name}({_format(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Node, replacements: dict[int, Node]) -> Node:
    """Replace variables by subtrees (indices are 0-based)."""
    if isinstance(node, Const):
        return node
    if isinstance(node, Var):
        return replacements.get(node.index, node)
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, replacements))
    if isinstance(node, BinOp):
        return BinOp(
            node.op,
            substitute(node.lhs, replacements),
            substitute(node.rhs, replacements),
        )
    if isinstance(node, Call):
        return Call(node.name, substitute(node.arg, replacements))
    raise TypeError(f"not an expression node: {node!r}")


def literal_value(node: Node) -> Optional[float]:
    """Value of a literal (constant or negated constant), else None."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg):
        inner = literal_value(node.arg)
        return None if inner is None else -inner
    return None


@dataclass(frozen=True)
class VectorFunction:
    """Vector-valued map given componentwise by expressions of equal arity."""

    components: tuple[ExprAst, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a vector function needs at least one component")
        arity = comps[0].arity
        if any(c.arity != arity for c in comps):
            raise ValueError("all components must share the same arity")
        object.__setattr__(self, "components", comps)

    @classmethod
    def parse(cls, sources, arity: int) -> "VectorFunction":
        return cls(tuple(parse_expr(s, arity) for s in sources))

    @property
    def in_dim(self) -> int:
        return self.components[0].arity

    @property
    def out_dim(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class Dual2:
    """Value, gradient and (exactly symmetric) Hessian of one component at
    one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def _eval_value_node(node: Node, pts: np.ndarray) -> np.ndarray:
    k = pts.shape[0]
    if isinstance(node, Const):
        return np.full(k, node.value)
    if isinstance(node, Var):
        return pts[:, node.index].copy()
    if isinstance(node, Neg):
        return -_eval_value_node(node.arg, pts)
    if isinstance(node, BinOp):
        if node.op == "^":
            base = _eval_value_node(node.lhs, pts)
            exp_lit = literal_value(node.rhs)
            if exp_lit is not None:
                return pow_constant_value(base, float(exp_lit))
            exponent = _eval_value_node(node.rhs, pts)
            if np.any(base <= 0.0):
                raise EvalDomainError("power with non-constant exponent needs a positive base")
            return np.exp(exponent * np.log(base))
        lhs = _eval_value_node(node.lhs, pts)
        rhs = _eval_value_node(node.rhs, pts)
        if node.op == "+":
            return lhs + rhs
        if node.op == "-":
            return lhs - rhs
        if node.op == "*":
            return lhs * rhs
        return lhs / rhs
    if isinstance(node, Call):
        arg = _eval_value_node(node.arg, pts)
        check_domain(node.name, arg, differentiating=False)
        return UNARY_FUNCTIONS[node.name][0](arg)[0]
    raise TypeError(f"not an expression node: {node!r}")


def _eval_jet_node(node: Node, pts: np.ndarray, cls):
    k, d = pts.shape
    if isinstance(node, Const):
        return cls.constant(node.value, k, d)
    if isinstance(node, Var):
        return cls.variable(pts, node.index)
    if isinstance(node, Neg):
        return -_eval_jet_node(node.arg, pts, cls)
    if isinstance(node, BinOp):
        if node.op == "^":
            base = _eval_jet_node(node.lhs, pts, cls)
            exp_lit = literal_value(node.rhs)
            if exp_lit is not None:
                f0, f1, f2 = pow_constant_derivatives(base.val, float(exp_lit))
                if cls is Jet1:
                    return base.chain(f0, f1)
                return base.chain(f0, f1, f2)
            exponent = _eval_jet_node(node.rhs, pts, cls)
            if np.any(base.val <= 0.0):
                raise EvalDomainError("power with non-constant exponent needs a positive base")
            log_f, log_f1, log_f2 = UNARY_FUNCTIONS["log"][0](base.val)
            log_base = (
                base.chain(log_f, log_f1)
                if cls is Jet1
                else base.chain(log_f, log_f1, log_f2)
            )
            product = exponent * log_base
            exp_f, exp_f1, exp_f2 = UNARY_FUNCTIONS["exp"][0](product.val)
            if cls is Jet1:
                return product.chain(exp_f, exp_f1)
            return product.chain(exp_f, exp_f1, exp_f2)
        lhs = _eval_jet_node(node.lhs, pts, cls)
        rhs = _eval_jet_node(node.rhs, pts, cls)
        if node.op == "+":
            return lhs + rhs
        if node.op == "-":
            return lhs - rhs
        if node.op == "*":
            return lhs * rhs
        return lhs / rhs
    if isinstance(node, Call):
        arg = _eval_jet_node(node.arg, pts, cls)
        check_domain(node.name, arg.val, differentiating=True)
        f0, f1, f2 = UNARY_FUNCTIONS[node.name][0](arg.val)
        if cls is Jet1:
            return arg.chain(f0, f1)
        return arg.chain(f0, f1, f2)
    raise TypeError(f"not an expression node: {node!r}")


def _as_points(fn: VectorFunction, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError(f"points must be a (k, {fn.in_dim}) matrix, got shape {pts.shape}")
    if pts.shape[1] != fn.in_dim:
        raise ValueError(
            f"point dimension {pts.shape[1]} does not match input dimension {fn.in_dim}"
        )
    return pts


def _check_finite(values: np.ndarray, component: int) -> None:
    if not np.all(np.isfinite(values)):
        raise EvalDomainError(f"non-finite result in component {component + 1}")


def eval_value_batch(fn: VectorFunction, points) -> np.ndarray:
    """Evaluate all components at a (k, in_dim) batch; returns (k, out_dim)."""
    pts = _as_points(fn, points)
    out = np.empty((pts.shape[0], fn.out_dim))
    with np.errstate(all="ignore"):
        for j, comp in enumerate(fn.components):
            try:
                vals = _eval_value_node(comp.root, pts)
            except EvalDomainError as exc:
                raise EvalDomainError(f"component {j + 1}: {exc}") from exc
            _check_finite(vals, j)
            out[:, j] = vals
    return out


def eval_jacobian_batch(fn: VectorFunction, points):
    """Values and Jacobians at a batch: (k, out_dim) and (k, out_dim, in_dim)."""
    pts = _as_points(fn, points)
    k = pts.shape[0]
    vals = np.empty((k, fn.out_dim))
    jac = np.empty((k, fn.out_dim, fn.in_dim))
    with np.errstate(all="ignore"):
        for j, comp in enumerate(fn.components):
            try:
                jet = _eval_jet_node(comp.root, pts, Jet1)
            except EvalDomainError as exc:
                raise EvalDomainError(f"component {j + 1}: {exc}") from exc
            _check_finite(jet.val, j)
            vals[:, j] = jet.val
            if jet.grad is None:
                jac[:, j] = 0.0
            else:
                _check_finite(jet.grad, j)
                jac[:, j] = jet.grad
    return vals, jac


def eval_dual2_batch(fn: VectorFunction, points):
    """Values, Jacobians and Hessians at a batch; Hessians are
    (k, out_dim, in_dim, in_dim) and bitwise symmetric."""
    pts = _as_points(fn, points)
    k, d = pts.shape
    vals = np.empty((k, fn.out_dim))
    jac = np.empty((k, fn.out_dim, d))
    hess = np.empty((k, fn.out_dim, d, d))
    with np.errstate(all="ignore"):
        for j, comp in enumerate(fn.components):
            try:
                jet = _eval_jet_node(comp.root, pts, Jet2)
            except EvalDomainError as exc:
                raise EvalDomainError(f"component {j + 1}: {exc}") from exc
            _check_finite(jet.val, j)
            vals[:, j] = jet.val
            if jet.grad is None:
                jac[:, j] = 0.0
            else:
                _check_finite(jet.grad, j)
                jac[:, j] = jet.grad
            if jet.hess is None:
                hess[:, j] = 0.0
            else:
                _check_finite(jet.hess, j)
                hess[:, j] = jet.hess
    return vals, jac, hess


def eval_value(fn: VectorFunction, point) -> np.ndarray:
    """Evaluate at a single point (length in_dim); returns (out_dim,)."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    return eval_value_batch(fn, point[None, :])[0]


def eval_dual2(fn: VectorFunction, point) -> list[Dual2]:
    """Value, gradient and Hessian of each component at a single point."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    vals, jac, hess = eval_dual2_batch(fn, point[None, :])
    return [
        Dual2(float(vals[0, j]), jac[0, j].copy(), hess[0, j].copy())
        for j in range(fn.out_dim)
    ]
