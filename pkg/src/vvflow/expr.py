"""Small expression language for user forcing terms.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'x' | 'y' | 'z' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp'

Expressions compile to a tree evaluated on numpy arrays of points. Trees
differentiate symbolically, so parsed fields come with exact gradients.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .fespaces import AnalyticField

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_EVAL_FUNCS = dict(FUNCS, log=np.log)  # log only appears in derivatives of x^y
VARS = {"x": 0, "y": 1, "z": 2}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_]\w*)|(\S))")


class ExpressionError(ValueError):
    """Syntax error with the character offset where parsing stopped."""

    def __init__(self, message: str, position: int, source: str = ""):
        super().__init__(f"{message} at position {position}" + (f" in {source!r}" if source else ""))
        self.position = position


@dataclass(frozen=True)
class Node:
    op: str  # 'num', 'var', 'neg', 'call', or a binary operator
    args: tuple = ()
    value: float | int | str | None = None

    def __call__(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(self._eval(p), (len(p),)).astype(float)

    def _eval(self, p):
        op = self.op
        if op == "num":
            return np.float64(self.value)
        if op == "var":
            return p[:, self.value]
        if op == "neg":
            return -self.args[0]._eval(p)
        if op == "call":
            return _EVAL_FUNCS[self.value](self.args[0]._eval(p))
        a, b = self.args[0]._eval(p), self.args[1]._eval(p)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return np.power(a, b)

    def diff(self, var: int) -> "Node":
        """Derivative with respect to coordinate ``var`` (0, 1, 2)."""
        op, a = self.op, self.args
        if op == "num":
            return _num(0.0)
        if op == "var":
            return _num(1.0 if self.value == var else 0.0)
        if op == "neg":
            return _neg(a[0].diff(var))
        if op == "call":
            inner, da = a[0], a[0].diff(var)
            outer = {"sin": lambda: Node("call", (inner,), "cos"),
                     "cos": lambda: _neg(Node("call", (inner,), "sin")),
                     "exp": lambda: self,
                     "log": lambda: _bin("/", _num(1.0), inner)}[self.value]()
            return _bin("*", outer, da)
        da, db = a[0].diff(var), a[1].diff(var)
        if op in "+-":
            return _bin(op, da, db)
        if op == "*":
            return _bin("+", _bin("*", da, a[1]), _bin("*", a[0], db))
        if op == "/":
            return _bin("/", _bin("-", _bin("*", da, a[1]), _bin("*", a[0], db)),
                        _bin("^", a[1], _num(2.0)))
        # a^b: b a^(b-1) a' + a^b log(a) b'
        term = _bin("*", _bin("*", a[1], _bin("^", a[0], _bin("-", a[1], _num(1.0)))), da)
        if _is_zero(db):
            return term
        return _bin("+", term, _bin("*", _bin("*", self, Node("call", (a[0],), "log")), db))

    def __str__(self):
        if self.op == "num":
            return repr(self.value)
        if self.op == "var":
            return "xyz"[self.value]
        if self.op == "neg":
            return f"(-{self.args[0]})"
        if self.op == "call":
            return f"{self.value}({self.args[0]})"
        return f"({self.args[0]} {self.op} {self.args[1]})"


def _num(v) -> Node:
    return Node("num", value=float(v))


def _is_zero(n: Node) -> bool:
    return n.op == "num" and n.value == 0.0


def _is_one(n: Node) -> bool:
    return n.op == "num" and n.value == 1.0


def _neg(n: Node) -> Node:
    return _num(-n.value) if n.op == "num" else Node("neg", (n,))


def _bin(op: str, a: Node, b: Node) -> Node:
    """Binary node with folding of the zeros and ones derivatives produce."""
    if a.op == "num" and b.op == "num" and op != "/":
        return _num(Node(op, (a, b))._eval(np.zeros((1, 3))))
    if op == "+":
        if _is_zero(a):
            return b
        if _is_zero(b):
            return a
    elif op == "-":
        if _is_zero(b):
            return a
        if _is_zero(a):
            return _neg(b)
    elif op == "*":
        if _is_zero(a) or _is_zero(b):
            return _num(0.0)
        if _is_one(a):
            return b
        if _is_one(b):
            return a
    elif op == "/" and _is_zero(a):
        return _num(0.0)
    return Node(op, (a, b))


def _tokenize(src: str):
    toks, pos = [], 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:  # only trailing whitespace remains
            break
        num, name, sym = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            toks.append(("num", float(num), start))
        elif name is not None:
            toks.append(("name", name, start))
        else:
            if sym not in "+-*/^()":
                raise ExpressionError(f"unexpected character {sym!r}", start, src)
            toks.append((sym, sym, start))
        pos = m.end()
    toks.append(("end", None, len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        tok = self.toks[self.i]
        if kind is not None and tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExpressionError(f"expected {kind!r}, found {what}", tok[2], self.src)
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected {tok[1]!r}", tok[2], self.src)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = Node(op, (node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = Node(op, (node, self.unary()))
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return Node("neg", (self.unary(),))
        if self.peek()[0] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return Node("^", (base, self.unary()))
        return base

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Node("num", value=val)
        if kind == "name":
            self.take()
            if val in VARS:
                return Node("var", value=VARS[val])
            if val in FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Node("call", (arg,), val)
            raise ExpressionError(f"unknown name {val!r}", pos, self.src)
        if kind == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {what}", pos, self.src)


def parse_expression(src: str) -> Node:
    """Parse one scalar expression in ``x, y, z``."""
    if not src or not src.strip():
        raise ExpressionError("empty expression", 0, src)
    return _Parser(src).parse()


def split_triple(src: str) -> list[str]:
    """Split ``"e1, e2, e3"`` at top-level commas."""
    parts, depth, cur = [], 0, []
    for ch in src:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def parse_vector_expression(src: str) -> AnalyticField:
    """Parse ``"fx, fy, fz"`` into a vector AnalyticField with its gradient."""
    parts = split_triple(src)
    if len(parts) != 3:
        raise ExpressionError(f"expected three comma-separated components, got {len(parts)}", 0, src)
    comps = [parse_expression(p) for p in parts]

    grads = [[c.diff(j) for j in range(3)] for c in comps]

    def value(x):
        return np.stack([c(x) for c in comps], axis=1)

    def grad(x):
        return np.stack([np.stack([d(x) for d in row], axis=1) for row in grads], axis=1)

    return AnalyticField(value, grad, 3)
