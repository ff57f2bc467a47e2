"""Small arithmetic-expression language for potentials and Hamiltonians.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Expressions evaluate elementwise on numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

VARIABLES = ("x1", "x2", "p1", "p2", "u", "lam")
CONSTANTS = {"pi": np.pi}
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "sqrt": (1, None),
    "tanh": (1, np.tanh),
    "sinh": (1, np.sinh),
    "cosh": (1, np.cosh),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


class ParseError(ValueError):
    def __init__(self, message: str, position: int, source: str):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class EvalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, env):
        return self.value

    def to_source(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    name: str

    def eval(self, env):
        if self.name in CONSTANTS:
            return CONSTANTS[self.name]
        try:
            return env[self.name]
        except KeyError:
            raise EvalError(f"variable {self.name!r} not bound") from None

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    operand: object

    def eval(self, env):
        return -self.operand.eval(env)

    def to_source(self):
        return f"(-{self.operand.to_source()})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvalError(f"division by zero in {self.to_source()}")
            return a / b
        # power
        a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        bad = (a_arr < 0) & (b_arr != np.round(b_arr))
        if np.any(bad):
            raise EvalError(f"fractional power of a negative number in {self.to_source()}")
        if np.any((a_arr == 0) & (b_arr < 0)):
            raise EvalError(f"division by zero in {self.to_source()}")
        out = np.power(a_arr, b_arr)
        return out if out.ndim else float(out)

    def to_source(self):
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def eval(self, env):
        vals = [a.eval(env) for a in self.args]
        if self.name == "sqrt":
            if np.any(np.asarray(vals[0]) < 0):
                raise EvalError(f"square root of a negative number in {self.to_source()}")
            return np.sqrt(vals[0])
        return FUNCTIONS[self.name][1](*vals)

    def to_source(self):
        return f"{self.name}({', '.join(a.to_source() for a in self.args)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if not m:
            start = len(source) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[start]!r}", start, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        kind, text, pos = self.peek()
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected {expected}, found {found}", pos, self.source)

    def expect(self, text: str):
        if self.peek()[1] != text or self.peek()[0] != "op":
            self.fail(repr(text))
        self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("end of input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[text][0]
                if len(args) != arity:
                    raise ParseError(f"{text} takes {arity} argument(s), got {len(args)}", pos, self.source)
                return Call(text, tuple(args))
            if text in VARIABLES or text in CONSTANTS:
                return Var(text)
            raise ParseError(f"unknown identifier {text!r}", pos, self.source)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail("a number, name or '('")


def parse_expr(source: str):
    """Parse ``source`` into an immutable expression tree."""
    return _Parser(source).parse()


def free_variables(node) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= free_variables(a)
        return out
    return set()


def evaluate(node, **env):
    """Evaluate with numpy broadcasting; overflow, invalid and divide-by-zero become EvalError."""
    with np.errstate(all="raise", under="ignore"):  # underflow to 0 is harmless
        try:
            return node.eval(env)
        except FloatingPointError as exc:
            raise EvalError(f"{exc} in {node.to_source()}") from exc
