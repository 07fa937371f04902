"""Expression language used for constraints and performance metrics.

Grammar (lowest precedence first):

    expr       :: or_expr
    or_expr    :: and_expr (('||' | 'or') and_expr)*
    and_expr   :: not_expr (('&&' | 'and') not_expr)*
    not_expr   :: ('!' | 'not') not_expr
                  comparison
    comparison :: sum (('==' | '!=' | '<' | '<=' | '>' | '>=') sum)?
    sum        :: term (('+' | '-') term)*
    term       :: unary (('*' | '/' | '%') unary)*
    unary      :: '-' unary
                  power
    power      :: atom ('^' unary)?
    atom       :: INT | FLOAT | STRING | IDENT | '(' expr ')'

Semantics follow C conventions on integers: `/` truncates toward zero,
`%` takes the sign of the dividend, and both raise
:class:`~tunescape.errors.EvaluationError` on a zero divisor. `^` is
exponentiation. Integer arithmetic is exact (arbitrary precision); any
float operand promotes the operation to float.

String values participate only in `==` / `!=`. Boolean operators require
boolean operands, and a constraint must be boolean at the top level; both
are enforced statically by :func:`check_types` once the parameter types
are known.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .errors import EvaluationError, ExpressionSyntaxError, ExpressionTypeError

Scalar = Union[int, float, str]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<op>\|\||&&|==|!=|<=|>=|[-+*/%^<>!()])
    """,
    re.VERBOSE,
)

_BOOL_WORDS = {"or": "||", "and": "&&", "not": "!"}


@dataclass(frozen=True)
class Num:
    value: int | float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Str, Var, Unary, Binary]

_COMPARISONS = {"==", "!=", "<", "<=", ">", ">="}
_ARITHMETIC = {"+", "-", "*", "/", "%", "^"}


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos]!r}", source, pos
            )
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "name" and text in _BOOL_WORDS:
                kind, text = "op", _BOOL_WORDS[text]
            tokens.append((kind, text, pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.idx = 0

    @property
    def current(self) -> tuple[str, str, int]:
        return self.tokens[self.idx]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def accept_op(self, *ops: str) -> str | None:
        kind, text, _ = self.current
        if kind == "op" and text in ops:
            self.advance()
            return text
        return None

    def fail(self, expected: str):
        kind, text, pos = self.current
        have = "end of expression" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"expected {expected}, found {have}", self.source, pos)

    def parse(self) -> Node:
        node = self.or_expr()
        if self.current[0] != "end":
            self.fail("end of expression")
        return node

    def or_expr(self) -> Node:
        node = self.and_expr()
        while self.accept_op("||"):
            node = Binary("||", node, self.and_expr())
        return node

    def and_expr(self) -> Node:
        node = self.not_expr()
        while self.accept_op("&&"):
            node = Binary("&&", node, self.not_expr())
        return node

    def not_expr(self) -> Node:
        if self.accept_op("!"):
            return Unary("!", self.not_expr())
        return self.comparison()

    def comparison(self) -> Node:
        node = self.sum()
        op = self.accept_op(*_COMPARISONS)
        if op:
            node = Binary(op, node, self.sum())
        return node

    def sum(self) -> Node:
        node = self.term()
        while True:
            op = self.accept_op("+", "-")
            if not op:
                return node
            node = Binary(op, node, self.term())

    def term(self) -> Node:
        node = self.unary()
        while True:
            op = self.accept_op("*", "/", "%")
            if not op:
                return node
            node = Binary(op, node, self.unary())

    def unary(self) -> Node:
        if self.accept_op("-"):
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.accept_op("^"):
            node = Binary("^", node, self.unary())
        return node

    def atom(self) -> Node:
        kind, text, _ = self.current
        if kind == "int":
            self.advance()
            return Num(int(text))
        if kind == "float":
            self.advance()
            return Num(float(text))
        if kind == "string":
            self.advance()
            return Str(text[1:-1])
        if kind == "name":
            self.advance()
            return Var(text)
        if self.accept_op("("):
            node = self.or_expr()
            if not self.accept_op(")"):
                self.fail("')'")
            return node
        self.fail("a value, identifier or '('")


def parse_expression(source: str) -> Node:
    """Parse ``source`` into an AST, raising on any syntax error."""
    return _Parser(source).parse()


def variables(node: Node) -> set[str]:
    """All identifiers referenced by the expression."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.operand)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    return set()


def check_types(node: Node, var_types: Mapping[str, str], source: str = "") -> str:
    """Infer the expression's type, one of 'int', 'float', 'str', 'bool'.

    ``var_types`` maps identifier names to 'int', 'float' or 'str'.
    Raises :class:`ExpressionTypeError` for unknown identifiers, string
    arithmetic/ordering, numeric-string comparison, or non-boolean
    operands of boolean operators.
    """

    def describe() -> str:
        return f" in {source!r}" if source else ""

    def infer(n: Node) -> str:
        if isinstance(n, Num):
            return "int" if isinstance(n.value, int) else "float"
        if isinstance(n, Str):
            return "str"
        if isinstance(n, Var):
            try:
                return var_types[n.name]
            except KeyError:
                raise ExpressionTypeError(
                    f"unknown identifier '{n.name}'{describe()}"
                ) from None
        if isinstance(n, Unary):
            t = infer(n.operand)
            if n.op == "!":
                if t != "bool":
                    raise ExpressionTypeError(f"'!' needs a boolean operand{describe()}")
                return "bool"
            if t not in ("int", "float"):
                raise ExpressionTypeError(f"unary '-' needs a number{describe()}")
            return t
        assert isinstance(n, Binary)
        lt, rt = infer(n.left), infer(n.right)
        if n.op in ("&&", "||"):
            if lt != "bool" or rt != "bool":
                raise ExpressionTypeError(
                    f"'{n.op}' needs boolean operands{describe()}"
                )
            return "bool"
        if n.op in _COMPARISONS:
            if lt == "bool" or rt == "bool":
                raise ExpressionTypeError(
                    f"cannot compare boolean results with '{n.op}'{describe()}"
                )
            if (lt == "str") != (rt == "str"):
                raise ExpressionTypeError(
                    f"cannot compare string and number{describe()}"
                )
            if lt == "str" and n.op not in ("==", "!="):
                raise ExpressionTypeError(
                    f"strings support only '==' and '!='{describe()}"
                )
            return "bool"
        # arithmetic
        if lt not in ("int", "float") or rt not in ("int", "float"):
            raise ExpressionTypeError(
                f"'{n.op}' needs numeric operands{describe()}"
            )
        return "int" if lt == "int" and rt == "int" else "float"

    return infer(node)


def _tdiv(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero")
    if isinstance(a, int) and isinstance(b, int):
        q = a // b
        if q < 0 and q * b != a:
            q += 1  # truncate toward zero
        return q
    return a / b


def _tmod(a, b):
    if b == 0:
        raise ZeroDivisionError("modulo by zero")
    if isinstance(a, int) and isinstance(b, int):
        return a - _tdiv(a, b) * b  # remainder keeps the dividend's sign
    return math.fmod(a, b)


def to_python_source(node: Node, name_map: Mapping[str, str]) -> str:
    """Render the AST as a Python expression over the names in ``name_map``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Str):
        return repr(node.value)
    if isinstance(node, Var):
        return name_map[node.name]
    if isinstance(node, Unary):
        inner = to_python_source(node.operand, name_map)
        return f"(not {inner})" if node.op == "!" else f"(-{inner})"
    assert isinstance(node, Binary)
    left = to_python_source(node.left, name_map)
    right = to_python_source(node.right, name_map)
    if node.op == "/":
        return f"_tdiv({left}, {right})"
    if node.op == "%":
        return f"_tmod({left}, {right})"
    if node.op == "^":
        return f"({left} ** {right})"
    if node.op == "&&":
        return f"({left} and {right})"
    if node.op == "||":
        return f"({left} or {right})"
    return f"({left} {node.op} {right})"


def compile_expression(node: Node, names: list[str]) -> Callable[..., Scalar]:
    """Compile the AST into a positional function of the given names.

    The returned callable takes one positional argument per name, in
    order. Compilation goes through Python bytecode for speed; only
    nodes produced by :func:`parse_expression` are rendered, so no
    untrusted text reaches ``eval``.
    """
    name_map = {name: f"_v{i}" for i, name in enumerate(names)}
    args = ", ".join(name_map[name] for name in names)
    body = to_python_source(node, name_map)
    code = f"lambda {args}: {body}" if args else f"lambda: {body}"
    return eval(code, {"__builtins__": {}, "_tdiv": _tdiv, "_tmod": _tmod})


def evaluate(node: Node, env: Mapping[str, Scalar]):
    """Tree-walking evaluation against a name->value mapping.

    Slower than :func:`compile_expression` but handy for one-off use.
    """
    fn = compile_expression(node, sorted(variables(node)))
    try:
        return fn(*(env[name] for name in sorted(variables(node))))
    except ZeroDivisionError as e:
        raise EvaluationError(str(e)) from None
