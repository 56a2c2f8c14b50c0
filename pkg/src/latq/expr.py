"""Small arithmetic-expression layer: parsing, evaluation, differentiation.

Grammar (whitespace-insensitive)::

    expr     = term { ("+" | "-") term } ;
    term     = factor { ("*" | "/") factor } ;
    factor   = base [ "^" integer ] ;
    base     = number | symbol | func "(" expr ")" | "(" expr ")" | "-" base ;
    func     = "sqrt" | "sin" | "cos" | "exp" | "conj" ;
    symbol   = "A" digits | "chi" digits | "alpha" | identifier ;

Exponents are integers only, so differentiation and the affine check stay
exact.  Note that per the grammar unary minus binds inside the power:
``-A1^2`` parses as ``(-A1)^2``.

Symbols named ``A<k>`` are action coordinates, ``chi<k>`` are the per-axis
shift symbols (``conj(chi<k>)`` is the raising partner), ``alpha`` is the
configuration angle of 1-dof potential models, and any other identifier is
a named model constant resolved at evaluation time.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass

from .errors import EvaluationError, ExpressionError, ValidationError

FUNCTIONS = ("sqrt", "sin", "cos", "exp", "conj")


# --------------------------------------------------------------------------
# AST nodes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: complex  # real literals are stored with zero imaginary part


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


Expression = (Num, Sym, Neg, Bin, Pow, Call)


def action_index(name):
    """Axis number of an action symbol ``A<k>``, else None."""
    m = re.fullmatch(r"A(\d+)", name)
    return int(m.group(1)) if m else None


def chi_index(name):
    """Axis number of a shift symbol ``chi<k>``, else None."""
    m = re.fullmatch(r"chi(\d+)", name)
    return int(m.group(1)) if m else None


# --------------------------------------------------------------------------
# Tokenizer / recursive-descent parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>>=|<=|[-+*/^()=]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace before reporting
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value, expected):
        kind, text, pos = self.peek()
        if text != value:
            raise ExpressionError(f"unexpected {text or 'end of input'!r}", pos, expected)
        return self.next()

    def fail(self, expected):
        kind, text, pos = self.peek()
        what = repr(text) if text else "end of input"
        raise ExpressionError(f"unexpected {what}", pos, expected)

    # grammar rules ---------------------------------------------------------

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            node = Bin(op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.peek()[1] == "^":
            self.next()
            node = Pow(node, self.integer())
        return node

    def integer(self):
        sign = 1
        if self.peek()[1] == "-":
            self.next()
            sign = -1
        kind, text, pos = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", text):
            self.fail("an integer exponent")
        self.next()
        return sign * int(text)

    def base(self):
        kind, text, pos = self.peek()
        if text == "-":
            self.next()
            return Neg(self.base())
        if text == "(":
            self.next()
            node = self.expr()
            self.expect(")", "')'")
            return node
        if kind == "num":
            self.next()
            return Num(complex(float(text)))
        if kind == "ident":
            self.next()
            if text in FUNCTIONS:
                self.expect("(", "'(' after function name")
                arg = self.expr()
                self.expect(")", "')'")
                return Call(text, arg)
            return Sym(text)
        self.fail("a number, symbol, or '('")


def parse_expression(text):
    """Parse ``text`` into an AST.  Raises ExpressionError with a 1-based
    character position on malformed input."""
    p = _Parser(text)
    node = p.expr()
    kind, tok, pos = p.peek()
    if kind != "end":
        raise ExpressionError(f"unexpected {tok!r}", pos, "end of input")
    return node


@dataclass(frozen=True)
class Constraint:
    """Affine inequality ``lhs cmp rhs`` over action symbols; ``=`` is kept
    as written and treated as a pair of opposing inequalities."""

    lhs: object
    cmp: str  # one of >= <= =
    rhs: object
    text: str


def parse_constraint(text):
    for cmp in (">=", "<=", "="):
        if cmp in text:
            left, _, right = text.partition(cmp)
            return Constraint(parse_expression(left), cmp, parse_expression(right), text)
    raise ExpressionError("constraint lacks a comparison operator", len(text) + 1,
                          "'>=', '<=' or '='")


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def eval_expression(e, bindings):
    """Evaluate ``e`` with ``bindings`` mapping symbol names to numbers.

    Real inputs give real outputs for real-closed expressions; sqrt of a
    negative real and division by zero are reported as EvaluationError.
    """
    v = _eval(e, bindings)
    if isinstance(v, complex) and v.imag == 0.0:
        return v.real
    return v


def _eval(e, bindings):
    if isinstance(e, Num):
        v = e.value
        return v.real if v.imag == 0.0 else v
    if isinstance(e, Sym):
        try:
            return bindings[e.name]
        except KeyError:
            raise EvaluationError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, bindings)
    if isinstance(e, Bin):
        a = _eval(e.left, bindings)
        b = _eval(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        try:
            return a / b
        except ZeroDivisionError:
            raise EvaluationError("division by zero") from None
    if isinstance(e, Pow):
        base = _eval(e.base, bindings)
        try:
            return base ** e.exponent
        except ZeroDivisionError:
            raise EvaluationError("zero raised to a negative power") from None
    if isinstance(e, Call):
        a = _eval(e.arg, bindings)
        if e.func == "conj":
            return a.conjugate() if isinstance(a, complex) else a
        if isinstance(a, complex):
            return getattr(cmath, e.func)(a)
        if e.func == "sqrt":
            if a < 0.0:
                raise EvaluationError(f"sqrt of negative value {a!r}")
            return math.sqrt(a)
        return getattr(math, e.func)(a)
    raise TypeError(f"not an expression node: {e!r}")


def free_symbols(e):
    """Set of symbol names appearing in ``e``."""
    out = set()
    _walk_symbols(e, out)
    return out


def _walk_symbols(e, out):
    if isinstance(e, Sym):
        out.add(e.name)
    elif isinstance(e, Neg):
        _walk_symbols(e.arg, out)
    elif isinstance(e, Bin):
        _walk_symbols(e.left, out)
        _walk_symbols(e.right, out)
    elif isinstance(e, Pow):
        _walk_symbols(e.base, out)
    elif isinstance(e, Call):
        _walk_symbols(e.arg, out)


# --------------------------------------------------------------------------
# Smart constructors with local simplification (constant folding, 0/1
# absorption) -- used by differentiate so derivatives stay readable.
# --------------------------------------------------------------------------

def _num(v):
    return Num(complex(v))


def _is_num(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def s_add(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a.value + b.value)
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    return Bin("+", a, b)


def s_sub(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a.value - b.value)
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return s_neg(b)
    return Bin("-", a, b)


def s_mul(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a.value * b.value)
    if _is_num(a, 0) or _is_num(b, 0):
        return _num(0)
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    return Bin("*", a, b)


def s_div(a, b):
    if _is_num(b, 1):
        return a
    if _is_num(a, 0) and not _is_num(b, 0):
        return _num(0)
    return Bin("/", a, b)


def s_neg(a):
    if _is_num(a):
        return _num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def s_pow(a, n):
    if n == 0:
        return _num(1)
    if n == 1:
        return a
    if _is_num(a):
        return _num(a.value ** n)
    return Pow(a, n)


def differentiate(e, symbol):
    """Exact symbolic derivative of ``e`` with respect to ``symbol``."""
    if isinstance(e, Num):
        return _num(0)
    if isinstance(e, Sym):
        return _num(1) if e.name == symbol else _num(0)
    if isinstance(e, Neg):
        return s_neg(differentiate(e.arg, symbol))
    if isinstance(e, Bin):
        da = differentiate(e.left, symbol)
        db = differentiate(e.right, symbol)
        if e.op == "+":
            return s_add(da, db)
        if e.op == "-":
            return s_sub(da, db)
        if e.op == "*":
            return s_add(s_mul(da, e.right), s_mul(e.left, db))
        # quotient rule
        num = s_sub(s_mul(da, e.right), s_mul(e.left, db))
        return s_div(num, s_pow(e.right, 2))
    if isinstance(e, Pow):
        du = differentiate(e.base, symbol)
        return s_mul(s_mul(_num(e.exponent), s_pow(e.base, e.exponent - 1)), du)
    if isinstance(e, Call):
        du = differentiate(e.arg, symbol)
        if e.func == "sqrt":
            return s_div(du, s_mul(_num(2), Call("sqrt", e.arg)))
        if e.func == "sin":
            return s_mul(Call("cos", e.arg), du)
        if e.func == "cos":
            return s_neg(s_mul(Call("sin", e.arg), du))
        if e.func == "exp":
            return s_mul(Call("exp", e.arg), du)
        raise ValidationError(f"non-differentiable node: {e.func}(...)")
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Rendering (inverse of parse_expression up to structural identity)
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "pow": 4, "atom": 5}


def render(e):
    """Render ``e`` as text that reparses to a structurally identical AST."""
    return _render(e, 0)


def _fmt_number(v):
    if v.imag == 0.0:
        r = v.real
        if r == int(r) and abs(r) < 1e15:
            return repr(int(r))
        return repr(r)
    # complex literals cannot appear in parsed input; render for debugging
    return f"({v.real!r}+{v.imag!r}j)"


def _render(e, parent_prec):
    if isinstance(e, Num):
        if e.value.imag == 0.0 and e.value.real < 0:
            return _paren(f"-{_fmt_number(-e.value)}", _PREC["neg"], parent_prec)
        return _fmt_number(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_render(e.arg, 0)})"
    if isinstance(e, Neg):
        return _paren(f"-{_render(e.arg, _PREC['neg'])}", _PREC["neg"], parent_prec)
    if isinstance(e, Pow):
        base = _render(e.base, _PREC["pow"] + 1)
        return _paren(f"{base}^{e.exponent}", _PREC["pow"], parent_prec)
    if isinstance(e, Bin):
        prec = _PREC[e.op]
        left = _render(e.left, prec)
        right = _render(e.right, prec + 1)  # left-associative
        return _paren(f"{left} {e.op} {right}", prec, parent_prec)
    raise TypeError(f"not an expression node: {e!r}")


def _paren(text, prec, parent_prec):
    return f"({text})" if prec < parent_prec else text


# --------------------------------------------------------------------------
# Structural analysis: affinity in action symbols, conjugation of
# real-context coefficients, first-degree decomposition in shift symbols.
# --------------------------------------------------------------------------

_NONAFFINE = 10 ** 9  # sentinel "unboundedly nonlinear" degree


def degree_in_actions(e):
    """Syntactic total degree of ``e`` in the action symbols A1, A2, ...

    Constants and other identifiers count as degree 0.  Nonpolynomial
    dependence on an action (inside a function, in a denominator, under a
    negative power) reports the _NONAFFINE sentinel.
    """
    if isinstance(e, Num):
        return 0
    if isinstance(e, Sym):
        return 1 if action_index(e.name) is not None else 0
    if isinstance(e, Neg):
        return degree_in_actions(e.arg)
    if isinstance(e, Bin):
        dl = degree_in_actions(e.left)
        dr = degree_in_actions(e.right)
        if e.op in "+-":
            return max(dl, dr)
        if e.op == "*":
            return min(dl + dr, _NONAFFINE)
        return dl if dr == 0 else _NONAFFINE
    if isinstance(e, Pow):
        d = degree_in_actions(e.base)
        if d == 0:
            return 0
        if e.exponent < 0:
            return _NONAFFINE
        return min(d * e.exponent, _NONAFFINE)
    if isinstance(e, Call):
        return 0 if degree_in_actions(e.arg) == 0 else _NONAFFINE
    raise TypeError(f"not an expression node: {e!r}")


def is_affine_in_actions(e):
    return degree_in_actions(e) <= 1


def conj_expr(e):
    """Structural complex conjugate for coefficient expressions.

    Symbols are real-valued in this engine (actions, angles, named real
    constants), so conjugation only flips literal constants.
    """
    if isinstance(e, Num):
        return Num(e.value.conjugate())
    if isinstance(e, Sym):
        return e
    if isinstance(e, Neg):
        return Neg(conj_expr(e.arg))
    if isinstance(e, Bin):
        return Bin(e.op, conj_expr(e.left), conj_expr(e.right))
    if isinstance(e, Pow):
        return Pow(conj_expr(e.base), e.exponent)
    if isinstance(e, Call):
        if e.func == "conj":
            return e.arg
        return Call(e.func, conj_expr(e.arg))
    raise TypeError(f"not an expression node: {e!r}")


def shift_linear_parts(e):
    """Decompose ``e`` as  F0(A) + sum_k [ Fk(A)*chi_k + Gk(A)*conj(chi_k) ].

    Returns a dict with key None for F0 and keys ("lo", k) / ("hi", k) for
    the coefficients of chi_k / conj(chi_k).  Raises ValidationError if the
    expression is not first-degree in the shift symbols (products of two
    shift factors, shift symbols inside functions or denominators, powers
    other than 1).
    """
    parts = _parts(e)
    return parts


def _parts_scalar(parts, what):
    if any(key is not None for key in parts):
        raise ValidationError(
            f"observable must be first-degree in shift symbols: {what}")
    return parts.get(None, _num(0))


def _merge(a, b, op):
    out = dict(a)
    for key, coeff in b.items():
        if key in out:
            out[key] = op(out[key], coeff)
        else:
            out[key] = coeff if op is s_add else s_neg(coeff)
    return out


def _parts(e):
    if isinstance(e, Num):
        return {None: e}
    if isinstance(e, Sym):
        k = chi_index(e.name)
        if k is not None:
            return {("lo", k): _num(1)}
        return {None: e}
    if isinstance(e, Neg):
        return {key: s_neg(c) for key, c in _parts(e.arg).items()}
    if isinstance(e, Call):
        if e.func == "conj":
            inner = _parts(e.arg)
            out = {}
            for key, coeff in inner.items():
                if key is None:
                    out_key = None
                elif key[0] == "lo":
                    out_key = ("hi", key[1])
                else:
                    out_key = ("lo", key[1])
                out[out_key] = conj_expr(coeff)
            return out
        arg = _parts_scalar(_parts(e.arg), f"shift symbol inside {e.func}()")
        return {None: Call(e.func, arg)}
    if isinstance(e, Bin):
        left = _parts(e.left)
        right = _parts(e.right)
        if e.op == "+":
            return _merge(left, right, s_add)
        if e.op == "-":
            return _merge(left, right, s_sub)
        if e.op == "*":
            lchi = any(k is not None for k in left)
            rchi = any(k is not None for k in right)
            if lchi and rchi:
                raise ValidationError(
                    "observable must be first-degree in shift symbols: "
                    "product of two shift factors")
            scal, lin = (left, right) if rchi else (right, left)
            s = scal.get(None, _num(0))
            return {key: s_mul(s, c) for key, c in lin.items()}
        # division: denominator must be shift-free
        den = _parts_scalar(right, "shift symbol in a denominator")
        return {key: s_div(c, den) for key, c in left.items()}
    if isinstance(e, Pow):
        base = _parts(e.base)
        if all(k is None for k in base):
            return {None: s_pow(base.get(None, _num(0)), e.exponent)}
        if e.exponent == 1:
            return base
        if e.exponent == 0:
            return {None: _num(1)}
        raise ValidationError(
            "observable must be first-degree in shift symbols: "
            f"shift factor raised to power {e.exponent}")
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Compilation to a vectorizable callable (used by quadrature/grid scans).
# --------------------------------------------------------------------------

def compile_expression(e, varnames, constants=None):
    """Build ``f(*arrays) -> array`` evaluating ``e`` with numpy semantics.

    ``varnames`` lists the symbols supplied positionally; every other
    symbol must appear in ``constants``.  Intended for real-valued
    expressions on grids (sqrt of a negative argument yields nan rather
    than an error; callers clamp first where that matters).
    """
    import numpy as np

    constants = constants or {}
    missing = free_symbols(e) - set(varnames) - set(constants)
    if missing:
        raise EvaluationError(f"unbound symbol {sorted(missing)[0]!r}")

    funcs = {"sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
             "exp": np.exp, "conj": np.conjugate}

    def build(node):
        if isinstance(node, Num):
            v = node.value.real if node.value.imag == 0.0 else node.value
            return lambda env: v
        if isinstance(node, Sym):
            if node.name in constants:
                v = constants[node.name]
                return lambda env: v
            i = varnames.index(node.name)
            return lambda env: env[i]
        if isinstance(node, Neg):
            f = build(node.arg)
            return lambda env: -f(env)
        if isinstance(node, Bin):
            fl, fr = build(node.left), build(node.right)
            op = node.op
            if op == "+":
                return lambda env: fl(env) + fr(env)
            if op == "-":
                return lambda env: fl(env) - fr(env)
            if op == "*":
                return lambda env: fl(env) * fr(env)
            return lambda env: fl(env) / fr(env)
        if isinstance(node, Pow):
            f = build(node.base)
            n = node.exponent
            return lambda env: f(env) ** n
        if isinstance(node, Call):
            f = build(node.arg)
            g = funcs[node.func]
            return lambda env: g(f(env))
        raise TypeError(f"not an expression node: {node!r}")

    body = build(e)

    def fn(*arrays):
        return body(arrays)

    return fn
