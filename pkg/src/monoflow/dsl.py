"""Textual language for monotone-quantity programs.

A program is a sequence of ``let`` bindings and ``check`` statements::

    let u = heat(A=[[1]], mix=[(1.0, [0.0])]);
    let v = gmean(1/2: L=[[1]] A=[[1]] : u, 1/2: L=[[1]] A=[[1]] : shift(u,[1.0]));
    check v t=[0.1, 2.0, 40] box=[[-8, 8, 201]];

Numeric literals are kept as exact rationals all the way to node
construction, so exponent identities (1/p1 + 1/p2 = 1 + 1/p and friends)
are checked exactly; decimal literals are exact too (0.5 is 1/2).
Matrices are row-major; dimensions are always inferred.  Check weights name
built-in subharmonic weights (``one``, ``cosh_1``, ``cosh_2``, ...): general
expressions are time-dependent and cannot serve as static weights.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import List, Optional

from .errors import (
    DimensionMismatch,
    EvalRangeError,
    LowerError,
    ParseError,
)
from .nodes import (
    Node,
    compose_linear,
    convolve_power,
    geom_mean,
    group_average,
    harmonic_sum,
    heat_atom,
    aniso_geom_mean,
    lq_norm,
    positive_sum,
    power,
    tensor_product,
    time_power,
)
from .quad import builtin_weight

RESERVED = {
    "let", "check", "heat", "sum", "tensor", "compose", "pow", "wgm", "hsum",
    "lqnorm", "gmean", "conv", "gavg", "tpow", "shift",
    "t", "box", "tol", "weight", "A", "mix", "t0", "L", "p", "p1", "p2",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()\[\],:;=/-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    type: str  # number | ident | punct | eof
    value: str
    line: int
    col: int


def _tokenize(source: str) -> List[Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError("unexpected character", line, col,
                             found=source[pos])
        text = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class ENum:
    value: Fraction


@dataclass(frozen=True)
class EHeat:
    matrix: tuple
    mix: tuple  # ((weight, center-vector), ...)
    t0: Fraction


@dataclass(frozen=True)
class ESum:
    terms: tuple  # ((coeff, expr), ...)


@dataclass(frozen=True)
class ETensor:
    left: object
    right: object


@dataclass(frozen=True)
class ECompose:
    matrix: tuple
    child: object


@dataclass(frozen=True)
class EPow:
    p: Fraction
    child: object


@dataclass(frozen=True)
class EWgm:
    terms: tuple


@dataclass(frozen=True)
class EHsum:
    left: object
    right: object


@dataclass(frozen=True)
class ELqnorm:
    p: Fraction
    q: Fraction
    left: object
    right: object


@dataclass(frozen=True)
class EGmean:
    terms: tuple  # ((p, L-matrix, A-matrix, expr), ...)


@dataclass(frozen=True)
class EConv:
    p: Fraction
    p1: Fraction
    p2: Fraction
    left: object
    right: object


@dataclass(frozen=True)
class EGavg:
    k: int
    child: object


@dataclass(frozen=True)
class ETpow:
    beta: Fraction
    child: object


@dataclass(frozen=True)
class EShift:
    child: object
    vector: tuple


@dataclass(frozen=True)
class ERef:
    name: str


@dataclass(frozen=True)
class CheckOptions:
    t0: Fraction
    t1: Fraction
    tsteps: int
    box: tuple  # ((lo, hi, count), ...)
    tol: Optional[Fraction] = None
    weight: Optional[str] = None


@dataclass(frozen=True)
class SLet:
    name: str
    expr: object
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SCheck:
    name: str
    options: CheckOptions
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Program:
    statements: tuple

    @property
    def checks(self):
        return [s for s in self.statements if isinstance(s, SCheck)]


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def _fail(self, expected):
        t = self.cur
        found = t.value if t.type != "eof" else "end of input"
        raise ParseError("syntax error", t.line, t.col,
                         expected=expected, found=found)

    def take(self, value=None, type_=None, expected=None):
        t = self.cur
        if value is not None and t.value != value:
            self._fail(expected or (repr(value),))
        if type_ is not None and t.type != type_:
            self._fail(expected or (type_,))
        self.i += 1
        return t

    def accept(self, value) -> bool:
        if self.cur.value == value:
            self.i += 1
            return True
        return False

    # -- terminals --

    def number(self) -> Fraction:
        neg = self.accept("-")
        t = self.take(type_="number", expected=("a number",))
        if "." in t.value or "e" in t.value or "E" in t.value:
            val = Fraction(Decimal(t.value))
        else:
            val = Fraction(int(t.value))
        if self.cur.value == "/" and self.tokens[self.i + 1].type == "number":
            self.i += 1
            den = self.take(type_="number", expected=("a number",))
            if "." in den.value or "e" in den.value.lower():
                raise ParseError("rational denominator must be an integer",
                                 den.line, den.col)
            d = int(den.value)
            if d == 0:
                raise ParseError("zero denominator", den.line, den.col)
            val = val / d
        return -val if neg else val

    def integer(self) -> int:
        t = self.cur
        v = self.number()
        if v.denominator != 1:
            raise ParseError("expected an integer", t.line, t.col,
                             expected=("an integer",), found=str(v))
        return int(v)

    def ident(self) -> str:
        t = self.take(type_="ident", expected=("an identifier",))
        return t.value

    def vector(self) -> tuple:
        self.take("[", expected=("'['",))
        vals = [self.number()]
        while self.accept(","):
            vals.append(self.number())
        self.take("]", expected=("']'",))
        return tuple(vals)

    def matrix(self) -> tuple:
        # rows may be juxtaposed or comma-separated
        self.take("[", expected=("'['",))
        rows = []
        while True:
            if self.cur.value == "[":
                rows.append(self.vector())
                self.accept(",")
            elif self.cur.value == "]":
                break
            else:
                self._fail(("'['", "']'"))
        self.take("]", expected=("']'",))
        if not rows:
            t = self.cur
            raise ParseError("matrix needs at least one row", t.line, t.col)
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            t = self.cur
            raise ParseError("matrix rows have unequal lengths", t.line, t.col)
        return tuple(rows)

    def mixlist(self) -> tuple:
        self.take("[", expected=("'['",))
        entries = [self._mixentry()]
        while self.accept(","):
            entries.append(self._mixentry())
        self.take("]", expected=("']'",))
        return tuple(entries)

    def _mixentry(self):
        self.take("(", expected=("'('",))
        w = self.number()
        self.take(",", expected=("','",))
        vec = self.vector()
        self.take(")", expected=("')'",))
        return (w, vec)

    # -- grammar --

    def program(self) -> Program:
        stmts = [self.statement()]
        while self.cur.type != "eof":
            stmts.append(self.statement())
        return Program(tuple(stmts))

    def statement(self):
        t = self.cur
        if t.value == "let":
            self.take("let")
            name = self.ident()
            if name in RESERVED:
                raise ParseError(f"{name!r} is a reserved word", t.line, t.col)
            self.take("=", expected=("'='",))
            e = self.expr()
            self.take(";", expected=("';'",))
            return SLet(name, e, line=t.line)
        if t.value == "check":
            self.take("check")
            name = self.ident()
            opts = self.options()
            self.take(";", expected=("';'",))
            return SCheck(name, opts, line=t.line)
        self._fail(("'let'", "'check'"))

    def options(self) -> CheckOptions:
        self.take("t", expected=("'t'",))
        self.take("=", expected=("'='",))
        self.take("[", expected=("'['",))
        t0 = self.number()
        self.take(",", expected=("','",))
        t1 = self.number()
        self.take(",", expected=("','",))
        steps = self.integer()
        self.take("]", expected=("']'",))
        self.take("box", expected=("'box'",))
        self.take("=", expected=("'='",))
        self.take("[", expected=("'['",))
        box = []
        while self.cur.value == "[":
            self.take("[")
            lo = self.number()
            self.take(",", expected=("','",))
            hi = self.number()
            self.take(",", expected=("','",))
            count = self.integer()
            self.take("]", expected=("']'",))
            box.append((lo, hi, count))
            self.accept(",")
        self.take("]", expected=("']'",))
        if not box:
            t = self.cur
            raise ParseError("box needs at least one axis", t.line, t.col)
        tol = None
        weight = None
        if self.accept("tol"):
            self.take("=", expected=("'='",))
            tol = self.number()
        if self.accept("weight"):
            self.take("=", expected=("'='",))
            weight = self.ident()
        return CheckOptions(t0=t0, t1=t1, tsteps=steps, box=tuple(box),
                            tol=tol, weight=weight)

    def expr(self):
        t = self.cur
        if t.type == "ident" and t.value not in RESERVED:
            self.i += 1
            return ERef(t.value)
        head = t.value
        if head == "heat":
            self.take("heat")
            self.take("(", expected=("'('",))
            self.take("A", expected=("'A'",))
            self.take("=", expected=("'='",))
            mat = self.matrix()
            self.take(",", expected=("','",))
            self.take("mix", expected=("'mix'",))
            self.take("=", expected=("'='",))
            mix = self.mixlist()
            t0 = Fraction(0)
            if self.accept(","):
                self.take("t0", expected=("'t0'",))
                self.take("=", expected=("'='",))
                t0 = self.number()
            self.take(")", expected=("')'",))
            return EHeat(mat, mix, t0)
        if head == "sum":
            self.take("sum")
            self.take("(", expected=("'('",))
            terms = [self._coeff_term()]
            while self.accept(","):
                terms.append(self._coeff_term())
            self.take(")", expected=("')'",))
            return ESum(tuple(terms))
        if head == "tensor":
            self.take("tensor")
            self.take("(", expected=("'('",))
            a = self.expr()
            self.take(",", expected=("','",))
            b = self.expr()
            self.take(")", expected=("')'",))
            return ETensor(a, b)
        if head == "compose":
            self.take("compose")
            self.take("(", expected=("'('",))
            mat = self.matrix()
            self.take(",", expected=("','",))
            child = self.expr()
            self.take(")", expected=("')'",))
            return ECompose(mat, child)
        if head == "pow":
            self.take("pow")
            self.take("(", expected=("'('",))
            p = self.number()
            self.take(",", expected=("','",))
            child = self.expr()
            self.take(")", expected=("')'",))
            return EPow(p, child)
        if head == "wgm":
            self.take("wgm")
            self.take("(", expected=("'('",))
            terms = [self._coeff_term()]
            while self.accept(","):
                terms.append(self._coeff_term())
            self.take(")", expected=("')'",))
            return EWgm(tuple(terms))
        if head == "hsum":
            self.take("hsum")
            self.take("(", expected=("'('",))
            a = self.expr()
            self.take(",", expected=("','",))
            b = self.expr()
            self.take(")", expected=("')'",))
            return EHsum(a, b)
        if head == "lqnorm":
            self.take("lqnorm")
            self.take("(", expected=("'('",))
            p = self.number()
            self.take(",", expected=("','",))
            q = self.number()
            self.take(",", expected=("','",))
            a = self.expr()
            self.take(",", expected=("','",))
            b = self.expr()
            self.take(")", expected=("')'",))
            return ELqnorm(p, q, a, b)
        if head == "gmean":
            self.take("gmean")
            self.take("(", expected=("'('",))
            terms = [self._gterm()]
            while self.accept(","):
                terms.append(self._gterm())
            self.take(")", expected=("')'",))
            return EGmean(tuple(terms))
        if head == "conv":
            self.take("conv")
            self.take("(", expected=("'('",))
            self.take("p", expected=("'p'",))
            self.take("=", expected=("'='",))
            p = self.number()
            self.take(",", expected=("','",))
            self.take("p1", expected=("'p1'",))
            self.take("=", expected=("'='",))
            p1 = self.number()
            self.take(",", expected=("','",))
            self.take("p2", expected=("'p2'",))
            self.take("=", expected=("'='",))
            p2 = self.number()
            self.take(",", expected=("','",))
            a = self.expr()
            self.take(",", expected=("','",))
            b = self.expr()
            self.take(")", expected=("')'",))
            return EConv(p, p1, p2, a, b)
        if head == "gavg":
            self.take("gavg")
            self.take("(", expected=("'('",))
            k = self.integer()
            self.take(",", expected=("','",))
            child = self.expr()
            self.take(")", expected=("')'",))
            return EGavg(k, child)
        if head == "tpow":
            self.take("tpow")
            self.take("(", expected=("'('",))
            beta = self.number()
            self.take(",", expected=("','",))
            child = self.expr()
            self.take(")", expected=("')'",))
            return ETpow(beta, child)
        if head == "shift":
            self.take("shift")
            self.take("(", expected=("'('",))
            child = self.expr()
            self.take(",", expected=("','",))
            vec = self.vector()
            self.take(")", expected=("')'",))
            return EShift(child, vec)
        self._fail(("an expression",))

    def _coeff_term(self):
        c = self.number()
        self.take(":", expected=("':'",))
        return (c, self.expr())

    def _gterm(self):
        pexp = self.number()
        self.take(":", expected=("':'",))
        self.take("L", expected=("'L'",))
        self.take("=", expected=("'='",))
        lmat = self.matrix()
        self.take("A", expected=("'A'",))
        self.take("=", expected=("'='",))
        amat = self.matrix()
        self.take(":", expected=("':'",))
        child = self.expr()
        return (pexp, lmat, amat, child)


def parse(source: str) -> Program:
    """Parse a program; raises ParseError with line/column on failure."""
    return _Parser(source).program()


# --------------------------------------------------------------------------
# canonical formatter (round-trip property: parse o format o parse = parse)


def _fmt_num(v: Fraction) -> str:
    return str(v)


def _fmt_vec(vec) -> str:
    return "[" + ", ".join(_fmt_num(v) for v in vec) + "]"


def _fmt_mat(mat) -> str:
    return "[" + ", ".join(_fmt_vec(row) for row in mat) + "]"


def _fmt_expr(e) -> str:
    if isinstance(e, ERef):
        return e.name
    if isinstance(e, EHeat):
        mix = "[" + ", ".join(f"({_fmt_num(w)}, {_fmt_vec(c)})" for w, c in e.mix) + "]"
        t0 = f", t0={_fmt_num(e.t0)}" if e.t0 != 0 else ""
        return f"heat(A={_fmt_mat(e.matrix)}, mix={mix}{t0})"
    if isinstance(e, ESum):
        return "sum(" + ", ".join(f"{_fmt_num(c)}: {_fmt_expr(x)}" for c, x in e.terms) + ")"
    if isinstance(e, ETensor):
        return f"tensor({_fmt_expr(e.left)}, {_fmt_expr(e.right)})"
    if isinstance(e, ECompose):
        return f"compose({_fmt_mat(e.matrix)}, {_fmt_expr(e.child)})"
    if isinstance(e, EPow):
        return f"pow({_fmt_num(e.p)}, {_fmt_expr(e.child)})"
    if isinstance(e, EWgm):
        return "wgm(" + ", ".join(f"{_fmt_num(c)}: {_fmt_expr(x)}" for c, x in e.terms) + ")"
    if isinstance(e, EHsum):
        return f"hsum({_fmt_expr(e.left)}, {_fmt_expr(e.right)})"
    if isinstance(e, ELqnorm):
        return (f"lqnorm({_fmt_num(e.p)}, {_fmt_num(e.q)}, "
                f"{_fmt_expr(e.left)}, {_fmt_expr(e.right)})")
    if isinstance(e, EGmean):
        terms = ", ".join(
            f"{_fmt_num(p)}: L={_fmt_mat(L)} A={_fmt_mat(A)} : {_fmt_expr(x)}"
            for p, L, A, x in e.terms
        )
        return f"gmean({terms})"
    if isinstance(e, EConv):
        return (f"conv(p={_fmt_num(e.p)}, p1={_fmt_num(e.p1)}, "
                f"p2={_fmt_num(e.p2)}, {_fmt_expr(e.left)}, {_fmt_expr(e.right)})")
    if isinstance(e, EGavg):
        return f"gavg({e.k}, {_fmt_expr(e.child)})"
    if isinstance(e, ETpow):
        return f"tpow({_fmt_num(e.beta)}, {_fmt_expr(e.child)})"
    if isinstance(e, EShift):
        return f"shift({_fmt_expr(e.child)}, {_fmt_vec(e.vector)})"
    raise TypeError(f"unknown expression {e!r}")


def format_program(prog: Program) -> str:
    lines = []
    for s in prog.statements:
        if isinstance(s, SLet):
            lines.append(f"let {s.name} = {_fmt_expr(s.expr)};")
        else:
            o = s.options
            box = "[" + ", ".join(
                f"[{_fmt_num(lo)}, {_fmt_num(hi)}, {c}]" for lo, hi, c in o.box
            ) + "]"
            extra = ""
            if o.tol is not None:
                extra += f" tol={_fmt_num(o.tol)}"
            if o.weight is not None:
                extra += f" weight={o.weight}"
            lines.append(
                f"check {s.name} t=[{_fmt_num(o.t0)}, {_fmt_num(o.t1)}, "
                f"{o.tsteps}] box={box}{extra};"
            )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# lowering


@dataclass
class LoweredCheck:
    name: str
    node: Node
    options: CheckOptions
    weight: object = None


def _build(e, env, path) -> Node:
    try:
        if isinstance(e, ERef):
            if e.name not in env:
                raise LowerError(f"undefined name {e.name!r}", path)
            return env[e.name]
        if isinstance(e, EHeat):
            terms = [(float(w), [float(v) for v in c], float(e.t0)) for w, c in e.mix]
            return heat_atom([[float(v) for v in row] for row in e.matrix], terms)
        if isinstance(e, ESum):
            return positive_sum(
                [(c, _build(x, env, path + (f"sum[{i}]",)))
                 for i, (c, x) in enumerate(e.terms)]
            )
        if isinstance(e, ETensor):
            return tensor_product(
                _build(e.left, env, path + ("tensor[0]",)),
                _build(e.right, env, path + ("tensor[1]",)),
            )
        if isinstance(e, ECompose):
            return compose_linear(
                [[float(v) for v in row] for row in e.matrix],
                _build(e.child, env, path + ("compose",)),
            )
        if isinstance(e, EPow):
            return power(e.p, _build(e.child, env, path + ("pow",)))
        if isinstance(e, EWgm):
            return geom_mean(
                [(c, _build(x, env, path + (f"wgm[{i}]",)))
                 for i, (c, x) in enumerate(e.terms)]
            )
        if isinstance(e, EHsum):
            return harmonic_sum(
                _build(e.left, env, path + ("hsum[0]",)),
                _build(e.right, env, path + ("hsum[1]",)),
            )
        if isinstance(e, ELqnorm):
            return lq_norm(
                e.p, e.q,
                _build(e.left, env, path + ("lqnorm[0]",)),
                _build(e.right, env, path + ("lqnorm[1]",)),
            )
        if isinstance(e, EGmean):
            terms = []
            for i, (p, L, A, x) in enumerate(e.terms):
                terms.append((
                    p,
                    [[float(v) for v in row] for row in L],
                    [[float(v) for v in row] for row in A],
                    _build(x, env, path + (f"gmean[{i}]",)),
                ))
            return aniso_geom_mean(terms)
        if isinstance(e, EConv):
            return convolve_power(
                e.p, e.p1, e.p2,
                _build(e.left, env, path + ("conv[0]",)),
                _build(e.right, env, path + ("conv[1]",)),
            )
        if isinstance(e, EGavg):
            return group_average(e.k, _build(e.child, env, path + ("gavg",)))
        if isinstance(e, ETpow):
            return time_power(e.beta, _build(e.child, env, path + ("tpow",)))
        if isinstance(e, EShift):
            child = _build(e.child, env, path + ("shift",))
            return child.shifted([float(v) for v in e.vector])
    except LowerError:
        raise
    except (DimensionMismatch, EvalRangeError, ValueError) as exc:
        raise LowerError(str(exc), path) from exc
    raise LowerError(f"unknown expression {type(e).__name__}", path)


def lower(prog: Program) -> List[LoweredCheck]:
    """Resolve names, construct nodes, validate check options."""
    env = {}
    out = []
    for s in prog.statements:
        if isinstance(s, SLet):
            env[s.name] = _build(s.expr, env, (s.name,))
            continue
        if s.name not in env:
            raise LowerError(f"check references undefined name {s.name!r}",
                             (f"line {s.line}",))
        node = env[s.name]
        o = s.options
        if not (0 < o.t0 < o.t1):
            raise LowerError("check needs 0 < t0 < t1", (s.name,))
        if o.tsteps < 2:
            raise LowerError("check needs at least two time steps", (s.name,))
        if len(o.box) != node.n:
            raise LowerError(
                f"box has {len(o.box)} axes but expression has dimension {node.n}",
                (s.name,),
            )
        for lo, hi, count in o.box:
            if not lo < hi:
                raise LowerError("box bounds must satisfy lo < hi", (s.name,))
            if count < 3 or count % 2 == 0:
                raise LowerError(
                    "grid sizes must be odd (centered stencils) and >= 3",
                    (s.name,),
                )
        weight = None
        if o.weight is not None:
            weight = builtin_weight(o.weight, node.n)
            if weight is None:
                raise LowerError(
                    f"unknown weight {o.weight!r}: weights must name a "
                    "built-in subharmonic weight (one, cosh_1, ..., "
                    f"cosh_{node.n})",
                    (s.name,),
                )
        out.append(LoweredCheck(name=s.name, node=node, options=o, weight=weight))
    if not out:
        raise LowerError("a runnable program needs at least one check", ())
    return out
