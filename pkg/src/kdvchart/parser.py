"""Parser and printer for the expression / operator / chart DSL.

Expression syntax: fields are identifiers, derivatives are ``w_x``/``w_xx``
or ``w{k}``, nonlocal atoms are ``Dinv(expr)``, arithmetic ``+ - * / ^`` with
integer powers and rational literals like ``3/2``.

Operator syntax: ``D``, ``Dinv``, ``[expr]`` multiplication operators, ``*``
composition, ``+``/``-`` sums, rational scalar weights.

Chart files are stanza based (``equation``/``link``/``invariance`` blocks in
braces) with compact one-line forms for equations and links; ``#`` starts a
comment.  Parse -> print -> parse is a fixed point.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from .jets import JetExpr, SubstitutionSet, const, dinv, jet, param, to_text
from .ops import PseudoOp


class ChartSyntaxError(SyntaxError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        at = f" at line {line}:{col}"
        if expected:
            message += f" (expected {', '.join(sorted(expected))})"
        super().__init__(message + at)
        self.line = line
        self.col = col
        self.expected = tuple(expected)


# --------------------------------------------------------------------------
# tokenizer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+)
  | (?P<jet>[A-Za-z][A-Za-z0-9]*_(?:x+|t)\b)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<arrow>->)
  | (?P<op>[-+*/^(){}\[\]=,])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str       # num | jet | time | ident | arrow | op | end
    value: str
    line: int
    col: int


def tokenize(text: str, line: int = 1) -> list[Token]:
    out = []
    pos = 0
    col0 = 1
    cur_line = line
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ChartSyntaxError(f"unexpected character {text[pos]!r}",
                                   cur_line, col0 + pos)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            if kind == "jet" and value.endswith("_t"):
                kind = "time"
            out.append(Token(kind, value, cur_line, col0 + pos))
        pos = m.end()
    out.append(Token("end", "", cur_line, col0 + pos))
    return out


class _Stream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "end":
            self.i += 1
        return t

    def expect(self, kind: str, value: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind or (value is not None and t.value != value):
            want = value if value is not None else kind
            raise ChartSyntaxError(f"unexpected {t.value!r}", t.line, t.col,
                                   expected=(want,))
        return self.next()

    def accept(self, kind: str, value: str | None = None) -> Token | None:
        t = self.peek()
        if t.kind == kind and (value is None or t.value == value):
            return self.next()
        return None

    def at_end(self) -> bool:
        return self.peek().kind == "end"


# --------------------------------------------------------------------------
# expression parser
# --------------------------------------------------------------------------

class ExprParser:
    def __init__(self, stream: _Stream, params: set[str],
                 defines: dict[str, JetExpr]):
        self.s = stream
        self.params = params
        self.defines = defines

    def parse(self) -> JetExpr:
        out = self.parse_term()
        while True:
            if self.s.accept("op", "+"):
                out = out + self.parse_term()
            elif self.s.accept("op", "-"):
                out = out - self.parse_term()
            else:
                return out

    def parse_term(self) -> JetExpr:
        out = self.parse_factor()
        while True:
            if self.s.accept("op", "*"):
                out = out * self.parse_factor()
            elif self.s.accept("op", "/"):
                out = out / self.parse_factor()
            else:
                return out

    def parse_factor(self) -> JetExpr:
        if self.s.accept("op", "-"):
            return -self.parse_factor()
        if self.s.accept("op", "+"):
            return self.parse_factor()
        base = self.parse_primary()
        if self.s.accept("op", "^"):
            return base ** self.parse_exponent()
        return base

    def parse_exponent(self) -> int:
        neg = bool(self.s.accept("op", "-"))
        if self.s.accept("op", "("):
            neg2 = bool(self.s.accept("op", "-"))
            t = self.s.expect("num")
            self.s.expect("op", ")")
            n = int(t.value)
            return -(n if neg2 else -n) if neg else (-n if neg2 else n)
        t = self.s.expect("num")
        n = int(t.value)
        return -n if neg else n

    def parse_primary(self) -> JetExpr:
        t = self.s.peek()
        if t.kind == "num":
            self.s.next()
            return const(int(t.value))
        if t.kind == "op" and t.value == "(":
            self.s.next()
            inner = self.parse()
            self.s.expect("op", ")")
            return inner
        if t.kind == "jet":
            self.s.next()
            name, suffix = t.value.rsplit("_", 1)
            return jet(name, len(suffix))
        if t.kind == "ident":
            self.s.next()
            if t.value == "Dinv":
                self.s.expect("op", "(")
                inner = self.parse()
                self.s.expect("op", ")")
                return dinv(inner)
            if self.s.accept("op", "{"):
                order = int(self.s.expect("num").value)
                self.s.expect("op", "}")
                return jet(t.value, order)
            if t.value in self.defines:
                return self.defines[t.value]
            if t.value in self.params:
                return param(t.value)
            return jet(t.value, 0)
        raise ChartSyntaxError(f"unexpected {t.value!r}", t.line, t.col,
                               expected=("expression",))


def parse_expr(text: str, params=(), defines=None, line: int = 1) -> JetExpr:
    stream = _Stream(tokenize(text, line))
    out = ExprParser(stream, set(params), defines or {}).parse()
    if not stream.at_end():
        t = stream.peek()
        raise ChartSyntaxError(f"trailing input {t.value!r}", t.line, t.col)
    return out


# --------------------------------------------------------------------------
# operator parser
# --------------------------------------------------------------------------

class OpParser:
    def __init__(self, stream: _Stream, params: set[str],
                 defines: dict[str, JetExpr]):
        self.s = stream
        self.params = params
        self.defines = defines

    def parse(self) -> PseudoOp:
        out = self.parse_term()
        while True:
            if self.s.accept("op", "+"):
                out = out + self.parse_term()
            elif self.s.accept("op", "-"):
                out = out - self.parse_term()
            else:
                return out

    def parse_term(self) -> PseudoOp:
        out = self.parse_factor()
        while self.s.accept("op", "*"):
            out = out * self.parse_factor()
        return out

    def parse_factor(self) -> PseudoOp:
        t = self.s.peek()
        if t.kind == "op" and t.value == "-":
            self.s.next()
            return -self.parse_factor()
        if t.kind == "num":
            self.s.next()
            num = int(t.value)
            if self.s.accept("op", "/"):
                den = int(self.s.expect("num").value)
                return PseudoOp.identity().scale(Fraction(num, den))
            return PseudoOp.identity().scale(num)
        if t.kind == "op" and t.value == "(":
            self.s.next()
            inner = self.parse()
            self.s.expect("op", ")")
            return self._maybe_power(inner)
        if t.kind == "op" and t.value == "[":
            self.s.next()
            expr = ExprParser(self.s, self.params, self.defines).parse()
            self.s.expect("op", "]")
            return self._maybe_power(PseudoOp.mul(expr))
        if t.kind == "ident" and t.value == "D":
            self.s.next()
            return self._maybe_power(PseudoOp.diff())
        if t.kind == "ident" and t.value == "Dinv":
            self.s.next()
            return self._maybe_power(PseudoOp.dinv())
        raise ChartSyntaxError(f"unexpected {t.value!r}", t.line, t.col,
                               expected=("D", "Dinv", "[expr]", "scalar"))

    def _maybe_power(self, base: PseudoOp) -> PseudoOp:
        if self.s.accept("op", "^"):
            n = int(self.s.expect("num").value)
            return base ** n
        return base


def parse_operator(text: str, params=(), defines=None, line: int = 1) -> PseudoOp:
    stream = _Stream(tokenize(text, line))
    out = OpParser(stream, set(params), defines or {}).parse()
    if not stream.at_end():
        t = stream.peek()
        raise ChartSyntaxError(f"trailing input {t.value!r}", t.line, t.col)
    return out


# --------------------------------------------------------------------------
# chart document model
# --------------------------------------------------------------------------

@dataclass
class EquationStanza:
    name: str
    field: str
    flow: JetExpr
    multiplier: JetExpr
    operator: PseudoOp | None = None
    operator_text: str | None = None
    seed: JetExpr | None = None
    base_applications: int = 1
    notes: tuple[str, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, EquationStanza):
            return NotImplemented
        return (self.name, self.field, self.flow, self.multiplier,
                self.operator, self.seed, self.base_applications,
                self.notes) == \
               (other.name, other.field, other.flow, other.multiplier,
                other.operator, other.seed, other.base_applications,
                other.notes)


@dataclass
class InvertClause:
    field: str
    operator: PseudoOp
    operator_text: str
    assuming: tuple[tuple[str, int, JetExpr], ...] = ()


@dataclass
class LinkStanza:
    name: str
    kind: str
    source: str | None
    target: str | None
    relation: JetExpr | None
    solves: tuple[tuple[str, int, JetExpr], ...] = ()
    reverses: tuple[tuple[str, int, JetExpr], ...] = ()
    inverts: tuple[InvertClause, ...] = ()
    algebraic_reverse: tuple[str, int, JetExpr] | None = None
    assumptions: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, LinkStanza):
            return NotImplemented
        return (self.name, self.kind, self.source, self.target, self.relation,
                self.solves, self.reverses,
                tuple((c.field, c.operator, c.assuming) for c in self.inverts),
                self.algebraic_reverse, self.assumptions, self.notes) == \
               (other.name, other.kind, other.source, other.target,
                other.relation, other.solves, other.reverses,
                tuple((c.field, c.operator, c.assuming) for c in other.inverts),
                other.algebraic_reverse, other.assumptions, other.notes)


@dataclass
class InvarianceStanza:
    name: str
    on: str
    kind: str
    rule: tuple[str, int, JetExpr] | None = None
    assumptions: tuple[str, ...] = ()
    chart_loop: bool = True
    notes: tuple[str, ...] = ()


@dataclass
class ChartDocument:
    version: int
    params: tuple[str, ...] = ()
    defines: tuple[tuple[str, JetExpr], ...] = ()
    equations: tuple[EquationStanza, ...] = ()
    links: tuple[LinkStanza, ...] = ()
    invariances: tuple[InvarianceStanza, ...] = ()

    def equation(self, name: str) -> EquationStanza:
        for e in self.equations:
            if e.name == name:
                return e
        raise KeyError(f"unknown equation {name!r}")

    def link(self, name: str) -> LinkStanza:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(f"unknown link {name!r}")

    def invariance(self, name: str) -> InvarianceStanza:
        for i in self.invariances:
            if i.name == name:
                return i
        raise KeyError(f"unknown invariance {name!r}")


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*")
_HEAD_RE = re.compile(r"([A-Za-z][A-Za-z0-9_-]*)\s*(.*)$")


def _split_head(rest: str) -> tuple[str, str]:
    """`kdv { ...` / `kdv: u_t = ...` -> (name, tail)."""
    m = _HEAD_RE.match(rest.strip())
    if not m:
        return "", rest
    name, tail = m.group(1), m.group(2).strip()
    if tail.startswith(":"):
        tail = tail[1:].strip()
    return name, tail
_JETREF_RE = re.compile(
    r"(?P<f>[A-Za-z][A-Za-z0-9]*)(?:_(?P<x>x+)|\{(?P<k>\d+)\})?"
    r"(?:\^(?P<p>\d+))?$")


def _parse_jetref(text: str, line: int) -> tuple[str, int, int]:
    """`w`, `w_x`, `phi{1}`, `hatw^2` -> (field, order, power)."""
    m = _JETREF_RE.match(text.strip())
    if not m:
        raise ChartSyntaxError(f"bad jet reference {text!r}", line, 1)
    order = len(m.group("x") or "") or int(m.group("k") or 0)
    return m.group("f"), order, int(m.group("p") or 1)


class _ChartParser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0
        self.params: set[str] = set()
        self.defines: dict[str, JetExpr] = {}
        self.equations: list[EquationStanza] = []
        self.links: list[LinkStanza] = []
        self.invariances: list[InvarianceStanza] = []
        self.version: int | None = None

    def error(self, msg, line=None, col=1, expected=()):
        raise ChartSyntaxError(msg, line if line is not None else self.i, col,
                               expected)

    def next_line(self) -> tuple[int, str] | None:
        while self.i < len(self.lines):
            self.i += 1
            raw = self.lines[self.i - 1]
            stripped = raw.split("#", 1)[0].strip()
            if stripped:
                return self.i, stripped
        return None

    def parse(self) -> ChartDocument:
        first = self.next_line()
        if first is None or not first[1].startswith("chart-version"):
            self.error("chart file must start with a `chart-version` header",
                       line=first[0] if first else 1,
                       expected=("chart-version",))
        self.version = int(first[1].split()[1])
        while True:
            item = self.next_line()
            if item is None:
                break
            ln, line = item
            head, _, rest = line.partition(" ")
            rest = rest.strip()
            if head == "params":
                self.params.update(rest.split())
            elif head == "define":
                name, _, body = rest.partition("=")
                name = name.strip()
                self.defines[name] = parse_expr(body.strip(), self.params,
                                                self.defines, ln)
            elif head == "equation":
                self.parse_equation(ln, rest)
            elif head == "link":
                self.parse_link(ln, rest)
            elif head == "invariance":
                self.parse_invariance(ln, rest)
            else:
                self.error(f"unknown stanza {head!r}", line=ln,
                           expected=("equation", "link", "invariance",
                                     "params", "define"))
        return ChartDocument(
            version=self.version,
            params=tuple(sorted(self.params)),
            defines=tuple(self.defines.items()),
            equations=tuple(self.equations),
            links=tuple(self.links),
            invariances=tuple(self.invariances))

    # -- block helpers ------------------------------------------------------
    def read_block(self, header_rest: str, ln: int) -> list[tuple[int, str]]:
        """Return the `key rest` lines of a `{ ... }` block (may be empty)."""
        out = []
        text = header_rest.strip()
        if text.endswith("{"):
            inline = text[:-1].strip()
            if inline:
                out.append((ln, inline))
            while True:
                item = self.next_line()
                if item is None:
                    self.error("unterminated block", line=ln, expected=("}",))
                if item[1] == "}":
                    break
                # allow `key value }` on one line
                if item[1].endswith("}") and "{" not in item[1]:
                    out.append((item[0], item[1][:-1].strip()))
                    break
                out.append(item)
        elif text:
            out.append((ln, text))
        return out

    def parse_eq_line(self, text: str, ln: int):
        """`u_t = rhs` or `s^2*s_t = rhs` -> (field, multiplier, flow)."""
        lhs, _, rhs = text.partition("=")
        if not rhs:
            self.error("equation line needs `lhs = rhs`", line=ln, expected=("=",))
        lhs = lhs.strip()
        m = re.match(r"(?:(?P<mult>.+)\*)?(?P<f>[A-Za-z][A-Za-z0-9]*)_t$", lhs)
        if not m:
            self.error(f"equation left side {lhs!r} must end in `field_t`",
                       line=ln)
        fld = m.group("f")
        mult = parse_expr(m.group("mult"), self.params, self.defines, ln) \
            if m.group("mult") else const(1)
        flow_poly = parse_expr(rhs.strip(), self.params, self.defines, ln)
        return fld, mult, flow_poly / mult

    def parse_equation(self, ln: int, rest: str):
        name, tail = _split_head(rest)
        if not _NAME_RE.fullmatch(name):
            self.error(f"bad equation name {name!r}", line=ln)
        fld = mult = flow = None
        # compact `equation name: u_t = ...` possibly followed by `{`
        block_src = tail
        if tail and not tail.startswith("{"):
            eq_text = tail[:-1].strip() if tail.endswith("{") else tail
            fld, mult, flow = self.parse_eq_line(eq_text, ln)
            block_src = "{" if tail.endswith("{") else ""
        lines = self.read_block(block_src, ln)
        operator = operator_text = seed = None
        base_apps = 1
        notes = []
        for bln, line in lines:
            key, _, val = line.partition(" ")
            val = val.strip()
            if key == "field":
                fld = val
            elif key == "eq":
                fld, mult, flow = self.parse_eq_line(val, bln)
            elif key == "flow":
                flow = parse_expr(val, self.params, self.defines, bln)
            elif key == "multiplier":
                mult = parse_expr(val, self.params, self.defines, bln)
            elif key == "operator":
                operator = parse_operator(val, self.params, self.defines, bln)
                operator_text = val
            elif key == "seed":
                seed = parse_expr(val, self.params, self.defines, bln)
            elif key == "base-applications":
                base_apps = int(val)
            elif key == "note":
                notes.append(val)
            else:
                self.error(f"unknown equation key {key!r}", line=bln,
                           expected=("field", "eq", "flow", "operator", "seed",
                                     "multiplier", "base-applications", "note"))
        if fld is None or flow is None:
            self.error(f"equation {name!r} needs a field and a flow", line=ln)
        self.equations.append(EquationStanza(
            name=name, field=fld, flow=flow, multiplier=mult or const(1),
            operator=operator, operator_text=operator_text, seed=seed,
            base_applications=base_apps, notes=tuple(notes)))

    def parse_link(self, ln: int, rest: str):
        name, tail = _split_head(rest)
        if not _NAME_RE.fullmatch(name):
            self.error(f"bad link name {name!r}", line=ln)
        relation = None
        solves: list[tuple[str, int, JetExpr]] = []
        block_src = tail
        if tail and not tail.startswith("{"):
            compact = tail[:-1].strip() if tail.endswith("{") else tail
            rel_text, _, solve_text = compact.partition(" solve ")
            rel_text = rel_text.strip()
            if rel_text.endswith("= 0"):
                rel_text = rel_text[: -len("= 0")].strip()
            elif rel_text.endswith("=0"):
                rel_text = rel_text[: -len("=0")].strip()
            relation = parse_expr(rel_text, self.params, self.defines, ln)
            if solve_text:
                lhs, _, rhs = solve_text.partition("->")
                f, k, _ = _parse_jetref(lhs, ln)
                solves.append((f, k, parse_expr(rhs.strip(), self.params,
                                                self.defines, ln)))
            block_src = "{" if tail.endswith("{") else ""
        lines = self.read_block(block_src, ln)
        kind = "differential"
        source = target = None
        reverses: list[tuple[str, int, JetExpr]] = []
        inverts: list[InvertClause] = []
        algebraic = None
        assumptions: list[str] = []
        notes: list[str] = []
        for bln, line in lines:
            key, _, val = line.partition(" ")
            val = val.strip()
            if key == "kind":
                kind = val
            elif key == "source":
                source = val
            elif key == "target":
                target = val
            elif key == "relation":
                if val.endswith("= 0"):
                    val = val[: -len("= 0")].strip()
                relation = parse_expr(val, self.params, self.defines, bln)
            elif key in ("solve", "reverse"):
                lhs, _, rhs = val.partition("->")
                f, k, p = _parse_jetref(lhs, bln)
                if p != 1:
                    self.error("solve/reverse rules bind a plain jet", line=bln)
                entry = (f, k, parse_expr(rhs.strip(), self.params,
                                          self.defines, bln))
                (solves if key == "solve" else reverses).append(entry)
            elif key == "invert":
                lhs, _, rhs = val.partition("->")
                fld = lhs.strip()
                op_text, _, assuming_text = rhs.partition(" assuming ")
                op_text = op_text.strip()
                assuming = []
                if assuming_text:
                    alhs, _, arhs = assuming_text.partition("->")
                    f, k, _ = _parse_jetref(alhs, bln)
                    assuming.append((f, k, parse_expr(arhs.strip(), self.params,
                                                      self.defines, bln)))
                inverts.append(InvertClause(
                    field=fld,
                    operator=parse_operator(op_text, self.params,
                                            self.defines, bln),
                    operator_text=op_text,
                    assuming=tuple(assuming)))
            elif key == "algebraic-reverse":
                lhs, _, rhs = val.partition("->")
                f, k, p = _parse_jetref(lhs, bln)
                algebraic = (f, p, parse_expr(rhs.strip(), self.params,
                                              self.defines, bln))
            elif key == "assume":
                assumptions.append(val)
            elif key == "note":
                notes.append(val)
            else:
                self.error(f"unknown link key {key!r}", line=bln)
        self.links.append(LinkStanza(
            name=name, kind=kind, source=source, target=target,
            relation=relation, solves=tuple(solves), reverses=tuple(reverses),
            inverts=tuple(inverts), algebraic_reverse=algebraic,
            assumptions=tuple(assumptions), notes=tuple(notes)))

    def parse_invariance(self, ln: int, rest: str):
        name, tail = _split_head(rest)
        if not _NAME_RE.fullmatch(name):
            self.error(f"bad invariance name {name!r}", line=ln)
        lines = self.read_block(tail, ln)
        on = None
        kind = "pointwise"
        rule = None
        assumptions: list[str] = []
        notes: list[str] = []
        chart_loop = True
        for bln, line in lines:
            key, _, val = line.partition(" ")
            val = val.strip()
            if key == "on":
                on = val
            elif key == "kind":
                kind = val
            elif key == "rule":
                lhs, _, rhs = val.partition("->")
                f, k, p = _parse_jetref(lhs, bln)
                if k:
                    self.error("invariance rules bind the bare field", line=bln)
                rule = (f, p, parse_expr(rhs.strip(), self.params,
                                         self.defines, bln))
            elif key == "assume":
                assumptions.append(val)
            elif key == "chart-loop":
                chart_loop = val.lower() in ("true", "yes", "1")
            elif key == "note":
                notes.append(val)
            else:
                self.error(f"unknown invariance key {key!r}", line=bln)
        if on is None:
            self.error(f"invariance {name!r} needs `on <equation>`", line=ln)
        self.invariances.append(InvarianceStanza(
            name=name, on=on, kind=kind, rule=rule,
            assumptions=tuple(assumptions), chart_loop=chart_loop,
            notes=tuple(notes)))


def parse_chart(text: str) -> ChartDocument:
    return _ChartParser(text).parse()


# --------------------------------------------------------------------------
# printer (canonical form; parse(print(doc)) == doc)
# --------------------------------------------------------------------------

def _jetref_text(field: str, order: int, power: int = 1) -> str:
    if order == 0:
        base = field
    elif order <= 3:
        base = f"{field}_{'x' * order}"
    else:
        base = f"{field}{{{order}}}"
    return base if power == 1 else f"{base}^{power}"


def print_chart(doc: ChartDocument) -> str:
    out = [f"chart-version {doc.version}", ""]
    if doc.params:
        out.append("params " + " ".join(doc.params))
        out.append("")
    for name, expr in doc.defines:
        out.append(f"define {name} = {to_text(expr)}")
    if doc.defines:
        out.append("")
    for eq in doc.equations:
        out.append(f"equation {eq.name} {{")
        out.append(f"  field {eq.field}")
        out.append(f"  flow {to_text(eq.flow)}")
        if eq.multiplier != const(1):
            out.append(f"  multiplier {to_text(eq.multiplier)}")
        if eq.operator is not None:
            out.append(f"  operator {eq.operator_text or eq.operator.text()}")
        if eq.seed is not None:
            out.append(f"  seed {to_text(eq.seed)}")
        if eq.base_applications != 1:
            out.append(f"  base-applications {eq.base_applications}")
        for n in eq.notes:
            out.append(f"  note {n}")
        out.append("}")
        out.append("")
    for link in doc.links:
        out.append(f"link {link.name} {{")
        out.append(f"  kind {link.kind}")
        if link.source:
            out.append(f"  source {link.source}")
        if link.target:
            out.append(f"  target {link.target}")
        if link.relation is not None:
            out.append(f"  relation {to_text(link.relation)}")
        for f, k, e in link.solves:
            out.append(f"  solve {_jetref_text(f, k)} -> {to_text(e)}")
        for f, k, e in link.reverses:
            out.append(f"  reverse {_jetref_text(f, k)} -> {to_text(e)}")
        for cl in link.inverts:
            line = f"  invert {cl.field} -> {cl.operator_text}"
            for f, k, e in cl.assuming:
                line += f" assuming {_jetref_text(f, k)} -> {to_text(e)}"
            out.append(line)
        if link.algebraic_reverse:
            f, p, e = link.algebraic_reverse
            out.append(f"  algebraic-reverse {f}^{p} -> {to_text(e)}")
        for a in link.assumptions:
            out.append(f"  assume {a}")
        for n in link.notes:
            out.append(f"  note {n}")
        out.append("}")
        out.append("")
    for inv in doc.invariances:
        out.append(f"invariance {inv.name} {{")
        out.append(f"  on {inv.on}")
        out.append(f"  kind {inv.kind}")
        if inv.rule is not None:
            f, p, e = inv.rule
            out.append(f"  rule {_jetref_text(f, 0, p)} -> {to_text(e)}")
        for a in inv.assumptions:
            out.append(f"  assume {a}")
        if not inv.chart_loop:
            out.append("  chart-loop false")
        for n in inv.notes:
            out.append(f"  note {n}")
        out.append("}")
        out.append("")
    return "\n".join(out).rstrip() + "\n"
