"""Exact differential algebra on jet variables with nonlocal antiderivative atoms.

A :class:`JetExpr` is a rational function (exact rational coefficients) in an
atom alphabet made of

* jet variables ``(field, k)`` -- the k-th x-derivative of a named field,
* constant parameters (``a``, ``b``, ... in Moebius maps and scalings),
* nonlocal atoms ``Dinv(body)`` -- antiderivatives from -infinity of
  expressions that have no antiderivative inside the rational class.

Every expression is kept in a canonical numerator/denominator pair, so
structural identity of canonical forms *is* expression equality and the zero
test is decidable.  All values are immutable; the only shared mutable state
is the nonlocal-atom interning table, which is lock protected.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

import sympy as sp

MAX_JET_ORDER = 12

ScalarLike = Union[int, Fraction, sp.Rational]


class JetOrderError(ValueError):
    """A jet variable beyond MAX_JET_ORDER was requested."""


class UnresolvableJetError(ValueError):
    """A substitution rule set cannot resolve a required jet variable."""


class ZeroDenominatorError(ZeroDivisionError):
    """Division by an expression whose canonical form is zero."""


# --------------------------------------------------------------------------
# atom registry: sympy symbols <-> atom descriptors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet:
    field: str
    order: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Nonlocal:
    index: int


_lock = threading.Lock()
_atom_of_symbol: dict[sp.Symbol, object] = {}
_dinv_index: dict[tuple, int] = {}
_dinv_bodies: list["JetExpr"] = []


def _jet_symbol(field: str, order: int) -> sp.Symbol:
    if not field.isidentifier() or field.startswith("_"):
        raise ValueError(f"bad field name {field!r}")
    if order < 0 or order > MAX_JET_ORDER:
        raise JetOrderError(
            f"jet order {order} of field {field!r} exceeds the supported "
            f"maximum {MAX_JET_ORDER}")
    s = sp.Symbol(f"_J_{field}_{order}")
    _atom_of_symbol.setdefault(s, Jet(field, order))
    return s


def _param_symbol(name: str) -> sp.Symbol:
    if not name.isidentifier() or name.startswith("_"):
        raise ValueError(f"bad parameter name {name!r}")
    s = sp.Symbol(f"_P_{name}")
    _atom_of_symbol.setdefault(s, Param(name))
    return s


def _dinv_symbol(index: int) -> sp.Symbol:
    return sp.Symbol(f"_N_{index}")


def atom_of(symbol: sp.Symbol):
    """Descriptor (Jet, Param or Nonlocal) of an internal symbol."""
    return _atom_of_symbol[symbol]


def dinv_body(index: int) -> "JetExpr":
    return _dinv_bodies[index]


def _intern_dinv(body: "JetExpr") -> sp.Symbol:
    key = (body._num, body._den)
    with _lock:
        idx = _dinv_index.get(key)
        if idx is None:
            idx = len(_dinv_bodies)
            _dinv_index[key] = idx
            _dinv_bodies.append(body)
            s = _dinv_symbol(idx)
            _atom_of_symbol[s] = Nonlocal(idx)
        else:
            s = _dinv_symbol(idx)
    return s


# --------------------------------------------------------------------------
# JetExpr
# --------------------------------------------------------------------------

def _as_sym(x) -> sp.Expr:
    if isinstance(x, JetExpr):
        return x._quotient()
    if isinstance(x, Fraction):
        return sp.Rational(x.numerator, x.denominator)
    if isinstance(x, int):
        return sp.Integer(x)
    if isinstance(x, sp.Expr):
        return x
    raise TypeError(f"cannot coerce {type(x).__name__} into an expression")


def _canon_pair(num: sp.Expr, den: sp.Expr) -> tuple[sp.Expr, sp.Expr]:
    expr = sp.cancel(sp.together(num / den))
    n, d = expr.as_numer_denom()
    n = sp.expand(n)
    d = sp.expand(d)
    if d == 0:
        raise ZeroDenominatorError("denominator normalizes to zero")
    if n == 0:
        return sp.S.Zero, sp.S.One
    if d.free_symbols:
        gens = sorted(d.free_symbols, key=lambda s: s.name)
        lc = sp.Poly(d, *gens).LC()
    else:
        lc = d
    if lc != 1:
        inv = sp.Rational(1) / lc
        n = sp.expand(n * inv)
        d = sp.expand(d * inv)
    return n, d


class JetExpr:
    """Canonical rational expression over jet/parameter/nonlocal atoms."""

    __slots__ = ("_num", "_den")

    def __init__(self, num: sp.Expr, den: sp.Expr = sp.S.One, *, _canonical=False):
        if _canonical:
            self._num, self._den = num, den
        else:
            self._num, self._den = _canon_pair(num, den)

    # -- construction helpers ------------------------------------------------
    @staticmethod
    def wrap(x) -> "JetExpr":
        if isinstance(x, JetExpr):
            return x
        return JetExpr(_as_sym(x))

    def pair(self) -> tuple[sp.Expr, sp.Expr]:
        """Canonical (numerator, denominator) sympy pair."""
        return self._num, self._den

    def _quotient(self) -> sp.Expr:
        if self._den == 1:
            return self._num
        return self._num / self._den

    # -- predicates ----------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self._num == 0

    @property
    def is_rational_constant(self) -> bool:
        return not (self._num.free_symbols or self._den.free_symbols)

    def as_fraction(self) -> Fraction:
        if not self.is_rational_constant:
            raise ValueError(f"{self} is not a rational constant")
        q = sp.Rational(self._num) / sp.Rational(self._den)
        return Fraction(int(q.p), int(q.q))

    # -- atom access ---------------------------------------------------------
    def symbols(self) -> set[sp.Symbol]:
        return self._num.free_symbols | self._den.free_symbols

    def atoms(self) -> list:
        return [atom_of(s) for s in sorted(self.symbols(), key=lambda s: s.name)]

    def fields(self, *, recursive: bool = True) -> set[str]:
        out = set()
        for a in self.atoms():
            if isinstance(a, Jet):
                out.add(a.field)
            elif isinstance(a, Nonlocal) and recursive:
                out |= dinv_body(a.index).fields()
        return out

    def max_order(self, field: str, *, recursive: bool = True) -> int:
        """Highest jet order of `field` present (-1 if absent)."""
        best = -1
        for a in self.atoms():
            if isinstance(a, Jet) and a.field == field:
                best = max(best, a.order)
            elif isinstance(a, Nonlocal) and recursive:
                best = max(best, dinv_body(a.index).max_order(field))
        return best

    def has_nonlocal(self) -> bool:
        return any(isinstance(a, Nonlocal) for a in self.atoms())

    def dinv_depth(self) -> int:
        depth = 0
        for a in self.atoms():
            if isinstance(a, Nonlocal):
                depth = max(depth, 1 + dinv_body(a.index).dinv_depth())
        return depth

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        o = JetExpr.wrap(other)
        return JetExpr(self._num * o._den + o._num * self._den,
                       self._den * o._den)

    __radd__ = __add__

    def __neg__(self):
        return JetExpr(-self._num, self._den, _canonical=True)

    def __sub__(self, other):
        return self + (-JetExpr.wrap(other))

    def __rsub__(self, other):
        return JetExpr.wrap(other) - self

    def __mul__(self, other):
        o = JetExpr.wrap(other)
        return JetExpr(self._num * o._num, self._den * o._den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = JetExpr.wrap(other)
        if o.is_zero:
            raise ZeroDenominatorError("division by the zero expression")
        return JetExpr(self._num * o._den, self._den * o._num)

    def __rtruediv__(self, other):
        return JetExpr.wrap(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are defined")
        if n >= 0:
            return JetExpr(self._num ** n, self._den ** n)
        if self.is_zero:
            raise ZeroDenominatorError("zero to a negative power")
        return JetExpr(self._den ** (-n), self._num ** (-n))

    # -- identity ------------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = JetExpr.wrap(other)
        if not isinstance(other, JetExpr):
            return NotImplemented
        return self._num == other._num and self._den == other._den

    def __hash__(self):
        return hash((self._num, self._den))

    def __repr__(self):
        return f"JetExpr({to_text(self)})"

    def __str__(self):
        return to_text(self)


ZERO = JetExpr(sp.S.Zero, _canonical=True)
ONE = JetExpr(sp.S.One, _canonical=True)


def jet(field: str, order: int = 0) -> JetExpr:
    return JetExpr(_jet_symbol(field, order), _canonical=True)


def param(name: str) -> JetExpr:
    return JetExpr(_param_symbol(name), _canonical=True)


def const(x: ScalarLike) -> JetExpr:
    return JetExpr.wrap(x)


def normalize(e: JetExpr) -> JetExpr:
    """Canonical form of `e`.  JetExprs are always canonical, so this is the
    identity; it exists so the normalization contract has a name."""
    return JetExpr.wrap(e)


# --------------------------------------------------------------------------
# total derivative
# --------------------------------------------------------------------------

def _symbol_derivative(s: sp.Symbol) -> sp.Expr:
    a = atom_of(s)
    if isinstance(a, Jet):
        return _jet_symbol(a.field, a.order + 1)
    if isinstance(a, Param):
        return sp.S.Zero
    return dinv_body(a.index)._quotient()


def _d_quotient(num: sp.Expr, den: sp.Expr) -> tuple[sp.Expr, sp.Expr]:
    dnum = sp.S.Zero
    for s in num.free_symbols:
        dnum += sp.diff(num, s) * _symbol_derivative(s)
    dden = sp.S.Zero
    for s in den.free_symbols:
        dden += sp.diff(den, s) * _symbol_derivative(s)
    return dnum * den - num * dden, den ** 2


def total_derivative(e: JetExpr, times: int = 1) -> JetExpr:
    """Total x-derivative: jets shift up one order, D(Dinv(f)) -> f."""
    e = JetExpr.wrap(e)
    for _ in range(times):
        num, den = _d_quotient(e._num, e._den)
        e = JetExpr(num, den)
    return e


D = total_derivative


# --------------------------------------------------------------------------
# substitution with automatic prolongation
# --------------------------------------------------------------------------

class SubstitutionSet:
    """Rules mapping a field's jets to expressions.

    A rule is keyed by ``field`` (base order 0) or ``(field, k)``; jet
    variables of order >= k are produced by prolongation (repeated total
    derivatives of the rule).  Jets below the base order are unresolvable.
    """

    def __init__(self, rules: Mapping):
        self._base: dict[str, tuple[int, JetExpr]] = {}
        for key, value in rules.items():
            if isinstance(key, str):
                field, order = key, 0
            else:
                field, order = key
            if field in self._base:
                raise ValueError(f"duplicate rule for field {field!r}")
            self._base[field] = (order, JetExpr.wrap(value))
        self._cache: dict[tuple[str, int], sp.Expr] = {}

    @staticmethod
    def coerce(rules) -> "SubstitutionSet":
        if isinstance(rules, SubstitutionSet):
            return rules
        return SubstitutionSet(rules)

    def fields(self) -> set[str]:
        return set(self._base)

    def base_rule(self, field: str) -> tuple[int, JetExpr]:
        return self._base[field]

    def items(self):
        for field, (order, expr) in sorted(self._base.items()):
            yield field, order, expr

    def resolve(self, field: str, order: int) -> sp.Expr:
        base_order, base_expr = self._base[field]
        if order < base_order:
            raise UnresolvableJetError(
                f"jet variable {field}{{{order}}} cannot be derived from the "
                f"rule given at order {base_order}")
        key = (field, order)
        if key not in self._cache:
            lower = base_expr if order == base_order else JetExpr(
                self.resolve(field, order - 1))
            expr = lower if order == base_order else total_derivative(lower)
            self._cache[key] = JetExpr.wrap(expr)._quotient()
        return self._cache[key]


def substitute(e: JetExpr, rules) -> JetExpr:
    """Replace ruled fields everywhere (including inside nonlocal atoms)."""
    e = JetExpr.wrap(e)
    subs = SubstitutionSet.coerce(rules)
    ruled = subs.fields()
    mapping: dict[sp.Symbol, sp.Expr] = {}
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = atom_of(s)
        if isinstance(a, Jet) and a.field in ruled:
            mapping[s] = subs.resolve(a.field, a.order)
        elif isinstance(a, Nonlocal):
            body = dinv_body(a.index)
            if body.fields() & ruled:
                mapping[s] = dinv(substitute(body, subs))._quotient()
    if not mapping:
        return e
    return JetExpr(e._num.xreplace(mapping), e._den.xreplace(mapping))


def rename_field(e: JetExpr, old: str, new: str) -> JetExpr:
    return substitute(e, {old: jet(new)})


# --------------------------------------------------------------------------
# Frechet (directional) derivative
# --------------------------------------------------------------------------

def frechet_derivative(e: JetExpr, field: str, direction: str) -> JetExpr:
    """Directional derivative with respect to `field` along a fresh field.

    Nonlocal atoms differentiate under the integral sign.
    """
    e = JetExpr.wrap(e)
    if direction in e.fields():
        raise ValueError(f"direction field {direction!r} occurs in the expression")
    expr = e._quotient()
    out = ZERO
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = atom_of(s)
        if isinstance(a, Jet) and a.field == field:
            out = out + JetExpr(sp.diff(expr, s)) * jet(direction, a.order)
        elif isinstance(a, Nonlocal):
            inner = frechet_derivative(dinv_body(a.index), field, direction)
            if not inner.is_zero:
                out = out + JetExpr(sp.diff(expr, s)) * dinv(inner)
    return out


# --------------------------------------------------------------------------
# time derivative along registered flows
# --------------------------------------------------------------------------

def time_derivative(e: JetExpr, flows: Mapping[str, JetExpr]) -> JetExpr:
    """d/dt of `e` where each field evolves by field_t = flows[field]."""
    e = JetExpr.wrap(e)
    cache: dict[tuple[str, int], JetExpr] = {}

    def jet_rate(field: str, order: int) -> JetExpr:
        if field not in flows:
            raise KeyError(f"no registered flow for field {field!r}")
        key = (field, order)
        if key not in cache:
            if order == 0:
                cache[key] = JetExpr.wrap(flows[field])
            else:
                cache[key] = total_derivative(jet_rate(field, order - 1))
        return cache[key]

    expr = e._quotient()
    out = ZERO
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = atom_of(s)
        if isinstance(a, Jet):
            out = out + JetExpr(sp.diff(expr, s)) * jet_rate(a.field, a.order)
        elif isinstance(a, Nonlocal):
            inner = time_derivative(dinv_body(a.index), flows)
            if not inner.is_zero:
                out = out + JetExpr(sp.diff(expr, s)) * dinv(inner)
    return out


# --------------------------------------------------------------------------
# exact integration (reverse total derivative) and nonlocal atoms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NotExact:
    """Witness that an expression is not a total x-derivative in the rational
    class: the stuck remainder plus variational derivatives per field (the
    Euler witness is only evaluated for nonlocal-free remainders)."""
    remainder: JetExpr
    euler: dict

    def __bool__(self):
        return False


def _integrate_single(coeff: sp.Expr, var: sp.Symbol) -> sp.Expr | None:
    """Antiderivative of a rational coefficient in one symbol, or None when it
    leaves the rational class (logarithmic obstruction)."""
    num, den = sp.fraction(sp.cancel(sp.together(coeff)))
    if var not in den.free_symbols:
        poly = sp.Poly(num, var)
        out = sp.S.Zero
        for (k,), c in poly.terms():
            out += c * var ** (k + 1) / (k + 1)
        return out / den
    result = sp.integrate(coeff, var)
    if result.atoms(sp.log, sp.atan, sp.atan2, sp.Piecewise, sp.Integral):
        return None
    return sp.cancel(result)


def _jet_peel(e: JetExpr) -> tuple[JetExpr, JetExpr]:
    """Greedy integration by parts on a nonlocal-free expression.

    Returns (g, r) with e = D(g) + r and r the deterministic stuck remainder.
    """
    g = ZERO
    work = e
    while True:
        if work.is_zero:
            return g, ZERO
        jets = [a for a in work.atoms() if isinstance(a, Jet)]
        tops = [(a.order, a.field) for a in jets if a.order >= 1]
        if not tops:
            return g, work
        order, field = max(tops)
        s_top = _jet_symbol(field, order)
        expr = work._quotient()
        if sp.degree(sp.fraction(expr)[0], s_top) != 1 or \
                s_top in sp.fraction(expr)[1].free_symbols:
            return g, work
        coeff = sp.cancel(sp.diff(expr, s_top))
        if s_top in coeff.free_symbols:
            return g, work
        # cross-field safety: the coefficient must live strictly below the top
        blocked = any(isinstance(a, Jet) and a.order >= order
                      for a in JetExpr(coeff).atoms())
        if blocked or JetExpr(coeff).has_nonlocal():
            return g, work
        lower = _jet_symbol(field, order - 1)
        anti = _integrate_single(coeff, lower)
        if anti is None:
            return g, work
        piece = JetExpr(anti)
        g = g + piece
        work = work - total_derivative(piece)


def _decompose_atom_monomials(e: JetExpr):
    """Split e into (atom-monomial sympy expr, coefficient JetExpr) pairs plus
    the nonlocal-free rest.  Coefficients keep the canonical denominator."""
    atom_syms = sorted((s for s in e.symbols()
                        if isinstance(atom_of(s), Nonlocal)),
                       key=lambda s: s.name)
    if not atom_syms:
        return [], e
    num, den = e.pair()
    poly = sp.Poly(num, *atom_syms)
    parts = []
    rest_num = sp.S.Zero
    for monom, coeff in poly.terms():
        mono_expr = sp.Mul(*[s ** k for s, k in zip(atom_syms, monom)])
        if all(k == 0 for k in monom):
            rest_num += coeff
        else:
            parts.append((mono_expr, monom, JetExpr(coeff, den)))
    return [(m, mm, c, atom_syms) for (m, mm, c) in parts], JetExpr(rest_num, den)


def integrate_partial(e: JetExpr) -> tuple[JetExpr, JetExpr]:
    """Split e = D(g) + r, peeling off the largest exact part this algorithm
    can see.  Handles terms linear-and-higher in nonlocal atoms by parts when
    their coefficients integrate exactly."""
    e = JetExpr.wrap(e)
    g = ZERO
    stuck = ZERO
    work = e
    for _ in range(64):
        parts, rest = _decompose_atom_monomials(work)
        if not parts:
            break
        # deepest atom monomial first (grlex on the atom exponent vector)
        parts.sort(key=lambda p: (sum(p[1]), p[1]), reverse=True)
        mono_expr, monom, coeff, atom_syms = parts[0]
        # refuse to peel through atoms whose bodies contain atoms themselves
        nested = any(k > 0 and dinv_body(atom_of(s).index).has_nonlocal()
                     for s, k in zip(atom_syms, monom))
        mono = JetExpr(mono_expr)
        if nested:
            stuck = stuck + coeff * mono
            work = work - coeff * mono
            continue
        c_int, c_rem = _jet_peel(coeff)
        if not c_rem.is_zero:
            stuck = stuck + c_rem * mono
        if c_int.is_zero:
            work = work - c_rem * mono
            continue
        g = g + c_int * mono
        work = work - total_derivative(c_int * mono) - c_rem * mono
    else:  # pragma: no cover - safety net
        stuck = stuck + work
        work = ZERO
    g2, r2 = _jet_peel(work)
    return g + g2, stuck + r2


def _split_primitive(e: JetExpr) -> list[tuple[sp.Rational, JetExpr]]:
    """Write e as a sum of content-normalized monomial-over-denominator
    pieces; used to canonicalize nonlocal atom bodies."""
    num, den = e.pair()
    pieces = []
    for term in sp.Add.make_args(num):
        piece = JetExpr(term, den)
        pn, pd = piece.pair()
        syms = sorted(pn.free_symbols, key=lambda s: s.name)
        if syms:
            content = sp.Poly(pn, *syms).content() * \
                (1 if sp.Poly(pn, *syms).LC() > 0 else -1)
        else:
            content = pn
        if content == 0:
            continue
        body = JetExpr(pn / content, pd)
        pieces.append((sp.Rational(content), body))
    return pieces


def dinv(e: JetExpr) -> JetExpr:
    """Antiderivative from -infinity (zero integration constant, decaying
    fields).  Exact parts integrate away; the rest becomes canonical nonlocal
    atoms: bodies are split additively, content-normalized and interned."""
    e = JetExpr.wrap(e)
    if e.is_zero:
        return ZERO
    g, residual = integrate_partial(e)
    out = g
    if residual.is_zero:
        return out
    merged: dict[sp.Symbol, sp.Rational] = {}
    for content, body in _split_primitive(residual):
        sub_g, sub_r = integrate_partial(body)
        if sub_r != body:  # a split piece became (partly) integrable
            out = out + JetExpr(content) * sub_g
            for c2, b2 in _split_primitive(sub_r):
                s = _intern_dinv(b2)
                merged[s] = merged.get(s, sp.S.Zero) + content * c2
        else:
            s = _intern_dinv(body)
            merged[s] = merged.get(s, sp.S.Zero) + content
    for s, c in sorted(merged.items(), key=lambda kv: kv[0].name):
        if c != 0:
            out = out + JetExpr(c * s)
    return out


def euler_derivative(e: JetExpr, field: str) -> JetExpr:
    """Variational derivative delta e / delta field.

    Annihilates total x-derivatives; a nonzero value is the standard witness
    that an expression is not in the image of D.  Only defined for
    nonlocal-free expressions.
    """
    e = JetExpr.wrap(e)
    if e.has_nonlocal():
        raise ValueError("Euler operator is defined for nonlocal-free expressions")
    expr = e._quotient()
    out = ZERO
    for k in range(e.max_order(field) + 1):
        term = JetExpr(sp.diff(expr, _jet_symbol(field, k)))
        term = total_derivative(term, k)
        out = out + (term if k % 2 == 0 else -term)
    return out


def integrate_exact(e: JetExpr) -> JetExpr | NotExact:
    """Return g with D(g) = e when e is a total x-derivative in the rational
    class, otherwise a :class:`NotExact` witness.

    The witness carries the variational derivatives of the remainder; note
    that expressions with only non-rational antiderivatives (e.g. logarithmic
    ones) are reported NotExact with a vanishing Euler witness.
    """
    e = JetExpr.wrap(e)
    g, residual = integrate_partial(e)
    if residual.is_zero:
        return g
    euler = {}
    if not residual.has_nonlocal():
        euler = {f: euler_derivative(residual, f) for f in sorted(residual.fields())}
    return NotExact(remainder=residual, euler=euler)


# --------------------------------------------------------------------------
# zero test modulo decay at -infinity
# --------------------------------------------------------------------------

def is_zero_modulo_decay(e: JetExpr, depth: int = 4) -> bool:
    """Sound (incomplete) zero test for expressions with nonlocal atoms.

    If every additive term vanishes at -infinity (all jets and atoms decay)
    and the total derivative is zero, the expression is zero.  Returns False
    when undecidable within `depth` derivatives.
    """
    e = JetExpr.wrap(e)
    if e.is_zero:
        return True
    if depth <= 0:
        return False
    decayers = {s: sp.S.Zero for s in e.symbols()
                if not isinstance(atom_of(s), Param)}
    if not decayers:
        return False
    num, den = e.pair()
    num0 = num.xreplace(decayers)
    den0 = den.xreplace(decayers)
    if den0 == 0 or num0 != 0:
        return False
    return is_zero_modulo_decay(total_derivative(e), depth - 1)


# --------------------------------------------------------------------------
# printing
# --------------------------------------------------------------------------

class _Printer(sp.printing.str.StrPrinter):
    def _print_Symbol(self, s):
        a = _atom_of_symbol.get(s)
        if a is None:
            return s.name
        if isinstance(a, Jet):
            if a.order == 0:
                return a.field
            if a.order <= 3:
                return f"{a.field}_{'x' * a.order}"
            return f"{a.field}{{{a.order}}}"
        if isinstance(a, Param):
            return a.name
        return f"Dinv({to_text(dinv_body(a.index))})"

    def _print_Pow(self, expr, rational=False):
        base, exp = expr.as_base_exp()
        text = self._print(base)
        if not (base.is_Symbol or base.is_Integer):
            text = f"({text})"
        return f"{text}^{self._print(exp)}"


_printer = _Printer()


def to_text(e: JetExpr) -> str:
    e = JetExpr.wrap(e)
    num, den = e.pair()
    if den == 1:
        return _printer.doprint(num)
    num_text = _printer.doprint(num)
    den_text = _printer.doprint(den)
    if num.is_Add:
        num_text = f"({num_text})"
    if den.is_Add or den.is_Mul or isinstance(den, sp.Pow):
        den_text = f"({den_text})"
    return f"{num_text}/{den_text}"


# --------------------------------------------------------------------------
# convenience: classical derived expressions
# --------------------------------------------------------------------------

def schwarzian(field: str) -> JetExpr:
    """(f_xx/f_x)_x - (1/2)(f_xx/f_x)^2 expanded as a rational jet expression."""
    f1, f2 = jet(field, 1), jet(field, 2)
    ratio = f2 / f1
    return total_derivative(ratio) - ratio * ratio / 2
