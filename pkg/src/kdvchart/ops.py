"""Formal pseudo-differential operator algebra.

A :class:`PseudoOp` is a sum of weighted compositions of the factors
``Mul(expr)``, ``D`` and ``Dinv``.  Normal form merges adjacent
multiplication factors and cancels D/Dinv pairs (the Dinv-then-D direction
uses the decaying-field assumption and is recorded); operator equality in the
presence of Dinv is certified by probing actions, not by normal forms.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import sympy as sp

from . import jets
from .jets import (
    JetExpr,
    SubstitutionSet,
    UnresolvableJetError,
    atom_of,
    dinv,
    dinv_body,
    is_zero_modulo_decay,
    jet,
    to_text,
    total_derivative,
)

DECAY = "decay"


@dataclass(frozen=True)
class Mul:
    coeff: JetExpr

    def text(self) -> str:
        return f"[{to_text(self.coeff)}]"


class _Diff:
    __slots__ = ()

    def text(self) -> str:
        return "D"


class _DiffInv:
    __slots__ = ()

    def text(self) -> str:
        return "Dinv"


D_FACTOR = _Diff()
DINV_FACTOR = _DiffInv()

Factor = object  # Mul | _Diff | _DiffInv


def _normalize_term(weight: Fraction, factors: Sequence[Factor],
                    assumptions: set[str]):
    stack: list[Factor] = []
    w = Fraction(weight)
    for f in factors:
        if isinstance(f, Mul):
            if f.coeff.is_zero:
                return None
            if f.coeff.is_rational_constant:
                w *= f.coeff.as_fraction()
                continue
            if stack and isinstance(stack[-1], Mul):
                merged = stack.pop().coeff * f.coeff
                if merged.is_rational_constant:
                    w *= merged.as_fraction()
                else:
                    stack.append(Mul(merged))
                continue
            stack.append(f)
        elif f is D_FACTOR:
            if stack and stack[-1] is DINV_FACTOR:
                # Dinv o D applied-after: this is D(Dinv(.)) which always fires
                stack.pop()
                continue
            stack.append(f)
        elif f is DINV_FACTOR:
            if stack and stack[-1] is D_FACTOR:
                # D o Dinv composition order: Dinv(D(.)) needs decay
                stack.pop()
                assumptions.add(DECAY)
                continue
            stack.append(f)
        else:
            raise TypeError(f"bad factor {f!r}")
    if w == 0:
        return None
    return w, tuple(stack)


def _term_key(factors: tuple[Factor, ...]) -> str:
    return "*".join(f.text() for f in factors) or "1"


class PseudoOp:
    """Immutable formal operator: sum of weighted factor compositions."""

    __slots__ = ("terms", "assumptions")

    def __init__(self, terms: Iterable[tuple[Fraction, tuple[Factor, ...]]],
                 assumptions: Iterable[str] = ()):
        notes = set(assumptions)
        bucket: dict[str, tuple[Fraction, tuple[Factor, ...]]] = {}
        for weight, factors in terms:
            norm = _normalize_term(weight, factors, notes)
            if norm is None:
                continue
            w, fs = norm
            key = _term_key(fs)
            if key in bucket:
                w0, _ = bucket[key]
                w = w0 + w
            if w == 0:
                bucket.pop(key, None)
            else:
                bucket[key] = (w, fs)
        self.terms = tuple(bucket[k] for k in sorted(bucket))
        self.assumptions = frozenset(notes)

    # -- constructors ---------------------------------------------------------
    @staticmethod
    def identity() -> "PseudoOp":
        return PseudoOp([(Fraction(1), ())])

    @staticmethod
    def zero() -> "PseudoOp":
        return PseudoOp([])

    @staticmethod
    def diff(power: int = 1) -> "PseudoOp":
        return PseudoOp([(Fraction(1), (D_FACTOR,) * power)])

    @staticmethod
    def dinv(power: int = 1) -> "PseudoOp":
        return PseudoOp([(Fraction(1), (DINV_FACTOR,) * power)])

    @staticmethod
    def mul(coeff) -> "PseudoOp":
        return PseudoOp([(Fraction(1), (Mul(JetExpr.wrap(coeff)),))])

    # -- algebra ----------------------------------------------------------------
    def __add__(self, other: "PseudoOp") -> "PseudoOp":
        return PseudoOp([*self.terms, *other.terms],
                        self.assumptions | other.assumptions)

    def __sub__(self, other: "PseudoOp") -> "PseudoOp":
        return self + (-other)

    def __neg__(self) -> "PseudoOp":
        return self.scale(-1)

    def scale(self, c) -> "PseudoOp":
        c = Fraction(c)
        return PseudoOp([(w * c, fs) for w, fs in self.terms], self.assumptions)

    def __mul__(self, other: "PseudoOp") -> "PseudoOp":
        """Operator composition: (a * b)(e) = a(b(e))."""
        if not isinstance(other, PseudoOp):
            return NotImplemented
        terms = []
        for w1, f1 in self.terms:
            for w2, f2 in other.terms:
                terms.append((w1 * w2, f1 + f2))
        return PseudoOp(terms, self.assumptions | other.assumptions)

    def __pow__(self, n: int) -> "PseudoOp":
        if n < 0:
            raise ValueError("no general operator inverse")
        out = PseudoOp.identity()
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, PseudoOp):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def text(self) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for w, fs in self.terms:
            body = _term_key(fs)
            if w == 1:
                chunk = body
            elif w == -1:
                chunk = f"-{body}" if body != "1" else "-1"
            else:
                frac = str(w) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"
                chunk = f"{frac}*{body}" if body != "1" else frac
            chunks.append(chunk)
        out = chunks[0]
        for chunk in chunks[1:]:
            out += f" - {chunk[1:]}" if chunk.startswith("-") else f" + {chunk}"
        return out

    def __repr__(self):
        return f"PseudoOp({self.text()})"

    # -- action -----------------------------------------------------------------
    def apply(self, e) -> JetExpr:
        return op_apply(self, e)

    def coefficients(self) -> list[JetExpr]:
        return [f.coeff for _, fs in self.terms for f in fs if isinstance(f, Mul)]

    def fields(self) -> set[str]:
        out = set()
        for c in self.coefficients():
            out |= c.fields()
        return out


def op_apply(op: PseudoOp, e) -> JetExpr:
    """Evaluate the operator on an expression, factors right to left.

    Dinv first integrates exactly and only mints nonlocal atoms for the
    non-integrable remainder.
    """
    e = JetExpr.wrap(e)
    out = jets.ZERO
    for weight, factors in op.terms:
        cur = e
        for f in reversed(factors):
            try:
                if isinstance(f, Mul):
                    cur = f.coeff * cur
                elif f is D_FACTOR:
                    cur = total_derivative(cur)
                else:
                    cur = dinv(cur)
            except jets.JetOrderError as exc:
                raise jets.JetOrderError(
                    f"{exc} (while applying term {_term_key(factors)})") from exc
        out = out + JetExpr.wrap(Fraction(weight)) * cur
    return out


def op_compose(a: PseudoOp, b: PseudoOp) -> PseudoOp:
    return a * b


def substitute_op(op: PseudoOp, rules) -> PseudoOp:
    """Apply a substitution rule set (or a coefficient-mapping callable) to
    every multiplication coefficient."""
    if callable(rules) and not isinstance(rules, SubstitutionSet):
        mapper = rules
    else:
        rule_set = SubstitutionSet.coerce(rules)

        def mapper(coeff):
            return jets.substitute(coeff, rule_set)

    terms = []
    for w, fs in op.terms:
        new_fs = []
        for f in fs:
            if isinstance(f, Mul):
                try:
                    new_fs.append(Mul(mapper(f.coeff)))
                except UnresolvableJetError as exc:
                    raise UnresolvableJetError(
                        f"unresolvable restriction: {exc}") from exc
            else:
                new_fs.append(f)
        terms.append((w, tuple(new_fs)))
    return PseudoOp(terms, op.assumptions)


def leibniz_push_left(op: PseudoOp) -> PseudoOp:
    """Rewrite every term so multiplication factors sit as far left as the
    Dinv factors allow, commuting them past D via the product rule.  The
    action is unchanged; segment coefficients consolidate, which algebraic
    restrictions need."""
    pending = list(op.terms)
    done = []
    while pending:
        weight, factors = pending.pop()
        for i in range(len(factors) - 1):
            if factors[i] is D_FACTOR and isinstance(factors[i + 1], Mul):
                coeff = factors[i + 1].coeff
                swapped = factors[:i] + (factors[i + 1], D_FACTOR) + factors[i + 2:]
                derived = factors[:i] + (Mul(total_derivative(coeff)),) + factors[i + 2:]
                pending.append((weight, swapped))
                pending.append((weight, derived))
                break
        else:
            done.append((weight, factors))
    return PseudoOp(done, op.assumptions)


# --------------------------------------------------------------------------
# linearized Backlund operators and their certified inverses
# --------------------------------------------------------------------------

class NonInvertibleOperatorError(ValueError):
    pass


@dataclass(frozen=True)
class LinearBTOperator:
    """Frechet derivative of a Backlund relation with respect to one field,
    as an operator acting on the direction field, together with an
    invertibility certificate (an explicit inverse operator)."""
    op: PseudoOp
    inverse: PseudoOp | None = None
    assumptions: tuple[str, ...] = ()

    def require_inverse(self) -> PseudoOp:
        if self.inverse is None:
            raise NonInvertibleOperatorError(
                f"non-invertible Frechet operator: {self.op.text()}")
        return self.inverse

    def check_inverse(self, probes: Sequence[JetExpr],
                      rules=None) -> bool:
        """Probe op(inverse(p)) == p (after optional validity substitution)."""
        inv = self.require_inverse()
        both = self.op * inv
        if rules is not None:
            both = substitute_op(both, rules)
        for p in probes:
            image = op_apply(both, p)
            if image != p and not is_zero_modulo_decay(image - p):
                return False
        return True


def invert_factored(op: PseudoOp) -> PseudoOp:
    """Mechanical inverse of a single-term factored operator: reverse the
    factors, inverting each (Mul by its reciprocal, D by Dinv under decay)."""
    if len(op.terms) != 1:
        raise NonInvertibleOperatorError(
            f"cannot mechanically invert a {len(op.terms)}-term operator")
    weight, factors = op.terms[0]
    inv_factors = []
    for f in reversed(factors):
        if isinstance(f, Mul):
            inv_factors.append(Mul(jets.ONE / f.coeff))
        elif f is D_FACTOR:
            inv_factors.append(DINV_FACTOR)
        else:
            inv_factors.append(D_FACTOR)
    return PseudoOp([(Fraction(1) / weight, tuple(inv_factors))],
                    op.assumptions | {DECAY})


def linear_bt_operator(op: PseudoOp, inverse: PseudoOp | None = None,
                       assumptions: Iterable[str] = ()) -> LinearBTOperator:
    if inverse is None:
        try:
            inverse = invert_factored(op)
        except NonInvertibleOperatorError:
            inverse = None
    return LinearBTOperator(op=op, inverse=inverse,
                            assumptions=tuple(assumptions))


# --------------------------------------------------------------------------
# extraction: a JetExpr linear in a direction field -> PseudoOp
# --------------------------------------------------------------------------

def linear_operator_from(e: JetExpr, direction: str) -> PseudoOp:
    """Read a linear-in-`direction` expression as an operator acting on the
    direction field; nonlocal atoms whose bodies carry the direction become
    Dinv compositions."""
    e = JetExpr.wrap(e)
    if e.is_zero:
        return PseudoOp.zero()
    num, den = e.pair()
    den_fields = JetExpr(den).fields()
    if direction in den_fields:
        raise ValueError(f"direction {direction!r} occurs in a denominator")

    dir_syms = []
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = atom_of(s)
        if isinstance(a, jets.Jet) and a.field == direction:
            dir_syms.append(s)
        elif isinstance(a, jets.Nonlocal) and \
                direction in dinv_body(a.index).fields():
            dir_syms.append(s)
    if not dir_syms:
        raise ValueError(f"expression does not involve {direction!r}")

    poly = sp.Poly(num, *dir_syms)
    out = PseudoOp.zero()
    for monom, coeff in poly.terms():
        total = sum(monom)
        if total == 0:
            raise ValueError("expression has a direction-free part")
        if total > 1:
            raise ValueError("expression is not linear in the direction")
        idx = next(i for i, k in enumerate(monom) if k == 1)
        s = dir_syms[idx]
        a = atom_of(s)
        head = PseudoOp.mul(JetExpr(coeff, den))
        if isinstance(a, jets.Jet):
            out = out + head * PseudoOp.diff(a.order)
        else:
            inner = linear_operator_from(dinv_body(a.index), direction)
            out = out + head * PseudoOp.dinv() * inner
    return out


# --------------------------------------------------------------------------
# conjugation: the recursion-operator transformation formula
# --------------------------------------------------------------------------

def transform_recursion_operator(phi: PseudoOp,
                                 b_from: LinearBTOperator,
                                 b_to: LinearBTOperator,
                                 restriction=None) -> PseudoOp:
    """Pi * phi * Pi^-1 with Pi = -B_to^-1 B_from, restricted along the link.

    `restriction` is a substitution rule set expressing the source field's
    jets in terms of the target field; it is applied to every coefficient.
    """
    pi = (b_to.require_inverse() * b_from.op).scale(-1)
    pi_inv = (b_from.require_inverse() * b_to.op).scale(-1)
    out = pi * phi * pi_inv
    if restriction is not None:
        if callable(restriction) and not isinstance(restriction, SubstitutionSet):
            out = leibniz_push_left(out)
        out = substitute_op(out, restriction)
    return out


# --------------------------------------------------------------------------
# probe-based equivalence
# --------------------------------------------------------------------------

def standard_probes(fld: str) -> list[JetExpr]:
    f0, f1, f2 = jet(fld, 0), jet(fld, 1), jet(fld, 2)
    return [f1, f0 * f1, f2 / f0]


def random_probes(fld: str, count: int, seed: int = 0,
                  max_order: int = 2) -> list[JetExpr]:
    """Deterministic random polynomial probes with rational coefficients."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        expr = jets.ZERO
        for _ in range(rng.randint(1, 3)):
            coeff = Fraction(rng.randint(-6, 6) or 1, rng.randint(1, 4))
            mono = jets.const(coeff)
            for _ in range(rng.randint(1, 2)):
                mono = mono * jet(fld, rng.randint(0, max_order))
            expr = expr + mono
        if expr.is_zero:
            expr = jet(fld, 1)
        out.append(expr)
    return out


@dataclass
class ProbeResult:
    probe: str
    symbolic_equal: bool
    via_decay_rule: bool
    image_a: str
    image_b: str
    via_pushdown: bool = False


@dataclass
class EquivalenceReport:
    operator_a: str
    operator_b: str
    probes: list[ProbeResult]
    numeric_residuals: list[float] = field(default_factory=list)
    numeric_tolerance: float | None = None

    @property
    def symbolic_equal(self) -> bool:
        return all(p.symbolic_equal for p in self.probes)

    @property
    def numeric_equal(self) -> bool:
        if self.numeric_tolerance is None:
            return True
        return all(r < self.numeric_tolerance for r in self.numeric_residuals)

    @property
    def equivalent(self) -> bool:
        return self.symbolic_equal and self.numeric_equal

    def first_witness(self) -> ProbeResult | None:
        for p in self.probes:
            if not p.symbolic_equal:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "operator_a": self.operator_a,
            "operator_b": self.operator_b,
            "symbolic_equal": self.symbolic_equal,
            "numeric_equal": self.numeric_equal,
            "probes": [vars(p) for p in self.probes],
            "numeric_residuals": self.numeric_residuals,
            "numeric_tolerance": self.numeric_tolerance,
        }


def op_equiv(a: PseudoOp, b: PseudoOp, fld: str, probes: int = 5,
             seed: int = 0) -> EquivalenceReport:
    """Certify operator equality by action on the standard probe family plus
    seeded random expressions.  Numeric grid probes are appended by
    numerics.attach_numeric_probes (kept separate to avoid a cycle)."""
    if probes < 1:
        raise ValueError("probes >= 1 required")
    probe_exprs = standard_probes(fld) + random_probes(fld, probes, seed)
    results = []
    pushed: tuple[PseudoOp, PseudoOp] | None = None
    for p in probe_exprs:
        ia = op_apply(a, p)
        ib = op_apply(b, p)
        direct = ia == ib
        via_decay = via_push = False
        if not direct:
            via_decay = is_zero_modulo_decay(ia - ib)
        if not (direct or via_decay):
            # harmonize nonlocal presentations before giving up
            if pushed is None:
                pushed = (leibniz_push_left(a), leibniz_push_left(b))
            ia2 = op_apply(pushed[0], p)
            ib2 = op_apply(pushed[1], p)
            via_push = ia2 == ib2 or is_zero_modulo_decay(ia2 - ib2)
        results.append(ProbeResult(
            probe=to_text(p),
            symbolic_equal=direct or via_decay or via_push,
            via_decay_rule=via_decay,
            via_pushdown=via_push,
            image_a=to_text(ia),
            image_b=to_text(ib)))
    return EquivalenceReport(operator_a=a.text(), operator_b=b.text(),
                             probes=results)


# --------------------------------------------------------------------------
# hierarchies
# --------------------------------------------------------------------------

def hierarchy_generate(op: PseudoOp, seed_expr, n: int) -> list[JetExpr]:
    """[op(seed), op^2(seed), ..., op^n(seed)], each normalized; members that
    do not close in the rational class carry explicit nonlocal atoms."""
    if n < 1:
        raise ValueError("n >= 1 required")
    out = []
    cur = JetExpr.wrap(seed_expr)
    for _ in range(n):
        cur = op_apply(op, cur)
        out.append(cur)
    return out
