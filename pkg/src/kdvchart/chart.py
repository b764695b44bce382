"""Chart registry: equations, Backlund links and invariances as data, with
symbolic verification, link composition and invariance derivation.

Verification follows the proof pattern of the source chart: substitute the
link's solved form into the time derivative of the relation, eliminate time
derivatives through the registered flows, and reduce the residual to zero
exactly.  Reciprocal links are refused here and handled by the numeric lab.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import sympy as sp

from . import jets, parser
from .jets import (
    JetExpr,
    SubstitutionSet,
    UnresolvableJetError,
    dinv,
    frechet_derivative,
    integrate_exact,
    jet,
    substitute,
    time_derivative,
    to_text,
    total_derivative,
)
from .ops import (
    LinearBTOperator,
    PseudoOp,
    hierarchy_generate,
    linear_bt_operator,
    linear_operator_from,
    op_apply,
    op_equiv,
    substitute_op,
    transform_recursion_operator,
)

_DIRECTION = "dirq"  # reserved direction field for Frechet extraction


class ChartError(ValueError):
    pass


class AlgebraicResidueError(ChartError):
    """A quadratic-extension reduction left an odd power of the root."""


# --------------------------------------------------------------------------
# registry node / edge types
# --------------------------------------------------------------------------

@dataclass
class EquationDef:
    name: str
    field: str
    flow: JetExpr                      # field_t = flow (rational form)
    multiplier: JetExpr                # display multiplier (s^2 for int-sol)
    operator: PseudoOp | None = None
    operator_text: str | None = None
    seed: JetExpr | None = None
    base_applications: int = 1         # op^base(seed) == flow
    notes: tuple[str, ...] = ()

    def stored_rhs(self) -> JetExpr:
        """Polynomial right side as written (multiplier * flow)."""
        return self.multiplier * self.flow

    def check_self_consistency(self) -> bool:
        if self.operator is None or self.seed is None:
            return True
        image = self.seed
        for _ in range(self.base_applications):
            image = op_apply(self.operator, image)
        return image == self.flow

    def equation_text(self) -> str:
        lhs = f"{self.field}_t"
        if self.multiplier != jets.ONE:
            lhs = f"{to_text(self.multiplier)}*{lhs}"
        return f"{lhs} = {to_text(self.stored_rhs())}"


@dataclass
class BacklundLink:
    name: str
    kind: str                          # differential | reciprocal | derived...
    source: str
    target: str
    relation: JetExpr | None
    defined_field: str | None = None
    rules: SubstitutionSet | None = None          # eliminate defined_field
    reverse_rules: SubstitutionSet | None = None
    algebraic_reverse: tuple[str, int, JetExpr] | None = None
    frechet: dict = dc_field(default_factory=dict)  # field -> LinearBTOperator
    squared_rule: tuple[str, JetExpr] | None = None  # (hatfield, expr) for ^2
    aux_relations: tuple[JetExpr, ...] = ()
    assumptions: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def relation_text(self) -> str:
        if self.relation is None:
            return "(reciprocal: xbar = Dinv(s), rho(xbar) = s(x))"
        return f"{to_text(self.relation)} = 0"


@dataclass
class Invariance:
    name: str
    on: str
    kind: str                           # pointwise | nonlocal-squared | reference
    rule: tuple[str, int, JetExpr] | None
    assumptions: tuple[str, ...] = ()
    chart_loop: bool = True
    notes: tuple[str, ...] = ()

    def rule_text(self) -> str:
        if self.rule is None:
            return "(reference only)"
        f, p, e = self.rule
        lhs = f if p == 1 else f"{f}^{p}"
        return f"{lhs} = {to_text(e)}"


@dataclass
class VerificationReport:
    name: str
    method: str
    verdict: str                        # verified | failed | refused | reference
    residual: str = "0"
    assumptions: tuple[str, ...] = ()
    details: dict = dc_field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.verdict == "verified"

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "method": self.method,
            "verdict": self.verdict,
            "residual": self.residual,
            "assumptions": list(self.assumptions),
            "details": self.details,
        }


# --------------------------------------------------------------------------
# quadratic-extension reduction: rewrite through field^2 = value
# --------------------------------------------------------------------------

def _derived_sqrt_jets(fld: str, value: JetExpr, max_order: int) -> dict[int, JetExpr]:
    """Jets of `fld` of order >= 1 as rational functions of fld itself and the
    value's jets, derived from fld^2 = value (so fld_x = D(value)/(2 fld), ...)."""
    out = {0: jet(fld)}
    if max_order >= 1:
        out[1] = total_derivative(value) / (2 * out[0])
    s1 = jets._jet_symbol(fld, 1)
    for k in range(2, max_order + 1):
        raw = total_derivative(out[k - 1])
        num, den = raw.pair()
        q1 = out[1]._quotient()
        out[k] = JetExpr(num.xreplace({s1: q1}), den.xreplace({s1: q1}))
    return out


def reduce_even_power(e: JetExpr, fld: str, value: JetExpr) -> tuple[JetExpr, bool]:
    """Rewrite `e` through the algebraic relation fld^2 = value.

    Returns (result, odd): when `odd` is true the true value of `e` is
    result * fld -- a single leftover root power, which relation-level callers
    may drop as a unit (fld != 0).  Raises AlgebraicResidueError for mixed
    parity.
    """
    e = JetExpr.wrap(e)
    max_k = e.max_order(fld, recursive=False)
    if max_k < 0 and not e.has_nonlocal():
        return e, False
    derived = _derived_sqrt_jets(fld, value, max(max_k, 0))
    w_sym = jets._jet_symbol(fld, 0)
    mapping = {}
    for s in sorted(e.symbols(), key=lambda x: x.name):
        a = jets.atom_of(s)
        if isinstance(a, jets.Jet) and a.field == fld and a.order >= 1:
            mapping[s] = derived[a.order]._quotient()
        elif isinstance(a, jets.Nonlocal):
            body = jets.dinv_body(a.index)
            if fld in body.fields():
                inner, odd = reduce_even_power(body, fld, value)
                if odd:
                    raise AlgebraicResidueError(
                        f"odd root power inside Dinv({to_text(body)})")
                mapping[s] = dinv(inner)._quotient()
    num, den = e.pair()
    e2 = JetExpr(num.xreplace(mapping), den.xreplace(mapping))

    value_q = JetExpr.wrap(value)._quotient()

    def split(p: sp.Expr) -> tuple[sp.Expr, sp.Expr]:
        if w_sym not in p.free_symbols:
            return p, sp.S.Zero
        even = odd = sp.S.Zero
        for (k,), c in sp.Poly(p, w_sym).terms():
            contrib = c * value_q ** (k // 2)
            if k % 2 == 0:
                even += contrib
            else:
                odd += contrib
        return even, odd

    num, den = e2.pair()
    a_n, b_n = split(num)
    a_d, b_d = split(den)
    if b_d != 0:
        # rationalize: multiply through by the conjugate a_d - b_d*fld
        new_num = sp.expand((a_n + b_n * w_sym) * (a_d - b_d * w_sym))
        a_n, b_n = split(new_num)
        den_expr = sp.cancel(a_d ** 2 - b_d ** 2 * value_q)
    else:
        den_expr = a_d
    if b_n == 0:
        return JetExpr(a_n, sp.S.One) / JetExpr(den_expr, sp.S.One), False
    if a_n == 0:
        return JetExpr(b_n, sp.S.One) / JetExpr(den_expr, sp.S.One), True
    raise AlgebraicResidueError(
        f"mixed parity in {fld!r} after reduction of {to_text(e)}")


def squared_field_flow(eq: EquationDef, squared_field: str) -> JetExpr:
    """Evolution equation satisfied by the square of eq's field, written in
    jets of `squared_field`:  (f^2)_t = 2 f flow(f) rewritten through
    f^2 = squared_field."""
    out, odd = reduce_even_power(2 * jet(eq.field) * eq.flow,
                                 eq.field, jet(squared_field))
    if odd:
        raise AlgebraicResidueError("squared flow kept an odd root power")
    return out


# --------------------------------------------------------------------------
# registry
# --------------------------------------------------------------------------

def _solved_rule_from_relation(relation: JetExpr, fld: str, order: int = 0):
    """Solve relation == 0 for jet(fld, order) when it occurs linearly."""
    s = jets._jet_symbol(fld, order)
    num, den = relation.pair()
    if s in den.free_symbols or sp.degree(num, s) != 1:
        return None
    coeff = sp.diff(num, s)
    if s in coeff.free_symbols:
        return None
    rest = JetExpr(num.xreplace({s: sp.S.Zero}), den)
    return -rest / JetExpr(coeff, den)


class ChartRegistry:
    """Append-only registry of equations, links and invariances."""

    def __init__(self):
        self.equations: dict[str, EquationDef] = {}
        self.links: dict[str, BacklundLink] = {}
        self.invariances: dict[str, Invariance] = {}
        self.field_to_equation: dict[str, str] = {}

    # -- construction ---------------------------------------------------------
    def add_equation(self, eq: EquationDef):
        if eq.name in self.equations:
            raise ChartError(f"duplicate equation {eq.name!r}")
        if eq.field == _DIRECTION:
            raise ChartError(f"field name {eq.field!r} is reserved")
        self.equations[eq.name] = eq
        self.field_to_equation[eq.field] = eq.name

    def add_link(self, link: BacklundLink):
        if link.name in self.links:
            raise ChartError(f"duplicate link {link.name!r}")
        self.links[link.name] = link

    def add_invariance(self, inv: Invariance):
        self.invariances[inv.name] = inv

    def equation(self, name: str) -> EquationDef:
        try:
            return self.equations[name]
        except KeyError:
            raise ChartError(f"unknown equation {name!r}") from None

    def link(self, name: str) -> BacklundLink:
        try:
            return self.links[name]
        except KeyError:
            raise ChartError(f"unknown link {name!r}") from None

    def invariance(self, name: str) -> Invariance:
        try:
            return self.invariances[name]
        except KeyError:
            raise ChartError(f"unknown invariance {name!r}") from None

    # -- document loading -------------------------------------------------------
    @staticmethod
    def from_document(doc: parser.ChartDocument) -> "ChartRegistry":
        reg = ChartRegistry()
        for eq in doc.equations:
            reg.add_equation(EquationDef(
                name=eq.name, field=eq.field, flow=eq.flow,
                multiplier=eq.multiplier, operator=eq.operator,
                operator_text=eq.operator_text, seed=eq.seed,
                base_applications=eq.base_applications, notes=eq.notes))
        for st in doc.links:
            reg.add_link(reg._link_from_stanza(st))
        for st in doc.invariances:
            reg.add_invariance(Invariance(
                name=st.name, on=st.on, kind=st.kind, rule=st.rule,
                assumptions=st.assumptions, chart_loop=st.chart_loop,
                notes=st.notes))
        return reg

    def _link_from_stanza(self, st: parser.LinkStanza) -> BacklundLink:
        source, target = st.source, st.target
        defined = st.solves[0][0] if st.solves else None
        if (source is None or target is None) and st.relation is not None:
            flds = sorted(st.relation.fields())
            eqs = [self.field_to_equation.get(f) for f in flds]
            if defined is not None and len(flds) == 2:
                other = next(f for f in flds if f != defined)
                source = source or self.field_to_equation[defined]
                target = target or self.field_to_equation[other]
        rules = SubstitutionSet({(f, k): e for f, k, e in st.solves}) \
            if st.solves else None
        reverse = SubstitutionSet({(f, k): e for f, k, e in st.reverses}) \
            if st.reverses else None
        link = BacklundLink(
            name=st.name, kind=st.kind, source=source, target=target,
            relation=st.relation, defined_field=defined, rules=rules,
            reverse_rules=reverse, algebraic_reverse=st.algebraic_reverse,
            assumptions=st.assumptions, notes=st.notes)
        if st.relation is not None:
            explicit = {c.field: c for c in st.inverts}
            for f in sorted(st.relation.fields()):
                expr = frechet_derivative(st.relation, f, _DIRECTION)
                op = linear_operator_from(expr, _DIRECTION)
                if f in explicit:
                    clause = explicit[f]
                    notes = tuple(
                        f"gauge inverse valid under {fld}{{{k}}} -> {to_text(e)}"
                        for fld, k, e in clause.assuming)
                    link.frechet[f] = LinearBTOperator(
                        op=op, inverse=clause.operator, assumptions=notes)
                else:
                    link.frechet[f] = linear_bt_operator(op)
        return link

    # -- symbolic link verification ----------------------------------------------
    def verify_link_symbolic(self, name: str) -> VerificationReport:
        link = self.link(name)
        if link.kind == "reciprocal":
            return VerificationReport(
                name=f"link {name}", method="symbolic-reduction",
                verdict="refused",
                residual="(not applicable)",
                assumptions=link.assumptions,
                details={"reason": "reciprocal transformation interchanges the "
                                   "independent variable; verified numerically "
                                   "by the transport check"})
        if link.relation is None or link.rules is None:
            raise ChartError(f"link {name!r} has no solved relation")
        src = self.equation(link.source)
        tgt = self.equation(link.target)
        flows = {src.field: src.flow, tgt.field: tgt.flow}
        dt_relation = time_derivative(link.relation, flows)
        residual = substitute(dt_relation, link.rules)
        assumptions = set(link.assumptions)
        if link.relation.has_nonlocal() or dt_relation.has_nonlocal():
            assumptions.add("decay")
        details = {}
        defined = link.defined_field
        if defined is not None:
            details.update(self._integration_witness(link, src, tgt))
        verdict = "verified" if residual.is_zero else "reduction incomplete"
        return VerificationReport(
            name=f"link {name}", method="symbolic-reduction", verdict=verdict,
            residual=to_text(residual),
            assumptions=tuple(sorted(assumptions)), details=details)

    def _integration_witness(self, link, src, tgt) -> dict:
        """Reproduce the integrate-with-respect-to-x step of the chart's
        proofs and record the intermediate identity."""
        out = {}
        defined = link.defined_field
        defined_eq = src if src.field == defined else tgt
        free_eq = tgt if defined_eq is src else src
        base_order, rule_expr = link.rules.base_rule(defined)
        if base_order == 0:
            flow_sub = substitute(defined_eq.flow, link.rules)
            anti = integrate_exact(flow_sub)
            if isinstance(anti, JetExpr):
                out["substituted_flow"] = to_text(flow_sub)
                out["is_exact_derivative_of"] = to_text(anti)
        elif base_order == 1:
            lhs = time_derivative(rule_expr, {free_eq.field: free_eq.flow})
            anti = integrate_exact(lhs)
            expected = substitute(defined_eq.flow, link.rules)
            if isinstance(anti, JetExpr):
                out["time_derivative_of_rule"] = to_text(lhs)
                out["integrates_to"] = to_text(anti)
                out["matches_substituted_flow"] = bool(anti == expected)
            expansion = total_derivative(defined_eq.flow)
            back = integrate_exact(expansion)
            out["flow_derivative_expansion"] = to_text(expansion)
            out["expansion_integrates_back"] = bool(
                isinstance(back, JetExpr) and back == defined_eq.flow)
        return out

    # -- link composition ---------------------------------------------------------
    def compose_links(self, name1: str, name2: str,
                      composed_name: str | None = None) -> BacklundLink:
        l1, l2 = self.link(name1), self.link(name2)
        if l1.kind == "reciprocal" or l2.kind == "reciprocal":
            raise ChartError("kind mismatch: reciprocal links compose only "
                             "in the numeric lab")
        if l1.target != l2.source:
            raise ChartError(
                f"links do not chain: {l1.name} targets {l1.target!r} but "
                f"{l2.name} starts at {l2.source!r}")
        middle = self.equation(l1.target).field
        eliminate = self._eliminator(l2, middle)
        relation = eliminate(l1.relation)
        assumptions = set(l1.assumptions) | set(l2.assumptions)

        defined = None
        rules = None
        candidates = []
        if l1.defined_field and l1.rules is not None:
            candidates.append((l1.defined_field,
                               l1.rules.base_rule(l1.defined_field)[0]))
        if l2.defined_field and l2.rules is not None:
            candidates.append((l2.defined_field,
                               l2.rules.base_rule(l2.defined_field)[0]))
        for cand_field, cand_base in candidates:
            solved = _solved_rule_from_relation(relation, cand_field, cand_base)
            if solved is not None:
                defined = cand_field
                rules = SubstitutionSet({(cand_field, cand_base): solved})
                relation = jet(cand_field, cand_base) - solved
                break
        algebraic = None
        if l1.algebraic_reverse is not None:
            f, p, val = l1.algebraic_reverse
            algebraic = (f, p, eliminate(val))
        link = BacklundLink(
            name=composed_name or f"{name1}*{name2}",
            kind="differential", source=l1.source, target=l2.target,
            relation=relation, defined_field=defined, rules=rules,
            algebraic_reverse=algebraic,
            assumptions=tuple(sorted(assumptions)),
            notes=(f"composition of links {name1} and {name2}",))
        if relation is not None:
            for f in sorted(relation.fields()):
                expr = frechet_derivative(relation, f, _DIRECTION)
                op = linear_operator_from(expr, _DIRECTION)
                link.frechet[f] = linear_bt_operator(op)
        self._compose_certificates(link, l1, l2, eliminate)
        return link

    def _eliminator(self, l2: BacklundLink, middle: str):
        """Map expressions in the middle field into l2.target's field."""
        if l2.rules is not None and l2.defined_field == middle:
            return lambda e: substitute(e, l2.rules)
        if l2.reverse_rules is not None and middle in l2.reverse_rules.fields():
            return lambda e: substitute(e, l2.reverse_rules)
        if l2.algebraic_reverse is not None and l2.algebraic_reverse[0] == middle:
            fld, power, value = l2.algebraic_reverse
            if power != 2:
                raise ChartError("only quadratic algebraic reverses supported")

            def reduce_(e):
                out, odd = reduce_even_power(e, fld, value)
                return out  # odd unit factors are dropped at relation level

            return reduce_
        raise ChartError(
            f"link {l2.name!r} cannot eliminate field {middle!r}")

    def _compose_certificates(self, link, l1, l2, eliminate):
        """Build invertibility certificates for the composed link's Frechet
        operators by composing the parts' transformation operators."""
        try:
            src_f = self.equation(link.source).field
            tgt_f = self.equation(link.target).field
            pi1 = (l1.frechet[self.equation(l1.target).field].require_inverse()
                   * l1.frechet[src_f].op).scale(-1)
            pi2 = (l2.frechet[tgt_f].require_inverse()
                   * l2.frechet[self.equation(l2.source).field].op).scale(-1)
            pi = pi2 * pi1
            pi = PseudoOp([(w, tuple(self._eliminate_factors(fs, eliminate)))
                           for w, fs in pi.terms], pi.assumptions)
            b_src = link.frechet[src_f]
            inverse = (pi * b_src.require_inverse()).scale(-1)
            link.frechet[tgt_f] = LinearBTOperator(
                op=link.frechet[tgt_f].op, inverse=inverse,
                assumptions=("composed certificate",))
        except (KeyError, ChartError, ValueError):
            pass  # leave the extraction-only operators in place

    @staticmethod
    def _eliminate_factors(factors, eliminate):
        from .ops import Mul
        out = []
        for f in factors:
            if isinstance(f, Mul):
                out.append(Mul(eliminate(f.coeff)))
            else:
                out.append(f)
        return out

    # -- invariances ----------------------------------------------------------------
    def derive_invariance(self, link_name: str, inv_name: str,
                          hat_prefix: str = "hat") -> BacklundLink:
        """Push a known invariance of the link's target back through the link,
        yielding an invariance of the source equation."""
        link = self.link(link_name)
        inv = self.invariance(inv_name)
        if inv.on != link.target:
            raise ChartError(
                f"invariance {inv_name!r} acts on {inv.on!r}, not on the "
                f"target of link {link_name!r}")
        if inv.rule is None:
            raise ChartError(f"invariance {inv_name!r} has no explicit rule")
        src_f = self.equation(link.source).field
        tgt_f = self.equation(link.target).field
        hat_src, hat_tgt = hat_prefix + src_f, hat_prefix + tgt_f
        rule_field, rule_power, rule_expr = inv.rule

        hatted = substitute(link.relation, {src_f: jet(hat_src),
                                            tgt_f: jet(hat_tgt)})
        if rule_power == 1:
            step1 = substitute(hatted, {hat_tgt: rule_expr})
        else:
            raise ChartError("target invariances must be pointwise rules")

        if link.reverse_rules is not None:
            try:
                relation = substitute(step1, link.reverse_rules)
            except UnresolvableJetError as exc:
                raise ChartError(f"not invertible: {exc}") from None
            assumptions = set(link.assumptions) | set(inv.assumptions)
            squared = None
            solved = _solved_rule_from_relation(relation, hat_src, 0)
            if solved is None:
                # try the squared variable: relation linear in hat_src^2
                sq = _solved_square(relation, hat_src)
                if sq is not None:
                    squared = (hat_src, sq)
            return BacklundLink(
                name=f"{inv_name} through {link_name}",
                kind="derived-invariance", source=link.source,
                target=link.source, relation=relation,
                defined_field=hat_src,
                squared_rule=squared,
                assumptions=tuple(sorted(assumptions | {"decay"})),
                notes=(f"invariance of {link.source} obtained by composing "
                       f"{inv_name} with link {link_name}",))

        # no reverse solved form: report the relation pair with the shared
        # auxiliary field (classical auto-Backlund shape)
        return BacklundLink(
            name=f"{inv_name} through {link_name}",
            kind="auto-backlund", source=link.source, target=link.source,
            relation=step1, defined_field=None,
            aux_relations=(link.relation,),
            assumptions=tuple(sorted(set(link.assumptions) | set(inv.assumptions))),
            notes=(f"relation pair shares the auxiliary field {tgt_f!r}; "
                   "no rational reverse solved form exists",))

    def verify_invariance(self, eq_name: str, inv_name: str) -> VerificationReport:
        eq = self.equation(eq_name)
        inv = self.invariance(inv_name)
        if inv.on != eq_name:
            raise ChartError(f"invariance {inv_name!r} is not registered on "
                             f"{eq_name!r}")
        if inv.kind == "reference":
            return VerificationReport(
                name=f"invariance {inv_name} on {eq_name}",
                method="symbolic-reduction", verdict="reference",
                residual="(no formula stated in the source)",
                assumptions=inv.assumptions, details={"notes": list(inv.notes)})
        rule_field, power, rule_expr = inv.rule
        details = {}
        if power == 1:
            image_flow = substitute(eq.flow, {eq.field: rule_expr})
            residual = time_derivative(rule_expr, {eq.field: eq.flow}) - image_flow
            if inv_name == "M" or "moebius" in inv.kind:
                pass
            schw_detail = self._schwarzian_detail(eq, rule_expr)
            details.update(schw_detail)
        elif power == 2:
            sq_field = "SQ" + eq.field
            p_flow = squared_field_flow(eq, sq_field)
            details["squared_field_equation"] = \
                f"{sq_field}_t = {to_text(p_flow)}"
            image_flow = substitute(p_flow, {sq_field: rule_expr})
            residual = time_derivative(rule_expr, {eq.field: eq.flow}) - image_flow
        else:
            raise ChartError(f"unsupported rule power {power}")
        verdict = "verified" if residual.is_zero else "reduction incomplete"
        assumptions = set(inv.assumptions)
        if rule_expr.has_nonlocal():
            assumptions.add("decay")
        return VerificationReport(
            name=f"invariance {inv_name} on {eq_name}",
            method="symbolic-reduction", verdict=verdict,
            residual=to_text(residual),
            assumptions=tuple(sorted(assumptions)), details=details)

    def _schwarzian_detail(self, eq, rule_expr) -> dict:
        """For Moebius-type rules on the singularity-manifold node, record the
        Schwarzian-derivative invariance identity separately."""
        schw = jets.schwarzian(eq.field)
        if eq.flow != jet(eq.field, 1) * schw:
            return {}
        transformed = substitute(schw, {eq.field: rule_expr})
        return {"schwarzian_identity":
                f"{{rule; x}} - {{{eq.field}; x}} = "
                f"{to_text(transformed - schw)}",
                "schwarzian_invariant": bool(transformed == schw)}

    # -- recursion-operator transport --------------------------------------------
    def derive_recursion(self, from_eq: str, to_eq: str, via: str) -> PseudoOp:
        link = self.link(via)
        pair = (link.source, link.target)
        if pair not in ((from_eq, to_eq), (to_eq, from_eq)):
            raise ChartError(
                f"link {via!r} joins {pair}, not ({from_eq}, {to_eq})")
        src = self.equation(from_eq)
        dst = self.equation(to_eq)
        if src.operator is None:
            raise ChartError(f"equation {from_eq!r} has no registered operator")
        b_from = link.frechet.get(src.field)
        b_to = link.frechet.get(dst.field)
        if b_from is None or b_to is None:
            raise ChartError(f"link {via!r} lacks Frechet operators")
        restriction = self._restriction_rules(link, src.field)
        return transform_recursion_operator(src.operator, b_from, b_to,
                                            restriction)

    def _restriction_rules(self, link: BacklundLink, from_field: str):
        if link.rules is not None and link.defined_field == from_field:
            return link.rules
        if link.reverse_rules is not None and \
                from_field in link.reverse_rules.fields():
            return link.reverse_rules
        if link.algebraic_reverse is not None and \
                link.algebraic_reverse[0] == from_field:
            fld, power, value = link.algebraic_reverse
            if power != 2:
                raise ChartError("only quadratic algebraic reverses supported")

            def reduce_(coeff):
                out, odd = reduce_even_power(coeff, fld, value)
                if odd:
                    raise UnresolvableJetError(
                        f"unresolvable restriction: coefficient "
                        f"{to_text(coeff)} keeps an odd power of {fld!r}")
                return out

            return reduce_
        raise UnresolvableJetError(
            f"unresolvable restriction: link {link.name!r} cannot express "
            f"{from_field!r} in terms of the other field")

    # -- hierarchy ------------------------------------------------------------------
    def hierarchy(self, eq_name: str, n: int) -> list[JetExpr]:
        eq = self.equation(eq_name)
        if eq.operator is None or eq.seed is None:
            raise ChartError(f"equation {eq_name!r} has no operator/seed")
        # base_applications = 0 means the seed itself is the base member
        if eq.base_applications == 0:
            members = [eq.seed]
            members += hierarchy_generate(eq.operator, eq.seed, n - 1) \
                if n > 1 else []
            return members[:n]
        return hierarchy_generate(eq.operator, eq.seed, n)

    # -- export -----------------------------------------------------------------------
    def export_chart(self, fmt: str = "json", order: int = 1) -> str:
        nodes = []
        for eq in self.equations.values():
            if order == 1:
                label = eq.equation_text()
            elif eq.base_applications == 0:
                label = (f"{eq.field}_t = [Phi_{eq.name}({eq.field})]^{order - 1} "
                         f"{to_text(eq.seed)} ({2 * order + 1}th order)")
            else:
                label = (f"{eq.field}_t = [Phi_{eq.name}({eq.field})]^{order} "
                         f"{to_text(eq.seed)} ({2 * order + 1}th order)")
            nodes.append({"name": eq.name, "field": eq.field, "label": label})
        edges = [{
            "name": l.name, "source": l.source, "target": l.target,
            "kind": l.kind, "relation": l.relation_text(),
        } for l in self.links.values()]
        loops = [{
            "name": i.name, "on": i.on, "kind": i.kind, "rule": i.rule_text(),
        } for i in self.invariances.values() if i.chart_loop]
        if fmt == "json":
            return json.dumps({"chart_version": 1, "hierarchy_order": order,
                               "nodes": nodes, "edges": edges,
                               "invariances": loops}, indent=2)
        if fmt == "dot":
            out = ["graph backlund_chart {", "  rankdir=LR;"]
            for n in nodes:
                out.append(f'  "{n["name"]}" [label="{n["name"]}\\n{n["label"]}"];')
            for e in edges:
                out.append(f'  "{e["source"]}" -- "{e["target"]}" '
                           f'[label="({e["name"]})"];')
            for i in loops:
                out.append(f'  "{i["on"]}" -- "{i["on"]}" '
                           f'[label="{i["name"]}", style=dashed];')
            out.append("}")
            return "\n".join(out) + "\n"
        raise ChartError(f"unknown export format {fmt!r}")

    # -- golden self-consistency ---------------------------------------------------
    def verify_equation(self, name: str) -> VerificationReport:
        eq = self.equation(name)
        if eq.operator is None or eq.seed is None:
            return VerificationReport(
                name=f"equation {name}", method="operator-golden",
                verdict="reference", residual="(no operator registered)")
        image = eq.seed
        for _ in range(eq.base_applications):
            image = op_apply(eq.operator, image)
        residual = image - eq.flow
        return VerificationReport(
            name=f"equation {name}", method="operator-golden",
            verdict="verified" if residual.is_zero else "failed",
            residual=to_text(residual),
            details={"applications": eq.base_applications,
                     "seed": to_text(eq.seed)})


def _solved_square(relation: JetExpr, fld: str):
    """Solve relation == 0 for jet(fld)^2 when it occurs linearly in that
    square (and the bare field is absent otherwise)."""
    s = jets._jet_symbol(fld, 0)
    num, den = relation.pair()
    if s in den.free_symbols:
        return None
    poly = sp.Poly(num, s)
    if poly.degree() != 2:
        return None
    coeffs = {k: c for (k,), c in poly.terms()}
    if 1 in coeffs:
        return None
    c2 = coeffs.get(2, sp.S.Zero)
    c0 = coeffs.get(0, sp.S.Zero)
    if s in c2.free_symbols:
        return None
    return -JetExpr(c0, den) / JetExpr(c2, den)


# --------------------------------------------------------------------------
# loading helpers
# --------------------------------------------------------------------------

def load_chart(path: str | Path) -> ChartRegistry:
    doc = parser.parse_chart(Path(path).read_text())
    return ChartRegistry.from_document(doc)


def default_chart_path() -> Path:
    """Locate charts/kdv-chart.txt relative to the working tree."""
    candidates = [
        Path.cwd() / "charts" / "kdv-chart.txt",
        Path(__file__).resolve().parents[2] / "charts" / "kdv-chart.txt",
    ]
    for c in candidates:
        if c.exists():
            return c
    raise FileNotFoundError("cannot locate charts/kdv-chart.txt; pass --chart")


def standard_chart() -> ChartRegistry:
    return load_chart(default_chart_path())


def identity_link(reg: ChartRegistry, eq_name: str, alias_field: str,
                  name: str = "identity") -> BacklundLink:
    """Trivial link alias - field = 0 (useful as a composition unit)."""
    eq = reg.equation(eq_name)
    relation = jet(alias_field) - jet(eq.field)
    link = BacklundLink(
        name=name, kind="differential", source=eq_name, target=eq_name,
        relation=relation, defined_field=alias_field,
        rules=SubstitutionSet({alias_field: jet(eq.field)}),
        reverse_rules=SubstitutionSet({eq.field: jet(alias_field)}))
    for f in (alias_field, eq.field):
        expr = frechet_derivative(relation, f, _DIRECTION)
        link.frechet[f] = linear_bt_operator(
            linear_operator_from(expr, _DIRECTION))
    return link
