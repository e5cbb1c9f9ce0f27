"""Admissibility calculator for integrability exponents and Sobolev indices.

Every comparison is carried out on :class:`fractions.Fraction` values so that
boundary cases such as ``p == (d + 2) / 2`` are decided exactly.  Decimal
inputs (``2.5``, ``"1.01"``) are read as the rational number they denote.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DomainError, UsageError

_OPS = {">=": operator.ge, ">": operator.gt, "<=": operator.le, "<": operator.lt}


def rational(x) -> Fraction:
    """Exact rational value of ``x``; floats are read through their shortest decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise UsageError("booleans are not numbers here")
    if isinstance(x, float):
        return Fraction(repr(float(x)))
    try:
        return Fraction(str(x).strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a rational number: {x!r}") from None


def _pos(x: Fraction) -> Fraction:
    return x if x > 0 else Fraction(0)


def _fmt(x: Fraction) -> str:
    return str(x) if x.denominator == 1 else f"{x} (~{float(x):.6g})"


@dataclass(frozen=True)
class Clause:
    label: str
    lhs: Fraction
    op: str
    rhs: Fraction

    @property
    def holds(self) -> bool:
        return _OPS[self.op](self.lhs, self.rhs)


@dataclass(frozen=True)
class Rule:
    name: str
    clauses: tuple[Clause, ...]

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.clauses)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Verdicts of one predicate.

    ``mode`` says how rule verdicts combine: ``"all"`` (conjunction),
    ``"any"`` (disjunction) or ``"gate+any"`` (first rule conjoined with the
    disjunction of the remaining ones).
    """

    predicate: str
    params: dict
    rules: tuple[Rule, ...]
    mode: str = "all"

    @property
    def admissible(self) -> bool:
        verdicts = [r.holds for r in self.rules]
        if self.mode == "all":
            return all(verdicts)
        if self.mode == "any":
            return any(verdicts)
        return verdicts[0] and any(verdicts[1:])

    def render_text(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.params.items())
        head = f"{self.predicate} ({params}): {'ADMISSIBLE' if self.admissible else 'NOT ADMISSIBLE'}  [{self.mode}]"
        lines = [head]
        width = max((len(c.label) for r in self.rules for c in r.clauses), default=0)
        for r in self.rules:
            lines.append(f"  {r.name}: {'holds' if r.holds else 'fails'}")
            for c in r.clauses:
                mark = "ok " if c.holds else "NO "
                lines.append(f"    {mark} {c.label:<{width}}   {_fmt(c.lhs)} {c.op} {_fmt(c.rhs)}")
        return "\n".join(lines)

    def render_kv(self) -> str:
        lines = [f"predicate={self.predicate} admissible={str(self.admissible).lower()} mode={self.mode}"]
        for r in self.rules:
            for c in r.clauses:
                lines.append(
                    f"predicate={self.predicate} rule={r.name} clause={c.label.replace(' ', '')} "
                    f"lhs={c.lhs} op={c.op} rhs={c.rhs} holds={str(c.holds).lower()}"
                )
        return "\n".join(lines)


@dataclass(frozen=True)
class ExponentQuery:
    d: int
    p: Fraction
    k_omega: int = 1
    k_sigma: int = 1
    gamma_omega: Fraction | None = None
    gamma_sigma: Fraction | None = None
    mu_omega: Fraction | None = None
    mu_sigma: Fraction | None = None

    def __post_init__(self):
        d = int(self.d)
        if d != self.d or d < 1:
            raise DomainError("dimension d must be an integer >= 1")
        p = rational(self.p)
        # p = 1 is accepted so closed boundary cases can be evaluated
        if p < 1:
            raise DomainError("p must be >= 1")
        for name in ("k_omega", "k_sigma"):
            k = getattr(self, name)
            if int(k) != k or k < 1:
                raise DomainError(f"{name} must be an integer >= 1")
            object.__setattr__(self, name, int(k))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p", p)
        for name, lo in (("gamma_omega", 1), ("gamma_sigma", 1), ("mu_omega", 0), ("mu_sigma", 0)):
            v = getattr(self, name)
            if v is not None:
                v = rational(v)
                if v < lo:
                    raise DomainError(f"{name} must be >= {lo}")
                object.__setattr__(self, name, v)

    @property
    def params(self) -> dict:
        return {"d": self.d, "p": str(self.p), "K_omega": self.k_omega, "K_sigma": self.k_sigma}


def anisotropic_index(s, p, d) -> Fraction:
    """``2 s - (d + 2) / p`` for a space with time regularity ``s`` and space regularity ``2 s``."""
    s, p = rational(s), rational(p)
    if p <= 1:
        raise DomainError("integrability exponent p must exceed 1")
    if s < 0:
        raise DomainError("regularity s must be nonnegative")
    return 2 * s - Fraction(int(d) + 2) / p


def multiplication_admissible(s, p, factors: Sequence[tuple], d) -> AdmissibilityReport:
    """Regularity, integrability and index constraints for a product of anisotropic Sobolev factors."""
    factors = list(factors)
    if not factors:
        raise UsageError("at least one factor is required")
    s, p = rational(s), rational(p)
    ind = anisotropic_index(s, p, d)
    fs = [(rational(sj), rational(pj)) for sj, pj in factors]
    inds = [anisotropic_index(sj, pj, d) for sj, pj in fs]
    regularity = Clause("s <= min s_j", s, "<=", min(sj for sj, _ in fs))
    integrability = Clause("1/p >= sum 1/p_j", 1 / p, ">=", sum(1 / pj for _, pj in fs))
    if all(i >= 0 for i in inds):
        bound, label = min(inds), "ind <= min ind_j"
    else:
        bound, label = sum(i for i in inds if i < 0), "ind <= sum negative ind_j"
    strict = any(i == 0 for i in inds)
    index = Clause(label.replace("<=", "<") if strict else label, ind, "<" if strict else "<=", bound)
    rules = (Rule("regularity", (regularity,)), Rule("integrability", (integrability,)), Rule("index", (index,)))
    params = {"d": int(d), "s": str(s), "p": str(p), "factors": "; ".join(f"({a},{b})" for a, b in fs)}
    return AdmissibilityReport("multiplication", params, rules, "all")


def _threshold_common(q: ExponentQuery) -> Fraction:
    d, ko, ks = q.d, q.k_omega, q.k_sigma
    return d - Fraction(d + 1 - ko, ko + ks)


def _bullet_first(q: ExponentQuery) -> Rule:
    return Rule("bullet_1", (Clause("p > d", q.p, ">", Fraction(q.d)),))


def _bullet_second(q: ExponentQuery) -> Rule:
    d, ko = q.d, q.k_omega
    return Rule("bullet_2", (
        Clause("p >= d - (d+1-Ko)/(Ko+Ks)", q.p, ">=", _threshold_common(q)),
        Clause("p >= (d+2)/2", q.p, ">=", Fraction(d + 2, 2)),
        Clause("p >= (Ko-1)/(2Ko-1)(d+2)", q.p, ">=", Fraction(ko - 1, 2 * ko - 1) * (d + 2)),
    ))


def sorption_trace_admissible(q: ExponentQuery) -> AdmissibilityReport:
    """Whether products of bulk traces and surface values of the sorption rate are controlled."""
    d, ko, ks = q.d, q.k_omega, q.k_sigma
    third = Rule("bullet_3", (
        Clause("p >= d - (d+1-Ko)/(Ko+Ks)", q.p, ">=", _threshold_common(q)),
        Clause("p >= ((Ko+Ks-1)(d+2)-Ks)/(2(Ko+Ks)-1)", q.p, ">=",
               Fraction((ko + ks - 1) * (d + 2) - ks, 2 * (ko + ks) - 1)),
    ))
    return AdmissibilityReport("sorption_trace", q.params, (_bullet_first(q), _bullet_second(q), third), "any")


def assumption_sorption_admissible(q: ExponentQuery) -> AdmissibilityReport:
    """Exponent conditions attached to the polynomial growth bounds of the sorption rates."""
    d, p, ko, ks = q.d, q.p, q.k_omega, q.k_sigma
    first = Clause("d+1 >= Ko(d+1-p)+ + Ks(d-p)+", Fraction(d + 1), ">=",
                   ko * _pos(d + 1 - p) + ks * _pos(d - p))
    num, den = _pos(Fraction(ko - 1)), _pos(Fraction(2 * ko - 1))
    ratio = Fraction(0) if num == 0 else num / den
    inner = max(Fraction(d + 1, 2), ratio * (d + 2))
    other = Fraction((ko + ks - 1) * (d + 1) - 1, 2 * (ko + ks) - 1)
    second = Clause("p >= min{max{(d+1)/2, (Ko-1)+/(2Ko-1)+ (d+2)}, ((Ko+Ks-1)(d+1)-1)/(2(Ko+Ks)-1)}",
                    p, ">=", min(inner, other))
    return AdmissibilityReport("assumption_sorption", q.params,
                               (Rule("integrability", (first,)), Rule("lower_bound", (second,))), "all")


def lwp_admissible(q: ExponentQuery) -> AdmissibilityReport:
    """Exponent conditions for local-in-time existence of strong solutions."""
    d, ko, ks = q.d, q.k_omega, q.k_sigma
    gate = Rule("gate", (Clause("p >= (d+2)/2", q.p, ">=", Fraction(d + 2, 2)),))
    third = Rule("bullet_3", (
        Clause("p >= d - (d+1-Ko)/(Ko+Ks)", q.p, ">=", _threshold_common(q)),
        Clause("p >= (d+2)/2 - (d+3)/(4(Ko+Ks)-2)", q.p, ">=",
               Fraction(d + 2, 2) - Fraction(d + 3, 4 * (ko + ks) - 2)),
    ))
    return AdmissibilityReport("local_wellposedness", q.params,
                               (gate, _bullet_first(q), _bullet_second(q), third), "gate+any")


def growth_admissible(q: ExponentQuery) -> AdmissibilityReport:
    """Polynomial growth exponents of the reaction rates allowed at this ``p``."""
    rules = []
    for name, gamma, dim in (("bulk", q.gamma_omega, q.d + 2), ("surface", q.gamma_sigma, q.d + 1)):
        if gamma is None:
            continue
        if q.p >= Fraction(dim, 2):
            rules.append(Rule(name, (Clause(f"p >= {dim}/2 (any gamma)", q.p, ">=", Fraction(dim, 2)),)))
        else:
            cap = 1 / (1 - 2 * q.p / dim)
            rules.append(Rule(name, (Clause(f"gamma <= (1 - 2p/{dim})^-1", gamma, "<=", cap),)))
    params = dict(q.params, gamma_omega=str(q.gamma_omega), gamma_sigma=str(q.gamma_sigma))
    return AdmissibilityReport("reaction_growth", params, tuple(rules), "all")


def lpq_admissible(q: ExponentQuery) -> AdmissibilityReport:
    """Lower bound on ``p`` required by the intermediate-sum exponents ``mu``."""
    bounds = [Fraction(1)]
    for mu, dim in ((q.mu_omega, q.d + 2), (q.mu_sigma, q.d + 1)):
        if mu is not None and mu > 0:
            bounds.append((mu - 1) * dim / (2 * mu))
    rule = Rule("lower_bound", (Clause("p > max{1, (mu-1)(d+2)/(2mu), (muS-1)(d+1)/(2muS)}", q.p, ">", max(bounds)),))
    params = dict(q.params, mu_omega=str(q.mu_omega), mu_sigma=str(q.mu_sigma))
    return AdmissibilityReport("lp_lq_estimates", params, (rule,), "all")


def embedding_exponent(p, q, d) -> Fraction:
    """Power of the time horizon in the zero-initial-trace embedding ``W^(1,2)_p -> L_q``."""
    p, q = rational(p), rational(q)
    if p <= 1 or q <= 1:
        raise DomainError("p and q must exceed 1")
    d = int(d)
    lhs, rhs = 2 - Fraction(d + 2) / p, -Fraction(d + 2) / q
    if lhs < rhs:
        raise DomainError(f"embedding requires 2 - (d+2)/p >= -(d+2)/q, got {lhs} < {rhs}")
    return 1 / q - 1 / p + Fraction(2, d + 2)


def standard_reports(q: ExponentQuery) -> list[AdmissibilityReport]:
    reports = [sorption_trace_admissible(q), assumption_sorption_admissible(q), lwp_admissible(q)]
    if q.gamma_omega is not None or q.gamma_sigma is not None:
        reports.append(growth_admissible(q))
    if q.mu_omega is not None or q.mu_sigma is not None:
        reports.append(lpq_admissible(q))
    return reports


def admissible_grid(predicate, d: int, k_omega: int, k_sigma: int, ps: Iterable) -> list[bool]:
    return [predicate(ExponentQuery(d, p, k_omega, k_sigma)).admissible for p in ps]
