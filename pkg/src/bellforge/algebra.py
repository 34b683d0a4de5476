"""Non-commutative polynomials in local projector indeterminates.

Indeterminates are ``X[k,x,a]``: the projector of party ``k`` on outcome ``a``
of setting ``x`` (parties and settings 1-based, outcomes 0-based). Projectors
of one setting are orthogonal and sum to the identity, projectors of
different parties commute. Normal-form monomials never contain the last
outcome ``d-1``, which is rewritten as ``1 - sum_{a<d-1} X[k,x,a]``.

The correlator (Fourier) indeterminates ``Y[k,x,e] = sum_a w^(a e) X[k,x,a]``
with ``w = exp(2 pi i / d)`` give the basis in which local degree is counted
by :func:`local_degree_split`.
"""

from __future__ import annotations

import ast
import cmath
import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ScenarioMismatchError, WordLengthError
from .scalar import Expr, _ExprBuilder, as_expr, parse_expr

DEFAULT_MAX_WORD = 4

Letter = tuple  # (setting x, outcome a) or (setting x, power e)
Word = tuple  # tuple[Letter, ...]
Monomial = tuple  # one Word per party


@dataclass(frozen=True)
class Scenario:
    """``n`` parties, ``m`` settings per party, ``d`` outcomes per setting."""

    n: int
    m: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or not 2 <= self.d <= 3:
            raise ValueError(f"unsupported scenario {self}")

    @property
    def identity(self) -> Monomial:
        return ((),) * self.n

    def check_letter(self, k: int, x: int, a: int):
        if not (1 <= k <= self.n and 1 <= x <= self.m and 0 <= a < self.d):
            raise ValueError(f"index X[{k},{x},{a}] outside scenario {self}")

    def omega(self) -> complex:
        return cmath.exp(2j * cmath.pi / self.d)


def _reduce_word(word: Iterable[Letter]) -> Word | None:
    """Apply idempotency and orthogonality; ``None`` encodes the zero word."""
    out: list = []
    for x, a in word:
        if out and out[-1][0] == x:
            if out[-1][1] != a:
                return None
            continue
        out.append((x, a))
    return tuple(out)


def normal_word(word: Iterable[Letter], d: int) -> dict:
    """Normal form of a projector word as ``{word: integer coefficient}``."""
    word = tuple(word)
    for i, (x, a) in enumerate(word):
        if a == d - 1:
            head, tail = word[:i], word[i + 1:]
            acc = _add_int(normal_word(head + tail, d), {})
            for b in range(d - 1):
                for w, c in normal_word(head + ((x, b),) + tail, d).items():
                    acc[w] = acc.get(w, 0) - c
            return {w: c for w, c in acc.items() if c}
    reduced = _reduce_word(word)
    return {} if reduced is None else {reduced: 1}


def _add_int(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return out


def reduce_correlator_word(word: Iterable[Letter], d: int) -> Word:
    """Merge adjacent powers of one setting modulo ``d``."""
    out: list = []
    for x, e in word:
        if out and out[-1][0] == x:
            e = (out[-1][1] + e) % d
            out.pop()
        e %= d
        if e:
            out.append((x, e))
    return tuple(out)


def local_degree(mono: Monomial) -> int:
    return max((len(w) for w in mono), default=0)


def _mono_sort_key(mono: Monomial):
    return (sum(len(w) for w in mono), local_degree(mono), mono)


class FormalPolynomial:
    """Immutable map from normal-form monomials to :class:`Expr` coefficients."""

    __slots__ = ("scenario", "terms", "max_word")

    def __init__(self, scenario: Scenario, terms: Mapping[Monomial, Expr] | None = None,
                 max_word: int = DEFAULT_MAX_WORD, _normal: bool = False):
        self.scenario = scenario
        self.max_word = max_word
        if _normal:
            acc = {m: as_expr(c) for m, c in (terms or {}).items()}
        else:
            acc = {}
            for mono, coeff in (terms or {}).items():
                coeff = as_expr(coeff)
                for nm, k in _normal_monomial(mono, scenario.d).items():
                    acc[nm] = acc.get(nm, Expr()) + k * coeff
        for mono in acc:
            if local_degree(mono) > max_word:
                raise WordLengthError(
                    f"word of length {local_degree(mono)} exceeds cap {max_word}")
        self.terms = {m: acc[m] for m in sorted(acc, key=_mono_sort_key) if not acc[m].is_zero}

    # -- constructors ----------------------------------------------------------
    @classmethod
    def constant(cls, scenario: Scenario, value=1) -> "FormalPolynomial":
        return cls(scenario, {scenario.identity: as_expr(value)})

    @classmethod
    def projector(cls, scenario: Scenario, k: int, x: int, a: int) -> "FormalPolynomial":
        scenario.check_letter(k, x, a)
        mono = tuple(((x, a),) if j == k - 1 else () for j in range(scenario.n))
        return cls(scenario, {mono: Expr.const(1)})

    @classmethod
    def correlator(cls, scenario: Scenario, k: int, x: int, e: int = 1) -> "FormalPolynomial":
        """``Y[k,x,e] = sum_a w^(a e) X[k,x,a]``; for ``d = 2`` this is the +-1 observable."""
        w = scenario.omega()
        out = cls(scenario)
        for a in range(scenario.d):
            out = out + _root(w, a * e, scenario.d) * cls.projector(scenario, k, x, a)
        return out

    # -- basic protocol ----------------------------------------------------------
    def _check(self, other: "FormalPolynomial"):
        if other.scenario != self.scenario:
            raise ScenarioMismatchError(f"{self.scenario} vs {other.scenario}")

    def _lift(self, other) -> "FormalPolynomial":
        if isinstance(other, FormalPolynomial):
            self._check(other)
            return other
        return FormalPolynomial.constant(self.scenario, as_expr(other))

    def __add__(self, other):
        other = self._lift(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            acc[m] = acc[m] + c if m in acc else c
        return FormalPolynomial(self.scenario, acc, max(self.max_word, other.max_word), _normal=True)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def scale(self, s) -> "FormalPolynomial":
        s = as_expr(s)
        return FormalPolynomial(self.scenario, {m: c * s for m, c in self.terms.items()},
                                self.max_word, _normal=True)

    def __mul__(self, other):
        if not isinstance(other, FormalPolynomial):
            return self.scale(other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, other):
        return self.scale(1 / as_expr(other))

    def __pow__(self, n: int):
        out = FormalPolynomial.constant(self.scenario)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        return (isinstance(other, FormalPolynomial) and self.scenario == other.scenario
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.scenario, tuple(self.terms.items())))

    def __repr__(self):
        return f"FormalPolynomial({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def params(self) -> set[str]:
        out: set[str] = set()
        for c in self.terms.values():
            out |= c.params()
        return out

    def local_degree(self) -> int:
        return max((local_degree(m) for m in self.terms), default=0)

    def subs(self, mapping) -> "FormalPolynomial":
        return FormalPolynomial(self.scenario, {m: c.subs(mapping) for m, c in self.terms.items()},
                                self.max_word, _normal=True)

    def evaluate(self, assignment: Mapping[str, float] | None = None) -> dict:
        """Numeric coefficients ``{monomial: complex}`` at ``assignment``."""
        return {m: c.evaluate(assignment) for m, c in self.terms.items()}

    def with_max_word(self, cap: int) -> "FormalPolynomial":
        return FormalPolynomial(self.scenario, self.terms, cap, _normal=True)


def _root(w: complex, power: int, d: int) -> complex:
    p = power % d
    if p == 0:
        return 1
    if d == 2:
        return -1
    return w ** p


def _normal_monomial(mono: Monomial, d: int) -> dict:
    out = {(): 1}
    for word in mono:
        nxt = {}
        nw = normal_word(word, d)
        for prefix, c in out.items():
            for w, k in nw.items():
                key = prefix + (w,)
                nxt[key] = nxt.get(key, 0) + c * k
        out = {m: c for m, c in nxt.items() if c}
    return out


def mul(p: FormalPolynomial, q: FormalPolynomial) -> FormalPolynomial:
    """Product with parties commuting and letters reduced within each party."""
    p._check(q)
    d = p.scenario.d
    acc: dict = {}
    for m1, c1 in p.terms.items():
        for m2, c2 in q.terms.items():
            c = c1 * c2
            for nm, k in _normal_monomial(tuple(a + b for a, b in zip(m1, m2)), d).items():
                acc[nm] = acc[nm] + k * c if nm in acc else k * c
    return FormalPolynomial(p.scenario, acc, max(p.max_word, q.max_word), _normal=True)


def adjoint(p: FormalPolynomial) -> FormalPolynomial:
    """Reverse every word and conjugate every coefficient."""
    acc = {tuple(w[::-1] for w in m): c.conj() for m, c in p.terms.items()}
    return FormalPolynomial(p.scenario, acc, p.max_word, _normal=True)


def projector_sum(scenario: Scenario, k: int, x: int) -> FormalPolynomial:
    out = FormalPolynomial(scenario)
    for a in range(scenario.d):
        out = out + FormalPolynomial.projector(scenario, k, x, a)
    return out


# -- correlator basis ----------------------------------------------------------


def to_correlator_basis(p: FormalPolynomial) -> dict:
    """Coefficients over correlator monomials (words of ``(x, e)`` letters)."""
    d = p.scenario.d
    w = p.scenario.omega()
    acc: dict = {}
    for mono, coeff in p.terms.items():
        expansion = {(): 1 + 0j}
        for word in mono:
            local = {(): 1 + 0j}
            for x, a in word:
                nxt = {}
                for cw, c in local.items():
                    for e in range(d):
                        key = reduce_correlator_word(cw + ((x, e),), d)
                        nxt[key] = nxt.get(key, 0) + c * _root(w, -a * e, d) / d
                local = nxt
            expansion = {pre + (cw,): c1 * c2 for pre, c1 in expansion.items() for cw, c2 in local.items()}
        for cm, c in expansion.items():
            if abs(c) <= 1e-15:
                continue
            acc[cm] = acc[cm] + c * coeff if cm in acc else c * coeff
    return {m: acc[m] for m in sorted(acc, key=_mono_sort_key) if not acc[m].is_zero}


def from_correlator_basis(scenario: Scenario, coeffs: Mapping[Monomial, Expr],
                          max_word: int = DEFAULT_MAX_WORD) -> FormalPolynomial:
    out = FormalPolynomial(scenario, max_word=max_word)
    for cm, c in coeffs.items():
        term = FormalPolynomial.constant(scenario, c).with_max_word(max_word)
        for k, word in enumerate(cm, start=1):
            for x, e in word:
                term = term * FormalPolynomial.correlator(scenario, k, x, e)
        out = out + term
    return out


def local_degree_split(p: FormalPolynomial):
    """Split ``p`` into ``(constant, bell_part, gamma)`` by correlator-basis degree.

    ``bell_part`` holds the monomials in which every party contributes at most
    one correlator letter, ``gamma`` the ones of higher local degree.
    """
    sc = p.scenario
    corr = to_correlator_basis(p)
    const = Expr()
    bell, gamma = {}, {}
    for cm, c in corr.items():
        deg = local_degree(cm)
        if deg == 0:
            const = c
        elif deg == 1:
            bell[cm] = c
        else:
            gamma[cm] = c
    return (const, from_correlator_basis(sc, bell, p.max_word),
            from_correlator_basis(sc, gamma, p.max_word))


def correlator_text(cm: Monomial) -> str:
    parts = []
    for k, word in enumerate(cm, start=1):
        for x, e in word:
            parts.append(f"Y[{k},{x},{e}]")
    return "*".join(parts) if parts else "1"


# -- serialization -------------------------------------------------------------


def monomial_text(mono: Monomial) -> str:
    return " * ".join(f"X[{k},{x},{a}]" for k, w in enumerate(mono, start=1) for x, a in w)


def to_text(p: FormalPolynomial) -> str:
    """Canonical ``(coeff) * X[k,x,a] * ...`` text, terms joined by ``+``."""
    if p.is_zero:
        return "0"
    parts = []
    for mono, c in p.terms.items():
        mt = monomial_text(mono)
        parts.append(f"({c})" + (f" * {mt}" if mt else ""))
    return " + ".join(parts)


class _PolyBuilder(_ExprBuilder):
    def __init__(self, scenario: Scenario, max_word: int):
        self.scenario = scenario
        self.max_word = max_word

    def visit_Subscript(self, node):
        if not isinstance(node.value, ast.Name) or node.value.id not in ("X", "Y"):
            raise ValueError("only X[k,x,a] and Y[k,x,e] may be subscripted")
        idx = node.slice
        elts = idx.elts if isinstance(idx, ast.Tuple) else [idx]
        vals = []
        for e in elts:
            if not (isinstance(e, ast.Constant) and isinstance(e.value, int)):
                raise ValueError("indices must be integer literals")
            vals.append(e.value)
        if len(vals) != 3:
            raise ValueError("expected three indices")
        if node.value.id == "X":
            p = FormalPolynomial.projector(self.scenario, *vals)
        else:
            p = FormalPolynomial.correlator(self.scenario, *vals)
        return p.with_max_word(self.max_word)

    def visit_BinOp(self, node):
        a, b = self.visit(node.left), self.visit(node.right)
        if isinstance(a, FormalPolynomial) or isinstance(b, FormalPolynomial):
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b if isinstance(a, FormalPolynomial) else b.scale(a)
            if isinstance(node.op, ast.Div) and not isinstance(b, FormalPolynomial):
                return a / b
            if isinstance(node.op, ast.Pow) and not isinstance(b, FormalPolynomial):
                return a ** int(b.constant_value().real)
            raise ValueError("unsupported polynomial operation")
        return super().visit_BinOp(node)

    def visit_Name(self, node):
        if node.id in ("X", "Y"):
            raise ValueError(f"{node.id} is reserved for indeterminates")
        return super().visit_Name(node)


def parse_polynomial(text: str, scenario: Scenario, max_word: int = DEFAULT_MAX_WORD) -> FormalPolynomial:
    """Parse the text form (also accepts ``Y[k,x,e]`` correlators)."""
    out = _PolyBuilder(scenario, max_word).visit(ast.parse(text, mode="eval").body)
    if not isinstance(out, FormalPolynomial):
        out = FormalPolynomial.constant(scenario, out)
    return out.with_max_word(max_word)


def to_json(p: FormalPolynomial) -> str:
    sc = p.scenario
    doc = {
        "scenario": {"n": sc.n, "m": sc.m, "d": sc.d},
        "terms": [
            {"monomial": [[list(l) for l in w] for w in mono], "coeff": str(c)}
            for mono, c in p.terms.items()
        ],
    }
    return json.dumps(doc)


def from_json(text: str, max_word: int = DEFAULT_MAX_WORD) -> FormalPolynomial:
    doc = json.loads(text)
    sc = Scenario(**doc["scenario"])
    terms = {}
    for t in doc["terms"]:
        mono = tuple(tuple((int(x), int(a)) for x, a in w) for w in t["monomial"])
        if len(mono) != sc.n:
            raise ScenarioMismatchError("monomial party count differs from scenario")
        for k, w in enumerate(mono, start=1):
            for x, a in w:
                sc.check_letter(k, x, a)
        terms[mono] = parse_expr(t["coeff"])
    return FormalPolynomial(sc, terms, max_word)
