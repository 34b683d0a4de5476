"""Symbolic scalar coefficients over named real parameters.

An :class:`Expr` is kept as a sum of products of *atoms* (parameters,
elementary functions of sub-expressions, or parenthesised sums) raised to
integer powers, each product carrying a complex coefficient. Like terms are
collected and identical atoms have their exponents merged, which is the only
simplification performed besides constant folding and pruning of
coefficients below :data:`ZERO_TOL`.

>>> b = Param("b")
>>> (tan(b) ** 2).evaluate({"b": math.pi / 4})
(0.9999999999999998+0j)
"""

from __future__ import annotations

import ast
import cmath
import math
from typing import Callable, Iterable, Mapping, Union

from .errors import DomainError, UnboundParameterError

ZERO_TOL = 1e-12
POLE_TOL = 1e-12

FUNCTIONS = ("sin", "cos", "tan", "cot", "sqrt", "exp")

Number = Union[int, float, complex]


def _apply(name: str, z: complex) -> complex:
    if name == "sin":
        return cmath.sin(z)
    if name == "cos":
        return cmath.cos(z)
    if name == "tan":
        c = cmath.cos(z)
        if abs(c) <= POLE_TOL:
            raise DomainError(f"tan pole at {z}")
        return cmath.sin(z) / c
    if name == "cot":
        s = cmath.sin(z)
        if abs(s) <= POLE_TOL:
            raise DomainError(f"cot pole at {z}")
        return cmath.cos(z) / s
    if name == "sqrt":
        if abs(z.imag) <= 1e-14 and z.real < 0:
            if z.real < -1e-14:
                raise DomainError(f"sqrt of negative number {z.real}")
            return 0j
        return cmath.sqrt(z)
    if name == "exp":
        return cmath.exp(z)
    raise ValueError(f"unknown function {name!r}")


def _fmt_number(c: complex) -> str:
    if c.imag == 0:
        return repr(float(c.real))
    if c.real == 0:
        return f"{float(c.imag)!r}j"
    return f"({float(c.real)!r}{float(c.imag):+}j)"


class Atom:
    """Indivisible factor: a parameter, a function call or a grouped sum."""

    __slots__ = ("kind", "name", "arg", "key")

    def __init__(self, kind: str, name: str = "", arg: "Expr | None" = None):
        self.kind = kind
        self.name = name
        self.arg = arg
        if kind == "p":
            self.key = name
        elif kind == "f":
            self.key = f"{name}({arg.key})"
        else:
            self.key = f"({arg.key})"

    def __eq__(self, other):
        return isinstance(other, Atom) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def conj(self) -> "Atom":
        if self.kind == "p":
            return self
        return Atom(self.kind, self.name, self.arg.conj())

    def subs(self, mapping) -> "Expr":
        if self.kind == "p":
            if self.name in mapping:
                return as_expr(mapping[self.name])
            return Expr({((self, 1),): 1 + 0j})
        new = self.arg.subs(mapping)
        if self.kind == "f":
            return _function(self.name, new)
        return new

    def params(self) -> set[str]:
        if self.kind == "p":
            return {self.name}
        return self.arg.params()


Factors = tuple  # tuple[tuple[Atom, int], ...] sorted by atom key


class Expr:
    """Immutable symbolic scalar; arithmetic operators build new expressions."""

    __slots__ = ("terms", "key", "_compiled")

    def __init__(self, terms: Mapping[Factors, complex] | None = None):
        clean = {f: complex(c) for f, c in (terms or {}).items() if abs(c) > ZERO_TOL}
        self.terms = dict(sorted(clean.items(), key=lambda fc: _factors_key(fc[0])))
        self.key = self._text()
        self._compiled = None

    # -- construction helpers -------------------------------------------
    @staticmethod
    def const(value: Number) -> "Expr":
        return Expr({(): complex(value)})

    def _text(self) -> str:
        if not self.terms:
            return "0.0"
        parts = []
        for factors, c in self.terms.items():
            fs = [a.key if e == 1 else f"{a.key}**{e}" for a, e in factors]
            if not fs:
                parts.append(_fmt_number(c))
            elif c == 1:
                parts.append("*".join(fs))
            else:
                parts.append("*".join([_fmt_number(c)] + fs))
        return " + ".join(parts)

    def __str__(self):
        return self.key

    def __repr__(self):
        return f"Expr({self.key!r})"

    def __eq__(self, other):
        if isinstance(other, (int, float, complex)):
            other = Expr.const(other)
        return isinstance(other, Expr) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # -- queries -----------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(not f for f in self.terms)

    def constant_value(self) -> complex:
        if not self.is_constant:
            raise ValueError(f"expression {self.key} is not constant")
        return self.terms.get((), 0j)

    def params(self) -> set[str]:
        out: set[str] = set()
        for factors in self.terms:
            for atom, _ in factors:
                out |= atom.params()
        return out

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        acc = dict(self.terms)
        for f, c in other.terms.items():
            acc[f] = acc.get(f, 0j) + c
        return Expr(acc)

    __radd__ = __add__

    def __neg__(self):
        return Expr({f: -c for f, c in self.terms.items()})

    def __sub__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return as_expr(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        acc: dict = {}
        for f1, c1 in self.terms.items():
            for f2, c2 in other.terms.items():
                for f, c in _mul_factors(f1, f2).terms.items():
                    acc[f] = acc.get(f, 0j) + c * c1 * c2
        return Expr(acc)

    __rmul__ = __mul__

    def inverse(self) -> "Expr":
        if self.is_zero:
            raise DomainError("division by the zero expression")
        if len(self.terms) == 1:
            (factors, c), = self.terms.items()
            return Expr({tuple((a, -e) for a, e in factors): 1 / c})
        # normalise so the leading term of the grouped sum has coefficient 1
        lead = next(iter(self.terms.values()))
        inner = Expr({f: c / lead for f, c in self.terms.items()})
        return Expr({((Atom("g", arg=inner), -1),): 1 / lead})

    def __truediv__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self * other.inverse()

    def __rtruediv__(self, other):
        return as_expr(other) * self.inverse()

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported; use sqrt()")
        if n < 0:
            return (self ** (-n)).inverse()
        if len(self.terms) == 1:
            (factors, c), = self.terms.items()
            out = Expr.const(c ** n)
            for atom, e in factors:
                out = out * _atom_power(atom, e * n)
            return out
        out = Expr.const(1)
        for _ in range(n):
            out = out * self
        return out

    def conj(self) -> "Expr":
        """Complex conjugate, assuming every parameter is real."""
        acc = {}
        for factors, c in self.terms.items():
            nf = tuple(sorted(((a.conj(), e) for a, e in factors), key=lambda ae: ae[0].key))
            acc[nf] = acc.get(nf, 0j) + c.conjugate()
        return Expr(acc)

    def subs(self, mapping: Mapping[str, "Number | Expr"]) -> "Expr":
        """Substitute parameters by numbers or expressions (constants fold)."""
        if not mapping:
            return self
        out = Expr()
        for factors, c in self.terms.items():
            term = Expr.const(c)
            for atom, e in factors:
                base = atom.subs(mapping)
                term = term * (base ** e)
            out = out + term
        return out

    # -- evaluation --------------------------------------------------------
    def evaluate(self, assignment: Mapping[str, float] | None = None) -> complex:
        """Numeric value at ``assignment``.

        Raises :class:`UnboundParameterError` for missing parameters and
        :class:`DomainError` at poles or for square roots of negatives.
        """
        if self._compiled is None:
            self._compiled = _compile(self)
        return self._compiled(assignment or {})

    def real(self, assignment: Mapping[str, float] | None = None, tol: float = 1e-9) -> float:
        z = self.evaluate(assignment)
        if abs(z.imag) > tol * max(1.0, abs(z.real)):
            raise ValueError(f"expression {self.key} is not real: {z}")
        return z.real


def _factors_key(factors: Factors) -> str:
    return "*".join(f"{a.key}^{e}" for a, e in factors)


def _atom_power(atom: Atom, e: int) -> Expr:
    if e == 0:
        return Expr.const(1)
    if atom.kind == "f" and atom.name == "sqrt" and abs(e) >= 2:
        q, r = divmod(e, 2)
        rest = Expr({((atom, r),): 1}) if r else Expr.const(1)
        return (atom.arg ** q) * rest
    return Expr({((atom, e),): 1})


def _mul_factors(f1: Factors, f2: Factors) -> Expr:
    merged: dict[Atom, int] = {}
    exps = []
    for atom, e in f1 + f2:
        if atom.kind == "f" and atom.name == "exp":
            exps.append((atom, e))
        else:
            merged[atom] = merged.get(atom, 0) + e
    if len(exps) > 1:
        # exp(u)^i exp(v)^j = exp(iu + jv)
        arg = Expr()
        for atom, e in exps:
            arg = arg + e * atom.arg
        return _mul_factors(tuple(merged.items()), ()) * exp(arg)
    for atom, e in exps:
        merged[atom] = e
    reduce_sqrt = [a for a, e in merged.items() if a.kind == "f" and a.name == "sqrt" and abs(e) >= 2]
    if not reduce_sqrt:
        fs = tuple(sorted(((a, e) for a, e in merged.items() if e), key=lambda ae: ae[0].key))
        return Expr({fs: 1})
    out = Expr.const(1)
    for atom, e in merged.items():
        if e:
            out = out * _atom_power(atom, e)
    return out


def _coerce(x) -> Expr | None:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex)):
        return Expr.const(x)
    return None


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex)):
        return Expr.const(x)
    try:
        return Expr.const(complex(x))
    except TypeError:
        raise TypeError(f"cannot convert {type(x).__name__} to Expr") from None


def Param(name: str) -> Expr:
    """Expression consisting of the single real parameter ``name``."""
    if name in FUNCTIONS or name in ("X", "Y", "j", "complex"):
        raise ValueError(f"reserved name {name!r}")
    return Expr({((Atom("p", name), 1),): 1})


def _function(name: str, arg) -> Expr:
    arg = as_expr(arg)
    if arg.is_constant:
        return Expr.const(_apply(name, arg.constant_value()))
    return Expr({((Atom("f", name, arg), 1),): 1})


def sin(x) -> Expr:
    return _function("sin", x)


def cos(x) -> Expr:
    return _function("cos", x)


def tan(x) -> Expr:
    return _function("tan", x)


def cot(x) -> Expr:
    return _function("cot", x)


def sqrt(x) -> Expr:
    return _function("sqrt", x)


def exp(x) -> Expr:
    return _function("exp", x)


def cis(x) -> Expr:
    """exp(i x)."""
    return exp(1j * as_expr(x))


# -- compilation ---------------------------------------------------------------


def _compile_atom(atom: Atom) -> Callable[[Mapping], complex]:
    if atom.kind == "p":
        name = atom.name

        def param(env):
            try:
                return complex(env[name])
            except KeyError:
                raise UnboundParameterError(name) from None

        return param
    inner = _compile(atom.arg)
    if atom.kind == "g":
        return inner
    fname = atom.name
    return lambda env: _apply(fname, inner(env))


def _compile(expr: Expr) -> Callable[[Mapping], complex]:
    plan = []
    for factors, c in expr.terms.items():
        plan.append((c, [(_compile_atom(a), e) for a, e in factors]))

    def run(env):
        total = 0j
        for c, fl in plan:
            v = c
            for fn, e in fl:
                x = fn(env)
                if e < 0 and abs(x) <= POLE_TOL:
                    raise DomainError("division by zero")
                v *= x ** e if e != 1 else x
            total += v
        return total

    return run


# -- parsing -------------------------------------------------------------------


def parse_expr(text: str) -> Expr:
    """Inverse of ``str(expr)``; accepts ordinary infix syntax."""
    return _ExprBuilder().visit(ast.parse(text, mode="eval").body)


class _ExprBuilder(ast.NodeVisitor):
    _binops = {
        ast.Add: lambda a, b: a + b,
        ast.Sub: lambda a, b: a - b,
        ast.Mult: lambda a, b: a * b,
        ast.Div: lambda a, b: a / b,
    }

    def visit_Constant(self, node):
        if isinstance(node.value, (int, float, complex)) and not isinstance(node.value, bool):
            return Expr.const(node.value)
        raise ValueError(f"unsupported literal {node.value!r}")

    def visit_Name(self, node):
        if node.id == "pi":
            return Expr.const(math.pi)
        return Param(node.id)

    def visit_UnaryOp(self, node):
        v = self.visit(node.operand)
        if isinstance(node.op, ast.USub):
            return -v
        if isinstance(node.op, ast.UAdd):
            return v
        raise ValueError("unsupported unary operator")

    def visit_BinOp(self, node):
        a, b = self.visit(node.left), self.visit(node.right)
        if isinstance(node.op, ast.Pow):
            if not (b.is_constant and b.constant_value().imag == 0 and float(b.constant_value().real).is_integer()):
                raise ValueError("exponent must be an integer constant")
            return a ** int(b.constant_value().real)
        op = self._binops.get(type(node.op))
        if op is None:
            raise ValueError("unsupported binary operator")
        return op(a, b)

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ValueError("unsupported call")
        args = [self.visit(a) for a in node.args]
        if node.func.id in FUNCTIONS and len(args) == 1:
            return _function(node.func.id, args[0])
        if node.func.id == "complex" and len(args) == 2:
            return args[0] + 1j * args[1]
        raise ValueError(f"unknown function {node.func.id!r}")

    def generic_visit(self, node):
        raise ValueError(f"unsupported syntax: {type(node).__name__}")


def evaluate_all(exprs: Iterable[Expr], assignment: Mapping[str, float]) -> list[complex]:
    return [e.evaluate(assignment) for e in exprs]
