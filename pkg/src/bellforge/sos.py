"""Sum-of-squares certificates built from nullifying operators.

A nullifier is written over abstract local operators (``Z_A``, ``X_B``, ...).
A :class:`MeasurementDictionary` rewrites each abstract operator as a formal
polynomial in the measurement indeterminates, so the weighted sum of squares
can be expanded and split into ``C - S + Gamma``. Parameters that make the
higher-degree leftover ``Gamma`` vanish are found numerically by
:func:`solve_gamma`.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .algebra import (DEFAULT_MAX_WORD, FormalPolynomial, Scenario, _PolyBuilder, adjoint,
                      local_degree_split, parse_polynomial, to_correlator_basis, to_text)
from .errors import (DimensionMismatchError, DomainError, MissingSymbolError, NoSolutionError,
                     UnboundParameterError)
from .hilbert import (BellExpression, Measurements, Realization, behavior, bell_value,
                      polynomial_matrix)
from .scalar import Expr, _apply, as_expr, cos, parse_expr, sin

RESIDUAL_TOL = 1e-10
NULLIFIER_TOL = 1e-9


def _is_operator_name(name: str) -> bool:
    return name[:1].isupper()


class MeasurementDictionary:
    """Abstract operator names mapped to formal polynomials.

    ``symbols`` values may be polynomials or their text form. Names starting
    with an upper-case letter are operators; lower-case names in nullifier
    expressions are scalar parameters. ``I`` is always the identity.
    """

    def __init__(self, scenario: Scenario, symbols: Mapping[str, FormalPolynomial | str],
                 max_word: int = DEFAULT_MAX_WORD):
        self.scenario = scenario
        self.max_word = max_word
        self.symbols: dict = {"I": FormalPolynomial.constant(scenario).with_max_word(max_word)}
        for name, p in symbols.items():
            if not _is_operator_name(name):
                raise ValueError(f"operator names start with an upper-case letter: {name!r}")
            if isinstance(p, str):
                p = parse_polynomial(p, scenario, max_word)
            self.symbols[name] = p.with_max_word(max_word)

    def __getitem__(self, name: str) -> FormalPolynomial:
        try:
            return self.symbols[name]
        except KeyError:
            raise MissingSymbolError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.symbols

    def params(self) -> set[str]:
        out: set[str] = set()
        for p in self.symbols.values():
            out |= p.params()
        return out

    def deviations(self, operators: Mapping[str, np.ndarray], meas: Measurements,
                   assignment: Mapping[str, float] | None = None) -> dict:
        """Frobenius distance between each substituted entry and its ideal matrix."""
        out = {}
        for name, M in operators.items():
            P = polynomial_matrix(self[name], meas, assignment)
            out[name] = float(np.linalg.norm(P - np.asarray(M)))
        return out


def xz_pair(scenario: Scenario, k: int, angle1, angle2) -> tuple:
    """``(Z, X)`` of party ``k`` recovered from two XZ-plane observables.

    With ``M_x = cos(t_x) Z + sin(t_x) X`` the inversion reads
    ``Z = (sin t2 M1 - sin t1 M2)/sin(t2 - t1)`` and
    ``X = (-cos t2 M1 + cos t1 M2)/sin(t2 - t1)``.
    """
    t1, t2 = as_expr(angle1), as_expr(angle2)
    M1 = FormalPolynomial.correlator(scenario, k, 1)
    M2 = FormalPolynomial.correlator(scenario, k, 2)
    den = sin(t2 - t1)
    Z = (M1 * sin(t2) - M2 * sin(t1)) / den
    X = (M2 * cos(t1) - M1 * cos(t2)) / den
    return Z, X


# -- nullifiers -------------------------------------------------------------------


@dataclass(frozen=True)
class NullifierSpec:
    """Nullifier as text over abstract operators, e.g. ``"Z_A - Z_B"``."""

    expr: str
    weight: Expr | str | float = 1.0
    name: str = ""

    @property
    def weight_expr(self) -> Expr:
        return parse_expr(self.weight) if isinstance(self.weight, str) else as_expr(self.weight)


class _NullifierBuilder(_PolyBuilder):
    def __init__(self, dictionary: MeasurementDictionary):
        super().__init__(dictionary.scenario, dictionary.max_word)
        self.dictionary = dictionary

    def visit_Name(self, node):
        if node.id in self.dictionary:
            return self.dictionary[node.id]
        if _is_operator_name(node.id):
            raise MissingSymbolError(node.id)
        return super().visit_Name(node)


def promote_nullifier(spec: NullifierSpec | str, dictionary: MeasurementDictionary) -> FormalPolynomial:
    """Replace every abstract operator by its polynomial in the indeterminates."""
    text = spec.expr if isinstance(spec, NullifierSpec) else spec
    out = _NullifierBuilder(dictionary).visit(ast.parse(text, mode="eval").body)
    if not isinstance(out, FormalPolynomial):
        out = FormalPolynomial.constant(dictionary.scenario, out).with_max_word(dictionary.max_word)
    return out


class _MatrixBuilder(ast.NodeVisitor):
    """Evaluate a nullifier expression on explicit matrices."""

    def __init__(self, operators: Mapping[str, np.ndarray], assignment: Mapping[str, float]):
        self.operators = {k: np.asarray(v, dtype=complex) for k, v in operators.items()}
        dims = {v.shape[0] for v in self.operators.values()}
        if len(dims) > 1:
            raise DimensionMismatchError("operators act on different spaces")
        self.dim = dims.pop() if dims else 1
        self.operators.setdefault("I", np.eye(self.dim, dtype=complex))
        self.assignment = assignment

    def _mat(self, v):
        return v if isinstance(v, np.ndarray) else v * np.eye(self.dim)

    def visit_Constant(self, node):
        return complex(node.value)

    def visit_Name(self, node):
        if node.id in self.operators:
            return self.operators[node.id]
        if _is_operator_name(node.id):
            raise MissingSymbolError(node.id)
        if node.id == "pi":
            return complex(np.pi)
        if node.id not in self.assignment:
            raise UnboundParameterError(node.id)
        return complex(self.assignment[node.id])

    def visit_UnaryOp(self, node):
        v = self.visit(node.operand)
        return -v if isinstance(node.op, ast.USub) else v

    def visit_BinOp(self, node):
        a, b = self.visit(node.left), self.visit(node.right)
        op = type(node.op)
        if op is ast.Add:
            return self._mat(a) + self._mat(b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else a + b
        if op is ast.Sub:
            return self._mat(a) - self._mat(b) if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) else a - b
        if op is ast.Mult:
            return a @ b if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) else a * b
        if op is ast.Div and not isinstance(b, np.ndarray):
            return a / b
        if op is ast.Pow and not isinstance(b, np.ndarray):
            return np.linalg.matrix_power(a, int(b.real)) if isinstance(a, np.ndarray) else a ** b
        raise ValueError("unsupported operation on matrices")

    def visit_Call(self, node):
        args = [self.visit(a) for a in node.args]
        if len(args) != 1 or isinstance(args[0], np.ndarray):
            raise ValueError("functions apply to scalars only")
        return _apply(node.func.id, args[0])

    def generic_visit(self, node):
        raise ValueError(f"unsupported syntax: {type(node).__name__}")


def nullifier_matrix(spec: NullifierSpec | str, operators: Mapping[str, np.ndarray],
                     assignment: Mapping[str, float] | None = None) -> np.ndarray:
    """The abstract nullifier as a matrix, from explicit operator matrices."""
    text = spec.expr if isinstance(spec, NullifierSpec) else spec
    b = _MatrixBuilder(operators, dict(assignment or {}))
    return b._mat(b.visit(ast.parse(text, mode="eval").body))


# -- certificates ------------------------------------------------------------------


@dataclass
class SOSCertificate:
    """``sum_i w_i N_i^dag N_i = C - S + Gamma`` with parameter bindings."""

    C: Expr
    S: FormalPolynomial
    gamma: FormalPolynomial
    squares: list
    bindings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    names: list = field(default_factory=list)

    @property
    def scenario(self) -> Scenario:
        return self.S.scenario

    def assignment(self, extra: Mapping[str, float] | None = None) -> dict:
        return {**self.bindings, **(extra or {})}

    def with_bindings(self, bindings: Mapping[str, float]) -> "SOSCertificate":
        out = SOSCertificate(self.C, self.S, self.gamma, self.squares, self.assignment(bindings),
                             list(self.flags), list(self.names))
        if "_gamma_terms" in self.__dict__:
            out.__dict__["_gamma_terms"] = self.__dict__["_gamma_terms"]
        return out

    def C_value(self, assignment: Mapping[str, float] | None = None) -> float:
        return self.C.real(self.assignment(assignment))

    def weights(self, assignment: Mapping[str, float] | None = None) -> np.ndarray:
        env = self.assignment(assignment)
        return np.array([w.real(env) for w, _ in self.squares])

    def bell_expression(self, assignment: Mapping[str, float] | None = None) -> BellExpression:
        return BellExpression.from_polynomial(self.S, self.assignment(assignment))

    def gamma_terms(self) -> dict:
        cache = self.__dict__.get("_gamma_terms")
        if cache is None:
            cache = to_correlator_basis(self.gamma)
            self.__dict__["_gamma_terms"] = cache
        return cache

    def to_dict(self) -> dict:
        sc = self.scenario
        doc = {
            "scenario": {"n": sc.n, "m": sc.m, "d": sc.d},
            "squares": [{"name": (self.names[i] if i < len(self.names) else ""), "weight": str(w), "poly": to_text(N)}
                        for i, (w, N) in enumerate(self.squares)],
            "bindings": dict(self.bindings),
            "C": str(self.C),
            "S": to_text(self.S),
            "gamma": to_text(self.gamma),
            "flags": list(self.flags),
            "max_word": self.S.max_word,
        }
        try:
            doc["C_value"] = self.C_value()
            doc["bell"] = json.loads(self.bell_expression().to_json())["terms"]
        except (UnboundParameterError, DomainError, ValueError):
            pass
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SOSCertificate":
        sc = Scenario(**doc["scenario"])
        cap = int(doc.get("max_word", DEFAULT_MAX_WORD))
        squares = [(parse_expr(s["weight"]), parse_polynomial(s["poly"], sc, cap)) for s in doc["squares"]]
        return cls(parse_expr(doc["C"]), parse_polynomial(doc["S"], sc, cap),
                   parse_polynomial(doc["gamma"], sc, cap), squares, dict(doc.get("bindings", {})),
                   list(doc.get("flags", [])), [s.get("name", "") for s in doc["squares"]])

    @classmethod
    def from_json(cls, text: str) -> "SOSCertificate":
        return cls.from_dict(json.loads(text))


def sos_expand(squares: Sequence[tuple], bindings: Mapping[str, float] | None = None,
               names: Sequence[str] | None = None) -> SOSCertificate:
    """Expand ``sum w N^dag N`` and split it into ``C - S + Gamma``.

    ``S`` is minus the local-degree-one part, i.e. the polynomial the
    resulting Bell expression maximizes. Constant negative weights are
    flagged; symbolic ones are checked at verification time.
    """
    if not squares:
        raise ValueError("need at least one square")
    squares = [(as_expr(w), N) for w, N in squares]
    sc = squares[0][1].scenario
    total = FormalPolynomial(sc, max_word=max(N.max_word for _, N in squares))
    flags = []
    for w, N in squares:
        if w.is_constant:
            v = w.constant_value()
            if abs(v.imag) > 1e-12:
                raise ValueError(f"square weight {v} is not real")
            if v.real < 0:
                flags.append("negative_weight")
        total = total + (adjoint(N) * N).scale(w)
    const, bell, gamma = local_degree_split(total)
    if len(squares) == 1:
        flags.append("single_square")
    return SOSCertificate(const, -bell, gamma, list(squares), dict(bindings or {}), flags,
                          list(names or [""] * len(squares)))


def gamma_residuals(cert: SOSCertificate, assignment: Mapping[str, float] | None = None) -> np.ndarray:
    """Real and imaginary parts of every Gamma coefficient, in canonical order."""
    env = cert.assignment(assignment)
    vals = [c.evaluate(env) for c in cert.gamma_terms().values()]
    out = np.empty(2 * len(vals))
    out[0::2] = [v.real for v in vals]
    out[1::2] = [v.imag for v in vals]
    return out


@dataclass
class GammaSolution:
    assignment: dict
    residual_norm: float
    condition: float
    restart: int
    residuals: np.ndarray


def solve_gamma(cert: SOSCertificate, free: Sequence[str], fixed: Mapping[str, float] | None = None,
                init: Mapping[str, float] | None = None, restarts: int = 20, seed: int = 0,
                max_iter: int = 200, tol: float = RESIDUAL_TOL, positive: Sequence[str] = (),
                scale: float = 0.5) -> GammaSolution:
    """Find values of ``free`` parameters making Gamma vanish.

    Damped least squares (Levenberg-Marquardt) from ``init`` and from
    ``restarts - 1`` seeded perturbations of it. The best residual wins,
    ties going to the earliest restart. Parameters listed in ``positive``
    only enter through their square and are reported as the positive root.
    Raises :class:`NoSolutionError` when no start reaches ``tol``.
    """
    free = list(free)
    if not free:
        raise ValueError("no free parameters")
    base = cert.assignment(fixed)
    x0 = np.array([float((init or {}).get(n, base.get(n, 0.5))) for n in free])
    probe = gamma_residuals(cert, {**base, **dict(zip(free, x0))}) if _in_domain(cert, base, free, x0) else None
    m = len(cert.gamma_terms()) * 2
    if m == 0:
        raise ValueError("Gamma is identically zero; nothing to solve")
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + scale * (1 + np.abs(x0)) * rng.standard_normal(len(free)) for _ in range(restarts - 1)]
    penalty = np.full(m, 1e3)

    def fun(v):
        try:
            r = gamma_residuals(cert, {**base, **dict(zip(free, v))})
        except (DomainError, ZeroDivisionError, OverflowError):
            return penalty
        return r if np.all(np.isfinite(r)) else penalty

    method = "lm" if m >= len(free) else "trf"
    best = None
    for i, s in enumerate(starts):
        if i == 0 and probe is not None and np.linalg.norm(probe) <= tol * 1e-3:
            res_x, res_f, jac = s, probe, _jacobian(fun, s)
        else:
            try:
                res = least_squares(fun, s, method=method, max_nfev=max_iter * (len(free) + 1),
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15)
            except (ValueError, np.linalg.LinAlgError):
                continue
            res_x, res_f, jac = res.x, res.fun, res.jac
        norm = float(np.linalg.norm(res_f))
        if best is None or norm < best[0]:
            best = (norm, i, res_x, res_f, jac)
    if best is None or best[0] > tol:
        got = "nothing" if best is None else f"{best[0]:.3g}"
        raise NoSolutionError(f"no solution found from this start (best residual {got})")
    norm, i, x, f, jac = best
    sol = dict(zip(free, map(float, x)))
    for n in positive:
        sol[n] = abs(sol[n])
    cond = float(np.linalg.cond(jac)) if jac.size else float("inf")
    return GammaSolution(sol, norm, cond, i, f)


def _in_domain(cert, base, free, x0) -> bool:
    try:
        gamma_residuals(cert, {**base, **dict(zip(free, x0))})
        return True
    except (DomainError, UnboundParameterError, ZeroDivisionError):
        return False


def _jacobian(fun, x, h: float = 1e-7) -> np.ndarray:
    f0 = fun(x)
    J = np.empty((len(f0), len(x)))
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h
        J[:, j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return J


# -- verification ----------------------------------------------------------------


def random_measurements(like: Measurements, rng: np.random.Generator) -> Measurements:
    """Random projective measurements with the same shape (Haar-random bases)."""
    projs = []
    for party in like.projectors:
        m, d, dim = party.shape[0], party.shape[1], party.shape[-1]
        if dim % d:
            raise DimensionMismatchError("local dimension must be a multiple of the outcome count")
        blocks = []
        for _ in range(m):
            z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            q, r = np.linalg.qr(z)
            q = q * (np.diag(r) / np.abs(np.diag(r)))
            step = dim // d
            blocks.append(np.stack([q[:, a * step:(a + 1) * step] @ q[:, a * step:(a + 1) * step].conj().T
                                    for a in range(d)]))
        projs.append(np.stack(blocks))
    return Measurements(projs, check=False)


def identity_residual(cert: SOSCertificate, meas: Measurements,
                      assignment: Mapping[str, float] | None = None) -> float:
    """Frobenius norm of ``sum w N^dag N - (C - S + Gamma)`` on ``meas``."""
    env = cert.assignment(assignment)
    D = int(np.prod(meas.dims))
    lhs = np.zeros((D, D), dtype=complex)
    for w, N in cert.squares:
        M = polynomial_matrix(N, meas, env)
        lhs += w.evaluate(env) * (M.conj().T @ M)
    rhs = cert.C.evaluate(env) * np.eye(D) - polynomial_matrix(cert.S, meas, env) \
        + polynomial_matrix(cert.gamma, meas, env)
    return float(np.linalg.norm(lhs - rhs))


@dataclass
class VerificationReport:
    checks: dict
    C: float
    value: float
    nullifier_norms: list

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "C": self.C, "value": self.value,
                "nullifier_norms": self.nullifier_norms,
                "checks": {k: {"passed": bool(ok), "residual": float(r)} for k, (ok, r) in self.checks.items()}}


def verify_certificate(cert: SOSCertificate, real: Realization, tol: float = NULLIFIER_TOL,
                       gamma_tol: float = RESIDUAL_TOL, identity_tol: float = 1e-10,
                       random_draws: int = 3, seed: int = 0) -> VerificationReport:
    """Check a certificate against a realization.

    Checks: Gamma vanishes at the bindings, weights are non-negative, the
    matrix identity holds on the realization's measurements and on random
    ones, every square nullifies the state, the Bell value equals C and no
    eigenvalue of the Bell operator exceeds C.
    """
    meas = real.measurements
    if meas.scenario.n != cert.scenario.n or meas.d != cert.scenario.d or meas.m < cert.scenario.m:
        raise DimensionMismatchError(f"certificate {cert.scenario} vs realization {meas.scenario}")
    env = cert.assignment()
    psi = real.state.amplitudes
    checks = {}
    g = float(np.linalg.norm(gamma_residuals(cert))) if cert.gamma_terms() else 0.0
    checks["gamma"] = (g <= gamma_tol, g)
    w = cert.weights()
    checks["weights"] = (bool(np.all(w >= 0)), float(min(w.min(), 0.0)))
    C = cert.C_value()
    scale = max(1.0, abs(C))
    rng = np.random.default_rng(seed)
    ident = identity_residual(cert, meas, env)
    for _ in range(random_draws):
        ident = max(ident, identity_residual(cert, random_measurements(meas, rng), env))
    checks["identity"] = (ident <= identity_tol * scale, ident)
    norms = [float(np.linalg.norm(polynomial_matrix(N, meas, env) @ psi)) for _, N in cert.squares]
    checks["nullifiers"] = (max(norms) <= tol, max(norms))
    expr = cert.bell_expression()
    value = bell_value(expr, behavior(real))
    checks["value"] = (abs(value - C) <= tol * scale, abs(value - C))
    S = polynomial_matrix(cert.S, meas, env)
    top = float(np.linalg.eigvalsh((S + S.conj().T) / 2)[-1])
    checks["bound"] = (top <= C + tol * scale, top - C)
    return VerificationReport(checks, C, value, norms)
