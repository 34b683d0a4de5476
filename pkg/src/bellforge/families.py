"""Catalog of Bell-expression families built with the sum-of-squares method.

``build(kind, **params)`` returns a :class:`FamilyInstance` bundling the Bell
expression, the ideal realization, the SOS certificate (when the family has
one), the bound ``C`` and any validity flags. Internal weights (``lam``,
``delta``, ``p``...) come from closed forms and are cross-checked by solving
``Gamma = 0`` numerically from the closed-form start.

Kinds: ``chsh_c``, ``singletAllSettings``, ``partialTheta``, ``partialTwoParam``,
``ghz``, ``qutrit``, ``tiltedChsh``, ``wagner``, ``limitation``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import FormalPolynomial, Scenario
from .errors import NoSolutionError, RegionError
from .hilbert import (BellExpression, Behavior, Measurements, Realization, behavior, bell_value,
                      ghz_state, max_entangled, phi_plus, phi_theta)
from .scalar import Param, cis, cos, sin
from .sos import (MeasurementDictionary, NullifierSpec, SOSCertificate, gamma_residuals,
                  promote_nullifier, solve_gamma, sos_expand, xz_pair)

KINDS = ("chsh_c", "singletAllSettings", "partialTheta", "partialTwoParam", "ghz", "qutrit",
         "tiltedChsh", "wagner", "limitation")
SOS_KINDS = ("chsh_c", "singletAllSettings", "partialTheta", "partialTwoParam", "ghz", "qutrit")

# distance below which a parameter counts as sitting on a region edge
EDGE_TOL = 1e-12
CLOSED_FORM_TOL = 1e-8


@dataclass
class FamilyInstance:
    kind: str
    params: dict
    canonical: dict
    bindings: dict
    expression: BellExpression
    realization: Realization
    certificate: SOSCertificate | None
    C: float
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def scenario(self) -> Scenario:
        return self.expression.scenario

    def behavior(self) -> Behavior:
        return behavior(self.realization)

    def value(self) -> float:
        return bell_value(self.expression, self.behavior())

    @property
    def normalized_C(self) -> float:
        """Bound after scaling the expression so its largest correlator weight is 1."""
        if self.scenario.d != 2:
            return self.C
        corr = self.expression.correlators()
        top = max((abs(c) for x, c in corr.items() if any(x)), default=0.0)
        return self.C / top if top else self.C

    def correlator_table(self) -> list:
        """Rows ``(label, coefficient)`` in the correlator basis, constant first."""
        if self.scenario.d != 2:
            return [(str(k), v) for k, v in self.expression.coefficients.items()]
        n = self.scenario.n
        names = [chr(ord("A") + k) for k in range(n)]
        rows = []
        for x, c in sorted(self.expression.correlators().items(), key=lambda kv: (sum(map(bool, kv[0])), kv[0])):
            label = "".join(f"{names[k]}{xk}" for k, xk in enumerate(x) if xk) or "1"
            rows.append((label, c))
        return rows

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "params": self.params,
            "canonical": self.canonical,
            "bindings": self.bindings,
            "C": self.C,
            "normalized_C": self.normalized_C,
            "value": self.value(),
            "flags": list(self.flags),
            "expression": json.loads(self.expression.to_json()),
            "correlators": [[k, v] for k, v in self.correlator_table()],
        }
        if self.certificate is not None:
            doc["certificate"] = self.certificate.to_dict()
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool, np.floating)):
                doc[k] = v.item() if isinstance(v, np.generic) else v
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# -- region helpers ---------------------------------------------------------------


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= EDGE_TOL * max(1.0, abs(a), abs(b))


def _theta_ok(theta: float):
    if not 0 < theta <= np.pi / 4 + EDGE_TOL:
        raise RegionError("theta in (0, pi/4]")


def partial_b_limit(theta: float) -> float:
    """Edge of the admissible ``|b|`` interval for the partially entangled family."""
    return min(2 * theta, np.pi - 2 * theta)


def lambda_sq_partial(theta: float, b: float) -> float:
    """``lam^2`` from ``1/lam^2 = sin^2(2t) cot^2(b) - cos^2(2t)``."""
    inv = np.sin(2 * theta) ** 2 / np.tan(b) ** 2 - np.cos(2 * theta) ** 2
    return 1.0 / inv


def singlet_f(a2: float, b1: float, b2: float) -> float:
    return (1 / np.tan(a2) - 1 / np.tan(b2)) * (1 / np.tan(b1) - 1 / np.tan(a2))


def two_param_lambdas(theta: float, b1: float, b2: float) -> tuple:
    """Closed-form ``(lam1 lam2, lam1^2 + lam2^2)``."""
    den = (np.cos(2 * b1) - np.cos(4 * theta)) * (np.cos(2 * b2) - np.cos(4 * theta))
    prod = -np.sin(b1) * np.sin(b2) * np.sin(b1 + b2) * np.sin(4 * theta) / den
    ssq = -4 * np.sin(b1) ** 2 * np.sin(b2) ** 2 * (
        np.cos(2 * theta) ** 2 + np.sin(2 * theta) ** 2 / (np.tan(b1) * np.tan(b2))) / den
    return prod, ssq


def qutrit_p(a1: float, a2: float, b1: float, b2: float) -> float:
    s1 = np.sin(np.pi * (a1 + b2)) * np.sin(np.pi * (a1 + b1))
    s2 = np.sin(np.pi * (a2 + b2)) * np.sin(np.pi * (a2 + b1))
    if abs(s2 - s1) < EDGE_TOL:
        raise RegionError("p in (0, 1)")
    return s2 / (s2 - s1)


def tilted_alpha(theta: float) -> float:
    """``2/sqrt(1 + 2 tan^2 2t)`` written to stay finite at ``t = pi/4``."""
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return 2 * abs(c) / np.sqrt(c * c + 2 * s * s)


def tilted_mu(theta: float) -> float:
    return float(np.arctan(np.sin(2 * theta)))


def wagner_b(theta: float) -> float:
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return float(np.pi / 2 - np.arctan(np.sqrt((1 + 0.5 * c * c) / (s * s))))


# -- symbolic templates -------------------------------------------------------------

_SC2 = Scenario(2, 2, 2)


def _ab(sc: Scenario):
    A1, A2 = FormalPolynomial.correlator(sc, 1, 1), FormalPolynomial.correlator(sc, 1, 2)
    B1, B2 = FormalPolynomial.correlator(sc, 2, 1), FormalPolynomial.correlator(sc, 2, 2)
    return A1, A2, B1, B2


def _expand(dictionary: MeasurementDictionary, specs) -> SOSCertificate:
    squares = [(s.weight_expr, promote_nullifier(s, dictionary)) for s in specs]
    return sos_expand(squares, names=[s.name for s in specs])


def _mirror_dictionary(sc: Scenario, k: int) -> dict:
    """Z, X of party ``k`` from settings at angles ``b`` and ``-b``."""
    b = Param("b")
    M1, M2 = FormalPolynomial.correlator(sc, k, 1), FormalPolynomial.correlator(sc, k, 2)
    return {"Z": (M1 + M2) / (2 * cos(b)), "X": (M1 - M2) / (2 * sin(b))}


@functools.lru_cache(maxsize=None)
def _template(kind: str, variant: str = "", n: int = 2) -> SOSCertificate:
    sc = _SC2
    if kind == "chsh_c":
        A1, A2, _, _ = _ab(sc)
        ZB, XB = xz_pair(sc, 2, Param("c"), Param("c") - math.pi / 2)
        d = MeasurementDictionary(sc, {"Z_A": A1, "X_A": A2, "Z_B": ZB, "X_B": XB})
        specs = [NullifierSpec("Z_A - Z_B", name="N0"), NullifierSpec("X_A - X_B", name="N1")]
        return _expand(d, specs)
    if kind == "singletAllSettings":
        A1, A2, B1, B2 = _ab(sc)
        if variant:
            # common measurement: single square (A_x - B_y)^2
            x, y = int(variant[0]), int(variant[1])
            d = MeasurementDictionary(sc, {"A": [A1, A2][x - 1], "B": [B1, B2][y - 1]})
            return _expand(d, [NullifierSpec("A - B", name=f"A{x}-B{y}")])
        ZA, XA = xz_pair(sc, 1, 0.0, Param("a2"))
        ZB, XB = xz_pair(sc, 2, Param("b1"), Param("b2"))
        d = MeasurementDictionary(sc, {"Z_A": ZA, "X_A": XA, "Z_B": ZB, "X_B": XB})
        specs = [NullifierSpec("Z_A - Z_B", name="N0"),
                 NullifierSpec("gam*(Z_A - Z_B) + delta*(X_A - X_B)", name="N1")]
        return _expand(d, specs)
    if kind == "partialTheta":
        A1, A2, _, _ = _ab(sc)
        bob = _mirror_dictionary(sc, 2)
        d = MeasurementDictionary(sc, {"Z_A": A1, "X_A": A2, "Z_B": bob["Z"], "X_B": bob["X"]})
        n1 = "X_A - sin(2*theta)*X_B - cos(2*theta)*X_A*Z_B"
        if variant == "single":
            return _expand(d, [NullifierSpec(n1, name="N1")])
        specs = [NullifierSpec("Z_A - Z_B", name="N0"), NullifierSpec(n1, "lam**2", name="N1")]
        return _expand(d, specs)
    if kind == "partialTwoParam":
        A1, A2, _, _ = _ab(sc)
        ZB, XB = xz_pair(sc, 2, Param("b1"), Param("b2"))
        d = MeasurementDictionary(sc, {"Z_A": A1, "X_A": A2, "Z_B": ZB, "X_B": XB})
        n1 = "(X_A - sin(2*theta)*X_B - cos(2*theta)*X_A*Z_B)"
        n2 = "(I - sin(2*theta)*X_A*X_B - cos(2*theta)*Z_B)"
        specs = [NullifierSpec("Z_A - Z_B", name="N0"),
                 NullifierSpec(f"lam1*{n1} + lam2*{n2}", name="N12")]
        return _expand(d, specs)
    if kind == "ghz":
        sc = Scenario(n, 2, 2)
        symbols = {}
        for k in range(1, n):
            symbols[f"Z{k}"] = FormalPolynomial.correlator(sc, k, 1)
            symbols[f"X{k}"] = FormalPolynomial.correlator(sc, k, 2)
        last = _mirror_dictionary(sc, n)
        symbols[f"Z{n}"], symbols[f"X{n}"] = last["Z"], last["X"]
        d = MeasurementDictionary(sc, symbols)
        xs = "*".join(f"X{k}" for k in range(1, n))
        n1 = f"{xs} - sin(2*theta)*X{n} - cos(2*theta)*{xs}*Z{n}"
        if variant == "single":
            return _expand(d, [NullifierSpec(n1, name="N1")])
        specs = [NullifierSpec(f"Z{k} - Z{n}", 1.0 / (n - 1), name=f"N0_{k}") for k in range(1, n)]
        specs.append(NullifierSpec(n1, "lam**2", name="N1"))
        return _expand(d, specs)
    if kind == "qutrit":
        sc = Scenario(2, 2, 3)
        a1, a2, b1, b2 = (Param(s) for s in ("a1", "a2", "b1", "b2"))
        tau = 2 * math.pi / 3

        def w(t):
            return cis(tau * t)

        def mu(a, bi, bj):
            # coefficient of B_i in the combination reproducing conj(A) on the state
            return (w(2 * a) - w(-a - 3 * bj)) / (w(-2 * bi) - w(bi - 3 * bj))

        B1, B2 = FormalPolynomial.correlator(sc, 2, 1, 1), FormalPolynomial.correlator(sc, 2, 2, 1)
        symbols = {"A1": FormalPolynomial.correlator(sc, 1, 1, 1),
                   "A2": FormalPolynomial.correlator(sc, 1, 2, 1)}
        for x, a in ((1, a1), (2, a2)):
            symbols[f"BB{x}"] = B1 * mu(a, b1, b2) + B2 * mu(a, b2, b1)
        d = MeasurementDictionary(sc, symbols)
        specs = [NullifierSpec("I - A1*BB1", "p", name="N1"), NullifierSpec("I - A2*BB2", "1 - p", name="N2")]
        return _expand(d, specs)
    raise ValueError(f"no certificate template for {kind!r}")


def _cross_check(cert: SOSCertificate, free: list, fixed: dict, closed: dict) -> dict:
    """Solve Gamma = 0 from the closed form and compare."""
    out = {"gamma_residual": float(np.linalg.norm(gamma_residuals(cert, {**fixed, **closed})))}
    try:
        sol = solve_gamma(cert, free, fixed, closed, restarts=1)
    except NoSolutionError:
        out["closed_form_ok"] = False
        return out
    dev = max(abs(sol.assignment[k] - closed[k]) for k in free)
    out["closed_form_ok"] = bool(dev <= CLOSED_FORM_TOL and out["gamma_residual"] <= CLOSED_FORM_TOL)
    return out


def _finish(kind, params, canonical, bindings, cert_t, real, flags, extra=None, free=()) -> FamilyInstance:
    extra = dict(extra or {})
    if free:
        fixed = {k: v for k, v in bindings.items() if k not in free}
        closed = {k: bindings[k] for k in free}
        extra.update(_cross_check(cert_t, list(free), fixed, closed))
        if not extra.get("closed_form_ok", False):
            flags = list(flags) + ["closed_form_mismatch"]
    else:
        extra["gamma_residual"] = float(np.linalg.norm(gamma_residuals(cert_t, bindings)))
    cert = cert_t.with_bindings(bindings)
    cert.flags = sorted(set(cert.flags) | set(flags))
    expr = cert.bell_expression()
    return FamilyInstance(kind, params, canonical, bindings, expr, real, cert, cert.C_value(),
                          sorted(set(flags) | set(cert.flags)), extra)


# -- constructors ---------------------------------------------------------------------


def _chsh_c(c: float) -> FamilyInstance:
    if not 0 < c < np.pi / 2:
        raise RegionError("c in (0, pi/2)")
    real = Realization(phi_plus(), Measurements.qubit_xz([[0.0, np.pi / 2], [c, c - np.pi / 2]]))
    return _finish("chsh_c", {"c": c}, {"c": c}, {"c": c}, _template("chsh_c"), real, [])


def _singlet(a2: float, b1: float, b2: float) -> FamilyInstance:
    params = {"a2": a2, "b1": b1, "b2": b2}
    if b1 > b2:
        b1, b2 = b2, b1
    canonical = {"a2": a2, "b1": b1, "b2": b2}
    if not (0 < a2 < np.pi and 0 <= b1 and b2 < np.pi):
        raise RegionError("0 < b1 < a2 < b2 < pi")
    real = Realization(phi_plus(), Measurements.qubit_xz([[0.0, a2], [b1, b2]]))
    common = [(1, 1)] if _near(b1, 0.0) else []
    common += [(2, 1)] if _near(b1, a2) else []
    common += [(2, 2)] if _near(b2, a2) else []
    if len(common) == 1:
        x, y = common[0]
        return _finish("singletAllSettings", params, canonical, dict(canonical),
                       _template("singletAllSettings", f"{x}{y}"), real, ["single_square"])
    if common or not (0 < b1 < a2 < b2):
        raise RegionError("0 < b1 < a2 < b2 < pi")
    f = singlet_f(a2, b1, b2)
    if f <= 0:
        raise RegionError("f > 0")
    delta = 1 / np.sqrt(f)
    bindings = {**canonical, "delta": delta, "gam": delta / np.tan(a2)}
    return _finish("singletAllSettings", params, canonical, bindings, _template("singletAllSettings"),
                   real, [], {"f": f, "delta_sq": 1 / f}, free=("delta", "gam"))


def _partial_region(theta: float, b: float) -> bool:
    """True when ``|b|`` sits on the interval edge (single square)."""
    _theta_ok(theta)
    if _near(b, 0.0):
        raise RegionError("b excludes 0")
    edge = partial_b_limit(theta)
    if _near(abs(b), edge):
        return True
    if abs(b) > edge:
        raise RegionError("|b| < min(2 theta, pi - 2 theta)")
    return False


def _partial_theta(theta: float, b: float) -> FamilyInstance:
    single = _partial_region(theta, b)
    real = Realization(phi_theta(theta), Measurements.qubit_xz([[0.0, np.pi / 2], [b, -b]]))
    params = {"theta": theta, "b": b}
    if single:
        return _finish("partialTheta", params, dict(params), dict(params),
                       _template("partialTheta", "single"), real, ["single_square"])
    lam2 = lambda_sq_partial(theta, b)
    bindings = {**params, "lam": float(np.sqrt(lam2))}
    return _finish("partialTheta", params, dict(params), bindings, _template("partialTheta"), real, [],
                   {"lam_sq": lam2}, free=("lam",))


def _two_param(theta: float, b1: float, b2: float) -> FamilyInstance:
    params = {"theta": theta, "b1": b1, "b2": b2}
    _theta_ok(theta)
    if b1 > b2:
        b1, b2 = b2, b1
    canonical = {"theta": theta, "b1": b1, "b2": b2}
    if not -2 * theta < b1 < 0:
        raise RegionError("b1 in (-2 theta, 0)")
    if not 0 < b2 < 2 * theta:
        raise RegionError("b2 in (0, 2 theta)")
    prod, ssq = two_param_lambdas(theta, b1, b2)
    if ssq < 2 * abs(prod) - EDGE_TOL:
        raise RegionError("lam1^2 + lam2^2 >= 2 |lam1 lam2|")
    r1, r2 = np.sqrt(max(ssq + 2 * prod, 0.0)), np.sqrt(max(ssq - 2 * prod, 0.0))
    bindings = {**canonical, "lam1": (r1 + r2) / 2, "lam2": (r1 - r2) / 2}
    real = Realization(phi_theta(theta), Measurements.qubit_xz([[0.0, np.pi / 2], [b1, b2]]))
    extra = {"lam1_lam2": prod, "lam_sq_sum": ssq,
             "lam_sq_diff_sq": 4 * np.sin(b1) ** 2 * np.sin(b2) ** 2
             / ((np.cos(4 * theta) - np.cos(2 * b1)) * (np.cos(4 * theta) - np.cos(2 * b2)))}
    return _finish("partialTwoParam", params, canonical, bindings, _template("partialTwoParam"), real, [],
                   extra, free=("lam1", "lam2"))


def _ghz(n: int, theta: float, b: float) -> FamilyInstance:
    n = int(n)
    if n < 2:
        raise RegionError("n >= 2")
    single = _partial_region(theta, b)
    angles = [[0.0, np.pi / 2]] * (n - 1) + [[b, -b]]
    real = Realization(ghz_state(n, theta), Measurements.qubit_xz(angles))
    params = {"n": n, "theta": theta, "b": b}
    fixed = {"theta": theta, "b": b}
    if single:
        return _finish("ghz", params, dict(params), fixed, _template("ghz", "single", n), real, ["single_square"])
    lam2 = lambda_sq_partial(theta, b)
    bindings = {**fixed, "lam": float(np.sqrt(lam2))}
    return _finish("ghz", params, dict(params), bindings, _template("ghz", "", n), real, [],
                   {"lam_sq": lam2}, free=("lam",))


def _qutrit(a1: float, a2: float, b1: float, b2: float) -> FamilyInstance:
    params = {"a1": a1, "a2": a2, "b1": b1, "b2": b2}
    p = qutrit_p(a1, a2, b1, b2)
    if not 0 < p < 1:
        raise RegionError("p in (0, 1)")
    real = Realization(max_entangled(3), Measurements.qutrit_phase([[a1, a2], [b1, b2]]))
    bindings = {**params, "p": p}
    return _finish("qutrit", params, dict(params), bindings, _template("qutrit"), real, [], {"p": p},
                   free=("p",))


def qutrit_alternating(a1: float, a2: float, b1: float, b2: float) -> bool:
    """``a2 - a1`` lies strictly between ``-b1 - a1`` and ``-b2 - a1`` modulo 1."""
    u = (a2 - a1) % 1.0
    lo, hi = sorted(((-b1 - a1) % 1.0, (-b2 - a1) % 1.0))
    return lo < u < hi


def _plain(kind, params, expr, real, C, extra=None) -> FamilyInstance:
    return FamilyInstance(kind, params, dict(params), dict(params), expr, real, None, C, [], dict(extra or {}))


def _tilted(theta: float) -> FamilyInstance:
    _theta_ok(theta)
    alpha, mu = tilted_alpha(theta), tilted_mu(theta)
    expr = BellExpression.from_correlators(_SC2, {(1, 1): 1, (1, 2): 1, (2, 1): 1, (2, 2): -1, (1, 0): alpha})
    real = Realization(phi_theta(theta), Measurements.qubit_xz([[0.0, np.pi / 2], [mu, -mu]]))
    return _plain("tiltedChsh", {"theta": theta}, expr, real, float(np.sqrt(8 + 2 * alpha ** 2)),
                  {"alpha": alpha, "mu": mu})


def _wagner(theta: float) -> FamilyInstance:
    _theta_ok(theta)
    b = wagner_b(theta)
    s, c = np.sin(2 * theta), np.cos(2 * theta)
    cb, sb = np.cos(b), np.sin(b)
    corr = {(1, 1): 1 / (2 * cb), (1, 2): 1 / (2 * cb), (2, 1): s / (2 * sb), (2, 2): -s / (2 * sb),
            (1, 0): c / 2, (0, 1): c / (4 * cb), (0, 2): c / (4 * cb)}
    expr = BellExpression.from_correlators(_SC2, corr)
    real = Realization(phi_theta(theta), Measurements.qubit_xz([[0.0, np.pi / 2], [b, -b]]))
    return _plain("wagner", {"theta": theta}, expr, real, 2.0, {"b_theta": b})


LIMITATION_THETA = np.pi / 8
LIMITATION_B = np.pi / 6


def limitation_operator(q: float, theta: float = LIMITATION_THETA) -> np.ndarray:
    """Ideal two-qubit operator ``p ZZ + (1-p)(s XX + c (q Z1 + (1-q) Z2))`` with p = (2+q)/(4+q)."""
    p = (2 + q) / (4 + q)
    Z = np.diag([1.0, -1.0])
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    I2 = np.eye(2)
    s, c = np.sin(2 * theta), np.cos(2 * theta)
    return p * np.kron(Z, Z) + (1 - p) * (s * np.kron(X, X) + c * (q * np.kron(Z, I2) + (1 - q) * np.kron(I2, Z)))


def _limitation(q: float) -> FamilyInstance:
    if not 0 <= q <= 4:
        raise RegionError("q in [0, 4]")
    p = (2 + q) / (4 + q)
    b = LIMITATION_B
    cb, sb = np.cos(b), np.sin(b)
    s, c = np.sin(2 * LIMITATION_THETA), np.cos(2 * LIMITATION_THETA)
    # Z_B = (B1 + B2)/(2 cos b), X_B = (B1 - B2)/(2 sin b)
    corr = {(1, 1): p / (2 * cb), (1, 2): p / (2 * cb),
            (2, 1): (1 - p) * s / (2 * sb), (2, 2): -(1 - p) * s / (2 * sb),
            (1, 0): (1 - p) * c * q,
            (0, 1): (1 - p) * c * (1 - q) / (2 * cb), (0, 2): (1 - p) * c * (1 - q) / (2 * cb)}
    expr = BellExpression.from_correlators(_SC2, corr)
    real = Realization(phi_theta(LIMITATION_THETA), Measurements.qubit_xz([[0.0, np.pi / 2], [b, -b]]))
    op = limitation_operator(q)
    inst = _plain("limitation", {"q": q}, expr, real, 1.0, {"p": p, "theta": LIMITATION_THETA, "b": b})
    inst.extra["operator"] = op
    return inst


_BUILDERS = {
    "chsh_c": (_chsh_c, ("c",)),
    "singletAllSettings": (_singlet, ("a2", "b1", "b2")),
    "partialTheta": (_partial_theta, ("theta", "b")),
    "partialTwoParam": (_two_param, ("theta", "b1", "b2")),
    "ghz": (_ghz, ("n", "theta", "b")),
    "qutrit": (_qutrit, ("a1", "a2", "b1", "b2")),
    "tiltedChsh": (_tilted, ("theta",)),
    "wagner": (_wagner, ("theta",)),
    "limitation": (_limitation, ("q",)),
}

DEFAULTS = {"qutrit": {"a1": 0.0, "a2": 0.5, "b1": 0.25, "b2": 0.75}}


def required_params(kind: str) -> tuple:
    if kind not in _BUILDERS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    return _BUILDERS[kind][1]


def build(kind: str, **params) -> FamilyInstance:
    """Construct the family member ``kind`` at ``params``.

    Raises :class:`RegionError` naming the violated constraint when the
    parameters fall outside the kind's validity region.
    """
    names = required_params(kind)
    merged = {**DEFAULTS.get(kind, {}), **{k: v for k, v in params.items() if v is not None}}
    unknown = set(merged) - set(names)
    if unknown:
        raise ValueError(f"{kind} takes {names}, got unexpected {sorted(unknown)}")
    missing = [k for k in names if k not in merged]
    if missing:
        raise ValueError(f"{kind} needs parameters {missing}")
    fn = _BUILDERS[kind][0]
    return fn(*(int(merged[k]) if k == "n" else float(merged[k]) for k in names))


# -- geometry helpers -------------------------------------------------------------------


@dataclass
class Hyperplane:
    coefficients: dict
    offset: float

    def normalized(self) -> "Hyperplane":
        norm = float(np.linalg.norm(list(self.coefficients.values())))
        return Hyperplane({k: v / norm for k, v in self.coefficients.items()}, self.offset / norm)


def tangent_hyperplane(a2: float, b1: float, b2: float) -> Hyperplane:
    """Tangent hyperplane to the correlator boundary at the singlet point ``(0, a2; b1, b2)``.

    Keys are correlator settings ``(x, y)``; the hyperplane is
    ``sum c_xy <A_x B_y> = offset`` and the result is normalized to unit length.
    """
    if not 0 < b1 < a2 < b2 < np.pi:
        raise RegionError("0 < b1 < a2 < b2 < pi")
    coeffs = {(1, 1): 1 / np.sin(b1), (2, 1): 1 / np.sin(a2 - b1),
              (2, 2): 1 / np.sin(b2 - a2), (1, 2): -1 / np.sin(b2)}
    offset = 1 / np.tan(b1) + 1 / np.tan(a2 - b1) + 1 / np.tan(b2 - a2) - 1 / np.tan(b2)
    return Hyperplane(coeffs, float(offset)).normalized()


def expression_direction(expr: BellExpression) -> np.ndarray:
    """Unit vector of the 8 marginal and correlator coefficients (A1 A2 B1 B2 A1B1 A2B1 A1B2 A2B2)."""
    corr = expr.correlators()
    keys = [(1, 0), (2, 0), (0, 1), (0, 2), (1, 1), (2, 1), (1, 2), (2, 2)]
    v = np.array([corr.get(k, 0.0) for k in keys])
    return v / np.linalg.norm(v)


@dataclass
class AngulousPair:
    first: FamilyInstance
    second: FamilyInstance
    behavior: Behavior
    values: tuple
    distance: float
    coincide: bool

    @property
    def shared(self) -> bool:
        return max(abs(v - inst.C) for v, inst in zip(self.values, (self.first, self.second))) <= 1e-9

    def to_dict(self) -> dict:
        return {"first": self.first.kind, "second": self.second.kind, "values": list(self.values),
                "bounds": [self.first.C, self.second.C], "distance": self.distance,
                "coincide": self.coincide, "shared": self.shared}


def _pair(first: FamilyInstance, second: FamilyInstance) -> AngulousPair:
    P = first.behavior()
    values = (bell_value(first.expression, P), bell_value(second.expression, P))
    # compare the normalized hyperplanes sum c.v <= C
    u = np.append(expression_direction(first.expression), 0.0)
    v = np.append(expression_direction(second.expression), 0.0)
    u[-1] = first.C / np.linalg.norm(_raw_direction(first.expression))
    v[-1] = second.C / np.linalg.norm(_raw_direction(second.expression))
    dist = float(np.linalg.norm(u - v))
    return AngulousPair(first, second, P, values, dist, dist < 1e-9)


def _raw_direction(expr: BellExpression) -> np.ndarray:
    corr = expr.correlators()
    keys = [(1, 0), (2, 0), (0, 1), (0, 2), (1, 1), (2, 1), (1, 2), (2, 2)]
    return np.array([corr.get(k, 0.0) for k in keys])


def angulous_pair(theta: float) -> AngulousPair:
    """Tilted CHSH and the partial-entanglement expression at ``b = mu_theta``."""
    tilted = build("tiltedChsh", theta=theta)
    return _pair(tilted, build("partialTheta", theta=theta, b=tilted_mu(theta)))


def wagner_pair(theta: float) -> AngulousPair:
    w = build("wagner", theta=theta)
    return _pair(w, build("partialTheta", theta=theta, b=wagner_b(theta)))


def two_param_overlap(theta: float, b: float) -> dict:
    """Compare partialTheta at ``b`` with partialTwoParam at ``(-b, b)``.

    The two-parameter family orders Bob's settings as ``(b1, b2) = (-b, b)``
    while partialTheta uses ``(b, -b)``, so Bob's settings are swapped before
    comparing. Returns the mapping found and the largest coefficient deviation.
    """
    one = build("partialTheta", theta=theta, b=abs(b))
    two = build("partialTwoParam", theta=theta, b1=-abs(b), b2=abs(b))
    c1 = one.expression.correlators()
    c2 = {(x, {0: 0, 1: 2, 2: 1}[y]): v for (x, y), v in two.expression.correlators().items()}
    keys = set(c1) | set(c2)
    dev = max(abs(c1.get(k, 0.0) - c2.get(k, 0.0)) for k in keys)
    return {"swap_bob_settings": True, "lam_sq": one.extra["lam_sq"],
            "lam1": two.bindings["lam1"], "lam2": two.bindings["lam2"],
            "C": [one.C, two.C], "max_deviation": float(dev)}
