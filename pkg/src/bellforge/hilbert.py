"""Finite-dimensional realizations: states, projective measurements, Bell
operators and behaviors.

Behaviors are dense tensors ``P[a_1, ..., a_n, x_1, ..., x_n]`` with 0-based
setting indices. Bell expressions store coefficients keyed by
``(a_tuple, x_tuple)`` with 1-based settings; setting 0 (outcome 0) stands for
the identity on that party, so marginal terms such as ``<A_1>`` fit in the
same table.
"""

from __future__ import annotations

import functools
import io
import itertools
import json
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

from .algebra import FormalPolynomial, Scenario, to_correlator_basis
from .errors import (DimensionMismatchError, NotHermitianError, ScenarioMismatchError)

MAX_DIM = 81
DEGENERATE_GAP = 1e-8

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

OMEGA3 = np.exp(2j * np.pi / 3)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return functools.reduce(np.kron, mats, np.eye(1, dtype=complex))


# -- states ----------------------------------------------------------------


@dataclass(frozen=True)
class KetState:
    """Normalized pure state on ``prod(dims)``-dimensional space."""

    amplitudes: np.ndarray
    dims: tuple

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        dims = tuple(int(d) for d in self.dims)
        if amps.size != int(np.prod(dims)):
            raise DimensionMismatchError(f"{amps.size} amplitudes for dims {dims}")
        if abs(np.linalg.norm(amps) - 1) > 1e-12:
            raise ValueError(f"state norm {np.linalg.norm(amps)} != 1")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_vector(cls, vec, dims) -> "KetState":
        vec = np.asarray(vec, dtype=complex)
        return cls(vec / np.linalg.norm(vec), dims)

    @property
    def n(self) -> int:
        return len(self.dims)

    def to_list(self) -> list:
        return [[z.real, z.imag] for z in self.amplitudes]


def basis_ket(digits: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[np.ravel_multi_index(tuple(digits), tuple(dims))] = 1
    return v


def phi_theta(theta: float) -> KetState:
    """cos(theta)|00> + sin(theta)|11>."""
    return ghz_state(2, theta)


def phi_plus() -> KetState:
    return phi_theta(np.pi / 4)


def ghz_state(n: int, theta: float = np.pi / 4) -> KetState:
    dims = (2,) * n
    v = np.cos(theta) * basis_ket([0] * n, dims) + np.sin(theta) * basis_ket([1] * n, dims)
    return KetState(v, dims)


def max_entangled(d: int) -> KetState:
    v = sum(basis_ket([i, i], (d, d)) for i in range(d)) / np.sqrt(d)
    return KetState(v, (d, d))


# -- measurements ----------------------------------------------------------------


def qubit_observable(angle: float) -> np.ndarray:
    return np.cos(angle) * PAULI_Z + np.sin(angle) * PAULI_X


def qubit_projectors(angle: float) -> np.ndarray:
    """Outcome 0 is the +1 eigenspace of cos(a)Z + sin(a)X."""
    m = qubit_observable(angle)
    eye = np.eye(2)
    return np.stack([(eye + m) / 2, (eye - m) / 2])


def qutrit_fourier() -> np.ndarray:
    k = np.arange(3)
    return OMEGA3 ** np.outer(k, k) / np.sqrt(3)


def qutrit_phase_unitary(phase: float) -> np.ndarray:
    return np.diag(OMEGA3 ** (np.arange(3) * phase))


def qutrit_projectors(phase: float) -> np.ndarray:
    """U(phase) F^dag |a><a| F U(phase)^dag for a = 0, 1, 2."""
    V = qutrit_phase_unitary(phase) @ qutrit_fourier().conj().T
    return np.stack([np.outer(V[:, a], V[:, a].conj()) for a in range(3)])


QUTRIT_GENERATOR = np.diag(2 * np.pi / 3 * np.arange(3)).astype(complex)
QUBIT_GENERATOR = -PAULI_Y / 2


class Measurements:
    """Projective measurements for every party.

    ``projectors[k]`` has shape ``(m, d, dim_k, dim_k)``. Parametrized kinds also
    keep their parameters and the Hermitian generator ``h`` of the unit
    parameter shift ``P -> exp(i h t) P exp(-i h t)``.
    """

    def __init__(self, projectors: Sequence[np.ndarray], kind: str = "explicit",
                 params: Sequence[Sequence[float]] | None = None,
                 generators: Sequence[Sequence[np.ndarray]] | None = None, check: bool = True):
        self.projectors = [np.asarray(p, dtype=complex) for p in projectors]
        shapes = {p.shape[:2] for p in self.projectors}
        if len(shapes) != 1:
            raise DimensionMismatchError("parties disagree on (settings, outcomes)")
        self.m, self.d = shapes.pop()
        self.kind = kind
        self.params = [list(map(float, p)) for p in params] if params is not None else None
        self.generators = generators
        if check:
            self.validate()

    @classmethod
    def qubit_xz(cls, angles: Sequence[Sequence[float]]) -> "Measurements":
        projs = [np.stack([qubit_projectors(a) for a in party]) for party in angles]
        gens = [[QUBIT_GENERATOR] * len(party) for party in angles]
        return cls(projs, "qubitXZ", angles, gens, check=False)

    @classmethod
    def qutrit_phase(cls, phases: Sequence[Sequence[float]]) -> "Measurements":
        projs = [np.stack([qutrit_projectors(a) for a in party]) for party in phases]
        gens = [[QUTRIT_GENERATOR] * len(party) for party in phases]
        return cls(projs, "qutritFourierPhase", phases, gens, check=False)

    @property
    def n(self) -> int:
        return len(self.projectors)

    @property
    def dims(self) -> tuple:
        return tuple(p.shape[-1] for p in self.projectors)

    @property
    def scenario(self) -> Scenario:
        return Scenario(self.n, self.m, self.d)

    def validate(self, tol: float = 1e-10):
        for k, party in enumerate(self.projectors):
            dim = party.shape[-1]
            for x in range(self.m):
                P = party[x]
                if np.abs(P - P.conj().transpose(0, 2, 1)).max() > tol:
                    raise NotHermitianError(f"party {k + 1} setting {x + 1}")
                if np.abs(P @ P - P).max() > tol:
                    raise ValueError(f"party {k + 1} setting {x + 1}: projector not idempotent")
                if np.abs(P.sum(axis=0) - np.eye(dim)).max() > tol:
                    raise ValueError(f"party {k + 1} setting {x + 1}: projectors do not sum to 1")

    def observable(self, k: int, x: int, e: int = 1) -> np.ndarray:
        """Correlator operator sum_a w^(a e) P_a for party k, setting x (0-based)."""
        w = np.exp(2j * np.pi / self.d)
        return np.tensordot(w ** (np.arange(self.d) * e), self.projectors[k][x], axes=1)

    def generator(self, k: int, x: int) -> np.ndarray:
        if self.generators is None:
            raise ValueError("explicit measurements carry no perturbation generator")
        return np.asarray(self.generators[k][x])

    def shifted(self, shifts: Mapping[tuple, float]) -> "Measurements":
        """Copy with setting (k, x) rotated by ``exp(i h t)`` for each ``t`` in ``shifts``."""
        projs = [p.copy() for p in self.projectors]
        params = [list(p) for p in self.params] if self.params is not None else None
        for (k, x), t in shifts.items():
            if self.kind == "qubitXZ":
                projs[k][x] = qubit_projectors(params[k][x] + t)
            elif self.kind == "qutritFourierPhase":
                projs[k][x] = qutrit_projectors(params[k][x] + t)
            else:
                U = expm(1j * t * self.generator(k, x))
                projs[k][x] = U @ projs[k][x] @ U.conj().T
            if params is not None:
                params[k][x] += t
        return Measurements(projs, self.kind, params, self.generators, check=False)

    def padded(self, extra: int = 1) -> "Measurements":
        """Embed every local space in dim + extra; the new levels join outcome 0."""
        projs = []
        for party in self.projectors:
            m, d, dim, _ = party.shape
            big = np.zeros((m, d, dim + extra, dim + extra), dtype=complex)
            big[:, :, :dim, :dim] = party
            for x in range(m):
                big[x, 0, dim:, dim:] = np.eye(extra)
            projs.append(big)
        gens = None
        if self.generators is not None:
            gens = []
            for party in self.generators:
                row = []
                for h in party:
                    hb = np.zeros((h.shape[0] + extra,) * 2, dtype=complex)
                    hb[:h.shape[0], :h.shape[0]] = h
                    row.append(hb)
                gens.append(row)
        return Measurements(projs, "explicit", None, gens, check=False)


def pad_state(state: KetState, extra: int = 1) -> KetState:
    dims = state.dims
    T = state.amplitudes.reshape(dims)
    big = np.zeros(tuple(d + extra for d in dims), dtype=complex)
    big[tuple(slice(0, d) for d in dims)] = T
    return KetState(big.ravel(), tuple(d + extra for d in dims))


@dataclass
class Realization:
    state: KetState
    measurements: Measurements

    def __post_init__(self):
        if tuple(self.state.dims) != self.measurements.dims:
            raise DimensionMismatchError(f"state dims {self.state.dims} vs measurement dims {self.measurements.dims}")

    @property
    def scenario(self) -> Scenario:
        return self.measurements.scenario

    def padded(self, extra: int = 1) -> "Realization":
        return Realization(pad_state(self.state, extra), self.measurements.padded(extra))


# -- behaviors -------------------------------------------------------------------


class Behavior:
    """Conditional probabilities ``P[a_1..a_n, x_1..x_n]`` (0-based settings)."""

    def __init__(self, P: np.ndarray, scenario: Scenario, check: bool = True):
        self.P = np.asarray(P, dtype=float)
        self.scenario = scenario
        n, m, d = scenario.n, scenario.m, scenario.d
        if self.P.shape != (d,) * n + (m,) * n:
            raise ScenarioMismatchError(f"tensor shape {self.P.shape} vs {scenario}")
        if check:
            self.validate()

    def validate(self, tol: float = 1e-10):
        n = self.scenario.n
        if self.P.min() < -tol:
            raise ValueError("negative probability")
        norms = self.P.sum(axis=tuple(range(n)))
        if np.abs(norms - 1).max() > tol:
            raise ValueError("probabilities do not sum to one")
        # no-signalling: marginal of party k must not depend on x_k's partners
        for k in range(n):
            marg = self.P.sum(axis=k)
            ref = np.take(marg, 0, axis=n - 1 + k)
            for x in range(1, self.scenario.m):
                if np.abs(np.take(marg, x, axis=n - 1 + k) - ref).max() > tol:
                    raise ValueError(f"signalling from party {k + 1}")

    def probability(self, a: Sequence[int], x: Sequence[int]) -> float:
        """P(a|x) with 1-based settings; setting 0 marginalizes that party."""
        idx_a, idx_x = [], []
        for k, (ak, xk) in enumerate(zip(a, x)):
            if xk == 0:
                idx_a.append(slice(None))
                idx_x.append(0)
            else:
                idx_a.append(ak)
                idx_x.append(xk - 1)
        sub = self.P[tuple(idx_a) + tuple(idx_x)]
        return float(np.sum(sub))

    def correlator(self, x: Sequence[int]) -> float:
        """<prod_k A_{x_k}> for binary outcomes (outcome 0 counts as +1)."""
        if self.scenario.d != 2:
            raise ScenarioMismatchError("correlators need binary outcomes")
        total = 0.0
        for a in itertools.product(range(2), repeat=self.scenario.n):
            if any(xk == 0 and ak for ak, xk in zip(a, x)):
                continue
            total += (-1) ** sum(a) * self.probability(a, x)
        return total

    def flat(self) -> list:
        """Rows ``(x_1..x_n, a_1..a_n, P)``, settings 1-based, x-major order."""
        n, m, d = self.scenario.n, self.scenario.m, self.scenario.d
        rows = []
        for x in itertools.product(range(m), repeat=n):
            for a in itertools.product(range(d), repeat=n):
                rows.append(tuple(xi + 1 for xi in x) + a + (float(self.P[a + x]),))
        return rows

    def to_csv(self) -> str:
        n = self.scenario.n
        buf = io.StringIO()
        buf.write(",".join([f"x{k}" for k in range(1, n + 1)] + [f"a{k}" for k in range(1, n + 1)] + ["p"]) + "\n")
        for row in self.flat():
            buf.write(",".join(str(v) for v in row[:-1]) + f",{row[-1]:.12g}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        sc = self.scenario
        return json.dumps({"scenario": {"n": sc.n, "m": sc.m, "d": sc.d},
                           "rows": [list(r) for r in self.flat()]})

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        doc = json.loads(text)
        sc = Scenario(**doc["scenario"])
        P = np.zeros((sc.d,) * sc.n + (sc.m,) * sc.n)
        for row in doc["rows"]:
            x = tuple(int(v) - 1 for v in row[:sc.n])
            a = tuple(int(v) for v in row[sc.n:2 * sc.n])
            P[a + x] = row[-1]
        return cls(P, sc)


def behavior(real: Realization) -> Behavior:
    """Born-rule behavior ``P(a|x) = ||(prod_k P^k_{a_k|x_k}) psi||^2``."""
    meas = real.measurements
    n = meas.n
    T = real.state.amplitudes.reshape(real.state.dims)
    # after processing party k, the leading axes are (x_1, a_1, i_1, ..., x_k, a_k, i_k)
    for k, proj in enumerate(meas.projectors):
        pos = 3 * k
        T = np.tensordot(proj, T, axes=([3], [pos]))  # (m, d, dim_k, ...rest)
        T = np.moveaxis(T, (0, 1, 2), (pos, pos + 1, pos + 2))
    probs = np.abs(T) ** 2
    probs = probs.sum(axis=tuple(3 * k + 2 for k in range(n)))
    # reorder (x1, a1, x2, a2, ...) into (a1..an, x1..xn)
    order = [2 * k + 1 for k in range(n)] + [2 * k for k in range(n)]
    return Behavior(np.transpose(probs, order), meas.scenario, check=False)


# -- Bell expressions ------------------------------------------------------------


class BellExpression:
    """Linear functional ``sum alpha(a|x) P(a|x)`` on behaviors."""

    def __init__(self, scenario: Scenario, coefficients: Mapping[tuple, float] | None = None):
        self.scenario = scenario
        acc: dict = {}
        for (a, x), c in (coefficients or {}).items():
            a, x = tuple(int(v) for v in a), tuple(int(v) for v in x)
            if len(a) != scenario.n or len(x) != scenario.n:
                raise ScenarioMismatchError(f"term {(a, x)} does not match {scenario}")
            for ak, xk in zip(a, x):
                if not 0 <= xk <= scenario.m or not 0 <= ak < scenario.d or (xk == 0 and ak != 0):
                    raise ValueError(f"invalid term {(a, x)}")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError("non-finite coefficient")
            acc[(a, x)] = acc.get((a, x), 0.0) + c
        self.coefficients = {k: v for k, v in sorted(acc.items()) if v != 0.0}

    @classmethod
    def from_correlators(cls, scenario: Scenario, corr: Mapping[tuple, float]) -> "BellExpression":
        """Binary outcomes: ``corr[x_tuple]`` multiplies ``<prod_k A_{x_k}>`` (0 = identity)."""
        if scenario.d != 2:
            raise ScenarioMismatchError("correlator form needs binary outcomes")
        coeffs: dict = {}
        for x, c in corr.items():
            x = tuple(x)
            active = [k for k, xk in enumerate(x) if xk]
            for bits in itertools.product(range(2), repeat=len(active)):
                a = [0] * scenario.n
                for k, b in zip(active, bits):
                    a[k] = b
                key = (tuple(a), x)
                coeffs[key] = coeffs.get(key, 0.0) + c * (-1) ** sum(bits)
        return cls(scenario, coeffs)

    @classmethod
    def from_polynomial(cls, poly: FormalPolynomial, assignment: Mapping[str, float] | None = None,
                        tol: float = 1e-9) -> "BellExpression":
        """Bell expression of a local-degree-1 polynomial at ``assignment``."""
        if poly.local_degree() > 1:
            raise ValueError("polynomial has local degree above one")
        coeffs = {}
        for mono, c in poly.evaluate(assignment).items():
            if abs(c.imag) > tol * max(1.0, abs(c.real)):
                raise ValueError(f"complex Bell coefficient {c}")
            a = tuple(w[0][1] if w else 0 for w in mono)
            x = tuple(w[0][0] if w else 0 for w in mono)
            coeffs[(a, x)] = c.real
        return cls(poly.scenario, coeffs)

    def to_polynomial(self) -> FormalPolynomial:
        sc = self.scenario
        terms = {}
        for (a, x), c in self.coefficients.items():
            out = FormalPolynomial.constant(sc, c)
            for k, (ak, xk) in enumerate(zip(a, x), start=1):
                if xk:
                    out = out * FormalPolynomial.projector(sc, k, xk, ak)
            for m_, v in out.terms.items():
                terms[m_] = terms[m_] + v if m_ in terms else v
        return FormalPolynomial(sc, terms, _normal=True)

    def canonical(self) -> "BellExpression":
        """Unique representative: outcome d-1 eliminated via normalization."""
        return BellExpression.from_polynomial(self.to_polynomial())

    def correlators(self) -> dict:
        """Correlator-basis coefficients ``{x_tuple: c}`` (binary outcomes only)."""
        if self.scenario.d != 2:
            raise ScenarioMismatchError("correlator view needs binary outcomes")
        out = {}
        for cm, c in to_correlator_basis(self.to_polynomial()).items():
            x = tuple(w[0][0] if w else 0 for w in cm)
            out[x] = c.evaluate().real
        return out

    def vector(self) -> np.ndarray:
        """Canonical coefficients as a dense vector over all (a, x) keys."""
        canon = self.canonical().coefficients
        sc = self.scenario
        keys = _all_keys(sc)
        return np.array([canon.get(k, 0.0) for k in keys])

    def __add__(self, other: "BellExpression") -> "BellExpression":
        if other.scenario != self.scenario:
            raise ScenarioMismatchError("scenario mismatch")
        acc = dict(self.coefficients)
        for k, v in other.coefficients.items():
            acc[k] = acc.get(k, 0.0) + v
        return BellExpression(self.scenario, acc)

    def scaled(self, s: float) -> "BellExpression":
        return BellExpression(self.scenario, {k: s * v for k, v in self.coefficients.items()})

    def to_json(self) -> str:
        sc = self.scenario
        return json.dumps({
            "scenario": {"n": sc.n, "m": sc.m, "d": sc.d},
            "terms": [{"a": list(a), "x": list(x), "coeff": c} for (a, x), c in self.coefficients.items()],
        })

    @classmethod
    def from_json(cls, text: str) -> "BellExpression":
        doc = json.loads(text)
        return cls(Scenario(**doc["scenario"]),
                   {(tuple(t["a"]), tuple(t["x"])): t["coeff"] for t in doc["terms"]})

    def to_csv(self) -> str:
        n = self.scenario.n
        lines = [",".join([f"x{k}" for k in range(1, n + 1)] + [f"a{k}" for k in range(1, n + 1)] + ["coeff"])]
        for (a, x), c in self.coefficients.items():
            lines.append(",".join(map(str, x + a)) + f",{c:.12g}")
        return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=None)
def _all_keys(sc: Scenario) -> tuple:
    local = [(0, 0)] + [(a, x) for x in range(1, sc.m + 1) for a in range(sc.d)]
    keys = []
    for combo in itertools.product(local, repeat=sc.n):
        keys.append((tuple(c[0] for c in combo), tuple(c[1] for c in combo)))
    return tuple(keys)


def bell_value(expr: BellExpression, P: Behavior) -> float:
    if expr.scenario != P.scenario:
        raise ScenarioMismatchError(f"{expr.scenario} vs {P.scenario}")
    return float(sum(c * P.probability(a, x) for (a, x), c in expr.coefficients.items()))


def bell_operator(expr: BellExpression, meas: Measurements) -> np.ndarray:
    """Hermitian operator ``sum alpha(a|x) prod_k P^k_{a_k|x_k}``."""
    if expr.scenario.n != meas.n or expr.scenario.m > meas.m or expr.scenario.d != meas.d:
        raise DimensionMismatchError(f"expression {expr.scenario} vs measurements {meas.scenario}")
    dims = meas.dims
    D = int(np.prod(dims))
    if D > MAX_DIM:
        raise DimensionMismatchError(f"dimension {D} exceeds cap {MAX_DIM}")
    out = np.zeros((D, D), dtype=complex)
    for (a, x), c in expr.coefficients.items():
        factors = [meas.projectors[k][xk - 1][ak] if xk else np.eye(dims[k])
                   for k, (ak, xk) in enumerate(zip(a, x))]
        out += c * kron_all(factors)
    return out


def polynomial_matrix(poly: FormalPolynomial, meas: Measurements,
                      assignment: Mapping[str, float] | None = None) -> np.ndarray:
    """Substitute every ``X[k,x,a]`` by the corresponding projector matrix."""
    dims = meas.dims
    D = int(np.prod(dims))
    out = np.zeros((D, D), dtype=complex)
    for mono, c in poly.evaluate(assignment).items():
        factors = []
        for k, word in enumerate(mono):
            M = np.eye(dims[k], dtype=complex)
            for x, a in word:
                M = M @ meas.projectors[k][x - 1][a]
            factors.append(M)
        out += c * kron_all(factors)
    return out


class EigenMax(NamedTuple):
    value: float
    vector: np.ndarray
    gap: float
    degenerate: bool


def eigen_max(op: np.ndarray, tol: float = 1e-10) -> EigenMax:
    """Top eigenpair of a Hermitian matrix with the gap to the next eigenvalue."""
    op = np.asarray(op, dtype=complex)
    if np.abs(op - op.conj().T).max() > tol:
        raise NotHermitianError("operator is not Hermitian")
    vals, vecs = np.linalg.eigh((op + op.conj().T) / 2)
    gap = float(vals[-1] - vals[-2]) if len(vals) > 1 else np.inf
    return EigenMax(float(vals[-1]), vecs[:, -1], gap, gap < DEGENERATE_GAP)


def expectation(op: np.ndarray, state: KetState) -> complex:
    v = state.amplitudes
    return complex(v.conj() @ op @ v)
