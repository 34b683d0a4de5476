"""Numerical checks of self-testing arguments on explicit realizations.

Control operators ``Z``, ``X`` of each party are rebuilt from its two
measurement observables by inverting the ideal qubit relations. On a
realization that saturates the Bell bound these satisfy the nullifier
relations on the state, and the swap isometry

    |0..0> (x) psi  ->  sum_a |a> (x) prod_k X_k^{a_k} P_k^{a_k} psi,
    P^0 = (1 + Z)/2,  P^1 = (1 - Z)/2,

extracts the target state in tensor product with a junk state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatchError, RelationError
from .hilbert import KetState, Measurements, Realization, ghz_state, kron_all, phi_plus

RELATION_TOL = 1e-10
SWAP_RELATION_TOL = 1e-6
JUNK_TOL = 1e-12

QUBIT_KINDS = ("chsh_c", "singletAllSettings", "partialTheta", "partialTwoParam", "ghz")


@dataclass
class RelationReport:
    residuals: dict
    tol: float = RELATION_TOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    @property
    def worst(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_dict(self) -> dict:
        return {"residuals": self.residuals, "tol": self.tol, "passed": self.passed}


@dataclass
class SwapResult:
    fidelity: float
    junk_norm: float
    register: np.ndarray  # reduced state of the ancilla register
    target: np.ndarray
    relations: RelationReport | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        reg = self.register
        return {
            "fidelity": self.fidelity,
            "junk_norm": self.junk_norm,
            "register_purity": float(np.real(np.trace(reg @ reg))),
            "target": [[z.real, z.imag] for z in self.target],
            "relations": self.relations.to_dict() if self.relations else None,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _invert_xz(M1: np.ndarray, M2: np.ndarray, t1: float, t2: float) -> tuple:
    """Z, X with ``M_i = cos(t_i) Z + sin(t_i) X``."""
    s = np.sin(t2 - t1)
    Z = (np.sin(t2) * M1 - np.sin(t1) * M2) / s
    X = (np.cos(t1) * M2 - np.cos(t2) * M1) / s
    return Z, X


def _angles(kind: str, params: Mapping, n: int) -> list:
    """Measurement angles ``(t1, t2)`` per party used by ``kind``."""
    if kind == "chsh_c":
        c = params["c"]
        return [(0.0, np.pi / 2), (c, c - np.pi / 2)]
    if kind == "singletAllSettings":
        return [(0.0, params["a2"]), (params["b1"], params["b2"])]
    if kind == "partialTwoParam":
        return [(0.0, np.pi / 2), (params["b1"], params["b2"])]
    if kind in ("partialTheta", "ghz"):
        b = params["b"]
        return [(0.0, np.pi / 2)] * (n - 1) + [(b, -b)]
    raise ValueError(f"no qubit control operators for kind {kind!r}")


def control_operators(real: Realization, kind: str, params: Mapping) -> list:
    """Local ``(Z, X)`` for every party, built from the measured observables."""
    meas = real.measurements
    if meas.m != 2 or meas.d != 2:
        raise DimensionMismatchError("control operators need two binary measurements per party")
    expected = int(params.get("n", 2)) if kind == "ghz" else 2
    if meas.n != expected:
        raise DimensionMismatchError(f"{kind} expects {expected} parties, realization has {meas.n}")
    out = []
    for k, (t1, t2) in enumerate(_angles(kind, params, meas.n)):
        out.append(_invert_xz(meas.observable(k, 0), meas.observable(k, 1), t1, t2))
    return out


def _embed(real: Realization, local: Mapping[int, np.ndarray]) -> np.ndarray:
    dims = real.state.dims
    return kron_all([local.get(k, np.eye(d)) for k, d in enumerate(dims)])


def relation_residuals(real: Realization, kind: str, params: Mapping, tol: float = RELATION_TOL) -> RelationReport:
    """Norms ``||R psi||`` of the nullifier and derived relations for ``kind``."""
    ops = control_operators(real, kind, params)
    psi = real.state.amplitudes
    meas = real.measurements
    n = meas.n
    res = {}

    def norm(op):
        return float(np.linalg.norm(op @ psi))

    def on(k, M):
        return _embed(real, {k: M})

    if kind in ("chsh_c", "singletAllSettings"):
        (ZA, XA), (ZB, XB) = ops
        res["Z_A - Z_B"] = norm(on(0, ZA) - on(1, ZB))
        res["X_A - X_B"] = norm(on(0, XA) - on(1, XB))
    else:
        theta = params["theta"]
        s, c = np.sin(2 * theta), np.cos(2 * theta)
        Zn, Xn = ops[-1]
        for k in range(n - 1):
            res[f"Z_{k + 1} - Z_{n}"] = norm(on(k, ops[k][0]) - on(n - 1, Zn))
        Xs = _embed(real, {k: ops[k][1] for k in range(n - 1)})
        res["X relation"] = norm(Xs - s * on(n - 1, Xn) - c * Xs @ on(n - 1, Zn))
        if kind == "partialTwoParam":
            res["N2 relation"] = norm(np.eye(len(psi)) - s * Xs @ on(n - 1, Xn) - c * on(n - 1, Zn))
    # anticommutation relations on the state
    t1, t2 = _angles(kind, params, n)[-1]
    M1, M2 = meas.observable(n - 1, 0), meas.observable(n - 1, 1)
    res["{M1,M2} - 2cos(b1-b2)"] = norm(on(n - 1, M1 @ M2 + M2 @ M1) - 2 * np.cos(t1 - t2) * np.eye(len(psi)))
    for k, (Z, X) in enumerate(ops):
        res[f"{{Z,X}} party {k + 1}"] = norm(on(k, Z @ X + X @ Z))
        res[f"Z^2 - 1 party {k + 1}"] = norm(on(k, Z @ Z - np.eye(Z.shape[0])))
    return RelationReport(res, tol)


def default_target(kind: str, params: Mapping) -> KetState:
    if kind in ("chsh_c", "singletAllSettings"):
        return phi_plus()
    n = int(params.get("n", 2)) if kind == "ghz" else 2
    theta = params["theta"]
    if theta <= 0:
        raise ValueError("theta = 0 is a product state")
    # (|0..0> + t|1..1>) with t = (1 - cos 2t)/sin 2t, normalized
    t = (1 - np.cos(2 * theta)) / np.sin(2 * theta)
    return ghz_state(n, float(np.arctan(t)))


def swap_fidelity(real: Realization, kind: str, params: Mapping, target: KetState | None = None,
                  tol: float = SWAP_RELATION_TOL) -> SwapResult:
    """Apply the swap isometry and compare the extracted register with ``target``."""
    rel = relation_residuals(real, kind, params, tol)
    if not rel.passed:
        raise RelationError(f"relations violated (worst {rel.worst:.3g})")
    target = default_target(kind, params) if target is None else target
    ops = control_operators(real, kind, params)
    n = len(ops)
    if target.dims != (2,) * n:
        raise DimensionMismatchError(f"target dims {target.dims} do not match {n} qubits")
    psi = real.state.amplitudes
    branches = []
    for k, (Z, X) in enumerate(ops):
        I = np.eye(Z.shape[0])
        branches.append(((I + Z) / 2, X @ (I - Z) / 2))
    omega = np.zeros((2 ** n, len(psi)), dtype=complex)
    for idx in range(2 ** n):
        bits = [(idx >> (n - 1 - k)) & 1 for k in range(n)]
        omega[idx] = _embed(real, {k: branches[k][b] for k, b in enumerate(bits)}) @ psi
    total = np.linalg.norm(omega) ** 2
    junk = target.amplitudes.conj() @ omega
    junk_norm = float(np.linalg.norm(junk))
    if junk_norm < JUNK_TOL:
        raise RelationError("degenerate extraction: junk norm vanishes")
    fid = float(min(1.0, junk_norm ** 2 / total))
    reg = omega @ omega.conj().T / total
    return SwapResult(fid, junk_norm, reg, target.amplitudes, rel)


def rotate_locally(real: Realization, unitaries: Sequence[np.ndarray]) -> Realization:
    """Apply ``U_k`` to party ``k``: state and measurements transform together."""
    U = kron_all(unitaries)
    state = KetState(U @ real.state.amplitudes, real.state.dims)
    projs = [np.einsum("ij,xajk,lk->xail", u, p, u.conj()) for u, p in zip(unitaries, real.measurements.projectors)]
    return Realization(state, Measurements(projs, "explicit", check=False))
