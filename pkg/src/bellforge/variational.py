"""First- and second-order conditions for a state to maximize a Bell operator
under small changes of the measurements.

A direction ``(k, x)`` rotates the projectors of setting ``x`` of party ``k``
as ``P -> exp(i h t) P exp(-i h t)`` with the generator ``h`` stored on the
measurements; for XZ-plane qubit measurements this is a unit shift of the
angle, for qutrit phase measurements a unit shift of the phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSpectrumError, NonStationaryError, NotEigenvectorError
from .hilbert import DEGENERATE_GAP, BellExpression, Measurements, Realization, bell_operator, kron_all

EIGEN_TOL = 1e-8
STATIONARY_TOL = 1e-8
NEGATIVE_TOL = 1e-8


@dataclass(frozen=True)
class Direction:
    """Perturbation of setting ``x`` of party ``k`` (both 1-based)."""

    k: int
    x: int

    @property
    def key(self) -> tuple:
        return (self.k - 1, self.x - 1)


def default_directions(meas: Measurements) -> list[Direction]:
    """Every setting except the first of each party (fixes local unitaries)."""
    return [Direction(k, x) for k in range(1, meas.n + 1) for x in range(2, meas.m + 1)]


def tangent_operator(meas: Measurements, k: int, x: int) -> np.ndarray:
    """Derivative of the correlator observable along direction (k, x); 1-based."""
    h = meas.generator(k - 1, x - 1)
    M = meas.observable(k - 1, x - 1)
    return 1j * (h @ M - M @ h)


def _projector_derivatives(meas: Measurements, d: Direction, order: int) -> np.ndarray:
    h = meas.generator(*d.key)
    P = meas.projectors[d.key[0]][d.key[1]]
    first = 1j * (h @ P - P @ h)
    if order == 1:
        return first
    return 1j * (h @ first - first @ h)


def _operator_with(expr: BellExpression, meas: Measurements, repl: dict) -> np.ndarray:
    """Bell operator restricted to terms touching every replaced (party, setting)."""
    dims = meas.dims
    D = int(np.prod(dims))
    out = np.zeros((D, D), dtype=complex)
    for (a, x), c in expr.coefficients.items():
        used = {(k, xk - 1) for k, xk in enumerate(x) if xk}
        if not set(repl) <= used:
            continue
        factors = []
        for k, (ak, xk) in enumerate(zip(a, x)):
            if not xk:
                factors.append(np.eye(dims[k]))
            elif (k, xk - 1) in repl:
                factors.append(repl[(k, xk - 1)][ak])
            else:
                factors.append(meas.projectors[k][xk - 1][ak])
        out += c * kron_all(factors)
    return out


def operator_gradient(expr: BellExpression, meas: Measurements, dirs: Sequence[Direction]) -> list:
    return [_operator_with(expr, meas, {d.key: _projector_derivatives(meas, d, 1)}) for d in dirs]


def operator_hessian(expr: BellExpression, meas: Measurements, dirs: Sequence[Direction]) -> list:
    n = len(dirs)
    D = int(np.prod(meas.dims))
    out = [[None] * n for _ in range(n)]
    for i, di in enumerate(dirs):
        for j in range(i, n):
            dj = dirs[j]
            if di.key == dj.key:
                op = _operator_with(expr, meas, {di.key: _projector_derivatives(meas, di, 2)})
            elif di.key[0] == dj.key[0]:
                op = np.zeros((D, D), dtype=complex)  # one party never measures two settings at once
            else:
                op = _operator_with(expr, meas, {di.key: _projector_derivatives(meas, di, 1),
                                                 dj.key: _projector_derivatives(meas, dj, 1)})
            out[i][j] = out[j][i] = op
    return out


def _check_eigenvector(S: np.ndarray, psi: np.ndarray) -> float:
    lam = float(np.real(psi.conj() @ S @ psi))
    if np.linalg.norm(S @ psi - lam * psi) > EIGEN_TOL:
        raise NotEigenvectorError("state is not an eigenvector of the Bell operator")
    return lam


def first_order_residuals(expr: BellExpression, real: Realization,
                          dirs: Sequence[Direction] | None = None) -> np.ndarray:
    """``<psi| dS/d t_i |psi>`` for each direction; zero at stationary points."""
    meas = real.measurements
    dirs = default_directions(meas) if dirs is None else list(dirs)
    psi = real.state.amplitudes
    _check_eigenvector(bell_operator(expr, meas), psi)
    return np.array([float(np.real(psi.conj() @ G @ psi)) for G in operator_gradient(expr, meas, dirs)])


@dataclass
class HessianReport:
    gamma: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    eigenvalues: np.ndarray
    verdict: str
    gap: float

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "eigenvalues": self.eigenvalues.tolist(),
                "verdict": self.verdict, "gap": self.gap}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def hessian(expr: BellExpression, real: Realization, dirs: Sequence[Direction] | None = None) -> HessianReport:
    """Second derivatives of the eigenvalue carried by ``real.state``.

    ``gamma = mu + nu`` with ``mu_ij = <psi|d_i d_j S|psi>`` and the eigenvector
    response ``nu_ij = 2 Re sum_l <psi|d_i S|l><l|d_j S|psi> / (lam - lam_l)``.
    """
    meas = real.measurements
    dirs = default_directions(meas) if dirs is None else list(dirs)
    psi = real.state.amplitudes
    S = bell_operator(expr, meas)
    lam = _check_eigenvector(S, psi)
    grads = operator_gradient(expr, meas, dirs)
    res = np.array([np.real(psi.conj() @ G @ psi) for G in grads])
    if np.abs(res).max(initial=0.0) > STATIONARY_TOL:
        raise NonStationaryError(f"first-order residuals {res}")
    vals, vecs = np.linalg.eigh(S)
    overlap = np.abs(vecs.conj().T @ psi) ** 2
    # remove psi's own eigenvector from the spectrum by its largest overlap
    own = int(np.argmax(overlap))
    mask = np.ones(len(vals), bool)
    mask[own] = False
    gap = float(lam - vals[mask].max()) if mask.any() else np.inf
    near = np.abs(vals[mask] - lam).min(initial=np.inf)
    if near < DEGENERATE_GAP:
        raise DegenerateSpectrumError(f"eigenvalue {lam} is degenerate (gap {near:.3g})")
    V = vecs[:, mask]
    denom = lam - vals[mask]
    n = len(dirs)
    H = operator_hessian(expr, meas, dirs)
    mu = np.array([[np.real(psi.conj() @ H[i][j] @ psi) for j in range(n)] for i in range(n)])
    amps = np.array([V.conj().T @ (G @ psi) for G in grads])  # <l|d_i S|psi>
    nu = 2 * np.real((amps.conj() / denom) @ amps.T)
    gamma = mu + nu
    gamma = (gamma + gamma.T) / 2
    eig = np.linalg.eigvalsh(gamma) if n else np.zeros(0)
    top = gap > 0
    verdict = "localMax" if top and np.all(eig <= NEGATIVE_TOL) else "saddle"
    return HessianReport(gamma, mu, nu, eig, verdict, gap)


@dataclass
class LocalMaxReport:
    value: float
    residuals: np.ndarray
    residual_norm: float
    gap: float
    verdict: str
    hessian: HessianReport | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "residuals": self.residuals.tolist(),
                "residual_norm": self.residual_norm, "gap": self.gap, "verdict": self.verdict,
                "hessian": self.hessian.to_dict() if self.hessian else None, "notes": self.notes}


def check_local_max(expr: BellExpression, real: Realization,
                    dirs: Sequence[Direction] | None = None) -> LocalMaxReport:
    """Bundle stationarity, spectral gap and Hessian verdict.

    Verdicts: ``localMax``, ``saddle``, ``degenerate`` or ``nonStationary``.
    """
    meas = real.measurements
    dirs = default_directions(meas) if dirs is None else list(dirs)
    psi = real.state.amplitudes
    S = bell_operator(expr, meas)
    value = float(np.real(psi.conj() @ S @ psi))
    res = first_order_residuals(expr, real, dirs)
    norm = float(np.linalg.norm(res))
    vals = np.linalg.eigvalsh(S)
    gap = float(vals[-1] - vals[-2]) if len(vals) > 1 else np.inf
    if norm > STATIONARY_TOL:
        return LocalMaxReport(value, res, norm, gap, "nonStationary")
    try:
        rep = hessian(expr, real, dirs)
    except DegenerateSpectrumError as exc:
        return LocalMaxReport(value, res, norm, gap, "degenerate", notes=[str(exc)])
    notes = []
    if len(rep.eigenvalues) > 1 and np.ptp(rep.eigenvalues) < 1e-8:
        notes.append("eigenvalues equal")
    return LocalMaxReport(value, res, norm, gap, rep.verdict, rep, notes)
