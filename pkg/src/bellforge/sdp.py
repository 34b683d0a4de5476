"""Dense primal-dual interior-point solver for small block-diagonal SDPs.

Primal:  minimize <C, X>  s.t.  <A_i, X> = b_i,  X psd
Dual:    maximize b.y     s.t.  Z = C - sum_i y_i A_i psd

Infeasible-start HKM search direction with a Mehrotra predictor-corrector
step. Everything is deterministic: the starting point depends only on the
data and no randomness is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SolverError

MAX_SIZE = 200
ACCEPT_TOL = 1e-7
DIVERGENCE = 1e12


@dataclass
class SdpResult:
    status: str
    primal: float
    dual: float
    X: list
    y: np.ndarray
    Z: list
    iterations: int
    gap: float
    pinf: float
    dinf: float

    @property
    def value(self) -> float:
        return 0.5 * (self.primal + self.dual)


def _sym(M):
    return 0.5 * (M + M.T)


def _inner(U: Sequence[np.ndarray], V: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(u, v).real for u, v in zip(U, V)))


def _max_step(X: Sequence[np.ndarray], dX: Sequence[np.ndarray]) -> float:
    """Largest t with X + t dX psd (X positive definite)."""
    t = np.inf
    for Xb, dXb in zip(X, dX):
        lx, Q = np.linalg.eigh(Xb)
        S = Q / np.sqrt(lx)
        lam = np.linalg.eigvalsh(_sym(S.T @ dXb @ S)).min()
        if lam < 0:
            t = min(t, -1.0 / lam)
    return t


def solve_sdp(C: Sequence[np.ndarray], A: Sequence[Sequence[np.ndarray]], b: Sequence[float],
              tol: float = 1e-9, max_iter: int = 200, accept_tol: float = ACCEPT_TOL) -> SdpResult:
    """Solve the block SDP; ``A[i][blk]`` is the i-th constraint matrix on block ``blk``.

    Stops at relative gap and infeasibilities below ``tol``. If progress
    stalls, the best iterate is returned with status ``optimal_inaccurate``
    provided its worst measure is below ``accept_tol``. Raises
    :class:`SolverError` with status ``infeasible``, ``unbounded`` or
    ``max_iterations``.
    """
    C = [np.asarray(_sym(np.asarray(c, float))) for c in C]
    b = np.asarray(b, float)
    p = len(b)
    sizes = [c.shape[0] for c in C]
    if sum(sizes) > MAX_SIZE:
        raise SolverError("too_large", f"total size {sum(sizes)} > {MAX_SIZE}")
    Ab = [np.stack([_sym(np.asarray(A[i][k], float)) for i in range(p)]) if p else np.zeros((0, s, s))
          for k, s in enumerate(sizes)]

    def op_A(X):
        return sum(np.einsum("ikl,kl->i", Ab[k], X[k]) for k in range(len(sizes)))

    def op_At(y):
        return [np.einsum("i,ikl->kl", y, Ab[k]) for k in range(len(sizes))]

    normC = np.sqrt(_inner(C, C))
    normA = np.array([np.sqrt(sum(np.sum(Ab[k][i] ** 2) for k in range(len(sizes)))) for i in range(p)])
    if p and normA.min() == 0:
        raise ValueError(f"constraint {int(np.argmin(normA))} is identically zero")
    ntot = sum(sizes)
    xi = max(10.0, np.sqrt(ntot), ntot * max((1 + abs(b)) / (1 + normA), default=1.0))
    eta = max(10.0, np.sqrt(ntot), normC, normA.max(initial=0.0))
    X = [xi * np.eye(s) for s in sizes]
    Z = [eta * np.eye(s) for s in sizes]
    y = np.zeros(p)

    status = "max_iterations"
    it = 0
    best = None
    for it in range(1, max_iter + 1):
        Rp = b - op_A(X)
        Aty = op_At(y)
        Rd = [C[k] - Aty[k] - Z[k] for k in range(len(sizes))]
        mu = _inner(X, Z) / ntot
        pobj, dobj = _inner(C, X), float(b @ y)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(Rp) / (1 + np.linalg.norm(b))
        dinf = np.sqrt(_inner(Rd, Rd)) / (1 + normC)
        if not np.isfinite([gap, pinf, dinf]).all():
            break
        if gap <= tol and pinf <= tol and dinf <= tol:
            status = "optimal"
            break
        if best is None or max(gap, pinf, dinf) < best[0]:
            best = (max(gap, pinf, dinf), [x.copy() for x in X], y.copy(), [z.copy() for z in Z])
        xn = max(np.abs(x).max() for x in X)
        if xn > DIVERGENCE and pobj < -DIVERGENCE / 100:
            status = "unbounded"
            break
        if np.abs(y).max(initial=0.0) > DIVERGENCE and dobj > DIVERGENCE / 100:
            status = "infeasible"
            break

        try:
            X, y, Z = _step(X, y, Z, Rp, Rd, mu, Ab, op_A, op_At, sizes, ntot, p)
        except np.linalg.LinAlgError:
            # lost positive definiteness to round-off; fall back to the best iterate
            break
    else:
        it = max_iter

    if status == "max_iterations" and best is not None and best[0] <= accept_tol:
        _, X, y, Z = best
        status = "optimal_inaccurate"
    Rp = b - op_A(X)
    Aty = op_At(y)
    Rd = [C[k] - Aty[k] - Z[k] for k in range(len(sizes))]
    pobj, dobj = _inner(C, X), float(b @ y)
    result = SdpResult(status, pobj, dobj, X, y, Z, it,
                       abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)),
                       float(np.linalg.norm(Rp) / (1 + np.linalg.norm(b))),
                       float(np.sqrt(_inner(Rd, Rd)) / (1 + normC)))
    if status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(status, f"after {it} iterations (gap {result.gap:.2e})")
    return result


def _step(X, y, Z, Rp, Rd, mu, Ab, op_A, op_At, sizes, ntot, p):
    """One Mehrotra predictor-corrector step along the HKM direction."""
    Zi, Xh, Zih = [], [], []
    for k in range(len(sizes)):
        lz, Qz = np.linalg.eigh(Z[k])
        lx, Qx = np.linalg.eigh(X[k])
        if lz.min() <= 0 or lx.min() <= 0:
            raise np.linalg.LinAlgError("iterate left the positive definite cone")
        Zi.append((Qz / lz) @ Qz.T)
        Zih.append(Qz / np.sqrt(lz))
        Xh.append(Qx * np.sqrt(lx))
    # Schur complement M_ij = sum_blk tr(A_i X A_j Z^-1), formed as a Gram
    # matrix so that it stays numerically symmetric positive semidefinite
    M = np.zeros((p, p))
    for k in range(len(sizes)):
        W = (Xh[k].T @ Ab[k] @ Zih[k]).reshape(p, -1)
        M += W @ W.T
    scale = np.sqrt(np.maximum(np.diag(M), 1e-300))
    Ms = M / np.outer(scale, scale)
    try:
        chol = np.linalg.cholesky(Ms + 1e-15 * np.eye(p))

        def base_solve(r):
            return np.linalg.solve(chol.T, np.linalg.solve(chol, r / scale)) / scale
    except np.linalg.LinAlgError:
        pinv = np.linalg.pinv(Ms, rcond=1e-14)

        def base_solve(r):
            return pinv @ (r / scale) / scale

    def solve_M(r):
        dy = base_solve(r)
        for _ in range(2):  # iterative refinement
            dy = dy + base_solve(r - M @ dy)
        return dy

    XRdZi = [X[k] @ Rd[k] @ Zi[k] for k in range(len(sizes))]

    def direction(Rc):
        # Rc: target for dX + sym(X dZ Z^-1)
        rhs = Rp - op_A(Rc) + op_A(XRdZi)
        dy = solve_M(rhs) if p else np.zeros(0)
        Atdy = op_At(dy)
        dZ = [Rd[k] - Atdy[k] for k in range(len(sizes))]
        dX = [_sym(Rc[k] - X[k] @ dZ[k] @ Zi[k]) for k in range(len(sizes))]
        return dX, dy, dZ

    # predictor
    dXa, dya, dZa = direction([-X[k] for k in range(len(sizes))])
    ap = min(1.0, 0.98 * _max_step(X, dXa))
    ad = min(1.0, 0.98 * _max_step(Z, dZa))
    mu_aff = _inner([X[k] + ap * dXa[k] for k in range(len(sizes))],
                    [Z[k] + ad * dZa[k] for k in range(len(sizes))]) / ntot
    sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
    # corrector
    Rc = [sigma * mu * Zi[k] - X[k] - dXa[k] @ dZa[k] @ Zi[k] for k in range(len(sizes))]
    dX, dy, dZ = direction(Rc)
    ap = min(1.0, 0.98 * _max_step(X, dX))
    ad = min(1.0, 0.98 * _max_step(Z, dZ))
    X = [_sym(X[k] + ap * dX[k]) for k in range(len(sizes))]
    y = y + ad * dy
    Z = [_sym(Z[k] + ad * dZ[k]) for k in range(len(sizes))]
    return X, y, Z


def lmi_maximize(F0: Sequence[np.ndarray], F: Sequence[Sequence[np.ndarray]], c: Sequence[float],
                 tol: float = 1e-9, max_iter: int = 200, accept_tol: float = ACCEPT_TOL):
    """Maximize ``c.y`` subject to ``F0 + sum_k y_k F[k] psd`` (block lists).

    Returns ``(value, y, result)``. This is the dual of :func:`solve_sdp`,
    so its infeasible and unbounded statuses swap.
    """
    A = [[-np.asarray(f, float) for f in Fk] for Fk in F]
    try:
        res = solve_sdp(F0, A, c, tol=tol, max_iter=max_iter, accept_tol=accept_tol)
    except SolverError as exc:
        swap = {"infeasible": "unbounded", "unbounded": "infeasible"}
        if exc.status in swap:
            raise SolverError(swap[exc.status], str(exc).split(": ", 1)[-1]) from None
        raise
    return float(np.dot(c, res.y)), res.y, res
