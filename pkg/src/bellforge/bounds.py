"""Independent bounds on Bell expressions and tests on the geometry of the
quantum set: local bound by enumeration, NPA relaxations (bipartite, binary
outcomes), the Tsirelson-Landau-Masanes criterion and the decomposability
test for boundary points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BudgetError, ScenarioMismatchError, SolverError
from .hilbert import Behavior, BellExpression
from .sdp import lmi_maximize

LOCAL_BUDGET = 10 ** 7
TIE_TOL = 1e-12
LEVELS = ("1", "1ab", "2")


# -- local bound -----------------------------------------------------------------


def _full_tensor(expr: BellExpression) -> np.ndarray:
    """alpha[a_1..a_n, x_1..x_n] with setting index 0 = identity."""
    sc = expr.scenario
    T = np.zeros((sc.d,) * sc.n + (sc.m + 1,) * sc.n)
    for (a, x), c in expr.coefficients.items():
        T[a + x] += c
    return T


def local_bound(expr: BellExpression):
    """Maximum over deterministic strategies and the first maximizer.

    The strategy is a tuple per party of outcomes per setting; strategies are
    ordered lexicographically (party 1 first) and ties within ``1e-12`` go to
    the first one.
    """
    sc = expr.scenario
    n, m, d = sc.n, sc.m, sc.d
    if d ** (n * m) > LOCAL_BUDGET:
        raise BudgetError(f"{d}^{n * m} strategies exceed budget {LOCAL_BUDGET}")
    local = list(itertools.product(range(d), repeat=m))
    # ind[s, a, x] = 1 when local strategy s answers a to setting x (x = 0: identity, a = 0)
    ind = np.zeros((len(local), d, m + 1))
    ind[:, 0, 0] = 1
    for s, out in enumerate(local):
        for x, a in enumerate(out):
            ind[s, a, x + 1] = 1
    T = _full_tensor(expr)
    # contract party by party: the leading axis of T is always the next party's outcome
    for k in range(n):
        # T axes: (s_1..s_k, a_{k+1}..a_n, x_{k+1}..x_n)
        na = n - k
        T = np.tensordot(T, ind, axes=([k, k + na], [1, 2]))  # appends s_{k+1} at the end
        T = np.moveaxis(T, -1, k)
    values = T.reshape(-1)
    best = values.max()
    idx = int(np.flatnonzero(values >= best - TIE_TOL)[0])
    digits = np.unravel_index(idx, (len(local),) * n)
    strategy = tuple(local[s] for s in digits)
    return float(values[idx]), strategy


def strategy_value(expr: BellExpression, strategy: Sequence[Sequence[int]]) -> float:
    total = 0.0
    for (a, x), c in expr.coefficients.items():
        if all(xk == 0 or strategy[k][xk - 1] == ak for k, (ak, xk) in enumerate(zip(a, x))):
            total += c
    return total


# -- NPA moment matrices ---------------------------------------------------------


def _reduce(word: Sequence[int]) -> tuple:
    """Binary observables square to one: cancel equal neighbours."""
    out: list = []
    for x in word:
        if out and out[-1] == x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def _canonical(aw: tuple, bw: tuple) -> tuple:
    """Moment key; real relaxation identifies a word with its adjoint."""
    return min((aw, bw), (aw[::-1], bw[::-1]))


class MomentProblem:
    """Real symmetric NPA moment matrix for two parties with binary outcomes.

    Operators are the +-1 observables ``A_x`` and ``B_y``; ``level`` is one
    of ``"1"``, ``"1ab"`` or ``"2"``.
    """

    def __init__(self, m: int, level: str = "1ab"):
        if level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        self.m, self.level = m, level
        ops = [((), ())]
        ops += [((x,), ()) for x in range(1, m + 1)] + [((), (y,)) for y in range(1, m + 1)]
        if level in ("1ab", "2"):
            ops += [((x,), (y,)) for x in range(1, m + 1) for y in range(1, m + 1)]
        if level == "2":
            ops += [((x, xx), ()) for x in range(1, m + 1) for xx in range(1, m + 1) if x != xx]
            ops += [((), (y, yy)) for y in range(1, m + 1) for yy in range(1, m + 1) if y != yy]
        self.ops = ops
        size = len(ops)
        self.index = np.zeros((size, size), dtype=int)
        keys: dict = {}
        for i, (ua, ub) in enumerate(ops):
            for j, (va, vb) in enumerate(ops):
                key = _canonical(_reduce(ua[::-1] + va), _reduce(ub[::-1] + vb))
                self.index[i, j] = keys.setdefault(key, len(keys))
        self.keys = list(keys)
        self.key_index = keys

    @property
    def size(self) -> int:
        return len(self.ops)

    def basis_matrix(self, key) -> np.ndarray:
        return (self.index == self.key_index[key]).astype(float)

    def lmi(self, fixed: Mapping[tuple, float] | None = None):
        """``(F0, F, free_keys)``: the moment matrix is ``F0 + sum_k y_k F[k]``."""
        fixed = dict(fixed or {})
        fixed[((), ())] = 1.0
        F0 = np.zeros((self.size, self.size))
        F, free = [], []
        for key in self.keys:
            B = self.basis_matrix(key)
            if key in fixed:
                F0 += fixed[key] * B
            else:
                F.append(B)
                free.append(key)
        return F0, F, free


def correlator_key(x: Sequence[int]) -> tuple:
    xa, xb = x
    return _canonical((xa,) if xa else (), (xb,) if xb else ())


def _check_bipartite_binary(sc):
    if sc.n != 2 or sc.d != 2:
        raise ScenarioMismatchError("NPA bounds support two parties with binary outcomes only")


@dataclass
class NpaResult:
    value: float
    moments: dict
    status: str
    iterations: int


def npa_solve(expr: BellExpression, level: str = "1ab", tol: float = 1e-10) -> NpaResult:
    _check_bipartite_binary(expr.scenario)
    prob = MomentProblem(expr.scenario.m, level)
    F0, F, free = prob.lmi()
    corr = expr.correlators()
    const = corr.get((0, 0), 0.0)
    pos = {k: i for i, k in enumerate(free)}
    c = np.zeros(len(free))
    for x, v in corr.items():
        if x != (0, 0):
            c[pos[correlator_key(x)]] += v
    value, y, res = lmi_maximize([F0], [[f] for f in F], c, tol=tol)
    return NpaResult(const + value, dict(zip(free, y)), res.status, res.iterations)


def npa_upper_bound(expr: BellExpression, level: str = "1ab") -> float:
    """Upper bound on the quantum value from the NPA relaxation at ``level``."""
    return npa_solve(expr, level).value


# -- correlation-geometry tests -------------------------------------------------


def tlm_residual(corr) -> float:
    """Left side of the TLM criterion for a 2x2 correlator table with zero marginals.

    ``corr[x][y] = <A_x B_y>``; the behavior is quantum iff the result is >= 0.
    """
    E = np.asarray(corr, float)
    if E.shape != (2, 2):
        raise ValueError("expected a 2x2 correlator table")
    if np.abs(E).max() > 1 + 1e-12:
        raise ValueError("correlators must lie in [-1, 1]")
    E = np.clip(E, -1, 1)
    return float(1 + np.prod(E) + np.prod(np.sqrt(1 - E ** 2)) - 0.5 * np.sum(E ** 2))


def tlm_from_behavior(P: Behavior, tol: float = 1e-10) -> float:
    if P.scenario.n != 2 or P.scenario.m != 2 or P.scenario.d != 2:
        raise ScenarioMismatchError("TLM criterion needs a 2x2x2 behavior")
    margs = [P.correlator((1, 0)), P.correlator((2, 0)), P.correlator((0, 1)), P.correlator((0, 2))]
    if max(abs(v) for v in margs) > tol:
        raise ValueError("TLM criterion requires zero marginals")
    return tlm_residual([[P.correlator((x, y)) for y in (1, 2)] for x in (1, 2)])


def boundary_correlators(x: float, y: float, alpha: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """Correlators of the one-common-measurement family, optionally stretched."""
    return np.array([[beta, alpha * np.cos(x + y)], [alpha * np.cos(x), alpha * np.cos(y)]])


@dataclass
class ProbeResult:
    member: bool
    residual: float


def non_exposed_probe(x: float, y: float, d_alpha: float, beta2: float) -> ProbeResult:
    """Is the point stretched to ``alpha = 1 + d_alpha`` with ``beta = 1 - beta2 d_alpha^2`` quantum?"""
    if not (0 < x and 0 < y and x + y < np.pi):
        raise ValueError("need 0 < x, y and x + y < pi")
    if abs(d_alpha) > 0.1:
        raise ValueError("d_alpha must be small")
    E = boundary_correlators(x, y, 1 + d_alpha, 1 - beta2 * d_alpha ** 2)
    if np.abs(E).max() > 1:
        return ProbeResult(False, -np.inf)
    r = tlm_residual(E)
    return ProbeResult(r >= 0, r)


# -- decomposability ---------------------------------------------------------------

COORDINATES = (((1,), ()), ((2,), ()), ((), (1,)), ((), (2,)),
               ((1,), (1,)), ((1,), (2,)), ((2,), (1,)), ((2,), (2,)))


def behavior_coordinates(P: Behavior) -> np.ndarray:
    """(<A1>, <A2>, <B1>, <B2>, <A1B1>, <A1B2>, <A2B1>, <A2B2>)."""
    xs = [(1, 0), (2, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2)]
    return np.array([P.correlator(x) for x in xs])


def _coordinate_gap(prob: MomentProblem, v: np.ndarray, i: int, tol: float, slack: float) -> float:
    key = COORDINATES[i]
    fixed = {k: v[j] for j, k in enumerate(COORDINATES) if j != i}
    F0, F, free = prob.lmi(fixed)
    # boundary points are feasible only up to round-off; allow Gamma >= -slack
    F0 = F0 + slack * np.eye(len(F0))
    nf = len(free)
    zero = np.zeros_like(F0)
    # two independent copies, block diagonal
    Fs = [[f, zero] for f in F] + [[zero, f] for f in F]
    c = np.zeros(2 * nf)
    c[free.index(key)] = 1.0
    c[nf + free.index(key)] = -1.0
    val, _, _ = lmi_maximize([F0, F0], Fs, c, tol=tol)
    return max(val, 0.0)


def decomposability(P: Behavior, level: str = "1ab", tol: float = 1e-10, slack: float = 1e-10) -> float:
    """Delta = min_i max (P1_i - P2_i) over pairs of relaxation points agreeing with P elsewhere.

    Coordinates are the marginals and correlators; Delta = 0 flags a
    boundary point of the relaxation. The relaxation is loosened by
    ``slack`` (identity added to the moment matrix) so that boundary points
    stay strictly feasible; Delta then carries an offset of order ``slack``.
    If the solver still stalls the slack is raised tenfold, twice at most.
    """
    sc = P.scenario
    if (sc.n, sc.m, sc.d) != (2, 2, 2):
        raise ScenarioMismatchError("decomposability needs a 2x2x2 behavior")
    v = behavior_coordinates(P)
    prob = MomentProblem(2, level)
    best = np.inf
    for i in range(len(COORDINATES)):
        eps = slack
        for attempt in range(3):
            try:
                val = _coordinate_gap(prob, v, i, tol, eps)
                break
            except SolverError as exc:
                if attempt == 2:
                    raise SolverError(exc.status, f"decomposability coordinate {i}: {exc}") from None
                eps *= 10
        best = min(best, val)
    return float(best)
