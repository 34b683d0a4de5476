"""Independent oracles used across the test suite.

These re-derive quantities directly from matrices or by brute force,
without going through the package code paths they are used to check.
"""

import itertools

import numpy as np
from scipy.stats import unitary_group

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.diag([1.0, -1.0]).astype(complex)
W3 = np.exp(2j * np.pi / 3)


def xz_observable(angle):
    return np.cos(angle) * PAULI_Z + np.sin(angle) * PAULI_X


def xz_projectors(angle):
    M = xz_observable(angle)
    return np.stack([(np.eye(2) + M) / 2, (np.eye(2) - M) / 2])


def kron(*mats):
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def haar_projectors(rng, m, d, dim):
    """Random rank-balanced projective measurements: ``(m, d, dim, dim)``."""
    out = np.zeros((m, d, dim, dim), dtype=complex)
    for x in range(m):
        U = unitary_group.rvs(dim, random_state=rng)
        cuts = np.array_split(np.arange(dim), d)
        for a, idx in enumerate(cuts):
            V = U[:, idx]
            out[x, a] = V @ V.conj().T
    return out


def random_state(rng, dims):
    v = rng.normal(size=int(np.prod(dims))) + 1j * rng.normal(size=int(np.prod(dims)))
    return v / np.linalg.norm(v)


def born_table(psi, projectors):
    """P[a..., x...] by brute-force Kronecker products."""
    n = len(projectors)
    m, d = projectors[0].shape[:2]
    P = np.zeros((d,) * n + (m,) * n)
    for xs in itertools.product(range(m), repeat=n):
        for as_ in itertools.product(range(d), repeat=n):
            op = kron(*[projectors[k][xs[k], as_[k]] for k in range(n)])
            P[as_ + xs] = np.real(psi.conj() @ op @ psi)
    return P


def brute_local_bound(expr):
    """Max over deterministic strategies, enumerated in reversed order."""
    sc = expr.scenario
    per_party = list(itertools.product(range(sc.d), repeat=sc.m))
    best = -np.inf
    for strat in reversed(list(itertools.product(per_party, repeat=sc.n))):
        v = 0.0
        for (a, x), c in expr.coefficients.items():
            if all(xk == 0 or strat[k][xk - 1] == ak for k, (ak, xk) in enumerate(zip(a, x))):
                v += c
        best = max(best, v)
    return best


# -- projector words ------------------------------------------------------------


def _rewrite_once(word, d):
    """Apply one rule at the rightmost position where any applies; None if irreducible."""
    for i in range(len(word) - 1, -1, -1):
        x, a = word[i]
        if i + 1 < len(word) and word[i + 1][0] == x:
            if word[i + 1][1] != a:
                return {}
            return {word[:i] + word[i + 1:]: 1}
        if a == d - 1:
            out = {word[:i] + word[i + 1:]: 1}
            for b in range(d - 1):
                out[word[:i] + ((x, b),) + word[i + 1:]] = -1
            return out
    return None


def rewrite_normal(word, d):
    """Normal form by exhaustive rewriting, rightmost rule first."""
    todo = {tuple(word): 1}
    done = {}
    while todo:
        w, c = todo.popitem()
        step = _rewrite_once(w, d)
        if step is None:
            done[w] = done.get(w, 0) + c
            continue
        for nw, k in step.items():
            todo[nw] = todo.get(nw, 0) + c * k
            if todo[nw] == 0:
                del todo[nw]
    return {w: c for w, c in done.items() if c}


def word_matrix(word, projectors):
    """Product of the projectors of one party along ``word`` (1-based settings)."""
    dim = projectors.shape[-1]
    M = np.eye(dim, dtype=complex)
    for x, a in word:
        M = M @ projectors[x - 1][a]
    return M


def terms_matrix(terms, projectors, env=None):
    """Matrix of ``{monomial: coeff}`` with one projector stack per party."""
    dims = [p.shape[-1] for p in projectors]
    out = np.zeros((int(np.prod(dims)),) * 2, dtype=complex)
    for mono, c in terms.items():
        c = c.evaluate(env) if hasattr(c, "evaluate") else c
        out += c * kron(*[word_matrix(w, projectors[k]) for k, w in enumerate(mono)])
    return out


def random_word(rng, m, d, max_len):
    return tuple((int(rng.integers(1, m + 1)), int(rng.integers(0, d))) for _ in range(rng.integers(0, max_len + 1)))


def random_terms(rng, n, m, d, n_terms, max_len):
    """Raw (not normalized) monomials with small complex integer coefficients."""
    terms = {}
    for _ in range(n_terms):
        mono = tuple(random_word(rng, m, d, max_len) for _ in range(n))
        terms[mono] = complex(int(rng.integers(-3, 4)), int(rng.integers(-2, 3)))
    return terms


# -- operators --------------------------------------------------------------------


def qutrit_basis_projectors(phase):
    """U(phase) F^dag |a><a| F U(phase)^dag with F_kl = w^(kl)/sqrt(3)."""
    k = np.arange(3)
    F = W3 ** np.outer(k, k) / np.sqrt(3)
    U = np.diag(W3 ** (k * phase))
    V = U @ F.conj().T
    return np.stack([np.outer(V[:, a], V[:, a].conj()) for a in range(3)])


def angle_projectors(angles, d):
    """Projector stacks per party from XZ angles (d = 2) or Fourier phases (d = 3)."""
    make = xz_projectors if d == 2 else qutrit_basis_projectors
    return [np.stack([make(t) for t in party]) for party in angles]


def operator_from_projectors(expr, projectors):
    dims = [p.shape[-1] for p in projectors]
    out = np.zeros((int(np.prod(dims)),) * 2, dtype=complex)
    for (a, x), c in expr.coefficients.items():
        out += c * kron(*[projectors[k][xk - 1][ak] if xk else np.eye(dims[k])
                          for k, (ak, xk) in enumerate(zip(a, x))])
    return out


def shifted_angles(angles, shifts):
    out = [list(p) for p in angles]
    for (k, x), t in shifts.items():
        out[k][x] += t
    return out


def fd_gradient(expr, angles, psi, dirs, d, h=1e-5):
    """Central differences of <psi|S(t)|psi> along 0-based (party, setting) keys."""
    def val(shift):
        S = operator_from_projectors(expr, angle_projectors(shifted_angles(angles, shift), d))
        return np.real(psi.conj() @ S @ psi)
    return np.array([(val({k: h}) - val({k: -h})) / (2 * h) for k in dirs])


def fd_hessian(expr, angles, dirs, d, h=1e-4):
    """Second differences of the top eigenvalue of S(t)."""
    def top(shift):
        S = operator_from_projectors(expr, angle_projectors(shifted_angles(angles, shift), d))
        return np.linalg.eigvalsh((S + S.conj().T) / 2)[-1]
    n = len(dirs)
    H = np.zeros((n, n))
    f0 = top({})
    for i, ki in enumerate(dirs):
        H[i, i] = (top({ki: h}) - 2 * f0 + top({ki: -h})) / h ** 2
        for j in range(i + 1, n):
            kj = dirs[j]
            H[i, j] = H[j, i] = (top({ki: h, kj: h}) - top({ki: h, kj: -h}) - top({ki: -h, kj: h})
                                 + top({ki: -h, kj: -h})) / (4 * h * h)
    return H


def _cancel(word):
    out = []
    for x in word:
        if out and out[-1] == x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def cvxpy_npa_1ab(corr):
    """Level 1+AB bound on a 2x2 correlator expression solved with cvxpy.

    ``corr`` maps ``(x, y)`` (0 = identity) to coefficients. Moments of a
    word and its joint reversal are identified (real relaxation).
    """
    import cvxpy as cp

    ops = [((), ())] + [((x,), ()) for x in (1, 2)] + [((), (y,)) for y in (1, 2)]
    ops += [((x,), (y,)) for x in (1, 2) for y in (1, 2)]
    n = len(ops)
    G = cp.Variable((n, n), symmetric=True)
    first, cons = {}, [G >> 0]
    for i, (ua, ub) in enumerate(ops):
        for j, (va, vb) in enumerate(ops):
            a, b = _cancel(ua[::-1] + va), _cancel(ub[::-1] + vb)
            key = min((a, b), (a[::-1], b[::-1]))
            if key == ((), ()):
                cons.append(G[i, j] == 1)
            elif key in first:
                cons.append(G[i, j] == G[first[key]])
            else:
                first[key] = (i, j)
    obj = corr.get((0, 0), 0.0)
    for (x, y), c in corr.items():
        if (x, y) != (0, 0):
            obj = obj + c * G[0, ops.index(((x,) if x else (), (y,) if y else ()))]
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value
