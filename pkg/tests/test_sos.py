import json
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellforge.algebra import FormalPolynomial, Scenario
from bellforge.errors import MissingSymbolError, NoSolutionError
from bellforge.families import SOS_KINDS, build
from bellforge.hilbert import Measurements, Realization, max_entangled
from bellforge.sos import (MeasurementDictionary, NullifierSpec, SOSCertificate, gamma_residuals,
                           identity_residual, nullifier_matrix, promote_nullifier, random_measurements,
                           solve_gamma, sos_expand, verify_certificate, xz_pair)

from instances import sample_instance
from oracles import PAULI_X, PAULI_Z, W3, haar_projectors, kron, qutrit_basis_projectors, terms_matrix

SC2 = Scenario(2, 2, 2)
SC3 = Scenario(2, 2, 3)


def Y(sc, k, x, e=1):
    return FormalPolynomial.correlator(sc, k, x, e)


def corr_values(cert, env=None):
    return cert.bell_expression(env).correlators()


def mirror_dictionary():
    return MeasurementDictionary(SC2, {"Z_A": "Y[1,1,1]", "X_A": "Y[1,2,1]",
                                       "Z_B": "(Y[2,1,1] + Y[2,2,1])/(2*cos(b))",
                                       "X_B": "(Y[2,1,1] - Y[2,2,1])/(2*sin(b))"})


def singlet_mirror_certificate():
    d = mirror_dictionary()
    squares = [(1.0, promote_nullifier("Z_A - Z_B", d)),
               (NullifierSpec("", "lam**2").weight_expr, promote_nullifier("X_A - X_B", d))]
    return sos_expand(squares)


def phi_plus_certificate():
    """Two general nullifiers on phi+ with Alice at (0, a2) and Bob at (b1, b2)."""
    d = MeasurementDictionary(SC2, {"Z_A": "Y[1,1,1]", "X_A": "(Y[1,2,1] - cos(a2)*Y[1,1,1])/sin(a2)",
                                    "Z_B": "(sin(b2)*Y[2,1,1] - sin(b1)*Y[2,2,1])/sin(b2 - b1)",
                                    "X_B": "(cos(b1)*Y[2,2,1] - cos(b2)*Y[2,1,1])/sin(b2 - b1)"})
    n0 = promote_nullifier("al*(Z_A - Z_B) + be*(X_A - X_B)", d)
    n1 = promote_nullifier("ga*(Z_A - Z_B) + de*(X_A - X_B)", d)
    return sos_expand([(1.0, n0), (1.0, n1)], names=["N0", "N1"])


class TestPromotion:
    def test_mirror_difference(self):
        N = promote_nullifier("Z_A - Z_B", mirror_dictionary())
        b = 0.4
        expect = Y(SC2, 1, 1) - (Y(SC2, 2, 1) + Y(SC2, 2, 2)).scale(1 / (2 * np.cos(b)))
        diff = N.subs({"b": b}) - expect
        assert all(abs(c.evaluate()) < 1e-14 for c in diff.terms.values())

    def test_identity(self):
        N = promote_nullifier("I", mirror_dictionary())
        assert N == FormalPolynomial.constant(SC2)

    def test_missing_symbol(self):
        with pytest.raises(MissingSymbolError):
            promote_nullifier("Q_A - Z_B", mirror_dictionary())

    def test_xz_pair_inverts_rotation(self):
        t1, t2 = 0.3, 1.7
        Z, X = xz_pair(SC2, 1, t1, t2)
        projs = [np.stack([np.stack([(np.eye(2) + np.cos(t) * PAULI_Z + np.sin(t) * PAULI_X) / 2,
                                     (np.eye(2) - np.cos(t) * PAULI_Z - np.sin(t) * PAULI_X) / 2])
                           for t in (t1, t2)]), haar_projectors(np.random.default_rng(0), 2, 2, 2)]
        assert np.abs(terms_matrix(Z.terms, projs) - kron(PAULI_Z, np.eye(2))).max() < 1e-12
        assert np.abs(terms_matrix(X.terms, projs) - kron(PAULI_X, np.eye(2))).max() < 1e-12

    def test_nullifier_matrix(self):
        ops = {"Z_A": kron(PAULI_Z, np.eye(2)), "Z_B": kron(np.eye(2), PAULI_Z)}
        M = nullifier_matrix("lam*(Z_A - Z_B)", ops, {"lam": 2.0})
        assert np.abs(M - 2 * (ops["Z_A"] - ops["Z_B"])).max() < 1e-14


class TestExpand:
    @pytest.mark.parametrize("b", [0.2, np.pi / 4, 1.1])
    def test_singlet_mirror(self, b):
        cert = singlet_mirror_certificate()
        env = {"b": b, "lam": np.tan(b)}
        assert np.abs(gamma_residuals(cert, env)).max() < 1e-12
        assert abs(cert.C_value(env) - 2 * (1 + np.tan(b) ** 2)) < 1e-12
        corr = corr_values(cert, env)
        t, c = np.tan(b), np.cos(b)
        expect = {(1, 1): 1 / c, (1, 2): 1 / c, (2, 1): t / c, (2, 2): -t / c}
        assert set(corr) == set(expect)
        assert all(abs(corr[k] - v) < 1e-12 for k, v in expect.items())

    def test_gamma_coefficient_singlet(self):
        # {B1, B2} carries (1/4)(1/cos^2 b - lam^2/sin^2 b)
        cert = singlet_mirror_certificate()
        key = ((), ((1, 1), (2, 1)))
        coeff = cert.gamma_terms()[key].evaluate({"b": np.pi / 4, "lam": 0.0})
        assert abs(coeff - 0.5) < 1e-14

    def test_chsh(self):
        A1, A2, B1, B2 = Y(SC2, 1, 1), Y(SC2, 1, 2), Y(SC2, 2, 1), Y(SC2, 2, 2)
        r = 1 / np.sqrt(2)
        cert = sos_expand([(r, A1 - (B1 + B2).scale(r)), (r, A2 - (B1 - B2).scale(r))])
        assert cert.gamma.is_zero
        assert abs(cert.C_value() - 2 * np.sqrt(2)) < 1e-12
        corr = corr_values(cert)
        assert all(abs(corr[k] - v) < 1e-12 for k, v in {(1, 1): 1, (1, 2): 1, (2, 1): 1, (2, 2): -1}.items())

    def test_single_square(self):
        cert = sos_expand([(1.0, Y(SC2, 1, 1) - Y(SC2, 2, 1))])
        assert "single_square" in cert.flags
        assert abs(cert.C_value() - 2) < 1e-14
        assert corr_values(cert) == pytest.approx({(1, 1): 2.0})

    def test_negative_weight_flag(self):
        cert = sos_expand([(-1.0, Y(SC2, 1, 1) - Y(SC2, 2, 1)), (1.0, Y(SC2, 1, 2) - Y(SC2, 2, 2))])
        assert "negative_weight" in cert.flags

    def test_json_round_trip(self):
        cert = build("partialTheta", theta=0.3, b=0.4).certificate
        back = SOSCertificate.from_json(cert.to_json())
        assert abs(back.C_value() - cert.C_value()) < 1e-12
        assert np.abs(gamma_residuals(back) - gamma_residuals(cert)).max() < 1e-12
        assert back.names == cert.names and back.flags == cert.flags
        doc = json.loads(cert.to_json())
        assert {"squares", "bindings", "C", "S", "gamma", "C_value", "bell"} <= set(doc)


class TestPhiPlusConditions:
    """Gamma of two general nullifiers reduces to the two alternation equations."""

    @pytest.mark.parametrize("seed", range(5))
    def test_gamma_matches_equations(self, seed):
        rng = np.random.default_rng(seed)
        a2, b1, b2 = 1.3, 0.4, 2.1
        al, be, ga, de = rng.normal(size=4)
        env = {"a2": a2, "b1": b1, "b2": b2, "al": al, "be": be, "ga": ga, "de": de}
        terms = phi_plus_certificate().gamma_terms()
        lhs1 = be * (np.sin(a2) * al - np.cos(a2) * be) + de * (np.sin(a2) * ga - np.cos(a2) * de)
        lhs2 = ((np.sin(b2) * al - np.cos(b2) * be) * (np.sin(b1) * al - np.cos(b1) * be)
                + (np.sin(b2) * ga - np.cos(b2) * de) * (np.sin(b1) * ga - np.cos(b1) * de))
        for key in ((((1, 1), (2, 1)), ()), (((2, 1), (1, 1)), ())):
            assert abs(terms[key].evaluate(env) - lhs1 / np.sin(a2) ** 2) < 1e-12
        for key in (((), ((1, 1), (2, 1))), ((), ((2, 1), (1, 1)))):
            assert abs(terms[key].evaluate(env) + lhs2 / np.sin(b2 - b1) ** 2) < 1e-12
        assert len(terms) == 4

    def test_solution_and_closed_forms(self):
        a2, b1, b2 = 1.3, 0.4, 2.1
        cert = phi_plus_certificate()
        fixed = {"a2": a2, "b1": b1, "b2": b2, "al": 1.0, "be": 0.0}
        sol = solve_gamma(cert, ["ga", "de"], fixed, {"ga": 0.3, "de": 0.8}, positive=["de"])
        f = (1 / np.tan(a2) - 1 / np.tan(b2)) * (1 / np.tan(b1) - 1 / np.tan(a2))
        assert abs(sol.assignment["de"] ** 2 - 1 / f) < 1e-9
        assert abs(sol.assignment["ga"] - sol.assignment["de"] / np.tan(a2)) < 1e-9
        env = {**fixed, **sol.assignment}
        C = 2 * np.sin(a2) * np.sin(a2 - b1 - b2) / (np.sin(a2 - b1) * np.sin(a2 - b2))
        assert abs(cert.C_value(env) - C) < 1e-9
        k = 2 / np.sin(b2 - b1)
        s2f = np.sin(a2) ** 2 * f
        expect = {(1, 1): k * np.sin(b2), (2, 1): k * np.sin(b2 - a2) / s2f,
                  (2, 2): k * np.sin(a2 - b1) / s2f, (1, 2): -k * np.sin(b1)}
        corr = corr_values(cert, env)
        assert all(abs(corr[key] - v) < 1e-9 for key, v in expect.items())

    def test_no_solution_outside_alternation(self):
        cert = phi_plus_certificate()
        fixed = {"a2": 0.3, "b1": 0.8, "b2": 2.0, "al": 1.0, "be": 0.0}
        with pytest.raises(NoSolutionError):
            solve_gamma(cert, ["ga", "de"], fixed, {"ga": 0.3, "de": 0.8}, restarts=8)


class TestQutrit:
    def test_dictionary_reproduces_conjugate(self):
        inst = build("qutrit")
        env = inst.bindings
        projs = [np.stack([qutrit_basis_projectors(inst.params[f"{s}{x}"]) for x in (1, 2)]) for s in "ab"]
        psi = max_entangled(3).amplitudes
        Ymat = [[sum(W3 ** c * projs[k][x][c] for c in range(3)) for x in range(2)] for k in range(2)]
        # fit mu with oracle matrices: (1 x (mu1 B1 + mu2 B2)) psi = (A_x^dag x 1) psi
        mus = []
        for x in range(2):
            cols = np.stack([kron(np.eye(3), Ymat[1][y]) @ psi for y in range(2)], axis=1)
            rhs = kron(Ymat[0][x].conj().T, np.eye(3)) @ psi
            mu, res, *_ = np.linalg.lstsq(cols, rhs, rcond=None)
            assert np.linalg.norm(cols @ mu - rhs) < 1e-10
            mus.append(mu)
        p = env["p"]
        coeff = inst.certificate.gamma_terms()[((), ((1, 2), (2, 1)))].evaluate(env)
        # vanishing Gamma: p mu11* mu21 + (1 - p) mu12* mu22 = 0
        assert abs(p * np.conj(mus[0][0]) * mus[0][1] + (1 - p) * np.conj(mus[1][0]) * mus[1][1]) < 1e-9
        assert abs(coeff) < 1e-9
        C = p * (1 + np.sum(np.abs(mus[0]) ** 2)) + (1 - p) * (1 + np.sum(np.abs(mus[1]) ** 2))
        assert abs(inst.C - C) < 1e-9
        assert verify_certificate(inst.certificate, inst.realization).passed


class TestVerify:
    def test_partial_theta(self):
        inst = build("partialTheta", theta=0.3, b=0.4)
        rep = verify_certificate(inst.certificate, inst.realization)
        assert rep.passed and abs(rep.value - rep.C) < 1e-9
        assert max(rep.nullifier_norms) < 1e-10

    def test_ghz3(self):
        inst = build("ghz", n=3, theta=0.35, b=0.3)
        rep = verify_certificate(inst.certificate, inst.realization)
        assert rep.passed and rep.checks["identity"][1] < 1e-10

    def test_swapped_bob_fails(self):
        inst = build("partialTheta", theta=0.3, b=0.4)
        bad = Realization(inst.realization.state, Measurements.qubit_xz([[0, np.pi / 2], [-0.4, 0.4]]))
        rep = verify_certificate(inst.certificate, bad)
        assert not rep.checks["nullifiers"][0] and rep.value < rep.C - 1e-3
        assert rep.checks["gamma"][0] and rep.checks["bound"][0]

    def test_report_dict(self):
        inst = build("chsh_c", c=0.5)
        doc = verify_certificate(inst.certificate, inst.realization).to_dict()
        assert doc["passed"] and set(doc["checks"]) == {"gamma", "weights", "identity", "nullifiers",
                                                        "value", "bound"}


class TestSolveGamma:
    @pytest.mark.parametrize("theta,b", [(0.3, 0.4), (np.pi / 8, -0.5), (0.7, 0.2)])
    def test_partial_theta_lambda(self, theta, b):
        cert = build("partialTheta", theta=theta, b=b).certificate
        fixed = {"theta": theta, "b": b}
        sol = solve_gamma(cert, ["lam"], fixed, {"lam": 1.0}, positive=["lam"])
        inv = np.sin(2 * theta) ** 2 / np.tan(b) ** 2 - np.cos(2 * theta) ** 2
        assert sol.residual_norm < 1e-10 and sol.assignment["lam"] > 0
        assert abs(sol.assignment["lam"] ** 2 - 1 / inv) < 1e-8
        assert np.isfinite(sol.condition)

    def test_deterministic(self):
        cert = build("partialTwoParam", theta=0.4, b1=-0.3, b2=0.5).certificate
        fixed = {k: v for k, v in cert.bindings.items() if k not in ("lam1", "lam2")}
        a = solve_gamma(cert, ["lam1", "lam2"], fixed, {"lam1": 0.5, "lam2": 0.1}, seed=3)
        b = solve_gamma(cert, ["lam1", "lam2"], fixed, {"lam1": 0.5, "lam2": 0.1}, seed=3)
        assert a.assignment == b.assignment and a.restart == b.restart

    def test_nothing_to_solve(self):
        cert = sos_expand([(1.0, Y(SC2, 1, 1) - Y(SC2, 2, 1))])
        with pytest.raises(ValueError):
            solve_gamma(cert, ["x"])


# -- properties ----------------------------------------------------------------


def oracle_identity_gap(cert, projs, env):
    D = int(np.prod([p.shape[-1] for p in projs]))
    lhs = np.zeros((D, D), dtype=complex)
    for w, N in cert.squares:
        M = terms_matrix(N.terms, projs, env)
        lhs += w.evaluate(env) * (M.conj().T @ M)
    rhs = cert.C.evaluate(env) * np.eye(D) - terms_matrix(cert.S.terms, projs, env) \
        + terms_matrix(cert.gamma.terms, projs, env)
    return np.linalg.norm(lhs - rhs), max(1.0, np.linalg.norm(lhs))


@pytest.mark.parametrize("kind", SOS_KINDS)
def test_identity_holds_for_any_parameters(kind):
    rng = np.random.default_rng(zlib.crc32(kind.encode()))
    inst = sample_instance(kind, rng)
    cert = inst.certificate
    n, d = cert.scenario.n, cert.scenario.d
    for _ in range(100):
        env = {k: v + 0.1 * rng.standard_normal() for k, v in cert.bindings.items()}
        if "n" in env:
            env["n"] = cert.bindings["n"]
        projs = [haar_projectors(rng, 2, d, d) for _ in range(n)]
        gap, scale = oracle_identity_gap(cert, projs, env)
        assert gap <= 1e-10 * scale
    assert identity_residual(cert, random_measurements(inst.realization.measurements, rng)) < 1e-10 * max(1, inst.C)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(SOS_KINDS))
def test_soundness_on_random_measurements(seed, kind):
    rng = np.random.default_rng(seed)
    inst = sample_instance(kind, rng)
    cert = inst.certificate
    if np.linalg.norm(gamma_residuals(cert)) > 1e-10:
        return
    n, d = cert.scenario.n, cert.scenario.d
    dim = d * int(rng.integers(1, 3)) if n == 2 else d
    projs = [haar_projectors(rng, 2, d, dim) for _ in range(n)]
    S = terms_matrix(cert.S.terms, projs, cert.bindings)
    assert np.linalg.eigvalsh((S + S.conj().T) / 2)[-1] <= inst.C + 1e-8
