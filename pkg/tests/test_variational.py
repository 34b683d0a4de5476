import json

import numpy as np
import pytest

from bellforge.algebra import Scenario
from bellforge.errors import NonStationaryError, NotEigenvectorError
from bellforge.families import build
from bellforge.hilbert import BellExpression, KetState, Measurements, Realization, phi_plus, phi_theta
from bellforge.variational import (Direction, check_local_max, default_directions, first_order_residuals,
                                   hessian, tangent_operator)

from oracles import PAULI_X, PAULI_Z, fd_gradient, fd_hessian

SC2 = Scenario(2, 2, 2)


def xxzz_expression(a1, a2, b1, b2):
    """The expressions whose operator is (XX + ZZ)/2 at XZ angles (a1, a2; b1, b2)."""
    k = 1 / (2 * np.sin(a1 - a2) * np.sin(b1 - b2))
    return BellExpression.from_correlators(SC2, {(1, 1): k * np.cos(a2 - b2), (1, 2): -k * np.cos(a2 - b1),
                                                 (2, 1): -k * np.cos(a1 - b2), (2, 2): k * np.cos(a1 - b1)})


def beta_c(c):
    return build("chsh_c", c=c)


def keys(dirs):
    return [d.key for d in dirs]


class TestDirections:
    def test_default_skips_first_setting(self):
        meas = Measurements.qubit_xz([[0, 1], [2, 3]])
        assert default_directions(meas) == [Direction(1, 2), Direction(2, 2)]

    def test_qubit_tangent(self):
        meas = Measurements.qubit_xz([[0.3, 1.1], [0, 0]])
        T = tangent_operator(meas, 1, 2)
        assert np.abs(T - (-np.sin(1.1) * PAULI_Z + np.cos(1.1) * PAULI_X)).max() < 1e-12
        assert abs(np.trace(T @ meas.observable(0, 1))) < 1e-12


class TestFirstOrder:
    @pytest.mark.parametrize("a1,a2,b1,b2", [(0.0, 1.0, 0.3, -0.9), (0.2, 0.2 + np.pi / 2, 0.5, 0.5 - np.pi / 2),
                                             (-0.4, 0.9, 1.3, 0.1)])
    def test_xxzz_residuals_follow_complementarity(self, a1, a2, b1, b2):
        angles = [[a1, a2], [b1, b2]]
        expr = xxzz_expression(a1, a2, b1, b2)
        real = Realization(phi_plus(), Measurements.qubit_xz(angles))
        res = first_order_residuals(expr, real)
        fd = fd_gradient(expr, angles, phi_plus().amplitudes, [(0, 1), (1, 1)], 2)
        assert np.abs(res - fd).max() < 1e-6
        for r, cos in zip(res, (np.cos(a1 - a2), np.cos(b1 - b2))):
            assert (abs(r) < 1e-10) == (abs(cos) < 1e-10)

    def test_common_rotation_is_flat(self):
        expr = xxzz_expression(0.1, 1.0, 0.4, -0.7)
        real = Realization(phi_plus(), Measurements.qubit_xz([[0.1, 1.0], [0.4, -0.7]]))
        res = first_order_residuals(expr, real, [Direction(1, 1), Direction(1, 2)])
        assert abs(res.sum()) < 1e-12 and abs(res[0]) > 1e-3

    def test_partial_theta_stationary(self):
        inst = build("partialTheta", theta=0.4, b=0.3)
        dirs = [Direction(k, x) for k in (1, 2) for x in (1, 2)]
        res = first_order_residuals(inst.expression, inst.realization, dirs)
        fd = fd_gradient(inst.expression, inst.realization.measurements.params, inst.realization.state.amplitudes,
                         keys(dirs), 2)
        assert np.abs(res).max() < 1e-10 and np.abs(fd).max() < 1e-6

    def test_not_eigenvector(self):
        real = Realization(KetState.from_vector([1, 0, 0, 0], (2, 2)), Measurements.qubit_xz([[0, 1], [0.5, 2]]))
        with pytest.raises(NotEigenvectorError):
            first_order_residuals(xxzz_expression(0, 1, 0.5, 2), real)


class TestHessian:
    @pytest.mark.parametrize("c", [0.2, 0.5, np.pi / 4, 1.1])
    def test_beta_c(self, c):
        inst = beta_c(c)
        rep = hessian(inst.expression, inst.realization)
        assert np.allclose(np.diag(rep.gamma), -1, atol=1e-10)
        assert abs(abs(rep.gamma[0, 1]) - abs(np.cos(2 * c))) < 1e-10
        assert np.allclose(rep.eigenvalues, sorted([-2 * np.sin(c) ** 2, -2 * np.cos(c) ** 2]), atol=1e-10)
        assert rep.verdict == "localMax"

    def test_chsh_balance_point(self):
        rep = hessian(beta_c(np.pi / 4).expression, beta_c(np.pi / 4).realization)
        assert np.allclose(rep.eigenvalues, [-1, -1], atol=1e-12)

    @pytest.mark.parametrize("theta", [np.pi / 16, np.pi / 8, np.pi / 6, np.pi / 4])
    def test_partial_theta_equal_eigenvalues(self, theta):
        # with the angle-shift convention used for beta_c the common value is -2 sin^2(theta)
        inst = build("partialTheta", theta=theta, b=theta)
        rep = hessian(inst.expression, inst.realization)
        assert np.ptp(rep.eigenvalues) < 1e-10
        assert np.allclose(rep.eigenvalues, -2 * np.sin(theta) ** 2, atol=1e-10)

    @pytest.mark.parametrize("theta,b", [(np.pi / 8, 0.2), (0.5, -0.7), (np.pi / 4, 1.0)])
    def test_partial_theta_matches_closed_form_shape(self, theta, b):
        # diagonal in the (A2, B2) directions; entries are twice the Taylor coefficients
        inst = build("partialTheta", theta=theta, b=b)
        lam2 = inst.extra["lam_sq"]
        rep = hessian(inst.expression, inst.realization)
        s2, s4, s2b = np.sin(2 * theta), np.sin(4 * theta), np.sin(2 * b)
        taylor = sorted([-lam2 * s2 ** 2 / (1 + lam2), -0.25 * (1 + lam2 - lam2 * s4 ** 2 / s2b ** 2)])
        assert np.allclose(rep.eigenvalues, 2 * np.array(taylor), atol=1e-10)

    def test_qutrit_eigenvalues_coincide(self):
        inst = build("qutrit", a1=0, a2=0.5, b1=0.25, b2=0.75)
        rep = hessian(inst.expression, inst.realization)
        assert np.ptp(rep.eigenvalues) < 1e-6 and rep.verdict == "localMax"

    @pytest.mark.parametrize("kind,params", [
        ("chsh_c", {"c": 0.4}), ("partialTheta", {"theta": 0.3, "b": 0.45}),
        ("partialTwoParam", {"theta": np.pi / 8, "b1": -0.3, "b2": 0.5}),
        ("singletAllSettings", {"a2": 1.4, "b1": 0.5, "b2": 2.2}), ("qutrit", {}),
        ("tiltedChsh", {"theta": 0.3}), ("limitation", {"q": 2.0})])
    def test_matches_finite_difference_eigenvalue(self, kind, params):
        inst = build(kind, **params)
        meas = inst.realization.measurements
        dirs = default_directions(meas)
        rep = hessian(inst.expression, inst.realization, dirs)
        H = fd_hessian(inst.expression, meas.params, keys(dirs), meas.d)
        assert np.abs(rep.gamma - H).max() < 1e-4

    def test_non_stationary_rejected(self):
        real = Realization(phi_plus(), Measurements.qubit_xz([[0, np.pi / 2], [np.pi / 6, -np.pi / 6]]))
        with pytest.raises(NonStationaryError):
            hessian(xxzz_expression(0, np.pi / 2, np.pi / 6, -np.pi / 6), real)

    def test_report_json(self):
        inst = beta_c(0.3)
        doc = json.loads(hessian(inst.expression, inst.realization).to_json())
        assert set(doc) == {"gamma", "eigenvalues", "verdict", "gap"}


class TestCheckLocalMax:
    @pytest.mark.parametrize("q", np.linspace(0, 4, 9))
    def test_limitation_family(self, q):
        inst = build("limitation", q=q)
        rep = check_local_max(inst.expression, inst.realization)
        assert rep.verdict == "localMax" and abs(rep.value - 1) < 1e-12

    def test_bad_candidate_moves_under_bob(self):
        real = Realization(phi_plus(), Measurements.qubit_xz([[0, np.pi / 2], [np.pi / 6, -np.pi / 6]]))
        rep = check_local_max(xxzz_expression(0, np.pi / 2, np.pi / 6, -np.pi / 6), real)
        assert rep.verdict == "nonStationary" and abs(rep.residuals[1]) > 0.1

    def test_chsh(self):
        inst = beta_c(np.pi / 4)
        rep = check_local_max(inst.expression, inst.realization)
        assert rep.verdict == "localMax" and rep.notes == ["eigenvalues equal"]

    def test_degenerate(self):
        real = Realization(phi_theta(0.3), Measurements.qubit_xz([[0, 1], [0, 1]]))
        rep = check_local_max(BellExpression.from_correlators(SC2, {(0, 0): 1.0}), real)
        assert rep.verdict == "degenerate"
