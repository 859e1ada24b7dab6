"""Unit tests for fundamental matrices and first-order responses."""

import math

import numpy as np
import pytest

from pwavg.core.errors import TangencyEncountered
from pwavg.core.flow import CrossingEvent, EventKind, integrate
from pwavg.core.model import load_model
from pwavg.core.variational import (
    SensitivityMode,
    expansion_residual,
    first_order_response,
    fundamental_matrix,
    saltation_matrix,
    sensitivity_mode_report,
    state_transition,
    variation_of_constants,
)
from pwavg.utils.numerics import central_difference_jacobian
from tests.conftest import single_zone_document

TWO_PI = 2.0 * math.pi


def _time_average(x1, x2):
    return np.array([
        math.pi * x1 ** 2 + math.pi ** 2 / 2 + math.pi * (1 - x2),
        math.pi * x1 * x2 + 1.5 * math.pi ** 2 * x2,
    ])


class TestFundamentalMatrix:
    """Test Y along unperturbed orbits."""

    def test_polar(self, polar_model):
        fm = fundamental_matrix(polar_model, [0.5, 0.0])
        assert fm.final == pytest.approx(np.diag([1.0, math.exp(TWO_PI)]), rel=1e-8)
        assert fm.at(1.0) == pytest.approx(np.diag([1.0, math.e]), rel=1e-8)
        assert fm.transition(1.0, 2.0) == pytest.approx(np.diag([1.0, math.e]), rel=1e-8)

    def test_cartesian(self, cartesian_model):
        fm = fundamental_matrix(cartesian_model, [1.0, 0.0, 0.0])
        assert fm.final == pytest.approx(np.diag([1.0, 1.0, math.exp(TWO_PI)]), rel=1e-8, abs=1e-8)
        half = state_transition(cartesian_model, [1.0, 0.0, 0.0], math.pi)
        assert half == pytest.approx(np.diag([-1.0, -1.0, math.exp(math.pi)]), rel=1e-8, abs=1e-8)

    def test_identity_at_zero(self, cartesian_model):
        assert np.array_equal(state_transition(cartesian_model, [1.0, 0.0, 0.0], 0.0), np.eye(3))

    def test_vanishing_field(self, time_averaging_model):
        fm = fundamental_matrix(time_averaging_model, [0.2, 0.3])
        assert np.array_equal(fm.final, np.eye(2))

    def test_matches_finite_differences(self):
        pendulum = load_model(single_zone_document(["x2", "-sin(x1)"], period=2.0))
        z = np.array([0.5, 0.1])
        oracle = central_difference_jacobian(lambda p: integrate(pendulum, p, 0.0, (0.0, 2.0)).final_state, z, 1e-6)
        assert state_transition(pendulum, z, 2.0) == pytest.approx(oracle, abs=1e-6)

    def test_polar_matches_finite_differences(self, polar_model):
        z = np.array([0.5, 0.1])
        oracle = central_difference_jacobian(
            lambda p: integrate(polar_model, p, 0.0, (0.0, TWO_PI)).final_state, z, 1e-6
        )
        assert state_transition(polar_model, z, TWO_PI) == pytest.approx(oracle, rel=1e-6, abs=1e-6)

    def test_frame(self, polar_model):
        frame = fundamental_matrix(polar_model, [0.5, 0.0]).to_frame()
        assert list(frame.columns) == ["t", "Y11", "Y12", "Y21", "Y22"]
        assert frame["Y11"].eq(1.0).all()


class TestSaltation:
    """Test the jump matrix and the mode report."""

    def test_jump_matrix(self, saltation_model):
        event = integrate(saltation_model, [-0.5, 0.0], 0.0, (0.0, 2.0)).events[0]
        assert event.t == pytest.approx(0.5, abs=1e-12)
        assert saltation_matrix(saltation_model, event) == pytest.approx(np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_time_only_surface_has_no_jump(self, polar_model):
        event = integrate(polar_model, [0.5, 0.2], 0.0, (0.0, 4.0)).events[0]
        assert np.array_equal(saltation_matrix(polar_model, event), np.eye(2))

    def test_tangent_event(self, cartesian_model):
        event = CrossingEvent(t=0.0, x=np.array([0.0, 0.0, 1.0]), surface=0, from_zone=1, to_zone=2,
                              w_minus=0.0, w_plus=0.0, kind=EventKind.TANGENCY)
        with pytest.raises(TangencyEncountered):
            saltation_matrix(cartesian_model, event)

    def test_only_saltation_matches(self, saltation_model):
        report = sensitivity_mode_report(saltation_model, [-0.5, 0.0])
        assert report.matching == ("saltation",)
        assert report.plain_error == pytest.approx(1.0, abs=1e-6)
        assert report.oracle == pytest.approx(np.array([[1.0, 0.0], [1.0, 1.0]]), abs=1e-6)

    def test_modes_agree_without_state_switching(self, cartesian_model):
        plain = state_transition(cartesian_model, [1.0, 0.0, 0.0], TWO_PI, SensitivityMode.PLAIN)
        salted = state_transition(cartesian_model, [1.0, 0.0, 0.0], TWO_PI, SensitivityMode.SALTATION)
        assert plain == pytest.approx(salted, rel=1e-12, abs=1e-12)


class TestFirstOrderResponse:
    """Test y1 and the expansion it defines."""

    def test_time_average(self, time_averaging_model):
        z = [0.5, 0.2]
        assert first_order_response(time_averaging_model, z).value == pytest.approx(_time_average(*z), rel=1e-9)
        assert variation_of_constants(time_averaging_model, z) == pytest.approx(_time_average(*z), rel=1e-9)

    def test_quadrature_matches_augmented(self, polar_model):
        z = [0.4, 0.1]
        augmented = first_order_response(polar_model, z).value
        quadrature = variation_of_constants(polar_model, z)
        assert quadrature == pytest.approx(augmented, rel=1e-8, abs=1e-8)

    def test_no_perturbation(self):
        model = load_model(single_zone_document(["x2", "-x1"]))
        assert np.array_equal(first_order_response(model, [1.0, 0.0]).value, [0.0, 0.0])

    def test_joint_matrix(self, polar_model):
        response = first_order_response(polar_model, [0.5, 0.0], with_matrix=True)
        assert response.matrix.final == pytest.approx(np.diag([1.0, math.exp(TWO_PI)]), rel=1e-8)
        assert response.value == pytest.approx(first_order_response(polar_model, [0.5, 0.0]).value, rel=1e-9)
        assert list(response.to_frame().columns) == ["t", "y1", "y2"]

    def test_jump_residuals(self):
        model = load_model({
            "dimension": 2,
            "period": 2.0,
            "surfaces": ["x1"],
            "zones": [
                {"signature": [-1], "F0": ["1", "0"], "F1": ["1", "0"]},
                {"signature": [1], "F0": ["1", "1"]},
            ],
        })
        response = first_order_response(model, [-0.5, 0.0])
        assert response.jump_residuals == pytest.approx([0.5], abs=1e-9)

    @pytest.mark.parametrize("r", [0.2, 0.35, 0.5, 0.65, 0.8])
    def test_expansion_residual_is_higher_order(self, polar_model, r):
        z = [r, 0.0]
        response = first_order_response(polar_model, z)
        ratios = [expansion_residual(polar_model, z, eps, response=response) / eps for eps in (1e-2, 1e-3, 1e-4)]
        assert ratios[0] > ratios[1] > ratios[2]
