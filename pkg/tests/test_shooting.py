"""Unit tests for Newton shooting and epsilon sweeps."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from pwavg.analysis.averaging import find_zeros, sample_f1
from pwavg.analysis.shooting import displacement, epsilon_sweep, find_periodic_orbit, lipschitz_probe
from pwavg.core.builtin_models import Prop1Coefficients, builtin_proposition1_polar
from pwavg.core.config import RunConfig
from pwavg.core.errors import NewtonFailure, SingularJacobianError, UsageError
from pwavg.core.model import load_model
from tests.conftest import single_zone_document

TWO_PI = 2.0 * math.pi
ROOT = 1.0 / math.pi


def _sign_condition_samples(count, seed=11):
    """Random coefficient sets whose predicted root lies well inside (0.05, 1)."""
    rng = np.random.default_rng(seed)
    found = []
    while len(found) < count:
        values = {name: float(rng.uniform(-1.0, 1.0)) for name in ("a2p", "a2m", "b1p", "b1m", "c2p", "c2m")}
        coeffs = Prop1Coefficients(**{**Prop1Coefficients.zeros().dict(), **values})
        root = coeffs.closed_form_root()
        if coeffs.sign_condition() and 0.15 < root < 0.85:
            found.append(coeffs)
    return found


class TestShooting:
    """Test the displacement map and Newton shooting."""

    def test_displacement(self, polar_model):
        assert displacement(polar_model, [0.5, 0.0], 0.0) == pytest.approx([0.0, 0.0], abs=1e-12)
        moved = displacement(polar_model, [0.5, 0.1], 0.0)
        assert moved == pytest.approx([0.0, 0.1 * (math.exp(TWO_PI) - 1.0)], rel=1e-8, abs=1e-12)

    def test_unperturbed_orbit_needs_no_iterations(self, polar_model):
        result = find_periodic_orbit(polar_model, [0.4, 0.0], 0.0)
        assert result.iterations == 0
        assert result.certified
        assert result.event_count == 1
        assert result.to_dict()["z"] == [0.4, 0.0]

    def test_perturbed_orbit_near_zero(self, polar_model):
        _, manifold = builtin_proposition1_polar()
        result = find_periodic_orbit(polar_model, [ROOT, 0.0], 1e-3, manifold=manifold, z_a=[ROOT, 0.0])
        assert result.residual <= RunConfig().shooting.newton_tol
        assert result.distance_to_za <= 1e-2
        assert result.distance_to_manifold == pytest.approx(abs(result.z[1]), abs=1e-9)

    def test_singular_jacobian(self):
        drift = load_model(single_zone_document(["1"], period=1.0))
        with pytest.raises(SingularJacobianError):
            find_periodic_orbit(drift, [0.0], 0.1)

    def test_iteration_limit(self, polar_model):
        cfg = RunConfig().update_section("shooting", max_iter=1)
        with pytest.raises(NewtonFailure):
            find_periodic_orbit(polar_model, [0.9, 0.3], 1e-2, cfg)


class TestSweep:
    """Test the epsilon sweep and its convergence table."""

    def test_polar_sweep(self, polar_model):
        table = epsilon_sweep(polar_model, None, [ROOT, 0.0])
        assert [row.eps for row in table.rows] == [1e-1, 1e-2, 1e-3, 1e-4]
        assert all(row.converged for row in table.rows)
        assert 0.8 <= table.order <= 1.5
        assert all(row.certified for row in table.rows)
        distances = [row.distance_to_za for row in table.rows]
        assert all(later < earlier for earlier, later in zip(distances, distances[1:]))
        off_manifold = [row.distance_to_manifold for row in table.rows]
        assert all(later <= earlier + 1e-12 for earlier, later in zip(off_manifold, off_manifold[1:]))
        assert abs(table.rows[-1].z[0] - ROOT) <= 1e-3
        assert not any(row.kappa_changed for row in table.rows)
        assert table.rows[-1].expansion_ratio < table.rows[0].expansion_ratio
        assert table.warnings == []
        frame = table.to_frame()
        assert {"eps", "z1", "z2", "distance_to_za", "expansion_ratio", "error"} <= set(frame.columns)
        assert len(table.to_dict()["rows"]) == 4

    def test_warm_start_matches_cold_start(self, polar_model):
        eps_list = [1e-2, 1e-3]
        warm = epsilon_sweep(polar_model, None, [ROOT, 0.0], eps_list=eps_list)
        cold = epsilon_sweep(polar_model, None, [ROOT, 0.0], eps_list=eps_list, warm_start=False)
        for a, b in zip(warm.rows, cold.rows):
            assert a.z == pytest.approx(b.z, abs=1e-8)

    def test_warns_without_zero(self, polar_model):
        table = epsilon_sweep(polar_model, None, [0.5, 0.0], eps_list=[1e-2])
        assert "no nondegenerate zero" in table.warnings

    @pytest.mark.parametrize("eps_list", [[1e-2, 1e-1], [], [1e-1, -1e-2], [1e-1, 1e-1]])
    def test_bad_eps_list(self, polar_model, eps_list):
        with pytest.raises(UsageError):
            epsilon_sweep(polar_model, None, [ROOT, 0.0], eps_list=eps_list)

    def test_failed_rows_are_recorded(self):
        drift = load_model(single_zone_document(["1"], period=1.0, manifold={"k": 1, "box": [[-1.0, 1.0]], "beta0": []}))
        table = epsilon_sweep(drift, None, [0.0], eps_list=[1e-1, 1e-2])
        assert not any(row.converged for row in table.rows)
        assert all(row.error.startswith("shooting.singular_jacobian") for row in table.rows)
        assert table.order is None


class TestLipschitz:
    """Test the sampled Lipschitz constant of the time-T map."""

    def test_polar_constant(self, polar_model):
        estimate = lipschitz_probe(polar_model, [0.3, 0.0], 0.0, 1e-3)
        assert estimate == pytest.approx(math.exp(TWO_PI), rel=1e-6)

    def test_radius_stability(self, polar_model):
        small = lipschitz_probe(polar_model, [0.3, 0.0], 0.0, 1e-3)
        large = lipschitz_probe(polar_model, [0.3, 0.0], 0.0, 1e-2)
        assert large == pytest.approx(small, rel=1e-6)

    def test_linear_flow_matches_matrix_exponential(self):
        model = load_model(single_zone_document(["0.1*x1 + x2", "-0.2*x2"], period=1.0))
        bound = np.linalg.norm(expm(np.array([[0.1, 1.0], [0.0, -0.2]])), 2)
        estimate = lipschitz_probe(model, [0.3, -0.2], 0.0, 1e-2)
        assert 0.95 * bound <= estimate <= bound * (1.0 + 1e-6)


class TestPredictedRoots:
    """Test that random sign-condition coefficients give the predicted zero."""

    @pytest.mark.parametrize("coeffs", _sign_condition_samples(3))
    def test_zero_matches_prediction(self, coeffs):
        model, manifold = builtin_proposition1_polar(coeffs)
        zeros = find_zeros(sample_f1(model, manifold, grid=12), model, manifold)
        assert len(zeros) == 1
        assert zeros[0].a[0] == pytest.approx(coeffs.closed_form_root(), abs=1e-8)
