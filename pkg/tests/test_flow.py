"""Unit tests for the piecewise integrator."""

import math

import numpy as np
import pytest

from pwavg.core.config import IntegratorConfig
from pwavg.core.errors import (
    CornerEncountered,
    DimensionMismatchError,
    MaxEventsExceeded,
    RegularValueError,
    SlidingEncountered,
    TangencyEncountered,
)
from pwavg.core.flow import (
    EventKind,
    FlowExtension,
    PiecewiseFlow,
    classify_event,
    crossing_times,
    integrate,
)
from pwavg.core.model import load_model
from tests.conftest import single_zone_document

TWO_PI = 2.0 * math.pi


class _Clock(FlowExtension):
    """w' = 1, jumping by 10 at every crossing."""
    size = 1

    def rhs(self, zone, t, x, w):
        return np.ones(1)

    def jump(self, event, w):
        return w + 10.0


def _quadrant_model(field):
    return load_model({
        "dimension": 2,
        "period": 1.0,
        "surfaces": ["x1", "x2"],
        "zones": [
            {"signature": [s1, s2], "F0": list(field)}
            for s1 in (1, -1) for s2 in (1, -1)
        ],
    })


class TestIntegration:
    """Test trajectories and located events."""

    def test_unperturbed_cartesian_orbit(self, cartesian_model):
        traj = integrate(cartesian_model, [1.0, 0.0, 0.0], 0.0, (0.0, TWO_PI))
        times = [e.t for e in traj.events]
        assert len(times) == 2
        assert times[0] == pytest.approx(math.pi, abs=1e-10)
        assert times[1] == pytest.approx(TWO_PI, abs=1e-10)
        assert all(e.kind is EventKind.CROSSING for e in traj.events)
        assert traj.events[0].from_zone == 1 and traj.events[0].to_zone == 2
        assert traj.final_state == pytest.approx([1.0, 0.0, 0.0], abs=1e-8)

    def test_brief_visit_inside_one_step(self):
        model = load_model({
            "dimension": 1,
            "period": 2.0,
            "surfaces": ["0.0001 - (t - 1)^2"],
            "zones": [
                {"name": "slow", "signature": [-1], "F0": ["1"]},
                {"name": "fast", "signature": [1], "F0": ["100"]},
            ],
        })
        traj = integrate(model, [0.0], 0.0, (0.0, 2.0))
        assert [e.kind for e in traj.events] == [EventKind.CROSSING, EventKind.CROSSING]
        assert [e.t for e in traj.events] == pytest.approx([0.99, 1.01], abs=1e-10)
        assert traj.final_state[0] == pytest.approx(3.98, rel=1e-9)

    def test_time_surface_crossings_ignore_eps(self, polar_model):
        unperturbed = crossing_times(integrate(polar_model, [0.4, 0.1], 0.0, (0.0, 4.0)))
        perturbed = crossing_times(integrate(polar_model, [0.4, 0.1], 0.05, (0.0, 4.0)))
        assert perturbed == pytest.approx(unperturbed, abs=1e-12)
        assert unperturbed == pytest.approx([math.pi], abs=1e-12)

    def test_repeated_runs_are_bit_identical(self, cartesian_model):
        first = integrate(cartesian_model, [0.3, 0.0, 0.2], 0.05, (0.0, 2.0 * TWO_PI))
        second = integrate(cartesian_model, [0.3, 0.0, 0.2], 0.05, (0.0, 2.0 * TWO_PI))
        assert np.array_equal(first.final_state, second.final_state)
        assert [e.t for e in first.events] == [e.t for e in second.events]

    def test_single_zone_exponential(self):
        model = load_model(single_zone_document(["x1"], period=1.0))
        traj = integrate(model, [1.0], 0.0, (0.0, 1.0))
        assert traj.events == []
        assert traj.segment_count == 1
        assert traj.final_state[0] == pytest.approx(math.e, rel=1e-9)

    def test_events_lie_on_surfaces(self, cartesian_model):
        traj = integrate(cartesian_model, [0.3, 0.0, 0.2], 0.05, (0.0, 3.0 * TWO_PI))
        times = [e.t for e in traj.events]
        assert times == sorted(times) and len(set(times)) == len(times)
        for event in traj.events:
            assert abs(event.x[1]) <= 1e-9

    def test_dense_state(self, polar_model):
        traj = integrate(polar_model, [0.5, 0.1], 0.0, (0.0, 5.0))
        assert traj.state(4.0) == pytest.approx([0.5, 0.1 * math.exp(4.0)], rel=1e-8)
        assert crossing_times(traj) == pytest.approx([math.pi], abs=1e-10)

    def test_polar_matches_cartesian(self, cartesian_model, polar_model):
        eps, r0, w0 = 0.01, 0.5, 0.1
        polar = integrate(polar_model, [r0, w0], eps, (0.0, TWO_PI))
        cartesian = integrate(cartesian_model, [r0, 0.0, w0], eps, (0.0, TWO_PI + 1.0))
        # second crossing closes the first turn around the w axis
        returned = cartesian.events[1]
        assert returned.to_zone == 1
        assert polar.final_state == pytest.approx([returned.x[0], returned.x[2]], abs=1e-7)

    def test_extension_jumps(self, polar_model):
        traj = integrate(polar_model, [0.5, 0.0], 0.0, (0.0, 5.0), extension=_Clock())
        assert len(traj.final_augmented) == 3
        assert traj.final_augmented[2] == pytest.approx(15.0, rel=1e-10)

    def test_frames(self, cartesian_model):
        traj = integrate(cartesian_model, [1.0, 0.0, 0.0], 0.0, (0.0, TWO_PI))
        frame = traj.to_frame()
        assert list(frame.columns) == ["t", "x1", "x2", "x3", "zone_id"]
        assert set(frame["zone_id"]) == {1, 2}
        assert frame["t"].is_monotonic_increasing
        events = traj.events_frame()
        assert list(events.columns) == ["t", "x1", "x2", "x3", "surface", "from_zone", "to_zone", "kind", "w_minus", "w_plus"]
        assert list(events["kind"]) == ["crossing", "crossing"]

    def test_input_checks(self, cartesian_model):
        with pytest.raises(DimensionMismatchError):
            integrate(cartesian_model, [1.0, 0.0], 0.0, (0.0, 1.0))
        with pytest.raises(ValueError):
            integrate(cartesian_model, [1.0, 0.0, 0.0], 0.0, (1.0, 0.0))

    def test_max_events(self, polar_model):
        with pytest.raises(MaxEventsExceeded):
            integrate(polar_model, [0.5, 0.0], 0.0, (0.0, 10.0 * TWO_PI), IntegratorConfig(max_events=3))


class TestBoundaryBehaviour:
    """Test sliding, tangency and corners."""

    def test_sliding_stops_integration(self, sliding_document):
        model = load_model(sliding_document)
        with pytest.raises(SlidingEncountered) as info:
            integrate(model, [0.5], 0.0, (0.0, 1.0))
        assert info.value.details["t"] == pytest.approx(0.5, abs=1e-10)
        assert info.value.event.kind is EventKind.SLIDING

    def test_sliding_initial_point(self, sliding_document):
        with pytest.raises(SlidingEncountered):
            integrate(load_model(sliding_document), [0.0], 0.0, (0.0, 1.0))

    def test_tangent_initial_point(self):
        model = load_model({
            "dimension": 2,
            "period": 1.0,
            "surfaces": ["x2"],
            "zones": [
                {"signature": [1], "F0": ["1", "0"]},
                {"signature": [-1], "F0": ["1", "0"]},
            ],
        })
        with pytest.raises(TangencyEncountered):
            integrate(model, [0.0, 0.0], 0.0, (0.0, 1.0))

    def test_corner_initial_point(self):
        model = _quadrant_model(["-1", "-1"])
        with pytest.raises(CornerEncountered):
            integrate(model, [0.0, 0.0], 0.0, (0.0, 1.0))

    def test_singular_surface(self):
        model = load_model({
            "dimension": 1,
            "period": 1.0,
            "surfaces": ["x1^2"],
            "zones": [
                {"signature": [1], "F0": ["1"]},
                {"signature": [-1], "F0": ["1"]},
            ],
        })
        with pytest.raises(RegularValueError):
            integrate(model, [0.0], 0.0, (0.0, 1.0))

    def test_initial_zone_on_surface(self, cartesian_model):
        flow = PiecewiseFlow(cartesian_model)
        assert flow.initial_zone(0.0, np.array([1.0, 0.0, 0.0]), 0.0) == 1
        assert flow.initial_zone(0.0, np.array([-1.0, 0.0, 0.0]), 0.0) == 2


class TestClassification:
    """Test the crossing/sliding/tangency product rule."""

    def test_crossing(self, cartesian_model):
        result = classify_event(cartesian_model, 0.0, [1.0, 0.0, 0.0], 0, 1, 2)
        assert result.kind is EventKind.CROSSING
        assert result.w_minus == pytest.approx(1.0)
        assert result.w_plus == pytest.approx(1.0)

    def test_tangency(self, cartesian_model):
        result = classify_event(cartesian_model, 0.0, [0.0, 0.0, 1.0], 0, 1, 2)
        assert result.kind is EventKind.TANGENCY

    def test_sliding(self, sliding_document):
        result = classify_event(load_model(sliding_document), 0.0, [0.0], 0, 1, 2)
        assert result.kind is EventKind.SLIDING
        assert result.w_plus == -1.0 and result.w_minus == 1.0

    def test_perturbation_enters_classification(self, cartesian_model):
        # at u = 0 only the eps*F1 term moves v: a2 jumps from 0 to 1 across v = 0
        result = classify_event(cartesian_model, 0.0, [0.0, 0.0, 0.0], 0, 1, 2, eps=0.1)
        assert result.kind is EventKind.TANGENCY
        assert result.w_minus == pytest.approx(0.1)

    def test_point_off_surface(self, cartesian_model):
        with pytest.raises(ValueError):
            classify_event(cartesian_model, 0.0, [1.0, 0.5, 0.0], 0, 1, 2)
