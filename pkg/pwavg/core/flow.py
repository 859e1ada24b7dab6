"""Forward integration of piecewise systems with located zone transitions.

A trajectory is a list of C1 segments, each integrated inside one zone with
the Dormand-Prince 5(4) pair (scipy RK45, stepped manually so every accepted
step's dense output can be scanned for switching-function sign changes).
Boundary encounters are classified with the product criterion

    w_minus * w_plus,   w_pm = <grad h, (1, F_pm)>

and only crossings are continued; sliding and tangency stop the integration.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq, minimize_scalar

from .config import IntegratorConfig
from .errors import (
    CornerEncountered,
    DimensionMismatchError,
    FlowError,
    MaxEventsExceeded,
    MaxStepsExceeded,
    NoZoneError,
    RegularValueError,
    SlidingEncountered,
    StepSizeUnderflow,
    TangencyEncountered,
)
from .model import OnSurface, PiecewiseModel, Zone

_NEWTON_POLISH_STEPS = 3
_BRACKET_SAMPLES = 16


class EventKind(Enum):
    """Classification of a switching-surface encounter."""
    CROSSING = "crossing"
    SLIDING = "sliding"
    TANGENCY = "tangency"


class EventClassification(NamedTuple):
    kind: EventKind
    w_minus: float
    w_plus: float


class CrossingEvent(NamedTuple):
    """A located switching event at time t on surface j."""
    t: float
    x: np.ndarray
    surface: int
    from_zone: int
    to_zone: int
    w_minus: float
    w_plus: float
    kind: EventKind
    terminal: bool = False  # reached at the end of the time span


@dataclass
class TrajectorySegment:
    """Solution inside one zone on [t_start, t_end] with dense output."""
    zone: int
    t_start: float
    t_end: float
    times: np.ndarray
    states: np.ndarray  # augmented states at accepted steps, shape (n, size)
    dimension: int
    solution: Optional[OdeSolution] = field(default=None, repr=False)

    def augmented(self, t: float) -> np.ndarray:
        if self.solution is None or t <= self.t_start:
            return self.states[0].copy()
        if t >= self.t_end:
            return self.states[-1].copy()
        return self.solution(t)

    def state(self, t: float) -> np.ndarray:
        return self.augmented(t)[: self.dimension]


@dataclass
class PiecewiseTrajectory:
    """x(t, z, eps) as ordered segments separated by crossing events."""
    z: np.ndarray
    eps: float
    t_span: Tuple[float, float]
    segments: List[TrajectorySegment]
    events: List[CrossingEvent]
    dimension: int

    @property
    def segment_count(self) -> int:
        return len(self.segments)

    @property
    def final_augmented(self) -> np.ndarray:
        return self.segments[-1].states[-1]

    @property
    def final_state(self) -> np.ndarray:
        return self.final_augmented[: self.dimension].copy()

    def segment_at(self, t: float) -> TrajectorySegment:
        for segment in self.segments:
            if t <= segment.t_end:
                return segment
        return self.segments[-1]

    def state(self, t: float) -> np.ndarray:
        return self.segment_at(t).state(t)

    def augmented(self, t: float) -> np.ndarray:
        return self.segment_at(t).augmented(t)

    def crossing_times(self) -> List[float]:
        return [e.t for e in self.events if e.kind is EventKind.CROSSING]

    def to_frame(self) -> pd.DataFrame:
        """Accepted steps as rows: t, x1..xd, zone_id."""
        frames = []
        columns = [f"x{i + 1}" for i in range(self.dimension)]
        for segment in self.segments:
            frame = pd.DataFrame(segment.states[:, : self.dimension], columns=columns)
            frame.insert(0, "t", segment.times)
            frame["zone_id"] = segment.zone
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def events_frame(self) -> pd.DataFrame:
        rows = []
        for e in self.events:
            row = {"t": e.t}
            row.update({f"x{i + 1}": float(v) for i, v in enumerate(e.x)})
            row.update({
                "surface": e.surface,
                "from_zone": e.from_zone,
                "to_zone": e.to_zone,
                "kind": e.kind.value,
                "w_minus": e.w_minus,
                "w_plus": e.w_plus,
            })
            rows.append(row)
        columns = ["t", *(f"x{i + 1}" for i in range(self.dimension)), "surface", "from_zone", "to_zone", "kind", "w_minus", "w_plus"]
        return pd.DataFrame(rows, columns=columns)


class FlowExtension:
    """Extra states integrated alongside x with shared step control.

    Subclasses supply the extra right-hand side (which may depend on the
    current zone and on x) and an optional jump applied at crossing events.
    """
    size: int = 0

    def initial(self) -> np.ndarray:
        return np.zeros(self.size)

    def rhs(self, zone: Zone, t: float, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jump(self, event: CrossingEvent, w: np.ndarray) -> np.ndarray:
        return w


def _sign(value: float) -> int:
    return 1 if value > 0 else -1


class PiecewiseFlow:
    """Integrates one model with one integrator configuration."""

    def __init__(self, model: PiecewiseModel, config: Optional[IntegratorConfig] = None):
        self.model = model
        self.config = config or IntegratorConfig()

    # ------------------------------------------------------------ classification

    def _normal_speed(self, grad: np.ndarray, zone: Zone, t: float, x: np.ndarray, eps: float) -> float:
        return float(grad[0] + grad[1:] @ zone.full_field(t, x, eps))

    def _regular_gradient(self, surface_id: int, t: float, x: np.ndarray) -> np.ndarray:
        grad = self.model.surface_gradient(surface_id, t, x)
        if np.linalg.norm(grad) <= self.config.tol_grad:
            raise RegularValueError(
                f"|grad h_{surface_id}| <= {self.config.tol_grad} at t={t}: 0 is not a regular value here",
                t=float(t), x=[float(v) for v in x], surface=surface_id,
            )
        return grad

    def classify_event(self, t: float, x: Sequence[float], surface: int, from_zone: int, to_zone: int, eps: float = 0.0) -> EventClassification:
        """Crossing, sliding or tangency from the signs of w_minus and w_plus."""
        x = np.asarray(x, dtype=float)
        h = self.model.surfaces[surface].value(t, x)
        if abs(h) > self.config.tol_surface:
            raise ValueError(f"Point is not on surface {surface}: |h| = {abs(h):.3e}")
        grad = self._regular_gradient(surface, t, x)
        source, target = self.model.zone(from_zone), self.model.zone(to_zone)
        w_from = self._normal_speed(grad, source, t, x, eps)
        w_to = self._normal_speed(grad, target, t, x, eps)
        side = source.signature[surface] or -target.signature[surface]
        if side == 0:
            raise ValueError(f"Neither zone constrains surface {surface}")
        w_plus, w_minus = (w_from, w_to) if side > 0 else (w_to, w_from)
        product = w_minus * w_plus
        threshold = self.config.tol_transversal ** 2
        if product > threshold:
            kind = EventKind.CROSSING
        elif product < -threshold:
            kind = EventKind.SLIDING
        else:
            kind = EventKind.TANGENCY
        return EventClassification(kind, w_minus, w_plus)

    def initial_zone(self, t: float, z: np.ndarray, eps: float) -> int:
        """Zone of the starting point; on a surface, the zone the flow enters."""
        lookup = self.model.zone_of(t, z, self.config.tol_surface)
        if not isinstance(lookup, OnSurface):
            return lookup
        if len(lookup.surfaces) > 1:
            raise CornerEncountered(
                f"Initial point lies on several surfaces {list(lookup.surfaces)}",
                t=float(t), x=z.tolist(), surfaces=list(lookup.surfaces),
            )
        j = lookup.surfaces[0]
        values = self.model.surface_values(t, z)
        candidates = [
            zone for zone in self.model.zones
            if all(s == 0 or i == j or s == _sign(values[i]) for i, s in enumerate(zone.signature))
        ]
        grad = self._regular_gradient(j, t, z)
        entering, speeds = [], []
        for zone in candidates:
            side = zone.signature[j]
            if side == 0:
                return zone.id
            speed = side * self._normal_speed(grad, zone, t, z, eps)
            speeds.append(speed)
            if speed > self.config.tol_transversal:
                entering.append((speed, -zone.id, zone.id))
        if entering:
            # Ties (both fields leave the surface) go to the faster exit.
            return max(entering)[2]
        if speeds and all(s < -self.config.tol_transversal for s in speeds):
            raise SlidingEncountered(f"Initial point on surface {j} is in the sliding region", t=float(t), x=z.tolist(), surface=j)
        raise TangencyEncountered(f"No zone field leaves surface {j} at the initial point", t=float(t), x=z.tolist(), surface=j)

    # ------------------------------------------------------------ event location

    def _bracket(self, zone: Zone, j: int, dense: Callable, t_lo: float, t_hi: float) -> Optional[Tuple[float, float]]:
        """Earliest [a, b] in the step where the orbit leaves the zone through h_j.

        Sign changes are sought on a uniform grid of the dense output; when all
        samples stay inside, the lowest interior sample is refined by bounded
        minimization so an exit and re-entry within one step is not missed.
        """
        d = self.model.dimension
        surface = self.model.surfaces[j]
        side = zone.signature[j]

        def inside(t):
            return side * surface.value(t, dense(t)[:d])

        grid = np.linspace(t_lo, t_hi, _BRACKET_SAMPLES + 1)
        values = np.array([inside(t) for t in grid])
        interior = np.flatnonzero(values > 0.0)
        if interior.size == 0:
            if values[-1] < 0.0:
                # Started on the surface: the stay inside may fall before the first sample.
                peak = minimize_scalar(lambda t: -inside(t), bounds=(grid[0], grid[1]), method="bounded",
                                       options={"xatol": 1e-6 * (grid[1] - grid[0])})
                if -peak.fun > self.config.tol_surface:
                    return float(peak.x), float(grid[1])
                raise TangencyEncountered(
                    f"Trajectory does not leave surface {j} inside zone {zone.name!r}",
                    t=float(t_lo), x=dense(t_lo)[:d].tolist(), surface=j,
                )
            return None
        first = interior[0]
        outside = np.flatnonzero(values[first:] < 0.0)
        if outside.size:
            b = first + outside[0]
            return float(grid[b - 1]), float(grid[b])

        m = first + int(np.argmin(values[first:]))
        if m == first or m == grid.size - 1:
            return None
        dip = minimize_scalar(inside, bounds=(grid[m - 1], grid[m + 1]), method="bounded",
                              options={"xatol": 1e-6 * (grid[m + 1] - grid[m - 1])})
        if dip.fun < -self.config.tol_surface:
            return float(grid[m - 1]), float(dip.x)
        return None

    def _locate(self, zone: Zone, j: int, dense: Callable, t_lo: float, t_hi: float, eps: float) -> float:
        """Root of h_j inside the bracket [t_lo, t_hi], Newton-polished."""
        d = self.model.dimension
        surface = self.model.surfaces[j]
        side = zone.signature[j]

        def inside(t):
            return side * surface.value(t, dense(t)[:d])

        root = brentq(inside, t_lo, t_hi, xtol=self.config.tol_event, rtol=4 * np.finfo(float).eps, maxiter=500)

        t = root
        for _ in range(_NEWTON_POLISH_STEPS):
            x = dense(t)[:d]
            slope = self._normal_speed(surface.grad(t, x), zone, t, x, eps)
            if slope == 0.0:
                break
            step = surface.value(t, x) / slope
            candidate = t - step
            if not t_lo <= candidate <= t_hi:
                t = root
                break
            t = candidate
            if abs(step) <= np.finfo(float).eps * max(1.0, abs(t)):
                break
        return t

    def _make_event(self, source: Zone, j: int, t: float, x: np.ndarray, eps: float, terminal: bool) -> CrossingEvent:
        values = self.model.surface_values(t, x)
        signs = []
        for i, h in enumerate(values):
            if i == j:
                signs.append(-source.signature[j])
                continue
            if abs(h) <= self.config.tol_surface:
                raise CornerEncountered(
                    f"Surfaces {j} and {i} vanish together at t={t}",
                    t=float(t), x=x.tolist(), surfaces=[j, i],
                )
            signs.append(_sign(h))
        targets = self.model.compatible_zones(signs)
        if not targets:
            raise NoZoneError(f"No zone beyond surface {j} at t={t}", t=float(t), x=x.tolist(), signs=signs)
        target = targets[0]
        cls = self.classify_event(t, x, j, source.id, target.id, eps)
        event = CrossingEvent(
            t=float(t), x=x, surface=j, from_zone=source.id, to_zone=target.id,
            w_minus=cls.w_minus, w_plus=cls.w_plus, kind=cls.kind, terminal=terminal,
        )
        if terminal:
            return event
        if cls.kind is EventKind.SLIDING:
            raise SlidingEncountered(f"Orbit reaches the sliding region of surface {j} at t={t:.12g}", event=event)
        if cls.kind is EventKind.TANGENCY:
            raise TangencyEncountered(f"Tangential contact with surface {j} at t={t:.12g}", event=event)
        probe = self.config.probe_step * self.model.period
        x_probe = x + probe * target.full_field(t, x, eps)
        if -source.signature[j] * self.model.surfaces[j].value(t + probe, x_probe) <= 0.0:
            raise TangencyEncountered(f"Probe after event on surface {j} does not enter zone {target.name!r}", event=event)
        return event

    # ------------------------------------------------------------ integration

    def _run_segment(self, zone: Zone, t_start: float, y_start: np.ndarray, t_final: float, eps: float,
                     extension: Optional[FlowExtension], steps: int):
        cfg = self.config
        d = self.model.dimension
        window = max(cfg.tol_event, 16 * np.finfo(float).eps * max(1.0, abs(t_final)))

        if extension is None:
            def rhs(t, y):
                return zone.full_field(t, y, eps)
        else:
            def rhs(t, y):
                x = y[:d]
                return np.concatenate([zone.full_field(t, x, eps), extension.rhs(zone, t, x, y[d:])])

        times, states, interpolants = [t_start], [y_start], []

        def close(t_end):
            solution = OdeSolution(np.array(times), interpolants) if interpolants else None
            return TrajectorySegment(
                zone=zone.id, t_start=t_start, t_end=t_end, times=np.array(times),
                states=np.array(states), dimension=d, solution=solution,
            )

        if t_final - t_start <= 0.0:
            return close(t_start), None, steps

        constrained = [(j, s) for j, s in enumerate(zone.signature) if s != 0]
        solver = RK45(rhs, t_start, y_start, t_final, rtol=cfg.rtol, atol=cfg.atol,
                      max_step=cfg.max_step if cfg.max_step is not None else np.inf)
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise StepSizeUnderflow(f"Integrator failed at t={solver.t}: {message}", t=float(solver.t))
            steps += 1
            if steps > cfg.max_steps:
                raise MaxStepsExceeded(f"More than {cfg.max_steps} steps", t=float(solver.t))
            t_old, t_new = solver.t_old, solver.t
            dense = solver.dense_output()
            brackets = [(j, self._bracket(zone, j, dense, t_old, t_new)) for j, _ in constrained]
            crossed = [(j, bracket) for j, bracket in brackets if bracket is not None]
            if crossed:
                hits = sorted((self._locate(zone, j, dense, a, b, eps), j) for j, (a, b) in crossed)
                t_hit, j = hits[0]
                if len(hits) > 1 and hits[1][0] - t_hit <= cfg.tol_event:
                    raise CornerEncountered(
                        f"Surfaces {j} and {hits[1][1]} are reached within tol_event at t={t_hit}",
                        t=float(t_hit), surfaces=[j, hits[1][1]],
                    )
                t_hit = max(t_hit, np.nextafter(times[-1], np.inf))
                y_hit = dense(t_hit)
                times.append(t_hit)
                states.append(y_hit)
                interpolants.append(dense)
                event = self._make_event(zone, j, t_hit, y_hit[:d], eps, terminal=t_final - t_hit <= window)
                logger.debug(f"{event.kind.value} on surface {j} at t={t_hit:.15g}: zone {zone.name} -> {event.to_zone}")
                return close(t_hit), (event, y_hit), steps
            times.append(t_new)
            states.append(solver.y.copy())
            interpolants.append(dense)
        return close(times[-1]), None, steps

    def _endpoint_event(self, zone: Zone, t: float, x: np.ndarray, eps: float) -> Optional[CrossingEvent]:
        for j, s in enumerate(zone.signature):
            if s != 0 and abs(self.model.surfaces[j].value(t, x)) <= self.config.tol_surface:
                try:
                    return self._make_event(zone, j, t, x, eps, terminal=True)
                except (FlowError, NoZoneError, ValueError) as exc:
                    logger.debug(f"Endpoint on surface {j} not recorded: {exc}")
        return None

    def integrate(self, z: Sequence[float], eps: float, t_span: Tuple[float, float],
                  extension: Optional[FlowExtension] = None) -> PiecewiseTrajectory:
        """Integrate from x(t0) = z over t_span at perturbation size eps."""
        z = np.asarray(z, dtype=float).copy()
        d = self.model.dimension
        if z.shape != (d,):
            raise DimensionMismatchError(f"Initial state has shape {z.shape}, expected ({d},)")
        t0, tf = float(t_span[0]), float(t_span[1])
        if not t0 < tf:
            raise ValueError(f"t_span must satisfy t0 < tf, got {t_span}")

        zone = self.model.zone(self.initial_zone(t0, z, eps))
        y = z if extension is None else np.concatenate([z, extension.initial()])
        segments: List[TrajectorySegment] = []
        events: List[CrossingEvent] = []
        t, steps = t0, 0
        while True:
            segment, hit, steps = self._run_segment(zone, t, y, tf, eps, extension, steps)
            segments.append(segment)
            if hit is None:
                break
            event, y_event = hit
            events.append(event)
            if len(events) > self.config.max_events:
                raise MaxEventsExceeded(f"More than {self.config.max_events} events", event=event)
            if event.terminal:
                break
            if extension is not None:
                y_event = np.concatenate([y_event[:d], extension.jump(event, y_event[d:])])
            zone = self.model.zone(event.to_zone)
            t, y = event.t, y_event

        if not events or not events[-1].terminal:
            last = segments[-1]
            endpoint = self._endpoint_event(zone, last.t_end, last.states[-1][:d], eps)
            seam = self.config.probe_step * self.model.period
            just_crossed = bool(events) and events[-1].surface == getattr(endpoint, "surface", None) and tf - events[-1].t <= seam
            if endpoint is not None and last.t_end >= tf and not just_crossed:
                events.append(endpoint)
        return PiecewiseTrajectory(z=z, eps=float(eps), t_span=(t0, tf), segments=segments, events=events, dimension=d)


def integrate(model: PiecewiseModel, z: Sequence[float], eps: float, t_span: Tuple[float, float],
              cfg: Optional[IntegratorConfig] = None, extension: Optional[FlowExtension] = None) -> PiecewiseTrajectory:
    return PiecewiseFlow(model, cfg).integrate(z, eps, t_span, extension)


def classify_event(model: PiecewiseModel, t: float, x: Sequence[float], surface: int, from_zone: int, to_zone: int,
                   eps: float = 0.0, cfg: Optional[IntegratorConfig] = None) -> EventClassification:
    return PiecewiseFlow(model, cfg).classify_event(t, x, surface, from_zone, to_zone, eps)


def crossing_times(traj: PiecewiseTrajectory) -> List[float]:
    """Strictly increasing times of the crossing-kind events."""
    return traj.crossing_times()
