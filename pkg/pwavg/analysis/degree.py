"""Brouwer degree of a k-vector map on a box or ball.

Three routes, chosen by dimension unless given:

* interval sign (k = 1): (sgn f(b) - sgn f(a)) / 2 on (a, b);
* boundary winding (k = 2): winding number of f along the boundary curve,
  refined until every sampled edge turns by less than pi/2;
* regular-value sum (any k): sum of sgn det f'(a_i) over nondegenerate zeros.

Every route first checks the boundary margin min |f| on sampled boundary
points against margin_tol.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..core.config import RunConfig
from ..core.errors import DegreeError, UnresolvedWindingError

VectorMap = Callable[[np.ndarray], np.ndarray]


class DegreeMethod(Enum):
    INTERVAL_SIGN = "interval-sign"
    BOUNDARY_WINDING = "boundary-winding"
    REGULAR_VALUE_SUM = "regular-value-sum"


@dataclass(frozen=True)
class DegreeDomain:
    """An open box prod (lo_i, hi_i) or an open ball B(center, radius)."""
    kind: str
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()
    center: Tuple[float, ...] = ()
    radius: float = 0.0

    @classmethod
    def box(cls, bounds: Sequence[Sequence[float]]) -> 'DegreeDomain':
        lower = tuple(float(lo) for lo, _ in bounds)
        upper = tuple(float(hi) for _, hi in bounds)
        if not lower or any(not lo < hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"Invalid box: {bounds}")
        return cls("box", lower=lower, upper=upper)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> 'DegreeDomain':
        if radius <= 0:
            raise ValueError("Ball radius must be positive")
        return cls("ball", center=tuple(float(c) for c in np.atleast_1d(center)), radius=float(radius))

    @property
    def dimension(self) -> int:
        return len(self.lower) if self.kind == "box" else len(self.center)

    def contains(self, a: Sequence[float]) -> bool:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if self.kind == "box":
            return bool(np.all(a > np.array(self.lower)) and np.all(a < np.array(self.upper)))
        return float(np.linalg.norm(a - np.array(self.center))) < self.radius

    def interval(self) -> Tuple[float, float]:
        if self.dimension != 1:
            raise ValueError("interval() needs a one-dimensional domain")
        if self.kind == "box":
            return self.lower[0], self.upper[0]
        return self.center[0] - self.radius, self.center[0] + self.radius

    def boundary_point(self, s: float) -> np.ndarray:
        """Counterclockwise boundary parametrization for k = 2, s in [0, 1)."""
        if self.kind == "ball":
            angle = 2.0 * np.pi * s
            return np.array(self.center) + self.radius * np.array([np.cos(angle), np.sin(angle)])
        (x0, y0), (x1, y1) = self.lower, self.upper
        w, h = x1 - x0, y1 - y0
        d = (s % 1.0) * 2.0 * (w + h)
        if d < w:
            return np.array([x0 + d, y0])
        if d < w + h:
            return np.array([x1, y0 + d - w])
        if d < 2 * w + h:
            return np.array([x1 - (d - w - h), y1])
        return np.array([x0, y1 - (d - 2 * w - h)])

    def boundary_samples(self, per_face: int) -> List[np.ndarray]:
        """Points on the boundary for margin checks in any dimension."""
        k = self.dimension
        if k == 1:
            return [np.array([v]) for v in self.interval()]
        if k == 2:
            count = 4 * per_face
            return [self.boundary_point(i / count) for i in range(count)]
        if self.kind == "ball":
            rng = np.random.default_rng(0)
            directions = rng.normal(size=(per_face * 2 * k, k))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            return list(np.array(self.center) + self.radius * directions)
        axes = [np.linspace(lo, hi, per_face) for lo, hi in zip(self.lower, self.upper)]
        points = []
        for axis in range(k):
            for value in (self.lower[axis], self.upper[axis]):
                others = [axes[i] for i in range(k) if i != axis]
                for combo in itertools.product(*others):
                    point = list(combo)
                    point.insert(axis, value)
                    points.append(np.array(point))
        return points

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "box":
            return {"kind": "box", "box": [list(b) for b in zip(self.lower, self.upper)]}
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass
class DegreeResult:
    domain: DegreeDomain
    method: DegreeMethod
    degree: int
    margin: float
    samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain.to_dict(),
            "method": self.method.value,
            "degree": self.degree,
            "margin": self.margin,
            "samples": self.samples,
        }


def _value(f: VectorMap, a: np.ndarray) -> np.ndarray:
    return np.atleast_1d(np.asarray(f(a), dtype=float))


def _check_margin(margin: float, tol: float, domain: DegreeDomain) -> None:
    if not margin > tol:
        raise DegreeError(
            f"f vanishes (or nearly) on the boundary: margin {margin:.3e} <= {tol:.1e}",
            margin=float(margin), domain=domain.to_dict(),
        )


def _winding(f: VectorMap, domain: DegreeDomain, cfg: RunConfig) -> Tuple[int, float, int]:
    initial = cfg.degree.initial_samples
    params = list(np.linspace(0.0, 1.0, initial, endpoint=False))
    values = [_value(f, domain.boundary_point(s)) for s in params]
    margin = min(float(np.linalg.norm(v)) for v in values)
    _check_margin(margin, cfg.averaging.margin_tol, domain)

    while True:
        increments = []
        refined_params, refined_values = [], []
        split = False
        for i, (s, v) in enumerate(zip(params, values)):
            s_next = params[i + 1] if i + 1 < len(params) else 1.0
            v_next = values[(i + 1) % len(values)]
            turn = float(np.arctan2(v[0] * v_next[1] - v[1] * v_next[0], v @ v_next))
            refined_params.append(s)
            refined_values.append(v)
            if abs(turn) >= np.pi / 2.0:
                mid = 0.5 * (s + s_next)
                value = _value(f, domain.boundary_point(mid))
                margin = min(margin, float(np.linalg.norm(value)))
                refined_params.append(mid)
                refined_values.append(value)
                split = True
            increments.append(turn)
        _check_margin(margin, cfg.averaging.margin_tol, domain)
        if not split:
            total = float(np.sum(increments))
            return int(round(total / (2.0 * np.pi))), margin, len(params)
        if len(refined_params) > cfg.degree.max_samples:
            raise UnresolvedWindingError(
                f"Winding not resolved with {cfg.degree.max_samples} boundary samples",
                samples=len(refined_params),
            )
        params, values = refined_params, refined_values


def brouwer_degree(f: VectorMap, domain: DegreeDomain, method: Optional[DegreeMethod] = None,
                   cfg: Optional[RunConfig] = None, zeros: Optional[Sequence[Any]] = None,
                   jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> DegreeResult:
    """d_B(f, W, 0).

    ``zeros`` feeds the regular-value sum: arrays of zero locations (then
    ``jacobian`` is required) or objects carrying ``a`` and ``jacobian``.
    """
    cfg = cfg or RunConfig()
    k = domain.dimension
    if method is None:
        method = {1: DegreeMethod.INTERVAL_SIGN, 2: DegreeMethod.BOUNDARY_WINDING}.get(k, DegreeMethod.REGULAR_VALUE_SUM)
    method = DegreeMethod(method)

    if method is DegreeMethod.INTERVAL_SIGN:
        if k != 1:
            raise ValueError("interval-sign degree needs k = 1")
        lo, hi = domain.interval()
        f_lo, f_hi = _value(f, np.array([lo]))[0], _value(f, np.array([hi]))[0]
        margin = min(abs(f_lo), abs(f_hi))
        _check_margin(margin, cfg.averaging.margin_tol, domain)
        degree = int((np.sign(f_hi) - np.sign(f_lo)) // 2)
        result = DegreeResult(domain, method, degree, float(margin), 2)

    elif method is DegreeMethod.BOUNDARY_WINDING:
        if k != 2:
            raise ValueError("boundary-winding degree needs k = 2")
        degree, margin, samples = _winding(f, domain, cfg)
        result = DegreeResult(domain, method, degree, margin, samples)

    else:
        if zeros is None:
            raise ValueError("regular-value-sum degree needs the zeros of f")
        boundary = domain.boundary_samples(cfg.degree.face_samples)
        margin = min(float(np.linalg.norm(_value(f, a))) for a in boundary)
        _check_margin(margin, cfg.averaging.margin_tol, domain)
        degree = 0
        for zero in zeros:
            a = np.atleast_1d(np.asarray(getattr(zero, "a", zero), dtype=float))
            if not domain.contains(a):
                continue
            jac = getattr(zero, "jacobian", None)
            if jac is None:
                if jacobian is None:
                    raise ValueError("jacobian callable required for bare zero locations")
                jac = jacobian(a)
            det = float(np.linalg.det(np.atleast_2d(jac)))
            if det == 0.0:
                raise DegreeError(f"Degenerate zero at {a.tolist()}: det f' = 0", a=a.tolist())
            degree += int(np.sign(det))
        result = DegreeResult(domain, method, degree, margin, len(boundary))

    logger.debug(f"Degree {result.degree} via {method.value} (margin {result.margin:.3e})")
    return result
