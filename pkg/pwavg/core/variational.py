"""Linearization along unperturbed orbits.

The fundamental matrix Y solves Y' = D_x F0(t, x(t, z, 0)) Y with Y(0) = I,
and the first-order response y1 solves y' = D_x F0 y + F1 with y(0) = 0.
Both are integrated as extra states of the piecewise flow so that they share
step control and event times with the base trajectory.

In plain mode Y and y1 are carried continuously through crossings. Saltation
mode multiplies Y by

    S = I + (F_to - F_from) grad_x(h)^T / (dh/dt + grad_x(h) . F_from)

at every event, which is the classical sensitivity jump for state-dependent
switching.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.integrate import quad_vec

from ..utils.numerics import central_difference_jacobian
from .config import IntegratorConfig
from .errors import TangencyEncountered
from .flow import CrossingEvent, FlowExtension, PiecewiseFlow, PiecewiseTrajectory
from .model import FieldOrder, PiecewiseModel, Zone


class SensitivityMode(Enum):
    PLAIN = "plain"
    SALTATION = "saltation"


def saltation_matrix(model: PiecewiseModel, event: CrossingEvent, eps: float = 0.0,
                     tol: float = 1e-12) -> np.ndarray:
    """Jump matrix of trajectory sensitivities at a crossing."""
    t, x = event.t, np.asarray(event.x, dtype=float)
    grad = model.surface_gradient(event.surface, t, x)
    f_from = model.full_field(event.from_zone, t, x, eps)
    f_to = model.full_field(event.to_zone, t, x, eps)
    denominator = grad[0] + grad[1:] @ f_from
    if abs(denominator) <= tol:
        raise TangencyEncountered(
            f"Saltation denominator vanishes on surface {event.surface}", event=event,
            denominator=float(denominator),
        )
    return np.eye(model.dimension) + np.outer(f_to - f_from, grad[1:]) / denominator


class _VariationalExtension(FlowExtension):
    """Packs vec(Y) (row-major, d*d entries) and/or y (d entries) after x."""

    def __init__(self, model: PiecewiseModel, mode: SensitivityMode, with_matrix: bool, with_response: bool):
        self.model = model
        self.mode = mode
        self.with_matrix = with_matrix
        self.with_response = with_response
        d = model.dimension
        self.d = d
        self.size = (d * d if with_matrix else 0) + (d if with_response else 0)
        self.jump_residuals: List[float] = []

    def split(self, w: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        d, offset = self.d, 0
        matrix = response = None
        if self.with_matrix:
            matrix = w[: d * d].reshape(d, d)
            offset = d * d
        if self.with_response:
            response = w[offset: offset + d]
        return matrix, response

    def initial(self) -> np.ndarray:
        parts = []
        if self.with_matrix:
            parts.append(np.eye(self.d).ravel())
        if self.with_response:
            parts.append(np.zeros(self.d))
        return np.concatenate(parts)

    def rhs(self, zone: Zone, t: float, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        jac = zone.jacobian(t, x)
        matrix, response = self.split(w)
        parts = []
        if matrix is not None:
            parts.append((jac @ matrix).ravel())
        if response is not None:
            parts.append(jac @ response + zone.vector_field(FieldOrder.F1, t, x))
        return np.concatenate(parts)

    def jump(self, event: CrossingEvent, w: np.ndarray) -> np.ndarray:
        matrix, response = self.split(w)
        salt = None
        if response is not None or self.mode is SensitivityMode.SALTATION:
            salt = saltation_matrix(self.model, event)
        if response is not None:
            # y1 stays continuous; record the correction a saltation jump would apply.
            self.jump_residuals.append(float(np.linalg.norm(salt @ response - response)))
        if matrix is None or self.mode is SensitivityMode.PLAIN:
            return w
        parts = [(salt @ matrix).ravel()]
        if response is not None:
            parts.append(response)
        return np.concatenate(parts)


@dataclass
class FundamentalMatrix:
    """Y(t, z) sampled along the base trajectory (eps = 0)."""
    trajectory: PiecewiseTrajectory
    mode: SensitivityMode
    _offset: int = field(default=0, repr=False)

    @property
    def dimension(self) -> int:
        return self.trajectory.dimension

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([s.times for s in self.trajectory.segments])

    def _unpack(self, augmented: np.ndarray) -> np.ndarray:
        d = self.dimension
        start = d + self._offset
        return augmented[start: start + d * d].reshape(d, d)

    def at(self, t: float) -> np.ndarray:
        return self._unpack(self.trajectory.augmented(t))

    @property
    def final(self) -> np.ndarray:
        return self._unpack(self.trajectory.final_augmented)

    def transition(self, t_from: float, t_to: float) -> np.ndarray:
        """Y(t_to) Y(t_from)^-1."""
        y_from, y_to = self.at(t_from), self.at(t_to)
        return np.linalg.solve(y_from.T, y_to.T).T

    def to_frame(self) -> pd.DataFrame:
        d = self.dimension
        rows = []
        for segment in self.trajectory.segments:
            for t, state in zip(segment.times, segment.states):
                rows.append([t, *self._unpack(state).ravel()])
        columns = ["t", *(f"Y{i + 1}{j + 1}" for i in range(d) for j in range(d))]
        return pd.DataFrame(rows, columns=columns)


@dataclass
class FirstOrderResponse:
    """y1(t, z) along the base trajectory, with Y when computed jointly."""
    trajectory: PiecewiseTrajectory
    jump_residuals: List[float]
    matrix: Optional[FundamentalMatrix] = None

    @property
    def dimension(self) -> int:
        return self.trajectory.dimension

    def _unpack(self, augmented: np.ndarray) -> np.ndarray:
        d = self.dimension
        start = d + (d * d if self.matrix is not None else 0)
        return augmented[start: start + d]

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([s.times for s in self.trajectory.segments])

    def at(self, t: float) -> np.ndarray:
        return self._unpack(self.trajectory.augmented(t)).copy()

    @property
    def value(self) -> np.ndarray:
        """y1(T)."""
        return self._unpack(self.trajectory.final_augmented).copy()

    def to_frame(self) -> pd.DataFrame:
        d = self.dimension
        rows = []
        for segment in self.trajectory.segments:
            for t, state in zip(segment.times, segment.states):
                rows.append([t, *self._unpack(state)])
        return pd.DataFrame(rows, columns=["t", *(f"y{i + 1}" for i in range(d))])


def _base_span(model: PiecewiseModel, t_span: Optional[Tuple[float, float]]) -> Tuple[float, float]:
    return (0.0, model.period) if t_span is None else (float(t_span[0]), float(t_span[1]))


def fundamental_matrix(model: PiecewiseModel, z: Sequence[float], t_span: Optional[Tuple[float, float]] = None,
                       mode: SensitivityMode = SensitivityMode.PLAIN,
                       cfg: Optional[IntegratorConfig] = None) -> FundamentalMatrix:
    """Integrate Y alongside the unperturbed orbit from z; Y(t_span[0]) = I."""
    extension = _VariationalExtension(model, SensitivityMode(mode), with_matrix=True, with_response=False)
    trajectory = PiecewiseFlow(model, cfg).integrate(z, 0.0, _base_span(model, t_span), extension)
    return FundamentalMatrix(trajectory=trajectory, mode=SensitivityMode(mode))


def state_transition(model: PiecewiseModel, z: Sequence[float], t: float,
                     mode: SensitivityMode = SensitivityMode.PLAIN,
                     cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Y(t) Y(0)^-1, the derivative of x(t, z, 0) with respect to z."""
    if t == 0.0:
        return np.eye(model.dimension)
    return fundamental_matrix(model, z, (0.0, t), mode, cfg).final


def first_order_response(model: PiecewiseModel, z: Sequence[float], T: Optional[float] = None,
                         cfg: Optional[IntegratorConfig] = None, with_matrix: bool = False) -> FirstOrderResponse:
    """y1 on [0, T] from the augmented system, optionally with plain-mode Y."""
    T = model.period if T is None else float(T)
    extension = _VariationalExtension(model, SensitivityMode.PLAIN, with_matrix=with_matrix, with_response=True)
    trajectory = PiecewiseFlow(model, cfg).integrate(z, 0.0, (0.0, T), extension)
    matrix = FundamentalMatrix(trajectory, SensitivityMode.PLAIN) if with_matrix else None
    return FirstOrderResponse(trajectory=trajectory, jump_residuals=list(extension.jump_residuals), matrix=matrix)


def variation_of_constants(model: PiecewiseModel, z: Sequence[float], T: Optional[float] = None,
                           cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """y1(T) = Y(T) * integral_0^T Y(s)^-1 F1(s, x(s)) ds by adaptive quadrature."""
    T = model.period if T is None else float(T)
    fm = fundamental_matrix(model, z, (0.0, T), SensitivityMode.PLAIN, cfg)
    traj = fm.trajectory
    breaks = sorted({e.t for e in traj.events if 0.0 < e.t < T})

    def integrand(s):
        segment = traj.segment_at(s)
        x = segment.state(s)
        f1 = model.eval_field(segment.zone, FieldOrder.F1, s, x)
        return np.linalg.solve(fm.at(s), f1)

    total, error = quad_vec(integrand, 0.0, T, epsabs=1e-13, epsrel=1e-11, points=breaks or None)
    logger.debug(f"variation-of-constants quadrature error estimate {error:.2e}")
    return fm.final @ total


def expansion_residual(model: PiecewiseModel, z: Sequence[float], eps: float,
                       cfg: Optional[IntegratorConfig] = None,
                       response: Optional[FirstOrderResponse] = None) -> float:
    """|x(T, z, eps) - x(T, z, 0) - eps*y1(T, z)|, which is o(eps)."""
    flow = PiecewiseFlow(model, cfg)
    response = response or first_order_response(model, z, cfg=cfg)
    x_eps = flow.integrate(z, eps, (0.0, model.period)).final_state
    x_zero = response.trajectory.final_state
    return float(np.linalg.norm(x_eps - x_zero - eps * response.value))


class SensitivityReport(NamedTuple):
    """Plain and saltation transition matrices against a finite-difference oracle."""
    oracle: np.ndarray
    plain: np.ndarray
    saltation: np.ndarray
    plain_error: float
    saltation_error: float
    matching: Tuple[str, ...]

    def to_dict(self) -> Dict[str, object]:
        return {
            "plain_error": self.plain_error,
            "saltation_error": self.saltation_error,
            "matching": list(self.matching),
        }


def sensitivity_mode_report(model: PiecewiseModel, z: Sequence[float], t: Optional[float] = None,
                            cfg: Optional[IntegratorConfig] = None, fd_step: float = 1e-6,
                            tol: float = 1e-6) -> SensitivityReport:
    """Which of the plain and saltation modes reproduces d x(t, z, 0) / dz."""
    t = model.period if t is None else float(t)
    flow = PiecewiseFlow(model, cfg)

    def endpoint(point):
        return flow.integrate(point, 0.0, (0.0, t)).final_state

    oracle = central_difference_jacobian(endpoint, z, fd_step)
    plain = state_transition(model, z, t, SensitivityMode.PLAIN, cfg)
    saltation = state_transition(model, z, t, SensitivityMode.SALTATION, cfg)
    plain_error = float(np.max(np.abs(plain - oracle)))
    saltation_error = float(np.max(np.abs(saltation - oracle)))
    matching = tuple(
        mode.value for mode, error in ((SensitivityMode.PLAIN, plain_error), (SensitivityMode.SALTATION, saltation_error))
        if error <= tol
    )
    logger.info(f"Sensitivity modes: plain {plain_error:.2e}, saltation {saltation_error:.2e}; matching {list(matching)}")
    return SensitivityReport(oracle, plain, saltation, plain_error, saltation_error, matching)
