"""Periodic orbits of the perturbed system by Newton shooting on x(T, z, eps) - z."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from ..core.config import RunConfig
from ..core.errors import NewtonFailure, PwavgError, SingularJacobianError, UsageError
from ..core.flow import EventKind, PiecewiseFlow
from ..core.model import ManifoldSpec, PiecewiseModel
from ..core.variational import expansion_residual, first_order_response
from ..utils.numerics import central_difference_jacobian, relative_step
from .averaging import averaged_f1, f1_jacobian


def displacement(model: PiecewiseModel, z: Sequence[float], eps: float, cfg: Optional[RunConfig] = None) -> np.ndarray:
    """x(T, z, eps) - z."""
    cfg = cfg or RunConfig()
    z = np.asarray(z, dtype=float)
    return PiecewiseFlow(model, cfg.integrator).integrate(z, eps, (0.0, model.period)).final_state - z


@dataclass
class PeriodicOrbitResult:
    eps: float
    z: np.ndarray
    residual: float
    iterations: int
    certified: bool
    certified_residual: float
    event_count: int
    distance_to_manifold: Optional[float] = None
    distance_to_za: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "z": self.z.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "certified": self.certified,
            "certified_residual": self.certified_residual,
            "event_count": self.event_count,
            "distance_to_manifold": self.distance_to_manifold,
            "distance_to_za": self.distance_to_za,
        }


def _crossings(model: PiecewiseModel, z: np.ndarray, eps: float, cfg: RunConfig) -> int:
    traj = PiecewiseFlow(model, cfg.integrator).integrate(z, eps, (0.0, model.period))
    return sum(1 for e in traj.events if e.kind is EventKind.CROSSING and not e.terminal)


def find_periodic_orbit(model: PiecewiseModel, z0: Sequence[float], eps: float, cfg: Optional[RunConfig] = None,
                        manifold: Optional[ManifoldSpec] = None,
                        z_a: Optional[Sequence[float]] = None) -> PeriodicOrbitResult:
    """Damped Newton on the displacement with a central-difference Jacobian."""
    cfg = cfg or RunConfig()
    sc = cfg.shooting
    z = np.asarray(z0, dtype=float).copy()

    def residual_of(point):
        return displacement(model, point, eps, cfg)

    r = residual_of(z)
    norm = float(np.linalg.norm(r))
    iterations = 0
    while norm > sc.newton_tol:
        if iterations >= sc.max_iter:
            raise NewtonFailure(
                f"No convergence in {sc.max_iter} iterations at eps={eps} (|r| = {norm:.3e})",
                eps=eps, residual=norm, z=z.tolist(),
            )
        iterations += 1
        jac = central_difference_jacobian(residual_of, z, relative_step(sc.fd_step))
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1.0 / np.finfo(float).eps:
            raise SingularJacobianError(
                f"Return-map Jacobian is singular to working precision at eps={eps}", eps=eps, z=z.tolist(),
            )
        step = np.linalg.solve(jac, -r)

        damping = sc.damping
        for _ in range(sc.max_halvings + 1):
            trial = z + damping * step
            try:
                r_trial = residual_of(trial)
            except PwavgError as exc:
                logger.debug(f"Newton trial at damping {damping:g} left the crossing region: {exc.code}")
                r_trial = None
            if r_trial is not None and np.linalg.norm(r_trial) < norm:
                break
            damping /= 2.0
        else:
            raise NewtonFailure(
                f"Line search failed after {sc.max_halvings} halvings at eps={eps} (|r| = {norm:.3e})",
                eps=eps, residual=norm, z=z.tolist(),
            )
        z, r = trial, r_trial
        norm = float(np.linalg.norm(r))
        logger.debug(f"Newton {iterations}: |r| = {norm:.3e}, damping {damping:g}")

    tight = cfg.update_section("integrator", **cfg.integrator.tightened(10.0).dict())
    certified_residual = float(np.linalg.norm(displacement(model, z, eps, tight)))
    result = PeriodicOrbitResult(
        eps=float(eps),
        z=z,
        residual=norm,
        iterations=iterations,
        certified=certified_residual <= sc.certify_tol,
        certified_residual=certified_residual,
        event_count=_crossings(model, z, eps, cfg),
        distance_to_manifold=manifold.distance(z) if manifold is not None else None,
        distance_to_za=float(np.linalg.norm(z - np.asarray(z_a, dtype=float))) if z_a is not None else None,
    )
    logger.info(f"Periodic orbit at eps={eps:g}: z={z.tolist()} after {iterations} iteration(s)")
    return result


class SweepRow(NamedTuple):
    eps: float
    converged: bool
    z: Optional[np.ndarray]
    residual: float
    certified: bool
    iterations: int
    distance_to_za: float
    distance_to_manifold: float
    events: int
    kappa_changed: bool
    expansion_ratio: float
    error: str


@dataclass
class ConvergenceTable:
    rows: List[SweepRow]
    z_a: np.ndarray
    order: Optional[float] = None
    constant: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        d = len(self.z_a)
        records = []
        for row in self.rows:
            record = {
                "eps": row.eps,
                "converged": row.converged,
                "residual": row.residual,
                "certified": row.certified,
                "iterations": row.iterations,
                "distance_to_za": row.distance_to_za,
                "distance_to_manifold": row.distance_to_manifold,
                "events": row.events,
                "kappa_changed": row.kappa_changed,
                "expansion_ratio": row.expansion_ratio,
            }
            z = row.z if row.z is not None else np.full(d, np.nan)
            record.update({f"z{i + 1}": float(v) for i, v in enumerate(z)})
            record["error"] = row.error
            records.append(record)
        return pd.DataFrame(records)

    def to_dict(self) -> Dict[str, Any]:
        frame = self.to_frame()
        return {
            "z_a": self.z_a.tolist(),
            "order": self.order,
            "constant": self.constant,
            "warnings": list(self.warnings),
            "rows": frame.astype(object).where(frame.notna(), None).to_dict(orient="records"),
        }


def _fit_order(rows: Sequence[SweepRow]):
    usable = [(r.eps, r.distance_to_za) for r in rows if r.converged and r.distance_to_za > 0.0]
    if len(usable) < 2:
        return None, None
    log_eps, log_dist = np.log([u[0] for u in usable]), np.log([u[1] for u in usable])
    slope, intercept = np.polyfit(log_eps, log_dist, 1)
    return float(slope), float(np.exp(intercept))


def epsilon_sweep(model: PiecewiseModel, manifold: Optional[ManifoldSpec], z_a: Sequence[float],
                  eps_list: Optional[Sequence[float]] = None, cfg: Optional[RunConfig] = None,
                  warm_start: bool = True) -> ConvergenceTable:
    """Solve for the periodic orbit at each eps, warm-starting from the previous solution."""
    cfg = cfg or RunConfig()
    eps_list = list(cfg.shooting.eps_list if eps_list is None else eps_list)
    if not eps_list or any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise UsageError(f"eps list must be positive and strictly decreasing: {eps_list}", eps_list=list(eps_list))
    manifold = manifold or model.manifold
    z_a = np.asarray(z_a, dtype=float)
    warnings: List[str] = []

    if manifold is not None:
        alpha = z_a[: manifold.k]
        try:
            value = averaged_f1(model, manifold, alpha, cfg)
            det = float(np.linalg.det(f1_jacobian(model, manifold, alpha, cfg)))
            if np.linalg.norm(value) > 1e3 * cfg.averaging.zero_tol or abs(det) <= cfg.averaging.margin_tol:
                warnings.append("no nondegenerate zero")
        except PwavgError as exc:
            warnings.append(f"no nondegenerate zero ({exc.code})")

    try:
        response = first_order_response(model, z_a, cfg=cfg.integrator)
    except PwavgError as exc:
        logger.error(f"First-order response at z_a failed: {exc}")
        response = None

    rows: List[SweepRow] = []
    guess = z_a.copy()
    previous_events: Optional[int] = None
    for eps in eps_list:
        ratio = float("nan")
        if response is not None:
            try:
                ratio = expansion_residual(model, z_a, eps, cfg.integrator, response) / eps
            except PwavgError as exc:
                logger.error(f"Expansion residual at eps={eps:g} failed: {exc}")
        try:
            result = find_periodic_orbit(model, guess, eps, cfg, manifold, z_a)
        except PwavgError as exc:
            logger.bind(code=exc.code).error(f"Sweep row eps={eps:g} failed: {exc}")
            rows.append(SweepRow(eps, False, None, float("nan"), False, 0, float("nan"), float("nan"),
                                 -1, False, ratio, f"{exc.code}: {exc}"))
            continue
        changed = previous_events is not None and result.event_count != previous_events
        if changed:
            logger.bind(code="shooting.kappa_change").warning(
                f"Event count changed from {previous_events} to {result.event_count} at eps={eps:g}"
            )
        previous_events = result.event_count
        rows.append(SweepRow(
            eps=float(eps), converged=True, z=result.z, residual=result.residual, certified=result.certified,
            iterations=result.iterations, distance_to_za=result.distance_to_za,
            distance_to_manifold=result.distance_to_manifold if result.distance_to_manifold is not None else float("nan"),
            events=result.event_count, kappa_changed=changed, expansion_ratio=ratio, error="",
        ))
        if warm_start:
            guess = result.z.copy()

    order, constant = _fit_order(rows)
    if any(not r.converged for r in rows):
        warnings.append(f"{sum(not r.converged for r in rows)} row(s) failed")
    if any(r.kappa_changed for r in rows):
        warnings.append("event count changed across the sweep")
    for warning in warnings:
        logger.bind(code="shooting.sweep").warning(warning)
    return ConvergenceTable(rows=rows, z_a=z_a, order=order, constant=constant, warnings=warnings)


def lipschitz_probe(model: PiecewiseModel, z_center: Sequence[float], eps: float, radius: float,
                    samples: Optional[int] = None, cfg: Optional[RunConfig] = None) -> float:
    """Largest sampled |x(T, z1) - x(T, z2)| / |z1 - z2| in a ball around z_center."""
    cfg = cfg or RunConfig()
    samples = samples or cfg.shooting.lipschitz_samples
    z_center = np.asarray(z_center, dtype=float)
    d = z_center.size
    flow = PiecewiseFlow(model, cfg.integrator)

    def end(z):
        return flow.integrate(z, eps, (0.0, model.period)).final_state

    rng = np.random.default_rng(cfg.runtime.seed)
    directions = [np.eye(d)[i] for i in range(d)]
    random = rng.normal(size=(samples, d))
    directions += list(random / np.linalg.norm(random, axis=1, keepdims=True))
    points = [z_center + radius * rng.uniform(0.0, 1.0) ** (1.0 / d) * u for u in directions[d:]]
    points += [z_center + radius * u for u in directions[:d]]

    center_image = end(z_center)
    images = [end(p) for p in points]
    best = 0.0
    for p, image in zip(points, images):
        best = max(best, float(np.linalg.norm(image - center_image) / np.linalg.norm(p - z_center)))
    for (p, ip), (q, iq) in zip(zip(points, images), zip(points[1:], images[1:])):
        gap = np.linalg.norm(p - q)
        if gap > 0.0:
            best = max(best, float(np.linalg.norm(ip - iq) / gap))
    logger.debug(f"Lipschitz estimate {best:.6g} at radius {radius:g}")
    return best
