"""First-order averaged function over a periodic manifold.

For z_a = (a, beta0(a)) on the manifold, f1(a) is the first k components of
the first-order response y1(T, z_a). The hypotheses that make its simple
zeros meaningful are checked per point and returned as reports, never raised.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import brentq

from ..core.config import RunConfig
from ..core.errors import MissingManifoldError, PeriodicityViolation, PwavgError
from ..core.flow import EventKind, PiecewiseFlow
from ..core.model import ManifoldSpec, PiecewiseModel
from ..core.variational import FirstOrderResponse, first_order_response
from ..utils.numerics import central_difference_jacobian, parallel_map, relative_step


def _manifold(model: PiecewiseModel, manifold: Optional[ManifoldSpec]) -> ManifoldSpec:
    manifold = manifold or model.manifold
    if manifold is None:
        raise MissingManifoldError("Model declares no manifold and none was supplied")
    return manifold


# ---------------------------------------------------------------- hypothesis reports

class PeriodicityReport(NamedTuple):
    """Unperturbed orbit from z_a: T-periodic and crossing-only."""
    residual: float
    crossing_only: bool
    event_kinds: List[str]
    event_times: List[float]
    error: Optional[Dict[str, Any]]
    passed: bool


class BlockReport(NamedTuple):
    """Block structure of M = Y(T) Y(0)^-1 - I."""
    monodromy: np.ndarray
    upper_right_norm: float
    delta: np.ndarray
    det_delta: float
    tangent_residual: float
    passed: bool


class TangencyReport(NamedTuple):
    """Normalized |<grad h, (0, y1)>| at every event."""
    residuals: List[float]
    jump_residuals: List[float]
    passed: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


@dataclass
class HypothesisReport:
    alpha: np.ndarray
    h: PeriodicityReport
    h2: Optional[BlockReport] = None
    h3: Optional[TangencyReport] = None

    @property
    def passed(self) -> bool:
        return self.h.passed and self.h2 is not None and self.h2.passed and self.h3 is not None and self.h3.passed

    def failed_hypothesis(self) -> Optional[str]:
        if not self.h.passed:
            return "H"
        if self.h2 is None or not self.h2.passed:
            return "H2"
        if self.h3 is None or not self.h3.passed:
            return "H3"
        return None

    def to_dict(self) -> Dict[str, Any]:
        report: Dict[str, Any] = {
            "alpha": self.alpha.tolist(),
            "h": {
                "periodicity_residual": self.h.residual,
                "crossing_only": self.h.crossing_only,
                "event_kinds": self.h.event_kinds,
                "event_times": self.h.event_times,
                "error": self.h.error,
                "pass": self.h.passed,
            },
            "pass": self.passed,
        }
        if self.h2 is not None:
            report["h2"] = {
                "monodromy": self.h2.monodromy.tolist(),
                "upper_right_norm": self.h2.upper_right_norm,
                "delta": self.h2.delta.tolist(),
                "det_delta": self.h2.det_delta,
                "tangent_residual": self.h2.tangent_residual,
                "pass": self.h2.passed,
            }
        if self.h3 is not None:
            report["h3"] = {
                "residuals": self.h3.residuals,
                "jump_residuals": self.h3.jump_residuals,
                "pass": self.h3.passed,
            }
        return report


@dataclass
class _Orbit:
    """One joint integration of x, Y and y1 from z_a (or the error it hit)."""
    alpha: np.ndarray
    z: np.ndarray
    response: Optional[FirstOrderResponse] = None
    error: Optional[PwavgError] = None


def _orbit(model: PiecewiseModel, manifold: ManifoldSpec, alpha: Sequence[float], cfg: RunConfig) -> _Orbit:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    z = manifold.point(alpha)
    try:
        response = first_order_response(model, z, cfg=cfg.integrator, with_matrix=True)
    except PwavgError as exc:
        return _Orbit(alpha, z, error=exc)
    return _Orbit(alpha, z, response=response)


def _periodicity(model: PiecewiseModel, orbit: _Orbit, cfg: RunConfig) -> PeriodicityReport:
    if orbit.error is not None:
        return PeriodicityReport(float("nan"), False, [], [], orbit.error.to_dict(), False)
    traj = orbit.response.trajectory
    residual = float(np.linalg.norm(traj.final_state - orbit.z))
    kinds = [e.kind.value for e in traj.events]
    crossing_only = all(e.kind is EventKind.CROSSING for e in traj.events)
    passed = residual <= cfg.averaging.periodicity_tol and crossing_only
    return PeriodicityReport(residual, crossing_only, kinds, [e.t for e in traj.events], None, passed)


def _blocks(manifold: ManifoldSpec, orbit: _Orbit, cfg: RunConfig) -> BlockReport:
    k, d = manifold.k, manifold.dimension
    monodromy = orbit.response.matrix.final - np.eye(d)
    upper_right = monodromy[:k, k:]
    delta = monodromy[k:, k:]
    det_delta = float(np.linalg.det(delta)) if d > k else 1.0
    tangent_residual = float(np.linalg.norm(monodromy @ manifold.tangent(orbit.alpha)))
    tol = cfg.averaging.h2_tol
    upper_norm = float(np.linalg.norm(upper_right))
    passed = upper_norm <= tol and (d == k or abs(det_delta) > tol) and tangent_residual <= tol
    return BlockReport(monodromy, upper_norm, delta, det_delta, tangent_residual, passed)


def _tangency(model: PiecewiseModel, orbit: _Orbit, cfg: RunConfig) -> TangencyReport:
    response = orbit.response
    residuals = []
    for event in response.trajectory.events:
        grad = model.surface_gradient(event.surface, event.t, np.asarray(event.x))
        y1 = response.at(event.t)
        normal = abs(float(grad[1:] @ y1))
        residuals.append(normal / (1.0 + np.linalg.norm(grad) * np.linalg.norm(y1)))
    passed = all(r <= cfg.averaging.h3_tol for r in residuals)
    return TangencyReport(residuals, list(response.jump_residuals), passed)


def check_H(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
            cfg: Optional[RunConfig] = None) -> PeriodicityReport:
    """Periodicity residual |x(T, z_a, 0) - z_a| and the kinds of all events."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    z = manifold.point(alpha)
    try:
        traj = PiecewiseFlow(model, cfg.integrator).integrate(z, 0.0, (0.0, model.period))
    except PwavgError as exc:
        return PeriodicityReport(float("nan"), False, [], [], exc.to_dict(), False)
    residual = float(np.linalg.norm(traj.final_state - z))
    crossing_only = all(e.kind is EventKind.CROSSING for e in traj.events)
    return PeriodicityReport(
        residual, crossing_only, [e.kind.value for e in traj.events], [e.t for e in traj.events], None,
        residual <= cfg.averaging.periodicity_tol and crossing_only,
    )


def check_H2(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
             cfg: Optional[RunConfig] = None) -> BlockReport:
    """Upper-right block of M must vanish and its lower-right block be nonsingular."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    orbit = _orbit(model, manifold, alpha, cfg)
    if orbit.error is not None:
        raise orbit.error
    return _blocks(manifold, orbit, cfg)


def check_H3(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
             cfg: Optional[RunConfig] = None) -> TangencyReport:
    """(0, y1) must be tangent to the switching surface at every event."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    orbit = _orbit(model, manifold, alpha, cfg)
    if orbit.error is not None:
        raise orbit.error
    return _tangency(model, orbit, cfg)


def hypothesis_report(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
                      cfg: Optional[RunConfig] = None) -> HypothesisReport:
    """H, H2 and H3 from one joint integration."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    orbit = _orbit(model, manifold, alpha, cfg)
    return _report(model, manifold, orbit, cfg)


def _report(model: PiecewiseModel, manifold: ManifoldSpec, orbit: _Orbit, cfg: RunConfig) -> HypothesisReport:
    h = _periodicity(model, orbit, cfg)
    if orbit.error is not None:
        return HypothesisReport(orbit.alpha, h)
    return HypothesisReport(orbit.alpha, h, _blocks(manifold, orbit, cfg), _tangency(model, orbit, cfg))


# ---------------------------------------------------------------- f1

def averaged_f1(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
                cfg: Optional[RunConfig] = None) -> np.ndarray:
    """f1(a) = pi y1(T, z_a); raises PeriodicityViolation off a periodic orbit."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    orbit = _orbit(model, manifold, alpha, cfg)
    if orbit.error is not None:
        raise orbit.error
    residual = float(np.linalg.norm(orbit.response.trajectory.final_state - orbit.z))
    if residual > cfg.averaging.periodicity_tol:
        raise PeriodicityViolation(
            f"Orbit from a={orbit.alpha.tolist()} is not T-periodic (residual {residual:.3e})",
            alpha=orbit.alpha.tolist(), residual=residual,
        )
    return orbit.response.value[: manifold.k]


def f1_jacobian(model: PiecewiseModel, manifold: Optional[ManifoldSpec], alpha: Sequence[float],
                cfg: Optional[RunConfig] = None) -> np.ndarray:
    """k x k central-difference Jacobian of f1, step max(h, h*|a_i|)."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    step = cfg.averaging.fd_step
    return central_difference_jacobian(
        lambda a: averaged_f1(model, manifold, a, cfg), alpha, relative_step(step, floor=step)
    )


@dataclass
class AveragedSamples:
    """f1 on the manifold grid with per-point hypothesis reports."""
    alphas: np.ndarray
    values: np.ndarray
    reports: List[HypothesisReport]
    errors: List[Optional[str]]
    zone_report: Dict[str, Any] = field(default_factory=dict)
    zero_tol: float = 1e-10

    @property
    def k(self) -> int:
        return self.alphas.shape[1]

    @property
    def identically_zero(self) -> bool:
        finite = self.values[np.all(np.isfinite(self.values), axis=1)]
        return finite.size > 0 and float(np.max(np.abs(finite))) <= self.zero_tol

    def to_frame(self) -> pd.DataFrame:
        k = self.k
        frame = pd.DataFrame(self.alphas, columns=[f"a{i + 1}" for i in range(k)])
        for i in range(k):
            frame[f"f1_{i + 1}"] = self.values[:, i]
        frame["periodicity_residual"] = [r.h.residual for r in self.reports]
        frame["h_pass"] = [r.h.passed for r in self.reports]
        frame["h2_upper_right"] = [r.h2.upper_right_norm if r.h2 else np.nan for r in self.reports]
        frame["h2_det_delta"] = [r.h2.det_delta if r.h2 else np.nan for r in self.reports]
        frame["h2_pass"] = [bool(r.h2 and r.h2.passed) for r in self.reports]
        frame["h3_max"] = [r.h3.max_residual if r.h3 else np.nan for r in self.reports]
        frame["h3_pass"] = [bool(r.h3 and r.h3.passed) for r in self.reports]
        frame["error"] = [e or "" for e in self.errors]
        return frame

    def hypothesis_summary(self) -> Dict[str, Any]:
        return {
            "points": len(self.reports),
            "h_pass": all(r.h.passed for r in self.reports),
            "h2_pass": all(r.h2 is not None and r.h2.passed for r in self.reports),
            "h3_pass": all(r.h3 is not None and r.h3.passed for r in self.reports),
            "max_periodicity_residual": float(np.nanmax([r.h.residual for r in self.reports])) if self.reports else 0.0,
            "manifold_zones": self.zone_report,
        }


def sample_f1(model: PiecewiseModel, manifold: Optional[ManifoldSpec] = None, cfg: Optional[RunConfig] = None,
              grid: Optional[int] = None) -> AveragedSamples:
    """Evaluate f1 and the hypotheses at every grid point of the manifold box."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    n = grid or cfg.averaging.grid
    alphas = manifold.grid(n)
    zone_report = model.manifold_zone_report(manifold, n=min(n, 21), tol_surface=cfg.integrator.tol_surface)
    if not zone_report["consistent"]:
        logger.bind(code="model.manifold_boundary").warning(
            f"Manifold meets the discontinuity set inconsistently: {zone_report}"
        )

    def evaluate(index: int):
        orbit = _orbit(model, manifold, alphas[index], cfg)
        report = _report(model, manifold, orbit, cfg)
        if orbit.error is not None:
            logger.bind(code=orbit.error.code).error(f"f1 at a={alphas[index].tolist()} failed: {orbit.error}")
            return np.full(manifold.k, np.nan), report, f"{orbit.error.code}: {orbit.error}"
        return orbit.response.value[: manifold.k], report, None

    results = parallel_map(evaluate, range(len(alphas)), cfg.runtime.worker_count())
    samples = AveragedSamples(
        alphas=alphas,
        values=np.array([r[0] for r in results]),
        reports=[r[1] for r in results],
        errors=[r[2] for r in results],
        zone_report=zone_report,
        zero_tol=cfg.averaging.zero_tol,
    )
    if samples.identically_zero:
        logger.bind(code="averaging.degenerate").warning("degenerate: identically zero")
    logger.info(f"Sampled f1 at {len(alphas)} points ({sum(e is not None for e in samples.errors)} failed)")
    return samples


# ---------------------------------------------------------------- zeros

@dataclass
class CandidateZero:
    a: np.ndarray
    residual: float
    jacobian: np.ndarray
    det: float
    z: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a.tolist(),
            "residual": self.residual,
            "jacobian": self.jacobian.tolist(),
            "det": self.det,
            "z": self.z.tolist(),
        }


def _grid_neighbors(index: int, n: int, k: int) -> List[int]:
    coords = list(np.unravel_index(index, (n,) * k))
    neighbors = []
    for axis in range(k):
        for delta in (-1, 1):
            c = coords[axis] + delta
            if 0 <= c < n:
                moved = list(coords)
                moved[axis] = c
                neighbors.append(int(np.ravel_multi_index(moved, (n,) * k)))
    return neighbors


def _newton(f1, jac, seed: np.ndarray, manifold: ManifoldSpec, cfg: RunConfig) -> Optional[np.ndarray]:
    a = seed.copy()
    value = f1(a)
    for iteration in range(cfg.averaging.newton_max_iter):
        norm = float(np.linalg.norm(value))
        if norm <= cfg.averaging.zero_tol:
            return a
        try:
            step = np.linalg.solve(jac(a), -value)
        except np.linalg.LinAlgError:
            logger.debug(f"Newton from {seed.tolist()}: singular Jacobian at {a.tolist()}")
            return None
        damping = 1.0
        while damping > 1e-6:
            trial = a + damping * step
            if manifold.contains(trial):
                try:
                    trial_value = f1(trial)
                except PwavgError:
                    trial_value = None
                if trial_value is not None and np.linalg.norm(trial_value) < norm:
                    break
            damping /= 2.0
        else:
            if np.linalg.norm(step) <= cfg.averaging.zero_tol * (1.0 + np.linalg.norm(a)):
                return a
            logger.debug(f"Newton from {seed.tolist()} stalled at {a.tolist()} (|f1| = {norm:.3e})")
            return None
        a, value = trial, trial_value
        if damping * np.linalg.norm(step) <= cfg.averaging.zero_tol * (1.0 + np.linalg.norm(a)):
            return a
    logger.debug(f"Newton from {seed.tolist()} did not converge in {cfg.averaging.newton_max_iter} iterations")
    return None


def find_zeros(samples: AveragedSamples, model: PiecewiseModel, manifold: Optional[ManifoldSpec] = None,
               cfg: Optional[RunConfig] = None) -> List[CandidateZero]:
    """Locate the zeros of f1 inside the manifold box from its grid samples."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    if len(samples.alphas) == 0:
        raise ValueError("No f1 samples")
    if samples.identically_zero:
        logger.bind(code="averaging.degenerate").warning("degenerate: identically zero")
        return []

    def f1(a):
        return averaged_f1(model, manifold, a, cfg)

    def jac(a):
        return f1_jacobian(model, manifold, a, cfg)

    roots: List[np.ndarray] = []
    values = samples.values
    if manifold.k == 1:
        order = np.argsort(samples.alphas[:, 0])
        a_sorted, f_sorted = samples.alphas[order, 0], values[order, 0]
        for i, (a, fa) in enumerate(zip(a_sorted, f_sorted)):
            if fa == 0.0:
                roots.append(np.array([a]))
            if i + 1 == len(a_sorted):
                break
            b, fb = a_sorted[i + 1], f_sorted[i + 1]
            if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0.0:
                try:
                    root = brentq(lambda s: f1([s])[0], a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                except PwavgError as exc:
                    logger.error(f"Refining the sign change in [{a}, {b}] failed: {exc}")
                    continue
                roots.append(np.array([root]))
    else:
        n = int(round(len(samples.alphas) ** (1.0 / manifold.k)))
        magnitude = np.linalg.norm(values, axis=1)
        seeds = [
            i for i in range(len(magnitude))
            if np.isfinite(magnitude[i]) and all(
                not np.isfinite(magnitude[j]) or magnitude[i] <= magnitude[j] for j in _grid_neighbors(i, n, manifold.k)
            )
        ]
        logger.debug(f"{len(seeds)} Newton seed(s) at local minima of |f1|")
        for i in seeds:
            try:
                root = _newton(f1, jac, samples.alphas[i], manifold, cfg)
            except PwavgError as exc:
                logger.error(f"Newton seed {samples.alphas[i].tolist()} failed: {exc}")
                continue
            if root is not None:
                roots.append(root)

    unique: List[np.ndarray] = []
    for root in roots:
        if manifold.contains(root) and all(np.linalg.norm(root - u) > cfg.averaging.dedup_radius for u in unique):
            unique.append(root)

    zeros = []
    for a in unique:
        value = f1(a)
        jacobian = jac(a)
        residual = float(np.linalg.norm(value))
        if residual > cfg.averaging.zero_tol:
            logger.warning(f"Zero at a={a.tolist()} has residual {residual:.3e} above zero_tol")
        zeros.append(CandidateZero(a, residual, jacobian, float(np.linalg.det(jacobian)), manifold.point(a)))
        logger.info(f"Zero of f1 at a={a.tolist()}, det f1' = {zeros[-1].det:.6g}")
    return zeros


def certify(samples: AveragedSamples, zeros: Sequence[CandidateZero], model: PiecewiseModel,
            manifold: Optional[ManifoldSpec] = None, degree: Optional[int] = None,
            cfg: Optional[RunConfig] = None) -> str:
    """PASS, 'no zero in V', 'degenerate', or the name of the failing hypothesis."""
    cfg = cfg or RunConfig()
    manifold = _manifold(model, manifold)
    if samples.identically_zero:
        return "degenerate"
    inside = [z for z in zeros if manifold.contains(z.a) and not np.any(np.isclose(z.a, manifold.lower)) and not np.any(np.isclose(z.a, manifold.upper))]
    if not inside:
        return "no zero in V"
    for zero in inside:
        failed = hypothesis_report(model, manifold, zero.a, cfg).failed_hypothesis()
        if failed is not None:
            return f"{failed} failed"
    if any(abs(z.det) <= cfg.averaging.margin_tol for z in inside):
        return "degenerate"
    if degree is not None and degree == 0:
        return "H4 failed"
    return "PASS"
