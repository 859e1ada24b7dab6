"""Discontinuous piecewise differential systems and their periodic manifolds.

A model is x' = F0(t,x) + eps*F1(t,x) + eps^2*R(t,x,eps) where the right-hand
side is selected zone by zone. Zones are sign vectors over shared scalar
switching functions h_j(t,x): a zone with signature s owns the points where
sign(h_j) == s_j for every constrained j (s_j == 0 leaves h_j free).
"""

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ValidationError as PydanticValidationError, validator
from scipy.optimize import minimize

from .errors import (
    DimensionMismatchError,
    DuplicateSignatureError,
    ExprError,
    ExprDomainError,
    ModelError,
    NoZoneError,
    ZoneOverlapError,
)
from .exprlang import (
    CompiledVector,
    Expr,
    SymbolLayout,
    compile_vector,
    differentiate,
    parse,
    validate,
)

DEFAULT_TOL_SURFACE = 1e-9

_RESERVED = re.compile(r"^(t|eps|x\d+|a\d+|sin|cos|tan|exp|log|sqrt)$")
_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


# ---------------------------------------------------------------- document schema

class _Strict(BaseModel):
    class Config:
        extra = "forbid"


class ZoneDocument(_Strict):
    """One zone of a model file."""
    name: Optional[str] = None
    signature: List[int]
    F0: List[str]
    F1: Optional[List[str]] = None
    R: Optional[List[str]] = None

    @validator('signature', each_item=True)
    def validate_signature(cls, v):
        if v not in (-1, 0, 1):
            raise ValueError('signature entries must be -1, 0 or +1')
        return v


class ManifoldDocument(_Strict):
    """Candidate periodic manifold {(a, beta0(a)) : a in box}."""
    k: int
    box: List[List[float]]
    beta0: List[str] = []

    @validator('box', each_item=True)
    def validate_interval(cls, v):
        if len(v) != 2 or not v[0] < v[1]:
            raise ValueError('box entries must be [lo, hi] with lo < hi')
        return v


class ModelDocument(_Strict):
    """Top-level model file."""
    dimension: int
    period: float
    parameters: Dict[str, float] = {}
    surfaces: List[str] = []
    zones: List[ZoneDocument]
    manifold: Optional[ManifoldDocument] = None

    @validator('dimension')
    def validate_dimension(cls, v):
        if v < 1:
            raise ValueError('dimension must be at least 1')
        return v

    @validator('period')
    def validate_period(cls, v):
        if not v > 0:
            raise ValueError('period must be positive')
        return v

    @validator('parameters')
    def validate_parameter_names(cls, v):
        for name in v:
            if not _IDENTIFIER.match(name) or _RESERVED.match(name):
                raise ValueError(f'invalid or reserved parameter name: {name}')
        return v

    @validator('zones')
    def validate_zones(cls, v):
        if not v:
            raise ValueError('at least one zone is required')
        return v


# ---------------------------------------------------------------- domain types

class FieldOrder(Enum):
    """Which term of the expansion F0 + eps*F1 + eps^2*R to evaluate."""
    F0 = "F0"
    F1 = "F1"
    R = "R"


class OnSurface(NamedTuple):
    """Point lies on the listed switching surfaces (|h_j| <= tol_surface)."""
    surfaces: Tuple[int, ...]


ZoneLookup = Union[int, OnSurface]


@dataclass(frozen=True)
class SwitchSurface:
    """Scalar switching function h(t, x) and its symbolic gradient."""
    id: int
    source: str
    h: Expr
    gradient: Tuple[Expr, ...]  # d/dt, d/dx1, ..., d/dxd
    _h: CompiledVector = field(compare=False, repr=False)
    _grad: CompiledVector = field(compare=False, repr=False)

    def value(self, t: float, x: np.ndarray) -> float:
        return float(self._h(t, x, 0.0)[0])

    def grad(self, t: float, x: np.ndarray) -> np.ndarray:
        return self._grad(t, x, 0.0)

    @property
    def time_only(self) -> bool:
        """True when h does not depend on the state."""
        return all(g == _ZERO for g in self.gradient[1:])


@dataclass(frozen=True)
class Zone:
    """One smooth piece of the vector field."""
    id: int
    name: str
    signature: Tuple[int, ...]
    sources: Mapping[str, Tuple[str, ...]] = field(compare=False)
    F0: Tuple[Expr, ...] = ()
    F1: Tuple[Expr, ...] = ()
    R: Tuple[Expr, ...] = ()
    jacF0: Tuple[Tuple[Expr, ...], ...] = ()
    _fields: Mapping[FieldOrder, CompiledVector] = field(default_factory=dict, compare=False, repr=False)
    _jac: Optional[CompiledVector] = field(default=None, compare=False, repr=False)

    def matches(self, signs: Sequence[int]) -> bool:
        """Whether a sign vector (entries -1/0/+1, 0 = on surface) lies in this zone's open region."""
        return all(s == 0 or s == sign for s, sign in zip(self.signature, signs))

    def vector_field(self, order: FieldOrder, t: float, x: np.ndarray, eps: float = 0.0) -> np.ndarray:
        return self._fields[order](t, x, eps)

    def full_field(self, t: float, x: np.ndarray, eps: float) -> np.ndarray:
        value = self._fields[FieldOrder.F0](t, x, eps)
        if eps != 0.0:
            value = value + eps * self._fields[FieldOrder.F1](t, x, eps) + eps * eps * self._fields[FieldOrder.R](t, x, eps)
        return value

    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        d = len(self.F0)
        return self._jac(t, x, 0.0).reshape(d, d)


@dataclass(frozen=True)
class ManifoldSpec:
    """Candidate manifold Z = {z_a = (a, beta0(a)) : a in box}.

    pi takes the first k coordinates of a state, pi_perp the last d - k.
    """
    k: int
    dimension: int
    box: Tuple[Tuple[float, float], ...]
    beta0_sources: Tuple[str, ...]
    beta0: Tuple[Expr, ...]
    _beta0: Optional[CompiledVector] = field(default=None, compare=False, repr=False)
    _tangent: Optional[CompiledVector] = field(default=None, compare=False, repr=False)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box])

    def point(self, alpha: Sequence[float]) -> np.ndarray:
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if self.k == self.dimension:
            return alpha.copy()
        return np.concatenate([alpha, self._beta0(alpha)])

    def project(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        return z[: self.k], z[self.k:]

    def tangent(self, alpha: Sequence[float]) -> np.ndarray:
        """d x k matrix [I_k; D beta0(alpha)] spanning the tangent space of Z."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        top = np.eye(self.k)
        if self.k == self.dimension:
            return top
        return np.vstack([top, self._tangent(alpha).reshape(self.dimension - self.k, self.k)])

    def contains(self, alpha: Sequence[float], tol: float = 0.0) -> bool:
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        return bool(np.all(alpha >= self.lower - tol) and np.all(alpha <= self.upper + tol))

    def grid(self, n: int) -> np.ndarray:
        """n points per axis, tensor product over the box; shape (n**k, k)."""
        axes = [np.linspace(lo, hi, n) for lo, hi in self.box]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def distance(self, z: np.ndarray) -> float:
        """Distance from z to Z, minimizing over the closed box."""
        z = np.asarray(z, dtype=float)
        start = np.clip(z[: self.k], self.lower, self.upper)
        if self.k == self.dimension:
            return float(np.linalg.norm(z - start))

        def objective(alpha):
            return float(np.sum((self.point(alpha) - z) ** 2))

        result = minimize(objective, start, method="L-BFGS-B", bounds=list(self.box))
        best = min(objective(start), float(result.fun))
        return float(np.sqrt(max(best, 0.0)))

    def to_document(self) -> Dict[str, Any]:
        return {"k": self.k, "box": [list(b) for b in self.box], "beta0": list(self.beta0_sources)}


@dataclass(frozen=True)
class PiecewiseModel:
    """The N-zone system x' = F0 + eps*F1 + eps^2*R on a T-periodic time axis."""
    dimension: int
    period: float
    parameters: Mapping[str, float]
    surfaces: Tuple[SwitchSurface, ...]
    zones: Tuple[Zone, ...]
    manifold: Optional[ManifoldSpec] = None

    # -- lookup

    def zone(self, zone_id: int) -> Zone:
        try:
            return self.zones[zone_id - 1]
        except IndexError:
            raise KeyError(f"No zone with id {zone_id}") from None

    def surface(self, surface_id: int) -> SwitchSurface:
        return self.surfaces[surface_id]

    def surface_values(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.array([s.value(t, x) for s in self.surfaces], dtype=float)

    def surface_gradient(self, surface_id: int, t: float, x: np.ndarray) -> np.ndarray:
        return self.surfaces[surface_id].grad(t, x)

    def compatible_zones(self, signs: Sequence[int]) -> List[Zone]:
        return [z for z in self.zones if z.matches(signs)]

    def zone_of(self, t: float, x: Sequence[float], tol_surface: float = DEFAULT_TOL_SURFACE) -> ZoneLookup:
        """Zone id containing (t, x), or OnSurface listing every |h_j| <= tol_surface."""
        x = np.asarray(x, dtype=float)
        values = self.surface_values(t, x)
        touching = tuple(j for j, h in enumerate(values) if abs(h) <= tol_surface)
        if touching:
            return OnSurface(touching)
        signs = [1 if h > 0 else -1 for h in values]
        matches = self.compatible_zones(signs)
        if not matches:
            raise NoZoneError(f"No zone covers t={t}, x={x.tolist()} (signs {signs})", t=float(t), x=x.tolist(), signs=signs)
        return matches[0].id

    # -- fields

    def eval_field(self, zone_id: int, order: Union[FieldOrder, str], t: float, x: Sequence[float], eps: float = 0.0) -> np.ndarray:
        order = FieldOrder(order.value if isinstance(order, FieldOrder) else order)
        return self.zone(zone_id).vector_field(order, t, np.asarray(x, dtype=float), eps)

    def full_field(self, zone_id: int, t: float, x: Sequence[float], eps: float) -> np.ndarray:
        return self.zone(zone_id).full_field(t, np.asarray(x, dtype=float), eps)

    def eval_jacF0(self, zone_id: int, t: float, x: Sequence[float]) -> np.ndarray:
        return self.zone(zone_id).jacobian(t, np.asarray(x, dtype=float))

    # -- manifold placement

    def manifold_zone_report(self, manifold: ManifoldSpec, n: int = 21, tol_surface: float = DEFAULT_TOL_SURFACE) -> Dict[str, Any]:
        """Sample zone_of(0, z_a) over the grid.

        Z avoids the boundary of Sigma_0 when every sample is interior to one
        zone, or every sample is on the same surfaces.
        """
        lookups = []
        for alpha in manifold.grid(n):
            try:
                lookups.append(self.zone_of(0.0, manifold.point(alpha), tol_surface))
            except (NoZoneError, ExprDomainError) as exc:
                lookups.append(f"error: {exc}")
        interior = {l for l in lookups if isinstance(l, int)}
        on_surface = {l for l in lookups if isinstance(l, OnSurface)}
        failed = [l for l in lookups if isinstance(l, str)]
        consistent = not failed and ((len(interior) == 1 and not on_surface) or (not interior and len(on_surface) == 1))
        return {
            "consistent": consistent,
            "interior_zones": sorted(interior),
            "on_surfaces": sorted(list(s.surfaces) for s in on_surface),
            "errors": failed,
        }

    # -- serialization

    def to_document(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            "dimension": self.dimension,
            "period": self.period,
            "parameters": dict(self.parameters),
            "surfaces": [s.source for s in self.surfaces],
            "zones": [
                {
                    "name": z.name,
                    "signature": list(z.signature),
                    "F0": list(z.sources["F0"]),
                    "F1": list(z.sources["F1"]),
                    "R": list(z.sources["R"]),
                }
                for z in self.zones
            ],
        }
        if self.manifold is not None:
            document["manifold"] = self.manifold.to_document()
        return document

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


_ZERO = parse("0")


# ---------------------------------------------------------------- loading

def _parse_field(source: str, path: str, symbols) -> Expr:
    try:
        expr = parse(source)
        validate(expr, symbols)
    except ExprError as exc:
        exc.details["path"] = path
        exc.message = f"{path}: {exc.message}"
        exc.args = (exc.message,)
        raise
    return expr


def _state_symbols(dimension: int, parameters: Mapping[str, float], with_eps: bool = True) -> set:
    symbols = {"t", *(f"x{i + 1}" for i in range(dimension)), *parameters}
    if with_eps:
        symbols.add("eps")
    return symbols


def _check_zones(zones: Sequence[Zone]) -> None:
    seen: Dict[Tuple[int, ...], str] = {}
    for zone in zones:
        if zone.signature in seen:
            raise DuplicateSignatureError(
                f"zones {seen[zone.signature]!r} and {zone.name!r} share signature {list(zone.signature)}",
                signature=list(zone.signature),
            )
        seen[zone.signature] = zone.name
    for a, b in itertools.combinations(zones, 2):
        if all(p == 0 or q == 0 or p == q for p, q in zip(a.signature, b.signature)):
            raise ZoneOverlapError(
                f"zones {a.name!r} and {b.name!r} overlap (signatures {list(a.signature)}, {list(b.signature)})",
                zones=[a.name, b.name],
            )


def _sample_zone_coverage(model: PiecewiseModel, samples: int = 256, seed: int = 0) -> None:
    """Warn about zones whose region no random probe point reaches."""
    if not model.surfaces:
        return
    rng = np.random.default_rng(seed)
    hits = {zone.id: 0 for zone in model.zones}
    for _ in range(samples):
        t = rng.uniform(0.0, model.period)
        x = rng.uniform(-2.0, 2.0, model.dimension)
        try:
            lookup = model.zone_of(t, x)
        except (NoZoneError, ExprDomainError):
            continue
        if isinstance(lookup, int):
            hits[lookup] += 1
    for zone in model.zones:
        if hits[zone.id] == 0:
            logger.bind(code="zone.empty_sample", zone=zone.name).warning(
                f"Zone {zone.name!r} was not reached by {samples} probe points"
            )


def build_manifold(document: ManifoldDocument, dimension: int, parameters: Mapping[str, float]) -> ManifoldSpec:
    """Validate and compile a manifold description."""
    k = document.k
    if not 1 <= k <= dimension:
        raise DimensionMismatchError(f"manifold.k must satisfy 1 <= k <= {dimension}, got {k}")
    if len(document.box) != k:
        raise DimensionMismatchError(f"manifold.box has {len(document.box)} intervals, expected {k}")
    if len(document.beta0) != dimension - k:
        raise DimensionMismatchError(f"manifold.beta0 has {len(document.beta0)} components, expected {dimension - k}")
    symbols = {f"a{i + 1}" for i in range(k)} | set(parameters)
    beta0 = tuple(_parse_field(src, f"manifold.beta0[{i}]", symbols) for i, src in enumerate(document.beta0))
    layout = SymbolLayout("manifold", k)
    compiled = tangent = None
    if beta0:
        compiled = compile_vector(beta0, layout, parameters)
        jac = [differentiate(b, f"a{i + 1}") for b in beta0 for i in range(k)]
        tangent = compile_vector(jac, layout, parameters)
    manifold = ManifoldSpec(
        k=k,
        dimension=dimension,
        box=tuple((float(lo), float(hi)) for lo, hi in document.box),
        beta0_sources=tuple(document.beta0),
        beta0=beta0,
        _beta0=compiled,
        _tangent=tangent,
    )
    for alpha in manifold.grid(5):
        try:
            manifold.point(alpha)
        except ExprDomainError as exc:
            raise ModelError(f"manifold.beta0 undefined at a={alpha.tolist()}: {exc}", code="model.manifold") from None
    return manifold


def load_model(document: Union[str, bytes, Mapping[str, Any]]) -> PiecewiseModel:
    """Parse, validate and compile a model document (JSON text or mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model file is not valid JSON: {exc}") from None
    try:
        doc = ModelDocument(**document)
    except PydanticValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ModelError(f"schema violation: {problems}", errors=[str(e) for e in exc.errors()]) from None
    except TypeError as exc:
        raise ModelError(f"schema violation: {exc}") from None

    d = doc.dimension
    params = dict(doc.parameters)
    layout = SymbolLayout("state", d)
    state_symbols = _state_symbols(d, params)

    surfaces = []
    for j, src in enumerate(doc.surfaces):
        h = _parse_field(src, f"surfaces[{j}]", _state_symbols(d, params, with_eps=False))
        gradient = (differentiate(h, "t"),) + tuple(differentiate(h, f"x{i + 1}") for i in range(d))
        surfaces.append(SwitchSurface(
            id=j, source=src, h=h, gradient=gradient,
            _h=compile_vector((h,), layout, params),
            _grad=compile_vector(gradient, layout, params),
        ))

    zero = ["0"] * d
    zones = []
    for n, zdoc in enumerate(doc.zones):
        path = f"zones[{n}]"
        if len(zdoc.signature) != len(surfaces):
            raise DimensionMismatchError(
                f"{path}.signature has {len(zdoc.signature)} entries, expected {len(surfaces)}", path=path
            )
        sources = {"F0": zdoc.F0, "F1": zdoc.F1 if zdoc.F1 is not None else zero, "R": zdoc.R if zdoc.R is not None else zero}
        exprs = {}
        for key, srcs in sources.items():
            if len(srcs) != d:
                raise DimensionMismatchError(f"{path}.{key} has {len(srcs)} components, expected {d}", path=f"{path}.{key}")
            exprs[key] = tuple(_parse_field(s, f"{path}.{key}[{i}]", state_symbols) for i, s in enumerate(srcs))
        jac = tuple(tuple(differentiate(f, f"x{i + 1}") for i in range(d)) for f in exprs["F0"])
        compiled = {FieldOrder(key): compile_vector(value, layout, params) for key, value in exprs.items()}
        zones.append(Zone(
            id=n + 1,
            name=zdoc.name if zdoc.name is not None else str(n + 1),
            signature=tuple(zdoc.signature),
            sources={key: tuple(value) for key, value in sources.items()},
            F0=exprs["F0"], F1=exprs["F1"], R=exprs["R"], jacF0=jac,
            _fields=compiled,
            _jac=compile_vector([e for row in jac for e in row], layout, params),
        ))
    _check_zones(zones)

    manifold = build_manifold(doc.manifold, d, params) if doc.manifold is not None else None
    model = PiecewiseModel(
        dimension=d,
        period=float(doc.period),
        parameters=params,
        surfaces=tuple(surfaces),
        zones=tuple(zones),
        manifold=manifold,
    )
    _sample_zone_coverage(model)
    logger.debug(f"Loaded model: d={d}, T={model.period}, {len(surfaces)} surface(s), {len(zones)} zone(s)")
    return model


def load_model_file(path: Union[str, Path]) -> PiecewiseModel:
    """Load a model from a JSON file."""
    model_file = Path(path)
    if not model_file.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    return load_model(model_file.read_text(encoding="utf-8"))


def file_hash(path: Union[str, Path]) -> str:
    """SHA-256 of a file's bytes (embedded in reports)."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
