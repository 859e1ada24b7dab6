"""Built-in models: the two-zone linear 3D system and its polar reduction.

The unperturbed field (u, v, w)' = (-v, u, w) is perturbed by an affine field
that differs on the two sides of the plane v = 0. Coefficients are named
``<letter><row><side>``: ``a2p`` is a_2 on the v > 0 side, ``a2m`` on v < 0.
"""

import math
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel

from .model import ManifoldSpec, PiecewiseModel, load_model

BUILTIN_NAMES = ("proposition1", "proposition1-polar")

_LETTERS = "abcd"
_ROWS = (1, 2, 3)
_SIDES = ("p", "m")


class Prop1Coefficients(BaseModel):
    """The 24 perturbation coefficients; defaults are the pinned instance.

    Pinned: b1 = c2 = 1 on both sides, a2 = 1 on the v < 0 side, all others 0,
    giving f1(r) = 2*pi*r - 2 with zero r = 1/pi.
    """
    a1p: float = 0.0
    b1p: float = 1.0
    c1p: float = 0.0
    d1p: float = 0.0
    a2p: float = 0.0
    b2p: float = 0.0
    c2p: float = 1.0
    d2p: float = 0.0
    a3p: float = 0.0
    b3p: float = 0.0
    c3p: float = 0.0
    d3p: float = 0.0
    a1m: float = 0.0
    b1m: float = 1.0
    c1m: float = 0.0
    d1m: float = 0.0
    a2m: float = 1.0
    b2m: float = 0.0
    c2m: float = 1.0
    d2m: float = 0.0
    a3m: float = 0.0
    b3m: float = 0.0
    c3m: float = 0.0
    d3m: float = 0.0

    @classmethod
    def zeros(cls) -> 'Prop1Coefficients':
        return cls(**{name: 0.0 for name in cls.names()})

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f"{letter}{row}{side}" for side in _SIDES for row in _ROWS for letter in _LETTERS)

    @classmethod
    def parse(cls, text: str) -> 'Prop1Coefficients':
        """Parse ``name=value,name=value``; unspecified names keep the pinned defaults."""
        values: Dict[str, float] = {}
        for item in filter(None, (part.strip() for part in text.split(","))):
            if "=" not in item:
                raise ValueError(f"Coefficient must look like name=value: {item!r}")
            name, raw = (s.strip() for s in item.split("=", 1))
            if name not in cls.names():
                raise ValueError(f"Unknown coefficient: {name}")
            values[name] = float(raw)
        return cls(**values)

    def sum_linear(self) -> float:
        """b1+ + b1- + c2+ + c2-."""
        return self.b1p + self.b1m + self.c2p + self.c2m

    def sign_condition(self) -> bool:
        """(a2- - a2+)(b1- + b1+ + c2- + c2+) > 0: a positive root exists."""
        return (self.a2m - self.a2p) * self.sum_linear() > 0

    def closed_form_f1(self, r: float) -> float:
        return math.pi / 2.0 * self.sum_linear() * r + 2.0 * (self.a2p - self.a2m)

    def closed_form_root(self) -> Optional[float]:
        if self.sum_linear() == 0.0:
            return None
        return 4.0 * (self.a2m - self.a2p) / (math.pi * self.sum_linear())


def _affine(row: int, side: str, u: str, v: str, w: str) -> str:
    return f"(a{row}{side} + b{row}{side}*{u} + c{row}{side}*{v} + d{row}{side}*{w})"


def proposition1_document(coeffs: Optional[Prop1Coefficients] = None) -> Dict[str, Any]:
    """Cartesian model document: d = 3, T = 2*pi, surface h = v."""
    coeffs = coeffs or Prop1Coefficients()
    zones = []
    for name, side, sign in (("+", "p", 1), ("-", "m", -1)):
        zones.append({
            "name": name,
            "signature": [sign],
            "F0": ["-x2", "x1", "x3"],
            "F1": [_affine(row, side, "x1", "x2", "x3") for row in _ROWS],
            "R": ["0", "0", "0"],
        })
    return {
        "dimension": 3,
        "period": 2.0 * math.pi,
        "parameters": coeffs.dict(),
        "surfaces": ["x2"],
        "zones": zones,
    }


def proposition1_polar_document(
    coeffs: Optional[Prop1Coefficients] = None,
    r_bounds: Tuple[float, float] = (0.05, 1.0),
) -> Dict[str, Any]:
    """Polar model document with the angle as time: state (r, z), T = 2*pi.

    With P_i the affine perturbations evaluated at (r cos t, r sin t, z),
    A = cos(t) P1 + sin(t) P2 and B = (cos(t) P2 - sin(t) P1) / r, the exact
    field is (eps A, z + eps P3) / (1 + eps B); F1 = (A, P3 - z B) is its
    first-order part and R carries the remainder exactly. The half-turns are
    separated by h = sin(t).
    """
    coeffs = coeffs or Prop1Coefficients()
    u, v, w = "x1*cos(t)", "x1*sin(t)", "x2"
    zones = []
    for name, side, sign in (("+", "p", 1), ("-", "m", -1)):
        p1, p2, p3 = (_affine(row, side, u, v, w) for row in _ROWS)
        a = f"(cos(t)*{p1} + sin(t)*{p2})"
        b = f"((cos(t)*{p2} - sin(t)*{p1})/x1)"
        zones.append({
            "name": name,
            "signature": [sign],
            "F0": ["0", "x2"],
            "F1": [a, f"{p3} - x2*{b}"],
            "R": [f"-{a}*{b}/(1 + eps*{b})", f"{b}*(x2*{b} - {p3})/(1 + eps*{b})"],
        })
    return {
        "dimension": 2,
        "period": 2.0 * math.pi,
        "parameters": coeffs.dict(),
        "surfaces": ["sin(t)"],
        "zones": zones,
        "manifold": {"k": 1, "box": [[float(r_bounds[0]), float(r_bounds[1])]], "beta0": ["0"]},
    }


def builtin_proposition1(coeffs: Optional[Prop1Coefficients] = None) -> PiecewiseModel:
    return load_model(proposition1_document(coeffs))


def builtin_proposition1_polar(
    coeffs: Optional[Prop1Coefficients] = None,
    r_bounds: Tuple[float, float] = (0.05, 1.0),
) -> Tuple[PiecewiseModel, ManifoldSpec]:
    model = load_model(proposition1_polar_document(coeffs, r_bounds))
    return model, model.manifold


def builtin_document(name: str, coeffs: Optional[Prop1Coefficients] = None) -> Dict[str, Any]:
    """Model document for a built-in by name."""
    if name == "proposition1":
        return proposition1_document(coeffs)
    if name == "proposition1-polar":
        return proposition1_polar_document(coeffs)
    raise ValueError(f"Unknown built-in model: {name} (choose from {', '.join(BUILTIN_NAMES)})")
