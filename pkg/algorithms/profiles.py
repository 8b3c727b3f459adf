from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from algorithms.spectral import ComplexField, GridSpec, field_from_function

RadialFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """
    Analytic radial function u(r) with exact first and second r-derivatives.

    Dilations are applied in closed form, so scaling checks never resample a grid.
    """
    value: RadialFunction
    first: RadialFunction
    second: RadialFunction
    support: float = np.inf
    breakpoints: Tuple[float, ...] = ()
    name: str = "profile"
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, r) -> np.ndarray:
        return self.value(np.asarray(r, dtype=np.float64))

    def derivative(self, r) -> np.ndarray:
        return self.first(np.asarray(r, dtype=np.float64))

    def second_derivative(self, r) -> np.ndarray:
        return self.second(np.asarray(r, dtype=np.float64))

    def laplacian(self, r, dim: int) -> np.ndarray:
        """u'' + (dim-1) u'/r; at r = 0 the limit dim * u''(0) is used."""
        radii = np.asarray(r, dtype=np.float64)
        flat = np.atleast_1d(radii)
        second = np.atleast_1d(self.second_derivative(flat))
        first = np.atleast_1d(self.derivative(flat))
        out = np.empty_like(flat)
        inside = flat > 0
        out[inside] = second[inside] + (dim - 1) * first[inside] / flat[inside]
        out[~inside] = dim * second[~inside]
        return out.reshape(radii.shape)

    def scaled(self, amplitude: float = 1.0, length: float = 1.0) -> "RadialProfile":
        """v(r) = amplitude * u(r / length)."""
        if length <= 0:
            raise ValueError(f"Length scale must be positive, got {length}")
        a, ell = float(amplitude), float(length)
        base = self
        return RadialProfile(
            value=lambda r: a * base.value(r / ell),
            first=lambda r: (a / ell) * base.first(r / ell),
            second=lambda r: (a / ell ** 2) * base.second(r / ell),
            support=self.support * ell,
            breakpoints=tuple(b * ell for b in self.breakpoints),
            name=self.name,
            params={**self.params, "amplitude": self.params.get("amplitude", 1.0) * a,
                    "length": self.params.get("length", 1.0) * ell},
        )

    def sample(self, spec: GridSpec, center: Optional[Tuple[float, ...]] = None) -> ComplexField:
        return field_from_function(spec, self.value, center)


def gaussian_profile(amplitude: float = 1.0, width: float = 1.0) -> RadialProfile:
    """amplitude * exp(-r^2 / (2 width^2))."""
    if width <= 0:
        raise ValueError(f"Gaussian width must be positive, got {width}")
    a, s2 = float(amplitude), float(width) ** 2

    def value(r):
        return a * np.exp(-r ** 2 / (2 * s2))

    return RadialProfile(
        value=value,
        first=lambda r: -(r / s2) * value(r),
        second=lambda r: (r ** 2 / s2 ** 2 - 1 / s2) * value(r),
        name="gaussian",
        params={"amplitude": a, "width": float(width)},
    )


def bump_profile(amplitude: float = 1.0, radius: float = 1.0) -> RadialProfile:
    """
    Compactly supported C1 bump amplitude * cos^2(pi r / (2 radius)) for r < radius.
    """
    if radius <= 0:
        raise ValueError(f"Bump radius must be positive, got {radius}")
    a, b = float(amplitude), float(radius)
    c = np.pi / b

    def _inside(r):
        return r < b

    return RadialProfile(
        value=lambda r: np.where(_inside(r), a * np.cos(0.5 * c * np.minimum(r, b)) ** 2, 0.0),
        first=lambda r: np.where(_inside(r), -0.5 * a * c * np.sin(c * np.minimum(r, b)), 0.0),
        second=lambda r: np.where(_inside(r), -0.5 * a * c ** 2 * np.cos(c * np.minimum(r, b)), 0.0),
        support=b,
        breakpoints=(b,),
        name="bump",
        params={"amplitude": a, "radius": b},
    )
