import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft

from utils.helpers import worker_count

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"NGF1"
_HEADER = struct.Struct("<4sIId")


class GridError(ValueError):
    """Raised for invalid grids or fields that do not live on the expected grid."""


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform periodic box [-L/2, L/2)^d sampled with n_axis points per axis.

    The box centre is the origin, so x_j = -L/2 + j*h. Wavenumbers follow the
    FFT layout: k_j = 2*pi*fftfreq(n_axis, h), i.e. (2*pi/L)*{-n/2, ..., n/2-1}.
    """
    d: int
    n_axis: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"Grid dimension must be 1, 2 or 3, got {self.d}")
        n = int(self.n_axis)
        if n < 8 or n & (n - 1):
            raise GridError(f"n_axis must be a power of two >= 8, got {self.n_axis}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise GridError(f"Box length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.n_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_axis,) * self.d

    @property
    def size(self) -> int:
        return self.n_axis ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def R(self) -> float:
        """Half box length; the Coulomb truncation radius."""
        return self.L / 2

    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.n_axis)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis()] * self.d), indexing="ij"))

    def radius(self) -> np.ndarray:
        return _radius(self)

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_axis, d=self.h)

    def wavevectors(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.wavenumbers()] * self.d), indexing="ij"))

    def k_squared(self) -> "SymbolField":
        return SymbolField(self, k_squared_values(self))

    def k_fourth(self) -> "SymbolField":
        return SymbolField(self, k_squared_values(self) ** 2)

    def scaled(self, factor: float) -> "GridSpec":
        """Same point count, box stretched by factor (self-similar grid)."""
        return GridSpec(self.d, self.n_axis, self.L * factor)

    def to_dict(self) -> Dict[str, float]:
        return {"d": self.d, "n_axis": self.n_axis, "L": self.L, "h": self.h}


@lru_cache(maxsize=32)
def k_squared_values(spec: GridSpec) -> np.ndarray:
    k2 = sum(k ** 2 for k in spec.wavevectors())
    k2.setflags(write=False)
    return k2


@lru_cache(maxsize=32)
def _radius(spec: GridSpec) -> np.ndarray:
    r = np.sqrt(sum(x ** 2 for x in spec.coordinates()))
    r.setflags(write=False)
    return r


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples of a function on a GridSpec, stored as an n_axis^d array."""
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.complex128)
        if values.ndim == 1 and values.size == self.spec.size and self.spec.d > 1:
            values = values.reshape(self.spec.shape)
        if values.shape != self.spec.shape:
            raise GridError(
                f"Field shape {values.shape} does not match grid shape {self.spec.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("Field contains non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ComplexField":
        return cls(spec, np.zeros(spec.shape, dtype=np.complex128))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.spec, values)

    def scaled(self, factor: complex) -> "ComplexField":
        return ComplexField(self.spec, self.values * factor)

    def shifted(self, cells: Tuple[int, ...]) -> "ComplexField":
        """Translate by whole cells: result(x) = self(x - cells*h)."""
        return ComplexField(self.spec, np.roll(self.values, cells, axis=tuple(range(self.spec.d))))

    def modulus(self) -> "ComplexField":
        return ComplexField(self.spec, np.abs(self.values))


@dataclass(frozen=True, eq=False)
class SymbolField:
    """Real Fourier multiplier indexed by wavevector in FFT layout."""
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if np.iscomplexobj(values):
            raise GridError("Symbol values must be real")
        if values.shape != self.spec.shape:
            raise GridError(
                f"Symbol shape {values.shape} does not match grid shape {self.spec.shape}"
            )
        object.__setattr__(self, "values", values.astype(np.float64, copy=False))


def make_grid(d: int, n_axis: int, L: float) -> GridSpec:
    """
    Build a periodic grid.

    Args:
        d: Spatial dimension (1-3)
        n_axis: Points per axis, power of two >= 8
        L: Box edge length

    Returns:
        GridSpec with h = L / n_axis
    """
    return GridSpec(int(d), int(n_axis), float(L))


def fftn(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values, workers=worker_count())


def ifftn(values: np.ndarray) -> np.ndarray:
    return sfft.ifftn(values, workers=worker_count())


def fft_forward(f: ComplexField) -> ComplexField:
    """Unnormalized forward transform; the constant field c maps to c*n^d at k=0."""
    return ComplexField(f.spec, fftn(f.values))


def fft_inverse(f: ComplexField) -> ComplexField:
    """Inverse transform, dividing by n^d."""
    return ComplexField(f.spec, ifftn(f.values))


def apply_symbol(f: ComplexField, s: SymbolField) -> ComplexField:
    if f.spec != s.spec:
        raise GridError(f"Symbol grid {s.spec} does not match field grid {f.spec}")
    return ComplexField(f.spec, ifftn(s.values * fftn(f.values)))


def integrate(values: np.ndarray, spec: GridSpec) -> float:
    """h^d-weighted sum; spectrally accurate for smooth periodic integrands."""
    return float(np.real(np.sum(values)) * spec.cell_volume)


def inner(f: np.ndarray, g: np.ndarray, spec: GridSpec) -> complex:
    """Discrete L2 inner product, antilinear in f."""
    return complex(np.vdot(f, g) * spec.cell_volume)


def lp_power(values: np.ndarray, p: float, spec: GridSpec) -> float:
    """Returns the integral of |f|^p, i.e. the p-th power of the Lp norm."""
    return integrate(np.abs(values) ** p, spec)


def spectral_quadratic(values: np.ndarray, symbol: np.ndarray, spec: GridSpec) -> float:
    """Integral of conj(f) * S f via Parseval, for a real symbol S."""
    coeffs = fftn(values)
    return float(np.sum(symbol * np.abs(coeffs) ** 2) * spec.cell_volume / spec.size)


def gradient_power(values: np.ndarray, spec: GridSpec) -> float:
    """Integral of |grad f|^2."""
    return spectral_quadratic(values, k_squared_values(spec), spec)


def laplacian_power(values: np.ndarray, spec: GridSpec) -> float:
    """Integral of |Laplacian f|^2."""
    return spectral_quadratic(values, k_squared_values(spec) ** 2, spec)


def norms(f: ComplexField, p: float = 2.0) -> Dict[str, float]:
    """
    L2 norm, Lp norm and H1 seminorm of a field.

    Args:
        f: Field to measure
        p: Exponent of the Lp norm (p >= 1)

    Returns:
        Dict with keys l2, lp and h1_seminorm
    """
    if p < 1:
        raise ValueError(f"Lp norm requires p >= 1, got {p}")
    spec = f.spec
    return {
        "l2": float(np.sqrt(lp_power(f.values, 2.0, spec))),
        "lp": float(lp_power(f.values, p, spec) ** (1.0 / p)),
        "h1_seminorm": float(np.sqrt(max(gradient_power(f.values, spec), 0.0))),
    }


def periodic_offsets(spec: GridSpec) -> Tuple[np.ndarray, ...]:
    """Coordinates measured from grid index 0, wrapped into [-L/2, L/2)."""
    offsets = np.fft.fftfreq(spec.n_axis, d=1.0 / spec.L)
    return tuple(np.meshgrid(*([offsets] * spec.d), indexing="ij"))


def recenter_mass(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    """
    Roll a field by whole cells so the periodic centre of mass of |f|^2 sits at
    the grid origin. Axes whose marginal has no dominant first Fourier mode
    (for instance two antipodal lumps) are left alone.
    """
    density = np.abs(values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return values
    n = spec.n_axis
    phases = np.exp(2j * np.pi * np.arange(n) / n)
    shifts = []
    for axis in range(spec.d):
        others = tuple(a for a in range(spec.d) if a != axis)
        marginal = density.sum(axis=others) if others else density
        mode = complex(np.dot(marginal, phases))
        if abs(mode) < 1e-3 * total:
            shifts.append(0)
            continue
        center = (np.angle(mode) % (2 * np.pi)) * n / (2 * np.pi)
        shifts.append(int(round(n // 2 - center)) % n)
    if not any(shifts):
        return values
    return np.roll(values, shifts, axis=tuple(range(spec.d)))


def concentration(f: ComplexField, radius: float = 1.0) -> float:
    """
    Largest mass inside any ball of the given radius: sup_y of the integral
    of |f|^2 over B(y, radius), with y ranging over grid points.
    """
    spec = f.spec
    if radius <= 0:
        raise ValueError(f"Concentration radius must be positive, got {radius}")
    ball = (sum(x ** 2 for x in periodic_offsets(spec)) <= radius ** 2).astype(np.float64)
    local_mass = np.real(ifftn(fftn(f.density()) * np.conj(fftn(ball))))
    return float(np.max(local_mass) * spec.cell_volume)


def save_snapshot(f: ComplexField, path: Union[str, Path]) -> Path:
    """Write a field as NGF1: magic, u32 d, u32 n_axis, f64 L, then complex128 row-major."""
    path = Path(path)
    spec = f.spec
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(SNAPSHOT_MAGIC, spec.d, spec.n_axis, spec.L))
        handle.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes(order="C"))
    logger.debug("Wrote snapshot %s (%s)", path, spec)
    return path


def load_snapshot(path: Union[str, Path]) -> ComplexField:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise GridError(f"Snapshot {path} is truncated")
    magic, d, n_axis, L = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise GridError(f"Snapshot {path} has bad magic {magic!r}")
    spec = make_grid(d, n_axis, L)
    payload = raw[_HEADER.size:]
    expected = spec.size * 16
    if len(payload) != expected:
        raise GridError(
            f"Snapshot {path} holds {len(payload)} bytes of values, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<c16").reshape(spec.shape)
    return ComplexField(spec, values.astype(np.complex128))


def field_from_function(spec: GridSpec, func, center: Optional[Tuple[float, ...]] = None) -> ComplexField:
    """Sample a radial function func(r) about center (origin by default)."""
    coords = spec.coordinates()
    if center is None:
        r = spec.radius()
    else:
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, center)))
    return ComplexField(spec, func(r))
