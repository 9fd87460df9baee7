"""Motor cross-section geometry: rotation blend, deformation, velocity, regions.

The reference domain is the annulus r0 < |x| < R.  The rotor occupies
(r0, r1) and turns rigidly with angular velocity ``alpha``; the band
(r1, r2) is the air gap whose rotation is blended linearly down to the
stator (r2, R), which stands still.  All functions are vectorised over
trailing point axes and are pure, so they are safe under concurrency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

TWO_PI = 2.0 * math.pi

# Radial split of the rotor band (r0, r1) and the stator band (r2, R),
# as fractions: the magnet ring and the coil ring live between these.
MAGNET_BAND = (0.55, 0.85)
COIL_BAND = (0.15, 0.60)

# Width of the sector-boundary tolerance used nowhere: classification is
# exact; ties are resolved toward the lower sector index.
_INDEX_STRIDE = 4096


class GeometryError(ValueError):
    """Raised for points outside the annulus or inconsistent parameters."""


class RegionKind(IntEnum):
    ROTOR_IRON = 0
    MAGNET = 1
    ROTOR_AIR = 2
    AIR_GAP = 3
    STATOR_IRON = 4
    COIL = 5


_KIND_NAMES = {
    RegionKind.ROTOR_IRON: "rotor_iron",
    RegionKind.MAGNET: "magnet",
    RegionKind.ROTOR_AIR: "rotor_air",
    RegionKind.AIR_GAP: "air_gap",
    RegionKind.STATOR_IRON: "stator_iron",
    RegionKind.COIL: "coil",
}
_NAME_KINDS = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class RegionId:
    """Material region tag; ``index`` numbers individual magnets/coils."""

    kind: RegionKind
    index: int = 0

    @property
    def code(self) -> int:
        return int(self.kind) * _INDEX_STRIDE + self.index

    @staticmethod
    def from_code(code: int) -> "RegionId":
        return RegionId(RegionKind(code // _INDEX_STRIDE), code % _INDEX_STRIDE)

    def __str__(self) -> str:
        name = _KIND_NAMES[self.kind]
        if self.kind in (RegionKind.MAGNET, RegionKind.COIL):
            return f"{name}:{self.index}"
        return name

    @staticmethod
    def parse(text: str) -> "RegionId":
        name, _, idx = text.partition(":")
        if name not in _NAME_KINDS:
            raise GeometryError(f"unknown region name {text!r}")
        return RegionId(_NAME_KINDS[name], int(idx) if idx else 0)


def kind_of_code(code: int | np.ndarray):
    """Region kind for packed region codes (array friendly)."""
    return np.asarray(code) // _INDEX_STRIDE


def index_of_code(code: int | np.ndarray):
    return np.asarray(code) % _INDEX_STRIDE


@dataclass(frozen=True)
class MotorGeometry:
    """Radii, angular velocity and pole/coil layout of the reference motor.

    ``rigid`` switches the rotation blend off (the whole annulus turns
    rigidly); it exists for verification cases only.
    """

    r0: float
    r1: float
    r2: float
    R: float
    alpha: float
    n_magnets: int = 4
    n_coils: int = 12
    magnet_arc: float = 0.5
    coil_arc: float = 0.5
    T_final: float = 0.015
    rigid: bool = False

    def __post_init__(self):
        if not (0.0 < self.r0 < self.r1 < self.r2 < self.R):
            raise GeometryError(
                f"radii must satisfy 0 < r0 < r1 < r2 < R, got "
                f"{self.r0}, {self.r1}, {self.r2}, {self.R}"
            )
        if not (0.0 < self.magnet_arc < 1.0 and 0.0 < self.coil_arc < 1.0):
            raise GeometryError("magnet_arc and coil_arc must lie in (0, 1)")
        if self.n_magnets < 2 or self.n_magnets % 2 != 0:
            raise GeometryError("n_magnets must be even (alternating polarity pairs)")
        if self.n_coils < 1:
            raise GeometryError("n_coils must be positive")
        if self.T_final <= 0.0:
            raise GeometryError("T_final must be positive")

    @property
    def magnet_pitch(self) -> float:
        return TWO_PI / self.n_magnets

    @property
    def coil_pitch(self) -> float:
        return TWO_PI / self.n_coils

    @property
    def magnet_band(self) -> tuple[float, float]:
        lo, hi = MAGNET_BAND
        return (self.r0 + lo * (self.r1 - self.r0), self.r0 + hi * (self.r1 - self.r0))

    @property
    def coil_band(self) -> tuple[float, float]:
        lo, hi = COIL_BAND
        return (self.r2 + lo * (self.R - self.r2), self.r2 + hi * (self.R - self.r2))

    @property
    def coil_area(self) -> float:
        """Cross-section area of a single coil sector (m^2)."""
        b1, b2 = self.coil_band
        return 0.5 * self.coil_arc * self.coil_pitch * (b2 * b2 - b1 * b1)

    def rotation_compatible(self, n_periods: int = 1) -> bool:
        """True if alpha*T_final is a multiple of the rotor sector pitch."""
        turns = self.alpha * self.T_final / self.magnet_pitch
        return abs(turns - round(turns)) < 1e-9 * max(1.0, abs(turns))


def _radius(x: np.ndarray) -> np.ndarray:
    return np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)


def _check_radius(geom: MotorGeometry, r: np.ndarray) -> None:
    tol = 1e-12 * geom.R
    rmin = float(np.min(r))
    rmax = float(np.max(r))
    if rmin < geom.r0 - tol or rmax > geom.R + tol:
        raise GeometryError(
            f"radius out of annulus [{geom.r0}, {geom.R}]: range [{rmin}, {rmax}]"
        )


def blend_psi(geom: MotorGeometry, r) -> np.ndarray:
    """Rotation blend: 1 in the rotor, linear in the gap, 0 in the stator."""
    r = np.asarray(r, dtype=float)
    _check_radius(geom, r)
    if geom.rigid:
        return np.ones_like(r)
    gap = (geom.r2 - r) / (geom.r2 - geom.r1)
    return np.where(r <= geom.r1, 1.0, np.where(r >= geom.r2, 0.0, gap))


def deformation(geom: MotorGeometry, t: float, x) -> np.ndarray:
    """Position at time t of the reference point x (norm preserving)."""
    x = np.asarray(x, dtype=float)
    r = _radius(x)
    _check_radius(geom, r)
    theta = geom.alpha * blend_psi(geom, r) * t
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(x)
    out[..., 0] = c * x[..., 0] - s * x[..., 1]
    out[..., 1] = s * x[..., 0] + c * x[..., 1]
    return out


def inverse_deformation(geom: MotorGeometry, t: float, y) -> np.ndarray:
    """Reference point of the spatial point y at time t (exact inverse)."""
    # psi depends on the radius only, which the rotation preserves.
    return deformation(geom, -t, y)


def velocity(geom: MotorGeometry, t: float, y) -> np.ndarray:
    """Rotation velocity field alpha*psi(r)*(-y2, y1) at time t."""
    y = np.asarray(y, dtype=float)
    r = _radius(y)
    _check_radius(geom, r)
    fac = geom.alpha * blend_psi(geom, r)
    out = np.empty_like(y)
    out[..., 0] = -fac * y[..., 1]
    out[..., 1] = fac * y[..., 0]
    return out


def _sector_index(angle: np.ndarray, pitch: float, n: int) -> np.ndarray:
    """Sector of an angle in [0, 2pi); exact boundaries go to the lower index."""
    s = angle / pitch
    k = np.floor(s).astype(np.int64)
    # tie-break: a boundary angle belongs to the sector below it
    k = np.where((s == k) & (k > 0), k - 1, k)
    return np.minimum(k, n - 1)


def region_code_of(geom: MotorGeometry, x) -> np.ndarray:
    """Vectorised region classification in the reference configuration."""
    x = np.asarray(x, dtype=float)
    r = _radius(x)
    _check_radius(geom, r)
    angle = np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)

    code = np.full(r.shape, int(RegionKind.STATOR_IRON) * _INDEX_STRIDE, dtype=np.int64)

    a1, a2 = geom.magnet_band
    b1, b2 = geom.coil_band

    rotor_iron = (r < a1) | ((r >= a2) & (r <= geom.r1))
    code[rotor_iron] = int(RegionKind.ROTOR_IRON) * _INDEX_STRIDE

    in_magnet_band = (r >= a1) & (r < a2)
    if np.any(in_magnet_band):
        k = _sector_index(angle[in_magnet_band], geom.magnet_pitch, geom.n_magnets)
        centre = (k + 0.5) * geom.magnet_pitch
        off = np.abs(angle[in_magnet_band] - centre)
        inside = off <= 0.5 * geom.magnet_arc * geom.magnet_pitch
        sub = np.where(
            inside,
            int(RegionKind.MAGNET) * _INDEX_STRIDE + k,
            int(RegionKind.ROTOR_AIR) * _INDEX_STRIDE,
        )
        code[in_magnet_band] = sub

    gap = (r > geom.r1) & (r < geom.r2)
    code[gap] = int(RegionKind.AIR_GAP) * _INDEX_STRIDE

    in_coil_band = (r >= b1) & (r < b2)
    if np.any(in_coil_band):
        k = _sector_index(angle[in_coil_band], geom.coil_pitch, geom.n_coils)
        centre = (k + 0.5) * geom.coil_pitch
        off = np.abs(angle[in_coil_band] - centre)
        inside = off <= 0.5 * geom.coil_arc * geom.coil_pitch
        sub = np.where(
            inside,
            int(RegionKind.COIL) * _INDEX_STRIDE + k,
            int(RegionKind.STATOR_IRON) * _INDEX_STRIDE,
        )
        code[in_coil_band] = sub

    return code


def region_of(geom: MotorGeometry, x) -> RegionId:
    """Region of a single reference point."""
    code = region_code_of(geom, np.asarray(x, dtype=float).reshape(1, 2))
    return RegionId.from_code(int(code[0]))


def is_conducting(region: RegionId | RegionKind) -> bool:
    """Default material rule: only the permanent magnets conduct."""
    kind = region.kind if isinstance(region, RegionId) else region
    return kind == RegionKind.MAGNET


def magnet_direction(geom: MotorGeometry, k: int) -> np.ndarray:
    """Unit magnetization direction of magnet k; polarity alternates."""
    centre = (k + 0.5) * geom.magnet_pitch
    sign = 1.0 if k % 2 == 0 else -1.0
    return sign * np.array([math.cos(centre), math.sin(centre)])
