"""Material coefficients: conductivity, reluctivity models, impressed sources.

Conductivity and the linear reluctivities follow the standard motor table:
air, coils and laminated iron are non-conducting; only the permanent
magnets carry sigma = 1e6 S/m.  Saturation of iron is modelled either by
an exponential (Brauer-type) law or by a monotone spline through measured
BH samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import MotorGeometry, RegionId, RegionKind, magnet_direction

NU_VACUUM = 1.0e7 / (4.0 * math.pi)
NU_AIR = NU_VACUUM
NU_MAGNET = 1.0e7 / (4.2 * math.pi)
NU_IRON_LINEAR = 1.0e7 / (5100.0 * 4.0 * math.pi)
SIGMA_MAGNET = 1.0e6

COIL_AMPLITUDE = 1555.0
REMANENCE = 1.216

_PHASE_SHIFTS = (0.0, -2.0 * math.pi / 3.0, -4.0 * math.pi / 3.0)


class MaterialError(ValueError):
    pass


class ReluctivityModel:
    """Scalar reluctivity as a function of |B|; array friendly."""

    def nu(self, b):
        raise NotImplementedError

    def dnu(self, b):
        raise NotImplementedError

    @property
    def is_linear(self) -> bool:
        return False


@dataclass(frozen=True)
class Constant(ReluctivityModel):
    value: float

    def nu(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise MaterialError("|B| must be non-negative")
        return np.full_like(b, self.value)

    def dnu(self, b):
        return np.zeros_like(np.asarray(b, dtype=float))

    @property
    def is_linear(self) -> bool:
        return True


@dataclass(frozen=True)
class Brauer(ReluctivityModel):
    """nu(b) = k1 + k2 * exp(k3 * b^2); monotone for positive constants."""

    k1: float
    k2: float
    k3: float

    def nu(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise MaterialError("|B| must be non-negative")
        # overflow far beyond saturation yields inf; the Newton damping
        # rejects such trial states instead of crashing
        with np.errstate(over="ignore"):
            return self.k1 + self.k2 * np.exp(self.k3 * b * b)

    def dnu(self, b):
        b = np.asarray(b, dtype=float)
        with np.errstate(over="ignore"):
            return 2.0 * self.k2 * self.k3 * b * np.exp(self.k3 * b * b)


@dataclass(frozen=True)
class SplineBH(ReluctivityModel):
    """Monotone cubic interpolation of sampled H(B) values.

    Beyond the last sample H is continued linearly with the vacuum slope,
    which keeps b -> nu(b)*b monotone for any physically sensible data.
    """

    b_points: tuple[float, ...]
    h_points: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.b_points, dtype=float)
        h = np.asarray(self.h_points, dtype=float)
        if b.ndim != 1 or b.shape != h.shape or b.size < 2:
            raise MaterialError("need matching 1-d B and H samples, at least 2")
        if b[0] != 0.0 or h[0] != 0.0:
            raise MaterialError("BH samples must start at (0, 0)")
        if np.any(np.diff(b) <= 0):
            raise MaterialError("B samples must be strictly increasing")
        from scipy.interpolate import PchipInterpolator

        spline = PchipInterpolator(b, h, extrapolate=False)
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "_dspline", spline.derivative())
        object.__setattr__(self, "_b_last", float(b[-1]))
        object.__setattr__(self, "_h_last", float(h[-1]))
        # nu(0) taken as the initial slope of the curve
        object.__setattr__(self, "_nu0", float(spline.derivative()(0.0)))

    def _h(self, b):
        b = np.asarray(b, dtype=float)
        out = np.where(
            b <= self._b_last,
            self._spline(np.minimum(b, self._b_last)),
            self._h_last + NU_VACUUM * (b - self._b_last),
        )
        return out

    def _dh(self, b):
        b = np.asarray(b, dtype=float)
        return np.where(
            b <= self._b_last,
            self._dspline(np.minimum(b, self._b_last)),
            NU_VACUUM,
        )

    def nu(self, b):
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise MaterialError("|B| must be non-negative")
        small = b < 1e-12
        safe = np.where(small, 1.0, b)
        return np.where(small, self._nu0, self._h(b) / safe)

    def dnu(self, b):
        b = np.asarray(b, dtype=float)
        small = b < 1e-12
        safe = np.where(small, 1.0, b)
        return np.where(small, 0.0, (self._dh(b) * b - self._h(b)) / (safe * safe))


def load_bh_csv(text: str) -> SplineBH:
    """Two-column CSV (B then H, SI units, header line required)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3:
        raise MaterialError("BH CSV needs a header and at least two data rows")
    b_vals, h_vals = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise MaterialError(f"BH CSV line {lineno}: expected two columns")
        try:
            b_vals.append(float(parts[0]))
            h_vals.append(float(parts[1]))
        except ValueError as exc:
            raise MaterialError(f"BH CSV line {lineno}: {exc}") from None
    return SplineBH(tuple(b_vals), tuple(h_vals))


def nu(model: ReluctivityModel, b: float) -> float:
    """Reluctivity of a model at a flux magnitude."""
    return float(model.nu(np.asarray(b, dtype=float)))


def tangent_tensor(model: ReluctivityModel, B) -> np.ndarray:
    """Newton tangent of B -> nu(|B|) B: nu*I + (nu'/|B|) B B^T."""
    B = np.asarray(B, dtype=float)
    b = float(np.hypot(B[0], B[1]))
    if b < 1e-12:
        return float(model.nu(0.0)) * np.eye(2)
    n = float(model.nu(b))
    d = float(model.dnu(b)) / b
    return n * np.eye(2) + d * np.outer(B, B)


@dataclass(frozen=True)
class MonotonicityReport:
    lipschitz_est: float
    monotonicity_est: float

    @property
    def monotone(self) -> bool:
        return self.monotonicity_est > 0.0


def validate_monotonicity(
    model: ReluctivityModel, b_max: float = 3.0, n_samples: int = 1000
) -> MonotonicityReport:
    """Secant bounds of b -> nu(b)*b over a sampled range."""
    b = np.linspace(0.0, b_max, n_samples)
    f = model.nu(b) * b
    secants = np.diff(f) / np.diff(b)
    return MonotonicityReport(float(np.max(secants)), float(np.min(secants)))


@dataclass(frozen=True)
class SourceModel:
    """Three-phase coil currents and permanent-magnet magnetization.

    Coil k carries phase k mod 3 with sign flipping every three coils;
    magnet polarities alternate around the rotor.  Directions refer to the
    reference configuration (the assembly rotates them with the rotor).
    """

    amplitude: float
    coil_area: float
    frequency: float
    remanence: float
    n_coils: int
    n_magnets: int
    magnet_dirs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.coil_area <= 0:
            raise MaterialError("coil_area must be positive")
        if self.n_coils % 3 != 0:
            raise MaterialError("three-phase winding needs n_coils divisible by 3")

    @staticmethod
    def from_geometry(
        geom: MotorGeometry,
        amplitude: float = COIL_AMPLITUDE,
        frequency: float | None = None,
        remanence: float = REMANENCE,
        coil_area: float | None = None,
    ) -> "SourceModel":
        if frequency is None:
            # electrical frequency: pole pairs times mechanical rotations/s
            frequency = (geom.n_magnets / 2.0) * geom.alpha / (2.0 * math.pi)
        dirs = tuple(
            tuple(magnet_direction(geom, k)) for k in range(geom.n_magnets)
        )
        return SourceModel(
            amplitude=amplitude,
            coil_area=coil_area if coil_area is not None else geom.coil_area,
            frequency=frequency,
            remanence=remanence,
            n_coils=geom.n_coils,
            n_magnets=geom.n_magnets,
            magnet_dirs=dirs,
        )

    def coil_phase(self, k: int) -> tuple[float, float]:
        """(sign, phase shift) of coil k."""
        sign = 1.0 if (k // 3) % 2 == 0 else -1.0
        return sign, _PHASE_SHIFTS[k % 3]

    def current_density(self, k: int, t) -> np.ndarray:
        sign, shift = self.coil_phase(k)
        t = np.asarray(t, dtype=float)
        return (
            sign
            * self.amplitude
            / self.coil_area
            * np.sin(2.0 * math.pi * self.frequency * t + shift)
        )


def impressed_current(src: SourceModel, region: RegionId, t: float) -> float:
    """Impressed current density j_i in a region at time t (A/m^2)."""
    if region.kind != RegionKind.COIL:
        return 0.0
    return float(src.current_density(region.index, t))


def magnetization_perp(src: SourceModel, region: RegionId) -> np.ndarray:
    """Perpendicular magnetization M_perp = (-M2, M1) in the reference frame."""
    if region.kind != RegionKind.MAGNET:
        return np.zeros(2)
    d = src.magnet_dirs[region.index]
    m = src.remanence
    return np.array([-m * d[1], m * d[0]])


@dataclass(frozen=True)
class MaterialTable:
    """Per-region conductivity and reluctivity model."""

    sigma: Mapping[RegionKind, float] = field(
        default_factory=lambda: dict(_DEFAULT_SIGMA)
    )
    reluctivity: Mapping[RegionKind, ReluctivityModel] = field(
        default_factory=lambda: dict(_default_reluctivity(Constant(NU_IRON_LINEAR)))
    )

    def __post_init__(self):
        for kind in RegionKind:
            if self.sigma.get(kind, 0.0) < 0.0:
                raise MaterialError(f"sigma must be non-negative for {kind.name}")
            if kind not in self.reluctivity:
                raise MaterialError(f"missing reluctivity model for {kind.name}")

    def sigma_of(self, kind: RegionKind) -> float:
        return float(self.sigma.get(kind, 0.0))

    def model_of(self, kind: RegionKind) -> ReluctivityModel:
        return self.reluctivity[kind]

    def is_conducting(self, kind: RegionKind) -> bool:
        return self.sigma_of(kind) > 0.0

    @property
    def is_linear(self) -> bool:
        return all(m.is_linear for m in self.reluctivity.values())

    def linearized(self, nu_iron: float = NU_IRON_LINEAR) -> "MaterialTable":
        """Same table with the iron model replaced by a constant."""
        relu = dict(self.reluctivity)
        relu[RegionKind.ROTOR_IRON] = Constant(nu_iron)
        relu[RegionKind.STATOR_IRON] = Constant(nu_iron)
        return MaterialTable(sigma=dict(self.sigma), reluctivity=relu)


_DEFAULT_SIGMA = {
    RegionKind.ROTOR_IRON: 0.0,
    RegionKind.MAGNET: SIGMA_MAGNET,
    RegionKind.ROTOR_AIR: 0.0,
    RegionKind.AIR_GAP: 0.0,
    RegionKind.STATOR_IRON: 0.0,
    RegionKind.COIL: 0.0,
}


def _default_reluctivity(iron: ReluctivityModel):
    return {
        RegionKind.ROTOR_IRON: iron,
        RegionKind.MAGNET: Constant(NU_MAGNET),
        RegionKind.ROTOR_AIR: Constant(NU_AIR),
        RegionKind.AIR_GAP: Constant(NU_AIR),
        RegionKind.STATOR_IRON: iron,
        RegionKind.COIL: Constant(NU_AIR),
    }


def default_table(iron_model: ReluctivityModel | None = None) -> MaterialTable:
    """Standard motor table; iron defaults to the linear bootstrap value."""
    iron = iron_model if iron_model is not None else Constant(NU_IRON_LINEAR)
    return MaterialTable(
        sigma=dict(_DEFAULT_SIGMA), reluctivity=_default_reluctivity(iron)
    )


def uniform_table(sigma: float, nu_value: float) -> MaterialTable:
    """Single-material table used by manufactured verification cases."""
    model = Constant(nu_value)
    return MaterialTable(
        sigma={kind: sigma for kind in RegionKind},
        reluctivity={kind: model for kind in RegionKind},
    )


def conducting_rotor_table(nu_value: float = NU_AIR, sigma: float = SIGMA_MAGNET) -> MaterialTable:
    """Annulus test table: the whole rotor conducts, everything else not."""
    model = Constant(nu_value)
    sig = dict(_DEFAULT_SIGMA)
    sig[RegionKind.ROTOR_IRON] = sigma
    sig[RegionKind.MAGNET] = sigma
    sig[RegionKind.ROTOR_AIR] = sigma
    return MaterialTable(
        sigma=sig, reluctivity={kind: model for kind in RegionKind}
    )
