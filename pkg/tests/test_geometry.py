import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotostep.geometry import (
    GeometryError,
    MotorGeometry,
    RegionId,
    RegionKind,
    blend_psi,
    deformation,
    inverse_deformation,
    is_conducting,
    region_of,
    velocity,
)
from conftest import QUARTER_TURN_ALPHA, make_desk_geometry


def sample_annulus_points(geom, n, rng, margin=0.0, avoid=()):
    """Uniform-in-radius samples, keeping clear of the given radii."""
    pts = np.empty((n, 2))
    have = 0
    while have < n:
        r = rng.uniform(geom.r0 + margin, geom.R - margin, size=2 * n)
        for a in avoid:
            r = r[np.abs(r - a) > margin]
        phi = rng.uniform(0.0, 2.0 * math.pi, size=r.size)
        take = min(n - have, r.size)
        pts[have : have + take, 0] = r[:take] * np.cos(phi[:take])
        pts[have : have + take, 1] = r[:take] * np.sin(phi[:take])
        have += take
    return pts


class TestBlend:
    def test_rotor_value(self, desk_geom):
        assert blend_psi(desk_geom, desk_geom.r0) == 1.0

    def test_gap_midpoint(self, desk_geom):
        mid = 0.5 * (desk_geom.r1 + desk_geom.r2)
        assert blend_psi(desk_geom, mid) == pytest.approx(0.5, abs=1e-15)

    def test_gap_outer_edge(self, desk_geom):
        assert blend_psi(desk_geom, desk_geom.r2) == 0.0

    def test_outer_boundary(self, desk_geom):
        assert blend_psi(desk_geom, desk_geom.R) == 0.0

    def test_non_increasing_and_continuous(self, desk_geom):
        r = np.linspace(desk_geom.r0, desk_geom.R, 4001)
        vals = blend_psi(desk_geom, r)
        assert np.all(np.diff(vals) <= 1e-14)
        assert np.max(np.abs(np.diff(vals))) < 2.0 * (r[1] - r[0]) / (
            desk_geom.r2 - desk_geom.r1
        )

    def test_domain_error(self, desk_geom):
        with pytest.raises(GeometryError):
            blend_psi(desk_geom, 0.5 * desk_geom.r0)


class TestDeformation:
    def test_identity_at_zero(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 50, rng)
        np.testing.assert_array_equal(deformation(desk_geom, 0.0, pts), pts)

    def test_quarter_rotation_in_rotor(self, desk_geom):
        r = 0.8 * desk_geom.r1
        t = (math.pi / 2.0) / desk_geom.alpha
        y = deformation(desk_geom, t, [r, 0.0])
        np.testing.assert_allclose(y, [0.0, r], atol=1e-15)

    def test_stator_fixed(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 40, rng)
        pts *= (desk_geom.r2 + 0.4 * (desk_geom.R - desk_geom.r2)) / np.hypot(
            pts[:, 0], pts[:, 1]
        )[:, None]
        np.testing.assert_array_equal(deformation(desk_geom, 0.011, pts), pts)

    def test_radius_preserved(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 300, rng)
        for t in (0.001, 0.0075, 0.015):
            y = deformation(desk_geom, t, pts)
            err = np.abs(np.hypot(y[:, 0], y[:, 1]) - np.hypot(pts[:, 0], pts[:, 1]))
            assert np.max(err) <= 1e-14 * desk_geom.R

    def test_roundtrip_thousand_points(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 1000, rng)
        for t in (0.004, 0.015):
            back = inverse_deformation(desk_geom, t, deformation(desk_geom, t, pts))
            assert np.max(np.abs(back - pts)) < 1e-12 * desk_geom.R

    def test_inverse_is_backwards_rotation_in_rotor(self, desk_geom):
        r = 0.9 * desk_geom.r1
        t = 0.003
        y = inverse_deformation(desk_geom, t, [r, 0.0])
        ang = -desk_geom.alpha * t
        np.testing.assert_allclose(y, [r * math.cos(ang), r * math.sin(ang)], rtol=1e-14)

    def test_velocity_is_time_derivative(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 200, rng, margin=1e-4)
        delta = 1e-5
        for t in (0.002, 0.009):
            fd = (
                deformation(desk_geom, t + delta, pts)
                - deformation(desk_geom, t - delta, pts)
            ) / (2.0 * delta)
            v = velocity(desk_geom, t, deformation(desk_geom, t, pts))
            bound = desk_geom.alpha**3 * desk_geom.R * delta**2 / 6.0
            assert np.max(np.abs(fd - v)) <= 2.0 * bound + 1e-12


class TestVelocity:
    def test_rotor_closed_form(self):
        geom = make_desk_geometry(r1=0.055, r2=0.06, R=0.09)
        v = velocity(geom, 0.0, [0.05, 0.0])
        assert v[0] == 0.0
        assert v[1] == pytest.approx(5.23599, abs=1e-5)
        assert v[1] == pytest.approx(QUARTER_TURN_ALPHA * 0.05, rel=1e-15)

    def test_stator_zero(self, desk_geom):
        v = velocity(desk_geom, 0.007, [0.0, 0.8 * desk_geom.R])
        np.testing.assert_array_equal(v, [0.0, 0.0])

    def test_tangential(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 500, rng)
        v = velocity(desk_geom, 0.0, pts)
        dots = np.abs(np.einsum("ij,ij->i", v, pts))
        assert np.max(dots) <= 1e-12 * desk_geom.alpha * desk_geom.R**2

    def test_divergence_free_finite_differences(self, desk_geom, rng):
        # the blend slope jumps at r1 and r2 where v is not differentiable,
        # so the stencil must not straddle those circles
        delta = 1e-5 * desk_geom.R
        pts = sample_annulus_points(
            desk_geom, 1000, rng, margin=3.0 * delta,
            avoid=(desk_geom.r1, desk_geom.r2),
        )
        ex = np.array([delta, 0.0])
        ey = np.array([0.0, delta])
        div = (
            velocity(desk_geom, 0.0, pts + ex)[:, 0]
            - velocity(desk_geom, 0.0, pts - ex)[:, 0]
            + velocity(desk_geom, 0.0, pts + ey)[:, 1]
            - velocity(desk_geom, 0.0, pts - ey)[:, 1]
        ) / (2.0 * delta)
        assert np.max(np.abs(div)) <= 1e-6 * desk_geom.alpha


class TestRegions:
    def test_gap_band(self, desk_geom, rng):
        pts = sample_annulus_points(desk_geom, 50, rng)
        r_mid = 0.5 * (desk_geom.r1 + desk_geom.r2)
        pts *= r_mid / np.hypot(pts[:, 0], pts[:, 1])[:, None]
        for p in pts:
            assert region_of(desk_geom, p).kind == RegionKind.AIR_GAP

    def test_magnet_sector(self, desk_geom):
        a1, a2 = desk_geom.magnet_band
        r = 0.5 * (a1 + a2)
        for k in range(desk_geom.n_magnets):
            centre = (k + 0.5) * desk_geom.magnet_pitch
            p = [r * math.cos(centre), r * math.sin(centre)]
            assert region_of(desk_geom, p) == RegionId(RegionKind.MAGNET, k)

    def test_sector_boundary_tie_break(self, desk_geom):
        a1, a2 = desk_geom.magnet_band
        r = 0.5 * (a1 + a2)
        pitch = desk_geom.magnet_pitch
        # exactly on the boundary between sectors 0 and 1: lower index wins,
        # and the pocket there belongs to sector 0's air
        ang = pitch
        p = [r * math.cos(ang), r * math.sin(ang)]
        assert region_of(desk_geom, p).kind == RegionKind.ROTOR_AIR

    def test_coil_and_yoke(self, desk_geom):
        b1, b2 = desk_geom.coil_band
        r = 0.5 * (b1 + b2)
        centre = 0.5 * desk_geom.coil_pitch
        assert region_of(
            desk_geom, [r * math.cos(centre), r * math.sin(centre)]
        ) == RegionId(RegionKind.COIL, 0)
        assert (
            region_of(desk_geom, [0.98 * desk_geom.R, 0.0]).kind
            == RegionKind.STATOR_IRON
        )

    def test_out_of_annulus(self, desk_geom):
        with pytest.raises(GeometryError):
            region_of(desk_geom, [desk_geom.R * 1.5, 0.0])

    def test_conducting_rule(self):
        assert is_conducting(RegionId(RegionKind.MAGNET, 2))
        assert not is_conducting(RegionId(RegionKind.COIL, 1))
        assert not is_conducting(RegionId(RegionKind.AIR_GAP))
        assert not is_conducting(RegionId(RegionKind.ROTOR_IRON))

    def test_region_code_roundtrip(self):
        for kind in RegionKind:
            rid = RegionId(kind, 3 if kind in (RegionKind.MAGNET, RegionKind.COIL) else 0)
            assert RegionId.from_code(rid.code) == rid
            assert RegionId.parse(str(rid)) == rid


class TestInvariants:
    def test_bad_radii_rejected(self):
        with pytest.raises(GeometryError):
            MotorGeometry(r0=0.05, r1=0.04, r2=0.06, R=0.09, alpha=1.0)

    def test_odd_magnets_rejected(self):
        with pytest.raises(GeometryError):
            make_desk_geometry(n_magnets=3)

    def test_arc_range_rejected(self):
        with pytest.raises(GeometryError):
            make_desk_geometry(magnet_arc=1.0)

    @settings(max_examples=30, deadline=None)
    @given(
        t=st.floats(0.0, 0.015),
        r_frac=st.floats(0.0, 1.0),
        phi=st.floats(0.0, 2.0 * math.pi),
    )
    def test_deformation_norm_property(self, t, r_frac, phi):
        geom = make_desk_geometry()
        r = geom.r0 + r_frac * (geom.R - geom.r0)
        p = [r * math.cos(phi), r * math.sin(phi)]
        y = deformation(geom, t, p)
        assert abs(math.hypot(y[0], y[1]) - r) <= 1e-14 * geom.R

    def test_periodic_compat(self):
        assert make_desk_geometry().rotation_compatible()
        assert not make_desk_geometry(alpha=1.1 * QUARTER_TURN_ALPHA).rotation_compatible()
