import math

import numpy as np
import pytest

from rotostep.geometry import MotorGeometry, RegionKind, kind_of_code, region_code_of
from rotostep.mesh import (
    MeshError,
    PlanarMesh,
    SpaceTimeMesh,
    boundary_tag,
    extrude_twist,
    pair_periodic,
    triangulate_reference,
    validate,
    FACET_BOTTOM,
    FACET_LATERAL,
    FACET_TOP,
)
from conftest import make_desk_geometry


def single_triangle_mesh():
    nodes = np.array([[1.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
    tris = np.array([[0, 1, 2]], dtype=np.int32)
    region = np.array([RegionKind.ROTOR_IRON * 4096], dtype=np.int64)
    edges = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int32)
    tags = np.zeros(3, dtype=np.int32)
    return PlanarMesh(nodes, tris, region, edges, tags)


class TestPlanarGenerator:
    def test_area_sum(self, desk_geom, desk_planar):
        exact = math.pi * (desk_geom.R**2 - desk_geom.r0**2)
        total = desk_planar.areas().sum()
        assert abs(total - exact) / exact < 0.005

    def test_all_areas_positive(self, desk_planar):
        assert np.all(desk_planar.areas() > 0.0)

    def test_conforming(self, desk_planar):
        count = {}
        for tri in desk_planar.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                count[key] = count.get(key, 0) + 1
        assert set(count.values()) <= {1, 2}
        n_boundary = sum(1 for c in count.values() if c == 1)
        assert n_boundary == desk_planar.boundary_edges.shape[0]

    def test_nodes_inside_annulus(self, desk_geom, desk_planar):
        r = np.hypot(desk_planar.nodes[:, 0], desk_planar.nodes[:, 1])
        assert np.all(r >= desk_geom.r0 - 1e-12)
        assert np.all(r <= desk_geom.R + 1e-12)

    def test_rotor_rotation_invariance(self, desk_geom, desk_planar):
        pitch = desk_geom.magnet_pitch
        rot = np.array(
            [[math.cos(pitch), -math.sin(pitch)], [math.sin(pitch), math.cos(pitch)]]
        )
        r = np.hypot(desk_planar.nodes[:, 0], desk_planar.nodes[:, 1])
        rotor = desk_planar.nodes[r <= desk_geom.r1 + 1e-12]
        rotated = rotor @ rot.T
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(rotor).query(rotated)
        assert np.max(dist) < 1e-12 * desk_geom.R

    def test_region_matches_barycenter(self, desk_geom, desk_planar):
        bary = desk_planar.nodes[desk_planar.triangles].mean(axis=1)
        np.testing.assert_array_equal(
            desk_planar.region, region_code_of(desk_geom, bary)
        )

    def test_every_region_kind_present(self, desk_planar):
        kinds = set(kind_of_code(desk_planar.region).tolist())
        assert kinds == {int(k) for k in RegionKind}

    def test_boundary_tags(self, desk_geom, desk_planar):
        r0_edges = desk_planar.boundary_edges[desk_planar.boundary_tag == 0]
        rads = np.hypot(*desk_planar.nodes[r0_edges.ravel()].T)
        np.testing.assert_allclose(rads, desk_geom.r0, rtol=1e-12)

    def test_too_coarse_rejected(self, desk_geom):
        with pytest.raises(MeshError):
            triangulate_reference(desk_geom, (desk_geom.r1 - desk_geom.r0) / 2.0)

    def test_gap_must_fit_one_ring(self):
        geom = make_desk_geometry(r1=0.0598, r2=0.06)
        with pytest.raises(MeshError, match="gap"):
            triangulate_reference(geom, 0.009)


class TestExtrusion:
    def test_straight_prism_single_triangle(self):
        planar = single_triangle_mesh()
        geom = MotorGeometry(
            r0=0.5, r1=2.5, r2=3.0, R=4.0, alpha=0.0, T_final=0.015, n_coils=3
        )
        st = extrude_twist(planar, geom, 1)
        assert st.n_tets == 3
        total = st.volumes().sum()
        assert total == pytest.approx(0.5 * 0.015, rel=1e-12)
        assert np.all(st.volumes() > 0.0)

    def test_rotor_node_positions(self, desk_geom, desk_planar, desk_mesh):
        r = np.hypot(desk_planar.nodes[:, 0], desk_planar.nodes[:, 1])
        p = int(np.argmax(r <= desk_geom.r1))  # some rotor node
        angle0 = math.atan2(desk_planar.nodes[p, 1], desk_planar.nodes[p, 0])
        n_p = desk_planar.n_nodes
        for k in range(desk_mesh.n_slices + 1):
            t_k = desk_geom.T_final * k / desk_mesh.n_slices
            node = desk_mesh.nodes[k * n_p + p]
            expect = r[p] * np.array(
                [
                    math.cos(angle0 + desk_geom.alpha * t_k),
                    math.sin(angle0 + desk_geom.alpha * t_k),
                ]
            )
            np.testing.assert_allclose(node[:2], expect, atol=1e-14)
            assert node[2] == pytest.approx(t_k, abs=1e-16)

    def test_quarter_turn_thirty_slices_no_inversion(self, desk_geom, desk_planar):
        st = extrude_twist(desk_planar, desk_geom, 30)
        report = validate(st)
        assert report.inverted_count == 0
        assert report.min_volume > 0.0

    def test_volume_exact_without_twist(self, desk_planar):
        geom = make_desk_geometry(alpha=0.0)
        st = extrude_twist(desk_planar, geom, 3)
        expect = desk_planar.areas().sum() * geom.T_final
        assert abs(st.volumes().sum() - expect) <= 1e-12 * expect

    def test_volume_defect_vanishes_under_twist_refinement(
        self, desk_geom, desk_planar
    ):
        # the rotating inner boundary is approximated by twisted facets, so
        # the polyhedral volume differs from T*area by O(1/n_slices); it
        # must shrink at first order and stay tiny in absolute terms
        area = desk_planar.areas().sum()
        expect = area * desk_geom.T_final
        defects = []
        for ns in (8, 16, 32):
            st = extrude_twist(desk_planar, desk_geom, ns)
            defects.append(abs(st.volumes().sum() - expect) / expect)
        assert defects[0] < 2e-3
        rates = np.log2(np.array(defects[:-1]) / np.array(defects[1:]))
        assert np.all(rates > 0.8)

    def test_inversion_reported_with_location(self, desk_geom, desk_planar):
        with pytest.raises(MeshError, match="slab"):
            extrude_twist(desk_planar, desk_geom, 1)

    def test_slice_nodes_shared(self, desk_mesh, desk_planar):
        # tets of slab k reference exactly the nodes of slices k and k+1
        n_p = desk_planar.n_nodes
        per_slab = 3 * desk_planar.n_triangles
        for k in range(desk_mesh.n_slices):
            block = desk_mesh.tets[k * per_slab : (k + 1) * per_slab]
            slices = desk_mesh.slice_of_node[np.unique(block)]
            assert set(slices.tolist()) == {k, k + 1}

    def test_facet_tags(self, desk_geom, desk_mesh):
        facets, tags = boundary_tag(desk_mesh)
        t = desk_mesh.nodes[:, 2]
        assert np.all(t[facets[tags == FACET_BOTTOM]] <= 1e-15)
        assert np.all(
            np.abs(t[facets[tags == FACET_TOP]] - desk_geom.T_final) <= 1e-15
        )
        lat_nodes = facets[tags == FACET_LATERAL].ravel()
        r = np.hypot(desk_mesh.nodes[lat_nodes, 0], desk_mesh.nodes[lat_nodes, 1])
        on_inner = np.abs(r - desk_geom.r0) <= 1e-9 * desk_geom.R
        on_outer = np.abs(r - desk_geom.R) <= 1e-9 * desk_geom.R
        assert np.all(on_inner | on_outer)


class TestQualityReport:
    def test_straight_mesh_clean(self, desk_geom, desk_planar):
        geom = make_desk_geometry(alpha=0.0)
        st = extrude_twist(desk_planar, geom, 2)
        report = validate(st)
        assert report.inverted_count == 0
        assert report.min_volume > 0.0
        assert 0.0 < report.min_quality <= 1.0

    def test_hand_inverted_tet_counted(self, desk_geom, desk_planar):
        geom = make_desk_geometry(alpha=0.0)
        st = extrude_twist(desk_planar, geom, 2)
        tets = st.tets.copy()
        tets[5, [0, 1]] = tets[5, [1, 0]]
        broken = SpaceTimeMesh(
            nodes=st.nodes,
            tets=tets,
            region=st.region,
            n_slices=st.n_slices,
            slice_of_node=st.slice_of_node,
            planar_node_of=st.planar_node_of,
            planar=st.planar,
        )
        assert validate(broken).inverted_count == 1

    def test_desk_motor_positive(self, desk_mesh):
        assert validate(desk_mesh).min_volume > 0.0


class TestPeriodicPairing:
    def test_full_turn_identity(self):
        geom = make_desk_geometry(alpha=2.0 * math.pi / 0.015)
        planar = triangulate_reference(geom, 0.009)
        st = extrude_twist(planar, geom, 96)
        pairs = pair_periodic(st, geom)
        n_p = planar.n_nodes
        assert pairs.shape[0] > 0
        np.testing.assert_array_equal(pairs[:, 0] - st.n_slices * n_p, pairs[:, 1])

    def test_quarter_turn_permutation(self, desk_geom, desk_mesh, desk_planar):
        pairs = pair_periodic(desk_mesh, desk_geom)
        n_p = desk_planar.n_nodes
        top_planar = pairs[:, 0] - desk_mesh.n_slices * n_p
        assert pairs.shape[0] > 0
        # no conducting node may pair with itself: magnets sit off-axis
        assert np.all(top_planar != pairs[:, 1])
        # bijection on the conducting node set
        assert len(np.unique(pairs[:, 1])) == pairs.shape[0]
        assert set(top_planar.tolist()) == set(pairs[:, 1].tolist())

    def test_gap_nodes_never_paired(self, desk_geom, desk_mesh):
        pairs = pair_periodic(desk_mesh, desk_geom)
        r = np.hypot(desk_mesh.nodes[pairs[:, 0], 0], desk_mesh.nodes[pairs[:, 0], 1])
        assert np.all(r < desk_geom.r1 + 1e-12)

    def test_incompatible_rotation_rejected(self, desk_planar):
        geom = make_desk_geometry(alpha=1.07 * (math.pi / 2.0) / 0.015)
        st = extrude_twist(desk_planar, geom, 30)
        with pytest.raises(MeshError, match="periodic"):
            pair_periodic(st, geom)
