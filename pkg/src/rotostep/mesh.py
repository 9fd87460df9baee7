"""Planar reference triangulation and its twisted space-time extrusion.

The planar generator is a structured polar mesh: nodes sit on concentric
circles whose angular counts are multiples of the magnet count (rotor
side) or the coil count (stator side), so the rotor node set is invariant
under rotation by one magnet pitch.  Bands between circles of different
counts are bridged by a deterministic angular merge.

The extrusion places a copy of the planar nodes at every time slice,
moved by the rotation blend, and splits each (possibly twisted) prism
into three tetrahedra using the sorted-node diagonal rule, which keeps
the decomposition conforming across neighbouring prisms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import MotorGeometry, RegionKind, deformation, kind_of_code, region_code_of

BOUNDARY_INNER = 0
BOUNDARY_OUTER = 1

FACET_LATERAL = 0
FACET_BOTTOM = 1
FACET_TOP = 2


class MeshError(ValueError):
    pass


@dataclass
class PlanarMesh:
    nodes: np.ndarray  # (n, 2) float
    triangles: np.ndarray  # (m, 3) int32, counterclockwise
    region: np.ndarray  # (m,) int64 region codes
    boundary_edges: np.ndarray  # (e, 2) int32
    boundary_tag: np.ndarray  # (e,) int32, BOUNDARY_INNER / BOUNDARY_OUTER

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass
class SpaceTimeMesh:
    nodes: np.ndarray  # (n, 3) float: (y1, y2, t)
    tets: np.ndarray  # (m, 4) int32, positive volume
    region: np.ndarray  # (m,) int64 region codes
    n_slices: int
    slice_of_node: np.ndarray  # (n,) int32, -1 when unknown (imported meshes)
    planar_node_of: np.ndarray  # (n,) int32, -1 when unknown
    planar: PlanarMesh | None = None
    periodic_pairs: np.ndarray | None = None  # (p, 2) int32 (top, bottom)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def t_final(self) -> float:
        return float(np.max(self.nodes[:, 2]))

    def volumes(self) -> np.ndarray:
        return geometry_cache(self)[0]

    def slice_nodes(self, k: int) -> np.ndarray:
        """Node ids of slice k, ordered by planar node id."""
        if self.n_slices <= 0 or self.planar is None:
            raise MeshError("mesh has no slice structure")
        if not 0 <= k <= self.n_slices:
            raise MeshError(f"slice index {k} out of range [0, {self.n_slices}]")
        mask = self.slice_of_node == k
        ids = np.nonzero(mask)[0]
        order = np.argsort(self.planar_node_of[ids], kind="stable")
        return ids[order].astype(np.int32)


@dataclass(frozen=True)
class MeshQualityReport:
    min_volume: float
    max_volume: float
    min_quality: float
    inverted_count: int


def _round_to_multiple(value: float, multiple: int) -> int:
    return max(multiple, multiple * int(round(value / multiple)))


def _gap_ring_count(geom: MotorGeometry, h: float, delta_phi: float) -> int:
    """Rings needed so the sheared gap cells stay positive at t = T.

    The full relative rotation alpha*T is absorbed across the gap.  With
    the twist-aware diagonal choice a ring of thickness dr below radius
    r2 tolerates a relative twist of arccos((1 - dr/r2) cos(dphi/2)) +
    dphi/2 before its triangles flip; 1.35 is the safety margin.
    """
    n_h = max(1, int(round((geom.r2 - geom.r1) / h)))
    if geom.rigid or geom.alpha == 0.0:
        return n_h
    twist = abs(geom.alpha) * geom.T_final
    width = geom.r2 - geom.r1
    for n in range(n_h, 4097):
        beta = 1.35 * twist / n
        ratio = (1.0 - width / (n * geom.r2)) * math.cos(delta_phi / 2.0)
        limit = math.acos(max(-1.0, min(1.0, ratio))) + delta_phi / 2.0
        if beta <= limit:
            return n
    raise MeshError(
        f"cannot absorb a twist of {twist:.3f} rad in the gap "
        f"({geom.r1}, {geom.r2}); widen the gap or refine h"
    )


def _circle_radii(geom: MotorGeometry, h: float):
    """Radial breakpoints, their angular counts, and the gap radius range."""
    a1, a2 = geom.magnet_band
    b1, b2 = geom.coil_band
    breaks = [geom.r0, a1, a2, geom.r1, geom.r2, b1, b2, geom.R]

    if (geom.r2 - geom.r1) / h < 0.5:
        raise MeshError(
            f"h={h} too coarse to resolve the air gap "
            f"({geom.r1}, {geom.r2}): fewer than one ring would fit"
        )

    # one shared angular count over [r1, r2]: the relative rotation lives
    # there, and count changes at twisted interfaces would invert cells
    gap_count = _round_to_multiple(2.0 * math.pi * geom.r2 / h, geom.n_magnets)
    gap_rings = _gap_ring_count(geom, h, 2.0 * math.pi / gap_count)

    radii: list[float] = [geom.r0]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if (lo, hi) == (geom.r1, geom.r2):
            n = gap_rings
        else:
            n = max(1, int(round((hi - lo) / h)))
        for i in range(1, n + 1):
            radii.append(lo + (hi - lo) * i / n)
    radii_arr = np.array(radii)

    counts = []
    for r in radii_arr:
        if geom.r1 <= r <= geom.r2:
            counts.append(gap_count)
        elif r < geom.r1:
            counts.append(_round_to_multiple(2.0 * math.pi * r / h, geom.n_magnets))
        else:
            counts.append(_round_to_multiple(2.0 * math.pi * r / h, geom.n_coils))
    return radii_arr, np.array(counts, dtype=np.int64)


def _merge_band(inner_ids, outer_ids, outer_first: bool = False):
    """Triangulate the band between two node circles (counts may differ).

    The march is resolved by exact integer comparison of angular
    fractions, so it is deterministic and commutes with rotations that
    preserve both counts.  ``outer_first`` flips the tie-break and hence
    the diagonal direction; the gap uses the direction that tolerates the
    most relative twist.
    """
    n_a, n_b = len(inner_ids), len(outer_ids)
    tris = []
    i = j = 0
    while i < n_a or j < n_b:
        if outer_first:
            advance_inner = j >= n_b or (i < n_a and (i + 1) * n_b < (j + 1) * n_a)
        else:
            advance_inner = j >= n_b or (i < n_a and (i + 1) * n_b <= (j + 1) * n_a)
        if advance_inner:
            tris.append((inner_ids[i % n_a], outer_ids[j % n_b], inner_ids[(i + 1) % n_a]))
            i += 1
        else:
            tris.append((inner_ids[i % n_a], outer_ids[j % n_b], outer_ids[(j + 1) % n_b]))
            j += 1
    return tris


def triangulate_reference(geom: MotorGeometry, h: float) -> PlanarMesh:
    """Structured polar triangulation of the reference annulus."""
    if h <= 0:
        raise MeshError("h must be positive")
    if h >= (geom.r1 - geom.r0) / 2.0:
        raise MeshError(
            f"h={h} too coarse: need h < (r1 - r0)/2 = {(geom.r1 - geom.r0) / 2.0}"
        )
    radii, counts = _circle_radii(geom, h)

    nodes = []
    circle_ids = []
    offset = 0
    for r, n in zip(radii, counts):
        ang = 2.0 * math.pi * np.arange(n) / n
        nodes.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        circle_ids.append(np.arange(offset, offset + n, dtype=np.int32))
        offset += n
    nodes = np.vstack(nodes)

    # with alpha > 0 the inner gap circles lead the rotation, which the
    # outer-first diagonal accommodates (mirror image for alpha < 0)
    gap_outer_first = geom.alpha > 0.0 and not geom.rigid
    tris = []
    for (ra, a), (rb, b) in zip(
        zip(radii[:-1], circle_ids[:-1]), zip(radii[1:], circle_ids[1:])
    ):
        in_gap = ra >= geom.r1 - 1e-12 * geom.R and rb <= geom.r2 + 1e-12 * geom.R
        tris.extend(_merge_band(a, b, outer_first=gap_outer_first and in_gap))
    triangles = np.array(tris, dtype=np.int32)

    p = nodes[triangles]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )
    if np.any(areas <= 0):
        raise MeshError("generator produced a non-positive triangle")

    bary = p.mean(axis=1)
    region = region_code_of(geom, bary)

    edges, tags = _planar_boundary(geom, nodes, triangles)
    return PlanarMesh(nodes, triangles, region, edges, tags)


def _planar_boundary(geom, nodes, triangles):
    count: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    boundary = [e for e, c in count.items() if c == 1]
    bad = [e for e, c in count.items() if c > 2]
    if bad:
        raise MeshError(f"non-conforming planar mesh: {len(bad)} over-shared edges")
    edges = np.array(sorted(boundary), dtype=np.int32)
    r = np.hypot(*nodes[edges[:, 0]].T)
    mid = 0.5 * (geom.r0 + geom.R)
    tags = np.where(r < mid, BOUNDARY_INNER, BOUNDARY_OUTER).astype(np.int32)
    return edges, tags


# prism split by sorted planar ids: diagonals run from the bottom node of
# the smaller column to the top node of the larger, so shared quad faces
# of neighbouring prisms receive the same diagonal
_PRISM_TETS = ((0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3))


def extrude_twist(planar: PlanarMesh, geom: MotorGeometry, n_slices: int) -> SpaceTimeMesh:
    """Extrude the planar mesh into a twisted tetrahedral space-time mesh."""
    if n_slices < 1:
        raise MeshError("n_slices must be at least 1")
    n_p = planar.n_nodes
    T = geom.T_final

    slabs = []
    for k in range(n_slices + 1):
        t_k = T * k / n_slices
        pos = deformation(geom, t_k, planar.nodes)
        slabs.append(np.column_stack([pos, np.full(n_p, t_k)]))
    nodes = np.vstack(slabs)

    order = np.argsort(planar.triangles, axis=1)
    tri_sorted = np.take_along_axis(planar.triangles, order, axis=1)
    # sorting by node id may reverse the triangle orientation; an odd
    # permutation needs one vertex swap per tet to keep volumes positive
    inversions = (
        (order[:, 0] > order[:, 1]).astype(np.int32)
        + (order[:, 0] > order[:, 2]).astype(np.int32)
        + (order[:, 1] > order[:, 2]).astype(np.int32)
    )
    odd = inversions % 2 == 1

    n_tri = planar.n_triangles
    tets = np.empty((3 * n_tri * n_slices, 4), dtype=np.int32)
    region = np.empty(3 * n_tri * n_slices, dtype=np.int64)
    row = 0
    for k in range(n_slices):
        bot = tri_sorted + k * n_p
        top = tri_sorted + (k + 1) * n_p
        cols = np.hstack([bot, top])  # (m, 6): b0 b1 b2 t0 t1 t2
        for pattern in _PRISM_TETS:
            block = cols[:, pattern].copy()
            block[odd, 2], block[odd, 3] = (
                block[odd, 3].copy(),
                block[odd, 2].copy(),
            )
            tets[row : row + n_tri] = block
            region[row : row + n_tri] = planar.region
            row += n_tri

    vols = _signed_volumes(nodes, tets)
    if np.any(vols <= 0.0):
        bad = int(np.argmin(vols))
        slab = bad // (3 * n_tri)
        tri = bad % n_tri
        raise MeshError(
            f"inverted tet in slab {slab}, planar triangle {tri} "
            f"(signed volume {vols[bad]:.3e}); increase n_slices to reduce "
            f"the per-slab twist"
        )

    slice_of_node = np.repeat(np.arange(n_slices + 1, dtype=np.int32), n_p)
    planar_node_of = np.tile(np.arange(n_p, dtype=np.int32), n_slices + 1)
    return SpaceTimeMesh(
        nodes=nodes,
        tets=tets,
        region=region,
        n_slices=n_slices,
        slice_of_node=slice_of_node,
        planar_node_of=planar_node_of,
        planar=planar,
    )


def _signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = nodes[tets]
    d = p[:, 1:] - p[:, :1]
    return np.linalg.det(d) / 6.0


def geometry_cache(mesh: SpaceTimeMesh):
    """(volumes, spatial gradients (m,4,2), temporal gradients (m,4)) of P1."""
    if "geom" not in mesh._cache:
        p = mesh.nodes[mesh.tets]
        d = p[:, 1:] - p[:, :1]  # (m, 3, 3) rows are edge vectors
        vols = np.linalg.det(d) / 6.0
        inv = np.linalg.inv(d)  # rows of inv^T are gradients of lambda_1..3
        grads = np.empty((mesh.n_tets, 4, 3))
        grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        mesh._cache["geom"] = (vols, np.ascontiguousarray(grads[:, :, :2]), np.ascontiguousarray(grads[:, :, 2]))
    return mesh._cache["geom"]


def conducting_planar_nodes(planar: PlanarMesh, conducting_kinds) -> np.ndarray:
    """Planar nodes adjacent to at least one conducting triangle."""
    kinds = kind_of_code(planar.region)
    mask = np.isin(kinds, list(conducting_kinds))
    nodes = np.unique(planar.triangles[mask])
    return nodes.astype(np.int32)


def pair_periodic(
    mesh: SpaceTimeMesh, geom: MotorGeometry, conducting_kinds=None
) -> np.ndarray:
    """Pair conducting top-slice nodes with the bottom nodes at the same
    spatial position; requires alpha*T to be a rotor mesh symmetry."""
    if mesh.planar is None:
        raise MeshError("periodic pairing needs the extruded slice structure")
    if conducting_kinds is None:
        conducting_kinds = (RegionKind.MAGNET,)
    cond = conducting_planar_nodes(mesh.planar, conducting_kinds)
    if cond.size == 0:
        pairs = np.empty((0, 2), dtype=np.int32)
        mesh.periodic_pairs = pairs
        return pairs

    n_p = mesh.planar.n_nodes
    top_ids = mesh.n_slices * n_p + cond
    bottom_ids = cond

    from scipy.spatial import cKDTree

    tree = cKDTree(mesh.nodes[bottom_ids, :2])
    tol = 1e-10 * geom.R
    dist, idx = tree.query(mesh.nodes[top_ids, :2])
    if np.any(dist > tol):
        bad = int(np.argmax(dist))
        raise MeshError(
            f"periodic pairing failed: top node {top_ids[bad]} has no bottom "
            f"partner within {tol:.3e} (closest {dist[bad]:.3e}); "
            f"alpha*T_final must be a multiple of the rotor symmetry angle"
        )
    partner = bottom_ids[idx]
    if len(np.unique(partner)) != len(partner):
        raise MeshError("periodic pairing is not a bijection")
    pairs = np.column_stack([top_ids, partner]).astype(np.int32)
    mesh.periodic_pairs = pairs
    return pairs


def boundary_tag(mesh: SpaceTimeMesh):
    """Boundary facets and their tags (lateral / bottom / top)."""
    if "boundary" in mesh._cache:
        return mesh._cache["boundary"]
    faces: dict[tuple[int, int, int], int] = {}
    local = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    for tet in mesh.tets:
        for loc in local:
            key = tuple(sorted((tet[loc[0]], tet[loc[1]], tet[loc[2]])))
            faces[key] = faces.get(key, 0) + 1
    over = sum(1 for c in faces.values() if c > 2)
    if over:
        raise MeshError(f"non-conforming mesh: {over} over-shared facets")
    boundary = np.array(sorted(f for f, c in faces.items() if c == 1), dtype=np.int32)

    t = mesh.nodes[:, 2]
    T = mesh.t_final
    tol = 1e-12 * max(T, 1.0)
    ft = t[boundary]
    tags = np.full(boundary.shape[0], FACET_LATERAL, dtype=np.int32)
    tags[np.all(np.abs(ft - 0.0) <= tol, axis=1)] = FACET_BOTTOM
    tags[np.all(np.abs(ft - T) <= tol, axis=1)] = FACET_TOP
    result = (boundary, tags)
    mesh._cache["boundary"] = result
    return result


def validate(mesh: SpaceTimeMesh) -> MeshQualityReport:
    """Signed volumes, a shape quality measure, and conformity."""
    vols = _signed_volumes(mesh.nodes, mesh.tets)
    inverted = int(np.sum(vols <= 0.0))
    p = mesh.nodes[mesh.tets]
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    lmax = np.zeros(mesh.n_tets)
    for a, b in edges:
        lmax = np.maximum(lmax, np.linalg.norm(p[:, a] - p[:, b], axis=1))
    # normalised so a regular tetrahedron scores 1
    quality = 6.0 * math.sqrt(2.0) * np.abs(vols) / lmax**3
    boundary_tag(mesh)  # raises on non-conformity
    return MeshQualityReport(
        min_volume=float(np.min(vols)),
        max_volume=float(np.max(vols)),
        min_quality=float(np.min(quality)),
        inverted_count=inverted,
    )
