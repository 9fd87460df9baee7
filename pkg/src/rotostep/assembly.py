"""Space-time P1 assembly: constraints, operators, nonlinear residuals.

The bilinear form splits into a stiffness part K (reluctivity-weighted
spatial gradients) and a convection part C (sigma times the total time
derivative tested against the basis).  Constraints are applied by
elimination; periodic conditions alias top-slice conducting dofs onto
their bottom partners, so the periodicity holds exactly by construction.

Element work runs through the kernels package in fixed-size batches; the
assembled matrices are bit-identical for any worker count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .geometry import MotorGeometry, RegionKind, kind_of_code, index_of_code, velocity
from .materials import MaterialTable, SourceModel
from .mesh import MeshError, SpaceTimeMesh, conducting_planar_nodes, geometry_cache, pair_periodic

MODE_INITIAL = "initial"
MODE_PERIODIC = "periodic"
MODE_MAGNETOSTATIC = "magnetostatic"
MODE_NONE = "none"


class AssemblyError(ValueError):
    pass


@dataclass
class DofMap:
    """Node-to-dof map with eliminated and aliased nodes.

    ``dof_of_node`` is -1 for constrained nodes; aliased nodes carry the
    dof of their master directly.
    """

    mode: str
    dof_of_node: np.ndarray  # (N,) int32
    constrained_value: np.ndarray  # (N,) float
    alias_master: np.ndarray  # (N,) int32, -1 if not aliased
    owner_node: np.ndarray  # (n_free,) int32: representative node per dof
    n_free: int

    @property
    def n_nodes(self) -> int:
        return self.dof_of_node.shape[0]

    @property
    def n_aliases(self) -> int:
        return int(np.sum(self.alias_master >= 0))

    def free_values(self, nodal: np.ndarray) -> np.ndarray:
        return nodal[self.owner_node]

    def nodal_values(self, x: np.ndarray) -> np.ndarray:
        out = self.constrained_value.copy()
        free = self.dof_of_node >= 0
        out[free] = x[self.dof_of_node[free]]
        return out


def apply_constraints(
    mode: str,
    mesh: SpaceTimeMesh,
    geom: MotorGeometry,
    materials: MaterialTable | None = None,
) -> DofMap:
    """Lateral Dirichlet everywhere; temporal constraints per mode."""
    if mode not in (MODE_INITIAL, MODE_PERIODIC, MODE_MAGNETOSTATIC, MODE_NONE):
        raise AssemblyError(f"unknown constraint mode {mode!r}")
    n = mesh.n_nodes
    r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    tol = 1e-9 * geom.R
    constrained = (np.abs(r - geom.r0) <= tol) | (np.abs(r - geom.R) <= tol)
    if mode == MODE_NONE:
        constrained[:] = False
    alias = np.full(n, -1, dtype=np.int32)

    conducting_kinds = _conducting_kinds(materials)

    if mode == MODE_INITIAL:
        if mesh.planar is None:
            raise AssemblyError("initial mode needs the extruded slice structure")
        cond = conducting_planar_nodes(mesh.planar, conducting_kinds)
        bottom = cond  # slice-0 node ids equal planar ids
        constrained[bottom] = True
    elif mode == MODE_PERIODIC:
        pairs = mesh.periodic_pairs
        if pairs is None:
            pairs = pair_periodic(mesh, geom, conducting_kinds)
        for top, bottom in pairs:
            if constrained[top] != constrained[bottom]:
                constrained[top] = constrained[bottom] = True
            elif not constrained[top]:
                alias[top] = bottom

    dof_of_node = np.full(n, -1, dtype=np.int32)
    free_mask = ~constrained & (alias < 0)
    owner = np.nonzero(free_mask)[0].astype(np.int32)
    dof_of_node[owner] = np.arange(owner.size, dtype=np.int32)
    aliased = np.nonzero(alias >= 0)[0]
    dof_of_node[aliased] = dof_of_node[alias[aliased]]
    if np.any(dof_of_node[aliased] < 0):
        raise AssemblyError("alias points at a constrained master")

    return DofMap(
        mode=mode,
        dof_of_node=dof_of_node,
        constrained_value=np.zeros(n),
        alias_master=alias,
        owner_node=owner,
        n_free=int(owner.size),
    )


def _conducting_kinds(materials: MaterialTable | None):
    if materials is None:
        return (RegionKind.MAGNET,)
    return tuple(k for k in RegionKind if materials.is_conducting(k))


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap | None = None

    @property
    def n(self) -> int:
        return self.rhs.shape[0]


@dataclass
class SolutionField:
    """Nodal coefficients over the whole mesh, constraints filled in."""

    mesh: SpaceTimeMesh
    values: np.ndarray

    @staticmethod
    def from_free(mesh: SpaceTimeMesh, dofmap: DofMap, x: np.ndarray) -> "SolutionField":
        return SolutionField(mesh, dofmap.nodal_values(x))

    @staticmethod
    def zero(mesh: SpaceTimeMesh) -> "SolutionField":
        return SolutionField(mesh, np.zeros(mesh.n_nodes))

    def spatial_gradients(self) -> np.ndarray:
        """Per-element constant gradient (d/dy1, d/dy2)."""
        _, gs, _ = geometry_cache(self.mesh)
        return np.einsum("mj,mjc->mc", self.values[self.mesh.tets], gs)

    def time_derivatives(self) -> np.ndarray:
        _, _, gt = geometry_cache(self.mesh)
        return np.einsum("mj,mj->m", self.values[self.mesh.tets], gt)

    def slice_values(self, k: int) -> np.ndarray:
        return self.values[self.mesh.slice_nodes(k)]


def element_matrices(tet_coords, sigma, nu_tensor, v_at_quadrature):
    """Reference 4x4 element matrices for a single tetrahedron.

    K integrates nu grad_y u . grad_y z exactly; C integrates
    sigma (du/dt) z with the P1 interpolant of the vertex velocities.
    """
    p = np.asarray(tet_coords, dtype=float)
    d = p[1:] - p[0]
    det = np.linalg.det(d)
    vol = det / 6.0
    if vol <= 0.0:
        raise AssemblyError(f"degenerate or inverted tetrahedron (volume {vol:.3e})")
    inv = np.linalg.inv(d)
    grads = np.empty((4, 3))
    grads[1:] = inv.T
    grads[0] = -grads[1:].sum(axis=0)
    gs = grads[:, :2]
    gt = grads[:, 2]

    T = np.asarray(nu_tensor, dtype=float)
    K = vol * gs @ T @ gs.T

    v = np.asarray(v_at_quadrature, dtype=float)
    vsum = v.sum(axis=0)
    C = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            C[i, j] = sigma * (
                vol / 4.0 * gt[j] + vol / 20.0 * gs[j] @ (vsum + v[i])
            )
    return K, C


def velocity_quadrature(tet_coords, geom: MotorGeometry) -> np.ndarray:
    """Velocity at the four vertices (the vertex quadrature for C)."""
    p = np.asarray(tet_coords, dtype=float)
    out = np.empty((4, 2))
    for i in range(4):
        out[i] = velocity(geom, float(p[i, 2]), p[i, :2])
    return out


def element_sigmas(mesh: SpaceTimeMesh, materials: MaterialTable) -> np.ndarray:
    kinds = kind_of_code(mesh.region)
    sig = np.zeros(mesh.n_tets)
    for kind in RegionKind:
        s = materials.sigma_of(kind)
        if s != 0.0:
            sig[kinds == kind] = s
    return sig


def nu_elements(
    mesh: SpaceTimeMesh, materials: MaterialTable, field: SolutionField | None = None
) -> np.ndarray:
    """Per-element chord reluctivity nu(|grad u|) (nu(0) without a field)."""
    kinds = kind_of_code(mesh.region)
    if field is not None:
        g = field.spatial_gradients()
        b = np.hypot(g[:, 0], g[:, 1])
    else:
        b = np.zeros(mesh.n_tets)
    out = np.empty(mesh.n_tets)
    for kind in RegionKind:
        mask = kinds == kind
        if not np.any(mask):
            continue
        model = materials.model_of(kind)
        if model.is_linear:
            out[mask] = model.nu(0.0)
        else:
            out[mask] = model.nu(b[mask])
    return out


def tangent_elements(
    mesh: SpaceTimeMesh, materials: MaterialTable, field: SolutionField
):
    """Per-element symmetric tangent tensors (t00, t01, t11)."""
    kinds = kind_of_code(mesh.region)
    g = field.spatial_gradients()
    b = np.hypot(g[:, 0], g[:, 1])
    t00 = np.empty(mesh.n_tets)
    t01 = np.zeros(mesh.n_tets)
    t11 = np.empty(mesh.n_tets)
    for kind in RegionKind:
        mask = kinds == kind
        if not np.any(mask):
            continue
        model = materials.model_of(kind)
        if model.is_linear:
            val = float(model.nu(0.0))
            t00[mask] = val
            t11[mask] = val
            continue
        bm = b[mask]
        nu = model.nu(bm)
        small = bm < 1e-12
        ratio = np.where(small, 0.0, model.dnu(bm) / np.where(small, 1.0, bm))
        gx = g[mask, 0]
        gy = g[mask, 1]
        t00[mask] = nu + ratio * gx * gx
        t01[mask] = ratio * gx * gy
        t11[mask] = nu + ratio * gy * gy
    return t00, t01, t11


def velocity_at_nodes(mesh: SpaceTimeMesh, geom: MotorGeometry) -> np.ndarray:
    return velocity(geom, 0.0, mesh.nodes[:, :2])


def source_vertex_data(
    mesh: SpaceTimeMesh,
    materials: MaterialTable,
    geom: MotorGeometry | None,
    source: SourceModel | None,
    node_source: np.ndarray | None,
):
    """Vertex source values per element: scalar j and the field nu*M_perp."""
    m = mesh.n_tets
    jvert = np.zeros((m, 4))
    wvert = np.zeros((m, 4, 2))
    tvert = mesh.nodes[mesh.tets][:, :, 2]

    if node_source is not None:
        jvert += node_source[mesh.tets]

    if source is not None:
        kinds = kind_of_code(mesh.region)
        idx = index_of_code(mesh.region)
        coil_mask = kinds == RegionKind.COIL
        for k in np.unique(idx[coil_mask]):
            mask = coil_mask & (idx == k)
            jvert[mask] += source.current_density(int(k), tvert[mask])

        magnet_mask = kinds == RegionKind.MAGNET
        if np.any(magnet_mask):
            nu_mag = float(materials.model_of(RegionKind.MAGNET).nu(0.0))
            alpha = geom.alpha if geom is not None else 0.0
            for k in np.unique(idx[magnet_mask]):
                mask = magnet_mask & (idx == k)
                dx, dy = source.magnet_dirs[int(k)]
                mperp = (-source.remanence * dy, source.remanence * dx)
                theta = alpha * tvert[mask]
                c, s = np.cos(theta), np.sin(theta)
                wvert[mask, :, 0] = nu_mag * (c * mperp[0] - s * mperp[1])
                wvert[mask, :, 1] = nu_mag * (s * mperp[0] + c * mperp[1])
    return jvert, wvert


def _scatter_matrix(mesh, dofmap, vals, rhs):
    """Fold (m, 16) element values into a csr matrix over free dofs."""
    dofs = dofmap.dof_of_node[mesh.tets]  # (m, 4)
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    flat = vals.ravel()

    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix(
        (flat[keep], (rows[keep], cols[keep])),
        shape=(dofmap.n_free, dofmap.n_free),
    ).tocsr()

    if np.any(dofmap.constrained_value != 0.0):
        lift = (rows >= 0) & (cols < 0)
        if np.any(lift):
            cval = dofmap.constrained_value[np.tile(mesh.tets, (1, 4)).ravel()[lift]]
            np.add.at(rhs, rows[lift], -flat[lift] * cval)
    return mat


def assemble_parts(
    mesh: SpaceTimeMesh,
    materials: MaterialTable,
    dofmap: DofMap,
    geom: MotorGeometry | None = None,
    source: SourceModel | None = None,
    node_source: np.ndarray | None = None,
    nu_e: np.ndarray | None = None,
    tensors=None,
    workers: int | None = None,
):
    """Assemble (K, C, rhs) over the free dofs.

    ``nu_e`` overrides the scalar reluctivity per element (chord matrix);
    ``tensors`` supplies full 2x2 tangent tensors (Newton matrix).
    """
    if mesh.tets.max(initial=-1) >= dofmap.n_nodes:
        raise AssemblyError("mesh and dof map sizes do not match")
    vols, gs, gt = geometry_cache(mesh)
    sigma = element_sigmas(mesh, materials)
    if tensors is not None:
        t00, t01, t11 = tensors
    else:
        scalar = nu_e if nu_e is not None else nu_elements(mesh, materials)
        t00 = np.ascontiguousarray(scalar, dtype=float)
        t01 = np.zeros(mesh.n_tets)
        t11 = t00

    if geom is not None:
        vnodes = velocity_at_nodes(mesh, geom)
    else:
        vnodes = np.zeros((mesh.n_nodes, 2))
    vvert = np.ascontiguousarray(vnodes[mesh.tets])

    kvals, cvals = kernels.element_values(
        vols, gs, gt, sigma, t00, t01, t11, vvert, workers=workers
    )
    if not (np.all(np.isfinite(kvals)) and np.all(np.isfinite(cvals))):
        raise AssemblyError("non-finite element coefficients")

    rhs = np.zeros(dofmap.n_free)
    K = _scatter_matrix(mesh, dofmap, kvals, rhs)
    C = _scatter_matrix(mesh, dofmap, cvals, rhs)

    jvert, wvert = source_vertex_data(mesh, materials, geom, source, node_source)
    if np.any(jvert) or np.any(wvert):
        fvals = kernels.rhs_values(vols, gs, jvert, wvert, workers=workers)
        dofs = dofmap.dof_of_node[mesh.tets].ravel()
        keep = dofs >= 0
        np.add.at(rhs, dofs[keep], fvals.ravel()[keep])
    return K, C, rhs


def assemble(
    mesh: SpaceTimeMesh,
    materials: MaterialTable,
    dofmap: DofMap,
    geom: MotorGeometry | None = None,
    source: SourceModel | None = None,
    node_source: np.ndarray | None = None,
    nu_e: np.ndarray | None = None,
    workers: int | None = None,
) -> LinearSystem:
    K, C, rhs = assemble_parts(
        mesh, materials, dofmap, geom=geom, source=source,
        node_source=node_source, nu_e=nu_e, workers=workers,
    )
    return LinearSystem((K + C).tocsr(), rhs, dofmap)


def residual(
    field: SolutionField,
    mesh: SpaceTimeMesh,
    materials: MaterialTable,
    dofmap: DofMap,
    geom: MotorGeometry | None = None,
    source: SourceModel | None = None,
    node_source: np.ndarray | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Nonlinear residual over free dofs; zero characterises the solution.

    A residual that overflows (saturation model far outside its range) is
    returned as non-finite so the Newton damping can reject the step.
    """
    if not np.all(np.isfinite(field.values)):
        raise AssemblyError("non-finite solution coefficients")
    vols, gs, gt = geometry_cache(mesh)
    sigma = element_sigmas(mesh, materials)
    nu_e = nu_elements(mesh, materials, field)
    if geom is not None:
        vnodes = velocity_at_nodes(mesh, geom)
    else:
        vnodes = np.zeros((mesh.n_nodes, 2))
    vvert = np.ascontiguousarray(vnodes[mesh.tets])
    uvert = np.ascontiguousarray(field.values[mesh.tets])
    jvert, wvert = source_vertex_data(mesh, materials, geom, source, node_source)

    rvals = kernels.residual_values(
        vols, gs, gt, sigma, nu_e, vvert, uvert, jvert, wvert, workers=workers
    )
    out = np.zeros(dofmap.n_free)
    dofs = dofmap.dof_of_node[mesh.tets].ravel()
    keep = dofs >= 0
    np.add.at(out, dofs[keep], rvals.ravel()[keep])
    return out


def jacobian(
    field: SolutionField,
    mesh: SpaceTimeMesh,
    materials: MaterialTable,
    dofmap: DofMap,
    geom: MotorGeometry | None = None,
    workers: int | None = None,
) -> LinearSystem:
    """Newton matrix: tangent reluctivity tensors plus the convection part."""
    tensors = tangent_elements(mesh, materials, field)
    K, C, rhs = assemble_parts(
        mesh, materials, dofmap, geom=geom, tensors=tensors, workers=workers
    )
    return LinearSystem((K + C).tocsr(), rhs, dofmap)


@dataclass
class EddyCurrentProblem:
    """Residual/Jacobian provider for the damped Newton driver."""

    mesh: SpaceTimeMesh
    geom: MotorGeometry
    materials: MaterialTable
    dofmap: DofMap
    source: SourceModel | None = None
    node_source: np.ndarray | None = None
    workers: int | None = None

    def residual(self, x: np.ndarray) -> np.ndarray:
        f = SolutionField.from_free(self.mesh, self.dofmap, x)
        return residual(
            f, self.mesh, self.materials, self.dofmap, geom=self.geom,
            source=self.source, node_source=self.node_source, workers=self.workers,
        )

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        f = SolutionField.from_free(self.mesh, self.dofmap, x)
        return jacobian(
            f, self.mesh, self.materials, self.dofmap, geom=self.geom,
            workers=self.workers,
        ).matrix
