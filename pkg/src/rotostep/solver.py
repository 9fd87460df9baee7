"""Sparse linear solvers and the damped Newton driver.

Direct solves go through SuperLU; the iterative path is restarted GMRES
with modified Gram-Schmidt and Givens rotations, right-preconditioned by
Jacobi or a no-fill ILU(0) factorization that keeps the operator's
sparsity pattern exactly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DofMap, LinearSystem, SolutionField
from .materials import NU_IRON_LINEAR


class SolverError(RuntimeError):
    pass


class DampingFloorError(SolverError):
    """Newton line search hit the minimum step without decreasing the residual."""


@dataclass
class SolverConfig:
    method: str = "direct"  # "direct" | "gmres"
    restart: int = 50
    max_iterations: int = 250
    rtol: float = 1e-8
    preconditioner: str = "none"  # "none" | "jacobi" | "ilu0"
    budget_mode: bool = False

    def __post_init__(self):
        if self.method not in ("direct", "gmres"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("none", "jacobi", "ilu0"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.restart > self.max_iterations:
            raise ValueError("restart must not exceed max_iterations")
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")


@dataclass
class NewtonConfig:
    max_newton: int = 100
    abs_tol: float = 0.0
    rel_tol: float = 1e-8
    min_step: float = 2.0**-10


@dataclass
class SolveReport:
    method: str
    converged: bool
    iterations: int
    residual_norm: float
    history: list = field(default_factory=list)
    times: list = field(default_factory=list)
    wall_time: float = 0.0
    reason: str = ""


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual_norm: float
    history: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    wall_time: float = 0.0
    reason: str = ""


class ILU0:
    """No-fill incomplete LU on the operator's own sparsity pattern."""

    def __init__(self, lower: sp.csr_matrix, upper: sp.csr_matrix):
        self.lower = lower
        self.upper = upper

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = _solve_triangular(self.lower, b, lower=True, unit_diagonal=True)
        return _solve_triangular(self.upper, y, lower=False, unit_diagonal=False)


def _solve_triangular(A: sp.csr_matrix, b, lower, unit_diagonal):
    from . import kernels

    if kernels.triangular_solves is not None:
        lower_solve, upper_solve = kernels.triangular_solves
        x = np.array(b, dtype=float)
        if lower:
            lower_solve(A.indptr, A.indices, A.data, x)
        else:
            upper_solve(A.indptr, A.indices, A.data, x)
        return x
    return spla.spsolve_triangular(A, b, lower=lower, unit_diagonal=unit_diagonal)


def ilu0_factor(operator: sp.spmatrix) -> ILU0:
    """ILU(0): exact LU restricted to the sparsity pattern of the operator."""
    A = sp.csr_matrix(operator, copy=True)
    A.sort_indices()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i] : indptr[i + 1]]
        pos = np.searchsorted(row, i)
        if pos == row.size or row[pos] != i:
            raise SolverError(f"ILU(0) needs a structurally nonzero diagonal (row {i})")
        diag_pos[i] = indptr[i] + pos

    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        row_cols = indices[start:end]
        dpos = diag_pos[i] - start
        for p in range(dpos):
            k = row_cols[p]
            piv = data[diag_pos[k]]
            if piv == 0.0:
                raise SolverError(f"ILU(0) zero pivot at row {k}")
            lik = data[start + p] / piv
            data[start + p] = lik
            ks, ke = diag_pos[k] + 1, indptr[k + 1]
            if ks == ke:
                continue
            kcols = indices[ks:ke]
            where = np.searchsorted(row_cols, kcols)
            where = np.minimum(where, row_cols.size - 1)
            hit = row_cols[where] == kcols
            data[start + where[hit]] -= lik * data[ks:ke][hit]

    lower = sp.tril(A, k=-1, format="csr")
    lower.setdiag(1.0)
    lower = lower.tocsr()
    upper = sp.triu(A, k=0, format="csr")
    lower.sort_indices()
    upper.sort_indices()
    return ILU0(lower, upper)


def _make_preconditioner(A: sp.csr_matrix, name: str):
    if name == "none":
        return lambda v: v
    if name == "jacobi":
        d = A.diagonal()
        if np.any(d == 0.0):
            raise SolverError("Jacobi preconditioner needs a nonzero diagonal")
        inv = 1.0 / d
        return lambda v: inv * v
    if name == "ilu0":
        fac = ilu0_factor(A)
        return fac.solve
    raise SolverError(f"unknown preconditioner {name!r}")


def _gmres(A, b, precond, rtol, restart, maxiter):
    n = b.shape[0]
    x = np.zeros(n)
    bnorm = float(np.linalg.norm(b))
    history: list[float] = []
    times: list[float] = []
    t0 = time.perf_counter()
    if bnorm == 0.0:
        return x, history, times, True

    target = rtol * bnorm
    total = 0
    while total < maxiter:
        r = b - A @ x
        beta = float(np.linalg.norm(r))
        if beta <= target:
            return x, history, times, True
        m = min(restart, maxiter - total)
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        lucky = False
        for j in range(m):
            w = A @ precond(V[j])
            for i in range(j + 1):
                H[i, j] = float(V[i] @ w)
                w -= H[i, j] * V[i]
            hnext = float(np.linalg.norm(w))
            if not np.isfinite(hnext):
                raise SolverError(
                    f"GMRES breakdown: non-finite Arnoldi norm at iteration "
                    f"{total + 1}; history={history}"
                )
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom == 0.0:
                raise SolverError(
                    f"GMRES breakdown: zero Hessenberg column at iteration "
                    f"{total + 1}; history={history}"
                )
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k_used = j + 1
            history.append(abs(float(g[j + 1])))
            times.append(time.perf_counter() - t0)
            if hnext == 0.0:
                lucky = True
                break
            if history[-1] <= target or total >= maxiter:
                break
            V[j + 1] = w / hnext

        y = np.zeros(k_used)
        for i in range(k_used - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1 : k_used] @ y[i + 1 : k_used]) / H[i, i]
        x = x + precond(V[:k_used].T @ y)
        if lucky or (history and history[-1] <= target):
            return x, history, times, True
    return x, history, times, False


def solve_linear(system: LinearSystem, config: SolverConfig | None = None):
    """Solve the assembled system; the report flags non-convergence."""
    if config is None:
        config = SolverConfig()
    A = system.matrix.tocsr()
    b = system.rhs
    if A.shape[0] < 1:
        raise SolverError("empty system")
    t0 = time.perf_counter()

    if config.method == "direct":
        try:
            lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct factorization failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite values")
        bnorm = float(np.linalg.norm(b))
        res = float(np.linalg.norm(b - A @ x)) / (bnorm if bnorm > 0 else 1.0)
        wall = time.perf_counter() - t0
        return x, SolveReport(
            method="direct", converged=True, iterations=1,
            residual_norm=res, history=[res], times=[wall], wall_time=wall,
        )

    precond = _make_preconditioner(A, config.preconditioner)
    x, history, times, converged = _gmres(
        A, b, precond, config.rtol, config.restart, config.max_iterations
    )
    wall = time.perf_counter() - t0
    bnorm = float(np.linalg.norm(b))
    res = float(np.linalg.norm(b - A @ x)) / (bnorm if bnorm > 0 else 1.0)
    report = SolveReport(
        method="gmres", converged=converged, iterations=len(history),
        residual_norm=res, history=history, times=times, wall_time=wall,
        reason="" if converged else "iteration budget exhausted",
    )
    return x, report


def newton_solve(
    problem,
    config: NewtonConfig | None = None,
    x0: np.ndarray | None = None,
    linear_config: SolverConfig | None = None,
):
    """Damped Newton: halve the step until the residual norm decreases."""
    if config is None:
        config = NewtonConfig()
    if linear_config is None:
        linear_config = SolverConfig()
    if x0 is None:
        raise ValueError("newton_solve needs an initial guess")
    t0 = time.perf_counter()

    x = np.array(x0, dtype=float)
    r = problem.residual(x)
    rnorm = float(np.linalg.norm(r))
    r0norm = rnorm
    history = [rnorm]
    damping: list[float] = []
    tol = max(config.abs_tol, config.rel_tol * r0norm)

    for it in range(config.max_newton):
        if rnorm <= tol:
            return x, NewtonReport(
                converged=True, iterations=it, residual_norm=rnorm,
                history=history, damping=damping,
                wall_time=time.perf_counter() - t0, reason="converged",
            )
        J = problem.jacobian(x)
        delta, _ = solve_linear(LinearSystem(J, -r), linear_config)
        step = 1.0
        while True:
            x_try = x + step * delta
            r_try = problem.residual(x_try)
            rn_try = float(np.linalg.norm(r_try))
            if np.isfinite(rn_try) and rn_try < rnorm:
                break
            step *= 0.5
            if step < config.min_step:
                raise DampingFloorError(
                    f"Newton damping reached the floor 2^-10 at iteration "
                    f"{it + 1} (residual {rnorm:.3e})"
                )
        x, r, rnorm = x_try, r_try, rn_try
        history.append(rnorm)
        damping.append(step)

    converged = rnorm <= tol
    return x, NewtonReport(
        converged=converged, iterations=config.max_newton, residual_norm=rnorm,
        history=history, damping=damping, wall_time=time.perf_counter() - t0,
        reason="converged" if converged else "max_iterations",
    )


def linear_bootstrap(
    mesh,
    geom,
    materials,
    dofmap: DofMap,
    source=None,
    node_source=None,
    config: SolverConfig | None = None,
    nu_iron: float = NU_IRON_LINEAR,
):
    """Solve with iron linearised at nu_1; the Newton initial guess."""
    from .assembly import assemble

    linear = materials.linearized(nu_iron)
    system = assemble(
        mesh, linear, dofmap, geom=geom, source=source, node_source=node_source
    )
    x, report = solve_linear(system, config)
    return SolutionField.from_free(mesh, dofmap, x), report
