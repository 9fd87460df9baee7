"""Hot element kernels: compiled extension with a pure-numpy fallback.

The backend is picked at import time; set ROTOSTEP_KERNELS=python or
=compiled to force one.  Work is split into fixed-size element batches
that are independent of the worker count, so assembled values are
bit-identical no matter how many threads run (ROTOSTEP_WORKERS caps
them).
"""
from __future__ import annotations

import importlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import pure

BATCH = 8192

_requested = os.environ.get("ROTOSTEP_KERNELS", "auto").lower()
_fast = None
if _requested in ("auto", "compiled"):
    try:
        _fast = importlib.import_module("._fast", __name__)
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "ROTOSTEP_KERNELS=compiled but the extension is not built; "
                "run pip install -e . --no-build-isolation"
            )

_impl = _fast if _fast is not None else pure

# (forward, backward) CSR substitution, compiled only; None means use scipy
triangular_solves = (
    (_fast.lower_unit_solve, _fast.upper_solve) if _fast is not None else None
)


def backend_name() -> str:
    return "compiled" if _impl is not pure else "python"


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("ROTOSTEP_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _run(fn, m: int, args, workers: int | None) -> None:
    n_workers = worker_count(workers)
    spans = [(lo, min(lo + BATCH, m)) for lo in range(0, m, BATCH)]
    if n_workers == 1 or len(spans) == 1:
        for lo, hi in spans:
            fn(lo, hi, *args)
        return
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(fn, lo, hi, *args) for lo, hi in spans]
        for fut in futures:
            fut.result()


def element_values(vols, gs, gt, sigma, t00, t01, t11, vvert, workers=None):
    """4x4 stiffness and convection element matrices, row-major flattened."""
    m = vols.shape[0]
    kvals = np.empty((m, 16))
    cvals = np.empty((m, 16))
    _run(
        _impl.element_values,
        m,
        (vols, gs, gt, sigma, t00, t01, t11, vvert, kvals, cvals),
        workers,
    )
    return kvals, cvals


def rhs_values(vols, gs, jvert, wvert, workers=None):
    """Element load vectors for nodal sources j and vertex fields w = nu*M_perp."""
    m = vols.shape[0]
    fvals = np.empty((m, 4))
    _run(_impl.rhs_values, m, (vols, gs, jvert, wvert, fvals), workers)
    return fvals


def residual_values(vols, gs, gt, sigma, nu_e, vvert, uvert, jvert, wvert, workers=None):
    """Element residual contributions at the chord reluctivity nu_e."""
    m = vols.shape[0]
    rvals = np.empty((m, 4))
    _run(
        _impl.residual_values,
        m,
        (vols, gs, gt, sigma, nu_e, vvert, uvert, jvert, wvert, rvals),
        workers,
    )
    return rvals
