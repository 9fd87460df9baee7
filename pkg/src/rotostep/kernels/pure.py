"""Reference numpy implementation of the element kernels.

Formulas (P1 on a tetrahedron, V volume, g_i spatial gradient, gt_i the
temporal gradient component, all constant per element):

  K[i,j] = V * g_i . T g_j                      with T the 2x2 reluctivity
  C[i,j] = sigma * (V/4 * gt_j + V/20 * g_j . (sum_k v_k + v_i))
  F[i]   = V/20 * (sum_k j_k + j_i) + V/4 * g_i . sum_k w_k

The convection rule integrates the P1 interpolant of v exactly, which is
exact wherever the velocity is linear (in particular on every conducting
element, since those rotate rigidly).
"""
from __future__ import annotations

import numpy as np


def element_values(lo, hi, vols, gs, gt, sigma, t00, t01, t11, vvert, kvals, cvals):
    V = vols[lo:hi]
    g = gs[lo:hi]
    gtl = gt[lo:hi]
    sg = sigma[lo:hi]
    a = t00[lo:hi][:, None, None]
    b = t01[lo:hi][:, None, None]
    c = t11[lo:hi][:, None, None]
    v = vvert[lo:hi]

    gx = g[:, :, 0]
    gy = g[:, :, 1]
    k = (
        a * gx[:, :, None] * gx[:, None, :]
        + b * (gx[:, :, None] * gy[:, None, :] + gy[:, :, None] * gx[:, None, :])
        + c * gy[:, :, None] * gy[:, None, :]
    )
    kvals[lo:hi] = (V[:, None, None] * k).reshape(-1, 16)

    vsum = v.sum(axis=1)  # (m, 2)
    gv = np.einsum("mjc,mc->mj", g, vsum)  # g_j . vsum
    gvi = np.einsum("mic,mjc->mij", v, g)  # g_j . v_i
    cmat = sg[:, None, None] * (
        (V / 4.0)[:, None, None] * gtl[:, None, :]
        + (V / 20.0)[:, None, None] * (gv[:, None, :] + gvi)
    )
    cvals[lo:hi] = cmat.reshape(-1, 16)


def rhs_values(lo, hi, vols, gs, jvert, wvert, fvals):
    V = vols[lo:hi]
    g = gs[lo:hi]
    j = jvert[lo:hi]
    w = wvert[lo:hi]
    jsum = j.sum(axis=1)
    wsum = w.sum(axis=1)
    load = (V / 20.0)[:, None] * (jsum[:, None] + j)
    load += (V / 4.0)[:, None] * np.einsum("mic,mc->mi", g, wsum)
    fvals[lo:hi] = load


def residual_values(lo, hi, vols, gs, gt, sigma, nu_e, vvert, uvert, jvert, wvert, rvals):
    V = vols[lo:hi]
    g = gs[lo:hi]
    gtl = gt[lo:hi]
    sg = sigma[lo:hi]
    nu = nu_e[lo:hi]
    v = vvert[lo:hi]
    u = uvert[lo:hi]
    j = jvert[lo:hi]
    w = wvert[lo:hi]

    gradu = np.einsum("mj,mjc->mc", u, g)
    ut = np.einsum("mj,mj->m", u, gtl)
    vsum = v.sum(axis=1)

    r = (V * nu)[:, None] * np.einsum("mic,mc->mi", g, gradu)
    conv = np.einsum("mc,mic->mi", gradu, vsum[:, None, :] + v)
    r += sg[:, None] * ((V / 4.0)[:, None] * ut[:, None] + (V / 20.0)[:, None] * conv)

    jsum = j.sum(axis=1)
    wsum = w.sum(axis=1)
    r -= (V / 20.0)[:, None] * (jsum[:, None] + j)
    r -= (V / 4.0)[:, None] * np.einsum("mic,mc->mi", g, wsum)
    rvals[lo:hi] = r
