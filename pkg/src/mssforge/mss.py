"""Residual evaluators for the minimal surface system.

The system for a map u with induced metric g = I + Du^T Du comes in three
equivalent forms for smooth maps:

  outer:   d_i(sqrt(det g) g^{ij} d_j u^a) = f^a
  inner:   d_i(sqrt(det g) g^{ij}) = -f . d_j u
  nondiv:  sqrt(det g) g^{ij} u^a_{ij} = f^a + (f . d_j u) d_j u^a

plus the once-differentiated combination used to pin third-order data:

  g^{ij} w^1_{1ij} + d_1 g^{ij} w^1_{ij} = 0   (when f = 0).

All four are implemented on exact jets (coefficient identities) and the
first three also pointwise/gridwise in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import GridMap
from .jets import Jet, JetMatrix, MapJet

NVARS = 3


@dataclass
class MetricData:
    g: object  # JetMatrix or ndarray
    g_inv: object
    sqrt_det: object  # Jet or ndarray


@dataclass
class Residual:
    form: str  # outer | inner | nondiv | differentiated
    components: list  # Jets, or ndarrays
    valid_degree: int = None  # jets only: trustworthy total degree

    def max_abs(self):
        return max(
            float(np.max(np.abs(np.asarray(c, dtype=float)))) for c in self.components
        )

    def is_zero_jet(self):
        return all(
            not any(sum(e) <= self.valid_degree for e in c.terms)
            for c in self.components
        )


# --------------------------------------------------------------------- metric
def metric_from_gradient(M):
    """Metric data g = I + M^T M with inverse and sqrt(det).

    ``M`` may be a JetMatrix (exact) or an (m, n) float matrix.
    """
    if isinstance(M, JetMatrix):
        n = M.shape[1]
        g = JetMatrix.identity(n, M.degree, M.mode) + M.transpose() * M
        return MetricData(g=g, g_inv=g.inverse(), sqrt_det=g.det().sqrt())
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    g = np.eye(n) + np.swapaxes(M, -1, -2) @ M
    return MetricData(
        g=g, g_inv=np.linalg.inv(g), sqrt_det=np.sqrt(np.linalg.det(g))
    )


def _forcing_jets(forcing, m, degree, mode):
    if forcing is None:
        return [Jet.zero(degree, mode) for _ in range(m)]
    comps = forcing.components if isinstance(forcing, MapJet) else list(forcing)
    if len(comps) != m:
        raise ValueError("forcing must have one component per map component")
    out = []
    for c in comps:
        c = c.truncate(degree) if c.degree > degree else c.extend(degree)
        out.append(c)
    return out


# ------------------------------------------------------------------- jet forms
def momentum_jets(u: MapJet):
    """P^a_i = sqrt(det g) g^{ik} d_k u^a as a JetMatrix of degree K-1."""
    Du = u.gradient()
    md = metric_from_gradient(Du)
    P = (Du * md.g_inv).map(lambda e: e * md.sqrt_det)
    return P, md, Du


def outer_residual_jet(u: MapJet, forcing=None):
    """d_i P^a_i - f^a, valid to total degree K-2."""
    K = u.degree
    if K < 2:
        raise ValueError("outer residual needs degree >= 2")
    P, _, _ = momentum_jets(u)
    m = len(u)
    f = _forcing_jets(forcing, m, K - 2, u.mode)
    comps = []
    for a in range(m):
        acc = P[a, 0].partial(0).truncate(K - 2)
        for i in range(1, NVARS):
            acc = acc + P[a, i].partial(i).truncate(K - 2)
        comps.append(acc - f[a])
    return Residual("outer", comps, valid_degree=K - 2)


def inner_residual_jet(u: MapJet, forcing=None):
    """d_i(sqrt(det g) g^{ij}) + f . d_j u, valid to degree K-2."""
    K = u.degree
    if K < 2:
        raise ValueError("inner residual needs degree >= 2")
    Du = u.gradient()
    md = metric_from_gradient(Du)
    S = md.g_inv.map(lambda e: e * md.sqrt_det)
    m = len(u)
    f = _forcing_jets(forcing, m, K - 2, u.mode)
    comps = []
    for j in range(NVARS):
        acc = S[0, j].partial(0).truncate(K - 2)
        for i in range(1, NVARS):
            acc = acc + S[i, j].partial(i).truncate(K - 2)
        for a in range(m):
            acc = acc + f[a] * Du[a, j].truncate(K - 2)
        comps.append(acc)
    return Residual("inner", comps, valid_degree=K - 2)


def nondiv_residual_jet(u: MapJet, forcing=None):
    """sqrt(det g) g^{ij} u^a_{ij} - f^a - (f . d_j u) d_j u^a, degree K-2."""
    K = u.degree
    if K < 2:
        raise ValueError("nondiv residual needs degree >= 2")
    Du = u.gradient()
    md = metric_from_gradient(Du)
    S = md.g_inv.map(lambda e: e * md.sqrt_det).truncate(K - 2)
    m = len(u)
    f = _forcing_jets(forcing, m, K - 2, u.mode)
    DuT = Du.truncate(K - 2)
    comps = []
    for a in range(m):
        hess = [[u[a].partial(i).partial(j).truncate(K - 2) for j in range(NVARS)] for i in range(NVARS)]
        acc = None
        for i in range(NVARS):
            for j in range(NVARS):
                term = S[i, j] * hess[i][j]
                acc = term if acc is None else acc + term
        acc = acc - f[a]
        for j in range(NVARS):
            fdot = None
            for b in range(m):
                t = f[b] * DuT[b, j]
                fdot = t if fdot is None else fdot + t
            acc = acc - fdot * DuT[a, j]
        comps.append(acc)
    return Residual("nondiv", comps, valid_degree=K - 2)


def differentiated_residual_jet(u: MapJet):
    """g^{ij} w^1_{1ij} + d_1 g^{ij} w^1_{ij} for an unforced solution."""
    K = u.degree
    if K < 3:
        raise ValueError("differentiated residual needs degree >= 3")
    Du = u.gradient()
    md = metric_from_gradient(Du)
    Ginv = md.g_inv.truncate(K - 3)
    dGinv = md.g_inv.map(lambda e: e.partial(0)).truncate(K - 3)
    w1 = u[0]
    acc = None
    for i in range(NVARS):
        for j in range(NVARS):
            third = w1.partial(0).partial(i).partial(j).truncate(K - 3)
            second = w1.partial(i).partial(j).truncate(K - 3)
            term = Ginv[i, j] * third + dGinv[i, j] * second
            acc = term if acc is None else acc + term
    return Residual("differentiated", [acc], valid_degree=K - 3)


# -------------------------------------------------------------- pointwise form
def pointwise_nondiv_residual(Du, D2u, forcing=None):
    """Non-divergence residual from analytic derivatives at points.

    Du: (..., m, n); D2u: (..., m, n, n); forcing: (..., m) or None.
    """
    Du = np.asarray(Du, dtype=float)
    D2u = np.asarray(D2u, dtype=float)
    n = Du.shape[-1]
    g = np.eye(n) + np.swapaxes(Du, -1, -2) @ Du
    sdet = np.sqrt(np.linalg.det(g))
    ginv = np.linalg.inv(g)
    res = sdet[..., None] * np.einsum("...ij,...aij->...a", ginv, D2u)
    if forcing is not None:
        f = np.asarray(forcing, dtype=float)
        fdot = np.einsum("...a,...aj->...j", f, Du)
        res = res - f - np.einsum("...j,...aj->...a", fdot, Du)
    return res


# ------------------------------------------------------------------ grid forms
def _centered_derivative(values, axis, h):
    out = np.gradient(values, h, axis=axis, edge_order=2)
    return out


def grid_gradients(gm: GridMap):
    """Nodal gradients, centered in the interior and one-sided (2nd order)
    at faces: (N1, N2, N3, m, 3)."""
    parts = [
        _centered_derivative(gm.values, a, gm.spacing[a]) for a in range(3)
    ]
    return np.stack(parts, axis=-1)


def grid_outer_residual(gm: GridMap, forcing=None):
    """Divergence-form residual on interior nodes (full centered stencils).

    Returns (residual array (N1,N2,N3,m), interior mask).  ``forcing`` may be
    a callable taking (N,3) points to (N,m) values, or None.
    """
    dims = gm.dims
    if min(dims) < 5:
        raise ValueError("grid too small for second-order residual stencils")
    Du = grid_gradients(gm)  # (..., m, 3)
    md = metric_from_gradient(Du)
    P = md.sqrt_det[..., None, None] * np.einsum(
        "...aj,...ji->...ai", Du, md.g_inv
    )
    res = np.zeros(dims + (gm.ncomp,))
    for i in range(3):
        res += _centered_derivative(P[..., i], i, gm.spacing[i])
    if forcing is not None:
        pts = gm.node_coordinates().reshape(-1, 3)
        res -= np.asarray(forcing(pts), dtype=float).reshape(res.shape)
    interior = np.zeros(dims, dtype=bool)
    interior[2:-2, 2:-2, 2:-2] = True
    return res, interior


def grid_inner_residual(gm: GridMap, forcing=None):
    dims = gm.dims
    if min(dims) < 5:
        raise ValueError("grid too small for second-order residual stencils")
    Du = grid_gradients(gm)
    md = metric_from_gradient(Du)
    S = md.sqrt_det[..., None, None] * md.g_inv
    res = np.zeros(dims + (3,))
    for i in range(3):
        res += _centered_derivative(S[..., i, :], i, gm.spacing[i])
    if forcing is not None:
        pts = gm.node_coordinates().reshape(-1, 3)
        f = np.asarray(forcing(pts), dtype=float).reshape(dims + (gm.ncomp,))
        res += np.einsum("...a,...aj->...j", f, Du)
    interior = np.zeros(dims, dtype=bool)
    interior[2:-2, 2:-2, 2:-2] = True
    return res, interior
