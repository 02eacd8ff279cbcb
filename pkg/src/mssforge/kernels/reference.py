"""Numpy reference implementations of the optimizer's hot kernels.

These are the import-time fallback when the compiled extension is missing,
and the ground truth the compiled kernels are tested against.
"""

from __future__ import annotations

import numpy as np


def isotonic_1d(y):
    """Pool-adjacent-violators projection onto nondecreasing sequences.

    Returns the closest (least-squares) nondecreasing sequence; pooled
    entries share a single value exactly.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    lens = np.empty(n, dtype=np.intp)
    top = 0
    for i in range(n):
        v, w, ln = y[i], 1.0, 1
        while top and vals[top - 1] > v:
            top -= 1
            tw = wts[top] + w
            v = (wts[top] * vals[top] + w * v) / tw
            w = tw
            ln += lens[top]
        vals[top], wts[top], lens[top] = v, w, ln
        top += 1
    out = np.empty(n)
    pos = 0
    for k in range(top):
        out[pos : pos + lens[k]] = vals[k]
        pos += lens[k]
    return out


def isotonic_lines(lines):
    """Row-wise PAVA for a (B, n) array of independent lines."""
    lines = np.asarray(lines, dtype=float)
    out = np.empty_like(lines)
    for b in range(lines.shape[0]):
        out[b] = isotonic_1d(lines[b])
    return out


def isotonic_interior(lines):
    """Projection onto {nondecreasing, first/last entries fixed}, row-wise.

    The interior of each row is pooled, then clipped to the fixed endpoint
    values (exact projection when row[0] <= row[-1]).
    """
    lines = np.asarray(lines, dtype=float)
    out = lines.copy()
    if lines.shape[1] <= 2:
        return out
    inner = isotonic_lines(lines[:, 1:-1])
    lo = lines[:, :1]
    hi = lines[:, -1:]
    out[:, 1:-1] = np.clip(inner, lo, hi)
    return out


def cell_gradients(values, spacing):
    """Cell-centered gradients: average of the 4 edge differences per axis.

    values: (N1, N2, N3, m) -> (N1-1, N2-1, N3-1, m, 3)
    """
    v = np.asarray(values, dtype=float)

    def avg(arr, axis):
        sl0 = [slice(None)] * arr.ndim
        sl1 = [slice(None)] * arr.ndim
        sl0[axis] = slice(None, -1)
        sl1[axis] = slice(1, None)
        return 0.5 * (arr[tuple(sl0)] + arr[tuple(sl1)])

    d0 = avg(avg(np.diff(v, axis=0), 1), 2) / spacing[0]
    d1 = avg(avg(np.diff(v, axis=1), 0), 2) / spacing[1]
    d2 = avg(avg(np.diff(v, axis=2), 0), 1) / spacing[2]
    return np.stack([d0, d1, d2], axis=-1)


def _area_terms(G):
    """F, F - 1 and DF for cell gradients G of shape (..., 2, 3).

    F - 1 is assembled from small quantities (det - 1 = a + b + ab - s12^2)
    so summed excess energies keep full relative precision near the flat
    graph, where line searches need to resolve tiny decreases.
    """
    u = G[..., 0, :]
    w = G[..., 1, :]
    a = np.sum(u * u, axis=-1)
    b = np.sum(w * w, axis=-1)
    s12 = np.sum(u * w, axis=-1)
    det1 = a + b + a * b - s12 * s12
    F = np.sqrt(1.0 + det1)
    Fm1 = det1 / (1.0 + F)
    s11 = 1.0 + a
    s22 = 1.0 + b
    DF = np.empty_like(G)
    DF[..., 0, :] = (s22[..., None] * u - s12[..., None] * w) / F[..., None]
    DF[..., 1, :] = (s11[..., None] * w - s12[..., None] * u) / F[..., None]
    return F, Fm1, DF


def scatter_cells_to_nodes(W, spacing):
    """Adjoint of ``cell_gradients``: W is (C1, C2, C3, m, 3) cell data."""
    c1, c2, c3, m, _ = W.shape
    out = np.zeros((c1 + 1, c2 + 1, c3 + 1, m))
    for da in (0, 1):
        for db in (0, 1):
            for dc in (0, 1):
                contrib = (
                    (W[..., 0] * (1 if da else -1) / (4 * spacing[0]))
                    + (W[..., 1] * (1 if db else -1) / (4 * spacing[1]))
                    + (W[..., 2] * (1 if dc else -1) / (4 * spacing[2]))
                )
                out[da : da + c1, db : db + c2, dc : dc + c3] += contrib
    return out


def cell_energy_gradient(values, spacing, cell_mask=None):
    """Excess discrete graph area and its nodal gradient.

    Energy = sum over cells of (F(cell gradient) - 1) * cell volume; the
    full graph area is this plus the domain volume.  The returned gradient
    is the exact derivative with respect to the nodal values.
    """
    G = cell_gradients(values, spacing)
    _, Fm1, DF = _area_terms(G)
    vol = float(np.prod(spacing))
    if cell_mask is not None:
        Fm1 = np.where(cell_mask, Fm1, 0.0)
        DF = np.where(cell_mask[..., None, None], DF, 0.0)
    energy = float(Fm1.sum()) * vol
    grad = scatter_cells_to_nodes(DF * vol, spacing)
    return energy, grad


def cell_energies(values, spacing):
    """Per-cell F values (no volume factor)."""
    G = cell_gradients(values, spacing)
    F, _, _ = _area_terms(G)
    return F
