"""Box-lattice discretization of vector-valued maps.

A :class:`GridMap` holds nodal values of a map from a 3-d box to R^m plus a
mask of frozen (Dirichlet) nodes.  The quadrature convention used everywhere
is cell-centered: the gradient on a cell is the average of the four edge
differences per axis, and integrals are sums of cell values times the cell
volume.  The same convention is shared by the optimizer and the calibration
integrals so discrete area comparisons are internally coherent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GridMap:
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray  # (N1, N2, N3, m)
    boundary_mask: np.ndarray = None  # True on frozen nodes
    domain_mask: np.ndarray = None  # optional: False on excluded nodes

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4:
            raise ValueError("values must have shape (N1, N2, N3, m)")
        if self.boundary_mask is None:
            self.boundary_mask = face_mask(self.values.shape[:3])

    @property
    def dims(self):
        return self.values.shape[:3]

    @property
    def ncomp(self):
        return self.values.shape[3]

    @classmethod
    def from_function(cls, fn, box, dims, ncomp=2):
        """Sample ``fn`` (mapping (N,3) points to (N,m) values) on a box."""
        origin = np.array([b[0] for b in box], dtype=float)
        spacing = np.array(
            [(b[1] - b[0]) / (n - 1) for b, n in zip(box, dims)], dtype=float
        )
        pts = node_coordinates(origin, spacing, dims)
        vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float).reshape(*dims, ncomp)
        return cls(origin, spacing, vals)

    def node_coordinates(self):
        return node_coordinates(self.origin, self.spacing, self.dims)

    def cell_centers(self):
        dims = self.dims
        return node_coordinates(
            self.origin + self.spacing / 2, self.spacing, tuple(n - 1 for n in dims)
        )

    def cell_volume(self):
        return float(np.prod(self.spacing))

    def copy(self):
        return GridMap(
            self.origin.copy(),
            self.spacing.copy(),
            self.values.copy(),
            self.boundary_mask.copy(),
            None if self.domain_mask is None else self.domain_mask.copy(),
        )

    def interp(self, points):
        """Trilinear interpolation of nodal values at (N, 3) points."""
        return trilinear(self.values, self.origin, self.spacing, points)

    def line_coordinates(self, axis=0):
        n = self.dims[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)


def face_mask(dims):
    mask = np.zeros(dims, dtype=bool)
    mask[0, :, :] = mask[-1, :, :] = True
    mask[:, 0, :] = mask[:, -1, :] = True
    mask[:, :, 0] = mask[:, :, -1] = True
    return mask


def node_coordinates(origin, spacing, dims):
    axes = [origin[a] + spacing[a] * np.arange(dims[a]) for a in range(3)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack(grid, axis=-1)


def trilinear(values, origin, spacing, points):
    """Trilinear interpolation of a nodal field (N1,N2,N3,...) at (N,3) points.

    Query points are clamped to the grid box.
    """
    values = np.asarray(values)
    pts = np.asarray(points, dtype=float)
    dims = values.shape[:3]
    rel = (pts - origin) / spacing
    rel = np.clip(rel, 0.0, np.array(dims, dtype=float) - 1.0)
    i0 = np.minimum(rel.astype(int), np.array(dims) - 2)
    t = rel - i0
    out = None
    for da in (0, 1):
        wa = t[:, 0] if da else 1.0 - t[:, 0]
        for db in (0, 1):
            wb = t[:, 1] if db else 1.0 - t[:, 1]
            for dc in (0, 1):
                wc = t[:, 2] if dc else 1.0 - t[:, 2]
                w = (wa * wb * wc)[(...,) + (None,) * (values.ndim - 3)]
                v = values[i0[:, 0] + da, i0[:, 1] + db, i0[:, 2] + dc]
                out = w * v if out is None else out + w * v
    return out


def affine_map(gradient, offset=None):
    """Callable sampling the affine map x -> offset + M x (M is m x n)."""
    M = np.asarray(gradient, dtype=float)
    b = np.zeros(M.shape[0]) if offset is None else np.asarray(offset, dtype=float)

    def fn(points):
        return points @ M.T + b

    return fn
