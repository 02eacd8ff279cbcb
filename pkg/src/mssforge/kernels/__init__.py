"""Kernel selection: compiled extension when available, numpy otherwise.

Set ``MSS_FORGE_PURE=1`` to force the numpy reference kernels.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

_fast = None
if os.environ.get("MSS_FORGE_PURE", "0") != "1":
    try:
        from . import _fastcore as _fast
    except ImportError:
        _fast = None

BACKEND = "compiled" if _fast is not None else "numpy"


def isotonic_1d(y):
    y = np.ascontiguousarray(y, dtype=float)
    if _fast is not None:
        return _fast.isotonic_lines(y[None, :])[0]
    return reference.isotonic_1d(y)


def isotonic_lines(lines):
    lines = np.ascontiguousarray(lines, dtype=float)
    if _fast is not None:
        return _fast.isotonic_lines(lines)
    return reference.isotonic_lines(lines)


def isotonic_interior(lines):
    lines = np.ascontiguousarray(lines, dtype=float)
    if _fast is not None:
        return _fast.isotonic_interior(lines)
    return reference.isotonic_interior(lines)


def cell_energy_gradient(values, spacing, cell_mask=None):
    values = np.ascontiguousarray(values, dtype=float)
    spacing = np.ascontiguousarray(spacing, dtype=float)
    if _fast is not None and cell_mask is None and values.shape[-1] == 2:
        return _fast.cell_energy_gradient(values, spacing)
    return reference.cell_energy_gradient(values, spacing, cell_mask)


cell_gradients = reference.cell_gradients
cell_energies = reference.cell_energies
scatter_cells_to_nodes = reference.scatter_cells_to_nodes


def worker_count():
    """Worker cap honoring the MSS_FORGE_THREADS environment variable."""
    cap = os.environ.get("MSS_FORGE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n
