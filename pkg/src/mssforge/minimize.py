"""Grid minimization of graph area, unconstrained and under d1 v1 >= 0.

The energy is the cell-centered discrete graph area from
:mod:`mssforge.kernels`; the gradient is its exact adjoint.  The constraint
set is a product of monotone cones per x1 grid line, so the exact Euclidean
projection is pool-adjacent-violators per line (with the frozen line ends
respected by clipping).  Constrained runs return the pooled active set and
the cumulative-multiplier diagnostics that play the role of the free
boundary potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grids import GridMap, face_mask


class OptimizeError(RuntimeError):
    pass


@dataclass
class ActiveSegment:
    line: tuple  # (j, k) indices of the x1 line
    start: int  # first node index of the pooled run
    stop: int  # one past the last node index

    @property
    def length(self):
        return self.stop - self.start


@dataclass
class OptimizeResult:
    grid: GridMap
    energies: list
    iterations: int
    converged: bool
    grad_norm: float
    kkt_residual: float = None
    active_segments: list = field(default_factory=list)

    @property
    def active_line_fraction(self):
        n2, n3 = self.grid.dims[1], self.grid.dims[2]
        lines = {seg.line for seg in self.active_segments}
        return len(lines) / float(n2 * n3)


def discrete_area(gm: GridMap):
    """Sum over cells of F(cell gradient) times the cell volume."""
    excess, _ = kernels.cell_energy_gradient(gm.values, gm.spacing)
    ncells = np.prod([n - 1 for n in gm.dims])
    return excess + float(ncells) * gm.cell_volume()


def discrete_area_excess(gm: GridMap):
    """Graph area minus the domain volume (full relative precision)."""
    excess, _ = kernels.cell_energy_gradient(gm.values, gm.spacing)
    return excess


def discrete_area_gradient(gm: GridMap):
    """Exact nodal gradient of :func:`discrete_area`; frozen nodes get 0."""
    _, grad = kernels.cell_energy_gradient(gm.values, gm.spacing)
    grad[gm.boundary_mask] = 0.0
    return grad


def nodal_quadrature_area(gm: GridMap):
    """Independent quadrature (trapezoid weights on nodal F) used as an
    oracle for the cell-centered rule."""
    from .mss import grid_gradients

    Du = grid_gradients(gm)
    F = np.sqrt(
        np.linalg.det(
            np.eye(2) + np.einsum("...aj,...bj->...ab", Du, Du)
        )
    )
    w = np.ones(gm.dims)
    for axis in range(3):
        sl = [slice(None)] * 3
        for end in (0, -1):
            sl[axis] = end
            w[tuple(sl)] *= 0.5
            sl[axis] = slice(None)
    return float((F * w).sum() * np.prod(gm.spacing))


def _project_constrained(values, boundary_feasible_checked=False):
    """Project component 1 onto per-line monotone cones (interior lines)."""
    out = values.copy()
    n1, n2, n3, _ = values.shape
    lines = out[:, 1:-1, 1:-1, 0]  # interior lines only; faces are frozen
    flat = np.ascontiguousarray(lines.reshape(n1, -1).T)
    projected = kernels.isotonic_interior(flat)
    out[:, 1:-1, 1:-1, 0] = projected.T.reshape(n1, n2 - 2, n3 - 2)
    return out


def check_feasible_boundary(gm: GridMap):
    """Boundary data must be nondecreasing along frozen x1 lines and have
    ordered line endpoints."""
    v1 = gm.values[..., 0]
    for j in (0, -1):
        if np.diff(v1[:, j, :], axis=0).min() < -1e-12:
            raise OptimizeError("infeasible boundary data on an x2 face")
        if np.diff(v1[:, :, j], axis=0).min() < -1e-12:
            raise OptimizeError("infeasible boundary data on an x3 face")
    if (v1[-1, 1:-1, 1:-1] - v1[0, 1:-1, 1:-1]).min() < -1e-12:
        raise OptimizeError("infeasible boundary data: line endpoints decrease")


def _masked_energy_grad(gm: GridMap, values):
    energy, grad = kernels.cell_energy_gradient(values, gm.spacing)
    grad[gm.boundary_mask] = 0.0
    return energy, grad


def minimize_unconstrained(gm: GridMap, tol=1e-8, max_iter=20000):
    """Nonlinear conjugate gradient (Polak-Ribiere, Armijo backtracking).

    Stops when the max-norm of the masked gradient, scaled to residual
    density (gradient / cell volume), drops below ``tol``; a stalled line
    search at the floating-point floor also ends the run, reported as
    converged only if the tolerance was met.
    """
    gm = gm.copy()
    vol = gm.cell_volume()
    x = gm.values
    E, G = _masked_energy_grad(gm, x)
    d = -G
    energies = [E]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.abs(G).max()) / vol
        if gnorm <= tol:
            converged = True
            break
        slope = float((G * d).sum())
        if slope >= 0:
            d = -G
            slope = -float((G * G).sum())
        step = min(max(step * 4.0, 1e-12), 1e18)
        stalled = False
        while True:
            xn = x + step * d
            En, Gn = _masked_energy_grad(gm, xn)
            if np.isfinite(En) and En <= E + 1e-4 * step * slope:
                break
            if step * float(np.abs(d).max()) < 1e-17 * (1.0 + float(np.abs(x).max())):
                stalled = True
                break
            step *= 0.5
        if stalled:
            break
        beta = max(0.0, float((Gn * (Gn - G)).sum() / max((G * G).sum(), 1e-300)))
        d = -Gn + beta * d
        x, E, G = xn, En, Gn
        energies.append(E)
    gm.values = x
    return OptimizeResult(
        grid=gm,
        energies=energies,
        iterations=it,
        converged=converged,
        grad_norm=float(np.abs(G).max()) / vol,
    )


def minimize_constrained(gm: GridMap, tol=1e-6, max_iter=20000):
    """Projected gradient with Barzilai-Borwein steps and backtracking.

    The iterate is kept feasible by the exact isotonic projection after
    every step; convergence is measured by the projected-gradient residual
    |x - P(x - grad)|_inf.
    """
    check_feasible_boundary(gm)
    gm = gm.copy()
    vol = gm.cell_volume()
    x = _project_constrained(gm.values)
    E, G = _masked_energy_grad(gm, x)
    energies = [E]
    step = 1.0
    converged = False
    kkt = np.inf
    it = 0
    prev_x, prev_G = None, None
    for it in range(1, max_iter + 1):
        # projected-gradient residual at unit density step
        kkt = float(np.abs(x - _project_constrained(x - G / vol)).max())
        if kkt <= tol:
            converged = True
            break
        if prev_x is not None:
            s = (x - prev_x).ravel()
            yv = (G - prev_G).ravel()
            sy = float(s @ yv)
            step = float(s @ s) / sy if sy > 1e-300 else 1.0 / vol
        else:
            step = 1.0 / vol
        step = min(max(step, 1e-12 / vol), 1e9 / vol)
        prev_x, prev_G = x, G
        stalled = False
        while True:
            xn = _project_constrained(x - step * G)
            En, Gn = _masked_energy_grad(gm, xn)
            dx = xn - x
            if not dx.any():
                stalled = True
                break
            if np.isfinite(En) and En <= E - 1e-4 / max(step, 1e-300) * float(
                (dx * dx).sum()
            ):
                break
            step *= 0.5
            if step * float(np.abs(G).max()) < 1e-17 * (1.0 + float(np.abs(x).max())):
                stalled = True
                break
        if stalled:
            break
        x, E, G = xn, En, Gn
        energies.append(E)
    gm.values = x
    segments = extract_active_segments(gm)
    return OptimizeResult(
        grid=gm,
        energies=energies,
        iterations=it,
        converged=converged,
        grad_norm=float(np.abs(G).max()),
        kkt_residual=kkt,
        active_segments=segments,
    )


def extract_active_segments(gm: GridMap, min_len=2):
    """Maximal runs of exactly equal v1 values along interior x1 lines."""
    v1 = gm.values[..., 0]
    n1, n2, n3 = gm.dims
    segments = []
    for j in range(1, n2 - 1):
        for k in range(1, n3 - 1):
            line = v1[:, j, k]
            flat = np.diff(line) == 0.0
            i = 0
            while i < n1 - 1:
                if flat[i]:
                    start = i
                    while i < n1 - 1 and flat[i]:
                        i += 1
                    if i - start + 1 >= min_len:
                        segments.append(ActiveSegment((j, k), start, i + 1))
                else:
                    i += 1
    return segments


def active_mask(result: OptimizeResult):
    mask = np.zeros(result.grid.dims, dtype=bool)
    for seg in result.active_segments:
        j, k = seg.line
        mask[seg.start : seg.stop, j, k] = True
    return mask


def discrete_potential(result: OptimizeResult):
    """Nodal potential recovered from the constrained multiplier.

    Minus the cumulative first-component energy gradient along each x1
    line, scaled to a density; approximately zero off the active set,
    nonnegative on it, vanishing at segment endpoints.
    """
    gm = result.grid
    _, grad = kernels.cell_energy_gradient(gm.values, gm.spacing)
    grad[gm.boundary_mask] = 0.0
    dens = grad[..., 0] / (gm.spacing[1] * gm.spacing[2])
    return -np.cumsum(dens, axis=0)


@dataclass
class KKTReport:
    off_active_residual: float
    second_component_residual: float
    multiplier_min: float  # cumulative multiplier, most negative value
    endpoint_residual: float  # multiplier magnitude at segment endpoints
    variation_min: float  # most negative first-order change, feasible dirs
    n_variations: int

    def passed(self, tol=1e-6, var_tol=1e-8):
        return (
            self.off_active_residual <= tol
            and self.second_component_residual <= tol
            and self.multiplier_min >= -tol
            and self.endpoint_residual <= tol
            and self.variation_min >= -var_tol
        )


def feasible_variation(result: OptimizeResult, rng, scale=1.0):
    """Random smooth variation, zero on the boundary, with d1 phi1 >= 0 on
    the active set (monotone resample along pooled runs)."""
    gm = result.grid
    n1, n2, n3 = gm.dims
    phi = np.zeros((n1, n2, n3, 2))
    for comp in range(2):
        modes = rng.integers(1, 4, size=3)
        amp = rng.standard_normal() * scale
        grids = [np.linspace(0, np.pi, n) for n in (n1, n2, n3)]
        phi[..., comp] = amp * np.einsum(
            "i,j,k->ijk",
            np.sin(modes[0] * grids[0]),
            np.sin(modes[1] * grids[1]),
            np.sin(modes[2] * grids[2]),
        )
    mask = active_mask(result)
    for seg in result.active_segments:
        j, k = seg.line
        run = phi[seg.start : seg.stop, j, k, 0]
        phi[seg.start : seg.stop, j, k, 0] = np.sort(np.abs(run))
    phi[gm.boundary_mask] = 0.0
    return phi


def kkt_report(result: OptimizeResult, n_variations=100, seed=0, tol=1e-6):
    gm = result.grid
    vol = gm.cell_volume()
    _, grad = kernels.cell_energy_gradient(gm.values, gm.spacing)
    grad[gm.boundary_mask] = 0.0
    dens = grad / vol  # residual-scale density
    mask = active_mask(result)
    off = ~mask & ~gm.boundary_mask
    off_res = float(np.abs(dens[..., 0][off]).max()) if off.any() else 0.0
    sec_res = float(np.abs(dens[..., 1][~gm.boundary_mask]).max())
    # cumulative multiplier in potential units (compare with H)
    hyz = gm.spacing[1] * gm.spacing[2]
    mult = -np.cumsum(grad[..., 0], axis=0) / hyz
    mult_min = 0.0
    endpoint = 0.0
    for seg in result.active_segments:
        j, k = seg.line
        run = mult[seg.start : seg.stop, j, k] - (
            mult[seg.start - 1, j, k] if seg.start > 0 else 0.0
        )
        mult_min = min(mult_min, float(run.min()))
        endpoint = max(endpoint, abs(float(run[-1])))
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_variations):
        phi = feasible_variation(result, rng)
        worst = min(worst, float((grad * phi).sum()))
    return KKTReport(
        off_active_residual=off_res,
        second_component_residual=sec_res,
        multiplier_min=mult_min,
        endpoint_residual=endpoint,
        variation_min=worst,
        n_variations=n_variations,
    )
