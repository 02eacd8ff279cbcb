"""Axis swap y(x) = (w1(x), x2, x3): singular reparametrization of a graph.

When d1 w1 >= 0 with equality on a compact set, the swap turns the graph of
w into the graph of a map u over y-space, u1(y(x)) = x1, u2(y(x)) = w2(x),
which is discontinuous exactly over the image of the locked set.  Fibers of
the inversion over that image are x1-intervals (the vertical part); they
are reported as intervals, not points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import GridMap
from .jets import MapJet


class JetSource:
    """Adapter exposing a MapJet as a swap source."""

    def __init__(self, w: MapJet):
        self.w = w.to_float() if w.mode == "exact" else w
        self._d1 = self.w[0].partial(0)

    def value_batch(self, pts):
        return self.w.eval_batch(np.asarray(pts, dtype=float))

    def d1w1_batch(self, pts):
        return self._d1.eval_batch(np.asarray(pts, dtype=float))


class GridSource:
    """Adapter exposing a GridMap as a swap source (per-line linear)."""

    def __init__(self, gm: GridMap):
        self.gm = gm

    def value_batch(self, pts):
        return self.gm.interp(np.asarray(pts, dtype=float))

    def d1w1_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        h = self.gm.spacing[0]
        up = pts.copy()
        dn = pts.copy()
        up[:, 0] += 0.5 * h
        dn[:, 0] -= 0.5 * h
        return (self.gm.interp(up)[:, 0] - self.gm.interp(dn)[:, 0]) / h


@dataclass
class SwappedMap:
    """A swap y(x) = (w1(x), x2, x3) over a box, with a sampled certificate
    that d1 w1 >= 0 on the box."""

    source: object
    box: tuple  # ((a1,b1),(a2,b2),(a3,b3))
    monotone_margin: float = None

    def __post_init__(self):
        if self.monotone_margin is None:
            self.monotone_margin = self.certify_monotone()

    def certify_monotone(self, per_axis=12):
        axes = [np.linspace(a, b, per_axis) for a, b in self.box]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        margin = float(self.source.d1w1_batch(grid).min())
        if margin < -1e-12:
            raise ValueError(f"d1 w1 dips to {margin}: swap not monotone")
        return margin

    # -------------------------------------------------------------- forward
    def forward(self, pts):
        """x -> (y, u(y)) with y = (w1, x2, x3), u = (x1, w2)."""
        pts = np.asarray(pts, dtype=float)
        self._check_domain(pts)
        w = self.source.value_batch(pts)
        y = np.column_stack([w[:, 0], pts[:, 1], pts[:, 2]])
        u = np.column_stack([pts[:, 0], w[:, 1]])
        return y, u

    def _check_domain(self, pts):
        for a, (lo, hi) in enumerate(self.box):
            if (pts[:, a] < lo - 1e-12).any() or (pts[:, a] > hi + 1e-12).any():
                raise ValueError("point outside swap domain")

    def _w1_line(self, x1, y2, y3):
        pts = np.stack([x1, np.broadcast_to(y2, x1.shape), np.broadcast_to(y3, x1.shape)], axis=-1)
        return self.source.value_batch(pts.reshape(-1, 3))[:, 0].reshape(x1.shape)

    # -------------------------------------------------------------- inversion
    def invert(self, y, tol=1e-12, iters=80):
        """Solve w1(x1, y2, y3) = y1 by monotone bisection.

        Returns ("point", x) off the vertical set and ("interval", (a, b))
        on it (the fiber of the vertical part); raises if y1 is outside the
        attained range on the line.
        """
        y = np.asarray(y, dtype=float)
        lo_box, hi_box = self.box[0]
        f = lambda t: self._w1_line(np.atleast_1d(t), y[1], y[2])[0] - y[0]
        flo, fhi = f(lo_box), f(hi_box)
        if flo > 1e-9 or fhi < -1e-9:
            raise ValueError("query outside the attained range of w1 on the line")
        # leftmost root: smallest x1 with w1 >= y1
        lo, hi = lo_box, hi_box
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
        left = hi
        # rightmost root: largest x1 with w1 <= y1
        lo, hi = lo_box, hi_box
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                hi = mid
            else:
                lo = mid
        right = lo
        if right - left > max(tol, 1e-10):
            return "interval", (left, right)
        x = 0.5 * (left + right)
        return "point", np.array([x, y[1], y[2]])

    # ---------------------------------------------------------------- probes
    def holder_exponent(self, t_lo=1e-6, t_hi=1e-3, samples=25):
        """Least-squares slope of log u1(t, 0, 0) against log t.

        For the point-singularity solution the graph turns vertical at the
        origin and the exponent is 1/3; for a regular slice it is 1.
        """
        ts = np.geomspace(t_lo, t_hi, samples)
        xs = []
        for t in ts:
            kind, val = self.invert(np.array([t, 0.0, 0.0]))
            if kind != "point":
                raise ValueError("non-trivial fiber on the probe line")
            xs.append(val[0])
        xs = np.asarray(xs)
        A = np.column_stack([np.log(ts), np.ones_like(ts)])
        slope, _ = np.linalg.lstsq(A, np.log(xs), rcond=None)[0]
        return float(slope), ts, xs

    def difference_quotients(self, t_values):
        """u1(t,0,0)/t along the probe line (diverges at a vertical point)."""
        out = []
        for t in np.asarray(t_values, dtype=float):
            kind, val = self.invert(np.array([t, 0.0, 0.0]))
            if kind != "point":
                raise ValueError("non-trivial fiber on the probe line")
            out.append(val[0] / t)
        return np.asarray(out)


def sigma_surface(source, region, samples=2000, seed=0):
    """Point cloud of the image of the locked region under the swap.

    Returns (points (N,3), boundary_curve (B,3)); every point satisfies
    y1 = y2 y3 because the first component is locked to x2 x3 there.
    """
    Hf = region.potential
    Hf = Hf.to_float() if Hf.mode == "exact" else Hf
    rng = np.random.default_rng(seed)
    r = region.radius_scale * 1.3
    interior = []
    while len(interior) < samples:
        cand = rng.uniform(-r, r, size=(4 * samples, 3))
        keep = cand[Hf.eval_batch(cand) >= 0.0]
        interior.extend(keep.tolist())
    interior = np.asarray(interior[:samples])
    w_int = source.value_batch(interior)
    cloud = np.column_stack([w_int[:, 0], interior[:, 1], interior[:, 2]])
    bpts = region.boundary_points
    w_b = source.value_batch(bpts)
    curve = np.column_stack([w_b[:, 0], bpts[:, 1], bpts[:, 2]])
    return cloud, curve


def write_surface_csv(path, points, header="y1,y2,y3"):
    np.savetxt(path, points, delimiter=",", header=header, comments="")
