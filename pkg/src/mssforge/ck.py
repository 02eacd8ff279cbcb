"""Order-by-order power-series solver for the minimal surface system with
data on {x1 = 0}, plus the gradient-constrained free-boundary pipeline.

The solver organizes coefficients by x1-degree: the non-divergence form of
the system, solved for u^a_{11}, determines the x1-degree k+2 coefficients
from lower ones; division by the unit series sqrt(det g) g^{11} is exact in
rational arithmetic.  Components may be frozen (supplied exactly instead of
solved); the forcing a frozen component induces is recovered from its own
equation and fed into the remaining ones.

The free-boundary pipeline: with v1 = x2 x3 frozen and v2 solved, the first
component's induced forcing f has an antiderivative H in x1.  The region
{H > 0} around the origin is where the gradient constraint d1 w1 >= 0
locks; positivity of the constrained solution's first derivative outside is
certified through boundary-jet identities on samples of the level set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .jets import Jet, JetMatrix, MapJet, rational
from .mss import metric_from_gradient, nondiv_residual_jet

NVARS = 3


class CKError(ValueError):
    pass


def slope_coefficient(eps):
    """(5 + 4 eps^2) / eps, the slope of the second component's data."""
    return (5 + 4 * eps * eps) / eps


def forcing_coefficient(eps):
    """2 eps / sqrt(1 + eps^2); exact when 1 + eps^2 is a rational square."""
    s = 1 + eps * eps
    num, den = int(s.numerator), int(s.denominator)
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return 2 * eps / rational(rn, rd)
    return float(2 * eps) / math.sqrt(float(s))


@dataclass
class CauchyData:
    """Data on {x1 = 0} for an m-component solve.

    ``values[a]`` and ``slopes[a]`` are jets in (x2, x3) for solved
    components; ``frozen[a]`` supplies the full three-variable jet of a
    component that is passed through unchanged.
    """

    values: list
    slopes: list
    frozen: dict = field(default_factory=dict)

    @property
    def ncomp(self):
        return len(self.values)

    def validate(self):
        for a in range(self.ncomp):
            if a in self.frozen:
                continue
            for jet in (self.values[a], self.slopes[a]):
                if jet is None:
                    raise CKError(f"component {a} lacks Cauchy data")
                if any(e[0] for e in jet.terms):
                    raise CKError("Cauchy data jets must not depend on x1")


def point_singularity_data(eps, degree=6):
    """Data whose solution has d1 w1 vanishing only at the origin:
    w|_0 = (x2 x3, eps x2), d1 w|_0 = (x2^2 + x3^2, A(eps) x3)."""
    K = degree
    x2x3 = Jet.monomial((0, 1, 1), 1, K)
    v1slope = Jet(K, "exact", {(0, 2, 0): 1, (0, 0, 2): 1})
    v2 = Jet.monomial((0, 1, 0), eps, K)
    v2slope = Jet.monomial((0, 0, 1), slope_coefficient(eps), K)
    return CauchyData(values=[x2x3, v2], slopes=[v1slope, v2slope])


def free_boundary_data(eps, degree=6):
    """Data for the forced solve: first component frozen to x2 x3,
    second solved with v2|_0 = eps x2, d1 v2|_0 = x3."""
    K = degree
    x2x3 = Jet.monomial((0, 1, 1), 1, K)
    v2 = Jet.monomial((0, 1, 0), eps, K)
    v2slope = Jet.monomial((0, 0, 1), 1, K)
    return CauchyData(values=[None, v2], slopes=[None, v2slope], frozen={0: x2x3})


def _induced_forcing(u: MapJet, frozen, given):
    """Forcing vector consistent with the equations of frozen components.

    Solves (I + Du Du^T) F = b on the frozen block, where b is the
    non-divergence operator applied to the frozen components and the given
    entries fill the rest.
    """
    K = u.degree
    D = K - 2
    m = len(u)
    Du = u.gradient()
    md = metric_from_gradient(Du)
    S = md.g_inv.map(lambda e: e * md.sqrt_det).truncate(D)
    DuT = Du.truncate(D)

    def nondiv_lhs(a):
        acc = None
        for i in range(NVARS):
            for j in range(NVARS):
                term = S[i, j] * u[a].partial(i).partial(j).truncate(D)
                acc = term if acc is None else acc + term
        return acc

    F = [None] * m
    for a in range(m):
        if a not in frozen:
            F[a] = given[a]
    if not frozen:
        return F
    idx = sorted(frozen)
    # T[b][g] = sum_j d_j u^b d_j u^g
    T = [
        [
            sum(
                (DuT[b, j] * DuT[g, j] for j in range(NVARS)),
                Jet.zero(D, u.mode),
            )
            for g in range(m)
        ]
        for b in range(m)
    ]
    rhs = []
    for b in idx:
        acc = nondiv_lhs(b)
        for g in range(m):
            if g not in frozen:
                acc = acc - T[b][g] * F[g]
        rhs.append([acc])
    block = JetMatrix(
        [
            [
                T[b][g] + (Jet.constant(1, D, u.mode) if b == g else Jet.zero(D, u.mode))
                for g in idx
            ]
            for b in idx
        ]
    )
    sol = block.inverse() * JetMatrix(rhs)
    for pos, b in enumerate(idx):
        F[b] = sol[pos, 0]
    return F


def ck_solve(data: CauchyData, forcing=None, degree=6):
    """Solve the system order by order; returns a MapJet of ``degree``.

    Non-frozen components end up with non-divergence residual vanishing to
    total degree K-2 (and hence outer/inner residuals too); frozen
    components pass through unchanged.
    """
    K = degree
    if K < 2:
        raise CKError("degree must be at least 2")
    data.validate()
    m = data.ncomp
    mode = None
    comps = []
    for a in range(m):
        if a in data.frozen:
            jet = data.frozen[a]
            jet = jet.truncate(K) if jet.degree > K else jet.extend(K)
            comps.append(jet)
            mode = jet.mode
        else:
            val = data.values[a]
            val = val.truncate(K) if val.degree > K else val.extend(K)
            slope = data.slopes[a]
            slope = slope.truncate(K) if slope.degree > K else slope.extend(K)
            comps.append(val + slope.shift_axis(1, axis=0))
            mode = val.mode
    u = MapJet(comps)

    givenF = [Jet.zero(K - 2, mode) for _ in range(m)]
    if forcing is not None:
        fc = forcing.components if isinstance(forcing, MapJet) else list(forcing)
        for a, c in enumerate(fc):
            givenF[a] = c.truncate(K - 2) if c.degree > K - 2 else c.extend(K - 2)

    solved = [a for a in range(m) if a not in data.frozen]
    for k in range(K - 1):
        F = _induced_forcing(u, data.frozen, givenF)
        res = nondiv_residual_jet(u, MapJet(F) if m > 1 else F)
        Du = u.gradient()
        md = metric_from_gradient(Du)
        lead = (md.g_inv[0, 0] * md.sqrt_det).truncate(K - 2).restrict_zero(axis=0)
        c0 = lead.coefficient((0, 0, 0))
        if not c0:
            raise CKError("non-characteristic condition fails: zero leading term")
        lead_inv = lead.reciprocal()
        factor = rational(1, (k + 2) * (k + 1)) if mode == "exact" else 1.0 / (
            (k + 2) * (k + 1)
        )
        for a in solved:
            slab = res.components[a].axis_slice(k, axis=0)
            if slab.is_zero():
                continue
            corr = (slab * lead_inv).truncate(K - 2 - k) if K - 2 - k >= 0 else None
            corr = corr.extend(K).shift_axis(k + 2, axis=0).scale(factor)
            u = MapJet(
                [u[b] - corr if b == a else u[b] for b in range(m)]
            )
    return u


def induced_forcing(u: MapJet, frozen_indices, degree=None):
    """Public wrapper recovering the forcing of frozen components."""
    m = len(u)
    given = [Jet.zero(u.degree - 2, u.mode) for _ in range(m)]
    return _induced_forcing(u, set(frozen_indices), given)


def compute_forcing(v: MapJet):
    """Forcing of the frozen first component: 2 sqrt(det g) g^{23} / (1 + x2^2 + x3^2).

    Requires v1 = x2 x3 exactly; cross-checked against the divergence form.
    """
    K = v.degree
    expected = Jet.monomial((0, 1, 1), 1, K, v.mode)
    if v[0] != expected:
        raise CKError("first component must be exactly x2*x3")
    Du = v.gradient()
    md = metric_from_gradient(Du)
    denom = Jet(K - 1, v.mode, {(0, 0, 0): 1, (0, 2, 0): 1, (0, 0, 2): 1})
    f = (md.sqrt_det * md.g_inv[1, 2]).scale(2) * denom.reciprocal()
    # internal consistency: the divergence form of the same quantity
    from .mss import outer_residual_jet

    div = outer_residual_jet(v).components[0]
    if f.truncate(K - 2) != div:
        raise CKError("forcing formula disagrees with divergence form")
    return f


def build_potential(f: Jet, delta):
    """H with d1 H = f exactly and H(0) = delta.

    H = delta - C |x|^2 / 2 + int_0^{x1} h, where f = -C x1 + h.
    """
    C = -f.coefficient((1, 0, 0))
    K = f.degree
    h = f + Jet.monomial((1, 0, 0), C, K, f.mode)
    H = Jet(
        K + 1,
        f.mode,
        {
            (0, 0, 0): delta,
            (2, 0, 0): -C / 2,
            (0, 2, 0): -C / 2,
            (0, 0, 2): -C / 2,
        },
    )
    return H + h.integrate(0)


@dataclass
class LevelSetRegion:
    """Connected component of {H > 0} containing the origin, sampled."""

    potential: Jet
    threshold: float
    boundary_points: np.ndarray  # (S, 3)
    boundary_normals: np.ndarray  # (S, 3), outward (aligned with -grad H)
    contains_origin: bool
    convexity_margin: float  # max tangential Hessian eigenvalue (negative = ok)
    radius_scale: float

    @property
    def convex_ok(self):
        return self.convexity_margin < 0


def _jet_gradient_batch(H: Jet, pts):
    parts = [H.partial(a) for a in range(3)]
    return np.stack([p.eval_batch(pts) for p in parts], axis=-1)


def _jet_hessian_batch(H: Jet, pts):
    out = np.empty(pts.shape[:-1] + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            vals = H.partial(i).partial(j).eval_batch(pts)
            out[..., i, j] = vals
            out[..., j, i] = vals
    return out


def _fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([z, r * np.cos(phi), r * np.sin(phi)], axis=-1)


def _ray_roots(H: Jet, dirs, r_max, iters=60):
    """First zero of H along rays from the origin; vectorized bisection."""
    dirs = np.atleast_2d(dirs)
    steps = np.linspace(0.0, r_max, 65)
    vals = H.eval_batch(dirs[None, :, :] * steps[:, None, None])  # (65, n)
    nonpos = vals <= 0.0
    if not nonpos.any(axis=0).all():
        raise CKError("no sign change along ray: delta too large for truncation")
    first = np.argmax(nonpos, axis=0)
    if (first == 0).any():
        raise CKError("potential not positive at origin")
    lo, hi = steps[first - 1], steps[first]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = H.eval_batch(dirs * mid[:, None]) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def extract_region(H: Jet, delta, samples=256):
    """Ray-marched boundary of the component of {H > 0} around the origin."""
    Hf = H.to_float() if H.mode == "exact" else H
    delta = float(delta)
    if delta <= 0:
        raise CKError("degenerate region: delta must be positive")
    if Hf.eval_batch(np.zeros((1, 3)))[0] <= 0:
        raise CKError("origin not inside the region")
    # H ~ delta - C |x|^2 / 2 to leading order
    C = abs(Hf.partial(0).coefficient((1, 0, 0)))
    scale = math.sqrt(2.0 * delta / C)
    r_max = 3.0 * scale
    # concavity of the polynomial on the working ball (precondition check)
    probe = _fibonacci_sphere(128) * (r_max * np.random.default_rng(7).random((128, 1)))
    eigs = np.linalg.eigvalsh(_jet_hessian_batch(Hf, probe))
    if eigs.max() >= 0:
        raise CKError("potential is not concave on the working ball")
    dirs = _fibonacci_sphere(samples)
    radii = _ray_roots(Hf, dirs, r_max)
    pts = dirs * radii[:, None]
    grads = _jet_gradient_batch(Hf, pts)
    normals = -grads / np.linalg.norm(grads, axis=-1, keepdims=True)
    # convexity of the region: tangential restriction of D^2 H is negative
    hess = _jet_hessian_batch(Hf, pts)
    margin = -np.inf
    for p in range(samples):
        nu = normals[p]
        # orthonormal tangent frame
        t1 = np.cross(nu, [1.0, 0.0, 0.0])
        if np.linalg.norm(t1) < 1e-8:
            t1 = np.cross(nu, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nu, t1)
        T = np.stack([t1, t2], axis=1)
        restr = T.T @ hess[p] @ T
        margin = max(margin, float(np.linalg.eigvalsh(restr).max()))
    return LevelSetRegion(
        potential=H,
        threshold=0.0,
        boundary_points=pts,
        boundary_normals=normals,
        contains_origin=True,
        convexity_margin=margin,
        radius_scale=scale,
    )


def locate_constraint_curve(H: Jet, region: LevelSetRegion, samples=64):
    """Points of {d1 H = 0} on the region boundary, by bisection in latitude."""
    Hf = H.to_float() if H.mode == "exact" else H
    dH1 = Hf.partial(0)
    r_max = 3.0 * region.radius_scale
    phi = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    c, s = np.cos(phi), np.sin(phi)

    def boundary_points(t):
        w = np.sqrt(1.0 - t * t)
        dirs = np.stack([t, w * c, w * s], axis=-1)
        return dirs * _ray_roots(Hf, dirs, r_max)[:, None]

    lo = np.full(samples, -0.4)
    hi = np.full(samples, 0.4)
    flo = dH1.eval_batch(boundary_points(lo))
    fhi = dH1.eval_batch(boundary_points(hi))
    if (flo * fhi > 0).any():
        raise CKError("constraint curve not bracketed in latitude band")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        fm = dH1.eval_batch(boundary_points(mid))
        left = fm * flo <= 0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        flo = np.where(left, flo, fm)
    return boundary_points(0.5 * (lo + hi))


def _metric_factor(v: MapJet, pts, normals):
    """(1 + x2^2 + x3^2) / (sqrt(det g) g^{nu nu}) at boundary samples."""
    vf = v.to_float() if v.mode == "exact" else v
    Du = vf.gradient().eval_batch(pts)  # (S, m, 3)
    g = np.eye(3) + np.einsum("saj,sak->sjk", Du, Du)
    sdet = np.sqrt(np.linalg.det(g))
    gnn = np.einsum("sj,sjk,sk->s", normals, np.linalg.inv(g), normals)
    poly = 1.0 + pts[:, 1] ** 2 + pts[:, 2] ** 2
    return poly / (sdet * gnn), Du


@dataclass
class TransitionChecks:
    """Positivity margins of the constrained solution's first derivative
    across the region boundary."""

    off_curve_margins: np.ndarray
    off_curve_sign_ok: bool
    curve_margins: np.ndarray
    curve_jump_magnitudes: np.ndarray
    n_off: int
    n_curve: int

    @property
    def passed(self):
        return (
            self.off_curve_sign_ok
            and (self.off_curve_margins > 0).all()
            and (self.curve_margins > 0).all()
        )


def boundary_transition_checks(
    v: MapJet, H: Jet, region: LevelSetRegion, curve_samples=64, curve_tol=1e-4
):
    """Check d_nu(d1 w1) > 0 off the constraint curve and the third-order
    positivity on it, through the boundary-jet identities."""
    Hf = H.to_float() if H.mode == "exact" else H
    pts = region.boundary_points
    normals = region.boundary_normals
    d1H = Hf.partial(0).eval_batch(pts)
    off = np.abs(d1H) > curve_tol
    factor, _ = _metric_factor(v, pts[off], normals[off])
    nu1 = normals[off, 0]
    # nu = A e1 + B tau with 1/A = nu1; the normal derivative of d1 w1 is
    # -factor * d1H / A, positive when A and -d1H share sign
    margins_off = -factor * d1H[off] * nu1
    sign_ok = bool(np.all(nu1 * d1H[off] < 0))

    curve_pts = locate_constraint_curve(H, region, samples=curve_samples)
    grads = _jet_gradient_batch(Hf, curve_pts)
    curve_normals = -grads / np.linalg.norm(grads, axis=-1, keepdims=True)
    factor_c, _ = _metric_factor(v, curve_pts, curve_normals)
    d11H = Hf.partial(0).partial(0).eval_batch(curve_pts)
    margins_curve = -factor_c * d11H
    jump = np.abs(factor_c * Hf.partial(0).eval_batch(curve_pts))
    return TransitionChecks(
        off_curve_margins=margins_off,
        off_curve_sign_ok=sign_ok,
        curve_margins=margins_curve,
        curve_jump_magnitudes=jump,
        n_off=int(off.sum()),
        n_curve=len(curve_pts),
    )


class FreeBoundaryExtension:
    """Monotone C^{1,1}-style surrogate of the glued solution outside the
    locked region.

    The first component integrates a nonnegative slope field built from the
    boundary-jet identities (so d1 w1 >= 0 holds exactly, vanishing exactly
    on the closed region); the second adds a Hessian-jump correction
    quadratic in the potential.  Used for boundary data, warm starts and
    swap examples; it is not itself an exact solution away from the
    interface.
    """

    def __init__(self, v: MapJet, H: Jet):
        self.v = v.to_float() if v.mode == "exact" else v
        self.H = H.to_float() if H.mode == "exact" else H
        self.dH = [self.H.partial(a) for a in range(3)]
        self.d1H = self.dH[0]
        self.d11H = self.d1H.partial(0)
        self.Dv = self.v.gradient()

    # ------------------------------------------------------------ slope field
    def _fields(self, pts):
        pts = np.asarray(pts, dtype=float)
        grad = np.stack([d.eval_batch(pts) for d in self.dH], axis=-1)
        norm = np.linalg.norm(grad, axis=-1)
        safe = norm > 1e-13
        nu = np.where(
            safe[..., None], -grad / np.maximum(norm, 1e-300)[..., None], 0.0
        )
        Du = self.Dv.eval_batch(pts)
        g = np.eye(3) + np.einsum("...aj,...ak->...jk", Du, Du)
        sdet = np.sqrt(np.linalg.det(g))
        gnn = np.einsum("...j,...jk,...k->...", nu, np.linalg.inv(g), nu)
        poly = 1.0 + pts[..., 1] ** 2 + pts[..., 2] ** 2
        # the factor only multiplies quantities vanishing where grad H does
        # (deep inside the locked region), so zero is the right filler
        factor = np.where(safe, poly / np.where(safe, sdet * gnn, 1.0), 0.0)
        return grad, norm, factor, Du

    def slope1(self, pts):
        """d1 of the first component: mu * tau + c * tau^2 / 2 >= 0, with
        tau = max(-H, 0)/|grad H| vanishing exactly on the region."""
        pts = np.asarray(pts, dtype=float)
        grad, norm, factor, _ = self._fields(pts)
        safe_norm = np.where(norm > 1e-13, norm, 1.0)
        Hval = self.H.eval_batch(pts)
        tau = np.maximum(-Hval, 0.0) / safe_norm
        d1H = self.d1H.eval_batch(pts)
        mu = factor * d1H**2 / safe_norm
        curv = np.maximum(-factor * self.d11H.eval_batch(pts), 0.0)
        return mu * tau + 0.5 * curv * tau * tau

    def _anchor(self, yz, bracket):
        """x1 on each (x2, x3)-line where d1 H vanishes (potential maximum)."""
        lo = np.full(yz.shape[0], bracket[0])
        hi = np.full(yz.shape[0], bracket[1])

        def val(t):
            pts = np.stack([t, yz[:, 0], yz[:, 1]], axis=-1)
            return self.d1H.eval_batch(pts)

        flo = val(lo)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = val(mid)
            swap = fm * flo <= 0
            hi = np.where(swap, mid, hi)
            lo = np.where(swap, lo, mid)
            flo = np.where(swap, flo, fm)
        return 0.5 * (lo + hi)

    def value_batch(self, pts, bracket=(-0.5, 0.5), quad_nodes=24):
        """Map values at (N, 3) points."""
        pts = np.asarray(pts, dtype=float)
        yz = pts[:, 1:]
        anchors = self._anchor(yz, bracket)
        # first component: x2 x3 + integral of the slope field from the anchor
        nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
        a, b = anchors, pts[:, 0]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        t = mid[:, None] + half[:, None] * nodes[None, :]
        qpts = np.stack(
            [t, np.repeat(yz[:, :1], quad_nodes, 1), np.repeat(yz[:, 1:], quad_nodes, 1)],
            axis=-1,
        )
        slopes = self.slope1(qpts.reshape(-1, 3)).reshape(t.shape)
        w1 = pts[:, 1] * pts[:, 2] + half * (slopes * weights[None, :]).sum(1)
        # second component: jump correction quadratic in the potential
        grad, norm, factor, Du = self._fields(pts)
        Hval = self.H.eval_batch(pts)
        s = np.minimum(Hval, 0.0)
        d1H = self.d1H.eval_batch(pts)
        jump2 = -d1H * (pts[:, 2] * Du[:, 1, 1] + pts[:, 1] * Du[:, 1, 2]) * factor / (
            1.0 + pts[:, 1] ** 2 + pts[:, 2] ** 2
        )
        safe = norm > 1e-13
        corr2 = np.where(safe, 0.5 * s * s * jump2 / np.where(safe, norm, 1.0) ** 2, 0.0)
        w2 = self.v[1].eval_batch(pts) + corr2
        return np.stack([w1, w2], axis=-1)

    def d1w1_batch(self, pts):
        return self.slope1(pts)
