"""The graph-area integrand, its gradient, and the local convexity property.

For an m x n matrix M the integrand is F(M) = sqrt(det(I + M^T M)), the
volume density of the graph of a map with gradient M.  The key structural
fact used by the calibration machinery is that for |N| small,

    F(M) >= |F(N) + DF(N) . (M - N)|        for all M,

with equality only at M = N.  The threshold is never quantified in closed
form; :func:`estimate_delta` certifies a working value empirically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def area_integrand(M):
    """F(M) = sqrt(det(I + M^T M)) for M of shape (..., m, n)."""
    M = np.asarray(M, dtype=float)
    if not np.isfinite(M).all():
        raise ValueError("non-finite gradient matrix")
    m = M.shape[-2]
    S = np.eye(m) + M @ np.swapaxes(M, -1, -2)
    return np.sqrt(np.linalg.det(S))


def area_gradient(M):
    """DF(M), an (..., m, n) matrix; equals sqrt(det g) * M g^{-1}."""
    M = np.asarray(M, dtype=float)
    if not np.isfinite(M).all():
        raise ValueError("non-finite gradient matrix")
    m = M.shape[-2]
    S = np.eye(m) + M @ np.swapaxes(M, -1, -2)
    F = np.sqrt(np.linalg.det(S))
    return F[..., None, None] * np.linalg.solve(S, M)


def area_and_gradient(M):
    """F and DF in one pass (shared m x m factorization)."""
    M = np.asarray(M, dtype=float)
    m = M.shape[-2]
    S = np.eye(m) + M @ np.swapaxes(M, -1, -2)
    F = np.sqrt(np.linalg.det(S))
    return F, F[..., None, None] * np.linalg.solve(S, M)


def singular_values_squared(M):
    """Eigenvalues of M^T M via the m x m Gram matrix (no general SVD)."""
    M = np.asarray(M, dtype=float)
    S = M @ np.swapaxes(M, -1, -2)
    return np.linalg.eigvalsh(S)


def convexity_margin(N, M):
    """F(M) - |F(N) + DF(N).(M - N)|, batched over leading axes.

    Nonnegative whenever |N| is below the certified threshold; zero exactly
    at M = N and strictly positive otherwise.
    """
    N = np.asarray(N, dtype=float)
    M = np.asarray(M, dtype=float)
    FN, DFN = area_and_gradient(N)
    lin = FN + np.sum(DFN * (M - N), axis=(-2, -1))
    return area_integrand(M) - np.abs(lin)


@dataclass
class ConvexityCertificate:
    """Result of a randomized certification sweep for one matrix shape."""

    m: int
    n: int
    delta: float
    samples: int
    min_margin: float
    min_margin_separated: float
    violations: int

    @property
    def passed(self):
        return self.violations == 0


_DELTA_GRID = (0.2, 0.1, 0.05, 0.02)


def _sample_ball(rng, count, m, n, radius):
    """Matrices with Frobenius norm <= radius, uniform-ish in the ball."""
    X = rng.standard_normal((count, m, n))
    norms = np.linalg.norm(X, axis=(1, 2), keepdims=True)
    radii = radius * rng.random((count, 1, 1)) ** (1.0 / (m * n))
    return X / np.maximum(norms, 1e-300) * radii


def certify_delta(m, n, budget, delta, rng, max_norm=10.0, tol=-1e-12):
    """Run one certification sweep at a fixed base-point radius ``delta``."""
    if budget <= 0:
        raise ValueError("empty budget")
    N = _sample_ball(rng, budget, m, n, delta)
    # half the competitors are local (where failures of convexity would
    # appear first), half range over the large ball
    M_far = _sample_ball(rng, budget - budget // 2, m, n, max_norm)
    M_near = N[: budget // 2] + _sample_ball(rng, budget // 2, m, n, 4 * delta)
    M = np.concatenate([M_near, M_far], axis=0)
    margins = convexity_margin(N, M)
    violations = int(np.count_nonzero(margins < tol))
    sep = np.linalg.norm((M - N).reshape(budget, -1), axis=1) >= 1e-3
    min_sep = float(margins[sep].min()) if sep.any() else float("inf")
    return ConvexityCertificate(
        m=m,
        n=n,
        delta=float(delta),
        samples=budget,
        min_margin=float(margins.min()),
        min_margin_separated=min_sep,
        violations=violations,
    )


def estimate_delta(m, n, budget, rng=None, grid=_DELTA_GRID):
    """Largest delta from ``grid`` passing a randomized sweep of ``budget``.

    Returns the certificate of the largest passing delta, or the (failing)
    certificate of the smallest grid value if none pass.
    """
    if budget <= 0:
        raise ValueError("empty budget")
    if rng is None:
        rng = np.random.default_rng(0)
    last = None
    for delta in sorted(grid, reverse=True):
        cert = certify_delta(m, n, budget, delta, rng)
        if cert.passed:
            return cert
        last = cert
    return last
