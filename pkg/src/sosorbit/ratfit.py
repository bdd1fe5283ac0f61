"""Rational approximation of the inverse square root on a closed interval.

Fits Q(s)/P(s) ~ s^(-1/2) over [s_min, s_max] by iteratively reweighted least
squares, approximating a least-absolute-residual criterion, and certifies
that P has no real root inside the domain.  The positive denominator is what
makes the polynomialized three-body right-hand side usable as an SOS
multiplier, so positivity is certified both on a dense grid and by a Sturm
sequence root count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

GRID_POINTS = 512
IRLS_ROUNDS = 20
WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class RationalApprox:
    """Coefficients are in ascending powers of s; P is normalized to
    P(s_mid) = 1 at the domain midpoint."""

    p_coeffs: tuple
    q_coeffs: tuple
    domain: tuple
    max_rel_error: float

    def p_at(self, s):
        return np.polynomial.polynomial.polyval(s, self.p_coeffs)

    def q_at(self, s):
        return np.polynomial.polynomial.polyval(s, self.q_coeffs)

    def at(self, s):
        """Rational approximation of s^(-1/2)."""
        return self.q_at(s) / self.p_at(s)


def chebyshev_grid(s_min, s_max, n):
    """Chebyshev points of the first kind mapped to [s_min, s_max].

    Clusters samples near the endpoints; the inverse square root varies
    fastest near s_min (the three-body domain spans four decades).
    """
    k = np.arange(n)
    nodes = np.cos((2 * k + 1) * np.pi / (2 * n))
    return np.sort(0.5 * (s_min + s_max) + 0.5 * (s_max - s_min) * nodes)


def fit_inv_sqrt(s_min, s_max, deg_p, deg_q) -> RationalApprox:
    """Least-absolute-residual fit of Q(s)/P(s) to s^(-1/2) on [s_min, s_max].

    Minimizes sum |Q(s_i) sqrt(s_i) - P(s_i)| over a Chebyshev grid, which is
    the absolute residual |Q - s^(-1/2) P| weighted by sqrt(s) so that each
    sample contributes its relative error.  During the fit P is pinned to 1
    at the domain midpoint, removing the trivial zero solution; the same
    normalization is kept in the result.
    """
    if not (0 < s_min <= s_max):
        raise ValueError("domain must satisfy 0 < s_min <= s_max")
    if deg_p < 0 or deg_q < 0:
        raise ValueError("degrees must be nonnegative")

    s_mid = 0.5 * (s_min + s_max)
    if s_min == s_max:
        grid = np.array([s_min])
    else:
        grid = chebyshev_grid(s_min, s_max, GRID_POINTS)
    inv_sqrt = 1.0 / np.sqrt(grid)

    # residual r = Q(s) - s^(-1/2) P(s), linear in the stacked coefficients
    # [p_0..p_dp, q_0..q_dq]; eliminate p_0 via P(s_mid) = 1.
    pv = np.vander(grid, deg_p + 1, increasing=True)
    qv = np.vander(grid, deg_q + 1, increasing=True)
    mid_pows = np.array([s_mid**j for j in range(deg_p + 1)])

    # columns for free unknowns [p_1..p_dp, q_0..q_dq]
    p_cols = pv[:, 1:] - np.outer(pv[:, 0], mid_pows[1:]) if deg_p else \
        np.zeros((grid.size, 0))
    design = np.hstack([-p_cols * inv_sqrt[:, None], qv])
    target = pv[:, 0] * inv_sqrt  # from p_0 = 1 - sum p_j s_mid^j

    weights = np.ones(grid.size)
    coeffs = np.zeros(design.shape[1])
    for _ in range(IRLS_ROUNDS):
        w = np.sqrt(weights)
        sol, *_ = np.linalg.lstsq(design * w[:, None], target * w, rcond=None)
        coeffs = sol
        resid = design @ coeffs - target
        weights = 1.0 / np.maximum(np.abs(resid), WEIGHT_FLOOR)

    p_free = coeffs[: deg_p]
    q_coeffs = coeffs[deg_p:]
    p0 = 1.0 - float(p_free @ mid_pows[1:]) if deg_p else 1.0
    p_coeffs = np.concatenate([[p0], p_free])

    roots = _real_roots_in_interval(p_coeffs, s_min, s_max)
    if roots:
        raise ValueError(
            f"denominator has real root(s) {roots} inside [{s_min}, {s_max}]; "
            "fit rejected")
    dense = np.linspace(s_min, s_max, 10_000)
    pd = np.polynomial.polynomial.polyval(dense, p_coeffs)
    if np.min(pd) <= 0:
        raise ValueError("denominator not positive on the domain grid")

    qd = np.polynomial.polynomial.polyval(dense, q_coeffs)
    rel = np.abs(qd / pd - 1.0 / np.sqrt(dense)) * np.sqrt(dense)
    approx = RationalApprox(
        p_coeffs=tuple(float(c) for c in p_coeffs),
        q_coeffs=tuple(float(c) for c in q_coeffs),
        domain=(float(s_min), float(s_max)),
        max_rel_error=float(np.max(rel)),
    )
    _equioscillation_check(approx, grid)
    return approx


def approx_error(ra: RationalApprox, npoints) -> tuple[float, float]:
    """Exhaustive grid maximum of the relative error and its location."""
    if npoints < 2:
        raise ValueError("need at least two points")
    s = np.linspace(ra.domain[0], ra.domain[1], int(npoints))
    rel = np.abs(ra.at(s) - 1.0 / np.sqrt(s)) * np.sqrt(s)
    k = int(np.argmax(rel))
    return float(rel[k]), float(s[k])


def _equioscillation_check(ra: RationalApprox, grid):
    """Count sign changes of the residual; a converged least-absolute fit
    should alternate at least deg_p + deg_q + 1 times.  Informational only:
    LAR is not minimax, so this is a sanity signal, not a contract."""
    resid = ra.q_at(grid) - ra.p_at(grid) / np.sqrt(grid)
    signs = np.sign(resid[np.abs(resid) > 0])
    changes = int(np.sum(signs[1:] != signs[:-1])) if signs.size else 0
    want = len(ra.p_coeffs) - 1 + len(ra.q_coeffs) - 1 + 1
    if changes < want and grid.size > 1:
        log.warning(
            "rational fit residual alternates %d times, expected >= %d",
            changes, want)
    return changes


def _sturm_chain(coeffs):
    p = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if p.size <= 1:
        return [p]
    chain = [p, np.polynomial.polynomial.polyder(p)]
    while chain[-1].size > 1 or (chain[-1].size == 1 and chain[-1][0] != 0.0):
        rem = -_poly_rem(chain[-2], chain[-1])
        rem = np.trim_zeros(rem, "b")
        if rem.size == 0:
            break
        chain.append(rem)
    return chain


def _poly_rem(a, b):
    # numpy polydiv works on descending coefficients
    _, rem = np.polydiv(a[::-1], b[::-1])
    return np.atleast_1d(rem)[::-1]


def _sign_variations(chain, x):
    vals = [np.polynomial.polynomial.polyval(x, c) for c in chain]
    signs = [v for v in vals if abs(v) > 1e-300]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def _real_roots_in_interval(coeffs, lo, hi):
    """Real-root isolation by Sturm sequence sign counts on [lo, hi]."""
    p = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if p.size <= 1:
        return []
    chain = _sturm_chain(p)
    count = _sign_variations(chain, lo) - _sign_variations(chain, hi)
    if count <= 0:
        # also catch roots exactly at the endpoints
        for x in (lo, hi):
            if abs(np.polynomial.polynomial.polyval(x, p)) == 0.0:
                return [float(x)]
        return []
    # bisect to localize for the diagnostic message
    roots = []
    stack = [(lo, hi, count)]
    while stack:
        a, b, c = stack.pop()
        if b - a < 1e-12 * max(1.0, abs(b)):
            roots.extend([0.5 * (a + b)] * c)
            continue
        mid = 0.5 * (a + b)
        left = _sign_variations(chain, a) - _sign_variations(chain, mid)
        right = c - left
        if left > 0:
            stack.append((a, mid, left))
        if right > 0:
            stack.append((mid, b, right))
    return sorted(float(r) for r in roots)
