"""Concrete dynamical systems: Van der Pol and the planar circular restricted
three-body problem, in exact and polynomialized form.

The three-body model uses rotating-frame coordinates normalized so the
primaries sit at (-mu, 0) and (1-mu, 0) with unit separation and unit angular
velocity.  The polynomialized variant replaces the two inverse square roots
by a fitted rational Q(s)/P(s) of the squared distance s, which turns the
right-hand side into the polynomial vector F with positive multiplier
R = s1 s2 P(s1) P(s2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import poly
from .poly import MultiPoly
from .ratfit import RationalApprox

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemModel:
    """An ODE system together with its optional polynomialized form.

    exact_rhs and jacobian are plain callables on the state vector; the
    polynomial pieces (poly_rhs F, multiplier R, equality H, inequalities
    G_j) feed the SOS machinery.  With multiplier == 1, poly_rhs is the
    right-hand side itself.
    """

    name: str
    nvars: int
    exact_rhs: object
    jacobian: object
    observable: MultiPoly
    poly_rhs: tuple = ()
    multiplier: MultiPoly | None = None
    equality: MultiPoly | None = None
    inequalities: tuple = ()
    params: dict = field(default_factory=dict)

    def rhs_is_polynomial(self):
        return bool(self.poly_rhs) and (
            self.multiplier is None
            or self.multiplier.terms == {(0,) * self.nvars: 1.0}
        )


@dataclass(frozen=True)
class Pcr3bpParams:
    mu: float = 0.0125
    e: float = -1.58907
    r_earth: float = 0.01
    r_moon: float = 0.01
    r_outer: float = 1.13

    def __post_init__(self):
        if not 0 < self.mu < 0.5:
            raise ValueError("mass ratio must lie in (0, 1/2)")
        if self.r_earth <= 0 or self.r_moon <= 0:
            raise ValueError("exclusion radii must be positive")
        if self.r_outer <= 1:
            raise ValueError("outer radius must exceed 1")


# -- Van der Pol -------------------------------------------------------------


def make_vdp(mu: float) -> SystemModel:
    """Van der Pol oscillator xdot = y, ydot = mu (1 - x^2) y - x.

    Default observable is x^2 + y^2.
    """
    mu = float(mu)

    def rhs(a):
        x, y = a
        return np.array([y, mu * (1.0 - x * x) * y - x])

    def jac(a):
        x, y = a
        return np.array([
            [0.0, 1.0],
            [-2.0 * mu * x * y - 1.0, mu * (1.0 - x * x)],
        ])

    f1 = MultiPoly(2, {(0, 1): 1.0})
    f2 = MultiPoly(2, {(0, 1): mu, (2, 1): -mu, (1, 0): -1.0})
    phi = MultiPoly(2, {(2, 0): 1.0, (0, 2): 1.0})
    return SystemModel(
        name="vdp",
        nvars=2,
        exact_rhs=rhs,
        jacobian=jac,
        observable=phi,
        poly_rhs=(f1, f2),
        multiplier=MultiPoly.constant(2, 1.0),
        params={"mu": mu},
    )


def with_multiplier(system: SystemModel, multiplier: MultiPoly) -> SystemModel:
    """Multiply a polynomial right-hand side by a positive polynomial.

    Used to exercise the rational-multiplier formulation on systems whose
    dynamics are already polynomial.
    """
    if not system.rhs_is_polynomial():
        raise ValueError("base system must have a plain polynomial rhs")
    new_rhs = tuple(poly.multiply(multiplier, f) for f in system.poly_rhs)
    return SystemModel(
        name=system.name + "+mult",
        nvars=system.nvars,
        exact_rhs=system.exact_rhs,
        jacobian=system.jacobian,
        observable=system.observable,
        poly_rhs=new_rhs,
        multiplier=multiplier,
        equality=system.equality,
        inequalities=system.inequalities,
        params=dict(system.params),
    )


def norm_squared_multiplier(nvars: int, degree: int) -> MultiPoly:
    """(1 + |a|^2)^(degree/2), the default positive-definite multiplier."""
    if degree % 2:
        raise ValueError("multiplier degree must be even")
    base = MultiPoly.constant(nvars, 1.0)
    for i in range(nvars):
        base = base + poly.MultiPoly.monomial(
            nvars, tuple(2 if j == i else 0 for j in range(nvars)))
    return base ** (degree // 2)


# -- PCR3BP ------------------------------------------------------------------

SINGULARITY_RADIUS = 1e-12


def _distances(x, y, mu):
    r1 = math.hypot(x + mu, y)
    r2 = math.hypot(x - 1.0 + mu, y)
    return r1, r2


def effective_potential(x, y, mu):
    """Rotating-frame effective potential U(x, y)."""
    r1, r2 = _distances(x, y, mu)
    if r1 < SINGULARITY_RADIUS or r2 < SINGULARITY_RADIUS:
        raise ZeroDivisionError("state at a primary")
    return -0.5 * (x * x + y * y) - (1.0 - mu) / r1 - mu / r2


def potential_gradient(x, y, mu):
    r1, r2 = _distances(x, y, mu)
    if r1 < SINGULARITY_RADIUS or r2 < SINGULARITY_RADIUS:
        raise ZeroDivisionError("state at a primary")
    gx = -x + (1.0 - mu) * (x + mu) / r1**3 + mu * (x - 1.0 + mu) / r2**3
    gy = -y + (1.0 - mu) * y / r1**3 + mu * y / r2**3
    return gx, gy


def energy(a, mu):
    """Conserved energy E = (u^2 + v^2)/2 + U(x, y)."""
    x, y, u, v = a
    return 0.5 * (u * u + v * v) + effective_potential(x, y, mu)


def pcr3bp_rhs(a, mu):
    x, y, u, v = a
    r1, r2 = _distances(x, y, mu)
    if r1 < SINGULARITY_RADIUS or r2 < SINGULARITY_RADIUS:
        raise ZeroDivisionError("state at a primary")
    r13 = r1**3
    r23 = r2**3
    ax = 2.0 * v + x - (1.0 - mu) * (x + mu) / r13 - mu * (x - 1.0 + mu) / r23
    ay = -2.0 * u + y - (1.0 - mu) * y / r13 - mu * y / r23
    return np.array([u, v, ax, ay])


def pcr3bp_jacobian(a, mu):
    """Closed-form partials of the rotating-frame right-hand side."""
    x, y = a[0], a[1]
    r1, r2 = _distances(x, y, mu)
    r13, r15 = r1**3, r1**5
    r23, r25 = r2**3, r2**5
    one = 1.0 - mu
    uxx = -1.0 + one / r13 + mu / r23 \
        - 3.0 * one * (x + mu) ** 2 / r15 - 3.0 * mu * (x - 1.0 + mu) ** 2 / r25
    uxy = -3.0 * one * (x + mu) * y / r15 - 3.0 * mu * (x - 1.0 + mu) * y / r25
    uyy = -1.0 + one / r13 + mu / r23 \
        - 3.0 * one * y * y / r15 - 3.0 * mu * y * y / r25
    return np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-uxx, -uxy, 0.0, 2.0],
        [-uxy, -uyy, -2.0, 0.0],
    ])


def pcr3bp_observable(mu: float) -> MultiPoly:
    """Sum of squared distances from both primaries,
    (x+mu)^2 + 2 y^2 + (x+mu-1)^2."""
    return MultiPoly(4, {
        (2, 0, 0, 0): 2.0,
        (1, 0, 0, 0): 2.0 * mu + 2.0 * (mu - 1.0),
        (0, 0, 0, 0): mu * mu + (mu - 1.0) ** 2,
        (0, 2, 0, 0): 2.0,
    })


def make_pcr3bp_exact(params: Pcr3bpParams) -> SystemModel:
    mu = params.mu

    def rhs(a):
        return pcr3bp_rhs(a, mu)

    def jac(a):
        return pcr3bp_jacobian(a, mu)

    return SystemModel(
        name="pcr3bp",
        nvars=4,
        exact_rhs=rhs,
        jacobian=jac,
        observable=pcr3bp_observable(mu),
        params={"mu": mu, "e": params.e, "r_earth": params.r_earth,
                "r_moon": params.r_moon, "r_outer": params.r_outer},
    )


def _squared_distance_polys(mu):
    # s1 = (x+mu)^2 + y^2, s2 = (x-1+mu)^2 + y^2 as polynomials in (x,y,u,v)
    s1 = MultiPoly(4, {
        (2, 0, 0, 0): 1.0, (1, 0, 0, 0): 2.0 * mu, (0, 0, 0, 0): mu * mu,
        (0, 2, 0, 0): 1.0,
    })
    c = mu - 1.0
    s2 = MultiPoly(4, {
        (2, 0, 0, 0): 1.0, (1, 0, 0, 0): 2.0 * c, (0, 0, 0, 0): c * c,
        (0, 2, 0, 0): 1.0,
    })
    return s1, s2


def _poly_of_s(coeffs, s_poly):
    """Univariate polynomial in s composed with the squared-distance poly."""
    out = MultiPoly.constant(4, coeffs[0])
    power = MultiPoly.constant(4, 1.0)
    for c in coeffs[1:]:
        power = poly.multiply(power, s_poly)
        out = out + power.scale(c)
    return out


def make_pcr3bp_poly(params: Pcr3bpParams, approx: RationalApprox,
                     check_samples: int = 1000, seed: int = 0) -> SystemModel:
    """Polynomialized PCR3BP: F, R, the energy equality H, and the region
    inequalities G1..G3.

    The rational approximation must be positive on the squared-distance range
    of the region, [min(R_E, R_M)^2, (R_G + mu)^2]; the fitted denominator is
    rejected otherwise at fit time.  On construction the model is checked on
    sampled region points: R > 0 everywhere and F consistent with R times the
    rational right-hand side.
    """
    mu = params.mu
    needed_lo = min(params.r_earth, params.r_moon) ** 2
    if approx.domain[0] > needed_lo * (1 + 1e-12):
        raise ValueError(
            f"approximation domain starts at {approx.domain[0]}, needs "
            f"{needed_lo}")

    s1, s2 = _squared_distance_polys(mu)
    p1 = _poly_of_s(approx.p_coeffs, s1)
    p2 = _poly_of_s(approx.p_coeffs, s2)
    q1 = _poly_of_s(approx.q_coeffs, s1)
    q2 = _poly_of_s(approx.q_coeffs, s2)

    s1s2 = poly.multiply(s1, s2)
    p1p2 = poly.multiply(p1, p2)
    multiplier = poly.multiply(s1s2, p1p2)  # R = s1 s2 P(s1) P(s2)

    xv = MultiPoly.variable(4, 0)
    yv = MultiPoly.variable(4, 1)
    uv = MultiPoly.variable(4, 2)
    vv = MultiPoly.variable(4, 3)

    grav1 = poly.multiply(
        poly.multiply(xv + mu, poly.multiply(s2, p2)), q1).scale(1.0 - mu)
    grav2 = poly.multiply(
        poly.multiply(xv + (mu - 1.0), poly.multiply(s1, p1)), q2).scale(mu)
    grav1y = poly.multiply(poly.multiply(yv, poly.multiply(s2, p2)),
                           q1).scale(1.0 - mu)
    grav2y = poly.multiply(poly.multiply(yv, poly.multiply(s1, p1)),
                           q2).scale(mu)

    f1 = poly.multiply(uv, multiplier)
    f2 = poly.multiply(vv, multiplier)
    f3 = poly.multiply(vv.scale(2.0) + xv, multiplier) - grav1 - grav2
    f4 = poly.multiply(uv.scale(-2.0) + yv, multiplier) - grav1y - grav2y

    # energy equality H in terms of 2e
    kin = poly.multiply(uv, uv) + poly.multiply(vv, vv) \
        - poly.multiply(xv, xv) - poly.multiply(yv, yv) \
        - MultiPoly.constant(4, 2.0 * params.e)
    equality = poly.multiply(kin, p1p2) \
        - poly.multiply(p2, q1).scale(2.0 * (1.0 - mu)) \
        - poly.multiply(p1, q2).scale(2.0 * mu)

    g1 = s1 - MultiPoly.constant(4, params.r_earth**2)
    g2 = s2 - MultiPoly.constant(4, params.r_moon**2)
    g3 = MultiPoly.constant(4, params.r_outer**2) \
        - poly.multiply(xv, xv) - poly.multiply(yv, yv)

    system = SystemModel(
        name="pcr3bp-poly",
        nvars=4,
        exact_rhs=lambda a: pcr3bp_rhs(a, mu),
        jacobian=lambda a: pcr3bp_jacobian(a, mu),
        observable=pcr3bp_observable(mu),
        poly_rhs=(f1, f2, f3, f4),
        multiplier=multiplier,
        equality=equality,
        inequalities=(g1, g2, g3),
        params={"mu": mu, "e": params.e, "r_earth": params.r_earth,
                "r_moon": params.r_moon, "r_outer": params.r_outer,
                "approx_error": approx.max_rel_error},
    )

    if check_samples:
        pts = sample_energy_surface(params, check_samples,
                                    np.random.default_rng(seed))
        rmul = poly.PolyEvaluator(multiplier).at_many(pts)
        if np.min(rmul) <= 0:
            raise ValueError("multiplier R not positive on sampled region")
        f_evals = [poly.PolyEvaluator(f).at_many(pts) for f in system.poly_rhs]
        tol = approx.max_rel_error
        for k, a in enumerate(pts):
            rf = rmul[k] * pcr3bp_rhs(a, mu)
            fa = np.array([fe[k] for fe in f_evals])
            err = np.max(np.abs(fa - rf))
            if err > tol * (1.0 + np.max(np.abs(rf))):
                raise ValueError(
                    f"polynomialized rhs deviates from R*f at {a}: {err}")
    return system


def rational_rhs(system: SystemModel):
    """F/R as a callable: the rational approximation of the right-hand side."""
    f_evals = [poly.PolyEvaluator(f) for f in system.poly_rhs]
    r_eval = poly.PolyEvaluator(system.multiplier)

    def rhs(a):
        a = np.asarray(a, dtype=float)
        r = r_eval.at(a)
        return np.array([fe.at(a) for fe in f_evals]) / r

    return rhs


def sample_energy_surface(params: Pcr3bpParams, n, rng) -> np.ndarray:
    """States on the energy surface inside the region of interest.

    Positions are drawn uniformly over the admissible (x, y) set (inside the
    outer circle, outside both exclusion disks, kinetic energy nonnegative);
    the velocity direction is uniform with magnitude fixed by the energy.
    """
    mu, e = params.mu, params.e
    out = np.empty((n, 4))
    count = 0
    while count < n:
        x = rng.uniform(-params.r_outer, params.r_outer)
        y = rng.uniform(-params.r_outer, params.r_outer)
        if x * x + y * y > params.r_outer**2:
            continue
        r1sq = (x + mu) ** 2 + y * y
        r2sq = (x - 1.0 + mu) ** 2 + y * y
        if r1sq < params.r_earth**2 or r2sq < params.r_moon**2:
            continue
        speed_sq = 2.0 * (e - effective_potential(x, y, mu))
        if speed_sq < 0.0:
            continue
        theta = rng.uniform(0.0, 2.0 * np.pi)
        speed = math.sqrt(speed_sq)
        out[count] = (x, y, speed * math.cos(theta), speed * math.sin(theta))
        count += 1
    return out


# -- equilibria and Hill regions --------------------------------------------


def lagrange_points(mu: float) -> np.ndarray:
    """The five equilibria as full states (x, y, 0, 0).

    L1, L2, L3 are collinear roots of dU/dx on y = 0 in their standard
    brackets; L4, L5 are the equilateral points.
    """
    if not 0 < mu < 0.5:
        raise ValueError("mass ratio must lie in (0, 1/2)")

    def dudx(x):
        return potential_gradient(x, 0.0, mu)[0]

    eps = 1e-9
    brackets = [
        (-mu + eps * 10, 1.0 - mu - eps * 10),   # L1 between the primaries
        (1.0 - mu + eps * 10, 2.5),              # L2 beyond the small primary
        (-2.5, -mu - eps * 10),                  # L3 opposite side
    ]
    cols = []
    for lo, hi in brackets:
        lo_v, hi_v = dudx(lo), dudx(hi)
        if lo_v * hi_v > 0:
            raise ValueError(f"no sign change of dU/dx in bracket ({lo}, {hi})")
        cols.append(brentq(dudx, lo, hi, xtol=1e-14, rtol=8.9e-16))
    pts = [
        (cols[0], 0.0), (cols[1], 0.0), (cols[2], 0.0),
        (0.5 - mu, math.sqrt(3.0) / 2.0),
        (0.5 - mu, -math.sqrt(3.0) / 2.0),
    ]
    return np.array([(x, y, 0.0, 0.0) for x, y in pts])


HILL_CASES = {
    1: "no transit between realms",
    2: "transit neck between primaries open, exterior closed",
    3: "exterior neck open",
    4: "forbidden realm shrinking",
    5: "no forbidden realm",
}


@dataclass(frozen=True)
class HillClassification:
    case: int
    description: str
    thresholds: tuple  # (e1, e2, e3, e4) = U at L1, L2, L3, L4


def hill_classify(mu: float, e: float) -> HillClassification:
    """Which of the five energy regimes e falls in, with the L-point
    energies that delimit them."""
    pts = lagrange_points(mu)
    e1, e2, e3, e4 = (effective_potential(p[0], p[1], mu) for p in pts[:4])
    if e < e1:
        case = 1
    elif e < e2:
        case = 2
    elif e < e3:
        case = 3
    elif e < e4:
        case = 4
    else:
        case = 5
    return HillClassification(case, HILL_CASES[case], (e1, e2, e3, e4))


def zero_velocity_contour(mu: float, e: float, extent: float = 1.6,
                          n: int = 600) -> np.ndarray:
    """Points on the zero-velocity curve U(x, y) = e.

    Rasterizes U on a grid and interpolates grid-edge sign changes; returns
    an (m, 2) array of (x, y) points for plotting or CSV export.
    """
    xs = np.linspace(-extent, extent, n)
    ys = np.linspace(-extent, extent, n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    r1 = np.hypot(gx + mu, gy)
    r2 = np.hypot(gx - 1.0 + mu, gy)
    r1 = np.maximum(r1, 1e-9)
    r2 = np.maximum(r2, 1e-9)
    u = -0.5 * (gx**2 + gy**2) - (1.0 - mu) / r1 - mu / r2
    f = u - e
    pts = []
    # horizontal edges
    sign_change = f[:-1, :] * f[1:, :] < 0
    i, j = np.nonzero(sign_change)
    t = f[i, j] / (f[i, j] - f[i + 1, j])
    pts.append(np.stack([xs[i] + t * (xs[i + 1] - xs[i]), ys[j]], axis=1))
    # vertical edges
    sign_change = f[:, :-1] * f[:, 1:] < 0
    i, j = np.nonzero(sign_change)
    t = f[i, j] / (f[i, j] - f[i, j + 1])
    pts.append(np.stack([xs[i], ys[j] + t * (ys[j + 1] - ys[j])], axis=1))
    if not pts:
        return np.zeros((0, 2))
    return np.concatenate(pts, axis=0)
