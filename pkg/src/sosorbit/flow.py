"""Trajectory integration, Poincaré maps and Newton refinement of periodic
orbits.

Integration uses adaptive embedded Runge-Kutta stepping with dense output;
section crossings are located by sign change on accepted steps and polished
on the dense interpolant to machine accuracy.  The reduced return map keeps
m = n - n_c coordinates, with removed components recovered from the section
and (for the three-body problem) the energy integral; its Jacobian is
assembled by the total-derivative chain rule from the variational flow
matrix, the crossing-time sensitivity and the constraint sensitivities, and
is validated against finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import systems
from .poly import MultiPoly, PolyEvaluator
from .systems import SystemModel

# Dormand-Prince 5(4) with PI step control and quartic dense output; the
# higher-order DOP853 can be requested per call where 1e-12 tolerances make
# it cheaper.
DEFAULT_METHOD = "RK45"


class FlowError(RuntimeError):
    pass


class TangencyError(FlowError):
    pass


class CrossingNotFound(FlowError):
    pass


class UnboundedTrajectory(FlowError):
    def __init__(self, escape_time, bound):
        super().__init__(f"trajectory escaped |a| <= {bound} at t = {escape_time}")
        self.escape_time = escape_time


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (len(t), n)
    dense: object       # scipy OdeSolution over [t[0], t[-1]]

    def at(self, t):
        return np.atleast_1d(self.dense(t)).T


def integrate_adaptive(system: SystemModel, a0, t_end, tol=1e-10,
                       t_start=0.0, method=DEFAULT_METHOD,
                       max_norm=None) -> Trajectory:
    """Adaptive explicit Runge-Kutta integration with dense output.

    Local error per step is kept at `tol` in mixed absolute/relative norm.
    With `max_norm` set, integration aborts with UnboundedTrajectory once the
    sup norm of the state exceeds it.
    """
    a0 = np.asarray(a0, dtype=float)
    if not np.all(np.isfinite(a0)):
        raise ValueError("non-finite initial state")
    events = None
    if max_norm is not None:
        def escape(t, a):
            return max_norm - np.max(np.abs(a))
        escape.terminal = True
        escape.direction = -1
        events = [escape]
    sol = solve_ivp(
        lambda t, a: system.exact_rhs(a), (t_start, t_end), a0,
        method=method, rtol=tol, atol=tol, dense_output=True, events=events)
    if events and sol.t_events[0].size:
        raise UnboundedTrajectory(float(sol.t_events[0][0]), max_norm)
    if not sol.success:
        raise FlowError(f"integration failed: {sol.message} "
                        f"(last good t = {sol.t[-1]})")
    return Trajectory(sol.t, sol.y.T, sol.sol)


def integrate_variational(system: SystemModel, a0, t_end, tol=1e-10,
                          method=DEFAULT_METHOD):
    """Flow map and its n x n Jacobian from the variational equations.

    Integrates the state together with dJ/dt = Df(a(t)) J from J(0) = I
    along the same adaptive steps.
    """
    a0 = np.asarray(a0, dtype=float)
    n = a0.size

    def rhs(t, z):
        a = z[:n]
        j = z[n:].reshape(n, n)
        dj = system.jacobian(a) @ j
        return np.concatenate([system.exact_rhs(a), dj.ravel()])

    z0 = np.concatenate([a0, np.eye(n).ravel()])
    sol = solve_ivp(rhs, (0.0, t_end), z0, method=method, rtol=tol, atol=tol)
    if not sol.success:
        raise FlowError(f"variational integration failed: {sol.message}")
    zf = sol.y[:, -1]
    return zf[:n], zf[n:].reshape(n, n)


def time_average(system: SystemModel, observable: MultiPoly, a0,
                 t_transient, t_avg, tol=1e-10, max_norm=1e6,
                 method=DEFAULT_METHOD) -> float:
    """Average of the observable over [t_transient, t_transient + t_avg].

    The observable is integrated as an extra quadrature state, so the
    average inherits the integrator accuracy; boundedness is monitored and
    escapes raise UnboundedTrajectory with the escape time.
    """
    a0 = np.asarray(a0, dtype=float)
    n = a0.size
    phi = PolyEvaluator(observable)

    def escape(t, z):
        return max_norm - np.max(np.abs(z[:n]))
    escape.terminal = True
    escape.direction = -1

    def rhs(t, z):
        a = z[:n]
        return np.concatenate([system.exact_rhs(a), [phi.at(a)]])

    z0 = np.concatenate([a0, [0.0]])
    if t_transient > 0:
        sol = solve_ivp(rhs, (0.0, t_transient), z0, method=method,
                        rtol=tol, atol=tol, events=[escape])
        if sol.t_events[0].size:
            raise UnboundedTrajectory(float(sol.t_events[0][0]), max_norm)
        z0 = sol.y[:, -1]
    quad_start = z0[n]
    sol = solve_ivp(rhs, (t_transient, t_transient + t_avg), z0, method=method,
                    rtol=tol, atol=tol, events=[escape])
    if sol.t_events[0].size:
        raise UnboundedTrajectory(float(sol.t_events[0][0]), max_norm)
    return float((sol.y[n, -1] - quad_start) / t_avg)


# -- Poincaré sections -------------------------------------------------------


@dataclass(frozen=True)
class PoincareSection:
    """Hyperplane h(a) = normal . (a - anchor) = 0, crossings counted when h
    passes from negative to positive."""

    normal: tuple
    anchor: tuple

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise ValueError("zero section normal")
        object.__setattr__(self, "normal", tuple(normal / norm))
        object.__setattr__(self, "anchor",
                           tuple(float(x) for x in self.anchor))

    def h(self, a):
        return float(np.dot(self.normal, np.asarray(a) - np.asarray(self.anchor)))


def crossing_time(system: SystemModel, section: PoincareSection, a0,
                  tol=1e-12, horizon=200.0, t_min=1e-6,
                  method=DEFAULT_METHOD, direction=1.0):
    """First directed crossing after t_min: time and state with |h| <= 1e-12.

    Sign changes are detected by the integrator's event machinery on accepted
    steps; the root is then polished on the dense-output interpolant with
    bisection followed by Newton.  `direction` +1 counts crossings with h
    going negative to positive, -1 the mirrored ones.
    """
    a0 = np.asarray(a0, dtype=float)
    xi = np.asarray(section.normal) * np.sign(direction)
    anchor = np.asarray(section.anchor)

    def event(t, a):
        return float(np.dot(xi, a - anchor))
    event.terminal = True
    event.direction = 1.0

    # advance past t_min first so a start exactly on the section does not
    # register as the trivial departure crossing
    start = solve_ivp(lambda t, a: system.exact_rhs(a), (0.0, t_min), a0,
                      method=method, rtol=tol, atol=tol)
    if not start.success:
        raise FlowError(f"integration failed near t = 0: {start.message}")
    sol = solve_ivp(lambda t, a: system.exact_rhs(a), (t_min, horizon),
                    start.y[:, -1], method=method, rtol=tol, atol=tol,
                    dense_output=True, events=[event])
    crossings = [t for t in sol.t_events[0] if t > t_min]
    if not crossings:
        raise CrossingNotFound(
            f"no directed crossing within horizon {horizon}")
    tau = float(crossings[0])

    # polish on the interpolant: bisection bracket then Newton
    def h_of(t):
        return float(np.dot(xi, sol.sol(t) - anchor))

    span = max(1e-9, 1e-6 * max(tau, 1.0))
    lo, hi = max(t_min, tau - span), min(tau + span, sol.t[-1])
    flo = h_of(lo)
    while flo > 0 and lo > t_min:
        lo = max(t_min, lo - span)
        span *= 2
        flo = h_of(lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if h_of(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, tau):
            break
    tau = 0.5 * (lo + hi)
    for _ in range(8):
        h = h_of(tau)
        if abs(h) <= 1e-13:
            break
        state = sol.sol(tau)
        dh = float(np.dot(xi, system.exact_rhs(state)))
        if dh == 0.0:
            break
        tau = tau - h / dh
    state = np.asarray(sol.sol(tau))
    if abs(h_of(tau)) > 1e-12:
        raise CrossingNotFound(
            f"root polish stalled at |h| = {abs(h_of(tau)):.2e}")
    return tau, state


@dataclass(frozen=True)
class ReducedCoords:
    """Reduced return-map coordinates: `kept` indices form the map state;
    `removed` indices are recovered by `recover(reduced_state, direction)`
    from the section and any conserved quantities.

    recover_jacobian returns the (n_c x m) sensitivities of the removed
    components with respect to the kept ones on the section.
    """

    kept: tuple
    removed: tuple
    recover: object
    recover_jacobian: object

    @property
    def m(self):
        return len(self.kept)


def vdp_reduced(section: PoincareSection) -> ReducedCoords:
    """Van der Pol on the section x = x0: keep y, recover x from the anchor."""
    x0 = section.anchor[0]

    def recover(red, direction=1.0):
        return np.array([x0, red[0]])

    def recover_jac(red, full_state):
        return np.zeros((1, 1))

    return ReducedCoords(kept=(1,), removed=(0,), recover=recover,
                         recover_jacobian=recover_jac)


def pcr3bp_reduced(params, section: PoincareSection) -> ReducedCoords:
    """PCR3BP on the section y = y0: keep (x, u), recover y from the section
    and v from the energy integral (sign set by the crossing direction)."""
    mu = params.mu if hasattr(params, "mu") else params["mu"]
    e = params.e if hasattr(params, "e") else params["e"]
    y0 = section.anchor[1]

    def recover(red, direction=1.0):
        x, u = red
        pot = systems.effective_potential(x, y0, mu)
        disc = 2.0 * (e - pot) - u * u
        if disc < 0:
            raise FlowError(
                f"state ({x:.6f}, {u:.6f}) outside the energy surface shadow "
                f"(discriminant {disc:.3e})")
        v = math.copysign(math.sqrt(disc), direction)
        return np.array([x, y0, u, v])

    def recover_jac(red, full_state):
        x, u = red
        v = full_state[3]
        if v == 0.0:
            raise TangencyError("zero v on section: cannot differentiate recovery")
        dudx = systems.potential_gradient(x, y0, mu)[0]
        # y is fixed; v = sqrt(2e - 2U(x, y0) - u^2)
        return np.array([
            [0.0, 0.0],
            [-dudx / v, -u / v],
        ])

    return ReducedCoords(kept=(0, 2), removed=(1, 3), recover=recover,
                         recover_jacobian=recover_jac)


def poincare_map_with_jacobian(system: SystemModel, section: PoincareSection,
                               reduced: ReducedCoords, red_state,
                               tol=1e-12, horizon=200.0, direction=1.0):
    """One reduced return-map step and its m x m total-derivative Jacobian.

    Chain rule over recover -> flow-to-crossing -> project: flow Jacobian
    from the variational equations, crossing-time sensitivity
    d tau = -(xi^T Jphi) / (xi^T f), and recovery sensitivities of the
    removed coordinates.
    """
    red_state = np.asarray(red_state, dtype=float)
    full = reduced.recover(red_state, direction)
    tau, state_cross = crossing_time(system, section, full, tol=tol,
                                     horizon=horizon, direction=direction)
    _, jphi = integrate_variational(system, full, tau, tol=tol)

    xi = np.asarray(section.normal)
    f_end = system.exact_rhs(state_cross)
    denom = float(xi @ f_end)
    if abs(denom) < 1e-12:
        raise TangencyError("flow tangent to the section at the crossing")

    kept = list(reduced.kept)
    removed = list(reduced.removed)
    # columns of d(full)/d(reduced): identity on kept rows plus recovery rows
    dfull = np.zeros((len(full), reduced.m))
    for col, idx in enumerate(kept):
        dfull[idx, col] = 1.0
    rec_jac = reduced.recover_jacobian(red_state, full)
    for row, idx in enumerate(removed):
        dfull[idx, :] = rec_jac[row, :]

    flow_sens = jphi @ dfull                       # (n, m)
    dtau = -(xi @ flow_sens) / denom               # (m,)
    total = flow_sens + np.outer(f_end, dtau)      # (n, m)
    jac = total[kept, :]
    return np.asarray(state_cross), tau, jac


@dataclass
class PeriodicOrbit:
    initial_state: np.ndarray
    period: float
    floquet_multipliers: np.ndarray
    average_observable: float
    energy: float | None
    residual_history: list = field(default_factory=list)
    crossing_count: int = 1

    def as_dict(self):
        return {
            "initial_state": [float(x) for x in self.initial_state],
            "period": self.period,
            "floquet_multipliers": [
                {"re": float(m.real), "im": float(m.imag)}
                for m in self.floquet_multipliers
            ],
            "average_observable": self.average_observable,
            "energy": self.energy,
            "residual_history": self.residual_history,
            "crossing_count": self.crossing_count,
        }


def detect_period_count(system, section, reduced, red_state, max_count=12,
                        tol=1e-12, horizon=200.0, direction=1.0):
    """Number of directed crossings after which the seed best returns."""
    red = np.asarray(red_state, dtype=float)
    best = (np.inf, 1)
    current = red.copy()
    scale = max(1.0, float(np.max(np.abs(red))))
    for p in range(1, max_count + 1):
        full = reduced.recover(current, direction)
        _, state = crossing_time(system, section, full, tol=tol,
                                 horizon=horizon, direction=direction)
        current = np.asarray(state)[list(reduced.kept)]
        gap = float(np.max(np.abs(current - red))) / scale
        if gap < best[0]:
            best = (gap, p)
        if gap < 1e-3:
            return p
    return best[1]


def newton_refine(system: SystemModel, section: PoincareSection,
                  reduced: ReducedCoords, red_state, period_count=1,
                  tol=1e-10, max_iter=50, integrator_tol=1e-12,
                  horizon=200.0, direction=1.0) -> PeriodicOrbit:
    """Newton-Raphson on the reduced return map: solve M^p(x) = x.

    Each iteration composes the map p times, chaining the per-crossing
    Jacobians, and solves [I - J] dx = M^p(x) - x.  Converged orbits carry
    the summed crossing times as the period, Floquet multipliers from the
    full-period variational matrix, and the observable average over one
    period.
    """
    red = np.asarray(red_state, dtype=float)
    p = int(period_count)
    if p < 1:
        raise ValueError("period count must be >= 1")
    history = []
    m = reduced.m
    converged = False
    for _ in range(max_iter):
        current = red.copy()
        jac = np.eye(m)
        period = 0.0
        for _ in range(p):
            state, tau, jstep = poincare_map_with_jacobian(
                system, section, reduced, current, tol=integrator_tol,
                horizon=horizon, direction=direction)
            jac = jstep @ jac
            period += tau
            current = state[list(reduced.kept)]
        resid = current - red
        rnorm = float(np.max(np.abs(resid)))
        history.append(rnorm)
        if rnorm <= tol:
            converged = True
            break
        lhs = np.eye(m) - jac
        try:
            delta = np.linalg.solve(lhs, resid)
        except np.linalg.LinAlgError:
            raise FlowError("singular [I - J] in Newton step")
        red = red + delta
        if not np.all(np.isfinite(red)):
            raise FlowError("Newton iterate diverged to non-finite values")
    if not converged:
        raise FlowError(
            f"Newton did not converge in {max_iter} iterations "
            f"(last residual {history[-1]:.3e})")

    full0 = reduced.recover(red, direction)
    _, monodromy = integrate_variational(system, full0, period,
                                         tol=integrator_tol)
    multipliers = np.linalg.eigvals(monodromy)
    avg = time_average(system, system.observable, full0, 0.0, period,
                       tol=integrator_tol)
    energy_val = None
    if system.name.startswith("pcr3bp"):
        energy_val = systems.energy(full0, system.params["mu"])
    return PeriodicOrbit(
        initial_state=full0,
        period=float(period),
        floquet_multipliers=multipliers,
        average_observable=float(avg),
        energy=energy_val,
        residual_history=history,
        crossing_count=p,
    )


def find_symmetric_orbit_seed(system: SystemModel, params, x_lo, x_hi,
                              n_scan=40, tol=1e-12, horizon=40.0):
    """Axis crossing of a symmetric PCR3BP orbit by bisection.

    Symmetric orbits cross y = 0 perpendicularly (u = 0); scanning the
    perpendicular-start family for a sign change of u at the next axis
    crossing and bisecting gives a seed accurate enough for newton_refine.
    Returns the reduced state (x, 0).
    """
    mu = params.mu
    e = params.e
    section = PoincareSection(normal=(0, 1, 0, 0), anchor=(0, 0, 0, 0))

    def u_at_half(x):
        pot = systems.effective_potential(x, 0.0, mu)
        disc = 2.0 * (e - pot)
        if disc <= 0:
            return None
        state = np.array([x, 0.0, 0.0, math.sqrt(disc)])
        # the half-period crossing is the mirrored (downward) one
        try:
            _, hit = crossing_time(system, section, state, tol=tol,
                                   horizon=horizon, direction=-1.0)
        except FlowError:
            return None
        return float(hit[2])

    xs = np.linspace(x_lo, x_hi, n_scan)
    values = [(x, u_at_half(x)) for x in xs]
    values = [(x, u) for x, u in values if u is not None]
    for (x1, u1), (x2, u2) in zip(values, values[1:]):
        if u1 * u2 < 0:
            lo, hi, flo = x1, x2, u1
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = u_at_half(mid)
                if fm is None:
                    break
                if fm * flo <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
                if hi - lo < 1e-13:
                    break
            return np.array([0.5 * (lo + hi), 0.0])
    raise FlowError(
        f"no perpendicular return found for x in [{x_lo}, {x_hi}]")


def reciprocal_pairs(multipliers, rel_tol=1e-5):
    """Match Floquet multipliers into (lambda, 1/lambda) pairs.

    Returns the matched pairs and the worst relative defect |l1*l2 - 1|.
    Raises if a pairing within rel_tol does not exist.
    """
    mults = list(multipliers)
    pairs = []
    worst = 0.0
    while mults:
        lam = mults.pop(0)
        best_j, best_err = None, np.inf
        for j, other in enumerate(mults):
            err = abs(lam * other - 1.0)
            if err < best_err:
                best_j, best_err = j, err
        if best_j is None or best_err > rel_tol:
            raise ValueError(
                f"multiplier {lam} has no reciprocal partner "
                f"(best defect {best_err:.3e})")
        pairs.append((lam, mults.pop(best_j)))
        worst = max(worst, best_err)
    return pairs, worst
