"""Assembly of auxiliary-function bound problems as semidefinite programs.

The unconstrained form certifies bounds on infinite-time averages of an
observable over a polynomial system: an upper bound U is feasible when
U - observable - f . grad(V) admits a sum-of-squares decomposition for some
polynomial V (whose along-trajectory derivative time-averages to zero).  The
constrained form multiplies through by a positive polynomial R (rational
denominators of the polynomialized right-hand side) and confines the
certificate to a semialgebraic region via an equality multiplier and
SOS inequality multipliers.

High polynomial degrees make these SDPs ill-conditioned; the degree schedule
retries each degree over a ladder of affine variable scalings (identity,
trajectory-span unit box, and sub-unity shrinkings of it) until the solver
converges and the certificate verifies.  Bounds are invariant under the
reparameterization, so values are always reported in original units.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import poly, sdp
from .flow import integrate_adaptive
from .poly import MultiPoly, ScalingTransform
from .sdp import SdpProblem, SdpTolerances
from .systems import SystemModel

log = logging.getLogger(__name__)

UPPER = "upper"
LOWER = "lower"


class AssemblyError(ValueError):
    pass


# -- generic coefficient-matching assembler ---------------------------------


class GramAssembler:
    """Accumulates one coefficient-matching equality per monomial.

    The constraint shape is
        sum_blocks multiplier_b * (z_b^T Q_b z_b)
            = const(a) + sum_j y_j * column_j(a)
    matched for every monomial of total degree <= max_deg.
    """

    def __init__(self, nvars, max_deg):
        self.nvars = nvars
        self.max_deg = max_deg
        self.rows = poly.monomial_basis(nvars, max_deg)
        self.row_index = {m: k for k, m in enumerate(self.rows)}
        self.block_dims = []
        self.block_bases = []
        self._block_coo = []
        self.free_names = []
        self.free_index = {}
        self.obj = []
        self._free_coo = ([], [], [])
        self.rhs = np.zeros(len(self.rows))

    def free_var(self, name, obj_coeff=0.0):
        if name in self.free_index:
            raise AssemblyError(f"duplicate free variable {name}")
        j = len(self.free_names)
        self.free_names.append(name)
        self.free_index[name] = j
        self.obj.append(obj_coeff)
        return j

    def gram_block(self, half_deg, multiplier: MultiPoly | None = None,
                   basis=None):
        """PSD block whose quadratic form, times `multiplier`, enters the
        matching equalities."""
        if basis is None:
            basis = poly.monomial_basis(self.nvars, half_deg)
        d = len(basis)
        b = len(self.block_dims)
        self.block_dims.append(d)
        self.block_bases.append(basis)
        rows, cols, vals = [], [], []
        mult_terms = (multiplier.terms if multiplier is not None
                      else {(0,) * self.nvars: 1.0})
        for p in range(d):
            bp = basis[p]
            for q in range(p, d):
                bq = basis[q]
                base = tuple(x + y for x, y in zip(bp, bq))
                for gamma, c in mult_terms.items():
                    alpha = tuple(x + y for x, y in zip(base, gamma))
                    k = self.row_index.get(alpha)
                    if k is None:
                        raise AssemblyError(
                            f"monomial {alpha} exceeds degree {self.max_deg}")
                    rows.append(k)
                    cols.append(p * d + q)
                    vals.append(c)
                    if p != q:
                        rows.append(k)
                        cols.append(q * d + p)
                        vals.append(c)
        self._block_coo.append((rows, cols, vals))
        return b

    def add_free_column(self, j, column: MultiPoly):
        """Register y_j's polynomial column on the equation right side."""
        rows, cols, vals = self._free_coo
        for alpha, c in column.terms.items():
            k = self.row_index.get(alpha)
            if k is None:
                raise AssemblyError(
                    f"monomial {alpha} exceeds degree {self.max_deg}")
            rows.append(k)
            cols.append(j)
            vals.append(-c)

    def add_const(self, p: MultiPoly):
        for alpha, c in p.terms.items():
            k = self.row_index.get(alpha)
            if k is None:
                raise AssemblyError(
                    f"monomial {alpha} exceeds degree {self.max_deg}")
            self.rhs[k] += c

    def build(self, rescale_rows=True) -> SdpProblem:
        m = len(self.rows)
        nf = len(self.free_names)
        a_blocks = []
        for d, (rows, cols, vals) in zip(self.block_dims, self._block_coo):
            a = sp.coo_matrix((vals, (rows, cols)), shape=(m, d * d)).tocsr()
            a.sum_duplicates()
            a_blocks.append(a)
        rows, cols, vals = self._free_coo
        free = sp.coo_matrix((vals, (rows, cols)), shape=(m, nf)).tocsr()
        free.sum_duplicates()
        rhs = self.rhs.copy()

        # drop identically empty equalities (possible after basis pruning);
        # an empty row with nonzero rhs is flagged as infeasible on load
        occupied = np.zeros(m, dtype=bool)
        for a in a_blocks:
            occupied |= np.diff(a.indptr) > 0
        if nf:
            occupied |= np.diff(free.indptr) > 0
        bad = ~occupied & (rhs != 0.0)
        if bad.any():
            raise AssemblyError(
                "coefficient matching leaves an unmatchable monomial with a "
                "nonzero target coefficient")
        if not occupied.all():
            keep = np.nonzero(occupied)[0]
            a_blocks = [a[keep] for a in a_blocks]
            free = free[keep]
            rhs = rhs[keep]
            m = keep.size

        if rescale_rows:
            # unit infinity-norm per equality, mitigating the conditioning
            # collapse of high-degree coefficient matching
            row_max = np.abs(rhs)
            for a in a_blocks:
                mags = np.abs(a)
                row_max = np.maximum(row_max,
                                     np.asarray(mags.max(axis=1).todense()).ravel())
            if nf:
                mags = np.abs(free)
                row_max = np.maximum(row_max,
                                     np.asarray(mags.max(axis=1).todense()).ravel())
            row_max[row_max == 0.0] = 1.0
            d_inv = sp.diags(1.0 / row_max)
            a_blocks = [(d_inv @ a).tocsr() for a in a_blocks]
            free = (d_inv @ free).tocsr()
            rhs = rhs / row_max
        return SdpProblem(self.block_dims, nf, a_blocks, free, rhs,
                          np.array(self.obj), validate=False)


def reduce_gram_basis(basis, target_support):
    """Drop basis monomials whose squares provably cannot occur.

    If 2*beta lies outside the attainable support of the matched polynomial
    and no other basis pair sums to 2*beta, the diagonal entry Q[beta, beta]
    is forced to zero, and with it (by positive semidefiniteness) the whole
    row and column; removing beta can cascade.  This is an exact presolve:
    it never changes the feasible set, but it restores a strictly feasible
    interior that plain monomial bases usually lack, which the interior-point
    solver needs for full accuracy.
    """
    basis = list(basis)
    target_support = set(target_support)
    changed = True
    while changed:
        changed = False
        counts = {}
        for i, bp in enumerate(basis):
            for bq in basis[i:]:
                key = tuple(a + b for a, b in zip(bp, bq))
                counts[key] = counts.get(key, 0) + 1
        keep = []
        for beta in basis:
            sq = tuple(2 * b for b in beta)
            if sq not in target_support and counts.get(sq, 0) == 1:
                changed = True
                continue
            keep.append(beta)
        basis = keep
    return basis


def assemble_gram_constraint(assembler: GramAssembler, target: MultiPoly,
                             half_deg: int):
    """Constrain a fixed polynomial to be a sum of squares.

    Adds one PSD block of dimension C(nvars + half_deg, half_deg) and a
    matching equality per monomial; used directly for plain SOS feasibility
    checks (the bound programs call the same assembler with affine targets).
    """
    if target.degree() > 2 * half_deg:
        raise AssemblyError(
            f"degree {target.degree()} exceeds 2*half_deg = {2 * half_deg}")
    b = assembler.gram_block(half_deg)
    assembler.add_const(target)
    return b


def sos_feasibility(target: MultiPoly, half_deg: int,
                    tol: SdpTolerances | None = None):
    """Is `target` a sum of squares?  Returns the SDP solution; an optimal
    status carries the Gram certificate, infeasibility an improving ray."""
    asm = GramAssembler(target.nvars, 2 * half_deg)
    assemble_gram_constraint(asm, target, half_deg)
    prob = asm.build()
    return sdp.solve(prob, tol), asm


# -- bound programs ----------------------------------------------------------


@dataclass
class BoundProgram:
    system: SystemModel
    observable: MultiPoly
    direction: str
    deg_aux: int                      # degree of the auxiliary polynomial V
    deg_eq_mult: int | None           # sigma degree (None without equality)
    deg_ineq_mult: tuple              # s_j degrees
    multiplier: MultiPoly             # R
    scaling: ScalingTransform
    deg_residual: int                 # degree of the assembled residual D
    problem: SdpProblem = None
    assembler: GramAssembler = None
    aux_exponents: list = None        # monomials carrying V coefficients
    eq_mult_exponents: list = None
    bound_index: int = 0

    @property
    def residual_basis(self):
        return self.assembler.block_bases[0]


@dataclass
class BoundResult:
    bound: float
    direction: str
    deg_aux: int
    aux: MultiPoly                    # V
    eq_mult: MultiPoly | None         # sigma
    ineq_mults: list                  # s_j
    residual_poly: MultiPoly          # D with the solution substituted
    gram_blocks: list
    gram_bases: list
    sdp_status: str
    sdp_summary: dict
    scaling_used: ScalingTransform
    certificate: dict = None
    wall_time: float = 0.0
    attempts: list = field(default_factory=list)

    def as_dict(self):
        return {
            "bound": self.bound,
            "direction": self.direction,
            "deg_aux": self.deg_aux,
            "deg_residual": self.residual_poly.degree(),
            "sdp_status": self.sdp_status,
            "sdp_summary": self.sdp_summary,
            "scaling": {"scale": list(self.scaling_used.scale),
                        "offset": list(self.scaling_used.offset)},
            "certificate": self.certificate,
            "wall_time": self.wall_time,
            "attempts": self.attempts,
        }


def transform_polynomials(system: SystemModel, t: ScalingTransform):
    """System polynomials re-expressed in scaled coordinates.

    The right-hand side picks up the per-component scale factor (chain rule
    through a_s = a * scale + offset); the scalar polynomials substitute
    directly, so bound values are unchanged by the transform.
    """
    subst = lambda p: poly.affine_substitute(p, t)
    f_s = tuple(subst(f).scale(t.scale[i])
                for i, f in enumerate(system.poly_rhs))
    return {
        "poly_rhs": f_s,
        "multiplier": subst(system.multiplier) if system.multiplier else None,
        "observable": subst(system.observable),
        "equality": subst(system.equality) if system.equality else None,
        "inequalities": tuple(subst(g) for g in system.inequalities),
    }


def _program_degrees(f_deg, phi_deg, r_deg, deg_aux, h_deg, deg_eq_mult,
                     g_degs, deg_ineq_mult):
    terms = [f_deg + max(deg_aux - 1, 0), phi_deg + r_deg, r_deg]
    if h_deg is not None:
        terms.append(h_deg + deg_eq_mult)
    for gd, sd in zip(g_degs, deg_ineq_mult):
        terms.append(gd + sd)
    return max(terms)


def build_bound_program(system: SystemModel, observable=None,
                        direction=UPPER, deg_aux=2,
                        scaling: ScalingTransform | None = None,
                        rescale_rows=True, prune_basis=False) -> BoundProgram:
    """Unconstrained bound program: observable +/- f . grad(V) - bound in SOS.

    Requires a plain polynomial right-hand side; the auxiliary degree is
    bumped by one automatically when the assembled polynomial has odd
    degree (SOS membership needs an even degree).
    """
    if not system.rhs_is_polynomial():
        raise AssemblyError("system right-hand side must be polynomial "
                            "(use build_constrained_program with a multiplier)")
    return build_constrained_program(
        system, observable=observable, direction=direction, deg_aux=deg_aux,
        deg_eq_mult=None, deg_ineq_mult=(), scaling=scaling,
        rescale_rows=rescale_rows, prune_basis=prune_basis)


def build_constrained_program(system: SystemModel, observable=None,
                              direction=UPPER, deg_aux=2,
                              deg_eq_mult=None, deg_ineq_mult=None,
                              scaling: ScalingTransform | None = None,
                              rescale_rows=True, prune_basis=False,
                              region_check_points=10_000,
                              region_box=None) -> BoundProgram:
    """Region-constrained bound program per the generalized S-procedure.

    The residual is (for a lower bound L)
        D = F . grad(V) + (observable - L) R + sigma H - sum_j s_j G_j
    with D and every s_j constrained to be SOS and sigma free.  Upper bounds
    flip the signs of F . grad(V) and the observable and minimize the bound.
    """
    if direction not in (UPPER, LOWER):
        raise AssemblyError(f"unknown direction {direction!r}")
    scaling = scaling or ScalingTransform.identity(system.nvars)
    pieces = transform_polynomials(system, scaling)
    f_s = pieces["poly_rhs"]
    multiplier = pieces["multiplier"] or MultiPoly.constant(system.nvars, 1.0)
    phi = pieces["observable"] if observable is None else \
        poly.affine_substitute(observable, scaling)
    equality = pieces["equality"]
    inequalities = pieces["inequalities"]

    if not f_s:
        raise AssemblyError("system has no polynomial right-hand side")
    if multiplier.degree() > 0 and not system.multiplier:
        raise AssemblyError("multiplier R != 1 requires a polynomialized rhs")
    if equality is not None and deg_eq_mult is None:
        deg_eq_mult = max(equality.degree() % 2, 0)
    if deg_ineq_mult is None:
        deg_ineq_mult = (0,) * len(inequalities)
    if len(deg_ineq_mult) != len(inequalities):
        raise AssemblyError("one multiplier degree per inequality required")

    # positive-definiteness spot check of R over the region of interest
    if multiplier.degree() > 0 and region_check_points:
        rng = np.random.default_rng(12345)
        box = region_box or [(-1.2, 1.2)] * system.nvars
        pts = np.stack([rng.uniform(lo, hi, region_check_points)
                        for lo, hi in box], axis=1)
        if inequalities:
            g_ev = [poly.PolyEvaluator(g) for g in inequalities]
            mask = np.ones(len(pts), dtype=bool)
            for g in g_ev:
                mask &= g.at_many(pts) >= 0
            pts = pts[mask]
        if len(pts) and np.min(poly.PolyEvaluator(multiplier).at_many(pts)) <= 0:
            raise AssemblyError("multiplier R not nonnegative on region sample")

    n = system.nvars
    f_deg = max(f.degree() for f in f_s)
    h_deg = equality.degree() if equality is not None else None
    g_degs = [g.degree() for g in inequalities]

    deg_aux = int(deg_aux)
    deg_res = _program_degrees(f_deg, phi.degree(), multiplier.degree(),
                               deg_aux, h_deg, deg_eq_mult or 0, g_degs,
                               deg_ineq_mult)
    if deg_res % 2:
        lead = f_deg + deg_aux - 1
        if lead == deg_res:
            deg_aux += 1
            deg_res = _program_degrees(f_deg, phi.degree(),
                                       multiplier.degree(), deg_aux, h_deg,
                                       deg_eq_mult or 0, g_degs,
                                       deg_ineq_mult)
        if deg_res % 2:
            raise AssemblyError(
                f"assembled residual degree {deg_res} is odd and cannot be "
                "completed by raising the auxiliary degree")
    for gd, sd in zip(g_degs, deg_ineq_mult):
        if sd % 2:
            raise AssemblyError("inequality multiplier degrees must be even")

    sign = 1.0 if direction == LOWER else -1.0

    aux_exponents = [m for m in poly.monomial_basis(n, deg_aux)
                     if any(m)]  # no constant: grad kills it
    aux_columns = []
    for beta in aux_exponents:
        column = MultiPoly.zero(n)
        for i, fi in enumerate(f_s):
            if beta[i]:
                shift = list(beta)
                shift[i] -= 1
                column = column + fi.shift_exponents(tuple(shift)).scale(
                    beta[i])
        aux_columns.append(column.scale(sign))

    eq_exponents = []
    if equality is not None:
        eq_exponents = poly.monomial_basis(n, deg_eq_mult)

    asm = GramAssembler(n, deg_res)
    d_basis = poly.monomial_basis(n, deg_res // 2)
    if prune_basis:
        support = set()
        for col in aux_columns:
            support.update(col.terms)
        support.update(poly.multiply(phi, multiplier).terms)
        support.update(multiplier.terms)
        for gamma in eq_exponents:
            support.update(equality.shift_exponents(gamma).terms)
        for g, sd in zip(inequalities, deg_ineq_mult):
            s_basis = poly.monomial_basis(n, sd // 2)
            for i, bp in enumerate(s_basis):
                for bq in s_basis[i:]:
                    pair = tuple(a + b for a, b in zip(bp, bq))
                    for gterm in g.terms:
                        support.add(tuple(a + b for a, b in zip(pair, gterm)))
        d_basis = reduce_gram_basis(d_basis, support)
    asm.gram_block(None, basis=d_basis)  # block 0: the residual D
    for g, sd in zip(inequalities, deg_ineq_mult):
        asm.gram_block(sd // 2, multiplier=g)

    bound_obj = 1.0 if direction == LOWER else -1.0
    bound_index = asm.free_var("bound", obj_coeff=bound_obj)
    for beta, column in zip(aux_exponents, aux_columns):
        asm.add_free_column(asm.free_var(("aux", beta)), column)
    for gamma in eq_exponents:
        asm.add_free_column(asm.free_var(("eq_mult", gamma)),
                            equality.shift_exponents(gamma))

    # bound column: (phi - L) R for lower, (U - phi) R for upper
    asm.add_free_column(bound_index, multiplier.scale(-sign))
    asm.add_const(poly.multiply(phi, multiplier).scale(sign))

    prob = asm.build(rescale_rows=rescale_rows)
    return BoundProgram(
        system=system, observable=phi, direction=direction, deg_aux=deg_aux,
        deg_eq_mult=deg_eq_mult if equality is not None else None,
        deg_ineq_mult=tuple(deg_ineq_mult), multiplier=multiplier,
        scaling=scaling, deg_residual=deg_res, problem=prob, assembler=asm,
        aux_exponents=aux_exponents, eq_mult_exponents=eq_exponents,
        bound_index=bound_index)


def gram_to_poly(q, basis, nvars) -> MultiPoly:
    terms = {}
    d = len(basis)
    for p in range(d):
        for r in range(d):
            key = tuple(a + b for a, b in zip(basis[p], basis[r]))
            terms[key] = terms.get(key, 0.0) + q[p, r]
    return MultiPoly(nvars, terms)


def extract_result(program: BoundProgram, solution) -> BoundResult:
    n = program.system.nvars
    y = solution.y
    asm = program.assembler
    bound = float(y[program.bound_index])
    aux_terms = {}
    for beta in program.aux_exponents:
        aux_terms[beta] = float(y[asm.free_index[("aux", beta)]])
    aux = MultiPoly(n, aux_terms)
    eq_mult = None
    if program.deg_eq_mult is not None:
        eq_terms = {g: float(y[asm.free_index[("eq_mult", g)]])
                    for g in program.eq_mult_exponents}
        eq_mult = MultiPoly(n, eq_terms)
    ineq_mults = [gram_to_poly(solution.blocks[b + 1],
                               asm.block_bases[b + 1], n)
                  for b in range(len(program.deg_ineq_mult))]
    residual = build_D(program, bound, aux, eq_mult, ineq_mults)
    return BoundResult(
        bound=bound, direction=program.direction, deg_aux=program.deg_aux,
        aux=aux, eq_mult=eq_mult, ineq_mults=ineq_mults,
        residual_poly=residual,
        gram_blocks=[b.copy() for b in solution.blocks],
        gram_bases=[list(b) for b in asm.block_bases],
        sdp_status=solution.status,
        sdp_summary={
            "objective": solution.objective_value,
            "primal_residual": solution.primal_residual,
            "dual_residual": solution.dual_residual,
            "duality_gap": solution.duality_gap,
            "iterations": len(solution.iterations),
        },
        scaling_used=program.scaling)


def build_D(program: BoundProgram, bound, aux, eq_mult=None,
            ineq_mults=()) -> MultiPoly:
    """Residual polynomial with (bound, V, sigma, s_j) substituted.

    Reduces to observable + f . grad(V) - L (lower) or
    U - observable - f . grad(V) (upper) when R = 1 and no region terms.
    """
    pieces = transform_polynomials(program.system, program.scaling)
    sign = 1.0 if program.direction == LOWER else -1.0
    f_s = pieces["poly_rhs"]
    d = poly.dot(f_s, poly.grad(aux)).scale(sign)
    phi_term = (program.observable - MultiPoly.constant(
        program.system.nvars, bound)).scale(sign)
    d = d + poly.multiply(phi_term, program.multiplier)
    if eq_mult is not None and pieces["equality"] is not None:
        d = d + poly.multiply(eq_mult, pieces["equality"])
    for s_j, g_j in zip(ineq_mults, pieces["inequalities"]):
        d = d - poly.multiply(s_j, g_j)
    return d


def verify_certificate(residual: MultiPoly, gram, basis) -> dict:
    """Audit an SOS certificate independently of the solver.

    Expands z^T Q z with plain polynomial arithmetic, reports the
    coefficient-wise residual against `residual` (absolute and relative to
    1 + its coefficient norm) and the Gram minimum eigenvalue.
    """
    expanded = gram_to_poly(gram, basis, residual.nvars)
    diff = residual - expanded
    abs_res = diff.coeff_norm()
    scale = 1.0 + residual.coeff_norm()
    eigs = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    return {
        "coefficient_residual": abs_res,
        "relative_residual": abs_res / scale,
        "min_eigenvalue": float(eigs[0]),
        "certified": bool(abs_res <= 1e-6 * scale and eigs[0] >= -1e-9),
    }


# -- scaling schedule --------------------------------------------------------


def estimate_trajectory_box(system: SystemModel, n_traj=16, t_span=1000.0,
                            tol=1e-9, seed=2024, start_box=None,
                            start_states=None):
    """Per-component min/max over a bundle of long trajectories."""
    rng = np.random.default_rng(seed)
    if start_states is None:
        box = start_box or [(-1.0, 1.0)] * system.nvars
        start_states = np.stack(
            [rng.uniform(lo, hi, n_traj) for lo, hi in box], axis=1)
    lo = np.full(system.nvars, np.inf)
    hi = np.full(system.nvars, -np.inf)
    for a0 in start_states:
        traj = integrate_adaptive(system, a0, t_span, tol=tol, max_norm=1e3)
        lo = np.minimum(lo, traj.states.min(axis=0))
        hi = np.maximum(hi, traj.states.max(axis=0))
    return lo, hi


def box_scaling(lo, hi, side=1.0) -> ScalingTransform:
    """Affine map of [lo, hi] onto a centered box of the given side."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = np.maximum(hi - lo, 1e-12)
    scale = side / span
    center = 0.5 * (lo + hi)
    return ScalingTransform(tuple(scale), tuple(-center * scale))


def default_scaling_candidates(system: SystemModel, span_estimator=None):
    """Lazy ladder: identity, the trajectory-span unit box, then that box
    shrunk by factors 2, 4 and 8 (sub-unity boxes still converge)."""
    yield ScalingTransform.identity(system.nvars)
    if span_estimator is None:
        span_estimator = lambda: estimate_trajectory_box(system)
    lo, hi = span_estimator()
    for side in (1.0, 0.5, 0.25, 0.125):
        yield box_scaling(lo, hi, side=side)


def solve_with_scaling_schedule(system: SystemModel, deg_list,
                                observable=None, direction=UPPER,
                                program_kwargs=None,
                                scaling_candidates=None,
                                tolerances: SdpTolerances | None = None,
                                span_estimator=None):
    """Solve the bound program over a degree ladder, rescuing failed solves
    with progressively smaller coordinate boxes.

    A (degree, scaling) cell is accepted when the SDP reports optimal and
    the SOS certificate passes the independent audit; otherwise the next
    scaling candidate is tried.  Failures at every scaling are recorded and
    the schedule moves on to the next degree.

    The schedule's solver tolerance relaxes the duality gap to 1e-6
    (relative): certificate quality is set by the feasibility tolerance,
    while the gap only limits bound precision to ~1e-5, orders below the
    tabulated-value agreement targets.
    """
    program_kwargs = dict(program_kwargs or {})
    tolerances = tolerances or SdpTolerances(gap_tol=1e-6)
    results = []
    cached_candidates = None

    for deg_aux in deg_list:
        start = time.time()
        attempts = []
        accepted = None
        if scaling_candidates is not None:
            candidates = list(scaling_candidates)
        else:
            if cached_candidates is None:
                cached_candidates = list(default_scaling_candidates(
                    system, span_estimator))
            candidates = cached_candidates
        for idx, scaling in enumerate(candidates):
            program = build_constrained_program(
                system, observable=observable, direction=direction,
                deg_aux=deg_aux, scaling=scaling, **program_kwargs)
            try:
                solution = sdp.solve(program.problem, tolerances)
            except ValueError as exc:
                attempts.append({"scaling_index": idx, "status": "rejected",
                                 "detail": str(exc)})
                continue
            record = {"scaling_index": idx, "status": solution.status,
                      "objective": solution.objective_value,
                      "primal_residual": solution.primal_residual,
                      "duality_gap": solution.duality_gap}
            if solution.status == sdp.STATUS_OPTIMAL:
                result = extract_result(program, solution)
                audit = verify_certificate(result.residual_poly,
                                           result.gram_blocks[0],
                                           result.gram_bases[0])
                record["certificate_residual"] = audit["relative_residual"]
                record["certified"] = audit["certified"]
                if audit["certified"]:
                    result.certificate = audit
                    result.wall_time = time.time() - start
                    accepted = result
            attempts.append(record)
            if accepted is not None:
                break
        if accepted is None:
            log.warning("degree %d: no scaling candidate converged", deg_aux)
            accepted = BoundResult(
                bound=np.nan, direction=direction, deg_aux=deg_aux,
                aux=MultiPoly.zero(system.nvars), eq_mult=None,
                ineq_mults=[], residual_poly=MultiPoly.zero(system.nvars),
                gram_blocks=[], gram_bases=[], sdp_status="failed",
                sdp_summary={}, scaling_used=ScalingTransform.identity(
                    system.nvars))
            accepted.wall_time = time.time() - start
        accepted.attempts = attempts
        results.append(accepted)
    return results


def write_report(results, path, extra=None):
    payload = {"results": [r.as_dict() for r in results]}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload
