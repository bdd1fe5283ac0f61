"""Embedded semidefinite-program solver and SDPA-format interchange.

Solves standard-form problems with PSD matrix blocks Q_b and free scalar
variables y,

    maximize   obj . y
    subject to sum_b <A_{k,b}, Q_b> + e_k . y = g_k      (k = 1..m)
               Q_b >= 0,

by a primal-dual path-following interior-point method (HKM direction,
Mehrotra predictor-corrector, dense Schur complement).  Free variables are
handled by augmenting the Schur system rather than by splitting into two PSD
halves, which avoids the associated conditioning penalty.

Oversized instances are exported to the sparse SDPA text format for external
solvers; solutions can be read back for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_MAX_ITERATIONS = "max_iterations"
STATUS_NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SdpTolerances:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    eig_tol: float = 1e-9
    max_iterations: int = 200
    step_fraction: float = 0.98
    gram_limit: int = 400  # total PSD dimension accepted by the embedded solver


class SdpProblem:
    """Equality-constrained SDP with PSD blocks plus free scalar variables.

    Constraint data is held in vectorized sparse form: for each block b an
    (m x d_b^2) matrix whose row k is vec(A_{k,b}) with both triangles
    stored, plus an (m x nfree) matrix of free-variable rows.
    """

    def __init__(self, block_dims, nfree, a_blocks, free_rows, rhs, objective,
                 validate=True):
        self.block_dims = [int(d) for d in block_dims]
        self.nfree = int(nfree)
        self.a_blocks = [sp.csr_matrix(a) for a in a_blocks]
        self.free_rows = sp.csr_matrix(free_rows) if self.nfree else sp.csr_matrix(
            (len(rhs), 0))
        self.rhs = np.asarray(rhs, dtype=float)
        self.objective = np.asarray(objective, dtype=float)
        m = self.rhs.shape[0]
        for d, a in zip(self.block_dims, self.a_blocks):
            if a.shape != (m, d * d):
                raise ValueError(f"block matrix shape {a.shape} != ({m}, {d * d})")
        if self.objective.shape != (self.nfree,):
            raise ValueError("objective length mismatch")
        if validate:
            self.validate()

    @property
    def n_constraints(self):
        return self.rhs.shape[0]

    @property
    def total_gram_dim(self):
        return sum(self.block_dims)

    def validate(self):
        """Check symmetry of all A_{k,b} and detect trivially infeasible rows."""
        for d, a in zip(self.block_dims, self.a_blocks):
            idx = np.arange(d * d).reshape(d, d)
            asym = a[:, idx.ravel()] - a[:, idx.T.ravel()]
            if asym.nnz and abs(asym).max() > 0:
                raise ValueError("non-symmetric constraint matrix")
        row_norm = np.zeros(self.n_constraints)
        for a in self.a_blocks:
            row_norm += np.abs(a).sum(axis=1).A1 if hasattr(
                np.abs(a).sum(axis=1), "A1") else np.asarray(
                np.abs(a).sum(axis=1)).ravel()
        if self.nfree:
            row_norm += np.asarray(np.abs(self.free_rows).sum(axis=1)).ravel()
        bad = (row_norm == 0.0) & (np.abs(self.rhs) > 0.0)
        if bad.any():
            k = int(np.argmax(bad))
            raise ValueError(
                f"equality row {k} is identically zero with rhs {self.rhs[k]}: "
                "problem infeasible on load")

    @staticmethod
    def from_equalities(block_dims, nfree, equalities, objective):
        """Build from a list of (per-block dense symmetric matrices, free row, g).

        `equalities` entries are tuples (mats, e_row, g) with `mats` a dict
        {block_index: (d,d) array} and `e_row` a dict {free index: value}.
        """
        m = len(equalities)
        rows = [[] for _ in block_dims]
        cols = [[] for _ in block_dims]
        vals = [[] for _ in block_dims]
        frow, fcol, fval = [], [], []
        rhs = np.zeros(m)
        for k, (mats, e_row, g) in enumerate(equalities):
            rhs[k] = g
            for b, mat in mats.items():
                mat = np.asarray(mat, dtype=float)
                d = block_dims[b]
                nz = np.nonzero(mat)
                rows[b].extend([k] * len(nz[0]))
                cols[b].extend(nz[0] * d + nz[1])
                vals[b].extend(mat[nz])
            for j, v in e_row.items():
                frow.append(k)
                fcol.append(j)
                fval.append(v)
        a_blocks = [
            sp.coo_matrix((vals[b], (rows[b], cols[b])), shape=(m, d * d)).tocsr()
            for b, d in enumerate(block_dims)
        ]
        free = sp.coo_matrix((fval, (frow, fcol)), shape=(m, nfree)).tocsr()
        return SdpProblem(block_dims, nfree, a_blocks, free, rhs, objective)

    def block_matrix(self, k, b):
        """Dense A_{k,b} for inspection."""
        d = self.block_dims[b]
        return np.asarray(self.a_blocks[b][k].todense()).reshape(d, d)


@dataclass
class SdpSolution:
    status: str
    y: np.ndarray
    blocks: list
    objective_value: float
    primal_residual: float
    dual_residual: float
    duality_gap: float
    min_eigenvalue_per_block: list
    iterations: list = field(default_factory=list)
    dual_multipliers: np.ndarray | None = None
    certificate: dict | None = None
    message: str = ""


def _sym(m):
    return 0.5 * (m + m.T)


def _mats_from_lambda(prob, lam):
    """Per-block dense matrices sum_k lam_k A_{k,b}."""
    out = []
    for d, a in zip(prob.block_dims, prob.a_blocks):
        out.append(np.asarray(a.T @ lam).reshape(d, d))
    return out


def _apply_A(prob, blocks):
    """A(Q): vector of <A_{k,b}, Q_b> summed over blocks."""
    total = np.zeros(prob.n_constraints)
    for a, q in zip(prob.a_blocks, blocks):
        total += a @ q.ravel()
    return total


def _primal_residual_ld(prob, blocks, y, g):
    """g - A(Q) - E y in extended precision.

    In double precision the equality residual bottoms out near
    eps * nnz_per_row * |Q|, which is too coarse for the final polish when
    the Gram entries are large.
    """
    total = g.astype(np.longdouble).copy()
    for a, q in zip(prob.a_blocks, blocks):
        a_ld = a.astype(np.longdouble)
        total -= a_ld @ q.ravel().astype(np.longdouble)
    if prob.nfree:
        total -= prob.free_rows.astype(np.longdouble) @ y.astype(np.longdouble)
    return np.asarray(total, dtype=float)


def _max_step(mat, dmat, cho):
    """Largest alpha <= 1 keeping mat + alpha*dmat PSD; cho = cholesky(mat)."""
    try:
        w = sla.solve_triangular(cho, dmat, lower=True)
        w = sla.solve_triangular(cho, w.T, lower=True)
        eigs = np.linalg.eigvalsh(_sym(w))
    except (np.linalg.LinAlgError, ValueError):
        return 0.0
    lo = eigs[0]
    if lo >= -1e-14:
        return 1.0
    return min(1.0, -1.0 / lo)


def solve(prob: SdpProblem, tol: SdpTolerances | None = None) -> SdpSolution:
    """Interior-point solve with certified residuals.

    Infeasible problems are reported with an improving-ray certificate
    (a dual direction lam with g.lam = 1, E^T lam ~ 0 and
    sum_k lam_k A_{k,b} negative semidefinite up to feas_tol).
    """
    tol = tol or SdpTolerances()
    if prob.total_gram_dim > tol.gram_limit:
        raise ValueError(
            f"total Gram dimension {prob.total_gram_dim} exceeds embedded-solver "
            f"limit {tol.gram_limit}; use the SDPA export path")

    m = prob.n_constraints
    nf = prob.nfree
    dims = prob.block_dims
    nblocks = len(dims)
    ntrace = sum(dims)

    # min form: minimize cmin . y with cmin = -objective
    cmin = -prob.objective
    g = prob.rhs
    E = prob.free_rows.toarray() if nf else np.zeros((m, 0))

    # starting point: CSDP-flavoured multiples of the identity
    a_row_norms = np.zeros(m)
    for a in prob.a_blocks:
        a_row_norms += np.asarray(a.multiply(a).sum(axis=1)).ravel()
    a_row_norms = np.sqrt(a_row_norms)
    scale_p = max(10.0, np.max((1.0 + np.abs(g)) / (1.0 + a_row_norms)) if m else 1.0)
    scale_d = 1.0 + max(np.max(np.abs(cmin)) if nf else 0.0,
                        np.max(a_row_norms) if m else 0.0)
    Q = [scale_p * np.eye(d) for d in dims]
    S = [scale_d * np.eye(d) for d in dims]
    y = np.zeros(nf)
    lam = np.zeros(m)

    history = []
    status = STATUS_MAX_ITERATIONS
    message = ""
    chunk = max(1, int(2e6 // max(d * d for d in dims))) if dims else 1
    best_score = np.inf
    best_point = None
    best_iter = -1

    def residuals():
        r_p = _primal_residual_ld(prob, Q, y, g)
        adj = _mats_from_lambda(prob, lam)
        R_d = [-adj[b] - S[b] for b in range(nblocks)]
        r_f = cmin - (E.T @ lam if nf else np.zeros(0))
        return r_p, R_d, r_f

    def certified_gap(r_p, R_d, r_f):
        # <Q,S> plus the residual-weighted slop; bounds pobj - p* honestly
        # even when the dual multipliers are large
        comp = sum(np.tensordot(Q[b], S[b]) for b in range(nblocks))
        slop = abs(float(r_p @ lam)) if m else 0.0
        slop += sum(abs(float(np.tensordot(R_d[b], Q[b])))
                    for b in range(nblocks))
        if nf:
            slop += abs(float(r_f @ y))
        return comp + slop

    def certificate_check():
        # Farkas ray: g.lam > 0, E^T lam = 0, sum lam_k A_k <= 0
        glam = g @ lam
        if glam <= 1e-8 * (1.0 + np.linalg.norm(lam)):
            return None
        ray = lam / glam
        free_res = float(np.max(np.abs(E.T @ ray))) if nf else 0.0
        eig_res = 0.0
        for mat in _mats_from_lambda(prob, ray):
            if mat.shape[0]:
                eig_res = max(eig_res, float(np.linalg.eigvalsh(_sym(mat))[-1]))
        if max(free_res, eig_res) <= tol.feas_tol:
            return {"ray": ray, "free_residual": free_res, "eig_residual": eig_res}
        return None

    norm_g = 1.0 + np.max(np.abs(g)) if m else 1.0
    norm_c = 1.0 + (np.max(np.abs(cmin)) if nf else 0.0)

    final = None
    for it in range(tol.max_iterations):
        r_p, R_d, r_f = residuals()
        mu = sum(np.tensordot(Q[b], S[b]) for b in range(nblocks)) / max(ntrace, 1)
        pobj = cmin @ y if nf else 0.0
        dobj = g @ lam
        gap = pobj - dobj
        rel_p = np.max(np.abs(r_p)) / norm_g if m else 0.0
        rel_d = max(
            max((np.max(np.abs(R)) if R.size else 0.0) for R in R_d) if nblocks else 0.0,
            np.max(np.abs(r_f)) if nf else 0.0,
        ) / norm_c
        # pobj-dobj is polluted by residual-times-multiplier slop once the
        # multipliers grow; certify the gap from <Q,S> plus that slop
        rel_gap = certified_gap(r_p, R_d, r_f) / (1.0 + abs(pobj) + abs(dobj))
        history.append({
            "iter": it, "mu": float(mu), "primal_obj": float(pobj),
            "dual_obj": float(dobj), "gap": float(gap),
            "primal_res": float(rel_p), "dual_res": float(rel_d),
        })

        score = max(rel_p / tol.feas_tol, rel_d / tol.feas_tol,
                    rel_gap / tol.gap_tol)
        if score < best_score:
            best_score = score
            best_iter = it
            best_point = ([q.copy() for q in Q], [s.copy() for s in S],
                          y.copy(), lam.copy())
        if score <= 1.0:
            status = STATUS_OPTIMAL
            break
        if it - best_iter > 40:
            status = STATUS_NUMERICAL_FAILURE
            message = "no progress over 40 iterations"
            break

        cert = certificate_check()
        if cert is not None and (rel_p > tol.feas_tol or abs(dobj) > 1e6 * norm_g):
            status = STATUS_INFEASIBLE
            final = cert
            message = "dual improving ray found"
            break
        if nf and pobj < -1e10 * norm_c and rel_p <= tol.feas_tol:
            status = STATUS_UNBOUNDED
            message = "primal objective diverging"
            break

        # factorizations of the current iterate and Nesterov-Todd scaling
        # W = Q^(1/2) (Q^(1/2) S Q^(1/2))^(-1/2) Q^(1/2), with W S W = Q
        try:
            cho_S = [sla.cholesky(S[b], lower=True) for b in range(nblocks)]
            cho_Q = [sla.cholesky(Q[b], lower=True) for b in range(nblocks)]
            Sinv = [sla.cho_solve((cho_S[b], True), np.eye(dims[b]))
                    for b in range(nblocks)]
            W, Gs, Ginvs, lam_sv = [], [], [], []
            for b in range(nblocks):
                u, sv, vt = np.linalg.svd(cho_S[b].T @ cho_Q[b])
                gmat = cho_Q[b] @ vt.T / np.sqrt(sv)
                # G^-1 = sqrt(Sigma) V^T Lq^-1; scaled iterate is diag(sv)
                ginv = (np.sqrt(sv)[:, None] * vt) @ sla.solve_triangular(
                    cho_Q[b], np.eye(dims[b]), lower=True)
                W.append(gmat @ gmat.T)
                Gs.append(gmat)
                Ginvs.append(ginv)
                lam_sv.append(sv)
        except (np.linalg.LinAlgError, ValueError):
            status = STATUS_NUMERICAL_FAILURE
            message = "iterate left the PSD cone"
            break

        # Schur complement M_{jk} = sum_b <A_j, W A_k W>, assembled in chunks
        M = np.zeros((m, m))
        for b in range(nblocks):
            d = dims[b]
            a = prob.a_blocks[b]
            for lo in range(0, m, chunk):
                hi = min(lo + chunk, m)
                amat = np.asarray(a[lo:hi].todense()).reshape(hi - lo, d, d)
                t = np.einsum("ij,cjk,kl->cil", W[b], amat, W[b], optimize=True)
                M[:, lo:hi] += a @ t.reshape(hi - lo, d * d).T

        kkt = np.zeros((m + nf, m + nf))
        kkt[:m, :m] = M
        if nf:
            kkt[:m, m:] = E
            kkt[m:, :m] = E.T
        reg = 1e-13 * (1.0 + np.abs(np.diag(M)).max())
        try:
            with np.errstate(all="ignore"):
                lu = sla.lu_factor(kkt)
                if not np.all(np.isfinite(lu[0])):
                    raise np.linalg.LinAlgError
        except (np.linalg.LinAlgError, ValueError):
            # singular KKT (typical at a unique-feasible-point boundary);
            # retry with tiny Tikhonov regularization
            try:
                kkt[np.diag_indices(m + nf)] += reg
                with np.errstate(all="ignore"):
                    lu = sla.lu_factor(kkt)
                if not np.all(np.isfinite(lu[0])):
                    raise np.linalg.LinAlgError
            except (np.linalg.LinAlgError, ValueError):
                status = STATUS_NUMERICAL_FAILURE
                message = "Schur factorization breakdown"
                break

        kkt_ld = kkt.astype(np.longdouble)

        def solve_direction(Rc_blocks):
            # NT direction: dQ + W dS W = Rc per block, giving the reduced
            # system M dlam + E dy = r_p - A(Rc) + A(W R_d W)
            h = r_p.copy()
            for b in range(nblocks):
                h -= prob.a_blocks[b] @ Rc_blocks[b].ravel()
                h += prob.a_blocks[b] @ (W[b] @ R_d[b] @ W[b]).ravel()
            rhs_full = np.concatenate([h, r_f]) if nf else h
            try:
                with np.errstate(all="ignore"):
                    sol = sla.lu_solve(lu, rhs_full)
                    # mixed-precision iterative refinement: extended-precision
                    # residuals recover the digits the late-stage Schur
                    # complement (condition ~ 1/mu^2) destroys
                    rhs_ld = rhs_full.astype(np.longdouble)
                    for _ in range(3):
                        resid = np.asarray(rhs_ld - kkt_ld @ sol.astype(
                            np.longdouble), dtype=float)
                        if not np.all(np.isfinite(resid)):
                            break
                        sol = sol + sla.lu_solve(lu, resid)
            except (np.linalg.LinAlgError, ValueError):
                return None
            if not np.all(np.isfinite(sol)):
                return None
            dlam = sol[:m]
            dy = sol[m:] if nf else np.zeros(0)
            adj = _mats_from_lambda(prob, dlam)
            dS = [R_d[b] - adj[b] for b in range(nblocks)]
            dQ = [
                _sym(Rc_blocks[b] - W[b] @ dS[b] @ W[b])
                for b in range(nblocks)
            ]
            return dlam, dy, dS, dQ

        # predictor (affine scaling): Rc = -Q
        direction = solve_direction([-Q[b] for b in range(nblocks)])
        if direction is None:
            status = STATUS_NUMERICAL_FAILURE
            message = "singular Newton system"
            break
        dlam_a, dy_a, dS_a, dQ_a = direction
        ap = min(_max_step(Q[b], dQ_a[b], cho_Q[b]) for b in range(nblocks)) if nblocks else 1.0
        ad = min(_max_step(S[b], dS_a[b], cho_S[b]) for b in range(nblocks)) if nblocks else 1.0
        ap *= tol.step_fraction
        ad *= tol.step_fraction
        mu_aff = sum(
            np.tensordot(Q[b] + ap * dQ_a[b], S[b] + ad * dS_a[b])
            for b in range(nblocks)
        ) / max(ntrace, 1)
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

        # corrector: recentering plus the Mehrotra second-order term, solved
        # in the NT-scaled space where the iterate is diagonal
        def centering_direction(sig, dq_prev, ds_prev):
            K_cor = []
            for b in range(nblocks):
                sv = lam_sv[b]
                dq_s = Ginvs[b] @ dq_prev[b] @ Ginvs[b].T
                ds_s = Gs[b].T @ ds_prev[b] @ Gs[b]
                second = _sym(dq_s @ ds_s)
                target = -second
                target[np.diag_indices(dims[b])] += sig * mu - sv**2
                x = 2.0 * target / (sv[:, None] + sv[None, :])
                K_cor.append(Gs[b] @ x @ Gs[b].T)
            return solve_direction(K_cor)

        direction = centering_direction(sigma, dQ_a, dS_a)
        if direction is None:
            status = STATUS_NUMERICAL_FAILURE
            message = "singular Newton system (corrector)"
            break
        dlam, dy, dS, dQ = direction

        def step_pair(dQc, dSc):
            a_p = min(_max_step(Q[b], dQc[b], cho_Q[b])
                      for b in range(nblocks)) if nblocks else 1.0
            a_d = min(_max_step(S[b], dSc[b], cho_S[b])
                      for b in range(nblocks)) if nblocks else 1.0
            return (min(1.0, tol.step_fraction * a_p),
                    min(1.0, tol.step_fraction * a_d))

        ap, ad = step_pair(dQ, dS)
        # extra centrality pass when the corrected step remains short
        for _ in range(2):
            if min(ap, ad) >= 0.4:
                break
            sigma = min(1.0, 4.0 * sigma + 0.1)
            retry = centering_direction(sigma, dQ, dS)
            if retry is None:
                break
            ap2, ad2 = step_pair(retry[3], retry[2])
            if min(ap2, ad2) <= min(ap, ad):
                break
            dlam, dy, dS, dQ = retry
            ap, ad = ap2, ad2

        history[-1]["step_p"] = float(ap)
        history[-1]["step_d"] = float(ad)
        history[-1]["sigma"] = float(sigma)

        for b in range(nblocks):
            Q[b] = _sym(Q[b] + ap * dQ[b])
            S[b] = _sym(S[b] + ad * dS[b])
        y = y + ap * dy
        lam = lam + ad * dlam

        if ap < 1e-10 and ad < 1e-10:
            status = STATUS_NUMERICAL_FAILURE
            message = "step length underflow"
            break

    if status in (STATUS_NUMERICAL_FAILURE, STATUS_MAX_ITERATIONS) and \
            best_point is not None:
        # return the best iterate seen; a breakdown can land on (or just
        # past) the solution, e.g. at a unique feasible point on the cone
        # boundary
        Q, S, y, lam = best_point

    if status != STATUS_OPTIMAL and m and m <= 5000:
        # primal polish: minimum-norm correction restoring the equalities,
        # solving (A A^T + E E^T) delta = r_p; the normal matrix is well
        # conditioned independently of the barrier parameter, so this
        # recovers feasibility digits the stalled iteration lost
        try:
            r_p0 = _primal_residual_ld(prob, Q, y, g)
            normal = np.zeros((m, m))
            for a in prob.a_blocks:
                normal += (a @ a.T).toarray()
            if nf:
                normal += E @ E.T
            normal[np.diag_indices(m)] *= 1.0 + 1e-14
            cho = sla.cho_factor(normal)
            for _ in range(4):
                delta = sla.cho_solve(cho, r_p0)
                for b, a in enumerate(prob.a_blocks):
                    d = dims[b]
                    Q[b] = _sym(Q[b] + np.asarray(a.T @ delta).reshape(d, d))
                if nf:
                    y = y + E.T @ delta
                # nudge back inside the cone only when meaningfully outside;
                # tiny negative eigenvalues are within the certification floor
                for b in range(nblocks):
                    floor = float(np.linalg.eigvalsh(Q[b])[0])
                    if floor < -1e-12:
                        Q[b] = Q[b] + (1e-13 - floor) * np.eye(dims[b])
                r_p0 = g - _apply_A(prob, Q) - (E @ y if nf else 0.0)
                if np.max(np.abs(r_p0)) < 1e-13:
                    break
        except (np.linalg.LinAlgError, ValueError):
            pass

    r_p, R_d, r_f = residuals()
    pobj = cmin @ y if nf else 0.0
    dobj = g @ lam
    min_eigs = [float(np.linalg.eigvalsh(Q[b])[0]) if dims[b] else 0.0
                for b in range(nblocks)]
    abs_p = float(np.max(np.abs(r_p))) if m else 0.0
    abs_d = float(max(
        max((np.max(np.abs(R)) if R.size else 0.0) for R in R_d) if nblocks else 0.0,
        np.max(np.abs(r_f)) if nf else 0.0))

    gap_cert = certified_gap(r_p, R_d, r_f)
    if status in (STATUS_NUMERICAL_FAILURE, STATUS_MAX_ITERATIONS):
        rel_gap = gap_cert / (1.0 + abs(pobj) + abs(dobj))
        if (abs_p / norm_g <= tol.feas_tol and abs_d / norm_c <= tol.feas_tol
                and rel_gap <= tol.gap_tol):
            status = STATUS_OPTIMAL
    if status == STATUS_OPTIMAL:
        # certify against the declared tolerances
        if abs_p / norm_g > tol.feas_tol or min(min_eigs, default=0.0) < -tol.eig_tol:
            status = STATUS_NUMERICAL_FAILURE
            message = "converged point failed certification"

    return SdpSolution(
        status=status,
        y=y.copy(),
        blocks=[q.copy() for q in Q],
        objective_value=float(prob.objective @ y) if nf else 0.0,
        primal_residual=abs_p,
        dual_residual=abs_d,
        duality_gap=float(gap_cert),
        min_eigenvalue_per_block=min_eigs,
        iterations=history,
        dual_multipliers=lam.copy(),
        certificate=final,
        message=message,
    )


def check_solution(prob: SdpProblem, sol: SdpSolution) -> dict:
    """Recompute residuals independently of the solver bookkeeping."""
    for d, q in zip(prob.block_dims, sol.blocks):
        if q.shape != (d, d):
            raise ValueError("solution block dimension mismatch")
    if sol.y.shape != (prob.nfree,):
        raise ValueError("solution free-variable dimension mismatch")
    eq = _apply_A(prob, sol.blocks)
    if prob.nfree:
        eq = eq + prob.free_rows @ sol.y
    res = eq - prob.rhs
    min_eigs = [float(np.linalg.eigvalsh(_sym(q))[0]) if q.size else 0.0
                for q in sol.blocks]
    return {
        "equality_residuals": res,
        "max_equality_residual": float(np.max(np.abs(res))) if res.size else 0.0,
        "min_eigenvalue_per_block": min_eigs,
        "objective": float(prob.objective @ sol.y) if prob.nfree else 0.0,
    }


# -- SDPA sparse format ------------------------------------------------------
#
# Layout written (one datum per line group, " quoted lines are comments):
#   m
#   nblocks
#   block sizes (negative entry = diagonal block)
#   g_1 ... g_m
#   <matno> <block> <row> <col> <value>     (matno 0 is the objective)
#
# Free variables are encoded as a trailing diagonal block holding y+ and y-
# (y = y+ - y-), the standard SDPA idiom.  A structure comment preserves the
# original free-variable count so that parsing back is loss-free.


def write_sdpa(prob: SdpProblem, path):
    lines = [f'"sosorbit sdp export: nfree={prob.nfree}']
    m = prob.n_constraints
    block_dims = list(prob.block_dims)
    if prob.nfree:
        block_dims.append(-2 * prob.nfree)
    lines.append(str(m))
    lines.append(str(len(block_dims)))
    lines.append(" ".join(str(d) for d in block_dims))
    lines.append(" ".join(f"{v:.17g}" for v in prob.rhs))

    entries = []
    free_block = len(prob.block_dims) + 1
    if prob.nfree:
        for j, v in enumerate(prob.objective):
            if v != 0.0:
                entries.append((0, free_block, j + 1, j + 1, v))
                entries.append((0, free_block, prob.nfree + j + 1,
                                prob.nfree + j + 1, -v))
    for b, a in enumerate(prob.a_blocks):
        d = prob.block_dims[b]
        coo = a.tocoo()
        for k, flat, v in zip(coo.row, coo.col, coo.data):
            i, j = divmod(int(flat), d)
            if i <= j:
                entries.append((int(k) + 1, b + 1, i + 1, j + 1, float(v)))
    if prob.nfree:
        coo = prob.free_rows.tocoo()
        for k, j, v in zip(coo.row, coo.col, coo.data):
            entries.append((int(k) + 1, free_block, int(j) + 1, int(j) + 1, float(v)))
            entries.append((int(k) + 1, free_block, prob.nfree + int(j) + 1,
                            prob.nfree + int(j) + 1, -float(v)))
    entries.sort()
    lines.extend(f"{e[0]} {e[1]} {e[2]} {e[3]} {e[4]:.17g}" for e in entries)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path) -> SdpProblem:
    """Parse a file written by write_sdpa back into an SdpProblem."""
    nfree = None
    data_lines = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith('"') or line.startswith("*"):
                if "nfree=" in line:
                    nfree = int(line.split("nfree=")[1].split()[0])
                continue
            data_lines.append(line)
    m = int(data_lines[0])
    nblocks = int(data_lines[1])
    raw_dims = [int(t) for t in data_lines[2].replace(",", " ").split()]
    if len(raw_dims) != nblocks:
        raise ValueError("block count mismatch in SDPA file")
    rhs = np.array([float(t) for t in data_lines[3].replace(",", " ").split()])
    if rhs.shape[0] != m:
        raise ValueError("rhs length mismatch in SDPA file")

    if nfree is None:
        nfree = 0
    psd_dims = raw_dims[:-1] if nfree else raw_dims
    if nfree and raw_dims[-1] != -2 * nfree:
        raise ValueError("free-variable block inconsistent with structure comment")
    psd_dims = [abs(d) for d in psd_dims]
    free_block = len(psd_dims) + 1

    rows = [[] for _ in psd_dims]
    cols = [[] for _ in psd_dims]
    vals = [[] for _ in psd_dims]
    frow, fcol, fval = [], [], []
    objective = np.zeros(nfree)
    for line in data_lines[4:]:
        toks = line.split()
        k, b, i, j = (int(toks[0]), int(toks[1]), int(toks[2]), int(toks[3]))
        v = float(toks[4])
        if b == free_block and nfree:
            if i != j:
                raise ValueError("off-diagonal entry in free-variable block")
            if i <= nfree:
                if k == 0:
                    objective[i - 1] = v
                else:
                    frow.append(k - 1)
                    fcol.append(i - 1)
                    fval.append(v)
            # the mirrored y- entries are implied; skip them
            continue
        if k == 0:
            raise ValueError("objective entries on PSD blocks are not supported")
        d = psd_dims[b - 1]
        rows[b - 1].append(k - 1)
        cols[b - 1].append((i - 1) * d + (j - 1))
        vals[b - 1].append(v)
        if i != j:
            rows[b - 1].append(k - 1)
            cols[b - 1].append((j - 1) * d + (i - 1))
            vals[b - 1].append(v)
    a_blocks = [
        sp.coo_matrix((vals[b], (rows[b], cols[b])), shape=(m, d * d)).tocsr()
        for b, d in enumerate(psd_dims)
    ]
    free = sp.coo_matrix((fval, (frow, fcol)), shape=(m, nfree)).tocsr()
    return SdpProblem(psd_dims, nfree, a_blocks, free, rhs, objective,
                      validate=False)


def read_solution_json(path, prob: SdpProblem) -> SdpSolution:
    """Read an externally produced solution {y: [...], blocks: [[...]]}."""
    import json

    with open(path) as fh:
        payload = json.load(fh)
    y = np.asarray(payload.get("y", []), dtype=float)
    blocks = [np.asarray(b, dtype=float) for b in payload.get("blocks", [])]
    if len(blocks) != len(prob.block_dims):
        raise ValueError("block count mismatch between solution and problem")
    sol = SdpSolution(
        status=payload.get("status", STATUS_OPTIMAL),
        y=y,
        blocks=blocks,
        objective_value=float(prob.objective @ y) if prob.nfree else 0.0,
        primal_residual=np.nan,
        dual_residual=np.nan,
        duality_gap=float(payload.get("duality_gap", np.nan)),
        min_eigenvalue_per_block=[],
    )
    report = check_solution(prob, sol)
    sol.primal_residual = report["max_equality_residual"]
    sol.min_eigenvalue_per_block = report["min_eigenvalue_per_block"]
    return sol
