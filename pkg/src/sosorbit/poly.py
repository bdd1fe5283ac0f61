"""Sparse multivariate polynomial arithmetic.

Polynomials are stored as a map from exponent tuples (length nvars) to real
coefficients.  This is the common currency between the dynamical-system
definitions, the SOS problem assembly and the seed harvesting: the residual
polynomial of the four-variable three-body problem has thousands of terms out
of ~15k possible ones, so dense storage is never used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Coefficients smaller than this are dropped on normalization.
ZERO_COEFF = 1e-300


class MultiPoly:
    """Sparse polynomial over the reals, keyed by exponent tuples.

    Immutable by convention: all operations return new instances.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None, normalize=True):
        self.nvars = int(nvars)
        if terms is None:
            terms = {}
        if normalize:
            clean = {}
            for exps, coeff in terms.items():
                if len(exps) != self.nvars:
                    raise ValueError(
                        f"exponent vector {exps} has length {len(exps)}, expected {self.nvars}"
                    )
                c = float(coeff)
                if abs(c) > ZERO_COEFF:
                    clean[tuple(int(e) for e in exps)] = c
            self.terms = clean
        else:
            self.terms = terms

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(nvars):
        return MultiPoly(nvars, {}, normalize=False)

    @staticmethod
    def constant(nvars, value):
        return MultiPoly(nvars, {(0,) * nvars: value})

    @staticmethod
    def variable(nvars, i):
        exps = tuple(1 if j == i else 0 for j in range(nvars))
        return MultiPoly(nvars, {exps: 1.0})

    @staticmethod
    def monomial(nvars, exps, coeff=1.0):
        return MultiPoly(nvars, {tuple(exps): coeff})

    # -- basic queries -----------------------------------------------------

    def degree(self):
        """Maximum total degree; the zero polynomial reports 0 by convention."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def is_zero(self):
        return not self.terms

    def coeff_norm(self):
        """Infinity norm over coefficients."""
        if not self.terms:
            return 0.0
        return max(abs(c) for c in self.terms.values())

    def __eq__(self, other):
        return (
            isinstance(other, MultiPoly)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other, self.nvars)
        if other.nvars != self.nvars:
            raise ValueError("nvars mismatch")
        out = dict(self.terms)
        for exps, c in other.terms.items():
            out[exps] = out.get(exps, 0.0) + c
        return MultiPoly(self.nvars, out)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self + (-_coerce(other, self.nvars))

    def __rsub__(self, other):
        return _coerce(other, self.nvars) - self

    def __neg__(self):
        return MultiPoly(
            self.nvars, {e: -c for e, c in self.terms.items()}, normalize=False
        )

    def scale(self, factor):
        factor = float(factor)
        if factor == 0.0:
            return MultiPoly.zero(self.nvars)
        return MultiPoly(self.nvars, {e: c * factor for e, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, n):
        if n < 0:
            raise ValueError("negative power")
        out = MultiPoly.constant(self.nvars, 1.0)
        base = self
        k = int(n)
        while k:
            if k & 1:
                out = multiply(out, base)
            base_needed = k >> 1
            if base_needed:
                base = multiply(base, base)
            k >>= 1
        return out

    def shift_exponents(self, shift):
        """Multiply by the monomial with exponent vector `shift` (coeff 1)."""
        shift = tuple(shift)
        return MultiPoly(
            self.nvars,
            {tuple(e + s for e, s in zip(exps, shift)): c for exps, c in self.terms.items()},
            normalize=False,
        )

    def __repr__(self):
        if not self.terms:
            return "MultiPoly<0>"
        parts = []
        for exps in sorted(self.terms, key=lambda e: (sum(e), e)):
            parts.append(f"{self.terms[exps]:g}*a^{exps}")
        return "MultiPoly<" + " + ".join(parts) + ">"


def _coerce(value, nvars):
    if isinstance(value, MultiPoly):
        return value
    return MultiPoly.constant(nvars, float(value))


def eval_poly(p, a):
    """Evaluate p at the point a with compensated (Kahan) summation.

    The high-degree three-body residual polynomials suffer heavy cancellation
    close to the primaries, which plain left-to-right summation amplifies.
    """
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != p.nvars:
        raise ValueError(f"point has {a.shape[-1]} components, expected {p.nvars}")
    total = 0.0
    comp = 0.0
    for exps, coeff in p.terms.items():
        term = coeff
        for x, e in zip(a, exps):
            if e:
                term *= x**e
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def grad(p):
    """Gradient as a tuple of polynomials, exact coefficient arithmetic."""
    out = []
    for i in range(p.nvars):
        terms = {}
        for exps, coeff in p.terms.items():
            e = exps[i]
            if e == 0:
                continue
            new = list(exps)
            new[i] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coeff * e
        out.append(MultiPoly(p.nvars, terms))
    return tuple(out)


def multiply(p, q):
    """Exact distributive product."""
    if p.nvars != q.nvars:
        raise ValueError("nvars mismatch")
    if not p.terms or not q.terms:
        return MultiPoly.zero(p.nvars)
    # iterate the smaller operand on the outside
    if len(p.terms) > len(q.terms):
        p, q = q, p
    out = {}
    for e1, c1 in p.terms.items():
        for e2, c2 in q.terms.items():
            key = tuple(a + b for a, b in zip(e1, e2))
            out[key] = out.get(key, 0.0) + c1 * c2
    return MultiPoly(p.nvars, out)


def dot(fs, gs):
    """Sum of componentwise products, e.g. f . grad(V)."""
    acc = MultiPoly.zero(fs[0].nvars)
    for f, g in zip(fs, gs):
        acc = acc + multiply(f, g)
    return acc


@dataclass(frozen=True)
class ScalingTransform:
    """Affine change of variables a_s = a * scale + offset (componentwise).

    `scale` entries must be strictly positive; the identity transform has
    scale 1 and offset 0 in every component.
    """

    scale: tuple
    offset: tuple

    def __post_init__(self):
        scale = tuple(float(s) for s in self.scale)
        offset = tuple(float(b) for b in self.offset)
        if len(scale) != len(offset):
            raise ValueError("scale/offset length mismatch")
        for s in scale:
            if not (s > 0.0 and math.isfinite(s)):
                raise ValueError(f"nonpositive or nonfinite scale factor {s}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "offset", offset)

    @staticmethod
    def identity(nvars):
        return ScalingTransform((1.0,) * nvars, (0.0,) * nvars)

    @property
    def nvars(self):
        return len(self.scale)

    def is_identity(self):
        return all(s == 1.0 for s in self.scale) and all(b == 0.0 for b in self.offset)

    def apply(self, a):
        """Map a point from original to scaled coordinates."""
        a = np.asarray(a, dtype=float)
        return a * np.asarray(self.scale) + np.asarray(self.offset)

    def invert_point(self, a_s):
        a_s = np.asarray(a_s, dtype=float)
        return (a_s - np.asarray(self.offset)) / np.asarray(self.scale)

    def inverse(self):
        scale = tuple(1.0 / s for s in self.scale)
        offset = tuple(-b / s for b, s in zip(self.offset, self.scale))
        return ScalingTransform(scale, offset)


def affine_substitute(p, t):
    """Express p in the scaled variables a_s = a * scale + offset.

    Substitutes a_i = (a_{s,i} - offset_i) / scale_i, so that the returned
    polynomial evaluated at t.apply(a) equals p evaluated at a.
    """
    if t.nvars != p.nvars:
        raise ValueError("transform dimension mismatch")
    if t.is_identity():
        return p
    n = p.nvars
    # univariate expansions of ((x_i - b_i)/s_i)^e, cached per (i, e)
    cache = {}

    def expansion(i, e):
        key = (i, e)
        if key not in cache:
            s = t.scale[i]
            b = t.offset[i]
            inv = 1.0 / s**e
            cache[key] = {
                k: math.comb(e, k) * (-b) ** (e - k) * inv for k in range(e + 1)
            }
        return cache[key]

    out = {}
    for exps, coeff in p.terms.items():
        partial = {(0,) * n: coeff}
        for i, e in enumerate(exps):
            if e == 0:
                continue
            exp_i = expansion(i, e)
            nxt = {}
            for key, c in partial.items():
                for k, w in exp_i.items():
                    nk = list(key)
                    nk[i] = k
                    nk = tuple(nk)
                    nxt[nk] = nxt.get(nk, 0.0) + c * w
            partial = nxt
        for key, c in partial.items():
            out[key] = out.get(key, 0.0) + c
    return MultiPoly(n, out)


def monomial_basis(nvars, maxdeg):
    """All exponent vectors with total degree <= maxdeg, graded lex order.

    Within each total degree the order is lexicographic with the first
    variable ranked highest; the full list has C(nvars+maxdeg, maxdeg)
    entries.  The order is fixed globally so that Gram matrices are
    reproducible across runs.
    """
    if nvars < 1:
        raise ValueError("nvars must be >= 1")
    if maxdeg < 0:
        raise ValueError("maxdeg must be >= 0")
    basis = []
    for total in range(maxdeg + 1):
        basis.extend(_exponents_of_degree(nvars, total))
    return basis


def _exponents_of_degree(nvars, total):
    # lexicographic descending in the first variable
    if nvars == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _exponents_of_degree(nvars - 1, total - first):
            out.append((first,) + rest)
    return out


class PolyEvaluator:
    """Vectorized evaluator for repeated evaluation of one polynomial.

    Precomputes the exponent matrix once; `at_many` evaluates at a batch of
    points in one shot.  Plain eval_poly stays the compensated-summation
    reference path.
    """

    def __init__(self, p):
        self.nvars = p.nvars
        if p.terms:
            self.exps = np.array(sorted(p.terms), dtype=np.int64)
            self.coeffs = np.array([p.terms[tuple(e)] for e in self.exps])
        else:
            self.exps = np.zeros((0, p.nvars), dtype=np.int64)
            self.coeffs = np.zeros(0)

    def at(self, a):
        return float(self.at_many(np.asarray(a, dtype=float)[None, :])[0])

    def at_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.coeffs.size == 0:
            return np.zeros(pts.shape[0])
        # pts: (npts, n); powers: (npts, nterms)
        powers = np.prod(pts[:, None, :] ** self.exps[None, :, :], axis=2)
        return powers @ self.coeffs


class GradEvaluator:
    """Vectorized gradient of one polynomial."""

    def __init__(self, p):
        self.parts = [PolyEvaluator(g) for g in grad(p)]

    def at(self, a):
        a = np.asarray(a, dtype=float)[None, :]
        return np.array([part.at_many(a)[0] for part in self.parts])

    def at_many(self, pts):
        return np.stack([part.at_many(pts) for part in self.parts], axis=1)


# -- text serialization ----------------------------------------------------


def to_text(p):
    """One `coefficient e_1 ... e_n` line per term, deterministic order."""
    lines = [f"# multipoly nvars={p.nvars} terms={len(p.terms)}"]
    for exps in sorted(p.terms, key=lambda e: (sum(e), e)):
        coeff = p.terms[exps]
        lines.append(f"{coeff:.17g} " + " ".join(str(e) for e in exps))
    return "\n".join(lines) + "\n"


def from_text(text):
    nvars = None
    terms = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line.split():
                if tok.startswith("nvars="):
                    nvars = int(tok.split("=", 1)[1])
            continue
        parts = line.split()
        coeff = float(parts[0])
        exps = tuple(int(t) for t in parts[1:])
        if nvars is None:
            nvars = len(exps)
        if len(exps) != nvars:
            raise ValueError(f"inconsistent exponent length in line: {raw}")
        terms[exps] = terms.get(exps, 0.0) + coeff
    if nvars is None:
        raise ValueError("empty polynomial text")
    return MultiPoly(nvars, terms)
