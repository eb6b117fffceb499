"""Pointwise exterior algebra over R^n with complex coefficients.

Forms are stored sparsely: a strictly increasing multi-index (i1, ..., ip)
with axes in 1..n is the basis covector theta^{i1} ^ ... ^ theta^{ip}, held
internally as the bitmask sum(1 << (i-1)). Iteration is always in
lexicographic multi-index order, so floating-point sums are reproducible.

The GL(V)-action is the pullback convention: (rho_g a)(v1, ...) = a(g v1, ...),
hence rho_hat_xi restricted to one-forms is theta -> theta o xi and
[rho_hat_xi, rho_hat_eta] = rho_hat_{[eta, xi]}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _kernels as K

DEFAULT_PRUNE_EPS = 1e-14


def mask_of(indices: Sequence[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << (i - 1)
    return m


def indices_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@lru_cache(maxsize=None)
def basis_indices(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """All degree-p multi-indices over 1..n in lexicographic order."""
    return tuple(itertools.combinations(range(1, n + 1), p))


@lru_cache(maxsize=None)
def basis_masks(n: int, p: int) -> tuple[int, ...]:
    return tuple(mask_of(ix) for ix in basis_indices(n, p))


@lru_cache(maxsize=None)
def _mask_position(n: int, p: int) -> dict:
    return {m: i for i, m in enumerate(basis_masks(n, p))}


class Form:
    """A complex-coefficient p-form on R^n, sparse over basis covectors."""

    __slots__ = ("dim", "degree", "_c")

    def __init__(self, dim: int, degree: int, coeffs: Mapping | None = None):
        if degree < 0:
            raise ValueError("negative degree")
        self.dim = dim
        self.degree = degree
        self._c: dict = {}
        if coeffs:
            for key, val in coeffs.items():
                if val == 0:
                    continue
                m = key if isinstance(key, int) else mask_of(key)
                if m.bit_count() != degree:
                    raise ValueError(f"multi-index {key!r} has wrong length for degree {degree}")
                if m >= (1 << dim):
                    raise ValueError(f"multi-index {key!r} exceeds dim {dim}")
                self._c[m] = self._c.get(m, 0) + complex(val)

    @classmethod
    def zero(cls, dim: int, degree: int) -> "Form":
        return cls(dim, degree)

    @classmethod
    def basis(cls, dim: int, indices: Sequence[int], coeff: complex = 1.0) -> "Form":
        return cls(dim, len(indices), {tuple(indices): coeff})

    @classmethod
    def _raw(cls, dim: int, degree: int, data: dict) -> "Form":
        f = cls(dim, degree)
        f._c = data
        return f

    def coeff(self, indices: Sequence[int]) -> complex:
        return self._c.get(mask_of(indices), 0j)

    def items(self) -> Iterator[tuple[tuple[int, ...], complex]]:
        """(multi-index, coefficient) pairs in lexicographic order."""
        for ix in sorted(indices_of(m) for m in self._c):
            yield ix, self._c[mask_of(ix)]

    def masks(self) -> dict:
        return self._c

    def __len__(self) -> int:
        return len(self._c)

    def __add__(self, other: "Form") -> "Form":
        self._check_like(other)
        out = dict(self._c)
        for k, v in other._c.items():
            out[k] = out.get(k, 0) + v
        return Form._raw(self.dim, self.degree, out)

    def __sub__(self, other: "Form") -> "Form":
        self._check_like(other)
        out = dict(self._c)
        for k, v in other._c.items():
            out[k] = out.get(k, 0) - v
        return Form._raw(self.dim, self.degree, out)

    def __mul__(self, s: complex) -> "Form":
        return Form._raw(self.dim, self.degree, {k: v * s for k, v in self._c.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "Form":
        return self * (-1.0)

    def conjugate(self) -> "Form":
        return Form._raw(self.dim, self.degree, {k: v.conjugate() for k, v in self._c.items()})

    def real_part(self) -> "Form":
        return Form._raw(self.dim, self.degree,
                         {k: complex(v.real) for k, v in self._c.items() if v.real != 0})

    def imag_part(self) -> "Form":
        return Form._raw(self.dim, self.degree,
                         {k: complex(v.imag) for k, v in self._c.items() if v.imag != 0})

    def is_real(self, tol: float = 1e-12) -> bool:
        return all(abs(v.imag) <= tol for v in self._c.values())

    def norm(self) -> float:
        return math.sqrt(sum((v * v.conjugate()).real for v in self._c.values()))

    def pruned(self, eps: float = DEFAULT_PRUNE_EPS) -> "Form":
        return Form._raw(self.dim, self.degree, {k: v for k, v in self._c.items() if abs(v) > eps})

    def vec(self) -> np.ndarray:
        """Dense coefficient vector over the lexicographic degree-p basis."""
        v = np.zeros(len(basis_masks(self.dim, self.degree)), dtype=complex)
        pos = _mask_position(self.dim, self.degree)
        for m, c in self._c.items():
            v[pos[m]] = c
        return v

    @classmethod
    def from_vec(cls, dim: int, degree: int, v: np.ndarray) -> "Form":
        masks = basis_masks(dim, degree)
        return cls._raw(dim, degree, {m: complex(c) for m, c in zip(masks, v) if c != 0})

    def _check_like(self, other: "Form") -> None:
        if self.dim != other.dim or self.degree != other.degree:
            raise ValueError("dim/degree mismatch")

    def __repr__(self) -> str:
        terms = ", ".join(f"{ix}: {c:.4g}" for ix, c in list(self.items())[:6])
        more = "..." if len(self._c) > 6 else ""
        return f"Form(n={self.dim}, p={self.degree}, {{{terms}{more}}})"


class FormTuple:
    """A tuple of forms carrying the degree signature (p1, ..., pl)."""

    __slots__ = ("parts",)

    def __init__(self, parts: Iterable[Form]):
        self.parts = tuple(parts)
        if not self.parts:
            raise ValueError("empty tuple")
        dims = {f.dim for f in self.parts}
        if len(dims) != 1:
            raise ValueError("parts must share dim")

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    @property
    def signature(self) -> tuple[int, ...]:
        return tuple(f.degree for f in self.parts)

    def __add__(self, other: "FormTuple") -> "FormTuple":
        return FormTuple(a + b for a, b in zip(self.parts, other.parts, strict=True))

    def __sub__(self, other: "FormTuple") -> "FormTuple":
        return FormTuple(a - b for a, b in zip(self.parts, other.parts, strict=True))

    def __mul__(self, s: complex) -> "FormTuple":
        return FormTuple(f * s for f in self.parts)

    __rmul__ = __mul__

    def __neg__(self) -> "FormTuple":
        return self * (-1.0)

    def norm(self) -> float:
        return math.sqrt(sum(f.norm() ** 2 for f in self.parts))

    def is_real(self, tol: float = 1e-12) -> bool:
        return all(f.is_real(tol) for f in self.parts)

    def pruned(self, eps: float = DEFAULT_PRUNE_EPS) -> "FormTuple":
        return FormTuple(f.pruned(eps) for f in self.parts)

    def shifted_signature(self, shift: int) -> tuple[int, ...]:
        return tuple(p + shift for p in self.signature)

    def __repr__(self) -> str:
        return f"FormTuple(sig={self.signature}, parts={list(self.parts)!r})"


def tuple_dim(n: int, signature: Sequence[int]) -> int:
    """Dense coordinate dimension of a tuple space (sum of binomials)."""
    return sum(len(basis_masks(n, p)) for p in signature if 0 <= p <= n)


def tuple_to_vec(t: FormTuple) -> np.ndarray:
    return np.concatenate([f.vec() for f in t.parts]) if len(t.parts) > 1 else t.parts[0].vec()


def vec_to_tuple(n: int, signature: Sequence[int], v: np.ndarray) -> FormTuple:
    parts = []
    off = 0
    for p in signature:
        d = len(basis_masks(n, p))
        parts.append(Form.from_vec(n, p, v[off:off + d]))
        off += d
    return FormTuple(parts)


@dataclass(frozen=True)
class Endo:
    """An element of gl(V) with the column convention xi(e_c) = sum_r mat[r,c] e_r."""

    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("endomorphism must be a square matrix")
        if not np.all(np.isfinite(m.view(float))):
            raise ValueError("non-finite entries")
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def identity(cls, n: int) -> "Endo":
        return cls(np.eye(n))

    @classmethod
    def unit(cls, n: int, r: int, c: int) -> "Endo":
        """E_{rc}: sends e_c to e_r (1-based)."""
        m = np.zeros((n, n))
        m[r - 1, c - 1] = 1.0
        return cls(m)


def _as_mat(xi) -> np.ndarray:
    if isinstance(xi, Endo):
        return xi.mat
    return np.asarray(xi, dtype=complex)


@dataclass(frozen=True)
class Metric:
    """A positive-definite inner product on V, given by its Gram matrix."""

    gram: np.ndarray
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.gram, dtype=float)
        if not np.allclose(g, g.T, atol=1e-12):
            raise ValueError("metric must be symmetric to 1e-12")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("metric must be positive definite")
        object.__setattr__(self, "gram", g)

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    @classmethod
    def euclidean(cls, n: int) -> "Metric":
        return cls(np.eye(n))

    def is_euclidean(self) -> bool:
        return bool(np.array_equal(self.gram, np.eye(self.dim)))

    def form_gram(self, p: int) -> np.ndarray:
        """Gram matrix of the induced inner product on Lambda^p."""
        key = ("gram", p)
        if key not in self._cache:
            n = self.dim
            idx = basis_indices(n, p)
            if self.is_euclidean():
                G = np.eye(len(idx))
            else:
                ginv = np.linalg.inv(self.gram)
                G = np.empty((len(idx), len(idx)))
                for a, I in enumerate(idx):
                    for b, J in enumerate(idx):
                        G[a, b] = np.linalg.det(ginv[np.ix_([i - 1 for i in I],
                                                            [j - 1 for j in J])]) if p else 1.0
            self._cache[key] = G
        return self._cache[key]


def wedge(a: Form, b: Form) -> Form:
    """Exterior product; degrees exceeding n give the zero form of that degree."""
    if a.dim != b.dim:
        raise ValueError("dim mismatch")
    deg = a.degree + b.degree
    if deg > a.dim:
        return Form.zero(a.dim, deg)
    return Form._raw(a.dim, deg, K.wedge_kd(a._c, b._c))


def wedge_tuple(beta: Form, t: FormTuple) -> FormTuple:
    return FormTuple(wedge(beta, f) for f in t.parts)


def interior(v, a):
    """Interior product i_v; v is a vector of coefficients in the e_i basis."""
    if isinstance(a, FormTuple):
        return FormTuple(interior(v, f) for f in a.parts)
    if a.degree == 0:
        return Form.zero(a.dim, 0)
    vv = np.asarray(v, dtype=complex)
    if vv.shape != (a.dim,):
        raise ValueError("vector length must equal dim")
    return Form._raw(a.dim, a.degree - 1, K.interior_kd(vv, a._c))


def rho_hat(xi, a):
    """Differential of the pullback action; a derivation of degree zero."""
    if isinstance(a, FormTuple):
        return FormTuple(rho_hat(xi, f) for f in a.parts)
    m = _as_mat(xi)
    if m.shape[0] != a.dim:
        raise ValueError("dim mismatch")
    return Form._raw(a.dim, a.degree, K.rho_hat_kd(a.dim, m, a._c))


def pullback(g, a):
    """rho_g: evaluate on g-transformed arguments. Requires g invertible."""
    if isinstance(a, FormTuple):
        return FormTuple(pullback(g, f) for f in a.parts)
    m = _as_mat(g)
    n = a.dim
    if abs(np.linalg.det(m)) < 1e-300:
        raise ValueError("not in GL(V)")
    if a.degree == 0:
        return a
    # rho_g theta^i = theta^i o g = sum_j m[i, j] theta^j; extend multiplicatively.
    rows = [{1 << j: m[i, j] for j in range(n) if m[i, j] != 0} for i in range(n)]
    out: dict = {}
    for mask, c in a._c.items():
        acc = {0: c}
        for i in indices_of(mask):
            acc = K.wedge_kd(acc, rows[i - 1])
            if not acc:
                break
        for k, v in acc.items():
            out[k] = out.get(k, 0) + v
    return Form._raw(n, a.degree, out)


def hodge_star(metric: Metric, orientation: int, a: Form) -> Form:
    """Hodge star with a ^ *b = <a, b> vol; * is complex-linear."""
    n, p = a.dim, a.degree
    if metric.dim != n:
        raise ValueError("dim mismatch")
    masks = basis_masks(n, p)
    G = metric.form_gram(p)
    b = a.vec()
    gb = G @ b
    vol = orientation * math.sqrt(np.linalg.det(metric.gram))
    full = (1 << n) - 1
    out: dict = {}
    for i, mI in enumerate(masks):
        if gb[i] == 0:
            continue
        comp = full & ~mI
        out[comp] = out.get(comp, 0) + K.merge_sign(mI, comp) * vol * gb[i]
    return Form._raw(n, n - p, {k: v for k, v in out.items() if v != 0})


def form_inner(a: Form, b: Form, metric: Metric | None = None) -> complex:
    """Hermitian inner product <a, b> = sum G[I,J] a_I conj(b_J)."""
    a._check_like(b)
    if metric is None or metric.is_euclidean():
        keys = sorted(set(a._c) & set(b._c))
        return sum(a._c[k] * b._c[k].conjugate() for k in keys)
    G = metric.form_gram(a.degree)
    return complex(a.vec() @ G @ b.vec().conjugate())


def tuple_inner(s: FormTuple, t: FormTuple, metric: Metric | None = None) -> complex:
    return sum(form_inner(a, b, metric) for a, b in zip(s.parts, t.parts, strict=True))


def exp_action(xi, Phi: FormTuple, order: int) -> FormTuple:
    """Partial sum of the rho-hat exponential series, componentwise."""
    if order < 0:
        raise ValueError("order must be >= 0")
    out = Phi
    term = Phi
    for l in range(1, order + 1):
        term = rho_hat(xi, term) * (1.0 / l)
        out = out + term
    return out
