"""Exact calculus for fields on flat tori T^n held as sparse Fourier series.

A field is a finite map {frequency vector k -> payload}; payloads are pointwise
values: a Form, a FormTuple, an endomorphism (n x n), a vector (n,), or a
Lambda^2 (x) T tensor stored as N[q, i, j] (antisymmetric in i, j). The period
is 1, so differentiating mode k multiplies by 2*pi*i*k. All reductions iterate
modes in sorted order; results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .exterior import (
    Form,
    FormTuple,
    basis_masks,
    interior,
    rho_hat,
    tuple_dim,
    tuple_to_vec,
    vec_to_tuple,
    wedge,
    wedge_tuple,
)
from .models import CalibrationModel, E_space, Subspace, numerical_rank

TWO_PI = 2.0 * math.pi

FORM_KINDS = ("form", "tuple")
ARRAY_KINDS = ("endo", "vector", "two_tangent")


class SupportCapExceeded(RuntimeError):
    def __init__(self, mode, cap, context=""):
        self.mode = tuple(mode)
        self.cap = cap
        self.context = context
        super().__init__(f"mode {self.mode} exceeds support cap {cap}"
                         + (f" in {context}" if context else ""))


class NonEllipticModeError(RuntimeError):
    def __init__(self, mode, detail=""):
        self.mode = tuple(mode)
        super().__init__(f"per-mode Laplacian singular at k={self.mode} {detail}")


@dataclass(frozen=True)
class SobolevParams:
    s: float = 6.0


def _pl_norm(kind: str, p) -> float:
    if kind in FORM_KINDS:
        return p.norm()
    return float(np.linalg.norm(np.asarray(p).ravel()))


def _pl_add(kind: str, a, b):
    if kind in FORM_KINDS:
        return a + b
    return a + b


def _pl_scale(kind: str, a, s: complex):
    if kind in FORM_KINDS:
        return a * s
    return a * s


def _pl_conj(kind: str, a):
    if kind == "form":
        return a.conjugate()
    if kind == "tuple":
        return FormTuple(f.conjugate() for f in a.parts)
    return np.conj(a)


def _pl_prune(kind: str, a, eps: float):
    if kind == "form":
        return a.pruned(eps)
    if kind == "tuple":
        return a.pruned(eps)
    b = np.asarray(a).copy()
    b[np.abs(b) <= eps] = 0
    return b


class FourierField:
    """Sparse Fourier series of payload-valued fields on T^n."""

    __slots__ = ("dim", "kind", "modes", "cap", "meta")

    def __init__(self, dim: int, kind: str, modes: dict | None = None,
                 cap: int = 64, meta: dict | None = None):
        if kind not in FORM_KINDS + ARRAY_KINDS:
            raise ValueError(f"unknown payload kind {kind!r}")
        self.dim = dim
        self.kind = kind
        self.modes: dict = {}
        self.cap = cap
        self.meta = meta or {}
        if modes:
            for k, p in modes.items():
                self._set(tuple(int(x) for x in k), p)

    def _set(self, k: tuple, p) -> None:
        if len(k) != self.dim:
            raise ValueError("frequency length mismatch")
        if max((abs(x) for x in k), default=0) > self.cap:
            raise SupportCapExceeded(k, self.cap)
        if _pl_norm(self.kind, p) != 0.0:
            self.modes[k] = p

    @classmethod
    def constant(cls, dim: int, kind: str, payload, cap: int = 64, meta=None) -> "FourierField":
        return cls(dim, kind, {tuple([0] * dim): payload}, cap, meta)

    @classmethod
    def single(cls, dim: int, kind: str, k, payload, cap: int = 64, meta=None) -> "FourierField":
        return cls(dim, kind, {tuple(k): payload}, cap, meta)

    @classmethod
    def real_single(cls, dim: int, kind: str, k, payload, cap: int = 64, meta=None) -> "FourierField":
        """Real field with modes at +-k: payload/2 at k, conjugate at -k."""
        half = _pl_scale(kind, payload, 0.5)
        modes = {tuple(k): half, tuple(-x for x in k): _pl_conj(kind, half)}
        return cls(dim, kind, modes, cap, meta)

    def zero_like(self, kind: str | None = None, meta=None) -> "FourierField":
        return FourierField(self.dim, kind or self.kind, None, self.cap,
                            meta if meta is not None else dict(self.meta))

    def copy(self) -> "FourierField":
        f = self.zero_like()
        f.modes = dict(self.modes)
        return f

    def sorted_modes(self) -> list:
        return sorted(self.modes)

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check_like(other)
        out = self.copy()
        for k in other.sorted_modes():
            p = other.modes[k]
            if k in out.modes:
                q = _pl_add(self.kind, out.modes[k], p)
                if _pl_norm(self.kind, q) == 0.0:
                    del out.modes[k]
                else:
                    out.modes[k] = q
            else:
                out.modes[k] = p
        return out

    def __sub__(self, other: "FourierField") -> "FourierField":
        return self + (other * (-1.0))

    def __mul__(self, s: complex) -> "FourierField":
        out = self.zero_like()
        for k in self.sorted_modes():
            out.modes[k] = _pl_scale(self.kind, self.modes[k], s)
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "FourierField":
        return self * (-1.0)

    def _check_like(self, other: "FourierField") -> None:
        if self.dim != other.dim or self.kind != other.kind:
            raise ValueError("field dim/kind mismatch")

    def is_zero(self) -> bool:
        return not self.modes

    def is_real(self, tol: float = 1e-12) -> bool:
        """Reality predicate: coefficient at -k is the conjugate of the one at k."""
        scale = max((_pl_norm(self.kind, p) for p in self.modes.values()), default=0.0)
        if scale == 0.0:
            return True
        for k in self.sorted_modes():
            mk = tuple(-x for x in k)
            other = self.modes.get(mk)
            want = _pl_conj(self.kind, self.modes[k])
            diff = _pl_norm(self.kind, _pl_add(self.kind, other, _pl_scale(self.kind, want, -1.0))) \
                if other is not None else _pl_norm(self.kind, want)
            if diff > tol * scale:
                return False
        return True

    def support_radius(self) -> int:
        return max((max(abs(x) for x in k) for k in self.modes), default=0)

    def sobolev_norm(self, s: float) -> float:
        total = 0.0
        for k in self.sorted_modes():
            w = (1.0 + (TWO_PI ** 2) * sum(x * x for x in k)) ** s
            total += w * _pl_norm(self.kind, self.modes[k]) ** 2
        return math.sqrt(total)

    def l2_norm(self) -> float:
        return self.sobolev_norm(0.0)

    def prune(self, eps: float = 1e-14) -> "FourierField":
        out = self.zero_like()
        for k in self.sorted_modes():
            p = _pl_prune(self.kind, self.modes[k], eps)
            if _pl_norm(self.kind, p) != 0.0:
                out.modes[k] = p
        return out

    def mode0(self):
        return self.modes.get(tuple([0] * self.dim))

    def __repr__(self) -> str:
        return (f"FourierField(n={self.dim}, kind={self.kind}, "
                f"modes={len(self.modes)}, radius={self.support_radius()})")


def _k_one_form(dim: int, k: tuple) -> Form:
    return Form(dim, 1, {(i + 1,): TWO_PI * 1j * k[i] for i in range(dim) if k[i]})


def d(f: FourierField) -> FourierField:
    """Exterior derivative: mode k wedges with 2*pi*i*k-flat.

    The mode bookkeeping is exact (no truncation); d o d cancels to
    floating-point roundoff.
    """
    if f.kind not in FORM_KINDS:
        raise ValueError("d expects a form- or tuple-valued field")
    out = f.zero_like()
    if f.kind == "form":
        out.meta = {"degree": f.meta.get("degree", 0) + 1}
    else:
        out.meta = {"signature": tuple(p + 1 for p in f.meta.get("signature", ()))}
    for k in f.sorted_modes():
        if not any(k):
            continue
        u = _k_one_form(f.dim, k)
        p = f.modes[k]
        q = wedge(u, p) if f.kind == "form" else wedge_tuple(u, p)
        if _pl_norm(f.kind, q) != 0.0:
            out.modes[k] = q
    return out


def codifferential(f: FourierField) -> FourierField:
    """Adjoint of d for the flat L^2 pairing: mode k contracts with -2*pi*i*k."""
    if f.kind not in FORM_KINDS:
        raise ValueError("codifferential expects a form- or tuple-valued field")
    out = f.zero_like()
    if f.kind == "form":
        out.meta = {"degree": max(f.meta.get("degree", 1) - 1, 0)}
    else:
        out.meta = {"signature": tuple(p - 1 for p in f.meta.get("signature", ()))}
    for k in f.sorted_modes():
        if not any(k):
            continue
        v = np.array(k, dtype=complex) * (-TWO_PI * 1j)
        q = interior(v, f.modes[k])
        if _pl_norm(f.kind, q) != 0.0:
            out.modes[k] = q
    return out


def _convolve(f: FourierField, g: FourierField, pointwise: Callable, out_kind: str,
              out_meta: dict | None = None, context: str = "") -> FourierField:
    cap = min(f.cap, g.cap)
    out = FourierField(f.dim, out_kind, None, cap, out_meta or {})
    acc: dict = {}
    for k1 in f.sorted_modes():
        p1 = f.modes[k1]
        for k2 in g.sorted_modes():
            k = tuple(a + b for a, b in zip(k1, k2))
            if max((abs(x) for x in k), default=0) > cap:
                raise SupportCapExceeded(k, cap, context)
            q = pointwise(k1, p1, k2, g.modes[k2])
            if q is None:
                continue
            if k in acc:
                acc[k] = _pl_add(out_kind, acc[k], q)
            else:
                acc[k] = q
    for k in sorted(acc):
        if _pl_norm(out_kind, acc[k]) != 0.0:
            out.modes[k] = acc[k]
    return out


def wedge_fields(f: FourierField, g: FourierField) -> FourierField:
    """Mode convolution with the pointwise wedge product."""
    if f.kind == "form" and g.kind == "form":
        meta = {"degree": f.meta.get("degree", 0) + g.meta.get("degree", 0)}
        return _convolve(f, g, lambda k1, a, k2, b: wedge(a, b), "form", meta, "wedge_fields")
    if f.kind == "form" and g.kind == "tuple":
        meta = {"signature": tuple(p + f.meta.get("degree", 0)
                                   for p in g.meta.get("signature", ()))}
        return _convolve(f, g, lambda k1, a, k2, b: wedge_tuple(a, b), "tuple", meta,
                         "wedge_fields")
    raise ValueError("wedge_fields expects (form, form) or (form, tuple)")


def rho_hat_field(a: FourierField, f: FourierField) -> FourierField:
    """Pointwise rho-hat action of an endo-valued field, convolved over modes."""
    if a.kind != "endo" or f.kind not in FORM_KINDS:
        raise ValueError("rho_hat_field expects (endo, form|tuple)")
    return _convolve(a, f, lambda k1, m, k2, p: rho_hat(m, p), f.kind, dict(f.meta),
                     "rho_hat_field")


def interior_field(v: FourierField, f: FourierField) -> FourierField:
    """Pointwise interior product with a vector-valued field."""
    if v.kind != "vector" or f.kind not in FORM_KINDS:
        raise ValueError("interior_field expects (vector, form|tuple)")
    if f.kind == "form":
        meta = {"degree": max(f.meta.get("degree", 1) - 1, 0)}
    else:
        meta = {"signature": tuple(p - 1 for p in f.meta.get("signature", ()))}
    return _convolve(v, f, lambda k1, vv, k2, p: interior(vv, p), f.kind, meta,
                     "interior_field")


def lie_derivative_vector(v: FourierField, f: FourierField) -> FourierField:
    """Cartan formula L_X = d i_X + i_X d for a vector-valued field."""
    return d(interior_field(v, f)) + interior_field(v, d(f))


def matmul_fields(a: FourierField, b: FourierField) -> FourierField:
    if a.kind != "endo" or b.kind != "endo":
        raise ValueError("matmul_fields expects endo fields")
    return _convolve(a, b, lambda k1, m1, k2, m2: m1 @ m2, "endo", None, "matmul_fields")


def L_a(a: FourierField, f: FourierField) -> FourierField:
    """Generalized Lie derivative: the commutator rho_hat_a o d - d o rho_hat_a."""
    return rho_hat_field(a, d(f)) - d(rho_hat_field(a, f))


def nijenhuis(a: FourierField, b: FourierField) -> FourierField:
    """The Lambda^2 (x) T bracket tensor N(a, b) expanded in Fourier modes.

    For single modes with derivative multipliers alpha = 2 pi i k1 and
    beta = 2 pi i k2 the eight bracket terms reduce to matrix expressions in
    the payloads; constant a, b give zero.
    """
    if a.kind != "endo" or b.kind != "endo":
        raise ValueError("nijenhuis expects endo fields")
    n = a.dim

    def pw(k1, A, k2, B):
        alpha = TWO_PI * 1j * np.asarray(k1, dtype=float)
        beta = TWO_PI * 1j * np.asarray(k2, dtype=float)
        u = A.T @ beta  # u_i = sum_p beta_p A[p, i]
        w = B.T @ alpha  # w_j = sum_p alpha_p B[p, j]
        AB = A @ B
        BA = B @ A
        N = (np.einsum("i,qj->qij", u, B) - np.einsum("j,qi->qij", u, B)
             - np.einsum("j,qi->qij", w, A) + np.einsum("i,qj->qij", w, A)
             + np.einsum("j,qi->qij", beta, AB) - np.einsum("i,qj->qij", beta, AB)
             + np.einsum("j,qi->qij", alpha, BA) - np.einsum("i,qj->qij", alpha, BA))
        return N

    return _convolve(a, b, pw, "two_tangent", None, "nijenhuis")


def interior_two_tangent(Nf: FourierField, f: FourierField) -> FourierField:
    """i_N for N in Lambda^2 (x) T: sum_q omega_q ^ i_{e_q} with omega_q = N[q]."""
    if Nf.kind != "two_tangent" or f.kind not in FORM_KINDS:
        raise ValueError("interior_two_tangent expects (two_tangent, form|tuple)")
    n = Nf.dim
    eye = np.eye(n)
    if f.kind == "form":
        meta = {"degree": f.meta.get("degree", 0) + 1}
    else:
        meta = {"signature": tuple(p + 1 for p in f.meta.get("signature", ()))}

    def pw(k1, N, k2, p):
        out = None
        for q in range(n):
            coeffs = {}
            for i in range(n):
                for j in range(i + 1, n):
                    c = N[q, i, j]
                    if c != 0:
                        coeffs[(i + 1, j + 1)] = c
            if not coeffs:
                continue
            om = Form(n, 2, coeffs)
            term = (wedge(om, interior(eye[q], p)) if f.kind == "form"
                    else wedge_tuple(om, interior(eye[q], p)))
            out = term if out is None else _pl_add(f.kind, out, term)
        return out

    return _convolve(Nf, f, pw, f.kind, meta, "interior_two_tangent")


def g_operator(a: FourierField):
    """The operator f -> i_{N(a,a)} f - L_{a^2} f (precomputes N(a,a) and a^2)."""
    naa = nijenhuis(a, a)
    a2 = matmul_fields(a, a)

    def apply(f: FourierField) -> FourierField:
        return interior_two_tangent(naa, f) - L_a(a2, f)

    return apply


def hodge_green_deRham(f: FourierField) -> tuple[FourierField, FourierField]:
    """(harmonic part, Green-operator image) for the flat de Rham Laplacian."""
    harm = f.zero_like()
    green = f.zero_like()
    zero = tuple([0] * f.dim)
    for k in f.sorted_modes():
        if k == zero:
            harm.modes[k] = f.modes[k]
        else:
            lam = (TWO_PI ** 2) * sum(x * x for x in k)
            green.modes[k] = _pl_scale(f.kind, f.modes[k], 1.0 / lam)
    return harm, green


def evaluate_on_grid(f: FourierField, points_per_axis: int) -> dict:
    """Evaluate each component on a regular grid; returns {component: array}.

    Components are multi-index tuples for form fields, (part, multi-index) for
    tuples, and plain numpy indices for array payloads.
    """
    n = f.dim
    axes = [np.arange(points_per_axis) / points_per_axis for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    out: dict = {}
    for k in f.sorted_modes():
        phase = np.zeros_like(grids[0])
        for i in range(n):
            phase = phase + k[i] * grids[i]
        wave = np.exp(TWO_PI * 1j * phase)
        p = f.modes[k]
        if f.kind == "form":
            comps = {ix: c for ix, c in p.items()}
        elif f.kind == "tuple":
            comps = {}
            for pi, part in enumerate(p.parts):
                for ix, c in part.items():
                    comps[(pi, ix)] = c
        else:
            arr = np.asarray(p)
            comps = {idx: arr[idx] for idx in np.ndindex(arr.shape) if arr[idx] != 0}
        for key, c in comps.items():
            if key not in out:
                out[key] = np.zeros_like(wave)
            out[key] = out[key] + c * wave
    return out


# -- the # complex on the torus -------------------------------------------------


class HodgePackage:
    """Per-mode symbol matrices and Green solves for the complex #.

    Level-j fiber coordinates are taken in the orthonormal basis of E^j(V);
    the symbol at mode k is sigma_j(k) = 2 pi i R_j(k) with R_j real.
    """

    def __init__(self, model: CalibrationModel, k_max: int = 3):
        from .models import tuple_wedge_matrix

        self.model = model
        self.k_max = k_max
        self.E = {j: E_space(model, j) for j in range(k_max + 1)}
        self._twm = tuple_wedge_matrix
        self._sym_cache: dict = {}

    def signature(self, j: int) -> tuple[int, ...]:
        return self.model.Phi0.shifted_signature(j - 1)

    def symbol_R(self, k: tuple, j: int) -> np.ndarray:
        """Real part matrix R_j(k): E^j -> E^{j+1} coordinates (symbol / 2 pi i)."""
        key = (tuple(k), j)
        if key not in self._sym_cache:
            u = np.array(k, dtype=float)
            W = self._twm(self.model, u, j)
            self._sym_cache[key] = self.E[j + 1].onb.T @ (W @ self.E[j].onb)
        return self._sym_cache[key]

    def laplacian(self, k: tuple, j: int) -> np.ndarray:
        Rj = self.symbol_R(k, j) if j + 1 <= self.k_max else None
        parts = []
        if Rj is not None:
            parts.append(Rj.T @ Rj)
        if j >= 1:
            Rm = self.symbol_R(k, j - 1)
            parts.append(Rm @ Rm.T)
        if not parts:
            raise ValueError("no symbol data at this level")
        lap = parts[0] if len(parts) == 1 else parts[0] + parts[1]
        return (TWO_PI ** 2) * lap

    def mode_condition(self, k: tuple, j: int) -> float:
        return float(np.linalg.cond(self.laplacian(k, j)))

    def to_coords(self, f: FourierField, j: int) -> tuple[dict, float]:
        """Project tuple-field modes onto the E^j fiber; returns (coords, max rel residual)."""
        B = self.E[j].onb
        coords = {}
        worst = 0.0
        for k in f.sorted_modes():
            v = tuple_to_vec(f.modes[k])
            c = B.T @ v
            back = B @ c
            nv = np.linalg.norm(v)
            if nv > 0:
                worst = max(worst, float(np.linalg.norm(v - back) / nv))
            coords[k] = c
        return coords, worst

    def from_coords(self, coords: dict, j: int, cap: int = 64) -> FourierField:
        n = self.model.dim
        sig = self.signature(j)
        out = FourierField(n, "tuple", None, cap, {"signature": sig})
        B = self.E[j].onb
        for k in sorted(coords):
            vec = B @ coords[k]
            t = vec_to_tuple(n, sig, vec)
            if t.norm() != 0.0:
                out.modes[k] = t
        return out

    def green(self, f: FourierField, j: int, residual_tol: float = 1e-9) -> FourierField:
        """G_#: per-mode inverse of the # Laplacian for k != 0; mode 0 is annihilated."""
        coords, worst = self.to_coords(f, j)
        if worst > residual_tol:
            raise ValueError(f"field is not E^{j}-valued (projection residual {worst:.2e})")
        zero = tuple([0] * self.model.dim)
        out = {}
        for k in sorted(coords):
            if k == zero:
                continue
            lap = self.laplacian(k, j)
            try:
                sol = np.linalg.solve(lap, coords[k])
            except np.linalg.LinAlgError as exc:
                raise NonEllipticModeError(k, str(exc)) from None
            resid = np.linalg.norm(lap @ sol - coords[k])
            if not np.isfinite(sol).all() or resid > 1e-6 * max(1.0, np.linalg.norm(coords[k])):
                raise NonEllipticModeError(k, f"solve residual {resid:.2e}")
            out[k] = sol
        return self.from_coords(out, j, f.cap)

    def harmonic_part(self, f: FourierField) -> FourierField:
        out = f.zero_like()
        zero = tuple([0] * self.model.dim)
        if zero in f.modes:
            out.modes[zero] = f.modes[zero]
        return out

    def dstar_green(self, f: FourierField, j: int = 2) -> FourierField:
        """d*_{j-1} G_# on an E^j-valued field, returned as an E^{j-1}-valued field."""
        coords, worst = self.to_coords(f, j)
        zero = tuple([0] * self.model.dim)
        out = {}
        for k in sorted(coords):
            if k == zero:
                continue
            lap = self.laplacian(k, j)
            try:
                sol = np.linalg.solve(lap, coords[k])
            except np.linalg.LinAlgError:
                raise NonEllipticModeError(k) from None
            R = self.symbol_R(k, j - 1)
            out[k] = (-TWO_PI * 1j) * (R.T @ sol)  # (2 pi i R)^H G
        return self.from_coords(out, j - 1, f.cap)

    def cohomology_dims(self, j_max: int = 2, probe_seed: int = 0) -> list:
        """dim H^j(#) on the torus: nonzero modes cancel by exactness, mode 0
        contributes dim E^j(V). H^0 is infinite when the symbol has a kernel
        on E^0 (reported as math.inf)."""
        rng = np.random.default_rng(probe_seed)
        n = self.model.dim
        dims: list = []
        probes = [np.eye(n)[i] for i in range(n)] + [rng.normal(size=n) for _ in range(4)]
        for j in range(j_max + 1):
            if j == 0:
                finite = True
                for u in probes:
                    W = self._twm(self.model, np.asarray(u, dtype=float), 0)
                    M = W @ self.E[0].onb
                    s = np.linalg.svd(M, compute_uv=False)
                    r = numerical_rank(s) if s.size and s[0] > 0 else 0
                    if r < self.E[0].rank:
                        finite = False
                        break
                dims.append(self.E[0].rank if finite else math.inf)
            else:
                dims.append(self.E[j].rank)
        return dims
