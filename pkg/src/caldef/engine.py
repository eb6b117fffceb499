"""Order-by-order deformation of a closed model calibration on a flat torus.

Power series are handled through their plain Taylor coefficients: the gauge
series is a(t) = sum_k c_k t^k with c_k = a_k / k!, and the residual series
d rho_{exp a(t)} Phi^0 = sum_k (dR_k) t^k. The obstruction at order k is the
t^k coefficient computed without the c_k term; solving sets
rho_hat_{c_k} Phi^0 = -d* G_# (Ob_k) and recovers c_k as the unique preimage
orthogonal to the isotropy algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exterior import FormTuple, tuple_to_vec
from .fields import (
    FourierField,
    HodgePackage,
    NonEllipticModeError,
    SupportCapExceeded,
    codifferential,
    d,
    interior_two_tangent,
    L_a,
    matmul_fields,
    nijenhuis,
    rho_hat_field,
)
from .models import CalibrationModel, isotropy_algebra, rho_generator_matrix


@dataclass
class ObstructionClass:
    order: int
    representative: FormTuple | None  # mode-0 coefficient (the harmonic part)
    norm: float
    blocked_modes: dict = field(default_factory=dict)  # mode -> unsolvable residual norm


class ObstructedError(RuntimeError):
    def __init__(self, obstruction: ObstructionClass):
        self.obstruction = obstruction
        super().__init__(f"obstructed at order {obstruction.order} "
                         f"(|class| = {obstruction.norm:.3e})")


@dataclass
class DeformationProblem:
    model: CalibrationModel
    a1: FourierField
    orders: int = 8
    t_eval: tuple = (0.01, 0.02, 0.05, 0.1)
    closure_tol: float = 1e-10
    harmonic_tol: float = 1e-9
    gauge_fix: bool = False
    sobolev_s: float = 6.0
    support_cap: int = 64


@dataclass
class OrderRecord:
    order: int
    coeff_norm: float        # ||a_k||_s / k!
    ob_norm: float           # ||Ob_k||_{s-1}
    harmonic_residue: float  # ||Harm(Ob_k)|| relative to ||Ob_k||
    support_radius: int


@dataclass
class DeformationTrace:
    records: list
    completed: bool
    radius_estimate: float
    obstruction: ObstructionClass | None = None

    def coeff_norms(self) -> dict:
        return {r.order: r.coeff_norm for r in self.records}


class _ExpSeries:
    """Incremental Taylor coefficients of rho_{exp a(t)} Phi^0.

    P[l][m] is the t^m coefficient of rho_hat_a^l Phi^0; adding the order-k
    gauge coefficient only touches P[1][k], so lower orders stay cached.
    """

    def __init__(self, phi0_field: FourierField, max_order: int):
        self.phi0 = phi0_field
        self.N = max_order
        self.coeffs: dict[int, FourierField] = {}
        self.P: list[dict[int, FourierField]] = [{0: phi0_field}]

    def set_coeff(self, j: int, c: FourierField) -> None:
        self.coeffs[j] = c
        if j == 1:
            return
        # late insertion of c_k adds the single l=1 term at order k
        if len(self.P) > 1 and j in self.P[1]:
            self.P[1][j] = self.P[1][j] + rho_hat_field(c, self.phi0)
        elif len(self.P) > 1:
            self.P[1][j] = rho_hat_field(c, self.phi0)

    def _ensure(self, l: int, m: int) -> FourierField:
        while len(self.P) <= l:
            self.P.append({})
        if m in self.P[l]:
            return self.P[l][m]
        acc = self.phi0.zero_like()
        if l >= 1:
            for j in sorted(self.coeffs):
                if j > m - (l - 1):
                    continue
                prev = self._ensure(l - 1, m - j)
                if prev.is_zero():
                    continue
                acc = acc + rho_hat_field(self.coeffs[j], prev)
        self.P[l][m] = acc
        return acc

    def coefficient(self, m: int) -> FourierField:
        """t^m coefficient of rho_{exp a} Phi^0 using the coefficients set so far."""
        total = self.phi0 if m == 0 else self.phi0.zero_like()
        for l in range(1, m + 1):
            total = total + self._ensure(l, m) * (1.0 / math.factorial(l))
        return total


def _phi0_field(model: CalibrationModel, cap: int) -> FourierField:
    return FourierField.constant(model.dim, "tuple", model.Phi0, cap,
                                 {"signature": model.signature})


def taylor_residual(model: CalibrationModel, coeffs: dict[int, FourierField], k: int,
                    cap: int = 64) -> FourierField:
    """dR_k: the t^k coefficient of d rho_{exp a(t)} Phi^0 for the given
    coefficients c_j = a_j / j! (all provided j <= k participate)."""
    es = _ExpSeries(_phi0_field(model, cap), k)
    es.coeffs = {j: c for j, c in coeffs.items() if j <= k}
    return d(es.coefficient(k))


def obstruction(model: CalibrationModel, coeffs: dict[int, FourierField], k: int,
                cap: int = 64) -> tuple[ObstructionClass, FourierField]:
    """Ob_k: dR_k computed without the order-k gauge term, plus its class."""
    below = {j: c for j, c in coeffs.items() if j < k}
    ob = taylor_residual(model, below, k, cap)
    rep = ob.mode0()
    norm0 = rep.norm() if rep is not None else 0.0
    return ObstructionClass(k, rep, norm0), ob


def _coeff_from_rho_image(model: CalibrationModel, x: FourierField) -> FourierField:
    """Recover an endo field c from rho_hat_c Phi^0 = x, orthogonal to the isotropy."""
    R = rho_generator_matrix(model)
    key = "rho_gens_pinv"
    if key not in model._cache:
        model._cache[key] = np.linalg.pinv(R, rcond=1e-12)
    P = model._cache[key]
    n = model.dim
    out = FourierField(n, "endo", None, x.cap)
    for k in x.sorted_modes():
        vec = tuple_to_vec(x.modes[k])
        flat = P @ vec
        mat = flat.reshape(n, n)
        if np.linalg.norm(mat) != 0.0:
            out.modes[k] = mat
    return out


def solve_order(pkg: HodgePackage, ob_field: FourierField, k: int,
                harmonic_tol: float = 1e-9, membership_tol: float = 1e-9
                ) -> tuple[FourierField, ObstructionClass]:
    """Solve rho_hat_{c_k} Phi^0 = -d*_1 G_#(Ob_k); raises ObstructedError when the
    class does not vanish or the defining equation is per-mode unsolvable."""
    model = pkg.model
    ob_norm = ob_field.l2_norm()
    rep = ob_field.mode0()
    harm_norm = rep.norm() if rep is not None else 0.0
    cls = ObstructionClass(k, rep, harm_norm)
    if ob_norm > 0 and harm_norm > harmonic_tol * ob_norm:
        raise ObstructedError(cls)
    coords, proj_res = pkg.to_coords(ob_field, 2)
    if proj_res > membership_tol:
        raise ValueError(f"Ob_{k} is not E^2-valued (residual {proj_res:.2e})")
    scale = max(ob_norm, 1e-300)
    try:
        x = pkg.dstar_green(ob_field, 2) * (-1.0)
        resid = d(x) + ob_field
        blocked = {km: resid.modes[km].norm() for km in resid.sorted_modes()
                   if resid.modes[km].norm() > 1e-8 * scale}
    except NonEllipticModeError:
        x, blocked = _lstsq_solve(pkg, coords, scale, ob_field.cap)
    if blocked:
        # eq_k has no solution inside Gamma(E^1) at these modes
        cls.blocked_modes.update(blocked)
        cls.norm = math.sqrt(harm_norm ** 2 + sum(v * v for v in blocked.values()))
        raise ObstructedError(cls)
    c = _coeff_from_rho_image(model, x)
    return c, cls


def _lstsq_solve(pkg: HodgePackage, ob_coords: dict, scale: float, cap: int):
    """Per-mode minimum-norm solve of sigma_1 x = -ob, used when the # Laplacian
    is singular (non-elliptic models); unsolvable modes are reported as blocked."""
    blocked = {}
    sol_coords = {}
    zero = tuple([0] * pkg.model.dim)
    for km in sorted(ob_coords):
        if km == zero:
            continue
        R = pkg.symbol_R(km, 1)
        sigma = (2.0j * math.pi) * R
        rhs = -ob_coords[km]
        sol, *_ = np.linalg.lstsq(sigma, rhs, rcond=None)
        r = float(np.linalg.norm(sigma @ sol - rhs))
        if r > 1e-8 * scale:
            blocked[km] = r
        else:
            sol_coords[km] = sol
    return pkg.from_coords(sol_coords, 1, cap), blocked


def _check_problem(problem: DeformationProblem, phi0f: FourierField) -> None:
    a1 = problem.a1
    if a1.kind != "endo" or a1.dim != problem.model.dim:
        raise ValueError("a1 must be an endo-valued field on the model's torus")
    im = rho_hat_field(a1, phi0f)
    scale = max(im.l2_norm(), 1e-300)
    closure = d(im).l2_norm()
    if closure > problem.closure_tol * max(1.0, scale):
        raise ValueError(f"d rho_hat_a1 Phi^0 = {closure:.2e} violates closure_tol")
    if problem.gauge_fix:
        co = codifferential(im).l2_norm()
        if co > problem.closure_tol * max(1.0, scale):
            raise ValueError(f"d* rho_hat_a1 Phi^0 = {co:.2e} violates the gauge condition")


def run(problem: DeformationProblem) -> tuple[DeformationTrace, dict]:
    """Iterate orders 2..N: obstruction, class test, Green solve, trace record.

    An obstructed run returns its trace with `completed=False` and the class as
    data; it does not raise.
    """
    model = problem.model
    cap = problem.support_cap
    phi0f = _phi0_field(model, cap)
    _check_problem(problem, phi0f)
    pkg = HodgePackage(model)
    s = problem.sobolev_s
    es = _ExpSeries(phi0f, problem.orders)
    es.set_coeff(1, problem.a1)
    records = [OrderRecord(1, problem.a1.sobolev_norm(s), 0.0, 0.0,
                           problem.a1.support_radius())]
    coeffs = {1: problem.a1}
    trace_obstruction = None
    completed = True
    try:
        for k in range(2, problem.orders + 1):
            ob = d(es.coefficient(k))
            ob_norm = ob.sobolev_norm(s - 1)
            c_k, cls = solve_order(pkg, ob, k, problem.harmonic_tol)
            rel_harm = cls.norm / ob.l2_norm() if ob.l2_norm() > 0 else 0.0
            es.set_coeff(k, c_k)
            coeffs[k] = c_k
            records.append(OrderRecord(k, c_k.sobolev_norm(s), ob_norm, rel_harm,
                                       c_k.support_radius()))
    except ObstructedError as exc:
        trace_obstruction = exc.obstruction
        completed = False
    radius = _radius_estimate({r.order: r.coeff_norm for r in records})
    trace = DeformationTrace(records, completed, radius, trace_obstruction)
    return trace, coeffs


def evaluate(model: CalibrationModel, coeffs: dict[int, FourierField], t: float,
             orders: int | None = None, sobolev_s: float = 6.0,
             cap: int = 64) -> tuple[FourierField, float]:
    """Phi_t from the exp series truncated at the run's order; returns
    (Phi_t, ||d Phi_t||_{s-1})."""
    N = orders if orders is not None else max(coeffs)
    n = model.dim
    a_t = FourierField(n, "endo", None, cap)
    for j in sorted(coeffs):
        a_t = a_t + coeffs[j] * (t ** j)
    phi = _phi0_field(model, cap)
    out = phi
    term = phi
    for l in range(1, N + 1):
        term = rho_hat_field(a_t, term) * (1.0 / l)
        out = out + term
    return out, d(out).sobolev_norm(sobolev_s - 1)


def _radius_estimate(norms: dict) -> float:
    """1 / c from tail ratios of ||a_k||_s / k!."""
    c = _fit_growth_rate(norms, tail_only=True)
    return math.inf if c == 0 else 1.0 / c


def _fit_growth_rate(norms: dict, tail_only: bool = False) -> float:
    """Max of gap ratios (m_k / m_{k-g})^{1/g}, g <= 3, over nonzero orders.

    Exact on geometric traces. The full window is monotone under extending N
    (windows nest), which keeps the majorant rate stable as orders are added;
    the tail-only variant estimates the limiting ratio for the radius report.
    """
    ks = sorted(k for k, v in norms.items() if v > 0)
    if len(ks) < 2:
        return 0.0
    N = max(ks)
    lo = max(2, (N + 1) // 2) if tail_only else 2
    best = 0.0
    for g in (1, 2, 3):
        for k in ks:
            if k < lo or (k - g) not in norms or norms[k - g] <= 0:
                continue
            best = max(best, (norms[k] / norms[k - g]) ** (1.0 / g))
    if best == 0.0:  # no pair inside the window; use the coarsest two orders
        k0, k1 = ks[0], ks[-1]
        if k1 > k0:
            best = (norms[k1] / norms[k0]) ** (1.0 / (k1 - k0))
    return best


@dataclass
class MajorantReport:
    b: float
    c: float
    radius_lower_bound: float
    feasible: bool
    slack: dict


def majorant_diagnostic(trace: DeformationTrace, b: float | None = None,
                        c: float | None = None) -> MajorantReport:
    """Fit (b, c) with ||a_k||_s / k! <= (b / 16c) c^k / k^2 for all recorded k.

    The rate c is the tail maximum of gap ratios (exact on geometric traces);
    b is then the smallest feasible constant. Explicit (b, c) are validated
    instead of fitted.
    """
    norms = trace.coeff_norms()
    if all(v == 0.0 for v in norms.values()):
        return MajorantReport(b if b else 1.0, c if c else 1.0, math.inf, True, {})
    cc = c if c is not None else _fit_growth_rate(norms)
    if cc <= 0:
        return MajorantReport(b if b else 1.0, 0.0, math.inf, False, {})
    need = max(norms[k] * k * k * 16.0 * cc ** (1 - k) for k in norms if norms[k] > 0)
    bb = b if b is not None else need
    slack = {k: (bb / (16.0 * cc)) * cc ** k / (k * k) - norms[k] for k in sorted(norms)}
    feasible = all(v >= -1e-12 * max(1.0, norms.get(k, 0.0)) for k, v in slack.items())
    return MajorantReport(bb, cc, 1.0 / cc, feasible, slack)


# -- standard first-order inputs -------------------------------------------------


def gauge_mode_a1(model: CalibrationModel, kvec, w, cap: int = 64) -> FourierField:
    """Jacobian field of the vector field Re(w e^{2 pi i k.x}): a closed gauge
    direction (d rho_hat_{a1} Phi^0 = d d i_V Phi^0 = 0 for constant Phi^0)."""
    n = model.dim
    kvec = np.asarray(kvec, dtype=int)
    w = np.asarray(w, dtype=complex)
    payload = (2.0j * math.pi) * np.outer(w, kvec)
    return FourierField.real_single(n, "endo", tuple(int(x) for x in kvec), payload, cap)


def constant_a1(model: CalibrationModel, direction=None, seed: int = 0,
                amplitude: float = 1.0, cap: int = 64) -> FourierField:
    """Constant gauge coefficient orthogonal to the isotropy algebra: a genuine
    harmonic representative of H^1(#) on the torus."""
    n = model.dim
    if direction is None:
        rng = np.random.default_rng(seed)
        direction = rng.normal(size=(n, n))
    xi = np.asarray(direction, dtype=float).reshape(n, n)
    iso = isotropy_algebra(model)
    flat = xi.reshape(-1)
    flat = flat - iso.onb @ (iso.onb.T @ flat)
    nrm = np.linalg.norm(flat)
    if nrm == 0:
        raise ValueError("direction lies in the isotropy algebra")
    xi = (amplitude / nrm) * flat.reshape(n, n)
    return FourierField.constant(n, "endo", xi.astype(complex), cap)


def closed_mode_a1(model: CalibrationModel, kvec, seed: int = 0,
                   amplitude: float = 0.1, cap: int = 64) -> FourierField:
    """Random real single-mode a1 with d rho_hat_{a1} Phi^0 = 0: a random element
    of the per-mode nullspace of xi -> k-flat ^ rho_hat_xi Phi^0."""
    from .models import tuple_wedge_matrix

    n = model.dim
    kvec = np.asarray(kvec, dtype=int)
    if not kvec.any():
        raise ValueError("kvec must be a nonzero frequency")
    rng = np.random.default_rng(seed)
    A = tuple_wedge_matrix(model, kvec.astype(float), 1) @ rho_generator_matrix(model)
    _, s, vh = np.linalg.svd(A)
    r = int(np.sum(s > 1e-9 * s[0])) if s.size and s[0] > 0 else 0
    null = vh.T[:, r:]
    combo = null @ (rng.normal(size=null.shape[1]) + 1j * rng.normal(size=null.shape[1]))
    xi = combo.reshape(n, n)
    xi *= amplitude / np.linalg.norm(xi)
    return FourierField.real_single(n, "endo", tuple(int(x) for x in kvec), xi, cap)


def standard_a1(model: CalibrationModel, kvec=None, seed: int = 0,
                mode_amplitude: float = 0.1, constant_amplitude: float = 0.0,
                cap: int = 64) -> FourierField:
    """The acceptance fixture: a single-low-mode closed direction plus an
    optional constant modulus part."""
    n = model.dim
    if kvec is None:
        kvec = [0] * n
        kvec[0] = 1
    a1 = closed_mode_a1(model, kvec, seed, mode_amplitude, cap)
    if constant_amplitude:
        a1 = a1 + constant_a1(model, seed=seed + 1, amplitude=constant_amplitude, cap=cap)
    return a1


# -- closed-form obstruction (the Ad-series cross-check) -------------------------


class _TSeries:
    """Truncated power series with FourierField coefficients."""

    def __init__(self, terms: dict[int, FourierField], max_order: int):
        self.t = {m: f for m, f in terms.items() if m <= max_order and not f.is_zero()}
        self.N = max_order

    @classmethod
    def of_field(cls, f: FourierField, order: int, max_order: int) -> "_TSeries":
        return cls({order: f}, max_order)

    def __add__(self, other: "_TSeries") -> "_TSeries":
        out = dict(self.t)
        for m, f in other.t.items():
            out[m] = out[m] + f if m in out else f
        return _TSeries(out, self.N)

    def __sub__(self, other: "_TSeries") -> "_TSeries":
        return self + other.scale(-1.0)

    def scale(self, s: complex) -> "_TSeries":
        return _TSeries({m: f * s for m, f in self.t.items()}, self.N)

    def map(self, op: Callable) -> "_TSeries":
        return _TSeries({m: op(f) for m, f in self.t.items()}, self.N)

    def conv(self, other: "_TSeries", bilinear: Callable) -> "_TSeries":
        out: dict[int, FourierField] = {}
        for m1 in sorted(self.t):
            for m2 in sorted(other.t):
                if m1 + m2 > self.N:
                    continue
                q = bilinear(self.t[m1], other.t[m2])
                out[m1 + m2] = out[m1 + m2] + q if (m1 + m2) in out else q
        return _TSeries(out, self.N)

    def order(self, m: int, template: FourierField) -> FourierField:
        return self.t.get(m, template.zero_like())


def closed_form_obstruction(model: CalibrationModel, coeffs: dict[int, FourierField],
                            k: int, cap: int = 64) -> FourierField:
    """Ob_k via the commutator series sum_m (-1)^{m+1}/(m+2)! Ad^m_{rho_a} G(a,a)
    applied to Phi^0 (coefficients below order k only)."""
    phi0f = _phi0_field(model, cap)
    N = k
    a_ts = _TSeries({j: c for j, c in coeffs.items() if j < k}, N)
    naa = a_ts.conv(a_ts, nijenhuis)
    a2 = a_ts.conv(a_ts, matmul_fields)

    def rho_op(f_ts: _TSeries) -> _TSeries:
        return a_ts.conv(f_ts, rho_hat_field)

    def g_op(f_ts: _TSeries) -> _TSeries:
        t1 = naa.conv(f_ts, interior_two_tangent)
        t2 = a2.conv(f_ts.map(d), rho_hat_field) - (a2.conv(f_ts, rho_hat_field)).map(d)
        return t1 - t2

    phi_ts = _TSeries.of_field(phi0f, 0, N)
    total: FourierField | None = None
    # Ad^m(G) applied to Phi^0, assembled by operator recursion
    ops: list[Callable] = [g_op]
    for m in range(0, k - 1):
        if m > 0:
            prev = ops[m - 1]

            def ad_m(f_ts, _prev=prev):
                return rho_op(_prev(f_ts)) - _prev(rho_op(f_ts))

            ops.append(ad_m)
        term = ops[m](phi_ts).order(k, phi0f) * ((-1.0) ** (m + 1) / math.factorial(m + 2))
        total = term if total is None else total + term
    return total if total is not None else d(phi0f)
