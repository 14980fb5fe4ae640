"""Spectral heat kernel for the two-radius diffusion on the unit disc.

The generator

    L f = (k/8)(1-x^2) f_xx + (k/8)(1-y^2) f_yy - (k/4) x y f_xy
          - (2 + k/8) (x f_x + y f_y)

is symmetric with respect to the weight Psi(x, y) = (1 - x^2 - y^2)^{8/k-1}
on the unit disc, and its eigenfunctions are Jacobi-type polynomials with
eigenvalues lambda_n = -(k/8) n (n + 16/k) depending only on the total
degree n.  This module provides:

  * the orthonormal eigenbasis (``SpectralBasis``, ``basis_eval``);
  * the transition density ``p_t`` with a certified series truncation and
    its stationary limit ``p_infty``;
  * the same densities in gap coordinates (z1, z2) in (0, pi)^2 (``pZ_t``,
    ``pZ_infty``) where x = cos((z1+z2)/2), y = sin((z1-z2)/2);
  * the tilted sub-Markov density ``tilde_pZ_t`` obtained by weighting with
    the diagonal Green's function and the decay rate alpha0;
  * the normalizing constant ``Z_constant`` and the tilted stationary law
    ``tilde_pZ_infty``;
  * quadrature-based survival probabilities ``survival_P2``;
  * a finite-difference application of the generator (``generator_apply``)
    for residual checks.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .context import KappaContext
from .green import G_u
from .quadrature import square_integrate, tanh_sinh_rule
from .special import h_const, jacobi, jacobi_sup_norm, log_gamma, hyp_F

__all__ = [
    "CSV_SCHEMA_VERSION",
    "SpectralBasis",
    "PtResult",
    "eigenvalue",
    "basis_eval",
    "sup_norm",
    "generator_apply",
    "p_t",
    "p_infty",
    "pZ_t",
    "pZ_infty",
    "tilde_pZ_t",
    "Z_constant",
    "tilde_pZ_infty",
    "survival_P2",
    "write_density_grid_csv",
    "write_survival_csv",
]

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1

# Hard cap on the series truncation degree; beyond this the sup-norm tail
# bound is dominated by binomial growth and adds nothing at the times of
# interest, so requests that cannot converge are reported, not refined.
N_CAP = 60

# Levels scanned when pre-computing the tail-bound table.  The summand
# exp(lambda_n t) * T_n peaks near n ~ 8/(k t); 2048 covers t >= 0.004
# for every supported kappa, far below any time used by the package.
_N_SCAN = 2048

# Maximum number of points processed per block in basis-evaluation loops.
_CHUNK = 200_000


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


class SpectralBasis:
    """Orthonormal polynomial eigenbasis of L on the unit disc.

    A mode is labelled (n, j, i): total degree n, radial index j, and
    angular type i (1 for cos, 2 for sin).  In polar coordinates,

        v_{n,j,1} = h_{n,j} P_j^{(8/k-1, m)}(2 r^2 - 1) r^m cos(m theta),
        v_{n,j,2} = h_{n,j} P_j^{(8/k-1, m)}(2 r^2 - 1) r^m sin(m theta),

    with m = n - 2j; the sin mode exists only for m >= 1.  Level n carries
    n + 1 modes, all with eigenvalue lambda_n.  Instances are immutable
    after construction; evaluation helpers are read-only.
    """

    def __init__(self, ctx: KappaContext, n_max: int = N_CAP):
        if not isinstance(n_max, (int, np.integer)) or n_max < 0:
            raise ValueError("n_max must be a nonnegative integer")
        self.ctx = ctx
        self.n_max = int(n_max)
        self.weight_exponent = ctx.weight_exponent

        ns, js, iis = [], [], []
        pos = {}
        level_start = [0]
        for n in range(self.n_max + 1):
            for j in range(n // 2 + 1):
                pos[(n, j, 1)] = len(ns)
                ns.append(n)
                js.append(j)
                iis.append(1)
            for j in range((n - 1) // 2 + 1):
                pos[(n, j, 2)] = len(ns)
                ns.append(n)
                js.append(j)
                iis.append(2)
            level_start.append(len(ns))
        self.mode_n = np.asarray(ns, dtype=np.int64)
        self.mode_j = np.asarray(js, dtype=np.int64)
        self.mode_i = np.asarray(iis, dtype=np.int64)
        self.mode_m = self.mode_n - 2 * self.mode_j
        self._pos = pos
        self._level_start = np.asarray(level_start, dtype=np.int64)
        self.mode_h = np.array(
            [h_const(ctx, n, j) for n, j in zip(ns, js)], dtype=float)
        # cache slot for survival mode integrals, filled lazily
        self._survival_cache = None

    @property
    def kappa(self) -> float:
        return self.ctx.kappa

    @property
    def n_modes(self) -> int:
        return int(self.mode_n.size)

    def mode_index(self, n: int, j: int, i: int) -> int:
        """Flat index of mode (n, j, i); raises ValueError if absent."""
        key = (int(n), int(j), int(i))
        try:
            return self._pos[key]
        except KeyError:
            raise ValueError(
                f"no basis mode with n={n}, j={j}, i={i} "
                f"(need 0 <= 2j <= n for i=1, 2j <= n-1 for i=2, "
                f"n <= {self.n_max})"
            ) from None

    def modes_up_to(self, n_limit: int) -> int:
        """Number of modes with level <= n_limit."""
        n_limit = min(int(n_limit), self.n_max)
        return int(self._level_start[n_limit + 1])


def eigenvalue(ctx: KappaContext, n: int) -> float:
    """Eigenvalue lambda_n = -(k/8) n (n + 16/k) of the disc generator."""
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValueError("eigenvalue requires an integer n >= 0")
    k = ctx.kappa
    return -(k / 8.0) * n * (n + 16.0 / k)


def sup_norm(basis: SpectralBasis, n: int, j: int) -> float:
    """Endpoint-formula bound for sup |v_{n,j,i}| over the closed disc.

    Equals h_{n,j} max(binom-type Gamma ratios) coming from the Jacobi
    endpoint super norm.  It is always an upper bound; it is attained
    (and the sup equals it) when the dominant endpoint is r = 1, i.e.
    when 8/k - 1 >= n - 2j, and for pure radial modes n = 2j.
    """
    e = basis.weight_exponent
    m = n - 2 * j
    if j < 0 or m < 0:
        raise ValueError("sup_norm requires 0 <= 2j <= n")
    return h_const(basis.ctx, n, j) * jacobi_sup_norm(j, e, float(m))


def basis_eval(basis: SpectralBasis, n: int, j: int, i: int, x, y):
    """Evaluate mode (n, j, i) at points of the closed unit disc.

    Raises:
        ValueError: if the mode indices are out of range or a point lies
            outside the closed disc.
    """
    basis.mode_index(n, j, i)  # validates indices
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if np.any(r2 > 1.0 + 1e-12):
        raise ValueError("basis_eval requires points in the closed unit disc")
    e = basis.weight_exponent
    m = n - 2 * j
    u = np.minimum(2.0 * r2 - 1.0, 1.0)
    rad = jacobi(j, e, float(m), u)
    theta = np.arctan2(y, x)
    ang = np.cos(m * theta) if i == 1 else np.sin(m * theta)
    val = h_const(basis.ctx, n, j) * rad * np.sqrt(r2) ** m * ang
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# chunked mode arithmetic
# ---------------------------------------------------------------------------


def _radial_seq(e: float, m: float, j_max: int, u):
    """Yield P_j^{(e, m)}(u) for j = 0 .. j_max via the 3-term recurrence."""
    p_prev = np.ones_like(u)
    yield p_prev
    if j_max < 1:
        return
    p_cur = ((e + m + 2.0) * u + (e - m)) / 2.0
    yield p_cur
    for j in range(2, j_max + 1):
        s = e + m
        c1 = 2.0 * j * (j + s) * (2.0 * j + s - 2.0)
        c2 = 2.0 * j + s - 1.0
        big_a = (2.0 * j + s) * (2.0 * j + s - 2.0)
        big_b = e * e - m * m
        c3 = 2.0 * (j + e - 1.0) * (j + m - 1.0) * (2.0 * j + s)
        p_next = (c2 * (big_a * u + big_b) * p_cur - c3 * p_prev) / c1
        yield p_next
        p_prev, p_cur = p_cur, p_next


def _polar(x, y):
    r2 = x * x + y * y
    u = np.minimum(2.0 * r2 - 1.0, 1.0)
    return np.sqrt(r2), u, np.arctan2(y, x)


def _sum_series(basis: SpectralBasis, n_limit: int, coeffs, x, y):
    """sum over modes s (level <= n_limit) of coeffs[s] v_s(x, y)."""
    e = basis.weight_exponent
    r, u, theta = _polar(x, y)
    out = np.zeros_like(r)
    pos = basis._pos
    h = basis.mode_h
    for m in range(n_limit + 1):
        j_max = (n_limit - m) // 2
        rm = r ** m
        cm = np.cos(m * theta)
        sm = np.sin(m * theta) if m > 0 else None
        for j, p in enumerate(_radial_seq(e, float(m), j_max, u)):
            n = m + 2 * j
            pc = pos[(n, j, 1)]
            acc = coeffs[pc] * cm
            if m > 0:
                acc = acc + coeffs[pos[(n, j, 2)]] * sm
            out += (h[pc] * p * rm) * acc
    return out


def _mode_integrals_block(basis, n_limit, x, y, w, out):
    """Accumulate out[s] += sum_p w_p v_s(x_p, y_p) for one point block."""
    e = basis.weight_exponent
    r, u, theta = _polar(x, y)
    pos = basis._pos
    h = basis.mode_h
    for m in range(n_limit + 1):
        j_max = (n_limit - m) // 2
        rm = r ** m
        wc = w * rm * np.cos(m * theta)
        ws = w * rm * np.sin(m * theta) if m > 0 else None
        for j, p in enumerate(_radial_seq(e, float(m), j_max, u)):
            n = m + 2 * j
            pc = pos[(n, j, 1)]
            out[pc] += h[pc] * float(np.dot(p, wc))
            if m > 0:
                ps = pos[(n, j, 2)]
                out[ps] += h[ps] * float(np.dot(p, ws))
    return out


def _eval_modes_at(basis: SpectralBasis, n_limit: int, x: float, y: float):
    """Vector of v_s(x, y) for all modes with level <= n_limit."""
    out = np.zeros(basis.n_modes)
    _mode_integrals_block(basis, n_limit,
                          np.array([x]), np.array([y]), np.array([1.0]), out)
    return out


def _kernel_pointwise(basis, n_limit, lam_w, xa, ya, xb, yb):
    """sum_s lam_w[n_s] v_s(a) v_s(b) elementwise over same-shape points.

    The cos and sin modes of a given (n, j) pair combine into a single
    cos(m (theta_a - theta_b)) factor, which is used directly.
    """
    e = basis.weight_exponent
    ra, ua, tha = _polar(xa, ya)
    rb, ub, thb = _polar(xb, yb)
    dth = tha - thb
    out = np.zeros_like(ra)
    h = basis.mode_h
    pos = basis._pos
    for m in range(n_limit + 1):
        j_max = (n_limit - m) // 2
        rr = (ra * rb) ** m
        cmd = np.cos(m * dth)
        gen_b = _radial_seq(e, float(m), j_max, ub)
        for j, pa in enumerate(_radial_seq(e, float(m), j_max, ua)):
            pb = next(gen_b)
            n = m + 2 * j
            hh = h[pos[(n, j, 1)]] ** 2
            out += (lam_w[n] * hh) * pa * pb * rr * cmd
    return out


# ---------------------------------------------------------------------------
# truncation control
# ---------------------------------------------------------------------------


def _tail_logs(ctx: KappaContext):
    """log of the level tail weights T_n = (n+1) max_j sup(v_{n,j})^2.

    Cached per context; used to pick the series truncation so the
    discarded tail, measured relative to the n = 0 coefficient 8/(pi k),
    is below the requested tolerance uniformly over the disc.
    """
    key = "density_tail_logs"
    cached = ctx._cache.get(key)
    if cached is not None:
        return cached
    e = ctx.weight_exponent
    ek = e + 1.0  # 8/kappa
    counts = np.arange(_N_SCAN + 1) // 2 + 1
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    n_flat = np.repeat(np.arange(_N_SCAN + 1), counts)
    j_flat = np.concatenate([np.arange(c) for c in counts])
    m_flat = (n_flat - 2 * j_flat).astype(float)
    jf = j_flat.astype(float)
    nf = n_flat.astype(float)
    log_h2 = (np.log(np.where(n_flat == 2 * j_flat, 1.0, 2.0) / np.pi)
              + log_gamma(jf + 1.0) + np.log(nf + ek)
              + log_gamma(nf - jf + ek)
              - log_gamma(jf + ek) - log_gamma(nf - jf + 1.0))
    log_sup_a = log_gamma(e + jf + 1.0) - log_gamma(jf + 1.0) - log_gamma(e + 1.0)
    log_sup_b = log_gamma(m_flat + jf + 1.0) - log_gamma(jf + 1.0) \
        - log_gamma(m_flat + 1.0)
    log_sup2 = log_h2 + 2.0 * np.maximum(log_sup_a, log_sup_b)
    per_level = np.maximum.reduceat(log_sup2, starts)
    out = per_level + np.log(np.arange(_N_SCAN + 1) + 1.0)
    ctx._cache[key] = out
    return out


def _select_truncation(basis: SpectralBasis, t: float, rtol: float):
    """Choose the truncation level for the heat-kernel series at time t.

    Returns (n_used, tail_bound, tolerance, converged).  tail_bound and
    tolerance are both relative to the n = 0 coefficient, so the pointwise
    truncation error is below tail_bound * p_infty uniformly.
    """
    ctx = basis.ctx
    logs = _tail_logs(ctx)
    levels = np.arange(logs.size, dtype=float)
    lam = -(ctx.kappa / 8.0) * levels * (levels + 16.0 / ctx.kappa)
    with np.errstate(over="ignore"):
        terms = np.exp(lam * t + logs) * (np.pi * ctx.kappa / 8.0)
    tails = np.zeros(logs.size)
    tails[:-1] = np.cumsum(terms[::-1])[::-1][1:]
    cap = min(N_CAP, basis.n_max)
    if tails[cap] <= rtol:
        n_used = int(np.argmax(tails <= rtol))
        return n_used, float(tails[n_used]), rtol, True
    return cap, float(tails[cap]), rtol, False


@dataclass(frozen=True)
class PtResult:
    """Heat-kernel value together with its truncation report.

    tail_bound bounds the relative (to the stationary density) error of
    the discarded series tail; converged is False when the requested
    tolerance was unreachable at the truncation cap.
    """

    value: object
    n_used: int
    tail_bound: float
    tolerance: float
    converged: bool


# ---------------------------------------------------------------------------
# heat kernel and stationary density
# ---------------------------------------------------------------------------


def _point_xy(p):
    """Coerce a point to a pair of float arrays (scalars become 0-d)."""
    x, y = p
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def _check_disc(x, y, label: str):
    if np.any(x * x + y * y > 1.0 + 1e-12):
        raise ValueError(f"{label} must lie in the closed unit disc")


def _kernel_sum(basis, n_limit, t, fx, fy, tx, ty):
    """K = sum_s exp(lambda_n t) v_s(from) v_s(to) with flexible shapes.

    Exactly one of from/to may be an array; both may also share a shape
    (pointwise evaluation) or both be scalars.
    """
    ctx = basis.ctx
    lam_w = np.exp(np.array([eigenvalue(ctx, n) * t
                             for n in range(n_limit + 1)]))
    lam_modes = lam_w[basis.mode_n.clip(max=n_limit)]
    if fx.ndim == 0 and tx.ndim == 0:
        v_f = _eval_modes_at(basis, n_limit, float(fx), float(fy))
        v_t = _eval_modes_at(basis, n_limit, float(tx), float(ty))
        sel = basis.modes_up_to(n_limit)
        return np.asarray(
            np.dot(lam_modes[:sel] * v_f[:sel], v_t[:sel]))
    if fx.ndim == 0:
        coeffs = lam_modes * _eval_modes_at(basis, n_limit, float(fx), float(fy))
        return _sum_series(basis, n_limit, coeffs, tx, ty)
    if tx.ndim == 0:
        coeffs = lam_modes * _eval_modes_at(basis, n_limit, float(tx), float(ty))
        return _sum_series(basis, n_limit, coeffs, fx, fy)
    if fx.shape != tx.shape:
        raise ValueError("from/to point arrays must be scalar or same shape")
    return _kernel_pointwise(basis, n_limit, lam_w, fx, fy, tx, ty)


def p_infty(ctx: KappaContext, x, y):
    """Stationary density (8/(pi k)) (1 - x^2 - y^2)^{8/k - 1} on the disc."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_disc(x, y, "p_infty points")
    psi = np.clip(1.0 - x * x - y * y, 0.0, None) ** ctx.weight_exponent
    val = 8.0 / (np.pi * ctx.kappa) * psi
    return float(val) if np.ndim(val) == 0 else val


def p_t(basis: SpectralBasis, frm, to, t, rtol: float = 1e-9,
        detail: bool = False):
    """Transition density of the disc diffusion after time t.

    frm and to are (x, y) pairs; one of them may hold arrays.  The series
    is truncated at the smallest level whose sup-norm tail bound is below
    rtol relative to the stationary density, capped at min(60, n_max);
    when the cap is hit the result reports converged=False with the
    achieved tail bound.

    Returns the value, or a PtResult when detail=True.

    Raises:
        ValueError: if t <= 0 or a point leaves the closed disc.
    """
    if not t > 0.0:
        raise ValueError("p_t requires t > 0")
    fx, fy = _point_xy(frm)
    tx, ty = _point_xy(to)
    _check_disc(fx, fy, "p_t from")
    _check_disc(tx, ty, "p_t to")
    n_used, tail, tol, conv = _select_truncation(basis, float(t), rtol)
    if n_used == 0:
        shape = np.broadcast_shapes(fx.shape, tx.shape)
        value = np.broadcast_to(p_infty(basis.ctx, tx, ty), shape).copy()
        value = float(value) if value.ndim == 0 else value
    else:
        kern = _kernel_sum(basis, n_used, float(t), fx, fy, tx, ty)
        psi = np.clip(1.0 - tx * tx - ty * ty, 0.0, None) \
            ** basis.weight_exponent
        value = psi * kern
        value = float(value) if np.ndim(value) == 0 else value
    if detail:
        return PtResult(value=value, n_used=n_used, tail_bound=tail,
                        tolerance=tol, converged=conv)
    return value


def generator_apply(ctx: KappaContext, f, x, y, step: float = 1e-3):
    """Apply the generator L to a callable f at interior points.

    f must accept numpy arrays (x, y).  Derivatives use 4th-order central
    differences with the given step; points must be at least 2 * step away
    from the boundary so the stencil stays inside the closed disc.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x * x + y * y >= 1.0):
        raise ValueError("generator_apply requires interior points")
    h = float(step)
    c1 = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    o1 = np.array([-2.0, -1.0, 1.0, 2.0])
    c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    o2 = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    f_x = sum(c * f(x + o * h, y) for c, o in zip(c1, o1))
    f_y = sum(c * f(x, y + o * h) for c, o in zip(c1, o1))
    f_xx = sum(c * f(x + o * h, y) for c, o in zip(c2, o2))
    f_yy = sum(c * f(x, y + o * h) for c, o in zip(c2, o2))
    f_xy = sum(ci * cj * f(x + oi * h, y + oj * h)
               for ci, oi in zip(c1, o1) for cj, oj in zip(c1, o1))
    k = ctx.kappa
    val = (k / 8.0 * (1.0 - x * x) * f_xx
           + k / 8.0 * (1.0 - y * y) * f_yy
           - k / 4.0 * x * y * f_xy
           - ctx.lambda_gap * (x * f_x + y * f_y))
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# gap-coordinate densities
# ---------------------------------------------------------------------------


def _z_arrays(z):
    """Coerce a gap point (ZState-like or (z1, z2) pair) to float arrays."""
    z1 = getattr(z, "z1", None)
    if z1 is not None:
        z1, z2 = z.z1, z.z2
    else:
        z1, z2 = z
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(z1 < 0.0) or np.any(z1 > np.pi) \
            or np.any(z2 < 0.0) or np.any(z2 > np.pi):
        raise ValueError("gap coordinates must lie in [0, pi]")
    return z1, z2


def _xy_of_z(z1, z2):
    return np.cos((z1 + z2) / 2.0), np.sin((z1 - z2) / 2.0)


def pZ_infty(ctx: KappaContext, z):
    """Stationary density of the gap pair on (0, pi)^2."""
    z1, z2 = _z_arrays(z)
    e = ctx.weight_exponent
    s1, s2 = np.sin(z1), np.sin(z2)
    val = (8.0 / (np.pi * ctx.kappa)
           * np.clip(s1 * s2, 0.0, None) ** e * (s1 + s2) / 4.0)
    return float(val) if np.ndim(val) == 0 else val


def pZ_t(basis: SpectralBasis, frm, to, t, rtol: float = 1e-9,
         detail: bool = False):
    """Transition density of the gap pair: p_t at the (x, y) images times
    the Jacobian factor (sin z1* + sin z2*)/4."""
    if not t > 0.0:
        raise ValueError("pZ_t requires t > 0")
    fz1, fz2 = _z_arrays(frm)
    tz1, tz2 = _z_arrays(to)
    fx, fy = _xy_of_z(fz1, fz2)
    tx, ty = _xy_of_z(tz1, tz2)
    n_used, tail, tol, conv = _select_truncation(basis, float(t), rtol)
    e = basis.weight_exponent
    s1, s2 = np.sin(tz1), np.sin(tz2)
    jac = (s1 + s2) / 4.0
    psi = np.clip(s1 * s2, 0.0, None) ** e
    if n_used == 0:
        kern = 8.0 / (np.pi * basis.ctx.kappa)
        shape = np.broadcast_shapes(fx.shape, tx.shape)
        value = np.broadcast_to(psi * jac * kern, shape).copy()
    else:
        kern = _kernel_sum(basis, n_used, float(t), fx, fy, tx, ty)
        value = psi * kern * jac
    value = float(value) if np.ndim(value) == 0 else value
    if detail:
        return PtResult(value=value, n_used=n_used, tail_bound=tail,
                        tolerance=tol, converged=conv)
    return value


def _pz_over_gu(ctx: KappaContext, z1, z2):
    """Continuous extension of pZ_infty / G_u to the closed square.

    Evaluated in log space; zero exactly on the z = pi edges and at the
    origin corner, where the extension vanishes.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    k = ctx.kappa
    e = ctx.weight_exponent
    c1 = np.cos(z1 / 2.0)
    c2 = np.cos(z2 / 2.0)
    sp = np.sin((z1 + z2) / 2.0)
    cm = np.cos((z1 - z2) / 2.0)
    dead = ((z1 >= np.pi) | (z2 >= np.pi) | (c1 <= 0.0) | (c2 <= 0.0)
            | (sp <= 0.0) | (cm <= 0.0))
    c1s = np.where(dead, 1.0, c1)
    c2s = np.where(dead, 1.0, c2)
    sps = np.where(dead, 1.0, sp)
    cms = np.where(dead, 1.0, cm)
    ratio = np.clip(c1s * c2s / cms, 0.0, 1.0)
    log_c = np.log(4.0 / (np.pi * k)) + e * np.log(4.0)
    logv = (log_c + e * (np.log(c1s) + np.log(c2s)) + np.log(sps)
            + (1.0 - 4.0 / k) * np.log(cms)
            + np.log(hyp_F(ctx, ratio)))
    out = np.where(dead, 0.0, np.exp(logv))
    return float(out) if np.ndim(out) == 0 else out


def tilde_pZ_t(ctx: KappaContext, basis: SpectralBasis, frm, to, t,
               rtol: float = 1e-9):
    """Tilted sub-Markov transition density of the conditioned gap pair.

    Equal to exp(-alpha0 t) pZ_t(frm, to) G_u(frm) / G_u(to); evaluated
    in a division-free form that stays finite up to the boundary of the
    square.
    """
    if not t > 0.0:
        raise ValueError("tilde_pZ_t requires t > 0")
    fz1, fz2 = _z_arrays(frm)
    tz1, tz2 = _z_arrays(to)
    fx, fy = _xy_of_z(fz1, fz2)
    tx, ty = _xy_of_z(tz1, tz2)
    n_used, _, _, _ = _select_truncation(basis, float(t), rtol)
    if n_used > 0:
        kern = _kernel_sum(basis, n_used, float(t), fx, fy, tx, ty)
    else:
        kern = 8.0 / (np.pi * ctx.kappa)
    gu_f = G_u(ctx, (fz1, fz2))
    ratio_t = _pz_over_gu(ctx, tz1, tz2)
    val = (np.exp(-ctx.alpha0 * float(t)) * gu_f
           * kern * ratio_t * (np.pi * ctx.kappa / 8.0))
    return float(val) if np.ndim(val) == 0 else val


def Z_constant(ctx: KappaContext, rtol: float = 1e-10) -> float:
    """Normalizing constant of the tilted stationary law.

    The integral over (0, pi)^2 of pZ_infty / G_u, computed by adaptive
    tanh-sinh tensor quadrature of the continuous extension.  Cached per
    context.
    """
    key = ("z_constant", rtol)
    cached = ctx._cache.get(key)
    if cached is not None:
        return cached
    val, err = square_integrate(
        lambda z1, z2: _pz_over_gu(ctx, z1, z2), rtol=rtol)
    logger.debug("Z_constant(kappa=%g) = %.12g (quadrature change %.2e)",
                 ctx.kappa, val, err)
    ctx._cache[key] = float(val)
    return float(val)


def tilde_pZ_infty(ctx: KappaContext, z):
    """Stationary density of the conditioned gap pair on (0, pi)^2."""
    z1, z2 = _z_arrays(z)
    val = _pz_over_gu(ctx, z1, z2) / Z_constant(ctx)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# survival probabilities
# ---------------------------------------------------------------------------


def _survival_integrals(ctx: KappaContext, basis: SpectralBasis,
                        n_limit: int):
    """Mode integrals I_s = (pi k / 8) int v_s(x(z), y(z)) ratio(z) dz.

    ratio is the continuous extension of pZ_infty / G_u.  With these,
    survival_P2 becomes exp(-alpha0 t) G_u(z0) sum_s exp(lambda_n t)
    v_s(z0) I_s; the n = 0 term reproduces the Z_constant asymptote
    exactly.  Cached on the basis at the largest level requested so far;
    quadrature levels escalate until the vector stabilizes.
    """
    cache = basis._survival_cache
    if cache is not None and cache["n_limit"] >= n_limit:
        return cache["integrals"]
    pref = np.pi * ctx.kappa / 8.0
    prev = None
    for level in range(3, 7):
        q, w = tanh_sinh_rule(level)
        z = np.pi * q
        wz = np.pi * w
        out = np.zeros(basis.n_modes)
        rows_per = max(1, _CHUNK // z.size)
        for lo in range(0, z.size, rows_per):
            hi = min(lo + rows_per, z.size)
            z1b, z2b = np.meshgrid(z[lo:hi], z, indexing="ij")
            z1b = z1b.ravel()
            z2b = z2b.ravel()
            wb = np.outer(wz[lo:hi], wz).ravel() * _pz_over_gu(ctx, z1b, z2b)
            xb, yb = _xy_of_z(z1b, z2b)
            _mode_integrals_block(basis, n_limit, xb, yb, wb, out)
        out *= pref
        if prev is not None:
            delta = float(np.max(np.abs(out - prev)))
            scale = max(1.0, float(np.abs(out[0])))
            logger.debug("survival integrals level %d: delta %.2e", level, delta)
            if delta <= 1e-10 * scale:
                break
        prev = out
    basis._survival_cache = {"n_limit": n_limit, "integrals": out}
    return out


def survival_P2(ctx: KappaContext, basis: SpectralBasis, z0, t,
                rtol: float = 1e-9) -> float:
    """Survival probability of the conditioned gap pair started at z0.

    Computes the quadrature of tilde_pZ_t(z0, .) over (0, pi)^2 through
    cached spectral mode integrals.  Returns a value clamped to [0, 1].

    Raises:
        ValueError: if t < 0.
    """
    if t < 0.0:
        raise ValueError("survival_P2 requires t >= 0")
    if t == 0.0:
        return 1.0
    z1, z2 = _z_arrays(z0)
    if z1.ndim != 0:
        raise ValueError("survival_P2 takes a single starting point")
    n_used, _, _, _ = _select_truncation(basis, float(t), rtol)
    ints = _survival_integrals(ctx, basis, n_used)
    x0, y0 = _xy_of_z(z1, z2)
    v0 = _eval_modes_at(basis, n_used, float(x0), float(y0))
    sel = basis.modes_up_to(n_used)
    lam_w = np.exp(np.array([eigenvalue(ctx, n) * float(t)
                             for n in range(n_used + 1)]))
    lam_modes = lam_w[basis.mode_n[:sel]]
    total = float(np.dot(lam_modes * v0[:sel], ints[:sel]))
    val = np.exp(-ctx.alpha0 * float(t)) * G_u(ctx, (z1, z2)) * total
    return float(min(max(val, 0.0), 1.0))


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def write_density_grid_csv(path, z1, z2, value):
    """Write a density grid as CSV rows (z1, z2, value)."""
    z1 = np.asarray(z1, dtype=float).ravel()
    z2 = np.asarray(z2, dtype=float).ravel()
    value = np.asarray(value, dtype=float).ravel()
    if not (z1.size == z2.size == value.size):
        raise ValueError("grid columns must have equal length")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["z1", "z2", "value", "schema_version"])
        for a, b, v in zip(z1, z2, value):
            out.writerow([repr(float(a)), repr(float(b)), repr(float(v)),
                          CSV_SCHEMA_VERSION])


def write_survival_csv(path, t, survival, asymptote):
    """Write a survival curve as CSV rows (t, survival, asymptote)."""
    t = np.asarray(t, dtype=float).ravel()
    survival = np.asarray(survival, dtype=float).ravel()
    asymptote = np.asarray(asymptote, dtype=float).ravel()
    if not (t.size == survival.size == asymptote.size):
        raise ValueError("survival columns must have equal length")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "survival", "asymptote", "schema_version"])
        for a, b, c in zip(t, survival, asymptote):
            out.writerow([repr(float(a)), repr(float(b)), repr(float(c)),
                          CSV_SCHEMA_VERSION])
