"""Hypergeometric interaction function and Jacobi-polynomial utilities.

The interaction function is ``F(x) = 2F1(4/kappa, 1 - 4/kappa; 8/kappa; x)``
on [0, 1].  It is computed from scratch: a power series on [0, 1/2],
high-order adaptive ODE continuation of ``x(1-x)F'' + (8/kappa - 2x)F'
- (4/kappa)(1 - 4/kappa)F = 0`` beyond 1/2, the Gauss formula at x = 1,
and a 1-x expansion in the last hundredth where the endpoint behavior is
non-analytic.  The logarithmic-derivative combinations G and G-tilde and
the Jacobi-polynomial helpers used by the spectral basis live here too.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma as _gamma
from scipy.special import gammaln as _gammaln

from .context import KappaContext

__all__ = [
    "log_gamma",
    "hyp_F", "hyp_dF", "hyp_F_at_1", "hyp_G", "hyp_tilde_G",
    "jacobi", "jacobi_l2_norm_sq", "jacobi_sup_norm", "h_const",
    "gtilde_table",
]

_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 400
# ODE continuation covers (1/2, _X_SWITCH]; beyond that a 1-x expansion is
# used (the solution is Holder-continuous but not analytic at x = 1).
_X_SWITCH = 0.99


def log_gamma(x):
    """Natural log of the Gamma function for x > 0 (elementwise).

    Raises:
        ValueError: if any entry is <= 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("log_gamma requires x > 0")
    out = _gammaln(x)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# interaction function F
# ---------------------------------------------------------------------------

def _gauss_series(al: float, be: float, ga: float, y):
    """Plain Gauss series 2F1(al, be; ga; y) for |y| well below 1."""
    y = np.asarray(y, dtype=float)
    term = np.ones_like(y)
    acc = np.ones_like(y)
    for n in range(_SERIES_MAX_TERMS):
        term = term * ((al + n) * (be + n) / ((ga + n) * (n + 1.0))) * y
        acc = acc + term
        if np.max(np.abs(term)) < _SERIES_TOL * max(1.0, np.max(np.abs(acc))):
            break
    return acc


def _series_F_and_dF(ctx: KappaContext, x):
    """Power series for (F, F') at |x| <= 1/2 (or everywhere if terminating)."""
    a, b, c = ctx.hyp_a, ctx.hyp_b, ctx.hyp_c
    x = np.asarray(x, dtype=float)
    term = np.ones_like(x)
    f = np.ones_like(x)
    df = np.zeros_like(x)
    coef = 1.0
    xpow = np.ones_like(x)
    for n in range(_SERIES_MAX_TERMS):
        coef = coef * (a + n) * (b + n) / ((c + n) * (n + 1.0))
        if coef == 0.0:
            break
        df = df + coef * (n + 1.0) * xpow
        xpow = xpow * x
        term = coef * xpow
        f = f + term
        if np.max(np.abs(term)) < _SERIES_TOL and abs(coef) < _SERIES_TOL:
            break
    return f, df


def _is_terminating(ctx: KappaContext) -> bool:
    b = ctx.hyp_b
    return b <= 1e-12 and abs(b - round(b)) < 1e-9


def _ode_solution(ctx: KappaContext):
    """Dense DOP853 solution of the F ODE on [1/2, 1), cached per context."""
    sol = ctx._cache.get("hyp_ode")
    if sol is not None:
        return sol
    a, b, c = ctx.hyp_a, ctx.hyp_b, ctx.hyp_c
    f0, df0 = _series_F_and_dF(ctx, 0.5)
    # With a non-analytic endpoint the last hundredth is handled by the 1-x
    # expansion instead; only the integer-exponent cases (where F is C^1 at
    # 1) integrate deeper.
    x_end = _X_SWITCH if _near_one_usable(ctx) else 1.0 - 1e-9

    def rhs(x, y):
        return [y[1], ((a * b) * y[0] - (c - 2.0 * x) * y[1]) / (x * (1.0 - x))]

    res = solve_ivp(rhs, (0.5, x_end), [float(f0), float(df0)],
                    method="DOP853", dense_output=True,
                    rtol=1e-13, atol=1e-15)
    if not res.success:
        raise RuntimeError(f"hypergeometric continuation failed: {res.message}")
    sol = res.sol
    ctx._cache["hyp_ode"] = sol
    return sol


def hyp_F_at_1(ctx: KappaContext) -> float:
    """F(1) = Gamma(8/k) Gamma(8/k - 1) / (Gamma(4/k) Gamma(12/k - 1))."""
    k = ctx.kappa
    return float(np.exp(log_gamma(8.0 / k) + log_gamma(8.0 / k - 1.0)
                        - log_gamma(4.0 / k) - log_gamma(12.0 / k - 1.0)))


def _connection_coeffs(ctx: KappaContext):
    """Coefficients (A, B, s) of F = A*2F1(..;1-s;y) + B*y^s*2F1(..;1+s;y)."""
    cached = ctx._cache.get("hyp_conn")
    if cached is not None:
        return cached
    a, b, c = ctx.hyp_a, ctx.hyp_b, ctx.hyp_c
    s = c - a - b  # = 8/kappa - 1 > 0 on (0, 8)
    A = _gamma(c) * _gamma(s) / (_gamma(c - a) * _gamma(c - b))
    B = _gamma(c) * _gamma(-s) / (_gamma(a) * _gamma(b))
    out = (float(A), float(B), float(s))
    ctx._cache["hyp_conn"] = out
    return out


def _near_one_usable(ctx: KappaContext) -> bool:
    """The 1-x expansion needs a non-integer endpoint exponent 8/kappa - 1."""
    s = ctx.hyp_c - ctx.hyp_a - ctx.hyp_b
    return abs(s - round(s)) > 1e-6


def _near_one_F_and_dF(ctx: KappaContext, x):
    a, b, c = ctx.hyp_a, ctx.hyp_b, ctx.hyp_c
    A, B, s = _connection_coeffs(ctx)
    y = 1.0 - np.asarray(x, dtype=float)
    f1 = _gauss_series(a, b, 1.0 - s, y)
    f2 = _gauss_series(c - a, c - b, 1.0 + s, y)
    F = A * f1 + B * y ** s * f2
    # dF/dx = -dF/dy
    df1 = (a * b / (1.0 - s)) * _gauss_series(a + 1.0, b + 1.0, 2.0 - s, y)
    df2 = ((c - a) * (c - b) / (1.0 + s)) * _gauss_series(c - a + 1.0, c - b + 1.0, 2.0 + s, y)
    with np.errstate(divide="ignore"):
        dF = -(A * df1 + B * (s * y ** (s - 1.0) * f2 + y ** s * df2))
    return F, dF


def _eval_F_dF(ctx: KappaContext, x):
    """Vectorized (F, F') on [-1/2, 1]; F'(1) may be +inf for kappa > 4."""
    x = np.asarray(x, dtype=float)
    if np.any((x < -0.5) | (x > 1.0)):
        raise ValueError("hyp_F requires x in [-1/2, 1]")
    if _is_terminating(ctx):
        return _series_F_and_dF(ctx, x)
    F = np.empty_like(x)
    dF = np.empty_like(x)
    lo = x <= 0.5
    if np.any(lo):
        F[lo], dF[lo] = _series_F_and_dF(ctx, x[lo])
    mid = (x > 0.5) & (x <= _X_SWITCH)
    near = x > _X_SWITCH
    if not _near_one_usable(ctx):
        mid = (x > 0.5) & (x < 1.0)
        near = np.zeros_like(mid)
    if np.any(mid):
        vals = _ode_solution(ctx)(x[mid])
        F[mid], dF[mid] = vals[0], vals[1]
    if np.any(near):
        F[near], dF[near] = _near_one_F_and_dF(ctx, x[near])
    at1 = x == 1.0
    if np.any(at1):
        F[at1] = hyp_F_at_1(ctx)
        k = ctx.kappa
        if k < 4.0:
            a, b, c = ctx.hyp_a, ctx.hyp_b, ctx.hyp_c
            dF[at1] = (a * b / c) * float(
                _gamma(c + 1.0) * _gamma(c - a - b - 1.0)
                / (_gamma(c - a) * _gamma(c - b)))
        elif k == 4.0:
            dF[at1] = 0.0
        else:
            dF[at1] = np.inf
    return F, dF


def hyp_F(ctx: KappaContext, x):
    """Interaction function F(x) = 2F1(4/k, 1-4/k; 8/k; x) on [-1/2, 1]."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    F, _ = _eval_F_dF(ctx, np.atleast_1d(x))
    return float(F[0]) if scalar else F


def hyp_dF(ctx: KappaContext, x):
    """Derivative F'(x) on [-1/2, 1] (+inf at x = 1 when kappa > 4)."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    _, dF = _eval_F_dF(ctx, np.atleast_1d(x))
    return float(dF[0]) if scalar else dF


def hyp_G(ctx: KappaContext, x):
    """G(x) = kappa x F'(x) / F(x) on (0, 1]; G(0+) = 0 exposed at x = 0.

    Raises:
        ValueError: for x < 0 or x > 1.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise ValueError("hyp_G requires x in [0, 1]")
    F, dF = _eval_F_dF(ctx, xa)
    with np.errstate(invalid="ignore"):
        out = ctx.kappa * xa * dF / F
    out[xa == 0.0] = 0.0
    if ctx.kappa > 4.0:
        out[xa == 1.0] = np.inf
    return float(out[0]) if scalar else out


def hyp_tilde_G(ctx: KappaContext, x):
    """G-tilde(x) = G(x) + 2 on (0, 1]; the limit value 2 at 0+ is exposed."""
    g = hyp_G(ctx, x)
    return g + 2.0


# ---------------------------------------------------------------------------
# Jacobi polynomials
# ---------------------------------------------------------------------------

def jacobi(n: int, alpha: float, beta: float, x):
    """Jacobi polynomial P_n^{(alpha, beta)}(x) by three-term recurrence."""
    if n < 0:
        raise ValueError("jacobi requires n >= 0")
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0 if p0.ndim else float(p0)
    p1 = (alpha + 1.0) + (alpha + beta + 2.0) * (x - 1.0) / 2.0
    for m in range(2, n + 1):
        s = m + alpha + beta
        c1 = 2.0 * m * s * (2.0 * m + alpha + beta - 2.0)
        c2 = (2.0 * m + alpha + beta - 1.0) * (alpha ** 2 - beta ** 2)
        c3 = ((2.0 * m + alpha + beta - 1.0) * (2.0 * m + alpha + beta)
              * (2.0 * m + alpha + beta - 2.0))
        c4 = 2.0 * (m + alpha - 1.0) * (m + beta - 1.0) * (2.0 * m + alpha + beta)
        p0, p1 = p1, ((c2 + c3 * x) * p1 - c4 * p0) / c1
    return p1 if p1.ndim else float(p1)


def jacobi_l2_norm_sq(n: int, alpha: float, beta: float) -> float:
    """Squared L2 norm of P_n^{(alpha,beta)} w.r.t. (1-x)^alpha (1+x)^beta."""
    if n < 0 or alpha <= -1.0 or beta <= -1.0:
        raise ValueError("jacobi_l2_norm_sq requires n >= 0, alpha, beta > -1")
    lg = ((alpha + beta + 1.0) * np.log(2.0)
          + log_gamma(n + alpha + 1.0) + log_gamma(n + beta + 1.0)
          - log_gamma(n + 1.0) - log_gamma(n + alpha + beta + 1.0))
    return float(np.exp(lg) / (2.0 * n + alpha + beta + 1.0))


def jacobi_sup_norm(n: int, alpha: float, beta: float) -> float:
    """Sup of |P_n^{(alpha,beta)}| on [-1,1] when max(alpha,beta) >= -1/2.

    Equals Gamma(q + n + 1) / (n! Gamma(q + 1)) with q = max(alpha, beta).

    Raises:
        ValueError: if max(alpha, beta) < -1/2 or min(alpha, beta) <= -1,
            where the endpoint formula is not valid.
    """
    q = max(alpha, beta)
    if q < -0.5 or min(alpha, beta) <= -1.0:
        raise ValueError("jacobi_sup_norm requires max(alpha,beta) >= -1/2 "
                         "and min(alpha,beta) > -1")
    return float(np.exp(log_gamma(q + n + 1.0) - log_gamma(n + 1.0)
                        - log_gamma(q + 1.0)))


def h_const(ctx: KappaContext, n: int, j: int) -> float:
    """Normalization h_{n,j} of the disc eigenbasis.

    h^2 = (1 + ind(n != 2j))/pi * j! (n + 8/k) Gamma(n - j + 8/k)
          / (Gamma(j + 8/k) Gamma(n - j + 1)).

    Raises:
        ValueError: if 2j > n (no such basis element).
    """
    if j < 0 or 2 * j > n:
        raise ValueError("h_const requires 0 <= 2j <= n")
    ek = ctx.hyp_c  # 8/kappa
    pref = 1.0 if n == 2 * j else 2.0
    lg = (log_gamma(j + 1.0) + np.log(n + ek) + log_gamma(n - j + ek)
          - log_gamma(j + ek) - log_gamma(n - j + 1.0))
    return float(np.sqrt(pref / np.pi * np.exp(lg)))


# ---------------------------------------------------------------------------
# lookup table for kernels
# ---------------------------------------------------------------------------

def gtilde_table(ctx: KappaContext, x_max: float = 0.999, n: int = 4001):
    """Uniform table of G-tilde in u = -log(1-x), for interpolation in kernels.

    Returns:
        (u_max, values): values[i] = G-tilde(1 - exp(-u_i)) on the uniform
        grid u_i = i * u_max / (n - 1).
    """
    key = ("gtilde_table", x_max, n)
    cached = ctx._cache.get(key)
    if cached is not None:
        return cached
    u_max = -np.log1p(-x_max)
    u = np.linspace(0.0, u_max, n)
    x = -np.expm1(-u)
    vals = hyp_tilde_G(ctx, x)
    out = (float(u_max), np.asarray(vals, dtype=float))
    ctx._cache[key] = out
    return out
