"""Self-contained numerical kernels for small dense symmetric problems.

Everything the rest of the package needs from linear algebra and special
functions lives here: a thin positive-semidefinite-friendly matrix wrapper,
a cyclic Jacobi eigensolver, the lower branch of the Lambert W function,
an inverse normal CDF, and a couple of geometric constants. The
implementations are deliberately dependency-free (numpy arrays are used as
storage only); library solvers are reserved for test oracles.

Dimensions here are small (covariance matrices of iterate averages), so the
Jacobi sweep's O(d^3) per-sweep cost is irrelevant and its accuracy on
symmetric input is excellent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "SingularMatrixError",
    "SymMatrix",
    "EigenDecomp",
    "sym_eig",
    "inv_sqrt",
    "sqrt_m",
    "log_det",
    "cond",
    "lambert_w_m1",
    "c_d_constant",
    "ellipsoid_volume",
    "normal_quantile",
]

# Relative eigenvalue floor below which a nominally PD matrix is treated as
# numerically singular. Shared by every operation that needs an inverse.
PD_RTOL = 1e-12

# Convergence threshold for the Jacobi sweep, relative to the norm of the
# diagonal. 1e-13 leaves a few ulps of slack above double rounding noise.
_JACOBI_RTOL = 1e-13


class NumericalError(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class SingularMatrixError(NumericalError):
    """A matrix required to be positive definite was singular or indefinite."""


class SymMatrix:
    """Dense symmetric matrix with a defensive constructor.

    The constructor copies its input, checks shape and finiteness, and
    symmetrizes via (A + A^T) / 2 so downstream code never sees asymmetry
    introduced by accumulated round-off. The stored array is frozen.
    """

    __slots__ = ("_a",)

    def __init__(self, entries) -> None:
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] == 0:
            raise ValueError("matrix must have at least one row")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def entries(self) -> np.ndarray:
        """Read-only view of the symmetrized entries."""
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __repr__(self) -> str:
        return f"SymMatrix({self._a.tolist()!r})"


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues in ascending order with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def sym_eig(m: SymMatrix, max_sweeps: int | None = None) -> EigenDecomp:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Sweeps classical two-sided Jacobi rotations over all off-diagonal
    positions in row-cyclic order until the off-diagonal Frobenius norm
    falls below ``1e-13`` times the Frobenius norm of the diagonal. The
    rotation angle at each position follows Golub and Van Loan, Matrix
    Computations, sec. 8.5 (symmetric Jacobi), which annihilates one
    off-diagonal pair exactly per rotation and converges quadratically
    once the matrix is nearly diagonal.

    Parameters
    ----------
    m : SymMatrix
    max_sweeps : int, optional
        Failure threshold, default ``100 * dim**2`` sweeps.

    Returns
    -------
    EigenDecomp
        ``values`` ascending, ``vectors`` orthonormal, columns aligned so
        that ``m = vectors @ diag(values) @ vectors.T``.

    Raises
    ------
    NumericalError
        If the sweep budget is exhausted before convergence.
    """
    d = m.dim
    a = np.array(m.entries, dtype=float, copy=True)
    q = np.eye(d)
    if d == 1:
        return EigenDecomp(values=a[0].copy(), vectors=q)
    if max_sweeps is None:
        max_sweeps = 100 * d * d

    for _ in range(max_sweeps):
        diag_norm = math.sqrt(float(np.sum(np.diag(a) ** 2)))
        # Summing the off-diagonal squares directly avoids the catastrophic
        # cancellation of total minus diagonal, which floors near
        # sqrt(eps) * diag_norm and would stall the sweep loop.
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        off_norm = math.sqrt(float(np.sum(off * off)))
        # <= so the all-zero matrix terminates immediately.
        if off_norm <= _JACOBI_RTOL * diag_norm:
            break
        for p in range(d - 1):
            for r in range(p + 1, d):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                tau = (a[r, r] - a[p, p]) / (2.0 * apr)
                # Smaller root of t^2 + 2 tau t - 1 = 0, stable form.
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_r = a[:, r].copy()
                a[:, p] = c * col_p - s * col_r
                a[:, r] = s * col_p + c * col_r
                row_p = a[p, :].copy()
                row_r = a[r, :].copy()
                a[p, :] = c * row_p - s * row_r
                a[r, :] = s * row_p + c * row_r
                # Pin the annihilated pair to zero to stop round-off drift.
                a[p, r] = 0.0
                a[r, p] = 0.0
                q_p = q[:, p].copy()
                q_r = q[:, r].copy()
                q[:, p] = c * q_p - s * q_r
                q[:, r] = s * q_p + c * q_r
    else:
        raise NumericalError(
            f"Jacobi eigensolver failed to converge after {max_sweeps} sweeps "
            f"(dim {d})"
        )

    order = np.argsort(np.diag(a), kind="stable")
    return EigenDecomp(values=np.diag(a)[order].copy(), vectors=q[:, order].copy())


def _pd_values(m: SymMatrix) -> EigenDecomp:
    """Eigendecomposition plus a positive definiteness gate."""
    dec = sym_eig(m)
    w = dec.values
    if w[-1] <= 0.0 or w[0] <= PD_RTOL * w[-1]:
        raise SingularMatrixError(
            f"matrix is numerically singular or indefinite "
            f"(eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    return dec


def inv_sqrt(m: SymMatrix) -> SymMatrix:
    """Inverse symmetric square root ``m**(-1/2)`` of a PD matrix.

    Raises SingularMatrixError unless the smallest eigenvalue exceeds
    ``1e-12`` times the largest.
    """
    dec = _pd_values(m)
    b = (dec.vectors / np.sqrt(dec.values)) @ dec.vectors.T
    return SymMatrix(b)


def sqrt_m(m: SymMatrix) -> SymMatrix:
    """Symmetric square root ``m**(1/2)`` of a PD matrix."""
    dec = _pd_values(m)
    b = (dec.vectors * np.sqrt(dec.values)) @ dec.vectors.T
    return SymMatrix(b)


def log_det(m: SymMatrix) -> float:
    """Log determinant of a PD matrix, computed from eigenvalues."""
    dec = _pd_values(m)
    return float(np.sum(np.log(dec.values)))


def cond(m: SymMatrix) -> float:
    """Spectral condition number (max eigenvalue over min) of a PD matrix."""
    dec = _pd_values(m)
    return float(dec.values[-1] / dec.values[0])


# ---------------------------------------------------------------------------
# Lambert W, lower real branch.

_BRANCH_POINT = -math.exp(-1.0)


def _wexp(z: float) -> float:
    return z * math.exp(z)


def lambert_w_m1(x: float) -> float:
    """Lower real branch W_{-1}(x) of w * exp(w) = x on [-1/e, 0).

    Strategy: h(w) = w exp(w) is strictly decreasing on (-inf, -1], so the
    root is bracketed and bisection alone would already be safe. A short
    bisection narrows the asymptotic starting point
    ``log(-x) - log(-log(-x))`` (Corless, Gonnet, Hare, Jeffrey and Knuth,
    "On the Lambert W function", Adv. Comput. Math. 5, 1996, eq. 4.19),
    then Halley iterations (ibid., eq. 5.9) polish to full precision. Every
    Halley step is clamped to the bracket, so the iteration cannot escape.

    Raises ValueError outside [-1/e, 0) and NumericalError if the final
    residual ``|w exp(w) - x|`` exceeds ``1e-12 * |x|``.
    """
    x = float(x)
    if not (-math.inf < x < 0.0) or x < _BRANCH_POINT:
        raise ValueError(f"lambert_w_m1 requires -1/e <= x < 0, got {x}")
    if x == _BRANCH_POINT:
        return -1.0

    # Bracket [lo, hi] with h(lo) >= x >= h(hi); h decreasing left of -1.
    hi = -1.0
    lo = min(math.log(-x) - math.log(-math.log(-x)), -2.0)
    while _wexp(lo) < x:
        lo = 2.0 * lo

    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _wexp(mid) >= x:
            lo = mid
        else:
            hi = mid

    w = 0.5 * (lo + hi)
    for _ in range(4):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        # Halley update for f(w) = w e^w - x.
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        if denom == 0.0 or not math.isfinite(denom):
            break
        w_next = w - f / denom
        if not (lo <= w_next <= hi):
            w_next = 0.5 * (lo + hi)
        w = w_next

    if abs(_wexp(w) - x) > 1e-12 * abs(x):
        raise NumericalError(f"lambert_w_m1 failed to converge at x={x}")
    return w


# ---------------------------------------------------------------------------
# Geometry constants.


def c_d_constant(d: int) -> float:
    """Dimensional packing constant d * 2^d * Gamma((d+1)/2) / pi^((d-1)/2).

    Grows super-exponentially; evaluated in log space via lgamma so that
    moderate dimensions do not overflow intermediates.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    log_c = (
        math.log(d)
        + d * math.log(2.0)
        + math.lgamma((d + 1) / 2.0)
        - (d - 1) / 2.0 * math.log(math.pi)
    )
    return math.exp(log_c)


def ellipsoid_volume(semi_axes) -> float:
    """Volume of an axis-aligned ellipsoid with the given semi-axis lengths.

    Uses vol = (2/d) * pi^(d/2) / Gamma(d/2) * prod(semi_axes).
    """
    axes = np.asarray(semi_axes, dtype=float)
    if axes.ndim != 1 or axes.size == 0:
        raise ValueError("semi_axes must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(axes)) or np.any(axes <= 0.0):
        raise ValueError("semi-axes must be finite and positive")
    d = axes.size
    unit = (2.0 / d) * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    return unit * float(np.prod(axes))


# ---------------------------------------------------------------------------
# Inverse normal CDF.

# Rational approximation coefficients from Peter Acklam's algorithm for the
# inverse normal CDF (relative error < 1.15e-9 over (0, 1)).
_ACKLAM_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_ACKLAM_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Quantile function of the standard normal distribution.

    Acklam's rational approximation gives about nine digits; one Newton
    step against the exact CDF (via ``math.erfc``) pushes the result to
    close to machine precision. Absolute error is far below 1e-9 across
    the central range used by the boundaries.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p}")

    a, b, c, dd = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < _ACKLAM_P_LOW:
        u = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / (
            (((dd[0] * u + dd[1]) * u + dd[2]) * u + dd[3]) * u + 1.0
        )
    elif p <= 1.0 - _ACKLAM_P_LOW:
        u = p - 0.5
        r = u * u
        x = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
            * u
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        )
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / (
            (((dd[0] * u + dd[1]) * u + dd[2]) * u + dd[3]) * u + 1.0
        )

    # One Newton step: residual of the exact CDF over the exact density.
    cdf_err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    density = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if density > 0.0:
        x -= cdf_err / density
    return x
