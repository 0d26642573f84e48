"""Scalar special functions, small dense least squares, and seeded RNG streams.

Everything here is pure: same inputs, same outputs, no module state. The
random-stream type is counter-based (Philox) so that derived sub-streams are a
function of their labels alone, never of thread scheduling or call order.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "norm_cdf",
    "norm_quantile",
    "norm_logcdf",
    "norm_logpdf",
    "LeastSquaresResult",
    "least_squares_fit",
    "RngStream",
]

_SQRT2 = math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal CDF via the complementary error function.

    Accurate to ~1e-15 over the whole real line; saturates to 0/1 in the far
    tails instead of raising.
    """
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


def norm_logcdf(x):
    """log of the standard normal CDF, stable in the left tail."""
    x = np.asarray(x, dtype=float)
    out = special.log_ndtr(x)
    return float(out) if out.ndim == 0 else out


def norm_logpdf(x, mean=0.0, var=1.0):
    """log density of N(mean, var) evaluated at x."""
    x = np.asarray(x, dtype=float)
    out = -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)
    return float(out) if out.ndim == 0 else out


def norm_quantile(p):
    """Inverse of norm_cdf on (0, 1).

    Raises ValueError outside the open interval; norm_cdf(norm_quantile(p))
    recovers p to ~1e-10.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"quantile argument must lie strictly in (0, 1), got {p!r}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LeastSquaresResult:
    """Solution of min ||design @ coef - response||^2 with inference byproducts.

    sigma2_hat uses the unbiased denominator n_rows - rank and is NaN when no
    residual degrees of freedom remain. unscaled_covariance is the
    pseudo-inverse of design' @ design, so coefficient covariance is
    sigma2_hat * unscaled_covariance.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    sigma2_hat: float
    unscaled_covariance: np.ndarray
    rank: int
    df_residual: int
    rank_deficient: bool


def least_squares_fit(design, response):
    """Rank-revealing (SVD) least squares for small dense problems.

    Rank deficiency is flagged, not fatal: the minimum-norm solution is
    returned with ``rank_deficient`` set.
    """
    a = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if a.ndim != 2:
        raise ValueError("design must be a 2-d matrix")
    n, p = a.shape
    if y.shape != (n,):
        raise ValueError(f"response length {y.shape} does not match {n} design rows")
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as columns ({p})")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(y)):
        raise ValueError("design and response must be finite")

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = s[0] * max(n, p) * np.finfo(float).eps if s.size and s[0] > 0 else 0.0
    rank = int(np.sum(s > tol))

    s_kept = s[:rank]
    vt_kept = vt[:rank]
    coef = vt_kept.T @ ((u[:, :rank].T @ y) / s_kept)
    unscaled_cov = (vt_kept.T / s_kept**2) @ vt_kept

    resid = y - a @ coef
    df = n - rank
    sigma2 = float(resid @ resid / df) if df >= 1 else float("nan")

    return LeastSquaresResult(
        coefficients=coef,
        residuals=resid,
        sigma2_hat=sigma2,
        unscaled_covariance=unscaled_cov,
        rank=rank,
        df_residual=df,
        rank_deficient=rank < p,
    )


def _derive_id(base: int, parts) -> int:
    label = "|".join(str(p) for p in parts)
    h = hashlib.blake2b(f"{base}|{label}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    (seed, stream_id) fully determine the variate sequence; ``child`` derives
    further streams by hashing labels, so parallel consumers can claim
    non-overlapping streams without coordination.
    """

    seed: int
    stream_id: int = 0

    def child(self, *parts) -> "RngStream":
        """Derive a sub-stream keyed by the given labels."""
        return RngStream(self.seed, _derive_id(self.stream_id, parts))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))
