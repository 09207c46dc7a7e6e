"""Automatic choice of the bending-energy strength (discrepancy principle).

The noise level is a robust MAD estimate over background voxels of both
acquisitions, the target discrepancy is ``delta = tau * sigma`` and ``lam``
is bisected (in log space) until the RMS change of the field,
``rms(u_lam - u0)``, equals ``delta``.

Note that ``sigma`` is in intensity units while the residual is in voxels;
the equation is applied as written and ``delta`` can be overridden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .spectral import DisplacementField, SpectralOperator
from .volume import EpiPair, check_mask, DegenerateInputError

MAD_TO_SIGMA = 1.4826
DEFAULT_TAU = 1.5
MIN_BACKGROUND = 1000
REL_TOL = 1e-3
ABS_TOL = 1e-9
SMALL_DELTA = 1e-6
LAMBDA_START = 1e-6
LAMBDA_CAP = 1e12
MAX_ITER = 200


@dataclass(frozen=True)
class NoiseEstimate:
    sigma: float
    tau: float
    delta: float
    n_background: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MorozovResult:
    lambda_star: float
    residual: float
    delta: float
    iterations: int
    bracket: tuple[float, float]
    status: str  # converged | delta_unreachable | zero_field

    def to_dict(self):
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        return d


def mad_sigma(x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    med = np.median(x)
    return float(MAD_TO_SIGMA * np.median(np.abs(x - med)))


def estimate_noise(pair: EpiPair, mask, tau: float = DEFAULT_TAU) -> NoiseEstimate:
    """Robust noise level from voxels outside ``mask`` in both volumes."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    background = ~check_mask(mask, pair.dims)
    n = int(background.sum())
    if n < MIN_BACKGROUND:
        raise DegenerateInputError(
            f"insufficient background: {n} voxels (need {MIN_BACKGROUND})")
    pooled = np.concatenate([pair.plus.data[background], pair.minus.data[background]])
    sigma = mad_sigma(pooled)
    return NoiseEstimate(sigma, float(tau), float(tau) * sigma, n)


def discrepancy(u0, u_lam, mask=None) -> float:
    """RMS of ``u_lam - u0`` over the grid, or over ``mask`` when given."""
    a = u0.u if isinstance(u0, DisplacementField) else np.asarray(u0, dtype=np.float64)
    b = u_lam.u if isinstance(u_lam, DisplacementField) else np.asarray(u_lam, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"field dims differ: {a.shape} vs {b.shape}")
    d = b - a
    if mask is not None:
        d = d[check_mask(mask, a.shape, nonempty=True)]
    return float(np.sqrt(np.mean(d * d)))


def _tolerance(delta: float) -> float:
    return REL_TOL * delta if delta >= SMALL_DELTA else ABS_TOL


def select_lambda(u0: DisplacementField, delta: float, mode: str = "slice2d",
                  mask=None, threads: int | None = 1) -> MorozovResult:
    """Bisect ``lam`` so that ``discrepancy(u0, filter(u0, lam)) == delta``.

    The residual is nondecreasing in ``lam``. The upper bracket grows by x10
    from 1e-6 until it overshoots ``delta`` (capped at 1e12); bisection then
    runs on ``log(lam)``.
    """
    delta = float(delta)
    if not delta >= 0:
        raise ValueError("delta must be >= 0")
    op = SpectralOperator(u0.u, u0.pe_axis, mode, threads)
    if mask is None:
        r = op.residual_rms
    else:
        mask = check_mask(mask, u0.dims, nonempty=True)
        r = lambda lam: discrepancy(u0.u, op.apply(lam), mask)  # noqa: E731

    tol = _tolerance(delta)
    if delta <= tol:
        return MorozovResult(0.0, 0.0, delta, 0, (0.0, 0.0), "converged")
    sup = op.residual_sup() if mask is None else r(LAMBDA_CAP * 10)
    if sup <= ABS_TOL:
        return MorozovResult(0.0, 0.0, delta, 0, (0.0, 0.0), "zero_field")

    iterations = 0
    hi = LAMBDA_START
    r_hi = r(hi)
    iterations += 1
    while r_hi < delta and hi <= LAMBDA_CAP:
        hi *= 10.0
        r_hi = r(hi)
        iterations += 1
    if r_hi < delta:
        if abs(r_hi - delta) <= tol:
            return MorozovResult(hi, r_hi, delta, iterations, (hi / 10, hi), "converged")
        return MorozovResult(hi, r_hi, delta, iterations, (hi / 10, hi), "delta_unreachable")

    lo = hi / 10.0
    r_lo = r(lo)
    iterations += 1
    while r_lo > delta and iterations < MAX_ITER:
        lo /= 10.0
        r_lo = r(lo)
        iterations += 1

    lam, r_lam = hi, r_hi
    if abs(r_lo - delta) <= tol:
        lam, r_lam = lo, r_lo
    while abs(r_lam - delta) > tol and iterations < MAX_ITER:
        lam = math.exp(0.5 * (math.log(lo) + math.log(hi)))
        r_lam = r(lam)
        iterations += 1
        if r_lam < delta:
            lo, r_lo = lam, r_lam
        else:
            hi, r_hi = lam, r_lam
        if hi / lo - 1.0 < 1e-15:
            break
    status = "converged" if abs(r_lam - delta) <= tol else "delta_unreachable"
    return MorozovResult(lam, r_lam, delta, iterations, (lo, hi), status)
