"""End-to-end correction of a pair with automatic regularisation."""
from __future__ import annotations

import numpy as np

from .morozov import DEFAULT_TAU, estimate_noise, select_lambda
from .ot1d import column_field
from .spectral import regularize_field
from .unwarp import CorrectionResult, apply_correction
from .volume import EpiPair, auto_mask


def correct(pair: EpiPair, mask=None, tau: float = DEFAULT_TAU, lam: float | None = None,
            delta: float | None = None, mode: str = "slice2d",
            threads: int | None = 1) -> CorrectionResult:
    """Estimate, regularise and apply the displacement field.

    Parameters
    ----------
    pair : EpiPair
        Reversed-PE acquisitions.
    mask : array_like of bool, optional
        Foreground mask for the noise estimate; computed from the pair
        average when omitted.
    lam, delta : float, optional
        Fix the filter strength or the target discrepancy directly. By
        default ``delta = tau * sigma`` from the background noise.
    """
    if mask is None:
        mask = auto_mask(pair.plus.with_data(0.5 * (pair.plus.data + pair.minus.data)))
    raw = column_field(pair, threads)
    noise = morozov = None
    if lam is None:
        if delta is None:
            noise = estimate_noise(pair, np.asarray(mask, bool), tau)
            delta = noise.delta
        morozov = select_lambda(raw, delta, mode, threads=threads)
        lam = morozov.lambda_star
    fld = regularize_field(raw, lam, mode, threads)
    return apply_correction(pair, fld, threads, morozov=morozov, noise=noise)
