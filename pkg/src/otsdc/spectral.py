"""Bending-energy low-pass filtering in the Fourier domain.

Every DFT coefficient is divided by ``1 + lam * |k|**4`` with
``k = 2 * pi * f`` and ``f`` the signed frequency in cycles per voxel. Voxel
spacing is deliberately not folded into ``k``: the automatic choice of
``lam`` absorbs any fixed rescaling of the kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from ._parallel import resolve_threads
from .volume import plane_axes

MODES = ("slice2d", "full3d")


@dataclass(frozen=True)
class DisplacementField:
    """PE-directed displacement in voxel units on a volume grid."""

    u: np.ndarray
    validity: np.ndarray
    kind: str = "raw"
    pe_axis: int = 0

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        if u.ndim != 3:
            raise ValueError("displacement field must be 3D")
        if not np.all(np.isfinite(u)):
            raise ValueError("displacement field is not finite")
        validity = np.broadcast_to(np.asarray(self.validity, dtype=bool), u.shape).copy()
        if self.kind not in ("raw", "regularized"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        u.flags.writeable = False
        validity.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "validity", validity)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.u.shape)


def k4_grid(shape) -> np.ndarray:
    """``|k|**4`` on the DFT grid of ``shape`` (any dimensionality)."""
    ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n) for n in shape], indexing="ij")
    k2 = sum(k * k for k in ks)
    return k2 * k2


def attenuation(k4: np.ndarray, lam: float) -> np.ndarray:
    return 1.0 / (1.0 + lam * k4)


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return lam


def bending_filter(u0_slice, lam: float) -> np.ndarray:
    """Apply ``1 / (1 + lam |k|^4)`` to a 2D field via the DFT."""
    lam = _check_lambda(lam)
    u = np.asarray(u0_slice, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("bending_filter expects a 2D field")
    if lam == 0:
        return u.copy()
    spec = np.fft.fft2(u) * attenuation(k4_grid(u.shape), lam)
    return np.fft.ifft2(spec).real


def _filter_axes(pe_axis: int, mode: str) -> tuple[int, ...]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "full3d":
        return (0, 1, 2)
    pe, cross, _ = plane_axes(pe_axis)
    return tuple(sorted((pe, cross)))


class SpectralOperator:
    """Cached spectrum of a field for repeated filtering at many ``lam``.

    Holds the forward transform over the filter axes and the matching
    ``|k|^4`` grid (broadcast over the slice axis in ``slice2d`` mode).
    """

    def __init__(self, u0: np.ndarray, pe_axis: int, mode: str = "slice2d",
                 threads: int | None = 1):
        self.axes = _filter_axes(pe_axis, mode)
        self.workers = resolve_threads(threads)
        self.u0 = np.asarray(u0, dtype=np.float64)
        self.spectrum = scipy.fft.fftn(self.u0, axes=self.axes, workers=self.workers)
        shape = [self.u0.shape[a] if a in self.axes else 1 for a in range(3)]
        self.k4 = k4_grid([self.u0.shape[a] for a in self.axes]).reshape(shape)
        self._power = None

    def apply(self, lam: float) -> np.ndarray:
        lam = _check_lambda(lam)
        if lam == 0:
            return self.u0.copy()
        out = scipy.fft.ifftn(self.spectrum * attenuation(self.k4, lam),
                              axes=self.axes, workers=self.workers)
        return np.ascontiguousarray(out.real)

    def residual_rms(self, lam: float) -> float:
        """RMS of ``filter(u0) - u0`` over the whole grid, via Parseval."""
        lam = _check_lambda(lam)
        if self._power is None:
            self._power = np.abs(self.spectrum) ** 2
        if lam == 0:
            return 0.0
        lk = lam * self.k4
        w = lk / (1.0 + lk)
        per_transform = np.prod([self.u0.shape[a] for a in self.axes])
        total = float(np.sum(self._power * (w * w)))
        return float(np.sqrt(total / (per_transform * self.u0.size)))

    def residual_sup(self) -> float:
        """Limit of :meth:`residual_rms` as ``lam`` grows (only DC survives)."""
        if self._power is None:
            self._power = np.abs(self.spectrum) ** 2
        per_transform = np.prod([self.u0.shape[a] for a in self.axes])
        total = float(np.sum(np.where(self.k4 > 0, self._power, 0.0)))
        return float(np.sqrt(total / (per_transform * self.u0.size)))


def regularize_field(field: DisplacementField, lam: float, mode: str = "slice2d",
                     threads: int | None = 1) -> DisplacementField:
    """Bending-energy filter of a raw field.

    ``slice2d`` filters every plane spanned by the PE axis and the first
    cross-PE axis independently; ``full3d`` uses one 3D transform.
    """
    op = SpectralOperator(field.u, field.pe_axis, mode, threads)
    return DisplacementField(op.apply(lam), field.validity, "regularized", field.pe_axis)
