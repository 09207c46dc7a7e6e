"""Volume containers, column access and automatic masking.

Index order is ``data[x, y, z]``; the on-disk linear index is
``x + nx * (y + ny * z)`` (x fastest), matching NIfTI. The phase-encoding
axis is carried as metadata and columns are read with strided views, so no
transposition is needed to change it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu


class DegenerateInputError(ValueError):
    """Raised when data carries no usable information (constant, empty...)."""


def plane_axes(pe_axis: int) -> tuple[int, int, int]:
    """Return ``(pe, cross, slice)`` axes for a phase-encoding axis.

    ``cross`` is the first axis orthogonal to PE; together with PE it spans
    the acquisition-slice plane. ``slice`` indexes the stack of such planes.
    """
    if pe_axis not in (0, 1, 2):
        raise ValueError(f"pe_axis must be 0, 1 or 2, got {pe_axis!r}")
    cross, slc = [a for a in (0, 1, 2) if a != pe_axis]
    return pe_axis, cross, slc


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar grid.

    Parameters
    ----------
    data : array_like
        Voxel values indexed ``[x, y, z]``; stored as float64.
    spacing : tuple of float
        Voxel size in mm along each axis.
    pe_axis : int
        Phase-encoding axis (0, 1 or 2).
    header : NiftiHeader, optional
        Header the volume was read from, kept for round-trip writing.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    pe_axis: int = 0
    header: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be 3D and non-empty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains NaN or Inf")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing!r}")
        plane_axes(self.pe_axis)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def n_pe(self) -> int:
        return self.data.shape[self.pe_axis]

    def with_data(self, data) -> "Volume":
        """New volume on the same grid with different values."""
        return Volume(data, self.spacing, self.pe_axis, self.header)


@dataclass(frozen=True)
class EpiPair:
    """Opposite-polarity acquisitions on a shared grid."""

    plus: Volume
    minus: Volume

    def __post_init__(self):
        p, m = self.plus, self.minus
        if p.dims != m.dims:
            raise ValueError(f"plus/minus dims differ: {p.dims} vs {m.dims}")
        if not np.allclose(p.spacing, m.spacing, rtol=1e-5):
            raise ValueError(f"plus/minus spacing differ: {p.spacing} vs {m.spacing}")
        if p.pe_axis != m.pe_axis:
            raise ValueError("plus/minus PE axes differ")

    @property
    def pe_axis(self) -> int:
        return self.plus.pe_axis

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.plus.dims


def check_mask(mask, dims, *, nonempty: bool = False) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(dims):
        raise ValueError(f"mask dims {mask.shape} do not match volume dims {tuple(dims)}")
    if nonempty and not mask.any():
        raise ValueError("mask is empty")
    return mask


def _column_index(dims, pe_axis: int, slice_index: int, cross_index: int) -> tuple:
    _, cross, slc = plane_axes(pe_axis)
    if not 0 <= slice_index < dims[slc]:
        raise IndexError(f"slice_index {slice_index} out of range [0, {dims[slc]})")
    if not 0 <= cross_index < dims[cross]:
        raise IndexError(f"cross_index {cross_index} out of range [0, {dims[cross]})")
    idx = [slice(None)] * 3
    idx[cross] = cross_index
    idx[slc] = slice_index
    return tuple(idx)


def extract_column(v: Volume, slice_index: int, cross_index: int) -> np.ndarray:
    """Samples along the PE axis at fixed orthogonal coordinates (a copy)."""
    return v.data[_column_index(v.dims, v.pe_axis, slice_index, cross_index)].copy()


def scatter_column(data: np.ndarray, pe_axis: int, slice_index: int,
                   cross_index: int, column) -> None:
    """Write ``column`` back into a mutable array in place."""
    data[_column_index(data.shape, pe_axis, slice_index, cross_index)] = column


def to_columns(data: np.ndarray, pe_axis: int) -> np.ndarray:
    """Reshape ``(nx, ny, nz)`` into ``(n_columns, n_pe)`` rows."""
    moved = np.moveaxis(np.asarray(data), pe_axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-1])


def from_columns(rows: np.ndarray, dims, pe_axis: int) -> np.ndarray:
    """Inverse of :func:`to_columns`."""
    shape = [d for i, d in enumerate(dims) if i != pe_axis] + [dims[pe_axis]]
    return np.moveaxis(rows.reshape(shape), -1, pe_axis)


def auto_mask(v: Volume) -> np.ndarray:
    """Otsu threshold, largest 6-connected component, then a 3x3x3 closing."""
    data = v.data
    lo, hi = data.min(), data.max()
    if not hi > lo:
        raise DegenerateInputError("degenerate intensity range")
    # Thresholding the [0, 1]-rescaled image keeps the mask invariant under
    # positive affine intensity maps.
    scaled = (data - lo) / (hi - lo)
    fg = scaled > threshold_otsu(scaled, nbins=256)
    labels, n = ndimage.label(fg)
    if n == 0:
        raise DegenerateInputError("degenerate intensity range")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    largest = labels == int(np.argmax(sizes))
    padded = np.pad(largest, 2)
    closed = ndimage.binary_closing(padded, structure=np.ones((3, 3, 3), bool))
    return closed[2:-2, 2:-2, 2:-2] | largest
