"""Synthetic ground truth for the reversed-PE forward model.

``make_phantom`` builds an undistorted image (Gaussian blobs on a tissue
plateau inside a soft-edged ellipsoid) and a smooth PE displacement.
``distort`` produces ``I0(x + s*u(x)) * (1 + s*du(x))`` for polarity ``s``
by conservative per-column mass redistribution, so column mass is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from .spectral import DisplacementField
from .unwarp import pe_gradient
from .volume import EpiPair, Volume, from_columns, to_columns


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    n_blobs: int = 5
    blob_intensity: tuple[float, float] = (40.0, 80.0)
    blob_width: tuple[float, float] = (2.0, 4.0)
    tissue_level: float = 40.0
    head_fraction: float = 0.38
    edge_width: float = 2.0
    field_amplitude: float = 3.0
    field_smoothness: float = 10.0
    n_bumps: int = 3
    max_gradient: float = 0.5
    noise_sigma: float = 0.0
    pe_axis: int = 0
    seed: int = 0
    spacing: tuple[float, float, float] = field(default=(1.0, 1.0, 1.0))

    def to_dict(self):
        return asdict(self)


def _grid(dims):
    return np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")


def _head_profile(dims, fraction, edge_width):
    """Soft ellipsoid: 1 inside, cosine taper over ``edge_width`` voxels, 0 outside."""
    X = _grid(dims)
    c = [(n - 1) / 2 for n in dims]
    semi = [fraction * n for n in dims]
    r = np.sqrt(sum(((x - ci) / s) ** 2 for x, ci, s in zip(X, c, semi)))
    band = edge_width / min(semi)
    t = np.clip((r - (1 - band)) / band, 0.0, 1.0)
    return np.where(t < 1.0, np.cos(0.5 * np.pi * t) ** 2, 0.0), r


def make_phantom(spec: PhantomSpec = PhantomSpec()):
    """Return ``(I0, u_true)`` for ``spec``; deterministic in ``spec.seed``."""
    dims = tuple(int(d) for d in spec.dims)
    rng = np.random.default_rng(spec.seed)
    head, r = _head_profile(dims, spec.head_fraction, spec.edge_width)
    X = _grid(dims)
    c = np.array([(n - 1) / 2 for n in dims])
    semi = np.array([spec.head_fraction * n for n in dims])

    def inside_point(scale):
        while True:
            p = rng.uniform(-1, 1, 3)
            if np.sum(p * p) <= 1:
                return c + scale * p * semi

    img = np.full(dims, float(spec.tissue_level))
    for _ in range(spec.n_blobs):
        ctr = inside_point(0.7)
        amp = rng.uniform(*spec.blob_intensity)
        w = rng.uniform(*spec.blob_width)
        img += amp * np.exp(-sum((x - ci) ** 2 for x, ci in zip(X, ctr)) / (2 * w * w))
    img *= head

    u = np.zeros(dims)
    for k in range(spec.n_bumps):
        ctr = inside_point(0.6)
        sign = 1.0 if k % 2 == 0 else -1.0
        weight = sign * rng.uniform(0.5, 1.0)
        s = spec.field_smoothness
        u += weight * np.exp(-sum((x - ci) ** 2 for x, ci in zip(X, ctr)) / (2 * s * s))
    peak = np.abs(u).max()
    if spec.field_amplitude == 0 or peak == 0:
        u = np.zeros(dims)
    else:
        u *= spec.field_amplitude / peak
    u_true = DisplacementField(u, np.ones(dims, bool), "raw", spec.pe_axis)
    if u.shape[spec.pe_axis] >= 3:
        g = np.abs(pe_gradient(u_true)).max()
        if g > spec.max_gradient:
            raise ValueError(
                f"infeasible gradient bound: max|du| = {g:.3f} > {spec.max_gradient} "
                "at the requested amplitude; increase field_smoothness")
    return Volume(img, spec.spacing, spec.pe_axis), u_true


def _edge_values(U: np.ndarray) -> np.ndarray:
    """Field at the n + 1 cell boundaries of each row (linear, end-clamped)."""
    mid = 0.5 * (U[:, :-1] + U[:, 1:])
    return np.concatenate([U[:, :1], mid, U[:, -1:]], axis=1)


def _cell_cdf(I: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Cumulative mass of the cell model of each row at positions ``pos``."""
    n = I.shape[1]
    C = np.concatenate([np.zeros((I.shape[0], 1)), np.cumsum(I, axis=1)], axis=1)
    k = np.clip(np.floor(pos + 0.5).astype(np.intp), 0, n - 1)
    frac = np.clip(pos - (k - 0.5), 0.0, 1.0)
    F = np.take_along_axis(C, k, axis=1) + frac * np.take_along_axis(I, k, axis=1)
    F = np.where(pos <= -0.5, 0.0, F)
    return np.where(pos >= n - 0.5, C[:, -1:], F)


def distort(I0: Volume, u_true: DisplacementField, polarity: int = 1,
            noise_sigma: float = 0.0, seed=None) -> Volume:
    """Forward model for one polarity, then optional clamped Gaussian noise."""
    if polarity not in (1, -1):
        raise ValueError("polarity must be +1 or -1")
    if u_true.dims != I0.dims:
        raise ValueError("field and image dims differ")
    pe = I0.pe_axis
    if I0.n_pe >= 3 and np.abs(pe_gradient(u_true)).max() >= 1.0:
        raise ValueError("gradient bound violated: max|du| >= 1")
    I = to_columns(I0.data, pe)
    U = to_columns(u_true.u, pe)
    n = I.shape[1]
    edges = np.arange(n + 1) - 0.5
    edges = np.broadcast_to(edges, (I.shape[0], n + 1))
    # Mass swept past each boundary; the difference form keeps u = 0 exact.
    swept = _cell_cdf(I, edges + polarity * _edge_values(U)) - _cell_cdf(I, edges)
    out = np.maximum(I + np.diff(swept, axis=1), 0.0)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = np.maximum(out + rng.normal(0.0, noise_sigma, out.shape), 0.0)
    return I0.with_data(from_columns(out, I0.dims, pe))


def distort_pointwise(I0: Volume, u_true: DisplacementField, polarity: int = 1,
                      supersample: int = 16) -> Volume:
    """Cell-averaged point sampling of the forward model (cross-check)."""
    pe = I0.pe_axis
    I = to_columns(I0.data, pe)
    U = to_columns(u_true.u, pe)
    rows, n = I.shape
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    x = (np.arange(n)[:, None] + offs[None, :]).ravel()
    xg = np.arange(n, dtype=np.float64)
    out = np.zeros((rows, n))
    for r in range(rows):
        ux = np.interp(x, xg, U[r])
        dux = np.gradient(np.interp(x, xg, U[r]), x, edge_order=1)
        src = x + polarity * ux
        k = np.floor(src + 0.5).astype(int)
        val = np.where((k >= 0) & (k < n), I[r][np.clip(k, 0, n - 1)], 0.0)
        out[r] = (val * (1 + polarity * dux)).reshape(n, supersample).mean(axis=1)
    return I0.with_data(from_columns(out, I0.dims, pe))


def make_pair(spec: PhantomSpec = PhantomSpec()):
    """``(I0, u_true, EpiPair)`` with independent noise per polarity."""
    I0, u = make_phantom(spec)
    plus = distort(I0, u, +1, spec.noise_sigma, seed=[spec.seed, 1])
    minus = distort(I0, u, -1, spec.noise_sigma, seed=[spec.seed, 2])
    return I0, u, EpiPair(plus, minus)
