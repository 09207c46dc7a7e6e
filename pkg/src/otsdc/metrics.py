"""Evaluation metrics: mutual information, NCC and RMSE over a mask."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .volume import Volume, check_mask, DegenerateInputError

DEFAULT_BINS = 64


def _values(v) -> np.ndarray:
    return v.data if isinstance(v, Volume) else np.asarray(v, dtype=np.float64)


def _masked_pair(a, b, mask):
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ValueError(f"dims differ: {a.shape} vs {b.shape}")
    if mask is None:
        return a.ravel(), b.ravel()
    m = check_mask(mask, a.shape)
    if not m.any():
        raise ValueError("mask is empty")
    return a[m], b[m]


def _bin_index(x: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = x.min(), x.max()
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.intp)
    return np.clip(idx, 0, bins - 1)


def mutual_information(a, b, mask=None, bins: int = DEFAULT_BINS) -> float:
    """Histogram MI in nats; equal-width bins over each image's masked range.

    A constant image carries no information, so MI is 0 by convention.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x, y = _masked_pair(a, b, mask)
    if x.size == 0:
        raise ValueError("mask is empty")
    if x.min() == x.max() or y.min() == y.max():
        return 0.0
    joint = np.bincount(_bin_index(x, bins) * bins + _bin_index(y, bins),
                        minlength=bins * bins).reshape(bins, bins)
    p = joint / x.size
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (px @ py)[nz])))


def ncc(a, b, mask=None) -> float:
    """Pearson correlation of masked voxel pairs."""
    x, y = _masked_pair(a, b, mask)
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = np.sqrt(np.dot(x, x)), np.sqrt(np.dot(y, y))
    if sx == 0 or sy == 0:
        raise DegenerateInputError("zero variance")
    return float(np.clip(np.dot(x, y) / (sx * sy), -1.0, 1.0))


def rmse(a, b, mask=None) -> float:
    x, y = _masked_pair(a, b, mask)
    d = x - y
    return float(np.sqrt(np.mean(d * d)))


def pearson_r(a, b, mask=None) -> float:
    return ncc(a, b, mask)


@dataclass
class SliceMetrics:
    slice_index: int
    mi: float | None
    ncc: float | None
    rmse: float


@dataclass
class MetricsReport:
    """Volumetric and per-axial-slice metrics for one method."""

    label: str
    mi_t1: float | None
    ncc_lr_rl: float
    rmse_lr_rl: float
    mask_voxels: int
    histogram_bins: int
    per_slice: list = field(default_factory=list)
    skipped_slices: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _safe_ncc(a, b, mask):
    try:
        return ncc(a, b, mask)
    except DegenerateInputError:
        return None


def per_slice_report(plus, minus, mask, reference=None, bins: int = DEFAULT_BINS,
                     label: str = "method") -> MetricsReport:
    """Metrics for a corrected pair, volumetric and per axial (z) slice.

    MI is computed between the pair average and ``reference`` when one is
    given; NCC and RMSE compare ``plus`` with ``minus``. Slices whose mask
    intersection is empty are skipped and listed.
    """
    p, m = _values(plus), _values(minus)
    mask = check_mask(mask, p.shape, nonempty=True)
    avg = 0.5 * (p + m)
    ref = None if reference is None else _values(reference)
    report = MetricsReport(
        label=label,
        mi_t1=None if ref is None else mutual_information(avg, ref, mask, bins),
        ncc_lr_rl=ncc(p, m, mask),
        rmse_lr_rl=rmse(p, m, mask),
        mask_voxels=int(mask.sum()),
        histogram_bins=bins,
    )
    for z in range(p.shape[2]):
        mz = mask[:, :, z]
        if not mz.any():
            report.skipped_slices.append(z)
            continue
        report.per_slice.append(SliceMetrics(
            z,
            None if ref is None else mutual_information(avg[:, :, z], ref[:, :, z], mz, bins),
            _safe_ncc(p[:, :, z], m[:, :, z], mz),
            rmse(p[:, :, z], m[:, :, z], mz),
        ))
    return report


def _fmt(x, spec):
    return "-" if x is None else format(x, spec)


def format_table(reports, slices=None) -> str:
    """Plain-text table: one row per method, optional per-slice MI columns."""
    head = ["Method", "T1-MI", "LR-RL NCC", "RMSE"]
    extra = []
    if slices:
        extra = [f"z = {z}" for z in slices]
    rows = []
    for r in reports:
        by_z = {s.slice_index: s.mi for s in r.per_slice}
        rows.append([r.label, _fmt(r.mi_t1, ".3f"), _fmt(r.ncc_lr_rl, ".3f"),
                     _fmt(r.rmse_lr_rl, ".4g")] + [_fmt(by_z.get(z), ".3f") for z in (slices or [])])
    table = [head + extra] + rows
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for k, row in enumerate(table):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)


def reports_to_json(reports) -> str:
    return json.dumps({"schema": 1, "methods": [r.to_dict() for r in reports]},
                      indent=2, sort_keys=True)
